// Reverse-mode gradients on the tape, checked against central differences.

use ordered_gnn::oracle::{finite_diff_check, CheckOutcome};
use ordered_gnn::{Matrix, Tape};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let w = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
    let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.5], vec![0.3, -0.7]]);

    let build = move |tape: &mut Tape<f64>, vals: &[Matrix<f64>]| {
        let w = tape.param(vals[0].clone());
        let x = tape.constant(x.clone());
        let z = tape.matmul(x, w)?;
        let p = tape.row_softmax(z)?;
        let loss = tape.cross_entropy(p, &[0, 1, 1], &[true, true, true])?;
        Ok((loss, vec![w]))
    };

    let mut tape = Tape::new();
    let (loss, ids) = build(&mut tape, std::slice::from_ref(&w))?;
    tape.backward(loss)?;
    println!("loss {:.6}", tape.scalar(loss));
    println!("dL/dW {:?}", tape.grad(ids[0]).to_rows());

    match finite_diff_check(&["w".into()], &[w], build, 1e-6)? {
        CheckOutcome::Report(r) => {
            println!("max relative error vs finite differences {:.2e}", r.max_rel_err());
            assert!(r.passed());
        }
        CheckOutcome::NearKink(m) => println!("point too close to a relu kink ({m})"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
