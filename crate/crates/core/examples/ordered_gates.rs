// Split-point gates: cumax, soft OR accumulation, and the enumeration
// identity behind them.

use ordered_gnn::model::{cumax_left, softor};
use ordered_gnn::oracle::enumerate_expected_gate;
use ordered_gnn::{Matrix, Tape};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let logits = vec![0.3, 2.0, -1.0, 0.5];
    let mut tape = Tape::<f64>::new();
    let z = tape.constant(Matrix::from_rows(std::slice::from_ref(&logits)));
    let g = cumax_left(&mut tape, z)?;
    let gate = tape.value(g);
    println!("cumax        {:?}", gate.row(0));
    println!("enumerated   {:?}", enumerate_expected_gate(&logits));

    let next = tape.constant(Matrix::from_rows(&[vec![0.0, 0.0, 4.0, 0.0]]));
    let g2 = cumax_left(&mut tape, next)?;
    let acc = softor(&mut tape, g, g2)?;
    let acc = tape.value(acc);
    println!("accumulated  {:?}", acc.row(0));
    for (a, b) in gate.row(0).iter().zip(acc.row(0)) {
        assert!(b >= a);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
