//! Gate construction and the ordered combine step.

use crate::error::{Error, Result};
use crate::matrix::Real;
use crate::tensor::{Tape, ValueId};

/// Right-to-left cumulative sum of a row softmax. Entry `l` of each row is
/// the probability that the split point lies at or after `l`, so rows
/// start at 1 and never increase.
pub fn cumax_left<T: Real>(tape: &mut Tape<T>, logits: ValueId) -> Result<ValueId> {
    let p = tape.row_softmax(logits)?;
    Ok(tape.cumsum_reverse(p))
}

/// Differentiable OR: `prev + (1 - prev) * next`.
///
/// Debug builds reject inputs outside `[0, 1]` (with 1024 machine epsilons of slack for
/// rounding in upstream sums).
pub fn softor<T: Real>(tape: &mut Tape<T>, prev: ValueId, next: ValueId) -> Result<ValueId> {
    if cfg!(debug_assertions) {
        for (name, id) in [("prev", prev), ("next", next)] {
            let slack = T::epsilon() * T::lit(1024.0);
            if let Some(v) = tape
                .data(id)
                .iter()
                .find(|&&v| !(v >= -slack && v <= T::one() + slack))
            {
                return Err(Error::Contract(format!("softor {name} entry {v} outside [0,1]")));
            }
        }
    }
    let open = tape.one_minus(prev);
    let added = tape.mul(open, next)?;
    tape.add(prev, added)
}

/// Repeats every gate across its block of `chunk` neurons.
pub fn expand_chunks<T: Real>(
    tape: &mut Tape<T>,
    gates: ValueId,
    chunk: usize,
    hidden: usize,
) -> Result<ValueId> {
    let (_, dm) = tape.shape(gates);
    if chunk == 0 || dm * chunk != hidden {
        return Err(Error::Config(format!(
            "{dm} gates with chunk {chunk} do not cover hidden width {hidden}"
        )));
    }
    tape.repeat_cols(gates, chunk)
}

/// `gate * ego + (1 - gate) * message`.
pub fn combine<T: Real>(
    tape: &mut Tape<T>,
    gate: ValueId,
    ego: ValueId,
    message: ValueId,
) -> Result<ValueId> {
    let kept = tape.mul(gate, ego)?;
    let open = tape.one_minus(gate);
    let passed = tape.mul(open, message)?;
    tape.add(kept, passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn row(t: &mut Tape<f64>, v: &[f64]) -> ValueId {
        t.constant(Matrix::from_rows(&[v.to_vec()]))
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn cumax_examples() {
        let mut t = Tape::new();
        let z = row(&mut t, &[0.0; 4]);
        let g = cumax_left(&mut t, z).unwrap();
        assert_eq!(t.data(g), &[1.0, 0.75, 0.5, 0.25]);

        let z = row(&mut t, &[40.0, 0.0, 0.0, 0.0]);
        let g = cumax_left(&mut t, z).unwrap();
        assert!(close(t.data(g), &[1.0, 0.0, 0.0, 0.0], 1e-15));

        let z = row(&mut t, &[0.0, 0.0, 0.0, 40.0]);
        let g = cumax_left(&mut t, z).unwrap();
        assert!(close(t.data(g), &[1.0, 1.0, 1.0, 1.0], 1e-15));
    }

    #[test]
    fn softor_examples() {
        let mut t = Tape::new();
        let g = row(&mut t, &[0.3, 0.9, 0.0]);
        let zero = row(&mut t, &[0.0; 3]);
        let one = row(&mut t, &[1.0; 3]);
        let a = softor(&mut t, zero, g).unwrap();
        assert_eq!(t.data(a), t.data(g));
        let b = softor(&mut t, one, g).unwrap();
        assert_eq!(t.data(b), &[1.0; 3]);

        let p = row(&mut t, &[1.0, 1.0, 0.0, 0.0]);
        let q = row(&mut t, &[1.0, 0.5, 0.5, 0.0]);
        let r = softor(&mut t, p, q).unwrap();
        assert_eq!(t.data(r), &[1.0, 1.0, 0.5, 0.0]);

        let h = row(&mut t, &[0.5]);
        let s = softor(&mut t, h, h).unwrap();
        assert_eq!(t.data(s), &[0.75]);
    }

    #[test]
    #[cfg(debug_assertions)]
    fn softor_rejects_out_of_range() {
        let mut t = Tape::new();
        let a = row(&mut t, &[1.5]);
        let b = row(&mut t, &[0.5]);
        assert!(matches!(softor(&mut t, a, b), Err(Error::Contract(_))));
    }

    #[test]
    fn expand_examples() {
        let mut t = Tape::new();
        let g = row(&mut t, &[1.0, 0.5]);
        let e = expand_chunks(&mut t, g, 2, 4).unwrap();
        assert_eq!(t.data(e), &[1.0, 1.0, 0.5, 0.5]);
        let e = expand_chunks(&mut t, g, 1, 2).unwrap();
        assert_eq!(t.data(e), t.data(g));
        assert!(matches!(
            expand_chunks(&mut t, g, 3, 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn combine_examples() {
        let mut t = Tape::new();
        let h = row(&mut t, &[2.0, -1.0]);
        let m = row(&mut t, &[0.0, 5.0]);
        let one = row(&mut t, &[1.0, 1.0]);
        let zero = row(&mut t, &[0.0, 0.0]);
        let half = row(&mut t, &[0.5, 0.5]);
        let a = combine(&mut t, one, h, m).unwrap();
        assert_eq!(t.data(a), t.data(h));
        let b = combine(&mut t, zero, h, m).unwrap();
        assert_eq!(t.data(b), t.data(m));
        let c = combine(&mut t, half, h, m).unwrap();
        assert_eq!(t.data(c)[0], 1.0);
    }
}
