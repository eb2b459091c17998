use crate::autodiff::{Tape, Var, LOG_FLOOR};
use crate::error::{LanError, Result};
use crate::tensor::Tensor;

const SIMPLEX_TOL: f32 = 1e-4;

/// `-sum(target * log(max(pred, 1e-12)))` for two distributions.
pub fn cross_entropy(pred: &Tensor, target: &Tensor) -> Result<f32> {
    if pred.len() != target.len() {
        return Err(LanError::shape(
            "cross-entropy",
            format!("prediction has {} entries, target {}", pred.len(), target.len()),
        ));
    }
    for (name, t) in [("prediction", pred), ("target", target)] {
        if (t.sum() - 1.0).abs() > SIMPLEX_TOL {
            return Err(LanError::Contract(format!(
                "{name} sums to {}, not 1",
                t.sum()
            )));
        }
    }
    let ce: f32 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| -t * p.max(LOG_FLOOR).ln())
        .sum();
    Ok(ce.max(0.0))
}

/// Entropy of a distribution, the value of `cross_entropy(p, p)`.
pub fn entropy(p: &Tensor) -> f32 {
    p.data()
        .iter()
        .map(|&v| -v * v.max(LOG_FLOOR).ln())
        .sum::<f32>()
        .max(0.0)
}

/// Batch-mean cross-entropy of `pred` `(N, l)` against constant `target` `(N, l)`.
pub fn cross_entropy_on_tape(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(LanError::shape(
            "cross-entropy",
            format!("{:?} vs {:?}", tape.shape(pred), tape.shape(target)),
        ));
    }
    let batch = tape.shape(pred)[0] as f32;
    let logp = tape.log(pred)?;
    let weighted = tape.mul(logp, target)?;
    let total = tape.sum(weighted)?;
    tape.scale(total, -1.0 / batch)
}

/// One-hot rows `(N, classes)` for integer labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(LanError::Contract(format!("label {l} >= {classes} classes")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f32]) -> Tensor {
        Tensor::from_vec(x.to_vec())
    }

    #[test]
    fn reference_values() {
        let ln2 = std::f32::consts::LN_2;
        assert!((cross_entropy(&v(&[0.5, 0.5]), &v(&[0.0, 1.0])).unwrap() - ln2).abs() < 1e-6);
        assert_eq!(cross_entropy(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 0.0);
        assert!((cross_entropy(&v(&[0.5, 0.5]), &v(&[0.5, 0.5])).unwrap() - ln2).abs() < 1e-6);
    }

    #[test]
    fn self_cross_entropy_is_entropy() {
        let p = v(&[0.2, 0.3, 0.5]);
        assert!((cross_entropy(&p, &p).unwrap() - entropy(&p)).abs() < 1e-5);
    }

    #[test]
    fn length_mismatch() {
        assert!(cross_entropy(&v(&[1.0]), &v(&[0.5, 0.5])).is_err());
        assert!(cross_entropy(&v(&[0.7, 0.7]), &v(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn tape_version_agrees() {
        let pred = Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.9, 0.1]).unwrap();
        let target = one_hot(&[1, 0], 2).unwrap();
        let mut tape = Tape::new();
        let p = tape.constant(pred).unwrap();
        let t = tape.constant(target).unwrap();
        let l = cross_entropy_on_tape(&mut tape, p, t).unwrap();
        let want = (std::f32::consts::LN_2 - 0.9f32.ln()) / 2.0;
        assert!((tape.value(l).item() - want).abs() < 1e-6);
    }
}
