use super::TrainError;
use crate::numerics::{NumericsError, Real, Tape, Var};

/// Joint RMSE of one slot on the tape: `sqrt(Σ (pred − target)² / (2n))` over
/// both `[n×2]` channels. At a perfect fit the gradient is taken as zero.
pub fn loss_joint_rmse(tape: &mut Tape, pred: Var, target: Var) -> Result<Var, NumericsError> {
    let shape = tape.shape(pred).to_vec();
    if shape.len() != 2 || shape[1] != 2 {
        return Err(NumericsError::InvalidArgument {
            op: "loss_joint_rmse",
            reason: format!("predictions must be [n × 2], got {shape:?}"),
        });
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff)?;
    let total = tape.sum(sq)?;
    let mean = tape.scale(total, 1.0 / (2 * shape[0]) as Real)?;
    tape.sqrt(mean)
}

/// Value-only joint RMSE. `[n×2]` inputs are one slot; `[B×n×2]` inputs give
/// the mean of the per-slot values.
pub fn joint_rmse(pred: &[Real], target: &[Real], shape: &[usize]) -> Result<Real, TrainError> {
    let (batch, n) = match *shape {
        [n, 2] => (1, n),
        [b, n, 2] => (b, n),
        _ => return Err(TrainError::Shape(format!("expected [.. × n × 2], got {shape:?}"))),
    };
    let len = batch * n * 2;
    if pred.len() != len || target.len() != len || len == 0 {
        return Err(TrainError::Shape(format!(
            "lengths {} and {} do not fit {shape:?}",
            pred.len(),
            target.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in pred.chunks_exact(2 * n).zip(target.chunks_exact(2 * n)) {
        let sq = p.iter().zip(t).fold(0.0, |s, (a, b)| s + (a - b) * (a - b));
        total += (sq / (2 * n) as Real).sqrt();
    }
    Ok(total / batch as Real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_is_zero() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let l = loss_joint_rmse(&mut tape, p, p).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);
    }

    #[test]
    fn gradient_at_perfect_fit_is_zero() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap());
        let t = tape.constant(Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap());
        let l = loss_joint_rmse(&mut tape, p, t).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(p).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn hand_case() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
        let t = tape.constant(Tensor::zeros(&[1, 2]).unwrap());
        let l = loss_joint_rmse(&mut tape, p, t).unwrap();
        assert!((tape.value(l).data()[0] - (12.5 as Real).sqrt()).abs() <= 1e-12);
        let v = joint_rmse(&[3.0, 4.0], &[0.0, 0.0], &[1, 2]).unwrap();
        assert!((v - 3.5355339059327378).abs() <= 1e-12);
    }

    #[test]
    fn batch_value_is_mean_of_slots() {
        let pred = [3.0, 4.0, 1.0, 1.0];
        let target = [0.0; 4];
        let v = joint_rmse(&pred, &target, &[2, 1, 2]).unwrap();
        let expect = ((12.5 as Real).sqrt() + 1.0) / 2.0;
        assert!((v - expect).abs() <= 1e-12);
        assert!(joint_rmse(&pred, &target, &[2, 3]).is_err());
        assert!(joint_rmse(&pred, &target[..2], &[2, 1, 2]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pred = Tensor::matrix(5, 2, (0..10).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let target = Tensor::matrix(5, 2, (0..10).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let report = finite_diff_check(
            |tape, v| {
                let t = tape.constant(target.clone());
                loss_joint_rmse(tape, v[0], t)
            },
            &[pred],
            1e-6,
            10,
            1,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn rejects_wrong_width() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::zeros(&[2, 3]).unwrap());
        assert!(loss_joint_rmse(&mut tape, p, p).is_err());
        let q = tape.constant(Tensor::zeros(&[2, 2]).unwrap());
        let r = tape.constant(Tensor::zeros(&[3, 2]).unwrap());
        assert!(loss_joint_rmse(&mut tape, q, r).is_err());
    }
}
