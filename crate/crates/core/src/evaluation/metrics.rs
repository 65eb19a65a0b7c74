use super::EvalError;
use crate::numerics::Real;

/// Truth values below this many flow units are left out of MAPE by default.
pub const DEFAULT_MAPE_THRESHOLD: Real = 10.0;

fn check_lengths(pred: &[Real], truth: &[Real]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn rmse(pred: &[Real], truth: &[Real]) -> Result<Real, EvalError> {
    check_lengths(pred, truth)?;
    let sq = pred
        .iter()
        .zip(truth)
        .fold(0.0, |s, (p, t)| s + (p - t) * (p - t));
    Ok((sq / pred.len() as Real).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    /// Percent.
    pub value: Real,
    pub counted: usize,
    pub excluded: usize,
}

/// Mean of `|pred − truth| / truth` over targets with `truth ≥ threshold`, in percent.
pub fn mape(pred: &[Real], truth: &[Real], threshold: Real) -> Result<Mape, EvalError> {
    check_lengths(pred, truth)?;
    let mut sum = 0.0;
    let mut counted = 0;
    for (p, t) in pred.iter().zip(truth) {
        if *t >= threshold && *t != 0.0 {
            sum += (p - t).abs() / t.abs();
            counted += 1;
        }
    }
    let excluded = pred.len() - counted;
    if counted == 0 {
        return Err(EvalError::NoCountedTargets { excluded, threshold });
    }
    Ok(Mape {
        value: 100.0 * sum / counted as Real,
        counted,
        excluded,
    })
}
