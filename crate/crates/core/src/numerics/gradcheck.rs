use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NumericsError, Real, Tape, Tensor, Var};

/// Relative error with denominator `max(|a|, |b|, 1e-12)`.
pub fn relative_error(a: Real, b: Real) -> Real {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: Real,
    /// Worst relative error per parameter tensor.
    pub per_tensor: Vec<Real>,
    /// Coordinates checked per parameter tensor.
    pub checked: Vec<usize>,
    /// `(tensor, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, usize, Real, Real)>,
}

fn evaluate<F>(f: &F, params: &[Tensor], with_grad: bool) -> Result<(Real, Vec<Vec<Real>>), NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out).data()[0];
    if tape.value(out).len() != 1 {
        return Err(NumericsError::NonScalarLoss {
            shape: tape.shape(out).to_vec(),
        });
    }
    if !value.is_finite() {
        return Err(NumericsError::NonFinite {
            op: "finite_diff_check",
        });
    }
    let mut grads = Vec::new();
    if with_grad {
        tape.backward(out)?;
        grads = vars
            .iter()
            .zip(params)
            .map(|(&v, p)| tape.grad(v).map_or_else(|| vec![0.0; p.len()], <[Real]>::to_vec))
            .collect();
    }
    Ok((value, grads))
}

/// Compares the tape gradient of a scalar function against central finite
/// differences at up to `coords_per_tensor` sampled coordinates of each
/// parameter tensor (all coordinates when the tensor is smaller).
pub fn finite_diff_check<F>(
    f: F,
    params: &[Tensor],
    step: Real,
    coords_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    if !(step > 0.0) {
        return Err(NumericsError::InvalidArgument {
            op: "finite_diff_check",
            reason: format!("step must be positive, got {step}"),
        });
    }
    let (_, analytic) = evaluate(&f, params, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_tensor: Vec::with_capacity(params.len()),
        checked: Vec::with_capacity(params.len()),
        worst: None,
    };
    for (t, p) in params.iter().enumerate() {
        let mut coords: Vec<usize> = if p.len() <= coords_per_tensor {
            (0..p.len()).collect()
        } else {
            rand::seq::index::sample(&mut rng, p.len(), coords_per_tensor).into_vec()
        };
        coords.sort_unstable();
        let mut tensor_worst: Real = 0.0;
        for &c in &coords {
            let original = p.data()[c];
            work[t].data_mut()[c] = original + step;
            let (plus, _) = evaluate(&f, &work, false)?;
            work[t].data_mut()[c] = original - step;
            let (minus, _) = evaluate(&f, &work, false)?;
            work[t].data_mut()[c] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[t][c];
            let err = relative_error(a, numeric);
            tensor_worst = tensor_worst.max(err);
            if err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((t, c, a, numeric));
            }
        }
        report.per_tensor.push(tensor_worst);
        report.checked.push(coords.len());
    }
    Ok(report)
}
