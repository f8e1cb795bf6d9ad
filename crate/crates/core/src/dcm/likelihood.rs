use nalgebra::{DMatrix, DVector};

use super::model::{log_sum_exp, softmax, ChoiceModel, ChoiceObservation, UtilitySpec};
use super::DcmError;

/// Sample log-likelihood. An empty sample is defined as zero and flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub n_observations: usize,
}

impl LogLikelihood {
    pub fn is_empty_sample(&self) -> bool {
        self.n_observations == 0
    }
}

pub fn log_likelihood(model: &ChoiceModel, observations: &[ChoiceObservation]) -> Result<LogLikelihood, DcmError> {
    check_all(model.spec(), observations)?;
    Ok(LogLikelihood {
        value: ll_unchecked(model, observations),
        n_observations: observations.len(),
    })
}

/// Score of the log-likelihood with respect to the free parameters
/// (betas, then every non-reference constant).
pub fn ll_gradient(model: &ChoiceModel, observations: &[ChoiceObservation]) -> Result<Vec<f64>, DcmError> {
    check_all(model.spec(), observations)?;
    let mut grad = vec![0.0; model.spec().n_free()];
    let mut z_bar = vec![0.0; grad.len()];
    for obs in observations {
        accumulate(model, obs, &mut grad, None, &mut z_bar);
    }
    Ok(grad)
}

pub(crate) fn check_all(spec: &UtilitySpec, observations: &[ChoiceObservation]) -> Result<(), DcmError> {
    observations.iter().try_for_each(|o| o.check(spec))
}

pub(crate) fn ll_unchecked(model: &ChoiceModel, observations: &[ChoiceObservation]) -> f64 {
    observations
        .iter()
        .map(|obs| {
            let v = model.utilities_unchecked(&obs.features);
            v[obs.chosen] - log_sum_exp(&v)
        })
        .sum()
}

/// Log-likelihood, gradient and Hessian in one pass.
pub(crate) fn ll_grad_hess(model: &ChoiceModel, observations: &[ChoiceObservation]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = model.spec().n_free();
    let mut ll = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut z_bar = vec![0.0; n];
    for obs in observations {
        ll += accumulate(model, obs, &mut grad, Some(&mut hess), &mut z_bar);
    }
    (ll, DVector::from_vec(grad), hess)
}

/// Writes derivative of `V[j]` with respect to the free parameters into `z`.
fn utility_gradient(spec: &UtilitySpec, row: &[f64], alternative: usize, z: &mut [f64]) {
    let k = spec.n_factors();
    z[..k].copy_from_slice(row);
    for (slot, j) in spec.free_ascs().enumerate() {
        z[k + slot] = if j == alternative { 1.0 } else { 0.0 };
    }
}

fn accumulate(
    model: &ChoiceModel,
    obs: &ChoiceObservation,
    grad: &mut [f64],
    hess: Option<&mut DMatrix<f64>>,
    z_bar: &mut [f64],
) -> f64 {
    let spec = model.spec();
    let n = grad.len();
    let v = model.utilities_unchecked(&obs.features);
    let p = softmax(&v);
    let mut z = vec![0.0; n];

    z_bar.iter_mut().for_each(|x| *x = 0.0);
    for (j, pj) in p.iter().enumerate() {
        utility_gradient(spec, obs.features.row(j), j, &mut z);
        for (acc, zj) in z_bar.iter_mut().zip(&z) {
            *acc += pj * zj;
        }
    }
    utility_gradient(spec, obs.features.row(obs.chosen), obs.chosen, &mut z);
    for i in 0..n {
        grad[i] += z[i] - z_bar[i];
    }

    if let Some(h) = hess {
        // H -= Σ_j P_j (z_j - z̄)(z_j - z̄)^T
        for (j, pj) in p.iter().enumerate() {
            utility_gradient(spec, obs.features.row(j), j, &mut z);
            for (zi, zb) in z.iter_mut().zip(z_bar.iter()) {
                *zi -= zb;
            }
            for a in 0..n {
                if z[a] == 0.0 {
                    continue;
                }
                let w = pj * z[a];
                for b in 0..n {
                    h[(a, b)] -= w * z[b];
                }
            }
        }
    }
    v[obs.chosen] - log_sum_exp(&v)
}
