use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::likelihood::{check_all, ll_grad_hess, ll_unchecked};
use super::model::{ChoiceModel, ChoiceObservation, ParameterVector, UtilitySpec};
use super::DcmError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Stop once the gradient infinity-norm falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Any free parameter beyond this magnitude is treated as diverging.
    pub divergence_bound: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-6,
            max_iterations: 100,
            divergence_bound: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Newton,
    GradientAscent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub gradient_inf_norm: f64,
    pub null_log_likelihood: f64,
    /// Log-likelihood after each accepted iteration, starting with the null model.
    pub ll_history: Vec<f64>,
    pub steps: Vec<StepKind>,
    /// Factors that never vary across alternatives; their betas are held at 0.
    pub fixed_factors: Vec<String>,
    /// Set when a parameter diverged (perfect or quasi-perfect separation).
    pub separation: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub params: ParameterVector,
    pub log_likelihood: f64,
    pub report: ConvergenceReport,
}

impl Estimate {
    pub fn model(&self, spec: &UtilitySpec) -> ChoiceModel {
        ChoiceModel::new(spec.clone(), self.params.clone()).expect("estimated parameters match spec")
    }

    /// McFadden's pseudo R², `1 - LL / LL_null`.
    pub fn rho_squared(&self) -> f64 {
        if self.report.null_log_likelihood == 0.0 {
            return 0.0;
        }
        1.0 - self.log_likelihood / self.report.null_log_likelihood
    }
}

/// Maximum-likelihood fit starting from the null model.
///
/// Takes Newton steps while the Hessian is negative definite and falls back
/// to gradient ascent otherwise; both directions go through a backtracking
/// Armijo line search, so the log-likelihood never decreases.
pub fn estimate(
    spec: &UtilitySpec,
    observations: &[ChoiceObservation],
    options: &EstimateOptions,
) -> Result<Estimate, DcmError> {
    if observations.is_empty() {
        return Err(DcmError::NoObservations);
    }
    check_all(spec, observations)?;

    let fixed = non_identified_factors(spec, observations);
    let free: Vec<usize> = (0..spec.n_free()).filter(|i| !fixed.contains(i)).collect();

    let mut theta = vec![0.0; spec.n_free()];
    let model_at = |theta: &[f64]| -> ChoiceModel {
        ChoiceModel::new(spec.clone(), ParameterVector::from_free(spec, theta)).expect("finite parameters")
    };

    let (mut ll, mut grad, mut hess) = ll_grad_hess(&model_at(&theta), observations);
    let null_ll = ll;
    let mut report = ConvergenceReport {
        converged: false,
        iterations: 0,
        gradient_inf_norm: f64::INFINITY,
        null_log_likelihood: null_ll,
        ll_history: vec![null_ll],
        steps: Vec::new(),
        fixed_factors: fixed.iter().map(|&k| spec.factor_names()[k].clone()).collect(),
        separation: None,
        message: String::new(),
    };

    loop {
        let g = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
        let g_norm = g.amax();
        report.gradient_inf_norm = g_norm;
        if g_norm < options.gradient_tolerance {
            // a vanishing gradient with every choice predicted with certainty
            // means the optimum lies at infinity
            if ll > -1e-6 * observations.len() as f64 && theta.iter().any(|v| *v != 0.0) {
                report.separation = Some(format!(
                    "log-likelihood {ll:.3e} is numerically zero; the data are perfectly separated"
                ));
                report.message = "stopped on perfect fit".into();
            } else {
                report.converged = true;
                report.message = format!("gradient norm {g_norm:.3e} below tolerance");
            }
            break;
        }
        if report.iterations >= options.max_iterations {
            report.message = format!("iteration limit {} reached", options.max_iterations);
            break;
        }

        let neg_h = hess.select_rows(&free).select_columns(&free) * -1.0;
        let (direction, kind) = match neg_h.cholesky() {
            Some(chol) => (chol.solve(&g), StepKind::Newton),
            None => (g.clone(), StepKind::GradientAscent),
        };
        let slope = g.dot(&direction);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = theta.clone();
            for (slot, &i) in free.iter().enumerate() {
                trial[i] += step * direction[slot];
            }
            if trial.iter().all(|v| v.is_finite()) {
                let trial_ll = ll_unchecked(&model_at(&trial), observations);
                if trial_ll.is_finite() && trial_ll >= ll + 1e-4 * step * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            report.message = format!("line search failed with gradient norm {g_norm:.3e}");
            break;
        };

        theta = next;
        (ll, grad, hess) = ll_grad_hess(&model_at(&theta), observations);
        report.iterations += 1;
        report.steps.push(kind);
        report.ll_history.push(ll);

        if let Some((i, v)) = theta.iter().enumerate().find(|(_, v)| v.abs() > options.divergence_bound) {
            report.separation = Some(format!(
                "parameter {} diverged to {v:.3} (|value| > {}); the data are (quasi-)separated",
                spec.free_labels()[i],
                options.divergence_bound
            ));
            report.message = "stopped on diverging parameter".into();
            report.gradient_inf_norm = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
            break;
        }
    }

    Ok(Estimate {
        params: ParameterVector::from_free(spec, &theta),
        log_likelihood: ll,
        report,
    })
}

/// Betas whose factor takes the same value for every alternative in every
/// observation; they have no effect on the likelihood.
fn non_identified_factors(spec: &UtilitySpec, observations: &[ChoiceObservation]) -> Vec<usize> {
    (0..spec.n_factors())
        .filter(|&k| {
            observations.iter().all(|obs| {
                let first = obs.features.get(0, k);
                (1..spec.n_alternatives()).all(|j| obs.features.get(j, k) == first)
            })
        })
        .collect()
}

/// Share of observations whose most probable alternative was the chosen one.
/// Ties go to the lowest alternative index.
pub fn predict_accuracy(model: &ChoiceModel, observations: &[ChoiceObservation]) -> Result<f64, DcmError> {
    if observations.is_empty() {
        return Err(DcmError::NoObservations);
    }
    check_all(model.spec(), observations)?;
    let hits = observations
        .iter()
        .filter(|obs| argmax(&model.utilities_unchecked(&obs.features)) == obs.chosen)
        .count();
    Ok(hits as f64 / observations.len() as f64)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcm::likelihood::ll_gradient;
    use crate::dcm::model::FeatureMatrix;
    use approx::assert_abs_diff_eq;

    fn obs(rows: &[Vec<f64>], chosen: usize) -> ChoiceObservation {
        ChoiceObservation::new("p", 0.0, FeatureMatrix::from_rows(rows).unwrap(), chosen).unwrap()
    }

    #[test]
    fn symmetric_null_data() {
        let spec = UtilitySpec::from_names(&["x", "y"], &["a", "b"], 0).unwrap();
        let data: Vec<_> = (0..200)
            .map(|i| obs(&[vec![1.0, i as f64], vec![1.0, i as f64]], i % 2))
            .collect();
        let est = estimate(&spec, &data, &EstimateOptions::default()).unwrap();
        assert!(est.report.converged);
        assert_eq!(est.report.fixed_factors, vec!["x", "y"]);
        assert_abs_diff_eq!(est.params.betas[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(est.params.betas[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(est.params.ascs[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn asc_matches_closed_form_share() {
        // constant-only fit: ASC_b = ln(n_b / n_a)
        let spec = UtilitySpec::from_names(&["x"], &["a", "b"], 0).unwrap();
        let data: Vec<_> = (0..100).map(|i| obs(&[vec![0.0], vec![0.0]], usize::from(i < 30))).collect();
        let est = estimate(&spec, &data, &EstimateOptions::default()).unwrap();
        assert!(est.report.converged);
        assert_abs_diff_eq!(est.params.ascs[1], (30.0f64 / 70.0).ln(), epsilon = 1e-6);
    }

    #[test]
    fn gradient_vanishes_at_optimum_and_ll_ascends() {
        let spec = UtilitySpec::from_names(&["x"], &["a", "b", "c"], 0).unwrap();
        let data: Vec<_> = (0..60)
            .map(|i| {
                let x = (i % 7) as f64 * 0.5;
                obs(&[vec![x], vec![1.0], vec![2.0 - x]], (i * 5 + i / 3) % 3)
            })
            .collect();
        let est = estimate(&spec, &data, &EstimateOptions::default()).unwrap();
        assert!(est.report.converged, "{}", est.report.message);
        let g = ll_gradient(&est.model(&spec), &data).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-6));
        for pair in est.report.ll_history.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        assert!(est.log_likelihood >= est.report.null_log_likelihood);
    }

    #[test]
    fn perfect_separation_is_flagged() {
        let spec = UtilitySpec::from_names(&["x"], &["a", "b"], 0).unwrap();
        let data: Vec<_> = (0..40)
            .map(|i| {
                let x = if i % 2 == 0 { 1.0 } else { -1.0 };
                obs(&[vec![0.0], vec![x]], usize::from(x > 0.0))
            })
            .collect();
        let est = estimate(&spec, &data, &EstimateOptions::default()).unwrap();
        assert!(!est.report.converged);
        assert!(est.report.separation.is_some(), "{:?}", est.report);
    }

    #[test]
    fn iteration_limit_reports_non_convergence() {
        let spec = UtilitySpec::from_names(&["x"], &["a", "b"], 0).unwrap();
        let data: Vec<_> = (0..50)
            .map(|i| obs(&[vec![0.0], vec![(i % 5) as f64]], usize::from(i % 3 == 0)))
            .collect();
        let options = EstimateOptions {
            max_iterations: 1,
            ..Default::default()
        };
        let est = estimate(&spec, &data, &options).unwrap();
        assert!(!est.report.converged);
        assert_eq!(est.report.iterations, 1);
        assert!(est.log_likelihood > est.report.null_log_likelihood);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            estimate(&UtilitySpec::evacuation(), &[], &EstimateOptions::default()),
            Err(DcmError::NoObservations)
        ));
    }

    #[test]
    fn accuracy_examples() {
        let spec = UtilitySpec::from_names(&["x"], &["a", "b"], 0).unwrap();
        let sure = ChoiceModel::new(
            spec.clone(),
            ParameterVector {
                betas: vec![0.0],
                ascs: vec![0.0, -800.0],
            },
        )
        .unwrap();
        let zeros: Vec<_> = (0..10).map(|_| obs(&[vec![0.0], vec![0.0]], 0)).collect();
        assert_eq!(predict_accuracy(&sure, &zeros).unwrap(), 1.0);

        // ties go to alternative 0, so balanced data scores exactly half
        let null = ChoiceModel::null(spec);
        let balanced: Vec<_> = (0..10).map(|i| obs(&[vec![1.0], vec![2.0]], i % 2)).collect();
        assert_eq!(predict_accuracy(&null, &balanced).unwrap(), 0.5);
        assert!(predict_accuracy(&null, &[]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }
}
