use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DcmError;

/// Names the factors and alternatives of a linear-in-parameters logit utility.
///
/// Preference weights are shared across alternatives; each alternative gets its
/// own constant, with the constant of `asc_reference` pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    factor_names: Vec<String>,
    alternatives: Vec<String>,
    asc_reference: usize,
}

impl UtilitySpec {
    pub fn new(
        factor_names: Vec<String>,
        alternatives: Vec<String>,
        asc_reference: usize,
    ) -> Result<Self, DcmError> {
        if factor_names.is_empty() {
            return Err(DcmError::InvalidSpec("at least one factor is required".into()));
        }
        if alternatives.len() < 2 {
            return Err(DcmError::InvalidSpec("at least two alternatives are required".into()));
        }
        if asc_reference >= alternatives.len() {
            return Err(DcmError::InvalidSpec(format!(
                "reference alternative {asc_reference} out of range for {} alternatives",
                alternatives.len()
            )));
        }
        for (i, name) in factor_names.iter().enumerate() {
            if factor_names[..i].contains(name) {
                return Err(DcmError::InvalidSpec(format!("duplicate factor name {name:?}")));
            }
        }
        for (i, name) in alternatives.iter().enumerate() {
            if alternatives[..i].contains(name) {
                return Err(DcmError::InvalidSpec(format!("duplicate alternative name {name:?}")));
            }
        }
        Ok(Self {
            factor_names,
            alternatives,
            asc_reference,
        })
    }

    /// Convenience constructor from string slices.
    pub fn from_names(factors: &[&str], alternatives: &[&str], asc_reference: usize) -> Result<Self, DcmError> {
        Self::new(
            factors.iter().map(|s| s.to_string()).collect(),
            alternatives.iter().map(|s| s.to_string()).collect(),
            asc_reference,
        )
    }

    /// Evacuation-drill utility: DIST, CH, NF, NB over two routes.
    pub fn evacuation() -> Self {
        Self::from_names(&["DIST", "CH", "NF", "NB"], &["Route1", "Route2"], 0)
            .expect("static spec is valid")
    }

    /// Firework-event utility: DIST, GUIDE, ATT over two routes.
    pub fn firework() -> Self {
        Self::from_names(&["DIST", "GUIDE", "ATT"], &["Route1", "Route2"], 0)
            .expect("static spec is valid")
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn alternatives(&self) -> &[String] {
        &self.alternatives
    }

    pub fn asc_reference(&self) -> usize {
        self.asc_reference
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn n_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    /// Number of free parameters: every beta plus all non-reference constants.
    pub fn n_free(&self) -> usize {
        self.n_factors() + self.n_alternatives() - 1
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factor_names.iter().position(|f| f == name)
    }

    pub fn alternative_index(&self, name: &str) -> Option<usize> {
        self.alternatives.iter().position(|a| a == name)
    }

    /// Alternatives whose constant is estimated, in order.
    pub fn free_ascs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_alternatives()).filter(move |&j| j != self.asc_reference)
    }

    /// Human-readable label of each free parameter, in free-vector order.
    pub fn free_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.factor_names.iter().map(|f| format!("beta_{f}")).collect();
        labels.extend(self.free_ascs().map(|j| format!("ASC_{}", self.alternatives[j])));
        labels
    }
}

/// Row-major J×K attribute matrix: one row per alternative, one column per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_alternatives: usize,
    n_factors: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(n_alternatives: usize, n_factors: usize) -> Self {
        Self {
            n_alternatives,
            n_factors,
            data: vec![0.0; n_alternatives * n_factors],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DcmError> {
        let n_alternatives = rows.len();
        let n_factors = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_factors) {
            return Err(DcmError::Dimension("ragged feature rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DcmError::NonFinite("feature value".into()));
        }
        Ok(Self {
            n_alternatives,
            n_factors,
            data,
        })
    }

    pub fn n_alternatives(&self) -> usize {
        self.n_alternatives
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn row(&self, alternative: usize) -> &[f64] {
        let start = alternative * self.n_factors;
        &self.data[start..start + self.n_factors]
    }

    pub fn get(&self, alternative: usize, factor: usize) -> f64 {
        self.data[alternative * self.n_factors + factor]
    }

    pub fn set(&mut self, alternative: usize, factor: usize, value: f64) {
        self.data[alternative * self.n_factors + factor] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_factors.max(1)).take(self.n_alternatives)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn check(&self, spec: &UtilitySpec) -> Result<(), DcmError> {
        if self.n_alternatives != spec.n_alternatives() || self.n_factors != spec.n_factors() {
            return Err(DcmError::Dimension(format!(
                "features are {}x{}, spec expects {}x{}",
                self.n_alternatives,
                self.n_factors,
                spec.n_alternatives(),
                spec.n_factors()
            )));
        }
        Ok(())
    }
}

/// One observed decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceObservation {
    pub individual_id: String,
    pub time: f64,
    pub features: FeatureMatrix,
    pub chosen: usize,
}

impl ChoiceObservation {
    pub fn new(
        individual_id: impl Into<String>,
        time: f64,
        features: FeatureMatrix,
        chosen: usize,
    ) -> Result<Self, DcmError> {
        if chosen >= features.n_alternatives() {
            return Err(DcmError::Dimension(format!(
                "chosen alternative {chosen} out of range for {} alternatives",
                features.n_alternatives()
            )));
        }
        if !time.is_finite() {
            return Err(DcmError::NonFinite("observation time".into()));
        }
        Ok(Self {
            individual_id: individual_id.into(),
            time,
            features,
            chosen,
        })
    }

    pub(crate) fn check(&self, spec: &UtilitySpec) -> Result<(), DcmError> {
        self.features.check(spec)?;
        if self.chosen >= spec.n_alternatives() {
            return Err(DcmError::Dimension(format!("chosen alternative {} out of range", self.chosen)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub betas: Vec<f64>,
    pub ascs: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(spec: &UtilitySpec) -> Self {
        Self {
            betas: vec![0.0; spec.n_factors()],
            ascs: vec![0.0; spec.n_alternatives()],
        }
    }

    /// Packs betas followed by the non-reference constants.
    pub fn to_free(&self, spec: &UtilitySpec) -> Vec<f64> {
        let mut theta = self.betas.clone();
        theta.extend(spec.free_ascs().map(|j| self.ascs[j]));
        theta
    }

    pub fn from_free(spec: &UtilitySpec, theta: &[f64]) -> Self {
        let k = spec.n_factors();
        let betas = theta[..k].to_vec();
        let mut ascs = vec![0.0; spec.n_alternatives()];
        for (slot, j) in spec.free_ascs().enumerate() {
            ascs[j] = theta[k + slot];
        }
        Self { betas, ascs }
    }

    fn check(&self, spec: &UtilitySpec) -> Result<(), DcmError> {
        if self.betas.len() != spec.n_factors() || self.ascs.len() != spec.n_alternatives() {
            return Err(DcmError::Dimension(format!(
                "parameters have {} betas / {} constants, spec expects {} / {}",
                self.betas.len(),
                self.ascs.len(),
                spec.n_factors(),
                spec.n_alternatives()
            )));
        }
        if self.betas.iter().chain(&self.ascs).any(|v| !v.is_finite()) {
            return Err(DcmError::NonFinite("parameter".into()));
        }
        if self.ascs[spec.asc_reference()] != 0.0 {
            return Err(DcmError::InvalidSpec(format!(
                "constant of reference alternative {} must be 0",
                spec.alternatives()[spec.asc_reference()]
            )));
        }
        Ok(())
    }
}

/// A multinomial logit model: utility specification plus parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceModel {
    spec: UtilitySpec,
    params: ParameterVector,
}

impl ChoiceModel {
    pub fn new(spec: UtilitySpec, params: ParameterVector) -> Result<Self, DcmError> {
        params.check(&spec)?;
        Ok(Self { spec, params })
    }

    /// Model with every free parameter at zero.
    pub fn null(spec: UtilitySpec) -> Self {
        let params = ParameterVector::zeros(&spec);
        Self { spec, params }
    }

    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    /// Deterministic utility `V[j] = ASC[j] + Σ_k beta[k]·x[j][k]`.
    pub fn utilities(&self, features: &FeatureMatrix) -> Result<Vec<f64>, DcmError> {
        features.check(&self.spec)?;
        Ok(self.utilities_unchecked(features))
    }

    pub(crate) fn utilities_unchecked(&self, features: &FeatureMatrix) -> Vec<f64> {
        features
            .rows()
            .zip(&self.params.ascs)
            .map(|(row, asc)| asc + dot(&self.params.betas, row))
            .collect()
    }

    /// Logit choice probabilities for one decision.
    pub fn choice_probabilities(&self, features: &FeatureMatrix) -> Result<Vec<f64>, DcmError> {
        Ok(softmax(&self.utilities(features)?))
    }

    /// Draws an alternative from the logit distribution.
    pub fn sample_choice<R: Rng + ?Sized>(&self, features: &FeatureMatrix, rng: &mut R) -> Result<usize, DcmError> {
        let p = self.choice_probabilities(features)?;
        Ok(sample_index(&p, rng.random::<f64>()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln Σ exp(v)`, shifted by the maximum so large utilities cannot overflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Inverse-CDF draw over `probabilities` in index order, given `u ∈ [0, 1)`.
pub fn sample_index(probabilities: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (j, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            last_positive = j;
        }
        cumulative += p;
        if u < cumulative {
            return j;
        }
    }
    // rounding left the cumulative sum just below 1
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn evac_table_model() -> ChoiceModel {
        ChoiceModel::new(
            UtilitySpec::evacuation(),
            ParameterVector {
                betas: vec![-1.33, 1.13, 0.202, -0.105],
                ascs: vec![0.0, 2.33],
            },
        )
        .unwrap()
    }

    #[test]
    fn evacuation_route2_utility() {
        let model = evac_table_model();
        let x = FeatureMatrix::from_rows(&[vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
        let v = model.utilities(&x).unwrap();
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn firework_utilities_hand_evaluated() {
        let model = ChoiceModel::new(
            UtilitySpec::firework(),
            ParameterVector {
                betas: vec![-9.76, 1.26, 0.021],
                ascs: vec![0.0, 2.929],
            },
        )
        .unwrap();
        let x = FeatureMatrix::from_rows(&[vec![0.5, 1.0, 0.0], vec![0.8, 0.0, 1.0]]).unwrap();
        let v = model.utilities(&x).unwrap();
        assert_abs_diff_eq!(v[0], -3.62, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], -4.858, epsilon = 1e-12);
    }

    #[test]
    fn zero_model_gives_zero_utility() {
        let model = ChoiceModel::null(UtilitySpec::evacuation());
        let x = FeatureMatrix::from_rows(&[vec![3.0, 1.0, 2.0, 5.0], vec![7.0, 0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(model.utilities(&x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = ChoiceModel::null(UtilitySpec::evacuation());
        let x = FeatureMatrix::zeros(2, 3);
        assert!(matches!(model.utilities(&x), Err(DcmError::Dimension(_))));
        let x = FeatureMatrix::zeros(3, 4);
        assert!(matches!(model.choice_probabilities(&x), Err(DcmError::Dimension(_))));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1.0, 0.0]);
        assert_abs_diff_eq!(p[0], 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(p[1], 0.2689, epsilon = 1e-4);
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert!(p[1] < 1e-300);
    }

    #[test]
    fn log_sum_exp_large_values() {
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn degenerate_distribution_always_first() {
        for i in 0..100 {
            assert_eq!(sample_index(&[1.0, 0.0], i as f64 / 100.0), 0);
        }
        assert_eq!(sample_index(&[0.0, 1.0], 0.0), 1);
        // u just below 1 with a sum that rounds short
        assert_eq!(sample_index(&[0.3, 0.3, 0.4 - 1e-16], 1.0 - 1e-17), 2);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let model = ChoiceModel::null(UtilitySpec::evacuation());
        let x = FeatureMatrix::zeros(2, 4);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| model.sample_choice(&x, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn spec_validation() {
        assert!(UtilitySpec::from_names(&[], &["a", "b"], 0).is_err());
        assert!(UtilitySpec::from_names(&["x"], &["a"], 0).is_err());
        assert!(UtilitySpec::from_names(&["x"], &["a", "b"], 2).is_err());
        assert!(UtilitySpec::from_names(&["x", "x"], &["a", "b"], 0).is_err());
        let spec = UtilitySpec::evacuation();
        let bad = ParameterVector {
            betas: vec![0.0; 4],
            ascs: vec![1.0, 0.0],
        };
        assert!(ChoiceModel::new(spec.clone(), bad).is_err());
        let nan = ParameterVector {
            betas: vec![f64::NAN, 0.0, 0.0, 0.0],
            ascs: vec![0.0, 0.0],
        };
        assert!(matches!(ChoiceModel::new(spec, nan), Err(DcmError::NonFinite(_))));
    }

    #[test]
    fn free_vector_round_trip() {
        let spec = UtilitySpec::from_names(&["a", "b"], &["x", "y", "z"], 1).unwrap();
        let params = ParameterVector {
            betas: vec![1.5, -2.0],
            ascs: vec![0.25, 0.0, -0.75],
        };
        let theta = params.to_free(&spec);
        assert_eq!(theta, vec![1.5, -2.0, 0.25, -0.75]);
        assert_eq!(ParameterVector::from_free(&spec, &theta), params);
        assert_eq!(spec.free_labels(), vec!["beta_a", "beta_b", "ASC_x", "ASC_z"]);
    }
}
