//! Observation tables and model files.
//!
//! Observations are CSV with a mandatory header
//! `individual_id,time_s,chosen,<alt>:<factor>,...`, feature columns ordered
//! alternative-major. Models are TOML.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::estimate::{ConvergenceReport, Estimate};
use super::model::{ChoiceModel, ChoiceObservation, FeatureMatrix, ParameterVector, UtilitySpec};
use super::DcmError;

const FIXED_COLUMNS: [&str; 3] = ["individual_id", "time_s", "chosen"];

pub fn observation_header(spec: &UtilitySpec) -> Vec<String> {
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for alt in spec.alternatives() {
        for factor in spec.factor_names() {
            header.push(format!("{alt}:{factor}"));
        }
    }
    header
}

pub fn write_observations<W: Write>(
    writer: W,
    spec: &UtilitySpec,
    observations: &[ChoiceObservation],
) -> Result<(), DcmError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(observation_header(spec))?;
    for obs in observations {
        obs.check(spec)?;
        let mut record = vec![obs.individual_id.clone(), obs.time.to_string(), obs.chosen.to_string()];
        record.extend(obs.features.as_slice().iter().map(f64::to_string));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Recovers the factor and alternative names from an observation header.
/// The reference alternative defaults to the first one.
pub fn spec_from_header(header: &[String]) -> Result<UtilitySpec, DcmError> {
    if header.len() <= FIXED_COLUMNS.len() || header[..3] != FIXED_COLUMNS {
        return Err(DcmError::Format(format!(
            "observation header must start with {}",
            FIXED_COLUMNS.join(",")
        )));
    }
    let mut alternatives: Vec<String> = Vec::new();
    let mut factors: Vec<String> = Vec::new();
    for col in &header[3..] {
        let (alt, factor) = col
            .split_once(':')
            .ok_or_else(|| DcmError::Format(format!("feature column {col:?} is not <alt>:<factor>")))?;
        if !alternatives.iter().any(|a| a == alt) {
            alternatives.push(alt.to_string());
        }
        if !factors.iter().any(|f| f == factor) {
            factors.push(factor.to_string());
        }
    }
    let spec = UtilitySpec::new(factors, alternatives, 0)?;
    if observation_header(&spec) != header {
        return Err(DcmError::Format("feature columns are not a complete alternative-major grid".into()));
    }
    Ok(spec)
}

/// Reads observations; when `spec` is given the header must match it exactly.
pub fn read_observations<R: Read>(
    reader: R,
    spec: Option<&UtilitySpec>,
) -> Result<(UtilitySpec, Vec<ChoiceObservation>), DcmError> {
    let mut input = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
    let spec = match spec {
        Some(spec) => {
            if observation_header(spec) != header {
                return Err(DcmError::Format(format!(
                    "header does not match spec; expected {}",
                    observation_header(spec).join(",")
                )));
            }
            spec.clone()
        }
        None => spec_from_header(&header)?,
    };
    let (j, k) = (spec.n_alternatives(), spec.n_factors());
    let mut observations = Vec::new();
    for (line, record) in input.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let parse = |i: usize| -> Result<f64, DcmError> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| DcmError::Format(format!("row {row}, column {}: {e}", header[i])))
        };
        let chosen: usize = record[2]
            .trim()
            .parse()
            .map_err(|e| DcmError::Format(format!("row {row}, chosen: {e}")))?;
        let mut features = FeatureMatrix::zeros(j, k);
        for a in 0..j {
            for f in 0..k {
                let v = parse(3 + a * k + f)?;
                if !v.is_finite() {
                    return Err(DcmError::NonFinite(format!("row {row} feature")));
                }
                features.set(a, f, v);
            }
        }
        observations.push(ChoiceObservation::new(&record[0], parse(1)?, features, chosen)?);
    }
    Ok((spec, observations))
}

pub fn load_observations(path: &Path, spec: Option<&UtilitySpec>) -> Result<(UtilitySpec, Vec<ChoiceObservation>), DcmError> {
    let file = std::fs::File::open(path).map_err(|e| DcmError::Io(format!("{}: {e}", path.display())))?;
    read_observations(std::io::BufReader::new(file), spec)
}

pub fn save_observations(path: &Path, spec: &UtilitySpec, observations: &[ChoiceObservation]) -> Result<(), DcmError> {
    let file = std::fs::File::create(path).map_err(|e| DcmError::Io(format!("{}: {e}", path.display())))?;
    write_observations(std::io::BufWriter::new(file), spec, observations)
}

/// Utility specification as written in spec files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecFile {
    pub factors: Vec<String>,
    pub alternatives: Vec<String>,
    /// Name of the alternative whose constant is pinned to 0.
    pub reference: String,
}

impl SpecFile {
    pub fn into_spec(self) -> Result<UtilitySpec, DcmError> {
        let reference = self
            .alternatives
            .iter()
            .position(|a| *a == self.reference)
            .ok_or_else(|| DcmError::InvalidSpec(format!("unknown reference alternative {:?}", self.reference)))?;
        UtilitySpec::new(self.factors, self.alternatives, reference)
    }

    pub fn from_spec(spec: &UtilitySpec) -> Self {
        Self {
            factors: spec.factor_names().to_vec(),
            alternatives: spec.alternatives().to_vec(),
            reference: spec.alternatives()[spec.asc_reference()].clone(),
        }
    }
}

pub fn parse_spec(text: &str) -> Result<UtilitySpec, DcmError> {
    let file: SpecFile = toml::from_str(text).map_err(|e| DcmError::Format(e.to_string()))?;
    file.into_spec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationMetadata {
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub observations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_mean_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_pooled_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl EstimationMetadata {
    pub fn from_estimate(est: &Estimate, n_observations: usize) -> Self {
        let report: &ConvergenceReport = &est.report;
        Self {
            log_likelihood: est.log_likelihood,
            null_log_likelihood: report.null_log_likelihood,
            iterations: report.iterations,
            converged: report.converged,
            observations: n_observations,
            cv_mean_accuracy: None,
            cv_pooled_accuracy: None,
            diagnostic: report.separation.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    factors: Vec<String>,
    alternatives: Vec<String>,
    reference: String,
    betas: Vec<f64>,
    ascs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    estimation: Option<EstimationMetadata>,
}

pub fn model_to_toml(model: &ChoiceModel, metadata: Option<&EstimationMetadata>) -> String {
    let spec = model.spec();
    let file = ModelFile {
        factors: spec.factor_names().to_vec(),
        alternatives: spec.alternatives().to_vec(),
        reference: spec.alternatives()[spec.asc_reference()].clone(),
        betas: model.params().betas.clone(),
        ascs: model.params().ascs.clone(),
        estimation: metadata.cloned(),
    };
    toml::to_string(&file).expect("model serializes")
}

pub fn model_from_toml(text: &str) -> Result<(ChoiceModel, Option<EstimationMetadata>), DcmError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| DcmError::Format(e.to_string()))?;
    let spec = SpecFile {
        factors: file.factors,
        alternatives: file.alternatives,
        reference: file.reference,
    }
    .into_spec()?;
    let model = ChoiceModel::new(
        spec,
        ParameterVector {
            betas: file.betas,
            ascs: file.ascs,
        },
    )?;
    Ok((model, file.estimation))
}

pub fn load_model(path: &Path) -> Result<(ChoiceModel, Option<EstimationMetadata>), DcmError> {
    let text = std::fs::read_to_string(path).map_err(|e| DcmError::Io(format!("{}: {e}", path.display())))?;
    model_from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (UtilitySpec, Vec<ChoiceObservation>) {
        let spec = UtilitySpec::evacuation();
        let obs = vec![
            ChoiceObservation::new(
                "7",
                0.5,
                FeatureMatrix::from_rows(&[vec![1.2345678901234567, 1.0, 2.0, 0.0], vec![0.1 + 0.2, 0.0, 0.0, 3.0]]).unwrap(),
                1,
            )
            .unwrap(),
            ChoiceObservation::new(
                "8",
                1e-300,
                FeatureMatrix::from_rows(&[vec![-0.0, 0.0, 0.0, 0.0], vec![f64::MAX, 0.0, 1.0, 1.0]]).unwrap(),
                0,
            )
            .unwrap(),
        ];
        (spec, obs)
    }

    #[test]
    fn header_layout() {
        let header = observation_header(&UtilitySpec::firework());
        assert_eq!(
            header.join(","),
            "individual_id,time_s,chosen,Route1:DIST,Route1:GUIDE,Route1:ATT,Route2:DIST,Route2:GUIDE,Route2:ATT"
        );
        assert_eq!(spec_from_header(&header).unwrap(), UtilitySpec::firework());
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let (spec, obs) = sample();
        let mut buf = Vec::new();
        write_observations(&mut buf, &spec, &obs).unwrap();
        let (spec2, back) = read_observations(buf.as_slice(), None).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(back.len(), obs.len());
        for (a, b) in obs.iter().zip(&back) {
            assert_eq!(a.individual_id, b.individual_id);
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            assert_eq!(a.chosen, b.chosen);
            for (x, y) in a.features.as_slice().iter().zip(b.features.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let text = "individual_id,time_s,chosen,A:x,B:x\n1,0,5,0,1\n";
        assert!(read_observations(text.as_bytes(), None).is_err());
        let text = "individual_id,time_s,chosen,A:x,B:x\n1,0,0,zero,1\n";
        assert!(read_observations(text.as_bytes(), None).is_err());
        let text = "id,time_s,chosen,A:x,B:x\n";
        assert!(read_observations(text.as_bytes(), None).is_err());
        let text = "individual_id,time_s,chosen,A:x,B:y\n";
        assert!(read_observations(text.as_bytes(), None).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let model = ChoiceModel::new(
            UtilitySpec::firework(),
            ParameterVector {
                betas: vec![-9.76, 1.26, 0.021],
                ascs: vec![0.0, 2.929],
            },
        )
        .unwrap();
        let meta = EstimationMetadata {
            log_likelihood: -100.5,
            null_log_likelihood: -120.0,
            iterations: 6,
            converged: true,
            observations: 300,
            cv_mean_accuracy: Some(0.7),
            cv_pooled_accuracy: None,
            diagnostic: None,
        };
        let text = model_to_toml(&model, Some(&meta));
        let (back, meta_back) = model_from_toml(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(meta_back, Some(meta));
    }
}
