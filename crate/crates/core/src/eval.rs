//! Arrival series, error metrics against a reference, and route shares.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, EventLog};
use crate::network::Network;

pub const DEFAULT_BIN_WIDTH_S: f64 = 300.0;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("bin widths differ: reference {reference} s, simulated {simulated} s")]
    BinWidthMismatch { reference: f64, simulated: f64 },
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
    #[error("unknown junction {0:?}")]
    UnknownJunction(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_width(w: f64) -> Result<(), EvalError> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(EvalError::BadBinWidth(w))
    }
}

/// Station arrivals counted in fixed-width bins aligned to multiples of the width.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSeries {
    bin_width_s: f64,
    /// Index of the first bin; bin `i` starts at `i * bin_width_s`.
    first_bin: i64,
    counts: Vec<u64>,
}

impl ArrivalSeries {
    pub fn empty(bin_width_s: f64) -> Self {
        Self {
            bin_width_s,
            first_bin: 0,
            counts: Vec::new(),
        }
    }

    /// Bins `[first, last]` given by their start times; counts must match.
    pub fn from_counts(bin_width_s: f64, first_start_s: f64, counts: Vec<u64>) -> Result<Self, EvalError> {
        check_width(bin_width_s)?;
        let first_bin = (first_start_s / bin_width_s).round() as i64;
        if ((first_bin as f64) * bin_width_s - first_start_s).abs() > 1e-6 * bin_width_s.max(1.0) {
            return Err(EvalError::Format(format!(
                "bin start {first_start_s} is not a multiple of the bin width {bin_width_s}"
            )));
        }
        Ok(Self {
            bin_width_s,
            first_bin,
            counts,
        })
    }

    /// Bins covering `[start_s, end_s]`, counting each time in `times`.
    pub fn from_times(times: &[f64], start_s: f64, end_s: f64, bin_width_s: f64) -> Result<Self, EvalError> {
        check_width(bin_width_s)?;
        if times.is_empty() {
            return Ok(Self::empty(bin_width_s));
        }
        let bin = |t: f64| (t / bin_width_s).floor() as i64;
        let lo = times.iter().copied().fold(start_s, f64::min);
        let hi = times.iter().copied().fold(end_s.max(start_s), f64::max);
        let first_bin = bin(lo);
        let mut counts = vec![0u64; (bin(hi) - first_bin + 1) as usize];
        for &t in times {
            counts[(bin(t) - first_bin) as usize] += 1;
        }
        Ok(Self {
            bin_width_s,
            first_bin,
            counts,
        })
    }

    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_s
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `(bin start s, count)` pairs in time order.
    pub fn bins(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| ((self.first_bin + i as i64) as f64 * self.bin_width_s, c))
    }

    /// Count in the bin with index `bin`, zero outside the series.
    fn at(&self, bin: i64) -> u64 {
        let i = bin - self.first_bin;
        if i < 0 || i as usize >= self.counts.len() {
            0
        } else {
            self.counts[i as usize]
        }
    }

    fn last_bin(&self) -> i64 {
        self.first_bin + self.counts.len() as i64 - 1
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_start_s", "bin_width_s", "count"])?;
        for (start, c) in self.bins() {
            w.write_record([start.to_string(), self.bin_width_s.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        #[derive(Deserialize)]
        struct Row {
            bin_start_s: f64,
            bin_width_s: f64,
            count: u64,
        }
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<Row>() {
            rows.push(row?);
        }
        let Some(first) = rows.first() else {
            return Err(EvalError::Format("arrival series has no bins".into()));
        };
        let width = first.bin_width_s;
        check_width(width)?;
        for (i, r) in rows.iter().enumerate() {
            if r.bin_width_s != width {
                return Err(EvalError::Format(format!("row {}: bin width {} differs from {width}", i + 2, r.bin_width_s)));
            }
            let expected = first.bin_start_s + i as f64 * width;
            if (r.bin_start_s - expected).abs() > 1e-6 * width {
                return Err(EvalError::Format(format!("row {}: bins are not contiguous", i + 2)));
            }
        }
        Self::from_counts(width, first.bin_start_s, rows.iter().map(|r| r.count).collect())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EvalError> {
        let f = std::fs::File::open(path).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Station arrivals of `log` binned over `[first spawn, last event]`.
pub fn arrivals(log: &EventLog, bin_width_s: f64) -> Result<ArrivalSeries, EvalError> {
    check_width(bin_width_s)?;
    let times: Vec<f64> = log
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ArriveStation)
        .map(|e| e.time())
        .collect();
    let start = log
        .events
        .iter()
        .find(|e| e.kind == EventKind::Spawn)
        .map_or(0.0, |e| e.time());
    let end = log.events.last().map_or(start, |e| e.time());
    ArrivalSeries::from_times(&times, start, end, bin_width_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Per-bin errors over the union of both series' bins; missing bins count 0.
pub fn mae_rmse(reference: &ArrivalSeries, simulated: &ArrivalSeries) -> Result<ErrorMetrics, EvalError> {
    compare(reference, simulated, false)
}

/// Like [`mae_rmse`], optionally on cumulative arrival counts.
pub fn compare(reference: &ArrivalSeries, simulated: &ArrivalSeries, cumulative: bool) -> Result<ErrorMetrics, EvalError> {
    if (reference.bin_width_s - simulated.bin_width_s).abs() > 1e-9 * reference.bin_width_s {
        return Err(EvalError::BinWidthMismatch {
            reference: reference.bin_width_s,
            simulated: simulated.bin_width_s,
        });
    }
    let series = [reference, simulated];
    let non_empty: Vec<&&ArrivalSeries> = series.iter().filter(|s| !s.is_empty()).collect();
    if non_empty.is_empty() {
        return Ok(ErrorMetrics { mae: 0.0, rmse: 0.0 });
    }
    let lo = non_empty.iter().map(|s| s.first_bin).min().unwrap();
    let hi = non_empty.iter().map(|s| s.last_bin()).max().unwrap();
    let (mut cum_r, mut cum_s) = (0i64, 0i64);
    let (mut abs, mut sq) = (0.0, 0.0);
    for b in lo..=hi {
        let (r, s) = (reference.at(b) as i64, simulated.at(b) as i64);
        let d = if cumulative {
            cum_r += r;
            cum_s += s;
            (cum_r - cum_s) as f64
        } else {
            (r - s) as f64
        };
        abs += d.abs();
        sq += d * d;
    }
    let n = (hi - lo + 1) as f64;
    Ok(ErrorMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
    })
}

/// Final choice per agent at `junction`, counted per alternative.
pub fn route_counts(log: &EventLog, junction: &str, n_alternatives: usize, include_scripted: bool) -> Vec<u64> {
    let mut counts = vec![0u64; n_alternatives];
    let Some(j) = log.junctions.iter().position(|name| name == junction) else {
        return counts;
    };
    let mut last: std::collections::HashMap<u32, u16> = std::collections::HashMap::new();
    for e in &log.events {
        if let EventKind::Decide {
            junction: ej,
            alternative,
            ..
        } = e.kind
        {
            if ej as usize == j && (include_scripted || !e.scripted) {
                last.insert(e.agent, alternative);
            }
        }
    }
    for alt in last.into_values() {
        if let Some(c) = counts.get_mut(alt as usize) {
            *c += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: 0.0, sd: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, sd }
    }
}

/// Route choices at one junction across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteShare {
    pub junction: String,
    pub alternatives: Vec<String>,
    /// Counts per replication, per alternative.
    pub per_replication: Vec<Vec<u64>>,
    /// Per alternative.
    pub summary: Vec<MeanSd>,
}

impl RouteShare {
    pub fn from_counts(junction: &str, alternatives: Vec<String>, per_replication: Vec<Vec<u64>>) -> Self {
        let summary = (0..alternatives.len())
            .map(|a| MeanSd::of(&per_replication.iter().map(|c| c[a] as f64).collect::<Vec<_>>()))
            .collect();
        Self {
            junction: junction.into(),
            alternatives,
            per_replication,
            summary,
        }
    }
}

/// Route shares at `junction` over several logs.
pub fn route_share(logs: &[&EventLog], network: &Network, junction: &str, include_scripted: bool) -> Result<RouteShare, EvalError> {
    let j = network
        .junction_index(junction)
        .ok_or_else(|| EvalError::UnknownJunction(junction.into()))?;
    let names: Vec<String> = network.junctions()[j].alternatives.iter().map(|a| a.name.clone()).collect();
    let per_rep = logs
        .iter()
        .map(|log| route_counts(log, junction, names.len(), include_scripted))
        .collect();
    Ok(RouteShare::from_counts(junction, names, per_rep))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationMetrics {
    pub seed: u64,
    pub mae: f64,
    pub rmse: f64,
    pub arrivals: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub policy: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub bin_width_s: f64,
    pub cumulative: bool,
    pub replications: Vec<ReplicationMetrics>,
    pub mae: MeanSd,
    pub rmse: MeanSd,
    pub route_shares: Vec<RouteShare>,
}

impl MetricsReport {
    pub fn new(
        scenario: &str,
        policy: &str,
        config_hash: &str,
        base_seed: u64,
        bin_width_s: f64,
        cumulative: bool,
        replications: Vec<ReplicationMetrics>,
        route_shares: Vec<RouteShare>,
    ) -> Self {
        let mae = MeanSd::of(&replications.iter().map(|r| r.mae).collect::<Vec<_>>());
        let rmse = MeanSd::of(&replications.iter().map(|r| r.rmse).collect::<Vec<_>>());
        Self {
            scenario: scenario.into(),
            policy: policy.into(),
            config_hash: config_hash.into(),
            base_seed,
            bin_width_s,
            cumulative,
            replications,
            mae,
            rmse,
            route_shares,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario     {}", self.scenario)?;
        writeln!(f, "policy       {}", self.policy)?;
        writeln!(f, "config hash  {}", self.config_hash)?;
        writeln!(f, "base seed    {}", self.base_seed)?;
        writeln!(
            f,
            "bins         {} s{}",
            self.bin_width_s,
            if self.cumulative { ", cumulative" } else { "" }
        )?;
        writeln!(f, "replications {}", self.replications.len())?;
        writeln!(f, "MAE          {:.1} ({:.2})", self.mae.mean, self.mae.sd)?;
        writeln!(f, "RMSE         {:.1} ({:.2})", self.rmse.mean, self.rmse.sd)?;
        for share in &self.route_shares {
            writeln!(f, "route share at {}", share.junction)?;
            for (name, s) in share.alternatives.iter().zip(&share.summary) {
                writeln!(f, "  {name:<12} {:>9.1} ({:.2})", s.mean, s.sd)?;
            }
        }
        Ok(())
    }
}

/// Plot-ready table: one row per bin with the reference, each replication
/// and the replication mean.
pub fn write_series_table<W: Write>(writer: W, reference: &ArrivalSeries, simulated: &[ArrivalSeries]) -> Result<(), EvalError> {
    for s in simulated {
        if (s.bin_width_s - reference.bin_width_s).abs() > 1e-9 * reference.bin_width_s {
            return Err(EvalError::BinWidthMismatch {
                reference: reference.bin_width_s,
                simulated: s.bin_width_s,
            });
        }
    }
    let all: Vec<&ArrivalSeries> = std::iter::once(reference).chain(simulated).filter(|s| !s.is_empty()).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["bin_start_s".to_string(), "reference".to_string()];
    header.extend((0..simulated.len()).map(|i| format!("rep_{i}")));
    header.push("mean".into());
    w.write_record(&header)?;
    if let (Some(lo), Some(hi)) = (
        all.iter().map(|s| s.first_bin).min(),
        all.iter().map(|s| s.last_bin()).max(),
    ) {
        for b in lo..=hi {
            let mut row = vec![(b as f64 * reference.bin_width_s).to_string(), reference.at(b).to_string()];
            let sims: Vec<u64> = simulated.iter().map(|s| s.at(b)).collect();
            row.extend(sims.iter().map(|c| c.to_string()));
            let mean = if sims.is_empty() {
                0.0
            } else {
                sims.iter().sum::<u64>() as f64 / sims.len() as f64
            };
            row.push(format!("{mean:.2}"));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
