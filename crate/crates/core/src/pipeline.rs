//! Stage composition: trace → pairs → scores → rounds → feature rows, for a
//! single trace or a sweep of utilization levels.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::accumulation::{
    bin_edges, fit_exponential_cu, fit_linear_cu, score_pairs, AccumulationError, ExpFit, LinearFit, ScoredPair,
    WeightFunction, DEFAULT_CU_BREAKS,
};
use crate::dataset::{build_feature_rows, Dataset, DatasetError};
use crate::exec;
use crate::extractor::{group_rounds, pair_probes, ExtractError, Pairing, ProbeResponsePair};
use crate::models::ModelError;
use crate::simulator::{simulate, sweep_configs, SimConfig, SimError};
use crate::trace::{compute_cu_series, ProbeKind, Trace, TraceError};

/// CU measurement window used throughout (10 ms).
pub const CU_WINDOW_US: u64 = 10_000;

/// Any stage error, tagged with the module it came from.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("simulator: {0}")]
    Simulator(#[from] SimError),
    #[error("extractor: {0}")]
    Extractor(#[from] ExtractError),
    #[error("accumulation: {0}")]
    Accumulation(#[from] AccumulationError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("models: {0}")]
    Models(#[from] ModelError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Input { path: String, msg: String },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn input(path: &Path, msg: impl Into<String>) -> Self {
        PipelineError::Input {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }
}

/// Pairs of one trace with their scores (aligned by index).
#[derive(Debug, Clone)]
pub struct ScoredTrace {
    pub pairing: Pairing,
    pub scored: Vec<ScoredPair>,
}

pub fn score_trace(trace: &Trace, w: &WeightFunction, timeout_ms: f64) -> Result<ScoredTrace, PipelineError> {
    let pairing = pair_probes(trace, timeout_ms);
    let scored = score_pairs(trace, &pairing.pairs, w)?;
    Ok(ScoredTrace { pairing, scored })
}

/// Feature rows from already scored pairs.
pub fn dataset_from_scored(pairs: &[ProbeResponsePair], scored: &[ScoredPair], probe_period_s: f64) -> Result<Dataset, PipelineError> {
    let score_of: HashMap<usize, f64> = scored
        .iter()
        .map(|s| (pairs[s.pair_index].probe_index, s.score))
        .collect();
    let rounds = group_rounds(pairs, probe_period_s);
    Ok(build_feature_rows(&rounds.rounds, &score_of)?)
}

pub fn dataset_from_trace(
    trace: &Trace,
    w: &WeightFunction,
    probe_period_s: f64,
    timeout_ms: f64,
) -> Result<Dataset, PipelineError> {
    let s = score_trace(trace, w, timeout_ms)?;
    dataset_from_scored(&s.pairing.pairs, &s.scored, probe_period_s)
}

/// One scored exchange with the utilization measured around it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSample {
    pub level: usize,
    pub device: String,
    pub kind: ProbeKind,
    pub latency_ms: f64,
    pub score: f64,
    /// CU of the window holding t6.
    pub cu: f64,
}

/// Score/CU samples for the pairs of one trace.
pub fn pair_samples(trace: &Trace, st: &ScoredTrace, level: usize) -> Result<Vec<PairSample>, PipelineError> {
    let cu = compute_cu_series(trace, CU_WINDOW_US)?;
    Ok(st
        .scored
        .iter()
        .map(|s| {
            let p = &st.pairing.pairs[s.pair_index];
            PairSample {
                level,
                device: p.device_id.clone(),
                kind: p.probe_kind,
                latency_ms: p.latency_ms(),
                score: s.score,
                cu: cu.at(p.t6_us),
            }
        })
        .collect())
}

/// Everything a utilization sweep produces.
#[derive(Debug, Clone)]
pub struct SweepData {
    pub levels: Vec<f64>,
    pub samples: Vec<PairSample>,
    /// Feature rows of every level, level by level.
    pub dataset: Dataset,
    /// Mean realized CU per level.
    pub realized_cu: Vec<f64>,
}

impl SweepData {
    fn scores_and_cus(&self) -> (Vec<f64>, Vec<f64>) {
        self.samples.iter().map(|s| (s.score, s.cu)).unzip()
    }

    pub fn fit_exponential(&self) -> Result<ExpFit, PipelineError> {
        let (s, c) = self.scores_and_cus();
        Ok(fit_exponential_cu(&s, &c)?)
    }

    pub fn fit_linear(&self) -> Result<LinearFit, PipelineError> {
        let (s, c) = self.scores_and_cus();
        Ok(fit_linear_cu(&s, &c)?)
    }

    /// Score bin edges at the CU thirds of the exponential fit.
    pub fn bin_edges(&self) -> Result<Vec<f64>, PipelineError> {
        Ok(bin_edges(&self.fit_exponential()?, &DEFAULT_CU_BREAKS)?)
    }
}

/// Simulates each level, reduces it to samples and feature rows, and drops
/// the trace before returning, so only one trace per worker is alive.
pub fn sweep_dataset(
    cfg: &SimConfig,
    levels: &[f64],
    per_level_s: f64,
    w: &WeightFunction,
    timeout_ms: f64,
) -> Result<SweepData, PipelineError> {
    let configs = sweep_configs(cfg, levels, per_level_s)?;
    let idx: Vec<usize> = (0..configs.len()).collect();
    let parts = exec::map(&idx, |&i| -> Result<(Vec<PairSample>, Dataset, f64), PipelineError> {
        let (trace, truth) = simulate(&configs[i])?;
        let st = score_trace(&trace, w, timeout_ms)?;
        let samples = pair_samples(&trace, &st, i)?;
        let ds = dataset_from_scored(&st.pairing.pairs, &st.scored, configs[i].probe_period_s)?;
        let cu = truth.realized_cu.iter().sum::<f64>() / truth.realized_cu.len().max(1) as f64;
        Ok((samples, ds, cu))
    });
    let mut out = SweepData {
        levels: levels.to_vec(),
        samples: Vec::new(),
        dataset: Dataset::default(),
        realized_cu: Vec::new(),
    };
    for p in parts {
        let (samples, ds, cu) = p?;
        out.samples.extend(samples);
        out.dataset.extend(ds);
        out.realized_cu.push(cu);
    }
    Ok(out)
}

pub const SAMPLES_CSV_HEADER: &str = "level,device,probe_kind,latency_ms,score,cu";

pub fn write_samples_csv(samples: &[PairSample], path: &Path) -> Result<(), PipelineError> {
    let io = |e| PipelineError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{SAMPLES_CSV_HEADER}").map_err(io)?;
    for s in samples {
        writeln!(out, "{},{},{},{},{},{}", s.level, s.device, s.kind, s.latency_ms, s.score, s.cu).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<PairSample>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SAMPLES_CSV_HEADER) {
        return Err(PipelineError::input(path, format!("header must be `{SAMPLES_CSV_HEADER}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || PipelineError::input(path, format!("bad sample on line {}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(PairSample {
                level: f[0].parse().map_err(|_| bad())?,
                device: f[1].to_string(),
                kind: ProbeKind::parse(f[2]).ok_or_else(bad)?,
                latency_ms: num(f[3])?,
                score: num(f[4])?,
                cu: num(f[5])?,
            })
        })
        .collect()
}

/// Median of a slice (upper median for even lengths); NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_deterministic_and_labelled() {
        let mut cfg = SimConfig::constant(0.3, 4.0, 11);
        cfg.probe_period_s = 0.2;
        let w = WeightFunction::bell(1.0).unwrap();
        let a = sweep_dataset(&cfg, &[0.2, 0.6], 4.0, &w, 1000.0).unwrap();
        let b = exec::sequential(|| sweep_dataset(&cfg, &[0.2, 0.6], 4.0, &w, 1000.0).unwrap());
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.dataset.classes().len(), 5);
        // 5 devices × 20 periods × 2 levels
        assert_eq!(a.dataset.len(), 200);
        assert_eq!(a.samples.len(), 800);
    }

    #[test]
    fn median_picks_middle() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!(median(&[]).is_nan());
    }
}
