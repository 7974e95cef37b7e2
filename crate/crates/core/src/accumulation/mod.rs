//! Accumulation score: a per-exchange measure of how busy the channel was
//! around a probe's response, built from the frames sent between probe and
//! response (predecessors) and shortly after the response (successors).

mod context;
mod fit;
mod score;
mod weight;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use context::{collect_context, AccumulationContext, ContextCollector, ContextPacket};
pub use fit::{
    bin_edges, bin_of, fit_exponential_cu, fit_linear_cu, fit_weight_params, pearson, scores_for, ExpFit, FitSample,
    LinearFit, ParamGrid, WeightFit, DEFAULT_CU_BREAKS, LOG_EPSILON,
};
pub use score::{accumulation_score, accumulation_score_within, ScoredPair, MIN_GAP_MS};
pub use weight::{WeightFamily, WeightFunction};

use crate::exec;
use crate::extractor::ProbeResponsePair;
use crate::trace::Trace;

#[derive(Debug, thiserror::Error)]
pub enum AccumulationError {
    #[error("bad parameter: {0}")]
    Param(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Scores every pair of `trace` with `w` and its default successor window.
pub fn score_pairs(trace: &Trace, pairs: &[ProbeResponsePair], w: &WeightFunction) -> Result<Vec<ScoredPair>, AccumulationError> {
    w.validate()?;
    let collector = ContextCollector::new(trace);
    let window = w.successor_window_ms();
    let idx: Vec<usize> = (0..pairs.len()).collect();
    Ok(exec::map(&idx, |&i| {
        let ctx = collector.collect(&pairs[i], window);
        ScoredPair {
            pair_index: i,
            score: accumulation_score(&ctx, w).expect("validated weight"),
            n: ctx.n(),
            family: w.family(),
        }
    }))
}

/// Fit samples for `pairs`, with contexts wide enough for every point of `grid`.
pub fn fit_samples(trace: &Trace, pairs: &[ProbeResponsePair], grid: &ParamGrid) -> Result<Vec<FitSample>, AccumulationError> {
    let window = grid.max_window_ms()?;
    let collector = ContextCollector::new(trace);
    Ok(exec::map(pairs, |p| FitSample {
        latency_ms: p.latency_ms(),
        context: collector.collect(p, window),
    }))
}

pub const SCORED_CSV_HEADER: &str = "device,probe_kind,latency_ms,score,n";

pub fn write_scored_csv(pairs: &[ProbeResponsePair], scored: &[ScoredPair], path: &Path) -> Result<(), AccumulationError> {
    let io_err = |source| AccumulationError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(out, "{SCORED_CSV_HEADER}").map_err(io_err)?;
    for s in scored {
        let p = &pairs[s.pair_index];
        writeln!(
            out,
            "{},{},{:.3},{},{}",
            p.device_id,
            p.probe_kind,
            p.latency_ms(),
            s.score,
            s.n
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
