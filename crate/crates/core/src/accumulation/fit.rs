//! Correlation-driven curve fitting and the score/utilization regression.

use serde::{Deserialize, Serialize};

use super::context::AccumulationContext;
use super::score::accumulation_score_within;
use super::weight::{WeightFamily, WeightFunction};
use super::AccumulationError;
use crate::exec;

/// Offset added to scores before taking logs.
pub const LOG_EPSILON: f64 = 1e-6;

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AccumulationError> {
    if xs.len() != ys.len() {
        return Err(AccumulationError::Degenerate(format!(
            "length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(AccumulationError::Degenerate("need at least two samples".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AccumulationError::Degenerate("constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Candidate curve parameters for the grid search.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamGrid {
    Bell { sigmas_ms: Vec<f64> },
    Gamma { alphas: Vec<f64>, betas_ms: Vec<f64> },
}

impl ParamGrid {
    /// σ ∈ {0.1, 0.2, …, 5.0} ms.
    pub fn default_bell() -> Self {
        ParamGrid::Bell {
            sigmas_ms: (1..=50).map(|i| i as f64 / 10.0).collect(),
        }
    }

    pub fn default_gamma() -> Self {
        ParamGrid::Gamma {
            alphas: vec![1.5, 2.0, 3.0, 4.0],
            betas_ms: vec![0.25, 0.5, 1.0, 2.0],
        }
    }

    pub fn default_for(family: WeightFamily) -> Self {
        match family {
            WeightFamily::Bell => Self::default_bell(),
            WeightFamily::Gamma => Self::default_gamma(),
        }
    }

    /// Points in tie-break order: ascending σ, or ascending (α, β).
    pub fn points(&self) -> Result<Vec<WeightFunction>, AccumulationError> {
        let mut pts = match self {
            ParamGrid::Bell { sigmas_ms } => sigmas_ms
                .iter()
                .map(|&s| WeightFunction::bell(s))
                .collect::<Result<Vec<_>, _>>()?,
            ParamGrid::Gamma { alphas, betas_ms } => alphas
                .iter()
                .flat_map(|&a| betas_ms.iter().map(move |&b| WeightFunction::gamma(a, b)))
                .collect::<Result<Vec<_>, _>>()?,
        };
        if pts.is_empty() {
            return Err(AccumulationError::Param("parameter grid is empty".into()));
        }
        pts.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite params"));
        pts.dedup();
        Ok(pts)
    }

    /// Widest successor window any point needs.
    pub fn max_window_ms(&self) -> Result<f64, AccumulationError> {
        Ok(self
            .points()?
            .iter()
            .map(WeightFunction::successor_window_ms)
            .fold(0.0, f64::max))
    }
}

fn key(w: &WeightFunction) -> (f64, f64) {
    match *w {
        WeightFunction::Bell { sigma_ms } => (sigma_ms, 0.0),
        WeightFunction::Gamma { alpha, beta_ms } => (alpha, beta_ms),
    }
}

/// One exchange for fitting: its latency and a context collected with a
/// window at least as wide as any grid point needs.
#[derive(Debug, Clone)]
pub struct FitSample {
    pub latency_ms: f64,
    pub context: AccumulationContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub weight: WeightFunction,
    pub r: f64,
}

/// Scores every sample under `w`, honouring `w`'s own successor window.
pub fn scores_for(samples: &[FitSample], w: &WeightFunction) -> Vec<f64> {
    let window = w.successor_window_ms();
    samples
        .iter()
        .map(|s| accumulation_score_within(&s.context, w, window))
        .collect()
}

/// Exhaustive search for the curve maximizing pearson(latency, score).
/// Grid points whose scores are constant are skipped; ties keep the
/// earliest point in [`ParamGrid::points`] order.
pub fn fit_weight_params(samples: &[FitSample], grid: &ParamGrid) -> Result<WeightFit, AccumulationError> {
    let points = grid.points()?;
    let latencies: Vec<f64> = samples.iter().map(|s| s.latency_ms).collect();
    let rs = exec::map(&points, |w| pearson(&latencies, &scores_for(samples, w)));
    let mut best: Option<WeightFit> = None;
    let mut last_err = None;
    for (w, r) in points.iter().zip(rs) {
        match r {
            Ok(r) if best.is_none_or(|b| r > b.r) => best = Some(WeightFit { weight: *w, r }),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| AccumulationError::Degenerate("no samples".into())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    /// Mean squared residual of ln(score + ε).
    pub rss: f64,
    /// Mean squared residual of a·e^(b·cu) against the raw scores.
    pub rss_raw: f64,
}

impl ExpFit {
    pub fn predict(&self, cu: f64) -> f64 {
        self.a * (self.b * cu).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Mean squared residual against the raw scores.
    pub rss: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), AccumulationError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(AccumulationError::Degenerate(
            "regression needs at least two paired samples".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AccumulationError::Degenerate("utilization values are constant".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

fn mean_sq(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    it.map(|r| r * r).sum::<f64>() / n as f64
}

/// Fits score ≈ a·e^(b·cu) by least squares on ln(score + ε).
pub fn fit_exponential_cu(scores: &[f64], cus: &[f64]) -> Result<ExpFit, AccumulationError> {
    if scores.iter().any(|s| !(*s >= 0.0)) {
        return Err(AccumulationError::Degenerate("scores must be non-negative".into()));
    }
    let logs: Vec<f64> = scores.iter().map(|s| (s + LOG_EPSILON).ln()).collect();
    let (ln_a, b) = ols(cus, &logs)?;
    let n = scores.len();
    let rss = mean_sq(cus.iter().zip(&logs).map(|(c, y)| y - (ln_a + b * c)), n);
    let a = ln_a.exp();
    let rss_raw = mean_sq(cus.iter().zip(scores).map(|(c, s)| s - a * (b * c).exp()), n);
    Ok(ExpFit { a, b, rss, rss_raw })
}

/// Ordinary least-squares line through the same samples.
pub fn fit_linear_cu(scores: &[f64], cus: &[f64]) -> Result<LinearFit, AccumulationError> {
    let (intercept, slope) = ols(cus, scores)?;
    let rss = mean_sq(
        cus.iter().zip(scores).map(|(c, s)| s - (intercept + slope * c)),
        scores.len(),
    );
    Ok(LinearFit {
        intercept,
        slope,
        rss,
    })
}

pub const DEFAULT_CU_BREAKS: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];

/// Score edges at the utilization breakpoints; bins are `[0, e1)`, `[e1, e2)`, … `[ek, ∞)`.
pub fn bin_edges(fit: &ExpFit, cu_breaks: &[f64]) -> Result<Vec<f64>, AccumulationError> {
    if !(fit.b > 0.0) {
        return Err(AccumulationError::Param(format!(
            "exponential growth rate must be positive, got {}",
            fit.b
        )));
    }
    if !(fit.a > 0.0 && fit.a.is_finite()) {
        return Err(AccumulationError::Param(format!("bad scale a = {}", fit.a)));
    }
    let edges: Vec<f64> = cu_breaks.iter().map(|&c| fit.predict(c)).collect();
    if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(AccumulationError::Param("cu breaks must be strictly increasing".into()));
    }
    Ok(edges)
}

/// Bin index of `score` against ascending `edges`.
pub fn bin_of(score: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e <= score)
}
