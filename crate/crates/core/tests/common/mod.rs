//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use latentid::extractor::ProbeResponsePair;
use latentid::trace::{PacketKind, PacketRecord, ProbeKind, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn record(start_us: u64, end_us: u64, kind: PacketKind, src: &str, dst: &str, key: Option<&str>) -> PacketRecord {
    PacketRecord {
        start_us,
        end_us,
        kind,
        src: src.into(),
        dst: dst.into(),
        size_bytes: 100,
        match_key: key.map(String::from),
    }
}

/// One TCP-lo exchange plus background frames, each background frame from its
/// own station so overlaps are allowed.
pub struct Exchange {
    pub trace: Trace,
    pub pair: ProbeResponsePair,
    /// (start_us, end_us) of every background frame.
    pub background: Vec<(u64, u64)>,
}

pub fn exchange(t4: u64, t6: u64, t7: u64, background: Vec<(u64, u64)>) -> Exchange {
    let probe_start = t4 - 50;
    let mut records = vec![
        record(probe_start, t4, PacketKind::ProbeTcpLo, "ap", "dev", Some("k")),
        record(t6, t7, PacketKind::RespTcpRst, "dev", "ap", Some("k")),
    ];
    for (i, &(s, e)) in background.iter().enumerate() {
        records.push(record(s, e, PacketKind::Background, &format!("bg{i}"), "ap", None));
    }
    let trace = Trace::new("test", records).expect("valid trace");
    let find = |kind: PacketKind| trace.records().iter().position(|r| r.kind == kind).unwrap();
    let (pi, ri) = (find(PacketKind::ProbeTcpLo), find(PacketKind::RespTcpRst));
    let pair = ProbeResponsePair::from_records(pi, &trace.records()[pi], ri, &trace.records()[ri]).expect("pairable");
    assert_eq!(pair.probe_kind, ProbeKind::TcpLo);
    Exchange { trace, pair, background }
}

/// Random exchange with `n` background frames scattered around it, most of
/// which land in the predecessor or successor window.
pub fn random_exchange(rng: &mut ChaCha8Rng, n: usize, window_us: u64) -> Exchange {
    let t4 = 100_000 + rng.random_range(0..1000);
    let t6 = t4 + rng.random_range(200..8000);
    let t7 = t6 + rng.random_range(20..600);
    let lo = t4 - 2000;
    let hi = t7 + window_us + 2000;
    let bg = (0..n)
        .map(|_| {
            let s = rng.random_range(lo..hi);
            (s, s + rng.random_range(1..1500))
        })
        .collect();
    exchange(t4, t6, t7, bg)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Brute-force bell-curve accumulation score straight from raw frame times:
/// select members by midpoint, then for every member find its predecessor by
/// scanning all members.
pub fn oracle_bell_score(t4: u64, t6: u64, t7: u64, frames: &[(u64, u64)], sigma_ms: f64, window_us: u64) -> f64 {
    let mid = |s: u64, e: u64| (s + e) as f64 / 2.0;
    let members: Vec<(u64, u64)> = frames
        .iter()
        .copied()
        .filter(|&(s, e)| {
            let m = mid(s, e);
            (m > t4 as f64 && m < t6 as f64) || (m > t7 as f64 && m <= (t7 + window_us) as f64)
        })
        .collect();
    let resp_mid_ms = mid(t6, t7) / 1000.0;
    let mut total = 0.0;
    for (i, &(s, e)) in members.iter().enumerate() {
        // previous member in (start, end, index) order
        let prev = members
            .iter()
            .enumerate()
            .filter(|&(j, &(s2, e2))| (s2, e2, j) < (s, e, i))
            .max_by_key(|&(j, &(s2, e2))| (s2, e2, j));
        let d = (e - s) as f64 / 1000.0;
        let f = normal_pdf(mid(s, e) / 1000.0, resp_mid_ms, sigma_ms);
        let norm = match prev {
            None => sigma_ms,
            Some((_, &(_, pe))) => sigma_ms / ((s as f64 - pe as f64) / 1000.0).max(0.001),
        };
        total += d * norm * f;
    }
    total
}

pub fn median(v: &[f64]) -> f64 {
    latentid::pipeline::median(v)
}

/// Fits a bell curve to latencies generated as a noisy linear function of the
/// score under `sigma_star`, over random contexts; returns the recovered sigma.
pub fn recovers_sigma(sigma_star: f64, seed: u64) -> f64 {
    use latentid::accumulation::{collect_context, fit_weight_params, scores_for, FitSample, ParamGrid, WeightFunction};
    let mut rng = rng(seed);
    let grid = ParamGrid::default_bell();
    let window = grid.max_window_ms().unwrap();
    let truth = WeightFunction::bell(sigma_star).unwrap();
    let mut samples = Vec::new();
    for _ in 0..300 {
        let n = rng.random_range(0..30);
        let ex = random_exchange(&mut rng, n, (window * 1000.0) as u64);
        samples.push(FitSample {
            latency_ms: 0.0,
            context: collect_context(&ex.trace, &ex.pair, window),
        });
    }
    let scores = scores_for(&samples, &truth);
    for (s, score) in samples.iter_mut().zip(scores) {
        s.latency_ms = 0.5 + 0.2 * score + rng.random_range(-0.05..0.05);
    }
    match fit_weight_params(&samples, &grid).unwrap().weight {
        WeightFunction::Bell { sigma_ms } => sigma_ms,
        w => panic!("unexpected {w:?}"),
    }
}
