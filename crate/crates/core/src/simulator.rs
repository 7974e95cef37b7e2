//! Synthetic channel traces with ground truth.
//!
//! A run has three independent random streams:
//!
//! * background frames: an on/off renewal process whose mean busy fraction
//!   tracks the target utilization schedule,
//! * probes: the AP sends all four probe kinds to every device once per
//!   probe period, kind-major round robin,
//! * responses: each device waits a lognormal generation delay, then
//!   contends for the channel against the background frames already laid
//!   down.
//!
//! Everything is integer microseconds, so the ground-truth latency of a pair
//! is exactly `response.start_us - probe.end_us`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::trace::{compute_cu_series, PacketKind, PacketRecord, ProbeKind, Trace, DEFAULT_CU_WINDOW_US};

pub const AP_ID: &str = "ap";
pub const SIM_EPOCH: &str = "1970-01-01T00:00:00Z";

/// PHY preamble + PLCP header airtime added to every frame.
const PREAMBLE_US: u64 = 20;
/// 802.11 MAC header + LLC/SNAP + IPv4 + TCP.
const TCP_FRAME_OVERHEAD: u32 = 30 + 8 + 20 + 20;
/// Same with an 8-byte UDP header.
const UDP_FRAME_OVERHEAD: u32 = 30 + 8 + 20 + 8;
/// ICMP unreachable quotes the offending IP header plus 8 bytes.
const ICMP_UNREACH_FRAME: u32 = 30 + 8 + 20 + 8 + 28;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::Config(msg.into()))
}

/// Lognormal response-generation delay, parameterised by its median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyDist {
    pub median_ms: f64,
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub base_latency_ms: BTreeMap<ProbeKind, LatencyDist>,
    pub contention_sensitivity: f64,
}

impl DeviceProfile {
    /// Profile whose other three kinds scale off the TCP-lo median:
    /// high payload ×1.5, UDP ×0.8.
    pub fn scaled(id: &str, tcp_lo_median_ms: f64, dispersion: f64, contention_sensitivity: f64) -> Self {
        let base_latency_ms = ProbeKind::ALL
            .into_iter()
            .map(|k| {
                let mut m = tcp_lo_median_ms;
                if matches!(k, ProbeKind::TcpH | ProbeKind::UdpH) {
                    m *= 1.5;
                }
                if matches!(k, ProbeKind::UdpLo | ProbeKind::UdpH) {
                    m *= 0.8;
                }
                (
                    k,
                    LatencyDist {
                        median_ms: m,
                        dispersion,
                    },
                )
            })
            .collect();
        DeviceProfile {
            device_id: id.to_string(),
            base_latency_ms,
            contention_sensitivity,
        }
    }
}

pub const DEFAULT_DISPERSION: f64 = 0.35;

/// The five-device home: G, A, K, P, AQ ordered by TCP-lo median.
pub fn default_devices() -> Vec<DeviceProfile> {
    [
        ("G", 0.62, 1.0),
        ("A", 1.0, 1.0),
        ("K", 1.6, 1.0),
        ("P", 2.4, 1.0),
        ("AQ", 3.27, 1.0),
    ]
    .into_iter()
    .map(|(id, m, s)| DeviceProfile::scaled(id, m, DEFAULT_DISPERSION, s))
    .collect()
}

/// One step of the piecewise-constant utilization target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuStep {
    pub duration_s: f64,
    pub cu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundTraffic {
    pub min_bytes: u32,
    pub max_bytes: u32,
    pub stations: u32,
}

impl Default for BackgroundTraffic {
    fn default() -> Self {
        BackgroundTraffic {
            min_bytes: 200,
            max_bytes: 1500,
            stations: 3,
        }
    }
}

fn default_probe_period() -> f64 {
    1.0
}
fn default_phy_rate() -> f64 {
    24.0
}
fn default_idle_slot() -> u64 {
    100
}
fn default_max_backoff() -> u64 {
    1_000
}
fn default_max_contention() -> u64 {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub devices: Vec<DeviceProfile>,
    pub duration_s: f64,
    #[serde(default = "default_probe_period")]
    pub probe_period_s: f64,
    pub target_cu: Vec<CuStep>,
    #[serde(default = "default_phy_rate")]
    pub phy_rate_mbps: f64,
    #[serde(default)]
    pub background: BackgroundTraffic,
    /// Idle gap a device needs before its response can go out.
    #[serde(default = "default_idle_slot")]
    pub idle_slot_us: u64,
    /// Upper bound of the uniform random backoff.
    #[serde(default = "default_max_backoff")]
    pub max_backoff_us: u64,
    /// Busy time a device will sit through before giving up and sending.
    #[serde(default = "default_max_contention")]
    pub max_contention_us: u64,
    /// Probability a device never answers a probe.
    #[serde(default)]
    pub response_loss: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Default devices at a constant target utilization.
    pub fn constant(cu: f64, duration_s: f64, seed: u64) -> Self {
        SimConfig {
            devices: default_devices(),
            duration_s,
            probe_period_s: default_probe_period(),
            target_cu: vec![CuStep { duration_s, cu }],
            phy_rate_mbps: default_phy_rate(),
            background: BackgroundTraffic::default(),
            idle_slot_us: default_idle_slot(),
            max_backoff_us: default_max_backoff(),
            max_contention_us: default_max_contention(),
            response_loss: 0.0,
            seed,
        }
    }

    /// Default devices under a staircase from `from` to `to` in `steps` equal steps.
    pub fn staircase(from: f64, to: f64, steps: usize, duration_s: f64, seed: u64) -> Self {
        let steps = steps.max(1);
        let per = duration_s / steps as f64;
        let target_cu = (0..steps)
            .map(|i| {
                let frac = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                CuStep {
                    duration_s: per,
                    cu: from + (to - from) * frac,
                }
            })
            .collect();
        SimConfig {
            target_cu,
            ..Self::constant(from, duration_s, seed)
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.devices.is_empty() {
            return config_err("device list is empty");
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.devices {
            if !seen.insert(d.device_id.as_str()) {
                return config_err(format!("duplicate device id {}", d.device_id));
            }
            if d.device_id == AP_ID || d.device_id.starts_with("bg") {
                return config_err(format!("device id {} collides with a reserved endpoint", d.device_id));
            }
            for k in ProbeKind::ALL {
                match d.base_latency_ms.get(&k) {
                    None => return config_err(format!("device {} lacks a {k} latency", d.device_id)),
                    Some(l) if !(l.median_ms > 0.0) || !(l.dispersion >= 0.0) => {
                        return config_err(format!("device {} has a bad {k} latency", d.device_id))
                    }
                    _ => {}
                }
            }
            if !(d.contention_sensitivity >= 0.0) {
                return config_err(format!("device {} has negative contention sensitivity", d.device_id));
            }
        }
        if !(self.duration_s > 0.0 && self.probe_period_s > 0.0 && self.phy_rate_mbps > 0.0) {
            return config_err("duration, probe period and phy rate must be positive");
        }
        if self.target_cu.iter().any(|s| !(0.0..=1.0).contains(&s.cu) || !(s.duration_s > 0.0)) {
            return config_err("target_cu steps need cu in [0,1] and positive duration");
        }
        let covered: f64 = self.target_cu.iter().map(|s| s.duration_s).sum();
        if covered + 1e-9 < self.duration_s {
            return config_err(format!(
                "CU schedule covers {covered} s, shorter than duration {} s",
                self.duration_s
            ));
        }
        let bg = &self.background;
        if bg.min_bytes == 0 || bg.min_bytes > bg.max_bytes || bg.stations == 0 {
            return config_err("background sizes must satisfy 0 < min <= max with >= 1 station");
        }
        if !(0.0..1.0).contains(&self.response_loss) {
            return config_err("response_loss must be in [0,1)");
        }
        let slot = self.probe_slot_us();
        let longest = self.airtime_us(TCP_FRAME_OVERHEAD + 1400);
        if slot <= longest {
            return config_err(format!(
                "probe period too short: {slot} us between probes but a probe needs {longest} us"
            ));
        }
        Ok(())
    }

    fn airtime_us(&self, bytes: u32) -> u64 {
        PREAMBLE_US + (bytes as f64 * 8.0 / self.phy_rate_mbps).ceil() as u64
    }

    fn probe_slot_us(&self) -> u64 {
        (self.probe_period_s * 1e6 / (4 * self.devices.len()) as f64) as u64
    }

    fn duration_us(&self) -> u64 {
        (self.duration_s * 1e6).round() as u64
    }

    /// Target utilization at `t_us`; the last step extends past its end.
    pub fn target_at(&self, t_us: u64) -> f64 {
        let mut edge = 0.0;
        for s in &self.target_cu {
            edge += s.duration_s * 1e6;
            if (t_us as f64) < edge {
                return s.cu;
            }
        }
        self.target_cu.last().map_or(0.0, |s| s.cu)
    }

    fn step_end_us(&self, t_us: u64) -> u64 {
        let mut edge = 0.0;
        for s in &self.target_cu {
            edge += s.duration_s * 1e6;
            if (t_us as f64) < edge {
                return edge.ceil() as u64;
            }
        }
        u64::MAX
    }
}

pub fn probe_frame_bytes(kind: ProbeKind) -> u32 {
    let overhead = match kind {
        ProbeKind::TcpLo | ProbeKind::TcpH => TCP_FRAME_OVERHEAD,
        ProbeKind::UdpLo | ProbeKind::UdpH => UDP_FRAME_OVERHEAD,
    };
    overhead + kind.payload_bytes()
}

pub fn response_frame_bytes(kind: ProbeKind) -> u32 {
    match kind.response_kind() {
        PacketKind::RespTcpRst => TCP_FRAME_OVERHEAD,
        _ => ICMP_UNREACH_FRAME,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruePair {
    /// Index into the sorted trace records.
    pub probe_index: usize,
    pub response_index: usize,
    pub device_id: String,
    pub probe_kind: ProbeKind,
    pub latency_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pairs: Vec<TruePair>,
    pub window_us: u64,
    pub realized_cu: Vec<f64>,
    /// Probes the devices never answered, by trace index.
    pub lost_probes: Vec<usize>,
}

impl GroundTruth {
    pub fn write_json(&self, path: &Path) -> Result<(), SimError> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_json(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Background frames, serialized on the medium (never overlapping each
/// other), with busy fraction tracking the schedule.
fn background_frames(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<PacketRecord> {
    let bg = cfg.background;
    let mean_bytes = (bg.min_bytes + bg.max_bytes) as f64 / 2.0;
    let mean_air = PREAMBLE_US as f64 + mean_bytes * 8.0 / cfg.phy_rate_mbps;
    let end = cfg.duration_us();
    let mut out = Vec::new();
    let mut t = 0u64;
    while t < end {
        let cu = cfg.target_at(t);
        if cu <= 0.0 {
            t = cfg.step_end_us(t);
            continue;
        }
        if cu < 1.0 {
            let mean_gap = mean_air * (1.0 - cu) / cu;
            let gap = Exp::new(1.0 / mean_gap).expect("positive rate").sample(rng);
            let next = t + gap.round() as u64;
            // a gap crossing into a new step is redrawn at the new rate
            let step_end = cfg.step_end_us(t);
            if next >= step_end {
                t = step_end;
                continue;
            }
            t = next;
        }
        if t >= end {
            break;
        }
        let bytes = rng.random_range(bg.min_bytes..=bg.max_bytes);
        let station = rng.random_range(0..bg.stations);
        let air = cfg.airtime_us(bytes);
        out.push(PacketRecord {
            start_us: t,
            end_us: t + air,
            kind: PacketKind::Background,
            src: format!("bg{station}"),
            dst: AP_ID.to_string(),
            size_bytes: bytes,
            match_key: None,
        });
        t += air;
    }
    out
}

/// Busy airtime a device sits through from `from_us` until it finds an idle
/// gap of `idle_slot_us`, capped at `cap_us`.
fn contention_busy_us(background: &[PacketRecord], from_us: u64, idle_slot_us: u64, cap_us: u64) -> u64 {
    let mut idx = background.partition_point(|r| r.end_us <= from_us);
    let mut cur = from_us;
    let mut busy = 0u64;
    while let Some(f) = background.get(idx) {
        if f.start_us >= cur + idle_slot_us {
            break;
        }
        busy += f.end_us - f.start_us.max(cur);
        cur = f.end_us;
        idx += 1;
        if busy >= cap_us {
            return cap_us;
        }
    }
    busy
}

struct PendingPair {
    key: String,
    device: usize,
    kind: ProbeKind,
    latency_us: u64,
}

/// Runs one deterministic simulation.
pub fn simulate(cfg: &SimConfig) -> Result<(Trace, GroundTruth), SimError> {
    cfg.validate()?;
    let mut bg_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    bg_rng.set_stream(1);
    let mut dev_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dev_rng.set_stream(2);

    let background = background_frames(cfg, &mut bg_rng);
    let end = cfg.duration_us();
    let slot = cfg.probe_slot_us();
    let period_us = (cfg.probe_period_s * 1e6) as u64;
    let n_dev = cfg.devices.len();

    let gen: Vec<BTreeMap<ProbeKind, LogNormal<f64>>> = cfg
        .devices
        .iter()
        .map(|d| {
            d.base_latency_ms
                .iter()
                .map(|(k, l)| {
                    let mu = (l.median_ms * 1000.0).ln();
                    (*k, LogNormal::new(mu, l.dispersion).expect("validated lognormal"))
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut pending = Vec::new();
    let mut lost_keys = Vec::new();
    let mut last_response_end = vec![0u64; n_dev];
    let mut seq = 0u64;
    let mut round_start = 0u64;
    'rounds: while round_start < end {
        for (k_idx, kind) in ProbeKind::ALL.into_iter().enumerate() {
            for (d_idx, dev) in cfg.devices.iter().enumerate() {
                let t0 = round_start + (k_idx * n_dev + d_idx) as u64 * slot;
                let probe_air = cfg.airtime_us(probe_frame_bytes(kind));
                if t0 + probe_air > end {
                    break 'rounds;
                }
                let key = format!("{}-{seq}", dev.device_id);
                seq += 1;
                let t4 = t0 + probe_air;
                records.push(PacketRecord {
                    start_us: t0,
                    end_us: t4,
                    kind: kind.packet_kind(),
                    src: AP_ID.to_string(),
                    dst: dev.device_id.clone(),
                    size_bytes: probe_frame_bytes(kind),
                    match_key: Some(key.clone()),
                });

                let generation = gen[d_idx][&kind].sample(&mut dev_rng).round().max(1.0) as u64;
                let backoff = dev_rng.random_range(0..=cfg.max_backoff_us);
                let lost = cfg.response_loss > 0.0 && dev_rng.random::<f64>() < cfg.response_loss;
                if lost {
                    lost_keys.push(key);
                    continue;
                }
                let t5 = t4 + generation;
                let busy = contention_busy_us(&background, t5, cfg.idle_slot_us, cfg.max_contention_us);
                let contention = (dev.contention_sensitivity * busy as f64).round() as u64 + backoff;
                let t6 = (t5 + contention).max(last_response_end[d_idx]);
                let resp_air = cfg.airtime_us(response_frame_bytes(kind));
                last_response_end[d_idx] = t6 + resp_air;
                records.push(PacketRecord {
                    start_us: t6,
                    end_us: t6 + resp_air,
                    kind: kind.response_kind(),
                    src: dev.device_id.clone(),
                    dst: AP_ID.to_string(),
                    size_bytes: response_frame_bytes(kind),
                    match_key: Some(key.clone()),
                });
                pending.push(PendingPair {
                    key,
                    device: d_idx,
                    kind,
                    latency_us: t6 - t4,
                });
            }
        }
        round_start += period_us;
    }

    records.extend(background);
    let trace = Trace::new(SIM_EPOCH, records)?;
    let mut probe_idx: HashMap<&str, usize> = HashMap::new();
    let mut resp_idx: HashMap<&str, usize> = HashMap::new();
    for (i, r) in trace.records().iter().enumerate() {
        if let Some(k) = r.match_key.as_deref() {
            if r.kind.is_probe() {
                probe_idx.insert(k, i);
            } else {
                resp_idx.insert(k, i);
            }
        }
    }
    let mut pairs: Vec<TruePair> = pending
        .iter()
        .map(|p| TruePair {
            probe_index: probe_idx[p.key.as_str()],
            response_index: resp_idx[p.key.as_str()],
            device_id: cfg.devices[p.device].device_id.clone(),
            probe_kind: p.kind,
            latency_us: p.latency_us,
        })
        .collect();
    pairs.sort_by_key(|p| p.probe_index);
    let mut lost_probes: Vec<usize> = lost_keys.iter().map(|k| probe_idx[k.as_str()]).collect();
    lost_probes.sort_unstable();
    let cu = compute_cu_series(&trace, DEFAULT_CU_WINDOW_US)?;
    Ok((
        trace,
        GroundTruth {
            pairs,
            window_us: cu.window_us,
            realized_cu: cu.values,
            lost_probes,
        },
    ))
}

/// One run per utilization level, each at a constant target with a derived seed.
pub fn sweep_cu(cfg: &SimConfig, cu_levels: &[f64], per_level_duration_s: f64) -> Result<Vec<(Trace, GroundTruth)>, SimError> {
    let configs = sweep_configs(cfg, cu_levels, per_level_duration_s)?;
    exec::map(&configs, simulate).into_iter().collect()
}

/// Per-level configs used by [`sweep_cu`]; exposed so callers can stream
/// levels without holding every trace at once.
pub fn sweep_configs(cfg: &SimConfig, cu_levels: &[f64], per_level_duration_s: f64) -> Result<Vec<SimConfig>, SimError> {
    if cu_levels.is_empty() {
        return config_err("cu_levels is empty");
    }
    if !(per_level_duration_s > 0.0) {
        return config_err("per-level duration must be positive");
    }
    cu_levels
        .iter()
        .enumerate()
        .map(|(i, &cu)| {
            let c = SimConfig {
                duration_s: per_level_duration_s,
                target_cu: vec![CuStep {
                    duration_s: per_level_duration_s,
                    cu,
                }],
                seed: level_seed(cfg.seed, i),
                ..cfg.clone()
            };
            c.validate()?;
            Ok(c)
        })
        .collect()
}

pub fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ (level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
