//! Probe/response matching and device-latency extraction from a sniffer-side
//! trace.
//!
//! Latency is `t6 - t4`: the probe is fully received at `t4 = probe.end_us`
//! and the response goes on air at `t6 = response.start_us`. A sniffer sees
//! `t7 - t4` directly and subtracts the response airtime `t7 - t6`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::trace::{PacketRecord, ProbeKind, Trace};

pub const DEFAULT_TIMEOUT_MS: f64 = 1000.0;

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("pair invariant violated: t6 ({t6_us}) must be after t4 ({t4_us})")]
    Invariant { t4_us: u64, t6_us: u64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("pairs row {row}: {msg}")]
    BadRow { row: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResponsePair {
    pub probe_index: usize,
    pub response_index: usize,
    pub device_id: String,
    pub probe_kind: ProbeKind,
    pub probe_start_us: u64,
    pub t4_us: u64,
    pub t6_us: u64,
    pub t7_us: u64,
}

impl ProbeResponsePair {
    pub fn from_records(probe_index: usize, probe: &PacketRecord, response_index: usize, response: &PacketRecord) -> Option<Self> {
        Some(ProbeResponsePair {
            probe_index,
            response_index,
            device_id: probe.dst.clone(),
            probe_kind: probe.kind.probe_kind()?,
            probe_start_us: probe.start_us,
            t4_us: probe.end_us,
            t6_us: response.start_us,
            t7_us: response.end_us,
        })
    }

    pub fn latency_us(&self) -> u64 {
        self.t6_us.saturating_sub(self.t4_us)
    }

    pub fn latency_ms(&self) -> f64 {
        self.latency_us() as f64 / 1000.0
    }
}

pub fn device_latency(pair: &ProbeResponsePair) -> Result<f64, ExtractError> {
    let (t4, t6, t7) = (pair.t4_us, pair.t6_us, pair.t7_us);
    if t6 <= t4 || t7 < t6 {
        return Err(ExtractError::Invariant { t4_us: t4, t6_us: t6 });
    }
    let sniffed = t7 - t4;
    let response_airtime = t7 - t6;
    Ok((sniffed - response_airtime) as f64 / 1000.0)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<ProbeResponsePair>,
    /// Trace indices of probes that never got an acceptable response.
    pub unmatched: Vec<usize>,
}

/// Matches each response to the earliest prior unmatched probe with the same
/// match key, a compatible kind, reversed endpoints, and `t6` within
/// `timeout_ms` of `t4`. No record is used twice.
pub fn pair_probes(trace: &Trace, timeout_ms: f64) -> Pairing {
    let timeout_us = (timeout_ms * 1000.0).round() as u64;
    let records = trace.records();
    let mut open: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut matched = vec![false; records.len()];
    let mut pairs = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let Some(key) = r.match_key.as_deref() else {
            continue;
        };
        if r.kind.is_probe() {
            open.entry(key).or_default().push(i);
            continue;
        }
        if !r.kind.is_response() {
            continue;
        }
        let Some(candidates) = open.get_mut(key) else {
            continue;
        };
        let hit = candidates.iter().position(|&p| {
            let probe = &records[p];
            probe.kind.probe_kind().map(ProbeKind::response_kind) == Some(r.kind)
                && probe.src == r.dst
                && probe.dst == r.src
                && r.start_us > probe.end_us
                && r.start_us - probe.end_us <= timeout_us
        });
        if let Some(pos) = hit {
            let p = candidates.remove(pos);
            matched[p] = true;
            pairs.extend(ProbeResponsePair::from_records(p, &records[p], i, r));
        }
    }
    pairs.sort_by_key(|p| p.probe_index);
    let unmatched = records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.kind.is_probe() && !matched[*i])
        .map(|(i, _)| i)
        .collect();
    Pairing { pairs, unmatched }
}

/// Four pairs, one per probe kind, measured for one device inside one probe
/// period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeRound {
    pub device_id: String,
    pub round_index: u64,
    pub window_start_us: u64,
    pub window_end_us: u64,
    /// Indexed by [`ProbeKind::index`].
    pub pairs: [ProbeResponsePair; 4],
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundGrouping {
    pub rounds: Vec<ProbeRound>,
    pub dropped: usize,
}

/// Buckets each device's pairs into probe-period windows aligned to the trace
/// epoch and keeps the windows holding exactly one pair of every kind.
/// Output is ordered by (round index, device id).
pub fn group_rounds(pairs: &[ProbeResponsePair], probe_period_s: f64) -> RoundGrouping {
    let period_us = ((probe_period_s * 1e6).round() as u64).max(1);
    let mut windows: BTreeMap<(u64, &str), Vec<&ProbeResponsePair>> = BTreeMap::new();
    for p in pairs {
        windows
            .entry((p.probe_start_us / period_us, p.device_id.as_str()))
            .or_default()
            .push(p);
    }
    let mut out = RoundGrouping::default();
    for ((w, device), members) in windows {
        let mut slots: [Option<&ProbeResponsePair>; 4] = [None; 4];
        let mut complete = members.len() == 4;
        for m in &members {
            let slot = &mut slots[m.probe_kind.index()];
            if slot.is_some() {
                complete = false;
            }
            *slot = Some(m);
        }
        if !complete || slots.iter().any(Option::is_none) {
            out.dropped += 1;
            continue;
        }
        out.rounds.push(ProbeRound {
            device_id: device.to_string(),
            round_index: w,
            window_start_us: w * period_us,
            window_end_us: (w + 1) * period_us,
            pairs: slots.map(|s| s.expect("checked complete").clone()),
        });
    }
    out
}

pub const PAIRS_CSV_HEADER: &str = "device,probe_kind,t4_us,t6_us,t7_us,latency_ms";

pub fn write_pairs_csv(pairs: &[ProbeResponsePair], path: &Path) -> Result<(), ExtractError> {
    let io_err = |source| ExtractError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(out, "{PAIRS_CSV_HEADER}").map_err(io_err)?;
    for p in pairs {
        writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            p.device_id,
            p.probe_kind,
            p.t4_us,
            p.t6_us,
            p.t7_us,
            p.latency_ms()
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Deserialize)]
struct PairRow {
    device: String,
    probe_kind: String,
    t4_us: u64,
    t6_us: u64,
    t7_us: u64,
}

/// Reads a pairs CSV and re-attaches each row to its probe and response
/// records in `trace` by timestamps and endpoints.
pub fn read_pairs_csv(path: &Path, trace: &Trace) -> Result<Vec<ProbeResponsePair>, ExtractError> {
    let mut reader = csv::Reader::from_path(path)?;
    let records = trace.records();
    let mut by_end: HashMap<(u64, &str), Vec<usize>> = HashMap::new();
    let mut by_start: HashMap<(u64, &str), Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.kind.is_probe() {
            by_end.entry((r.end_us, r.dst.as_str())).or_default().push(i);
        } else if r.kind.is_response() {
            by_start.entry((r.start_us, r.src.as_str())).or_default().push(i);
        }
    }
    let mut out = Vec::new();
    for (row_idx, row) in reader.deserialize::<PairRow>().enumerate() {
        let row = row?;
        let bad = |msg: &str| ExtractError::BadRow {
            row: row_idx + 1,
            msg: msg.to_string(),
        };
        let kind = ProbeKind::parse(&row.probe_kind).ok_or_else(|| bad("unknown probe kind"))?;
        let probe = by_end
            .get(&(row.t4_us, row.device.as_str()))
            .and_then(|c| c.iter().copied().find(|&i| records[i].kind == kind.packet_kind()))
            .ok_or_else(|| bad("no probe record ends at t4"))?;
        let response = by_start
            .get(&(row.t6_us, row.device.as_str()))
            .and_then(|c| c.iter().copied().find(|&i| records[i].end_us == row.t7_us))
            .ok_or_else(|| bad("no response record spans t6..t7"))?;
        out.push(
            ProbeResponsePair::from_records(probe, &records[probe], response, &records[response])
                .ok_or_else(|| bad("record is not a probe"))?,
        );
    }
    Ok(out)
}
