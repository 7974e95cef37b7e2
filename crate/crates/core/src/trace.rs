//! Packet-trace data model, the line-delimited JSON trace format, and
//! windowed channel-utilization measurement.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const TRACE_FORMAT: &str = "latentid-trace";
pub const TRACE_VERSION: u32 = 1;
/// Measurement interval used by the channel-utilization series.
pub const DEFAULT_CU_WINDOW_US: u64 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("records {first} and {second} from source {src} overlap in time")]
    SourceOverlap {
        src: String,
        first: usize,
        second: usize,
    },
    #[error("window_us must be positive")]
    ZeroWindow,
}

/// The four probe flavours, in feature-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    TcpLo,
    TcpH,
    UdpLo,
    UdpH,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 4] = [
        ProbeKind::TcpLo,
        ProbeKind::TcpH,
        ProbeKind::UdpLo,
        ProbeKind::UdpH,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::TcpLo => "tcp_lo",
            ProbeKind::TcpH => "tcp_h",
            ProbeKind::UdpLo => "udp_lo",
            ProbeKind::UdpH => "udp_h",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn packet_kind(self) -> PacketKind {
        match self {
            ProbeKind::TcpLo => PacketKind::ProbeTcpLo,
            ProbeKind::TcpH => PacketKind::ProbeTcpH,
            ProbeKind::UdpLo => PacketKind::ProbeUdpLo,
            ProbeKind::UdpH => PacketKind::ProbeUdpH,
        }
    }

    /// Response a closed port sends back: TCP-RST for SYNs, ICMP port
    /// unreachable for UDP.
    pub fn response_kind(self) -> PacketKind {
        match self {
            ProbeKind::TcpLo | ProbeKind::TcpH => PacketKind::RespTcpRst,
            ProbeKind::UdpLo | ProbeKind::UdpH => PacketKind::RespIcmpUnreach,
        }
    }

    pub fn payload_bytes(self) -> u32 {
        match self {
            ProbeKind::TcpLo | ProbeKind::UdpLo => 0,
            ProbeKind::TcpH | ProbeKind::UdpH => 1400,
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    ProbeTcpLo,
    ProbeTcpH,
    ProbeUdpLo,
    ProbeUdpH,
    RespTcpRst,
    RespIcmpUnreach,
    Background,
}

impl PacketKind {
    pub fn probe_kind(self) -> Option<ProbeKind> {
        match self {
            PacketKind::ProbeTcpLo => Some(ProbeKind::TcpLo),
            PacketKind::ProbeTcpH => Some(ProbeKind::TcpH),
            PacketKind::ProbeUdpLo => Some(ProbeKind::UdpLo),
            PacketKind::ProbeUdpH => Some(ProbeKind::UdpH),
            _ => None,
        }
    }

    pub fn is_probe(self) -> bool {
        self.probe_kind().is_some()
    }

    pub fn is_response(self) -> bool {
        matches!(self, PacketKind::RespTcpRst | PacketKind::RespIcmpUnreach)
    }
}

/// One frame seen on the channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketRecord {
    pub start_us: u64,
    pub end_us: u64,
    pub kind: PacketKind,
    pub src: String,
    pub dst: String,
    pub size_bytes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_key: Option<String>,
}

impl PacketRecord {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }

    /// Midpoint in microseconds, kept in half-µs resolution as a float.
    pub fn midpoint_us(&self) -> f64 {
        (self.start_us + self.end_us) as f64 / 2.0
    }

    /// Twice the midpoint, exact in integers.
    pub fn midpoint_x2(&self) -> u64 {
        self.start_us + self.end_us
    }

    fn check(&self) -> Result<(), String> {
        if self.end_us <= self.start_us {
            return Err(format!(
                "end_us ({}) must exceed start_us ({})",
                self.end_us, self.start_us
            ));
        }
        if self.kind.is_probe() && self.match_key.is_none() {
            return Err(format!("{:?} record is missing match_key", self.kind));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TraceHeader {
    format: String,
    version: u32,
    epoch: String,
}

/// A time-ordered capture. Construct through [`Trace::new`] so the ordering
/// and per-source invariants hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub epoch: String,
    records: Vec<PacketRecord>,
}

impl Trace {
    /// Sorts by (start, end, input index) and validates every record.
    pub fn new(epoch: impl Into<String>, mut records: Vec<PacketRecord>) -> Result<Self, TraceError> {
        for (i, r) in records.iter().enumerate() {
            r.check().map_err(|msg| TraceError::Schema { line: i + 1, msg })?;
        }
        records.sort_by_key(|r| (r.start_us, r.end_us));
        let trace = Trace {
            epoch: epoch.into(),
            records,
        };
        trace.check_sources()?;
        Ok(trace)
    }

    pub fn empty(epoch: impl Into<String>) -> Self {
        Trace {
            epoch: epoch.into(),
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Latest end timestamp, or 0 for an empty trace.
    pub fn end_us(&self) -> u64 {
        self.records.iter().map(|r| r.end_us).max().unwrap_or(0)
    }

    fn check_sources(&self) -> Result<(), TraceError> {
        let mut last: HashMap<&str, usize> = HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if let Some(&j) = last.get(r.src.as_str()) {
                if self.records[j].end_us > r.start_us {
                    return Err(TraceError::SourceOverlap {
                        src: r.src.clone(),
                        first: j,
                        second: i,
                    });
                }
            }
            last.insert(&r.src, i);
        }
        Ok(())
    }

    /// Index of the first record whose start is >= `t_us`.
    pub fn lower_bound(&self, t_us: u64) -> usize {
        self.records.partition_point(|r| r.start_us < t_us)
    }
}

pub fn read_trace(path: &Path) -> Result<Trace, TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let reader = BufReader::new(file);
    let mut epoch = String::new();
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 {
            let header: TraceHeader = serde_json::from_str(&line).map_err(|e| TraceError::Schema {
                line: 1,
                msg: format!("bad header: {e}"),
            })?;
            if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
                return Err(TraceError::Schema {
                    line: 1,
                    msg: format!(
                        "unsupported trace format {}/{}",
                        header.format, header.version
                    ),
                });
            }
            epoch = header.epoch;
            continue;
        }
        let rec: PacketRecord = serde_json::from_str(&line).map_err(|e| TraceError::Schema {
            line: lineno,
            msg: e.to_string(),
        })?;
        rec.check()
            .map_err(|msg| TraceError::Schema { line: lineno, msg })?;
        records.push(rec);
    }
    Trace::new(epoch, records)
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let header = TraceHeader {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION,
        epoch: trace.epoch.clone(),
    };
    writeln!(out, "{}", to_line(&header)).map_err(io_err)?;
    for r in &trace.records {
        writeln!(out, "{}", to_line(r)).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn to_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("trace types always serialize")
}

/// Per-window channel utilization.
#[derive(Debug, Clone, PartialEq)]
pub struct CuSeries {
    pub window_us: u64,
    pub values: Vec<f64>,
}

impl CuSeries {
    /// Utilization of the window containing `t_us`; 0 past the end.
    pub fn at(&self, t_us: u64) -> f64 {
        self.values
            .get((t_us / self.window_us) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TraceError> {
        let io_err = |source| TraceError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        writeln!(out, "window_index,cu").map_err(io_err)?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Merged busy intervals `[start, end)` of all records, sorted and disjoint.
pub fn busy_intervals(records: &[PacketRecord]) -> Vec<(u64, u64)> {
    let mut spans: Vec<(u64, u64)> = records.iter().map(|r| (r.start_us, r.end_us)).collect();
    spans.sort_unstable();
    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

/// Fraction of each window during which at least one frame is on air.
/// Overlapping frames count once.
pub fn compute_cu_series(trace: &Trace, window_us: u64) -> Result<CuSeries, TraceError> {
    if window_us == 0 {
        return Err(TraceError::ZeroWindow);
    }
    let end = trace.end_us();
    let n_windows = end.div_ceil(window_us) as usize;
    let mut busy = vec![0u64; n_windows];
    for (s, e) in busy_intervals(&trace.records) {
        let mut t = s;
        while t < e {
            let w = t / window_us;
            let w_end = ((w + 1) * window_us).min(e);
            busy[w as usize] += w_end - t;
            t = w_end;
        }
    }
    Ok(CuSeries {
        window_us,
        values: busy
            .into_iter()
            .map(|b| b as f64 / window_us as f64)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(start: u64, end: u64, src: &str) -> PacketRecord {
        PacketRecord {
            start_us: start,
            end_us: end,
            kind: PacketKind::Background,
            src: src.into(),
            dst: "ap".into(),
            size_bytes: 100,
            match_key: None,
        }
    }

    #[test]
    fn half_window_busy() {
        let t = Trace::new("e", vec![rec(0, 5_000, "a")]).unwrap();
        let cu = compute_cu_series(&t, 10_000).unwrap();
        assert_eq!(cu.values, vec![0.5]);
    }

    #[test]
    fn overlapping_records_are_unioned() {
        let t = Trace::new("e", vec![rec(1_000, 6_000, "a"), rec(1_000, 6_000, "b"), rec(9_000, 10_000, "c")])
            .unwrap();
        let cu = compute_cu_series(&t, 10_000).unwrap();
        assert_eq!(cu.values, vec![0.6]);
    }

    #[test]
    fn saturated_window() {
        let t = Trace::new("e", vec![rec(0, 4_000, "a"), rec(4_000, 10_000, "b")]).unwrap();
        assert_eq!(compute_cu_series(&t, 10_000).unwrap().values, vec![1.0]);
    }

    #[test]
    fn frame_spanning_windows_is_split() {
        let t = Trace::new("e", vec![rec(8_000, 13_000, "a")]).unwrap();
        assert_eq!(compute_cu_series(&t, 10_000).unwrap().values, vec![0.2, 0.3]);
    }

    #[test]
    fn empty_trace_gives_empty_series() {
        let cu = compute_cu_series(&Trace::empty("e"), 10_000).unwrap();
        assert!(cu.values.is_empty());
        assert!(matches!(
            compute_cu_series(&Trace::empty("e"), 0),
            Err(TraceError::ZeroWindow)
        ));
    }

    #[test]
    fn records_are_sorted_on_construction() {
        let t = Trace::new("e", vec![rec(50, 60, "a"), rec(10, 30, "b"), rec(10, 20, "c")]).unwrap();
        let starts: Vec<_> = t.records().iter().map(|r| (r.start_us, r.end_us)).collect();
        assert_eq!(starts, vec![(10, 20), (10, 30), (50, 60)]);
    }

    #[test]
    fn same_source_overlap_rejected() {
        let err = Trace::new("e", vec![rec(0, 100, "a"), rec(50, 150, "a")]).unwrap_err();
        assert!(matches!(err, TraceError::SourceOverlap { .. }));
    }

    #[test]
    fn probe_requires_match_key() {
        let mut r = rec(0, 100, "ap");
        r.kind = PacketKind::ProbeTcpLo;
        assert!(matches!(Trace::new("e", vec![r]), Err(TraceError::Schema { .. })));
    }

    #[test]
    fn probe_kind_tables() {
        assert_eq!(ProbeKind::TcpH.response_kind(), PacketKind::RespTcpRst);
        assert_eq!(ProbeKind::UdpLo.response_kind(), PacketKind::RespIcmpUnreach);
        assert_eq!(ProbeKind::parse("udp_h"), Some(ProbeKind::UdpH));
        assert_eq!(ProbeKind::UdpH.packet_kind().probe_kind(), Some(ProbeKind::UdpH));
        assert_eq!(ProbeKind::TcpH.payload_bytes(), 1400);
    }
}
