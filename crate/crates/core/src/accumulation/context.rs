use crate::extractor::ProbeResponsePair;
use crate::trace::{PacketRecord, Trace};

/// A neighbouring frame, in milliseconds on the trace clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextPacket {
    pub record_index: usize,
    pub start_ms: f64,
    pub end_ms: f64,
    pub successor: bool,
}

impl ContextPacket {
    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }

    pub fn midpoint_ms(&self) -> f64 {
        self.start_ms + (self.end_ms - self.start_ms) / 2.0
    }
}

/// Predecessor and successor frames around one exchange, merged in start
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulationContext {
    pub t4_ms: f64,
    pub t6_ms: f64,
    pub t7_ms: f64,
    pub response_mid_ms: f64,
    pub successor_window_ms: f64,
    pub packets: Vec<ContextPacket>,
}

impl AccumulationContext {
    pub fn n(&self) -> usize {
        self.packets.len()
    }

    pub fn predecessors(&self) -> impl Iterator<Item = &ContextPacket> {
        self.packets.iter().filter(|p| !p.successor)
    }

    pub fn successors(&self) -> impl Iterator<Item = &ContextPacket> {
        self.packets.iter().filter(|p| p.successor)
    }

    /// Same exchange with the successor window cut down to `window_ms`.
    pub fn narrowed(&self, window_ms: f64) -> AccumulationContext {
        let limit = self.t7_ms + window_ms;
        AccumulationContext {
            successor_window_ms: window_ms.min(self.successor_window_ms),
            packets: self
                .packets
                .iter()
                .filter(|p| !p.successor || p.midpoint_ms() <= limit)
                .copied()
                .collect(),
            ..*self
        }
    }

    /// Shifts every timestamp by `delta_ms`.
    pub fn translated(&self, delta_ms: f64) -> AccumulationContext {
        AccumulationContext {
            t4_ms: self.t4_ms + delta_ms,
            t6_ms: self.t6_ms + delta_ms,
            t7_ms: self.t7_ms + delta_ms,
            response_mid_ms: self.response_mid_ms + delta_ms,
            successor_window_ms: self.successor_window_ms,
            packets: self
                .packets
                .iter()
                .map(|p| ContextPacket {
                    start_ms: p.start_ms + delta_ms,
                    end_ms: p.end_ms + delta_ms,
                    ..*p
                })
                .collect(),
        }
    }
}

/// Reusable lookup over one trace. Holds the longest frame duration so the
/// backward scan for predecessors is bounded.
pub struct ContextCollector<'a> {
    trace: &'a Trace,
    max_duration_us: u64,
}

fn ms(us: u64) -> f64 {
    us as f64 / 1000.0
}

impl<'a> ContextCollector<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        let max_duration_us = trace
            .records()
            .iter()
            .map(PacketRecord::duration_us)
            .max()
            .unwrap_or(0);
        ContextCollector {
            trace,
            max_duration_us,
        }
    }

    /// Predecessors have their midpoint strictly inside `(t4, t6)`; successors
    /// inside `(t7, t7 + window]`. The probe and response never qualify.
    pub fn collect(&self, pair: &ProbeResponsePair, successor_window_ms: f64) -> AccumulationContext {
        let records = self.trace.records();
        let window_us = (successor_window_ms * 1000.0).round().max(0.0) as u64;
        let (t4, t6, t7) = (pair.t4_us, pair.t6_us, pair.t7_us);
        let succ_limit_x2 = 2 * (t7 + window_us);
        // a frame with midpoint > t4 must start after t4 - max_duration
        let first = self.trace.lower_bound(t4.saturating_sub(self.max_duration_us));
        let mut packets = Vec::new();
        for (i, r) in records.iter().enumerate().skip(first) {
            if r.start_us > t7 + window_us {
                break;
            }
            if i == pair.probe_index || i == pair.response_index {
                continue;
            }
            let m2 = r.midpoint_x2();
            let successor = if m2 > 2 * t4 && m2 < 2 * t6 {
                false
            } else if m2 > 2 * t7 && m2 <= succ_limit_x2 {
                true
            } else {
                continue;
            };
            packets.push(ContextPacket {
                record_index: i,
                start_ms: ms(r.start_us),
                end_ms: ms(r.end_us),
                successor,
            });
        }
        AccumulationContext {
            t4_ms: ms(t4),
            t6_ms: ms(t6),
            t7_ms: ms(t7),
            response_mid_ms: (t6 + t7) as f64 / 2000.0,
            successor_window_ms,
            packets,
        }
    }
}

pub fn collect_context(trace: &Trace, pair: &ProbeResponsePair, successor_window_ms: f64) -> AccumulationContext {
    ContextCollector::new(trace).collect(pair, successor_window_ms)
}
