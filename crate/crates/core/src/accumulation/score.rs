use serde::{Deserialize, Serialize};

use super::context::{AccumulationContext, ContextPacket};
use super::weight::{WeightFamily, WeightFunction};
use super::AccumulationError;

/// Inter-packet gaps are clamped to one microsecond.
pub const MIN_GAP_MS: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_index: usize,
    pub score: f64,
    pub n: usize,
    pub family: WeightFamily,
}

/// Single pass over the merged context.
///
/// The first packet contributes `d * s * f(mid)`; every later packet
/// `d * (s / v) * f(mid)` where `v` is its gap to the previous packet and
/// `s` the curve's standard deviation.
pub fn accumulation_score(ctx: &AccumulationContext, w: &WeightFunction) -> Result<f64, AccumulationError> {
    w.validate()?;
    Ok(score_packets(ctx.packets.iter(), ctx.response_mid_ms, w))
}

pub(crate) fn score_packets<'a>(
    packets: impl Iterator<Item = &'a ContextPacket>,
    response_mid_ms: f64,
    w: &WeightFunction,
) -> f64 {
    let spread = w.spread_ms();
    let mut total = 0.0;
    let mut prev_end: Option<f64> = None;
    for p in packets {
        let weight = w.eval(p.midpoint_ms(), response_mid_ms);
        let norm = match prev_end {
            None => spread,
            Some(e) => spread / (p.start_ms - e).max(MIN_GAP_MS),
        };
        total += p.duration_ms() * norm * weight;
        prev_end = Some(p.end_ms);
    }
    total
}

/// Score over the context with successors restricted to `window_ms` past the
/// response end; used when one wide context serves several curves.
pub fn accumulation_score_within(ctx: &AccumulationContext, w: &WeightFunction, window_ms: f64) -> f64 {
    let limit = ctx.t7_ms + window_ms;
    score_packets(
        ctx.packets
            .iter()
            .filter(|p| !p.successor || p.midpoint_ms() <= limit),
        ctx.response_mid_ms,
        w,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(start: f64, end: f64, successor: bool) -> ContextPacket {
        ContextPacket {
            record_index: 0,
            start_ms: start,
            end_ms: end,
            successor,
        }
    }

    fn ctx(packets: Vec<ContextPacket>) -> AccumulationContext {
        AccumulationContext {
            t4_ms: 7.0,
            t6_ms: 9.9,
            t7_ms: 10.1,
            response_mid_ms: 10.0,
            successor_window_ms: 3.0,
            packets,
        }
    }

    #[test]
    fn empty_context_scores_zero() {
        let w = WeightFunction::bell(1.0).unwrap();
        assert_eq!(accumulation_score(&ctx(vec![]), &w).unwrap(), 0.0);
    }

    #[test]
    fn single_and_pair_worked_values() {
        let w = WeightFunction::bell(1.0).unwrap();
        let one = accumulation_score(&ctx(vec![pkt(8.0, 8.5, false)]), &w).unwrap();
        assert!((one - 0.0431386594).abs() < 1e-9);
        let two = accumulation_score(&ctx(vec![pkt(8.0, 8.5, false), pkt(9.0, 9.2, false)]), &w).unwrap();
        assert!((two - 0.1495727594).abs() < 1e-9);
    }

    #[test]
    fn back_to_back_gap_is_clamped() {
        let w = WeightFunction::bell(1.0).unwrap();
        let s = accumulation_score(&ctx(vec![pkt(9.0, 9.5, false), pkt(9.5, 9.7, false)]), &w).unwrap();
        assert!(s.is_finite());
        let second = 0.2 * (1.0 / MIN_GAP_MS) * w.eval(9.6, 10.0);
        assert!(s > second);
    }

    #[test]
    fn window_restriction_drops_far_successors() {
        let w = WeightFunction::bell(1.0).unwrap();
        let c = ctx(vec![pkt(8.0, 8.5, false), pkt(10.5, 10.7, true), pkt(12.5, 12.7, true)]);
        let narrow = accumulation_score_within(&c, &w, 1.0);
        let direct = accumulation_score(&c.narrowed(1.0), &w).unwrap();
        assert_eq!(narrow, direct);
        assert!(narrow < accumulation_score(&c, &w).unwrap());
    }

    #[test]
    fn invalid_weight_rejected() {
        let bad = WeightFunction::Gamma { alpha: 0.5, beta_ms: 1.0 };
        assert!(accumulation_score(&ctx(vec![]), &bad).is_err());
    }
}
