mod common;

use latentid::trace::{busy_intervals, compute_cu_series, read_trace, write_trace, PacketKind, PacketRecord, Trace, TraceError};
use proptest::prelude::*;

fn frames() -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::vec((0u64..200_000, 1u64..5000).prop_map(|(s, d)| (s, s + d)), 0..60)
}

fn bg_trace(frames: &[(u64, u64)]) -> Trace {
    let records = frames
        .iter()
        .enumerate()
        .map(|(i, &(s, e))| common::record(s, e, PacketKind::Background, &format!("bg{i}"), "ap", None))
        .collect();
    Trace::new("t", records).unwrap()
}

proptest! {
    #[test]
    fn cu_integrates_to_busy_union(fr in frames(), window in 1_000u64..20_000) {
        let trace = bg_trace(&fr);
        let cu = compute_cu_series(&trace, window).unwrap();
        let busy: u64 = busy_intervals(trace.records()).iter().map(|(s, e)| e - s).sum();
        let integral: f64 = cu.values.iter().map(|v| v * window as f64).sum();
        prop_assert!((integral - busy as f64).abs() < 1e-6 * (busy as f64).max(1.0));
        prop_assert!(cu.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn cu_shifts_with_whole_windows(fr in frames(), k in 0u64..20) {
        let window = 10_000;
        let shifted: Vec<(u64, u64)> = fr.iter().map(|&(s, e)| (s + k * window, e + k * window)).collect();
        let a = compute_cu_series(&bg_trace(&fr), window).unwrap();
        let b = compute_cu_series(&bg_trace(&shifted), window).unwrap();
        if !fr.is_empty() {
            prop_assert!(b.values[..k as usize].iter().all(|&v| v == 0.0));
            prop_assert_eq!(&b.values[k as usize..], &a.values[..]);
        }
    }

    #[test]
    fn file_round_trip(fr in frames()) {
        let trace = bg_trace(&fr);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_trace(&trace, &p).unwrap();
        let back = read_trace(&p).unwrap();
        prop_assert_eq!(back.records(), trace.records());
        prop_assert_eq!(back.epoch, trace.epoch);
    }
}

#[test]
fn unknown_fields_and_bad_header_are_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.jsonl");
    std::fs::write(&p, "{\"format\":\"latentid-trace\",\"version\":1,\"epoch\":\"e\"}\n{\"start_us\":1,\"end_us\":2,\"kind\":\"background\",\"src\":\"a\",\"dst\":\"b\",\"size_bytes\":1,\"color\":3}\n").unwrap();
    assert!(matches!(read_trace(&p), Err(TraceError::Schema { line: 2, .. })));
    std::fs::write(&p, "{\"format\":\"pcap\"}\n").unwrap();
    assert!(matches!(read_trace(&p), Err(TraceError::Schema { line: 1, .. })));
}

#[test]
fn zero_window_rejected() {
    assert!(matches!(compute_cu_series(&bg_trace(&[(0, 10)]), 0), Err(TraceError::ZeroWindow)));
}

#[test]
fn end_before_start_rejected() {
    let r = PacketRecord {
        start_us: 10,
        end_us: 5,
        kind: PacketKind::Background,
        src: "a".into(),
        dst: "b".into(),
        size_bytes: 1,
        match_key: None,
    };
    assert!(matches!(Trace::new("t", vec![r]), Err(TraceError::Schema { .. })));
}
