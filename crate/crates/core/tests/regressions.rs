//! Named fault scenarios whose stage attribution must not drift.

use lowswing::circuit::LinkModel;
use lowswing::config::LinkConfig;
use lowswing::dft::{run_all, run_bist, run_dc_test, run_scan_test, toggle_common_mode, GoldenReference};
use lowswing::fault::{enumerate_faults, reference_netlist, Defect, Fault};

fn faulty(id: &str, defect: Defect) -> (LinkConfig, GoldenReference, LinkModel) {
    let cfg = LinkConfig::default();
    let golden = GoldenReference::new(&cfg).unwrap();
    let f = Fault::new(id, defect);
    let m = LinkModel::with_faults(&cfg, &[f], &reference_netlist()).unwrap();
    (cfg, golden, m)
}

#[test]
fn weak_cp_source_drain_source_short_masked_by_scan_caught_by_bist() {
    for id in ["weakcp.M3", "weakcp.M4"] {
        let (cfg, golden, m) = faulty(id, Defect::DrainSourceShort);
        assert!(!run_dc_test(&m, &golden).detected, "{id}");
        assert!(!run_scan_test(&m, &golden).unwrap().detected, "{id}: scan should be blind to it");
        let (bist, lock) = run_bist(&m, cfg.prbs_seed).unwrap();
        assert!(bist.detected, "{id}: bist missed it, lock={lock:?}");
    }
}

#[test]
fn tg_drain_open_escapes_dc_caught_by_toggle() {
    for id in ["term.MTN_P", "term.MTP_P", "term.MTN_N", "term.MTP_N"] {
        let (_, golden, m) = faulty(id, Defect::DrainOpen);
        assert!(!run_dc_test(&m, &golden).detected, "{id}");
        let scan = run_scan_test(&m, &golden).unwrap();
        assert_eq!(scan.evidence, "scan.sub2.rxwin_toggle", "{id}");
    }
}

#[test]
fn tg_drain_open_moves_common_mode_during_toggle() {
    let cfg = LinkConfig::default();
    let (_, _, m) = faulty("term.MTN_P", Defect::DrainOpen);
    let cm = toggle_common_mode(&m);
    let worst = cm.iter().map(|v| (v - cfg.v_mid).abs()).fold(0.0, f64::max);
    assert!(worst > cfg.comp_offset, "common mode moved only {worst}");
}

#[test]
fn ffe_cap_short_caught_at_dc() {
    let (_, golden, m) = faulty("ffe.CS_P", Defect::CapacitorShort);
    let dc = run_dc_test(&m, &golden);
    assert!(dc.detected);
    assert!(dc.evidence.starts_with("dc.in"), "{}", dc.evidence);
}

#[test]
fn balance_path_drift_flags_cp_bist() {
    // an open in the balance amplifier walks Vp to a rail
    let (cfg, golden, m) = faulty("weakcp.M9", Defect::GateOpen);
    let dc = run_dc_test(&m, &golden);
    assert!(dc.evidence.contains("cpbist"), "{}", dc.evidence);
    let (bist, _) = run_bist(&m, cfg.prbs_seed).unwrap();
    assert_eq!(bist.evidence, "bist.cpbist_flag");
}

#[test]
fn rx_window_stuck_low_seen_in_precharge_phase() {
    let (_, golden, m) = faulty("rxwin.M7", Defect::GateOpen);
    assert!(!run_dc_test(&m, &golden).detected);
    assert_eq!(run_scan_test(&m, &golden).unwrap().evidence, "scan.sub2.rxwin_toggle");
}

#[test]
fn every_gate_source_and_drain_source_short_detected() {
    let cfg = LinkConfig::default();
    let golden = GoldenReference::new(&cfg).unwrap();
    let nl = reference_netlist();
    let missed: Vec<String> = enumerate_faults(&nl)
        .into_iter()
        .filter(|f| matches!(f.defect, Defect::GateSourceShort | Defect::DrainSourceShort))
        .filter(|f| {
            let m = LinkModel::with_faults(&cfg, std::slice::from_ref(f), &nl).unwrap();
            run_all(&m, &golden, cfg.prbs_seed).unwrap().iter().all(|o| !o.detected)
        })
        .map(|f| f.to_string())
        .collect();
    assert!(missed.is_empty(), "undetected: {missed:?}");
}
