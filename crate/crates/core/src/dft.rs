//! The three test stages (DC, scan, at-speed BIST) run against a possibly
//! faulty [`LinkModel`] and judged against the fault-free signatures.

use serde::{Deserialize, Serialize};

use crate::analog::{eval_window, propagate_channel, ChargePumpState, WindowCode};
use crate::circuit::{DcObservation, DigitalFault, LinkModel};
use crate::config::LinkConfig;
use crate::digital::{
    step_alexander_pd, step_control_fsm, step_lock_detector, FsmState, LockCounter, PdSample, RingCounter, ScanChain,
};
use crate::error::Result;
use crate::sim::{measure_lock, simulate_model, LockReport, SimOptions};

/// BIST run length.
pub const BIST_DURATION: f64 = 2e-6;
/// Largest lock-counter value a healthy link can reach from any start phase.
pub const BIST_MAX_LOCK_COUNT: u8 = 5;
/// Delay after a scan-clock data edge at which the receiver window
/// comparator strobes the line common mode.
pub const TOGGLE_STROBE_DELAY: f64 = 1.0e-9;
/// Line samples per bit while toggling at scan speed.
const SCAN_SAMPLES_PER_BIT: usize = 50;
const TOGGLE_BITS: usize = 12;
/// Scan cycles captured in each phase-detector pass.
const PD_CYCLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Dc,
    Scan,
    Bist,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Dc, Stage::Scan, Stage::Bist];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Dc => "dc",
            Stage::Scan => "scan",
            Stage::Bist => "bist",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dc" => Ok(Stage::Dc),
            "scan" => Ok(Stage::Scan),
            "bist" => Ok(Stage::Bist),
            _ => Err(format!("unknown stage `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub stage: Stage,
    pub detected: bool,
    /// Identifier of the first observation that diverged; empty on pass.
    pub evidence: String,
}

impl TestOutcome {
    fn pass(stage: Stage) -> Self {
        TestOutcome { stage, detected: false, evidence: String::new() }
    }

    fn fail(stage: Stage, evidence: impl Into<String>) -> Self {
        TestOutcome { stage, detected: true, evidence: evidence.into() }
    }
}

/// One scanned observation sequence of a scan sub-test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub id: String,
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenReference {
    /// Comparator readout for line input 1, then 0.
    pub dc: [DcObservation; 2],
    pub scan: Vec<Signature>,
    pub bist_max_lock_count: u8,
}

impl GoldenReference {
    pub fn new(cfg: &LinkConfig) -> Result<Self> {
        let g = LinkModel::golden(cfg);
        Ok(GoldenReference {
            dc: [g.dc_observe(true), g.dc_observe(false)],
            scan: scan_signatures(&g)?,
            bist_max_lock_count: BIST_MAX_LOCK_COUNT,
        })
    }
}

pub const CHAIN_A_TX: [&str; 4] = ["tx_data", "ffe_probe_p", "ffe_probe_n", "hc_latch_en"];
pub const CHAIN_A_RX: [&str; 5] = ["pd_edge", "pd_center", "pd_up", "pd_dn", "retime_inv"];
/// Extra retime flop present when the receiver clock itself is selected.
pub const CHAIN_A_RX_CLOCK_CELL: &str = "retime_rx";

/// Chain A; receiver-side cells are clocked only when `rx_clocked`.
pub fn chain_a(retime_on_rx_clock: bool, rx_clocked: bool) -> ScanChain {
    let mut names: Vec<&str> = CHAIN_A_TX.iter().chain(CHAIN_A_RX.iter()).copied().collect();
    if retime_on_rx_clock {
        names.push(CHAIN_A_RX_CLOCK_CELL);
    }
    let mut c = ScanChain::new("A", &names);
    for cell in c.cells.iter_mut().skip(CHAIN_A_TX.len()) {
        cell.clocked = rx_clocked;
    }
    c
}

pub fn chain_b_names(n_phases: usize) -> Vec<String> {
    let mut v: Vec<String> = [
        "cwin_hi",
        "cwin_lo",
        "rxwin_hi",
        "rxwin_lo",
        "cpbist",
        "fsm_up_st",
        "fsm_dn_st",
        "fsm_enable",
        "fsm_updn",
        "retime_sel",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend((0..n_phases).map(|k| format!("ring{k}")));
    v.extend(["lock2", "lock1", "lock0"].iter().map(|s| s.to_string()));
    v
}

pub fn chain_b(n_phases: usize) -> ScanChain {
    ScanChain::new("B", &chain_b_names(n_phases))
}

/// Functional values held by the chain B flops.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ChainBState {
    window: WindowCode,
    rxwin: (bool, bool),
    cpbist: bool,
    fsm: FsmState,
    retime_sel: bool,
    ring: RingCounter,
    lock: LockCounter,
}

impl ChainBState {
    fn reset(n: usize) -> Self {
        ChainBState {
            window: WindowCode::INSIDE,
            rxwin: (false, false),
            cpbist: false,
            fsm: FsmState::default(),
            retime_sel: false,
            ring: RingCounter::one_hot(n, 0),
            lock: LockCounter::default(),
        }
    }

    fn bits(&self) -> Vec<bool> {
        let mut v = vec![
            self.window.above,
            self.window.below,
            self.rxwin.0,
            self.rxwin.1,
            self.cpbist,
            self.fsm.up_st,
            self.fsm.dn_st,
            self.fsm.enable,
            self.fsm.updn,
            self.retime_sel,
        ];
        v.extend(&self.ring.q);
        v.extend(self.lock.bits());
        v
    }
}

/// Captures `state` into chain B and scans it out.
fn observe_b(state: &ChainBState) -> Result<Vec<bool>> {
    let mut b = chain_b(state.ring.q.len());
    b.capture(&state.bits())?;
    b.unload()
}

fn rx_clocked(model: &LinkModel, ring: &RingCounter) -> bool {
    !model.vcdl.dead && ring.index().is_some()
}

fn alternating(n: usize) -> Vec<bool> {
    (0..n).map(|i| i % 2 == 0).collect()
}

/// Scan-out stream of a chain after shifting an alternating pattern of
/// twice its length.
fn continuity(chain: &mut ScanChain) -> Result<Vec<bool>> {
    let n = chain.len();
    chain.shift(&alternating(2 * n))
}

/// DC readout at static line input 1 and 0.
pub fn run_dc_test(model: &LinkModel, golden: &GoldenReference) -> TestOutcome {
    for (i, bit) in [true, false].into_iter().enumerate() {
        let got = model.dc_observe(bit).bits();
        let want = golden.dc[i].bits();
        if let Some(k) = (0..got.len()).find(|&k| got[k] != want[k]) {
            return TestOutcome::fail(Stage::Dc, format!("dc.in{}.{}", bit as u8, DcObservation::NAMES[k]));
        }
    }
    TestOutcome::pass(Stage::Dc)
}

/// All scan sub-test signatures of `model`, in execution order.
pub fn scan_signatures(model: &LinkModel) -> Result<Vec<Signature>> {
    let cfg = &model.cfg;
    let n = cfg.n_phases;
    let mut sigs = Vec::new();
    let mut push = |id: &str, bits: Vec<bool>| sigs.push(Signature { id: id.to_string(), bits });
    let home = RingCounter::one_hot(n, 0);

    // 1: continuity of both chains
    let mut a = chain_a(false, rx_clocked(model, &home));
    push("scan.sub1.chain_a_continuity", continuity(&mut a)?);
    let mut b = chain_b(n);
    push("scan.sub1.chain_b_continuity", continuity(&mut b)?);

    // 2: toggling pattern at scan speed, receiver window comparator strobed
    push("scan.sub2.rxwin_toggle", toggle_capture(model)?);

    // 3 and 4: phase detector passes
    push("scan.sub3.up_capture", pd_pass(model, false)?);
    push("scan.sub4.dn_capture", pd_pass(model, true)?);

    // 5: pumps as combinational drivers, then the reset check
    push("scan.sub5.cp_drive", cp_drive(model)?);
    push("scan.sub5.reset_from_high", reset_check(model, true)?);
    push("scan.sub5.reset_from_low", reset_check(model, false)?);

    // 6: window comparator outputs forced to 00
    push("scan.sub6.window_forced", window_forced(model)?);

    // 7: ring counter preload and count
    push("scan.sub7.ring_count", ring_count(model)?);

    // 8: switch matrix sweeps
    push("scan.sub8.switch_matrix", switch_matrix(model)?);
    Ok(sigs)
}

pub fn run_scan_test(model: &LinkModel, golden: &GoldenReference) -> Result<TestOutcome> {
    let sigs = scan_signatures(model)?;
    for (got, want) in sigs.iter().zip(&golden.scan) {
        if got.bits != want.bits {
            return Ok(TestOutcome::fail(Stage::Scan, got.id.clone()));
        }
    }
    Ok(TestOutcome::pass(Stage::Scan))
}

/// Common-mode samples of the line during a scan-speed toggling pattern.
pub fn toggle_common_mode(model: &LinkModel) -> Vec<f64> {
    let mut slow = model.clone();
    slow.cfg.data_rate = model.cfg.scan_freq;
    slow.cfg.samples_per_bit = SCAN_SAMPLES_PER_BIT;
    let bits = alternating(TOGGLE_BITS);
    let rx = propagate_channel(&slow.transmit(&bits, false), &slow.cfg);
    let ts = slow.cfg.bit_period();
    (2..TOGGLE_BITS)
        .map(|k| {
            let (p, n) = rx.at(k as f64 * ts + TOGGLE_STROBE_DELAY);
            (p + n) / 2.0
        })
        .collect()
}

fn toggle_capture(model: &LinkModel) -> Result<Vec<bool>> {
    let mut state = ChainBState::reset(model.cfg.n_phases);
    let mut out = Vec::new();
    for cm in toggle_common_mode(model) {
        // the capture flops sample both clock phases
        state.rxwin = model.rxwin_precharge();
        out.extend(observe_b(&state)?);
        state.rxwin = model.rxwin_clocked(cm);
        out.extend(observe_b(&state)?);
    }
    Ok(out)
}

/// Scan-speed PD pass: data toggles once per scan clock, either right after
/// the edge sample (aligned) or half a cycle later through the latch.
fn pd_pass(model: &LinkModel, half_cycle: bool) -> Result<Vec<bool>> {
    let vdd = model.cfg.vdd;
    let clocked = rx_clocked(model, &RingCounter::one_hot(model.cfg.n_phases, 0));
    let bits = alternating(PD_CYCLES + 2);
    let drv_p = model.ffe[0].sequence(bits.iter().copied(), vdd);
    let drv_n = model.ffe[1].sequence(bits.iter().map(|b| !b), vdd);
    let dec = |b: bool| model.static_decision(b);
    let mut out = Vec::new();
    for k in 2..bits.len() {
        let (a, t, b) = if half_cycle {
            (dec(bits[k - 2]), dec(bits[k - 1]), dec(bits[k - 1]))
        } else {
            (dec(bits[k - 1]), dec(bits[k - 1]), dec(bits[k]))
        };
        let pd = step_alexander_pd(PdSample { prev_center: a, edge: t, center: b });
        let mut chain = chain_a(false, clocked);
        chain.capture(&[
            bits[k],
            model.ffe_probe(0, drv_p[k]),
            model.ffe_probe(1, drv_n[k]),
            half_cycle,
            t,
            b,
            pd.up,
            pd.dn,
            pd.retimed,
        ])?;
        out.extend(chain.unload()?);
    }
    Ok(out)
}

/// Drives vc to each rail through both pumps in scan mode and captures the
/// window comparator.
fn cp_drive(model: &LinkModel) -> Result<Vec<bool>> {
    let cfg = &model.cfg;
    let mut state = ChainBState::reset(cfg.n_phases);
    let mut vc = cfg.v_mid;
    let mut out = Vec::new();
    // (up, dn, up_st, dn_st)
    for (up, dn, up_st, dn_st) in
        [(true, false, false, false), (false, true, false, false), (false, false, true, false), (false, false, false, true)]
    {
        vc = model.vc_test_drive(vc, up, dn, up_st, dn_st);
        state.window = eval_window(vc, cfg.window_lo, cfg.window_hi);
        state.fsm = FsmState { up_st, dn_st, ..FsmState::default() };
        out.extend(observe_b(&state)?);
    }
    Ok(out)
}

/// Drives vc to a rail in scan mode, releases scan and clocks the coarse
/// loop from the divided clock, scanning chain B out after every tick.
fn reset_check(model: &LinkModel, from_high: bool) -> Result<Vec<bool>> {
    let cfg = &model.cfg;
    let mut state = ChainBState::reset(cfg.n_phases);
    let vc = model.vc_test_drive(cfg.v_mid, from_high, !from_high, false, false);
    let mut cp = ChargePumpState { vc, vp: cfg.v_mid };
    let mut out = Vec::new();
    for _ in 0..cfg.reset_ticks {
        for _ in 0..cfg.divider {
            cp = model.weak_cp.step(cp, false, false, cfg.bit_period(), false, cfg);
            cp.vc = model.effective_vc(cp.vc);
        }
        let code = eval_window(cp.vc, cfg.window_lo, cfg.window_hi);
        state.fsm = step_control_fsm(state.fsm, code, true);
        if state.fsm.coarse_request() && model.digital != Some(DigitalFault::PhaseSelectStuck) {
            state.ring = state.ring.step(true, state.fsm.updn);
        }
        state.lock = step_lock_detector(state.lock, state.fsm.coarse_request());
        let vp = cp.vp;
        cp = model.strong_cp.step(cp, state.fsm.up_st, state.fsm.dn_st, cfg.coarse_tick(), false, cfg);
        cp.vp = vp;
        cp.vc = model.effective_vc(cp.vc);
        state.window = eval_window(cp.vc, cfg.window_lo, cfg.window_hi);
        state.cpbist = model.cpbist_flag(cp.vc, cp.vp);
        out.extend(observe_b(&state)?);
    }
    Ok(out)
}

fn window_forced(model: &LinkModel) -> Result<Vec<bool>> {
    let mut state = ChainBState::reset(model.cfg.n_phases);
    // input force overrides whatever vc the pumps left behind
    state.window = WindowCode::INSIDE;
    state.fsm = step_control_fsm(state.fsm, state.window, true);
    observe_b(&state)
}

fn ring_count(model: &LinkModel) -> Result<Vec<bool>> {
    let n = model.cfg.n_phases;
    let mut state = ChainBState::reset(n);
    let mut out = Vec::new();
    for updn in [true, false] {
        state.fsm = FsmState { enable: true, updn, ..FsmState::default() };
        for _ in 0..n {
            if model.digital != Some(DigitalFault::PhaseSelectStuck) {
                state.ring = state.ring.step(true, updn);
            }
            out.extend(observe_b(&state)?);
        }
    }
    Ok(out)
}

fn switch_matrix(model: &LinkModel) -> Result<Vec<bool>> {
    let n = model.cfg.n_phases;
    let mut out = Vec::new();
    let mut rings = vec![RingCounter::zeros(n)];
    rings.extend((0..n).map(|k| RingCounter::one_hot(n, k)));
    for ring in rings {
        let mut a = chain_a(false, rx_clocked(model, &ring));
        out.extend(continuity(&mut a)?);
    }
    Ok(out)
}

/// At-speed run from the worst-case phase with PRBS data.
pub fn run_bist(model: &LinkModel, seed: u32) -> Result<(TestOutcome, LockReport)> {
    let tr = simulate_model(model, BIST_DURATION, seed, SimOptions::default())?;
    let r = measure_lock(&tr, &model.cfg);
    let outcome = if !r.locked {
        TestOutcome::fail(Stage::Bist, "bist.no_lock")
    } else if r.final_lock_count > BIST_MAX_LOCK_COUNT {
        TestOutcome::fail(Stage::Bist, "bist.lock_count")
    } else if tr.cpbist_flag {
        TestOutcome::fail(Stage::Bist, "bist.cpbist_flag")
    } else {
        TestOutcome::pass(Stage::Bist)
    };
    Ok((outcome, r))
}

/// DC, scan and BIST outcomes, in that order.
pub fn run_all(model: &LinkModel, golden: &GoldenReference, seed: u32) -> Result<[TestOutcome; 3]> {
    Ok([run_dc_test(model, golden), run_scan_test(model, golden)?, run_bist(model, seed)?.0])
}
