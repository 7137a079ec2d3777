//! Closed-loop link simulation: PRBS through the line, sampled by the
//! synthesized receiver clock, with the fine (PD + weak pump) and coarse
//! (window + FSM + ring counter) loops running.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::analog::{eval_window, generate_dll_phases, propagate_channel, ChargePumpState, WindowCode};
use crate::circuit::{DigitalFault, LinkModel};
use crate::config::LinkConfig;
use crate::digital::{
    select_phase, step_alexander_pd, step_control_fsm, step_lock_detector, FsmState, LockCounter, PdSample,
    RingCounter,
};
use crate::error::{Error, Result};
use crate::fault::{reference_netlist, Fault};
use crate::prbs::prbs7;

/// Phase error bound (UI) for the locked condition.
pub const LOCK_ERR_UI: f64 = 0.1;
/// Extra transmitted bits past the simulated span, so late samples stay in range.
const TAIL_BITS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    /// One record per bit period.
    pub dt: f64,
    pub vc: Vec<f64>,
    pub vp: Vec<f64>,
    pub phase_idx: Vec<usize>,
    pub lock_count: Vec<u8>,
    /// Signed fraction of a bit period from the eye center; NaN with no clock.
    pub sampling_phase_err: Vec<f64>,
    /// True on bits where a coarse-loop tick happened.
    pub tick: Vec<bool>,
    /// True on ticks where vc was outside the window.
    pub window_exit: Vec<bool>,
    pub retimed_bits: Vec<bool>,
    pub tx_bits: Vec<bool>,
    pub coarse_corrections: usize,
    /// CP-BIST window flag at the end of the run.
    pub cpbist_flag: bool,
    /// Retime flop clocked by the receiver clock itself rather than its inverse.
    pub retime_on_rx_clock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockReport {
    pub locked: bool,
    pub lock_time: f64,
    pub coarse_corrections: usize,
    pub final_phase_err: f64,
    pub final_vc: f64,
    pub final_lock_count: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Starting DLL phase; None starts half the wheel away from the optimum.
    pub initial_phase: Option<usize>,
    /// Starting control voltage; None starts at mid-window.
    pub initial_vc: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { initial_phase: None, initial_vc: None }
    }
}

fn wrap_ui(x: f64) -> f64 {
    x - x.round()
}

/// Eye center as a fraction of the bit period in [0, 1): circular mean of the
/// fault-free zero crossings plus half a bit.
pub fn eye_center(cfg: &LinkConfig) -> f64 {
    let golden = LinkModel::golden(cfg);
    let bits = prbs7(cfg.prbs_seed, 127 * 4);
    let w = propagate_channel(&golden.transmit(&bits, false), cfg);
    let tb = cfg.bit_period();
    let skip = 16 * cfg.samples_per_bit;
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in skip..w.len() - 1 {
        let (d0, d1) = (w.diff(i), w.diff(i + 1));
        if (d0 > 0.0) != (d1 > 0.0) {
            let t = (i as f64 + d0 / (d0 - d1)) * w.dt;
            let a = 2.0 * PI * (t / tb);
            sx += a.cos();
            sy += a.sin();
        }
    }
    let crossing = sy.atan2(sx) / (2.0 * PI);
    (crossing + 0.5).rem_euclid(1.0)
}

/// Sampling phase error (UI) for a sampling time offset within the bit.
fn phase_error(cfg: &LinkConfig, center: f64, sample_offset: f64) -> f64 {
    wrap_ui(sample_offset / cfg.bit_period() - center)
}

/// DLL phase closest to the eye center with vc at mid-window.
pub fn optimal_phase(cfg: &LinkConfig) -> usize {
    let center = eye_center(cfg);
    let mid = crate::analog::vcdl_delay((cfg.window_lo + cfg.window_hi) / 2.0, cfg);
    let phases = generate_dll_phases(cfg);
    (0..cfg.n_phases)
        .min_by(|&a, &b| {
            let ea = phase_error(cfg, center, cfg.rx_clock_offset + phases[a] + mid).abs();
            let eb = phase_error(cfg, center, cfg.rx_clock_offset + phases[b] + mid).abs();
            ea.total_cmp(&eb)
        })
        .unwrap_or(0)
}

pub fn worst_case_phase(cfg: &LinkConfig) -> usize {
    (optimal_phase(cfg) + cfg.n_phases / 2) % cfg.n_phases
}

/// Fault-injected simulation on the reference netlists from the worst-case
/// initial phase.
pub fn simulate(cfg: &LinkConfig, faults: &[Fault], duration: f64, seed: u32) -> Result<SimTrace> {
    let model = LinkModel::with_faults(cfg, faults, &reference_netlist())?;
    simulate_model(&model, duration, seed, SimOptions::default())
}

pub fn simulate_model(model: &LinkModel, duration: f64, seed: u32, opts: SimOptions) -> Result<SimTrace> {
    let cfg = &model.cfg;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::Simulation(format!("duration must be positive, got {duration}")));
    }
    let tb = cfg.bit_period();
    let nbits = (duration / tb).ceil() as usize;
    if nbits < 2 {
        return Err(Error::Simulation("duration shorter than two bit periods".into()));
    }
    let tx_bits = prbs7(seed, nbits + TAIL_BITS);
    let rx = propagate_channel(&model.transmit(&tx_bits, false), cfg);
    let phases = generate_dll_phases(cfg);
    let center = eye_center(cfg);

    let start_phase = opts.initial_phase.unwrap_or_else(|| worst_case_phase(cfg)) % cfg.n_phases;
    let vc0 = opts.initial_vc.unwrap_or((cfg.window_lo + cfg.window_hi) / 2.0);
    let mut cp = ChargePumpState { vc: model.effective_vc(vc0), vp: vc0 };
    let mut ring = RingCounter::one_hot(cfg.n_phases, start_phase);
    let mut lock = LockCounter::default();
    let mut fsm = FsmState::default();
    let mut corrections = 0;

    let mut tr = SimTrace {
        dt: tb,
        vc: Vec::with_capacity(nbits),
        vp: Vec::with_capacity(nbits),
        phase_idx: Vec::with_capacity(nbits),
        lock_count: Vec::with_capacity(nbits),
        sampling_phase_err: Vec::with_capacity(nbits),
        tick: Vec::with_capacity(nbits),
        window_exit: Vec::with_capacity(nbits),
        retimed_bits: Vec::with_capacity(nbits),
        tx_bits,
        coarse_corrections: 0,
        cpbist_flag: false,
        retime_on_rx_clock: false,
    };

    let sample_offset = |ring: &RingCounter, vc: f64| -> Result<Option<f64>> {
        if model.vcdl.dead {
            return Ok(None);
        }
        Ok(select_phase(ring, &phases)?.map(|ph| cfg.rx_clock_offset + ph + model.vcdl.delay(vc, cfg)))
    };

    let mut prev_center: Option<bool> = None;
    for m in 0..nbits {
        let offset = sample_offset(&ring, model.effective_vc(cp.vc))?;
        let mut up = false;
        let mut dn = false;
        let err = match offset {
            Some(off) => {
                let t = m as f64 * tb + off;
                let b = rx.diff_at(t) > 0.0;
                let e = rx.diff_at(t - tb / 2.0) > 0.0;
                if let Some(a) = prev_center {
                    let o = step_alexander_pd(PdSample { prev_center: a, edge: e, center: b });
                    up = o.up;
                    dn = o.dn;
                }
                prev_center = Some(b);
                tr.retimed_bits.push(b);
                phase_error(cfg, center, off)
            }
            None => f64::NAN,
        };
        let clocked = offset.is_some();
        if clocked {
            cp = model.weak_cp.step(cp, up, dn, tb, false, cfg);
            cp.vc = model.effective_vc(cp.vc);
        }

        let is_tick = clocked && (m + 1) % cfg.divider == 0;
        let mut exit = false;
        if is_tick {
            let code = eval_window(cp.vc, cfg.window_lo, cfg.window_hi);
            exit = code != WindowCode::INSIDE;
            fsm = step_control_fsm(fsm, code, true);
            if fsm.coarse_request() {
                corrections += 1;
                if model.digital != Some(DigitalFault::PhaseSelectStuck) {
                    ring = ring.step(true, fsm.updn);
                }
            }
            lock = step_lock_detector(lock, fsm.coarse_request());
            let vp = cp.vp;
            cp = model.strong_cp.step(cp, fsm.up_st, fsm.dn_st, cfg.coarse_tick(), false, cfg);
            cp.vp = vp;
            cp.vc = model.effective_vc(cp.vc);
        }

        tr.vc.push(cp.vc);
        tr.vp.push(cp.vp);
        tr.phase_idx.push(ring.index().unwrap_or(0));
        tr.lock_count.push(lock.count);
        tr.sampling_phase_err.push(err);
        tr.tick.push(is_tick);
        tr.window_exit.push(exit);
    }
    tr.coarse_corrections = corrections;
    tr.cpbist_flag = model.cpbist_flag(cp.vc, cp.vp);
    if let Some(off) = sample_offset(&ring, model.effective_vc(cp.vc))? {
        let within = (off - cfg.rx_clock_offset).rem_euclid(tb);
        tr.retime_on_rx_clock = within >= tb / 2.0;
    }
    Ok(tr)
}

pub fn measure_lock(trace: &SimTrace, cfg: &LinkConfig) -> LockReport {
    let n = trace.vc.len();
    let last = n.saturating_sub(1);
    let final_phase = trace.phase_idx.get(last).copied().unwrap_or(0);
    let ok = |i: usize| {
        trace.phase_idx[i] == final_phase
            && trace.vc[i] >= cfg.window_lo
            && trace.vc[i] <= cfg.window_hi
            && trace.sampling_phase_err[i].abs() <= LOCK_ERR_UI
    };
    // first index from which the lock conditions hold to the end
    let mut start = n;
    while start > 0 && ok(start - 1) {
        start -= 1;
    }
    let tail = (n / 10).max(1);
    let locked = n > 0 && start <= n - tail;
    LockReport {
        locked,
        lock_time: if locked { start as f64 * trace.dt } else { f64::NAN },
        coarse_corrections: trace.coarse_corrections,
        final_phase_err: trace.sampling_phase_err.get(last).copied().unwrap_or(f64::NAN),
        final_vc: trace.vc.get(last).copied().unwrap_or(f64::NAN),
        final_lock_count: trace.lock_count.get(last).copied().unwrap_or(0),
    }
}

/// Bit errors of the retimed stream sampled after record `from_bit`, at the
/// latency that fits best. Record `from_bit` itself holds state after that
/// bit's coarse tick, so its sample belongs to the previous configuration.
pub fn retime_errors(trace: &SimTrace, from_bit: usize) -> usize {
    let rx = &trace.retimed_bits;
    (0..16)
        .map(|lat| {
            ((from_bit + 1).max(lat)..rx.len())
                .filter(|&m| rx[m] != trace.tx_bits[m - lat])
                .count()
        })
        .min()
        .unwrap_or(0)
}

#[derive(Serialize)]
struct TraceRow {
    time_s: f64,
    vc_v: f64,
    vp_v: f64,
    phase_idx: usize,
    lock_count: u8,
    phase_err_ui: f64,
}

pub fn write_trace_csv<W: Write>(trace: &SimTrace, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for i in 0..trace.vc.len() {
        out.serialize(TraceRow {
            time_s: i as f64 * trace.dt,
            vc_v: trace.vc[i],
            vp_v: trace.vp[i],
            phase_idx: trace.phase_idx[i],
            lock_count: trace.lock_count[i],
            phase_err_ui: trace.sampling_phase_err[i],
        })?;
    }
    out.flush()?;
    Ok(())
}
