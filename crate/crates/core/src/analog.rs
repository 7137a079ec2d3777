//! Behavioral models of the analog blocks. Every model here is a plain
//! value type whose golden construction follows [`LinkConfig`]; faults are
//! applied by editing fields (see `circuit`).

use serde::{Deserialize, Serialize};

use crate::config::LinkConfig;

/// Differential waveform, uniformly sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub dt: f64,
    pub samples: Vec<(f64, f64)>,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    pub fn diff(&self, i: usize) -> f64 {
        let (p, n) = self.samples[i];
        p - n
    }

    /// Linear interpolation; clamps outside the sampled span.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let last = self.samples.len() - 1;
        let x = (t / self.dt).max(0.0);
        let i = x.floor() as usize;
        if i >= last {
            return self.samples[last];
        }
        let f = x - i as f64;
        let (p0, n0) = self.samples[i];
        let (p1, n1) = self.samples[i + 1];
        (p0 + (p1 - p0) * f, n0 + (n1 - n0) * f)
    }

    pub fn diff_at(&self, t: f64) -> f64 {
        let (p, n) = self.at(t);
        p - n
    }
}

/// Per-bit drive of one line arm at the transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDrive {
    /// Static line level the weak driver holds for each bit.
    pub level: Vec<f64>,
    /// Driver-side voltage of the series capacitors for each bit.
    pub driver: Vec<f64>,
    /// False when the coupling path no longer acts as a capacitor.
    pub coupled: bool,
    /// Decay constant of this arm's boost.
    pub tau: f64,
}

impl ArmDrive {
    /// Fault-free drive of the positive (`invert = false`) or negative arm.
    pub fn golden(bits: &[bool], cfg: &LinkConfig, invert: bool) -> ArmDrive {
        let half = cfg.swing / 2.0;
        let level = bits
            .iter()
            .map(|&b| if b != invert { cfg.vcm + half } else { cfg.vcm - half })
            .collect();
        let driver = bits.iter().map(|&b| if b != invert { cfg.vdd } else { 0.0 }).collect();
        ArmDrive { level, driver, coupled: true, tau: boost_tau(cfg) }
    }
}

/// Coupling factor of a series cap into the line: `c / (cs + cs_alpha + c_line)`.
pub fn coupling(c: f64, cfg: &LinkConfig) -> f64 {
    let total = cfg.cs + cfg.cs_alpha + cfg.line_capacitance();
    if total <= 0.0 {
        0.0
    } else {
        c / total
    }
}

/// Decay constant of the capacitive boost, `(cs + cs_alpha) * rl`.
pub fn boost_tau(cfg: &LinkConfig) -> f64 {
    (cfg.cs + cfg.cs_alpha) * cfg.rl
}

/// Fault-free capacitive FFE transmitter output.
pub fn ffe_transmit(bits: &[bool], cfg: &LinkConfig, half_cycle_delay: bool) -> Waveform {
    let p = ArmDrive::golden(bits, cfg, false);
    let n = ArmDrive::golden(bits, cfg, true);
    transmit_arms(&p, &n, cfg, half_cycle_delay)
}

/// Transmitter output for arbitrary per-arm drives. Each arm is the weak
/// driver's static level plus exponentially decaying kicks at every driver
/// transition: the main cap kicks at the transition, the second-tap cap one
/// bit later.
pub fn transmit_arms(p: &ArmDrive, n: &ArmDrive, cfg: &LinkConfig, half_cycle_delay: bool) -> Waveform {
    let nbits = p.level.len();
    assert!(nbits > 0, "ffe_transmit needs at least one bit");
    let spb = cfg.samples_per_bit;
    let tb = cfg.bit_period();
    let dt = tb / spb as f64;
    let total = nbits * spb + if half_cycle_delay { spb / 2 } else { 0 };
    let a_main = coupling(cfg.cs, cfg);
    let a_alpha = coupling(cfg.cs_alpha, cfg);

    let shift_n = if half_cycle_delay { spb / 2 } else { 0 };
    let arm = |d: &ArmDrive| -> Vec<f64> {
        // kick sample indices and amplitudes, index ordered
        let mut kicks: Vec<(usize, f64)> = Vec::new();
        let tau = d.tau;
        if d.coupled && tau > 0.0 {
            for k in 1..nbits {
                let step = d.driver[k] - d.driver[k - 1];
                if step != 0.0 {
                    let i = k * spb + shift_n;
                    kicks.push((i, step * a_main));
                    kicks.push((i + spb, step * a_alpha));
                }
            }
            kicks.sort_by_key(|k| k.0);
        }
        let decay = if tau > 0.0 { (-dt / tau).exp() } else { 0.0 };
        let mut out = Vec::with_capacity(total);
        let mut next = 0;
        let mut boost = 0.0;
        for i in 0..total {
            if i > 0 {
                boost *= decay;
            }
            while next < kicks.len() && kicks[next].0 == i {
                boost += kicks[next].1;
                next += 1;
            }
            let bit = (i.saturating_sub(shift_n) / spb).min(nbits - 1);
            out.push(d.level[bit] + boost);
        }
        out
    };
    let vp = arm(p);
    let vn = arm(n);
    Waveform { dt, samples: vp.into_iter().zip(vn).collect() }
}

/// One arm through an N-section lumped RC ladder, driven by an ideal source
/// at the near end and unloaded at the far end (unity DC gain). Integrated
/// with backward Euler on sub-steps; input is linear between samples.
pub fn rc_ladder(input: &[f64], dt: f64, r: f64, c: f64, sections: usize) -> Vec<f64> {
    if input.is_empty() {
        return Vec::new();
    }
    const SUBSTEPS: usize = 8;
    let h = dt / SUBSTEPS as f64;
    let k = h / (r * c);
    let n = sections;
    let mut x = vec![input[0]; n];
    let mut out = Vec::with_capacity(input.len());
    out.push(x[n - 1]);
    // tridiagonal system: diag/lower/upper, constant over the run
    let mut diag = vec![1.0 + 2.0 * k; n];
    diag[n - 1] = 1.0 + k;
    let off = -k;
    let mut cprime = vec![0.0; n];
    let mut dprime = vec![0.0; n];
    for i in 1..input.len() {
        for s in 1..=SUBSTEPS {
            let u = input[i - 1] + (input[i] - input[i - 1]) * s as f64 / SUBSTEPS as f64;
            // rhs
            let mut rhs = x.clone();
            rhs[0] += k * u;
            // Thomas algorithm
            cprime[0] = if n > 1 { off / diag[0] } else { 0.0 };
            dprime[0] = rhs[0] / diag[0];
            for j in 1..n {
                let m = diag[j] - off * cprime[j - 1];
                cprime[j] = if j + 1 < n { off / m } else { 0.0 };
                dprime[j] = (rhs[j] - off * dprime[j - 1]) / m;
            }
            x[n - 1] = dprime[n - 1];
            for j in (0..n - 1).rev() {
                x[j] = dprime[j] - cprime[j] * x[j + 1];
            }
        }
        out.push(x[n - 1]);
    }
    out
}

/// Both arms through the distributed line.
pub fn propagate_channel(w: &Waveform, cfg: &LinkConfig) -> Waveform {
    let n = cfg.ladder_sections;
    let r = cfg.line_r_per_mm * cfg.line_len_mm / n as f64;
    let c = cfg.line_c_per_mm * cfg.line_len_mm / n as f64;
    let p: Vec<f64> = w.samples.iter().map(|s| s.0).collect();
    let m: Vec<f64> = w.samples.iter().map(|s| s.1).collect();
    let p = rc_ladder(&p, w.dt, r, c, n);
    let m = rc_ladder(&m, w.dt, r, c, n);
    Waveform { dt: w.dt, samples: p.into_iter().zip(m).collect() }
}

/// Offset comparator: 1 iff `v_plus - v_minus > offset` (boundary gives 0).
pub fn eval_comparator(v_plus: f64, v_minus: f64, offset: f64) -> bool {
    v_plus - v_minus > offset
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct WindowCode {
    pub above: bool,
    pub below: bool,
}

impl WindowCode {
    pub const INSIDE: WindowCode = WindowCode { above: false, below: false };
    pub const ABOVE: WindowCode = WindowCode { above: true, below: false };
    pub const BELOW: WindowCode = WindowCode { above: false, below: true };
}

pub fn eval_window(v: f64, lo: f64, hi: f64) -> WindowCode {
    WindowCode { above: v > hi, below: v < lo }
}

/// Comparator with fault hooks. `offset` is the programmed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparator {
    pub offset: f64,
    pub stuck: Option<bool>,
    /// Output forced only when clocked at scan speed.
    pub dyn_stuck: Option<bool>,
    pub gain: f64,
}

impl Comparator {
    pub fn new(offset: f64) -> Self {
        Comparator { offset, stuck: None, dyn_stuck: None, gain: 1.0 }
    }

    pub fn eval(&self, v_plus: f64, v_minus: f64) -> bool {
        self.stuck
            .unwrap_or_else(|| eval_comparator(self.gain * v_plus, self.gain * v_minus, self.offset))
    }

    /// Evaluation while clocked at scan frequency.
    pub fn eval_clocked(&self, v_plus: f64, v_minus: f64) -> bool {
        self.dyn_stuck.unwrap_or_else(|| self.eval(v_plus, v_minus))
    }

    /// Output during the reset phase of a clocked comparator: precharged
    /// high unless the output node is stuck.
    pub fn eval_precharge(&self) -> bool {
        self.stuck.or(self.dyn_stuck).unwrap_or(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargePumpState {
    pub vc: f64,
    pub vp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PumpStrength {
    Weak,
    Strong,
}

/// Current source of one pump branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentSource {
    pub open: bool,
    /// Drain-source short: the source no longer regulates.
    pub bypass: bool,
    /// Drain tied to its own bias gate.
    pub gate_tied: bool,
    pub scale: f64,
}

impl Default for CurrentSource {
    fn default() -> Self {
        CurrentSource { open: false, bypass: false, gate_tied: false, scale: 1.0 }
    }
}

/// Current multiplier of an unregulated (bypassed) source.
pub const BYPASS_GAIN: f64 = 40.0;
/// Current multiplier of a source whose drain is tied to its bias gate.
pub const GATE_TIED_GAIN: f64 = 0.3;

impl CurrentSource {
    fn factor(&self) -> f64 {
        if self.open {
            0.0
        } else if self.bypass {
            BYPASS_GAIN
        } else if self.gate_tied {
            GATE_TIED_GAIN
        } else {
            self.scale
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Switch {
    pub open: bool,
    pub always_on: bool,
    /// Output node tied to the switch's logic control line.
    pub gate_tied: bool,
}

impl Switch {
    fn conducts(&self, ctrl: bool) -> bool {
        !self.open && (self.always_on || ctrl)
    }
}

/// Charge-balance path that keeps `vp` on the replica of `vc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancePath {
    /// Some(true) drifts toward VDD, Some(false) toward GND.
    pub drift: Option<bool>,
    pub offset: f64,
    pub gain: f64,
}

impl Default for BalancePath {
    fn default() -> Self {
        BalancePath { drift: None, offset: 0.0, gain: 1.0 }
    }
}

/// Drift rate of an unbalanced `vp` node, V/s.
pub const VP_DRIFT_RATE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargePump {
    pub current: f64,
    pub src_up: CurrentSource,
    pub src_dn: CurrentSource,
    pub sw_up: Switch,
    pub sw_dn: Switch,
    /// Loop capacitor shorted: the control node sits at ground.
    pub cap_short: bool,
    pub balance: BalancePath,
}

impl ChargePump {
    pub fn golden(strength: PumpStrength, cfg: &LinkConfig) -> Self {
        let current = match strength {
            PumpStrength::Weak => cfg.i_weak,
            PumpStrength::Strong => cfg.i_strong,
        };
        ChargePump {
            current,
            src_up: CurrentSource::default(),
            src_dn: CurrentSource::default(),
            sw_up: Switch::default(),
            sw_dn: Switch::default(),
            cap_short: false,
            balance: BalancePath::default(),
        }
    }

    /// Net current into the control node.
    pub fn net_current(&self, up: bool, dn: bool) -> f64 {
        let i_up = if self.sw_up.conducts(up) { self.current * self.src_up.factor() } else { 0.0 };
        let i_dn = if self.sw_dn.conducts(dn) { self.current * self.src_dn.factor() } else { 0.0 };
        i_up - i_dn
    }

    pub fn step(&self, s: ChargePumpState, up: bool, dn: bool, dt: f64, test_mode: bool, cfg: &LinkConfig) -> ChargePumpState {
        let vdd = cfg.vdd;
        let mut vc = if test_mode {
            self.combinational(s.vc, up, dn, vdd)
        } else {
            let mut vc = s.vc + self.net_current(up, dn) * dt / cfg.cp_cap;
            // an unregulated source behind a closed switch is a plain rail tie
            let mut ties = Vec::new();
            if self.src_up.bypass && !self.src_up.open && self.sw_up.conducts(up) {
                ties.push(vdd);
            }
            if self.src_dn.bypass && !self.src_dn.open && self.sw_dn.conducts(dn) {
                ties.push(0.0);
            }
            if !ties.is_empty() {
                vc = resolve_drives(&ties, vc, vdd);
            }
            if self.sw_up.gate_tied {
                vc = if up { vdd } else { 0.0 };
            }
            if self.sw_dn.gate_tied {
                vc = if dn { vdd } else { 0.0 };
            }
            vc
        };
        if self.cap_short {
            vc = 0.0;
        }
        vc = vc.clamp(0.0, vdd);
        let vp = if test_mode {
            s.vp
        } else {
            match self.balance.drift {
                Some(true) => s.vp + VP_DRIFT_RATE * dt,
                Some(false) => s.vp - VP_DRIFT_RATE * dt,
                None => vc + self.balance.offset + (self.balance.gain - 1.0) * (vc - cfg.v_mid),
            }
        }
        .clamp(0.0, vdd);
        ChargePumpState { vc, vp }
    }

    /// Scan-mode behavior: current-source biases are forced to the rails so
    /// each branch is a plain switch.
    fn combinational(&self, vc: f64, up: bool, dn: bool, vdd: f64) -> f64 {
        resolve_drives(&self.test_drives(up, dn, vdd), vc, vdd)
    }

    /// Rail drives this pump puts on the control node in scan mode.
    pub fn test_drives(&self, up: bool, dn: bool, vdd: f64) -> Vec<f64> {
        let mut drives = Vec::with_capacity(4);
        if self.sw_up.conducts(up) && !self.src_up.open {
            drives.push(if self.src_up.gate_tied { 0.0 } else { vdd });
        }
        if self.sw_dn.conducts(dn) && !self.src_dn.open {
            drives.push(if self.src_dn.gate_tied { vdd } else { 0.0 });
        }
        if self.sw_up.gate_tied {
            drives.push(if up { vdd } else { 0.0 });
        }
        if self.sw_dn.gate_tied {
            drives.push(if dn { vdd } else { 0.0 });
        }
        drives
    }
}

/// Node voltage under a set of rail drives: held when undriven, mid-rail
/// under contention.
pub fn resolve_drives(drives: &[f64], hold: f64, vdd: f64) -> f64 {
    match drives {
        [] => hold,
        [first, rest @ ..] if rest.iter().all(|v| v == first) => *first,
        _ => vdd / 2.0,
    }
}

/// Fault-free charge pump step.
pub fn step_charge_pump(
    state: ChargePumpState,
    up: bool,
    dn: bool,
    dt: f64,
    strength: PumpStrength,
    test_mode: bool,
    cfg: &LinkConfig,
) -> ChargePumpState {
    ChargePump::golden(strength, cfg).step(state, up, dn, dt, test_mode, cfg)
}

/// VCDL with fault hooks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vcdl {
    pub gain: f64,
    /// No clock edges come out.
    pub dead: bool,
    /// Control node merged with the V-to-I bias node.
    pub vc_pinned: Option<f64>,
}

impl Default for Vcdl {
    fn default() -> Self {
        Vcdl { gain: 1.0, dead: false, vc_pinned: None }
    }
}

/// Voltage the control node settles at when merged with the VCDL bias node.
pub const VCDL_BIAS_NODE: f64 = 0.45;

impl Vcdl {
    pub fn delay(&self, vc: f64, cfg: &LinkConfig) -> f64 {
        let x = ((vc - cfg.window_lo) / (cfg.window_hi - cfg.window_lo)).clamp(0.0, 1.0);
        let x_mid = 0.5;
        // a control-gain loss pins the delay at its mid-window value
        cfg.vcdl_min_delay + cfg.vcdl_range * (x_mid + (x - x_mid) * self.gain)
    }
}

/// Fault-free VCDL delay: affine across the window, clamped outside it.
pub fn vcdl_delay(vc: f64, cfg: &LinkConfig) -> f64 {
    Vcdl::default().delay(vc, cfg)
}

/// DLL output phases: `n_phases` uniform offsets over one bit period.
pub fn generate_dll_phases(cfg: &LinkConfig) -> Vec<f64> {
    let step = cfg.phase_step();
    (0..cfg.n_phases).map(|k| k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> LinkConfig {
        LinkConfig::default()
    }

    #[test]
    fn constant_one_settles_to_swing() {
        let c = cfg();
        let w = ffe_transmit(&[true; 16], &c, false);
        let (p, n) = *w.samples.last().unwrap();
        assert_relative_eq!(p - n, 0.060, epsilon = 1e-12);
        assert_relative_eq!(p, c.vcm + 0.030, epsilon = 1e-12);
    }

    #[test]
    fn ones_and_zeros_mirror() {
        let c = cfg();
        let one = ffe_transmit(&[true; 8], &c, false);
        let zero = ffe_transmit(&[false; 8], &c, false);
        for (a, b) in one.samples.iter().zip(&zero.samples) {
            assert_relative_eq!(a.0 - c.vcm, -(b.0 - c.vcm), epsilon = 1e-12);
            assert_relative_eq!(a.0, b.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn step_boost_matches_closed_form() {
        let c = cfg();
        let bits: Vec<bool> = (0..12).map(|i| i >= 4).collect();
        let w = ffe_transmit(&bits, &c, false);
        let tb = c.bit_period();
        let tau = (c.cs + c.cs_alpha) * c.rl;
        let ctot = c.cs + c.cs_alpha + c.line_c_per_mm * c.line_len_mm;
        let t0 = 4.0 * tb;
        for (i, &(p, _)) in w.samples.iter().enumerate() {
            let t = i as f64 * w.dt;
            let expected = if t + 1e-15 < t0 {
                c.vcm - c.swing / 2.0
            } else {
                let mut v = c.vcm + c.swing / 2.0 + c.vdd * c.cs / ctot * (-(t - t0) / tau).exp();
                if t + 1e-15 >= t0 + tb {
                    v += c.vdd * c.cs_alpha / ctot * (-(t - t0 - tb) / tau).exp();
                }
                v
            };
            assert_relative_eq!(p, expected, epsilon = 1e-12);
        }
        let at_edge = w.samples[(t0 / w.dt).round() as usize].0;
        assert!(at_edge > c.vcm + c.swing / 2.0);
    }

    #[test]
    fn no_caps_is_pure_level_shifter() {
        let mut c = cfg();
        c.cs = 0.0;
        c.cs_alpha = 0.0;
        let bits = [true, false, false, true, true, false];
        let w = ffe_transmit(&bits, &c, false);
        for (i, &(p, n)) in w.samples.iter().enumerate() {
            let b = bits[i / c.samples_per_bit];
            let want = if b { 0.030 } else { -0.030 };
            assert_relative_eq!(p - c.vcm, want, epsilon = 1e-12);
            assert_relative_eq!(n - c.vcm, -want, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_cycle_shifts_by_half_bit() {
        let c = cfg();
        let bits = [false, true, true, false, true, false, false];
        let a = ffe_transmit(&bits, &c, false);
        let b = ffe_transmit(&bits, &c, true);
        let s = c.samples_per_bit / 2;
        for i in 0..a.len() {
            assert_relative_eq!(a.samples[i].0, b.samples[i + s].0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ladder_passes_dc_and_step_is_monotone() {
        let c = cfg();
        let dc = Waveform { dt: 1e-10, samples: vec![(0.7, 0.5); 50] };
        let out = propagate_channel(&dc, &c);
        for s in &out.samples {
            assert_relative_eq!(s.0, 0.7, epsilon = 1e-12);
            assert_relative_eq!(s.1, 0.5, epsilon = 1e-12);
        }
        let mut input = vec![0.0; 2];
        input.extend(vec![1.0; 200]);
        let y = rc_ladder(&input, 1e-10, 100.0, 200e-15, 10);
        for w in y.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
            assert!(w[1] >= 0.0);
        }
        assert!(*y.last().unwrap() > 0.999);
    }

    #[test]
    fn ladder_single_section_matches_exponential() {
        // one section: y' = (u - y)/RC, step input
        let (r, c, dt) = (1000.0, 1e-12, 1e-11);
        let mut input = vec![0.0];
        input.extend(vec![1.0; 400]);
        let y = rc_ladder(&input, dt, r, c, 1);
        let tau = r * c;
        for (i, &v) in y.iter().enumerate().skip(20) {
            let t = (i as f64 - 1.0) * dt;
            let exact = 1.0 - (-(t) / tau).exp();
            assert!((v - exact).abs() < 0.02, "{i}: {v} vs {exact}");
        }
    }

    #[test]
    fn comparator_examples() {
        assert!(eval_comparator(0.030, 0.0, 0.015));
        assert!(!eval_comparator(0.0, 0.0, 0.015));
        assert!(!eval_comparator(0.015, 0.0, 0.015));
    }

    #[test]
    fn window_examples() {
        let c = cfg();
        assert_eq!(eval_window(c.v_mid, c.window_lo, c.window_hi), WindowCode::INSIDE);
        assert_eq!(eval_window(c.window_hi + 1e-3, c.window_lo, c.window_hi), WindowCode::ABOVE);
        assert_eq!(eval_window(c.window_lo - 1e-3, c.window_lo, c.window_hi), WindowCode::BELOW);
        assert_eq!(eval_window(c.window_hi, c.window_lo, c.window_hi), WindowCode::INSIDE);
    }

    #[test]
    fn charge_pump_examples() {
        let c = cfg();
        let s = ChargePumpState { vc: 0.6, vp: 0.6 };
        let n = step_charge_pump(s, true, false, 1e-9, PumpStrength::Weak, false, &c);
        assert_relative_eq!(n.vc - s.vc, 0.005, epsilon = 1e-12);
        let n = step_charge_pump(s, true, true, 1e-9, PumpStrength::Weak, false, &c);
        assert_relative_eq!(n.vc, s.vc, epsilon = 1e-15);
        let n = step_charge_pump(s, true, false, 1e-9, PumpStrength::Weak, true, &c);
        assert_eq!(n.vc, c.vdd);
        let n = step_charge_pump(s, false, true, 1e-9, PumpStrength::Weak, true, &c);
        assert_eq!(n.vc, 0.0);
        let n = step_charge_pump(s, false, false, 1e-9, PumpStrength::Strong, true, &c);
        assert_eq!(n.vc, s.vc);
    }

    #[test]
    fn masked_source_short_only_differs_at_speed() {
        let c = cfg();
        let mut cp = ChargePump::golden(PumpStrength::Weak, &c);
        cp.src_up.bypass = true;
        let s = ChargePumpState { vc: 0.6, vp: 0.6 };
        let g = step_charge_pump(s, true, false, 1e-9, PumpStrength::Weak, true, &c);
        assert_eq!(cp.step(s, true, false, 1e-9, true, &c), g);
        let g = step_charge_pump(s, true, false, 1e-10, PumpStrength::Weak, false, &c);
        assert!(cp.step(s, true, false, 1e-10, false, &c).vc > g.vc + 0.01);
    }

    #[test]
    fn vcdl_examples() {
        let c = cfg();
        assert_relative_eq!(vcdl_delay(c.window_lo, &c), c.vcdl_min_delay);
        assert_relative_eq!(
            vcdl_delay((c.window_lo + c.window_hi) / 2.0, &c),
            c.vcdl_min_delay + c.vcdl_range / 2.0,
            epsilon = 1e-24
        );
        assert_relative_eq!(vcdl_delay(c.vdd, &c), c.vcdl_min_delay + c.vcdl_range);
        assert!(50e-12 > 400e-12 / 10.0);
    }

    #[test]
    fn dll_phases() {
        let c = cfg();
        let ph = generate_dll_phases(&c);
        assert_eq!(ph.len(), 10);
        for (k, p) in ph.iter().enumerate() {
            assert_relative_eq!(*p, k as f64 * 40e-12, epsilon = 1e-24);
        }
        let mut two = c.clone();
        two.n_phases = 2;
        assert_eq!(generate_dll_phases(&two), vec![0.0, 200e-12]);
    }
}
