//! The whole link as one faultable behavioral model. A fault is injected by
//! applying its behavior mutations to a golden [`LinkModel`].

use serde::{Deserialize, Serialize};

use crate::analog::{
    boost_tau, resolve_drives, transmit_arms, ArmDrive, ChargePump, ChargePumpState, Comparator, PumpStrength, Vcdl, Waveform,
    VCDL_BIAS_NODE,
};
use crate::config::LinkConfig;
use crate::error::{Error, Result};
use crate::fault::{mutation_for, BehaviorMutation, Effect, Fault, Netlist};

/// Conductance shares of the termination gate's nmos and pmos halves.
pub const TG_SHARE_N: f64 = 0.4;
pub const TG_SHARE_P: f64 = 0.6;
/// How far a bias-ratio change moves the common-mode node per unit of scale.
const BIAS_SENSITIVITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathState {
    Normal,
    Open,
    AlwaysOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverPath {
    pub state: PathState,
    pub strength: f64,
}

impl Default for DriverPath {
    fn default() -> Self {
        DriverPath { state: PathState::Normal, strength: 1.0 }
    }
}

impl DriverPath {
    fn conducts(&self, ctrl: bool) -> bool {
        match self.state {
            PathState::Normal => ctrl,
            PathState::Open => false,
            PathState::AlwaysOn => true,
        }
    }
}

/// Inverter driving the series FFE capacitors of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FfeDriver {
    pub pu: DriverPath,
    pub pd: DriverPath,
}

impl FfeDriver {
    /// Output for a high (`true`) or low input; a floating output holds `prev`.
    pub fn output(&self, high: bool, prev: f64, vdd: f64) -> f64 {
        let pu = self.pu.conducts(high);
        let pd = self.pd.conducts(!high);
        match (pu, pd) {
            (true, true) => vdd * self.pu.strength / (self.pu.strength + self.pd.strength),
            (true, false) => vdd / 2.0 * (1.0 + self.pu.strength.min(1.0)),
            (false, true) => vdd / 2.0 * (1.0 - self.pd.strength.min(1.0)),
            (false, false) => prev,
        }
    }

    /// Output sequence for a data sequence, starting from mid-rail.
    pub fn sequence(&self, data: impl Iterator<Item = bool>, vdd: f64) -> Vec<f64> {
        let mut prev = vdd / 2.0;
        data.map(|d| {
            prev = self.output(d, prev, vdd);
            prev
        })
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakDriver {
    pub scale: f64,
    /// Output shorted to ground.
    pub stuck_low: bool,
}

impl Default for WeakDriver {
    fn default() -> Self {
        WeakDriver { scale: 1.0, stuck_low: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArmTie {
    None,
    Rail(bool),
    /// Arm shorted to the common-mode node.
    Vcm,
}

/// Transmission-gate termination of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermArm {
    pub share_n: f64,
    pub share_p: f64,
    /// Extra scale on the conductance seen by fast edges.
    pub dyn_scale: f64,
    pub tie: ArmTie,
}

impl Default for TermArm {
    fn default() -> Self {
        TermArm { share_n: 1.0, share_p: 1.0, dyn_scale: 1.0, tie: ArmTie::None }
    }
}

impl TermArm {
    pub fn conductance(&self) -> f64 {
        TG_SHARE_N * self.share_n + TG_SHARE_P * self.share_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonMode {
    pub offset: f64,
    pub tie: Option<bool>,
    pub bias_scale: f64,
}

impl Default for CommonMode {
    fn default() -> Self {
        CommonMode { offset: 0.0, tie: None, bias_scale: 1.0 }
    }
}

/// Faults outside the analog universe, used to exercise the digital side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DigitalFault {
    /// The switch matrix never leaves its current phase.
    PhaseSelectStuck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub cfg: LinkConfig,
    /// Index 0 is the positive arm.
    pub ffe: [FfeDriver; 2],
    pub cs_short: [bool; 2],
    pub weak: [WeakDriver; 2],
    pub term: [TermArm; 2],
    pub vcm: CommonMode,
    pub flash_p: Comparator,
    pub flash_n: Comparator,
    pub rxwin_hi: Comparator,
    pub rxwin_lo: Comparator,
    pub cpbist_hi: Comparator,
    pub cpbist_lo: Comparator,
    pub weak_cp: ChargePump,
    pub strong_cp: ChargePump,
    pub vcdl: Vcdl,
    pub digital: Option<DigitalFault>,
}

/// DC comparator outputs for one static input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DcObservation {
    pub flash_p: bool,
    pub flash_n: bool,
    pub rxwin_hi: bool,
    pub rxwin_lo: bool,
    pub cpbist_hi: bool,
    pub cpbist_lo: bool,
}

impl DcObservation {
    pub const NAMES: [&'static str; 6] = ["flash_p", "flash_n", "rxwin_hi", "rxwin_lo", "cpbist_hi", "cpbist_lo"];

    pub fn bits(&self) -> [bool; 6] {
        [self.flash_p, self.flash_n, self.rxwin_hi, self.rxwin_lo, self.cpbist_hi, self.cpbist_lo]
    }
}

/// Time the idle charge pumps are left to settle before a DC readout.
pub const DC_SETTLE_TIME: f64 = 1e-6;

impl LinkModel {
    pub fn golden(cfg: &LinkConfig) -> Self {
        let off = cfg.comp_offset;
        LinkModel {
            cfg: cfg.clone(),
            ffe: [FfeDriver::default(); 2],
            cs_short: [false; 2],
            weak: [WeakDriver::default(); 2],
            term: [TermArm::default(); 2],
            vcm: CommonMode::default(),
            flash_p: Comparator::new(off),
            flash_n: Comparator::new(off),
            rxwin_hi: Comparator::new(off),
            rxwin_lo: Comparator::new(off),
            cpbist_hi: Comparator::new(cfg.cpbist_window),
            cpbist_lo: Comparator::new(cfg.cpbist_window),
            weak_cp: ChargePump::golden(PumpStrength::Weak, cfg),
            strong_cp: ChargePump::golden(PumpStrength::Strong, cfg),
            vcdl: Vcdl::default(),
            digital: None,
        }
    }

    /// Golden model with `faults` injected.
    pub fn with_faults(cfg: &LinkConfig, faults: &[Fault], netlist: &Netlist) -> Result<Self> {
        let mut m = LinkModel::golden(cfg);
        for f in faults {
            for mutation in mutation_for(f, netlist)? {
                m.apply(&mutation)?;
            }
        }
        Ok(m)
    }

    pub fn apply(&mut self, m: &BehaviorMutation) -> Result<()> {
        use Effect::*;
        let unsupported = || Error::Simulation(format!("no behavior for {:?} on `{}`", m.effect, m.target));
        let arm_index = |s: &str| if s.ends_with('p') { 0 } else { 1 };
        let target = m.target.as_str();
        match (target, m.effect) {
            ("tx.drv_p.pu" | "tx.drv_p.pd" | "tx.drv_n.pu" | "tx.drv_n.pd", e) => {
                let drv = &mut self.ffe[if target.starts_with("tx.drv_p") { 0 } else { 1 }];
                let path = if target.ends_with("pu") { &mut drv.pu } else { &mut drv.pd };
                match e {
                    ParamScale(k) => path.strength *= k,
                    Short => path.state = PathState::AlwaysOn,
                    Open => path.state = PathState::Open,
                    _ => return Err(unsupported()),
                }
            }
            ("tx.weak_p" | "tx.weak_n", e) => {
                let w = &mut self.weak[arm_index(target)];
                match e {
                    ParamScale(k) => w.scale *= k,
                    StuckLow => w.stuck_low = true,
                    _ => return Err(unsupported()),
                }
            }
            ("tx.cs_p" | "tx.cs_n", Short) => self.cs_short[arm_index(target)] = true,
            ("term.tg_p.n" | "term.tg_p.p" | "term.tg_n.n" | "term.tg_n.p", ParamScale(k)) => {
                let arm = &mut self.term[if target.starts_with("term.tg_p") { 0 } else { 1 }];
                if target.ends_with(".n") {
                    arm.share_n *= k;
                } else {
                    arm.share_p *= k;
                }
            }
            ("term.arm_p.dyn" | "term.arm_n.dyn", ParamScale(k)) => {
                self.term[if target == "term.arm_p.dyn" { 0 } else { 1 }].dyn_scale *= k
            }
            ("term.arm_p" | "term.arm_n", e) => {
                self.term[arm_index(target)].tie = match e {
                    StuckHigh => ArmTie::Rail(true),
                    StuckLow => ArmTie::Rail(false),
                    Short => ArmTie::Vcm,
                    _ => return Err(unsupported()),
                }
            }
            ("term.vcm", e) => match e {
                OffsetAdd(v) => self.vcm.offset += v,
                StuckHigh => self.vcm.tie = Some(true),
                StuckLow => self.vcm.tie = Some(false),
                _ => return Err(unsupported()),
            },
            ("term.bias", ParamScale(k)) => self.vcm.bias_scale *= k,
            ("flash_p" | "rxwin_hi" | "cpbist_hi", e) => {
                let c = self.comparator_mut(target);
                match e {
                    StuckHigh => c.stuck = Some(true),
                    StuckLow => c.stuck = Some(false),
                    OffsetAdd(v) => c.offset += v,
                    ParamScale(k) => c.gain *= k,
                    _ => return Err(unsupported()),
                }
            }
            ("flash_p.dyn" | "rxwin_hi.dyn" | "cpbist_hi.dyn", StuckHigh | StuckLow) => {
                let c = self.comparator_mut(target.trim_end_matches(".dyn"));
                c.dyn_stuck = Some(m.effect == StuckHigh);
            }
            ("cpw.cap", Short) => self.weak_cp.cap_short = true,
            ("cpw.vp", e) => match e {
                StuckHigh => self.weak_cp.balance.drift = Some(true),
                StuckLow => self.weak_cp.balance.drift = Some(false),
                OffsetAdd(v) => self.weak_cp.balance.offset += v,
                _ => return Err(unsupported()),
            },
            ("cpw.amp", ParamScale(k)) => self.weak_cp.balance.gain *= k,
            ("cps.bias", e) => match e {
                ParamScale(k) => self.strong_cp.current *= k,
                Open => self.strong_cp.current = 0.0,
                _ => return Err(unsupported()),
            },
            _ if target.starts_with("cpw.") || target.starts_with("cps.") => {
                let cp = if target.starts_with("cpw.") { &mut self.weak_cp } else { &mut self.strong_cp };
                let (_, port) = target.split_once('.').unwrap_or_default();
                match (port, m.effect) {
                    ("src_up" | "src_dn", e) => {
                        let src = if port == "src_up" { &mut cp.src_up } else { &mut cp.src_dn };
                        match e {
                            Open => src.open = true,
                            Short => src.bypass = true,
                            ParamScale(k) => src.scale *= k,
                            _ => return Err(unsupported()),
                        }
                    }
                    ("src_up.gate", Short) => cp.src_up.gate_tied = true,
                    ("src_dn.gate", Short) => cp.src_dn.gate_tied = true,
                    ("sw_up" | "sw_dn", e) => {
                        let sw = if port == "sw_up" { &mut cp.sw_up } else { &mut cp.sw_dn };
                        match e {
                            Open => sw.open = true,
                            Short => sw.always_on = true,
                            _ => return Err(unsupported()),
                        }
                    }
                    ("sw_up.gate", Short) => cp.sw_up.gate_tied = true,
                    ("sw_dn.gate", Short) => cp.sw_dn.gate_tied = true,
                    _ => return Err(unsupported()),
                }
            }
            ("vcdl.gain", ParamScale(k)) => self.vcdl.gain *= k,
            ("vcdl.vc_load", Short) => self.vcdl.vc_pinned = Some(VCDL_BIAS_NODE),
            ("vcdl", Open | StuckHigh | StuckLow) => self.vcdl.dead = true,
            _ => return Err(unsupported()),
        }
        Ok(())
    }

    fn comparator_mut(&mut self, unit: &str) -> &mut Comparator {
        match unit {
            "flash_p" => &mut self.flash_p,
            "rxwin_hi" => &mut self.rxwin_hi,
            _ => &mut self.cpbist_hi,
        }
    }

    pub fn vcm_node(&self) -> f64 {
        match self.vcm.tie {
            Some(true) => self.cfg.vdd,
            Some(false) => 0.0,
            None => self.cfg.vcm + self.vcm.offset + (self.vcm.bias_scale - 1.0) * BIAS_SENSITIVITY,
        }
    }

    /// Steady-state driver output of `arm` for line data `bit`.
    pub fn driver_dc(&self, arm: usize, bit: bool) -> f64 {
        let high = bit == (arm == 0);
        let vdd = self.cfg.vdd;
        // a floating output settles where its last active path left it
        let seq = self.ffe[arm].sequence([!high, high].into_iter(), vdd);
        seq[1]
    }

    fn arm_from_driver(&self, arm: usize, bit: bool, drv: f64) -> f64 {
        let cfg = &self.cfg;
        let vcm = self.vcm_node();
        let t = &self.term[arm];
        let mut v = if self.weak[arm].stuck_low {
            0.0
        } else {
            match t.tie {
                ArmTie::Rail(h) => {
                    if h {
                        cfg.vdd
                    } else {
                        0.0
                    }
                }
                ArmTie::Vcm => vcm,
                ArmTie::None => {
                    let s = if bit == (arm == 0) { 1.0 } else { -1.0 };
                    let g = t.conductance();
                    if g <= 0.0 {
                        vcm + s * cfg.vdd
                    } else {
                        vcm + s * cfg.swing / 2.0 * self.weak[arm].scale / g
                    }
                }
            }
        };
        if self.cs_short[arm] {
            v = 0.5 * v + 0.5 * drv;
        }
        v.clamp(0.0, cfg.vdd)
    }

    /// Settled line voltage of `arm` for static data `bit`.
    pub fn arm_level(&self, arm: usize, bit: bool) -> f64 {
        self.arm_from_driver(arm, bit, self.driver_dc(arm, bit))
    }

    /// Settled differential decision at the receiver for static data.
    pub fn static_decision(&self, bit: bool) -> bool {
        self.arm_level(0, bit) - self.arm_level(1, bit) > 0.0
    }

    /// DC test readout with the line held at `bit`.
    pub fn dc_observe(&self, bit: bool) -> DcObservation {
        let vp = self.arm_level(0, bit);
        let vn = self.arm_level(1, bit);
        let mid = self.cfg.v_mid;
        let cm = (vp + vn) / 2.0;
        let cp = self.idle_pump_point();
        DcObservation {
            flash_p: self.flash_p.eval(vp, mid),
            flash_n: self.flash_n.eval(vn, mid),
            rxwin_hi: self.rxwin_hi.eval(cm, mid),
            rxwin_lo: self.rxwin_lo.eval(mid, cm),
            cpbist_hi: self.cpbist_hi.eval(cp.vp, cp.vc),
            cpbist_lo: self.cpbist_lo.eval(cp.vc, cp.vp),
        }
    }

    /// Control and balance nodes after both pumps sat idle for
    /// `DC_SETTLE_TIME`, starting from mid-rail. Static data gives the phase
    /// detector nothing to act on.
    pub fn idle_pump_point(&self) -> ChargePumpState {
        let cfg = &self.cfg;
        let dt = 1e-9;
        let mut cp = ChargePumpState { vc: cfg.v_mid, vp: cfg.v_mid };
        for _ in 0..(DC_SETTLE_TIME / dt).round() as usize {
            cp = self.weak_cp.step(cp, false, false, dt, false, cfg);
            // vp belongs to the fine pump's balance path
            let vp = cp.vp;
            cp = self.strong_cp.step(cp, false, false, dt, false, cfg);
            cp.vp = vp;
            cp.vc = self.effective_vc(cp.vc);
        }
        cp
    }

    /// Receiver window comparators clocked at scan speed on a common-mode sample.
    pub fn rxwin_clocked(&self, cm: f64) -> (bool, bool) {
        let mid = self.cfg.v_mid;
        (self.rxwin_hi.eval_clocked(cm, mid), self.rxwin_lo.eval_clocked(mid, cm))
    }

    /// Receiver window comparator pair in its reset phase.
    pub fn rxwin_precharge(&self) -> (bool, bool) {
        (self.rxwin_hi.eval_precharge(), self.rxwin_lo.eval_precharge())
    }

    /// CP-BIST window flag: Vp and Vc disagree by more than the window.
    pub fn cpbist_flag(&self, vc: f64, vp: f64) -> bool {
        self.cpbist_hi.eval(vp, vc) || self.cpbist_lo.eval(vc, vp)
    }

    pub fn ffe_probe(&self, arm: usize, driver_out: f64) -> bool {
        let _ = arm;
        driver_out > self.cfg.vdd / 2.0
    }

    pub fn arm_drive(&self, arm: usize, bits: &[bool]) -> ArmDrive {
        let cfg = &self.cfg;
        let t = &self.term[arm];
        let driver = self.ffe[arm].sequence(bits.iter().map(|&b| b == (arm == 0)), cfg.vdd);
        let level = bits.iter().zip(&driver).map(|(&b, &d)| self.arm_from_driver(arm, b, d)).collect();
        let tied = self.weak[arm].stuck_low || t.tie != ArmTie::None;
        let g = t.conductance() * t.dyn_scale;
        let tau = if g > 0.0 { boost_tau(cfg) / g } else { 0.0 };
        ArmDrive { level, driver, coupled: !tied && !self.cs_short[arm], tau }
    }

    /// Transmitter output for a data sequence.
    pub fn transmit(&self, bits: &[bool], half_cycle_delay: bool) -> Waveform {
        let p = self.arm_drive(0, bits);
        let n = self.arm_drive(1, bits);
        transmit_arms(&p, &n, &self.cfg, half_cycle_delay)
    }

    /// Scan-mode control-node voltage with both pumps acting as switches.
    pub fn vc_test_drive(&self, hold: f64, up: bool, dn: bool, up_st: bool, dn_st: bool) -> f64 {
        let vdd = self.cfg.vdd;
        let mut drives = self.weak_cp.test_drives(up, dn, vdd);
        drives.extend(self.strong_cp.test_drives(up_st, dn_st, vdd));
        if let Some(v) = self.vcdl.vc_pinned {
            drives.push(v);
        }
        if self.weak_cp.cap_short {
            return 0.0;
        }
        resolve_drives(&drives, hold, vdd)
    }

    pub fn effective_vc(&self, vc: f64) -> f64 {
        self.vcdl.vc_pinned.unwrap_or(vc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::{reference_netlist, Defect};

    fn golden() -> LinkModel {
        LinkModel::golden(&LinkConfig::default())
    }

    fn faulty(id: &str, d: Defect) -> LinkModel {
        LinkModel::with_faults(&LinkConfig::default(), &[Fault::new(id, d)], &reference_netlist()).unwrap()
    }

    #[test]
    fn golden_dc_signatures() {
        let m = golden();
        assert_eq!(m.dc_observe(true).bits(), [true, false, false, false, false, false]);
        assert_eq!(m.dc_observe(false).bits(), [false, true, false, false, false, false]);
        assert!((m.arm_level(0, true) - 0.63).abs() < 1e-12);
    }

    #[test]
    fn driver_contention_and_float() {
        let vdd = 1.2;
        let g = FfeDriver::default();
        assert_eq!(g.output(true, 0.0, vdd), vdd);
        assert_eq!(g.output(false, vdd, vdd), 0.0);
        let mut pu_on = g;
        pu_on.pu.state = PathState::AlwaysOn;
        assert_eq!(pu_on.output(false, 0.0, vdd), vdd / 2.0);
        let mut pu_open = g;
        pu_open.pu.state = PathState::Open;
        assert_eq!(pu_open.output(true, 0.0, vdd), 0.0);
    }

    #[test]
    fn every_reference_fault_builds() {
        let net = reference_netlist();
        let cfg = LinkConfig::default();
        for f in crate::fault::enumerate_faults(&net) {
            let m = LinkModel::with_faults(&cfg, &[f.clone()], &net);
            assert!(m.is_ok(), "{f}: {:?}", m.err());
            assert_ne!(m.unwrap(), golden(), "{f} changed nothing");
        }
    }

    #[test]
    fn cap_short_unbalances_arms() {
        let m = faulty("ffe.CS_P", Defect::CapacitorShort);
        assert_ne!(m.dc_observe(true), golden().dc_observe(true));
    }

    #[test]
    fn tg_drain_open_invisible_at_dc() {
        let m = faulty("term.MTN_P", Defect::DrainOpen);
        for b in [true, false] {
            assert_eq!(m.dc_observe(b), golden().dc_observe(b));
        }
        assert!(m.arm_drive(0, &[true, false]).tau > golden().arm_drive(0, &[true, false]).tau);
    }

    #[test]
    fn test_mode_contention() {
        let m = faulty("weakcp.M1", Defect::DrainSourceShort);
        assert_eq!(m.vc_test_drive(0.6, false, true, false, false), 0.6);
        assert_eq!(golden().vc_test_drive(0.6, false, true, false, false), 0.0);
        assert_eq!(golden().vc_test_drive(0.6, false, false, false, false), 0.6);
    }
}
