//! Cycle-accurate digital blocks: phase detector, coarse-loop FSM, ring
//! counter and switch matrix, lock counter, scan chains.

use serde::{Deserialize, Serialize};

use crate::analog::WindowCode;
use crate::error::{Error, Result};

/// Three consecutive samples seen by the bang-bang phase detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PdSample {
    /// Previous center sample (a).
    pub prev_center: bool,
    /// Edge sample between the two centers (t).
    pub edge: bool,
    /// Current center sample (b).
    pub center: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PdOutput {
    pub up: bool,
    pub dn: bool,
    pub retimed: bool,
}

/// UP means the edge sample still saw the old bit: sampling is early and the
/// delay should grow. DN is the mirror case.
pub fn step_alexander_pd(s: PdSample) -> PdOutput {
    let transition = s.prev_center != s.center;
    PdOutput {
        up: transition && s.edge == s.prev_center,
        dn: transition && s.edge == s.center,
        retimed: s.center,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FsmState {
    /// Strong pump pull-up command.
    pub up_st: bool,
    /// Strong pump pull-down command.
    pub dn_st: bool,
    /// Ring counter enable (one coarse step this tick).
    pub enable: bool,
    /// Ring direction: true steps to the later phase.
    pub updn: bool,
    pub window_code: WindowCode,
}

impl FsmState {
    pub fn coarse_request(&self) -> bool {
        self.enable
    }
}

/// Next FSM state for a window code. Control voltage above the window means
/// the fine delay is exhausted: step to the later phase and pull vc down.
/// `run` gates the coarse loop (false holds everything idle).
pub fn step_control_fsm(_state: FsmState, window_code: WindowCode, run: bool) -> FsmState {
    let idle = FsmState { window_code, ..FsmState::default() };
    if !run {
        return idle;
    }
    match (window_code.above, window_code.below) {
        (true, false) => FsmState { up_st: false, dn_st: true, enable: true, updn: true, window_code },
        (false, true) => FsmState { up_st: true, dn_st: false, enable: true, updn: false, window_code },
        // (1,1) cannot come from an ordered window; treat as no decision
        _ => idle,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingCounter {
    pub q: Vec<bool>,
}

impl RingCounter {
    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut q = vec![false; n];
        q[index % n] = true;
        RingCounter { q }
    }

    pub fn zeros(n: usize) -> Self {
        RingCounter { q: vec![false; n] }
    }

    pub fn weight(&self) -> usize {
        self.q.iter().filter(|&&b| b).count()
    }

    /// Index of the set bit when one-hot.
    pub fn index(&self) -> Option<usize> {
        if self.weight() == 1 {
            self.q.iter().position(|&b| b)
        } else {
            None
        }
    }

    pub fn step(&self, enable: bool, updn: bool) -> Self {
        step_ring_counter(self, enable, updn)
    }
}

pub fn step_ring_counter(rc: &RingCounter, enable: bool, updn: bool) -> RingCounter {
    if !enable || rc.q.is_empty() {
        return rc.clone();
    }
    let mut q = rc.q.clone();
    if updn {
        q.rotate_right(1);
    } else {
        q.rotate_left(1);
    }
    RingCounter { q }
}

/// Switch matrix: the selected DLL phase, or None when no bit is set.
pub fn select_phase(rc: &RingCounter, phases: &[f64]) -> Result<Option<f64>> {
    if rc.q.len() != phases.len() {
        return Err(Error::Simulation(format!(
            "switch matrix has {} phases but the ring counter has {} bits",
            phases.len(),
            rc.q.len()
        )));
    }
    match rc.weight() {
        0 => Ok(None),
        1 => Ok(rc.index().map(|i| phases[i])),
        w => Err(Error::OneHotViolation(w)),
    }
}

/// 3-bit saturating counter of coarse correction requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct LockCounter {
    pub count: u8,
}

pub const LOCK_COUNTER_MAX: u8 = 7;

pub fn step_lock_detector(lc: LockCounter, coarse_request: bool) -> LockCounter {
    LockCounter { count: (lc.count + coarse_request as u8).min(LOCK_COUNTER_MAX) }
}

impl LockCounter {
    pub fn bits(&self) -> [bool; 3] {
        [self.count & 4 != 0, self.count & 2 != 0, self.count & 1 != 0]
    }

    pub fn from_bits(b: [bool; 3]) -> Self {
        LockCounter { count: (b[0] as u8) << 2 | (b[1] as u8) << 1 | b[2] as u8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    Shift,
    Capture,
    Functional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanCell {
    pub name: String,
    pub value: bool,
    /// Cell output forced regardless of what was shifted or captured.
    pub stuck: Option<bool>,
    /// False when the cell receives no clock.
    pub clocked: bool,
}

/// Cells in shift order: index 0 is next to scan-in, the last cell drives
/// scan-out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanChain {
    pub name: String,
    pub cells: Vec<ScanCell>,
    pub mode: ScanMode,
}

impl ScanChain {
    pub fn new<S: AsRef<str>>(name: &str, cells: &[S]) -> Self {
        ScanChain {
            name: name.to_string(),
            cells: cells
                .iter()
                .map(|c| ScanCell { name: c.as_ref().to_string(), value: false, stuck: None, clocked: true })
                .collect(),
            mode: ScanMode::Shift,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        self.position(name).map(|i| self.read(i))
    }

    pub fn read(&self, i: usize) -> bool {
        let c = &self.cells[i];
        c.stuck.unwrap_or(c.value)
    }

    pub fn values(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.read(i)).collect()
    }

    pub fn set(&mut self, name: &str, v: bool) {
        if let Some(i) = self.position(name) {
            self.cells[i].value = v;
        }
    }

    /// Shifts `in_bits` in, one clock per bit; returns the scan-out stream.
    pub fn shift(&mut self, in_bits: &[bool]) -> Result<Vec<bool>> {
        if self.mode == ScanMode::Functional {
            return Err(Error::ScanMode(self.name.clone()));
        }
        self.mode = ScanMode::Shift;
        let mut out = Vec::with_capacity(in_bits.len());
        for &b in in_bits {
            let n = self.len();
            if n == 0 {
                out.push(b);
                continue;
            }
            out.push(self.read(n - 1));
            // every clocked cell loads its predecessor's output
            let prev: Vec<bool> = (0..n).map(|i| if i == 0 { b } else { self.read(i - 1) }).collect();
            for (cell, p) in self.cells.iter_mut().zip(prev) {
                if cell.clocked {
                    cell.value = p;
                }
            }
        }
        Ok(out)
    }

    /// Loads functional values into the clocked cells.
    pub fn capture(&mut self, values: &[bool]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::CaptureWidth { expected: self.len(), got: values.len() });
        }
        for (cell, &v) in self.cells.iter_mut().zip(values) {
            if cell.clocked {
                cell.value = v;
            }
        }
        self.mode = ScanMode::Shift;
        Ok(())
    }

    /// Scans out the current contents while loading zeros, in scan-out order
    /// reversed so that element i is cell i.
    pub fn unload(&mut self) -> Result<Vec<bool>> {
        let n = self.len();
        let mut out = self.shift(&vec![false; n])?;
        out.reverse();
        Ok(out)
    }

    /// Loads `pattern` (element i goes to cell i) in exactly `len()` clocks.
    pub fn load(&mut self, pattern: &[bool]) -> Result<Vec<bool>> {
        if pattern.len() != self.len() {
            return Err(Error::CaptureWidth { expected: self.len(), got: pattern.len() });
        }
        let seq: Vec<bool> = pattern.iter().rev().copied().collect();
        self.shift(&seq)
    }
}

pub fn scan_shift(chain: &ScanChain, in_bits: &[bool]) -> Result<(ScanChain, Vec<bool>)> {
    let mut c = chain.clone();
    let out = c.shift(in_bits)?;
    Ok((c, out))
}

pub fn scan_capture(chain: &ScanChain, functional_values: &[bool]) -> Result<ScanChain> {
    let mut c = chain.clone();
    c.capture(functional_values)?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pd_examples() {
        let pd = |a, t, b| {
            let o = step_alexander_pd(PdSample { prev_center: a, edge: t, center: b });
            (o.up, o.dn, o.retimed)
        };
        assert_eq!(pd(true, true, true), (false, false, true));
        assert_eq!(pd(false, false, true), (true, false, true));
        assert_eq!(pd(false, true, true), (false, true, true));
    }

    #[test]
    fn fsm_examples() {
        let s = FsmState::default();
        let n = step_control_fsm(s, WindowCode::INSIDE, true);
        assert!(!n.enable && !n.up_st && !n.dn_st);
        let n = step_control_fsm(s, WindowCode::ABOVE, true);
        assert!(n.enable && n.dn_st && !n.up_st && n.updn);
        let n = step_control_fsm(s, WindowCode::BELOW, true);
        assert!(n.enable && n.up_st && !n.dn_st && !n.updn);
        let n = step_control_fsm(s, WindowCode::BELOW, false);
        assert!(!n.enable && !n.up_st);
    }

    #[test]
    fn ring_examples() {
        let r = RingCounter::one_hot(10, 0);
        assert_eq!(r.step(true, true).index(), Some(1));
        assert_eq!(r.step(true, false).index(), Some(9));
        assert_eq!(r.step(false, true), r);
        let z = RingCounter::zeros(10);
        assert_eq!(z.step(true, true), z);
    }

    #[test]
    fn switch_matrix() {
        let phases: Vec<f64> = (0..10).map(|k| k as f64 * 40e-12).collect();
        let r = RingCounter::one_hot(10, 3);
        assert!((select_phase(&r, &phases).unwrap().unwrap() - 120e-12).abs() < 1e-24);
        assert_eq!(select_phase(&RingCounter::zeros(10), &phases).unwrap(), None);
        let mut two = RingCounter::zeros(10);
        two.q[1] = true;
        two.q[4] = true;
        assert!(matches!(select_phase(&two, &phases), Err(Error::OneHotViolation(2))));
    }

    #[test]
    fn lock_counter_saturates() {
        let full = LockCounter { count: 7 };
        assert_eq!(step_lock_detector(full, true).count, 7);
        assert_eq!(step_lock_detector(LockCounter::default(), false).count, 0);
        for c in 0..8u8 {
            let lc = LockCounter { count: c };
            assert_eq!(LockCounter::from_bits(lc.bits()), lc);
        }
    }

    #[test]
    fn shift_register_semantics() {
        let mut c = ScanChain::new("t", &["a", "b", "c"]);
        c.capture(&[true, false, true]).unwrap();
        let out = c.shift(&[false, true, true, false, false, false]).unwrap();
        // prior contents leave last cell first, then the new pattern
        assert_eq!(out, vec![true, false, true, false, true, true]);
    }

    #[test]
    fn stuck_cell_corrupts_continuity() {
        let mut c = ScanChain::new("t", &["a", "b", "c", "d"]);
        c.cells[1].stuck = Some(false);
        let pattern: Vec<bool> = (0..8).map(|i| i % 2 == 0).collect();
        let out = c.shift(&pattern).unwrap();
        assert!(out[4..].iter().all(|&b| !b));
    }

    #[test]
    fn functional_mode_rejects_shift() {
        let mut c = ScanChain::new("t", &["a"]);
        c.mode = ScanMode::Functional;
        assert!(c.shift(&[true]).is_err());
        assert!(c.capture(&[true, false]).is_err());
    }

    #[test]
    fn capture_then_unload() {
        let mut c = ScanChain::new("t", &["a", "b", "c"]);
        c.capture(&[true, true, false]).unwrap();
        assert_eq!(c.unload().unwrap(), vec![true, true, false]);
        c.load(&[false, true, true]).unwrap();
        assert_eq!(c.values(), vec![false, true, true]);
    }
}
