//! Link parameters and the flat `key = value` configuration format.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical and timing parameters of the link, SI base units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub vdd: f64,
    pub data_rate: f64,
    /// Differential logic swing on the line.
    pub swing: f64,
    /// Main series coupling capacitor.
    pub cs: f64,
    /// Second-tap coupling capacitor.
    pub cs_alpha: f64,
    /// Nominal weak-driver transconductance; the line swing is referenced to it.
    pub gm_weak: f64,
    /// Termination resistance per arm.
    pub rl: f64,
    pub vcm: f64,
    pub line_r_per_mm: f64,
    pub line_c_per_mm: f64,
    pub line_len_mm: f64,
    pub ladder_sections: usize,
    pub samples_per_bit: usize,
    pub scan_freq: f64,
    pub comp_offset: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    pub v_mid: f64,
    pub cpbist_window: f64,
    pub cp_cap: f64,
    pub i_weak: f64,
    pub i_strong: f64,
    pub n_phases: usize,
    pub vcdl_min_delay: f64,
    pub vcdl_range: f64,
    /// Coarse-loop clock divider ratio.
    pub divider: usize,
    /// Receiver clock phase relative to the transmitter clock.
    pub rx_clock_offset: f64,
    /// Coarse ticks clocked between scan phases in the charge-pump reset check.
    pub reset_ticks: usize,
    pub prbs_seed: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            vdd: 1.2,
            data_rate: 2.5e9,
            swing: 0.060,
            cs: 400e-15,
            cs_alpha: 20e-15,
            gm_weak: 50e-6,
            rl: 400.0,
            vcm: 0.6,
            line_r_per_mm: 100.0,
            line_c_per_mm: 200e-15,
            line_len_mm: 10.0,
            ladder_sections: 10,
            samples_per_bit: 4,
            scan_freq: 100e6,
            comp_offset: 0.015,
            window_lo: 0.3,
            window_hi: 0.9,
            v_mid: 0.6,
            cpbist_window: 0.150,
            cp_cap: 200e-15,
            i_weak: 1e-6,
            i_strong: 20e-6,
            n_phases: 10,
            vcdl_min_delay: 20e-12,
            vcdl_range: 50e-12,
            divider: 8,
            rx_clock_offset: 0.0,
            reset_ticks: 4,
            prbs_seed: 0x5A,
        }
    }
}

impl LinkConfig {
    pub fn bit_period(&self) -> f64 {
        1.0 / self.data_rate
    }

    pub fn phase_step(&self) -> f64 {
        self.bit_period() / self.n_phases as f64
    }

    pub fn coarse_tick(&self) -> f64 {
        self.bit_period() * self.divider as f64
    }

    pub fn line_capacitance(&self) -> f64 {
        self.line_c_per_mm * self.line_len_mm
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vdd", self.vdd),
            ("data_rate", self.data_rate),
            ("swing", self.swing),
            ("gm_weak", self.gm_weak),
            ("rl", self.rl),
            ("vcm", self.vcm),
            ("line_r_per_mm", self.line_r_per_mm),
            ("line_c_per_mm", self.line_c_per_mm),
            ("line_len_mm", self.line_len_mm),
            ("scan_freq", self.scan_freq),
            ("comp_offset", self.comp_offset),
            ("cpbist_window", self.cpbist_window),
            ("cp_cap", self.cp_cap),
            ("i_weak", self.i_weak),
            ("i_strong", self.i_strong),
            ("vcdl_range", self.vcdl_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("cs", self.cs), ("cs_alpha", self.cs_alpha), ("vcdl_min_delay", self.vcdl_min_delay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.swing <= 2.0 * self.comp_offset {
            return Err(Error::Config("swing must exceed twice the comparator offset".into()));
        }
        if !(self.window_lo < self.v_mid && self.v_mid < self.window_hi) {
            return Err(Error::Config("window thresholds must satisfy window_lo < v_mid < window_hi".into()));
        }
        if self.window_lo < 0.0 || self.window_hi > self.vdd {
            return Err(Error::Config("window thresholds must lie within the supply".into()));
        }
        if self.n_phases < 2 {
            return Err(Error::Config("n_phases must be at least 2".into()));
        }
        if self.vcdl_range <= self.phase_step() {
            return Err(Error::Config("vcdl_range must exceed one DLL phase step".into()));
        }
        if self.ladder_sections == 0 || self.samples_per_bit < 2 || self.divider == 0 || self.reset_ticks == 0 {
            return Err(Error::Config(
                "ladder_sections, divider and reset_ticks must be >= 1; samples_per_bit >= 2".into(),
            ));
        }
        if self.prbs_seed & 0x7F == 0 {
            return Err(Error::Config("prbs_seed must be nonzero in its low 7 bits".into()));
        }
        Ok(())
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(key: &str, v: &str) -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a number")))
        }
        fn count(key: &str, v: &str) -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a non-negative integer")))
        }
        match key {
            "vdd" => self.vdd = num(key, value)?,
            "data_rate" => self.data_rate = num(key, value)?,
            "swing" => self.swing = num(key, value)?,
            "cs" => self.cs = num(key, value)?,
            "cs_alpha" => self.cs_alpha = num(key, value)?,
            "gm_weak" => self.gm_weak = num(key, value)?,
            "rl" => self.rl = num(key, value)?,
            "vcm" => self.vcm = num(key, value)?,
            "line_r_per_mm" => self.line_r_per_mm = num(key, value)?,
            "line_c_per_mm" => self.line_c_per_mm = num(key, value)?,
            "line_len_mm" => self.line_len_mm = num(key, value)?,
            "ladder_sections" => self.ladder_sections = count(key, value)?,
            "samples_per_bit" => self.samples_per_bit = count(key, value)?,
            "scan_freq" => self.scan_freq = num(key, value)?,
            "comp_offset" => self.comp_offset = num(key, value)?,
            "window_lo" => self.window_lo = num(key, value)?,
            "window_hi" => self.window_hi = num(key, value)?,
            "v_mid" => self.v_mid = num(key, value)?,
            "cpbist_window" => self.cpbist_window = num(key, value)?,
            "cp_cap" => self.cp_cap = num(key, value)?,
            "i_weak" => self.i_weak = num(key, value)?,
            "i_strong" => self.i_strong = num(key, value)?,
            "n_phases" => self.n_phases = count(key, value)?,
            "vcdl_min_delay" => self.vcdl_min_delay = num(key, value)?,
            "vcdl_range" => self.vcdl_range = num(key, value)?,
            "divider" => self.divider = count(key, value)?,
            "rx_clock_offset" => self.rx_clock_offset = num(key, value)?,
            "reset_ticks" => self.reset_ticks = count(key, value)?,
            "prbs_seed" => self.prbs_seed = parse_seed(value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }
}

/// Accepts decimal or `0x`-prefixed hex.
pub fn parse_seed(v: &str) -> Result<u32> {
    let v = v.trim();
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => v.parse::<u32>(),
    };
    parsed.map_err(|_| Error::Config(format!("`{v}` is not a valid seed")))
}

/// Link parameters plus run-level settings read from one config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub link: LinkConfig,
    pub netlists: Option<PathBuf>,
    pub seed: Option<u32>,
    pub duration: f64,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { link: LinkConfig::default(), netlists: None, seed: None, duration: 2e-6, output: None }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut rc = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", idx + 1)))?;
            rc.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        rc.validate()?;
        Ok(rc)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "netlists" => self.netlists = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse_seed(value)?),
            "duration" => {
                self.duration = value
                    .parse()
                    .map_err(|_| Error::Config(format!("`duration`: `{value}` is not a number")))?
            }
            _ => self.link.set(key, value)?,
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("duration must be positive".into()));
        }
        self.link.validate()
    }
}
