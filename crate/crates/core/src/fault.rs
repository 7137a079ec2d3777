//! Structural netlists, the defect universe, and the defect-to-behavior
//! dictionary that turns a transistor-level defect into mutations of the
//! behavioral model.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceKind {
    Nmos,
    Pmos,
    Capacitor,
    /// One device of a transmission-gate resistor; faulted like a MOS.
    ResistorTgate,
}

impl DeviceKind {
    pub fn is_mos(self) -> bool {
        !matches!(self, DeviceKind::Capacitor)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Nmos => "nmos",
            DeviceKind::Pmos => "pmos",
            DeviceKind::Capacitor => "capacitor",
            DeviceKind::ResistorTgate => "resistor-tgate",
        }
    }
}

impl FromStr for DeviceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "nmos" => Ok(DeviceKind::Nmos),
            "pmos" => Ok(DeviceKind::Pmos),
            "capacitor" => Ok(DeviceKind::Capacitor),
            "resistor-tgate" => Ok(DeviceKind::ResistorTgate),
            other => Err(format!("unknown device kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    TransmitterFfe,
    WeakDriver,
    Termination,
    DcComparators,
    WindowComparatorRx,
    WeakCp,
    StrongCp,
    CpBistComparator,
    Vcdl,
    ControlFsmAnalogInterface,
}

impl Block {
    pub const ALL: [Block; 10] = [
        Block::TransmitterFfe,
        Block::WeakDriver,
        Block::Termination,
        Block::DcComparators,
        Block::WindowComparatorRx,
        Block::WeakCp,
        Block::StrongCp,
        Block::CpBistComparator,
        Block::Vcdl,
        Block::ControlFsmAnalogInterface,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::TransmitterFfe => "transmitter-ffe",
            Block::WeakDriver => "weak-driver",
            Block::Termination => "termination",
            Block::DcComparators => "dc-comparators",
            Block::WindowComparatorRx => "window-comparator-rx",
            Block::WeakCp => "weak-cp",
            Block::StrongCp => "strong-cp",
            Block::CpBistComparator => "cp-bist-comparator",
            Block::Vcdl => "vcdl",
            Block::ControlFsmAnalogInterface => "control-fsm-analog-interface",
        }
    }
}

impl FromStr for Block {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        // singular "dc-comparator" is accepted as an alias
        if s == "dc-comparator" {
            return Ok(Block::DcComparators);
        }
        Block::ALL.into_iter().find(|b| b.as_str() == s).ok_or(())
    }
}

/// Structural defect classes, in the order coverage tables report them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Defect {
    GateOpen,
    DrainOpen,
    SourceOpen,
    GateDrainShort,
    GateSourceShort,
    DrainSourceShort,
    CapacitorShort,
}

impl Defect {
    pub const ALL: [Defect; 7] = [
        Defect::GateOpen,
        Defect::DrainOpen,
        Defect::SourceOpen,
        Defect::GateDrainShort,
        Defect::GateSourceShort,
        Defect::DrainSourceShort,
        Defect::CapacitorShort,
    ];

    pub const MOS: [Defect; 6] = [
        Defect::GateOpen,
        Defect::DrainOpen,
        Defect::SourceOpen,
        Defect::GateDrainShort,
        Defect::GateSourceShort,
        Defect::DrainSourceShort,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Defect::GateOpen => "gate-open",
            Defect::DrainOpen => "drain-open",
            Defect::SourceOpen => "source-open",
            Defect::GateDrainShort => "gate-drain-short",
            Defect::GateSourceShort => "gate-source-short",
            Defect::DrainSourceShort => "drain-source-short",
            Defect::CapacitorShort => "capacitor-short",
        }
    }

    /// Row label used in coverage tables.
    pub fn label(self) -> &'static str {
        match self {
            Defect::GateOpen => "Gate open",
            Defect::DrainOpen => "Drain open",
            Defect::SourceOpen => "Source open",
            Defect::GateDrainShort => "Gate drain short",
            Defect::GateSourceShort => "Gate source short",
            Defect::DrainSourceShort => "Drain source short",
            Defect::CapacitorShort => "Capacitor short",
        }
    }

    pub fn legal_for(self, kind: DeviceKind) -> bool {
        match self {
            Defect::CapacitorShort => kind == DeviceKind::Capacitor,
            _ => kind.is_mos(),
        }
    }
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Defect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Defect::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::FaultNotInUniverse(format!("unknown defect class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub kind: DeviceKind,
    pub block: Block,
    pub width_um: f64,
    pub length_um: f64,
    pub behavior_role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fault {
    pub device_id: String,
    pub defect: Defect,
}

impl Fault {
    pub fn new(device_id: impl Into<String>, defect: Defect) -> Self {
        Fault { device_id: device_id.into(), defect }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.device_id, self.defect)
    }
}

/// Parses `device_id:defect`.
impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (id, defect) = s
            .rsplit_once(':')
            .ok_or_else(|| Error::FaultNotInUniverse(format!("`{s}` is not of the form id:defect")))?;
        Ok(Fault::new(id, defect.parse()?))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub devices: Vec<Device>,
    pub blocks: Vec<Block>,
}

impl Netlist {
    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn mos_count(&self) -> usize {
        self.devices.iter().filter(|d| d.kind.is_mos()).count()
    }

    pub fn capacitor_count(&self) -> usize {
        self.devices.len() - self.mos_count()
    }

    /// Concatenates netlists in order. Device ids must stay unique.
    pub fn merge<I: IntoIterator<Item = Netlist>>(parts: I) -> Result<Netlist> {
        let mut out = Netlist { devices: Vec::new(), blocks: Block::ALL.to_vec() };
        let mut seen = HashSet::new();
        for part in parts {
            for dev in part.devices {
                if !seen.insert(dev.id.clone()) {
                    return Err(Error::DuplicateDevice { line: 0, id: dev.id });
                }
                out.devices.push(dev);
            }
        }
        Ok(out)
    }

    /// Loads and merges every `*.net` file of a directory, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Netlist> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "net"))
            .collect();
        paths.sort();
        let mut parts = Vec::with_capacity(paths.len());
        for p in paths {
            parts.push(parse_netlist(&std::fs::read_to_string(&p)?)?);
        }
        Netlist::merge(parts)
    }
}

/// Parses the line-oriented netlist format:
/// `<id> <kind> <block> <W_um> <L_um> <behavior_role>`, `#` comments.
pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let mut devices = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::NetlistSyntax {
                line,
                msg: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let kind: DeviceKind = fields[1]
            .parse()
            .map_err(|msg| Error::NetlistSyntax { line, msg })?;
        let block: Block = fields[2]
            .parse()
            .map_err(|_| Error::UnknownBlock { line, block: fields[2].to_string() })?;
        let dim = |s: &str, what: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
                _ => Err(Error::NetlistSyntax { line, msg: format!("bad {what} `{s}`") }),
            }
        };
        let width_um = dim(fields[3], "width")?;
        let length_um = dim(fields[4], "length")?;
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateDevice { line, id });
        }
        devices.push(Device {
            id,
            kind,
            block,
            width_um,
            length_um,
            behavior_role: fields[5].to_string(),
        });
    }
    Ok(Netlist { devices, blocks: Block::ALL.to_vec() })
}

/// Reference netlist files shipped with the crate, as (file name, contents).
pub const REFERENCE_NETLISTS: [(&str, &str); 9] = [
    ("transmitter_ffe.net", include_str!("../netlists/transmitter_ffe.net")),
    ("weak_driver.net", include_str!("../netlists/weak_driver.net")),
    ("termination.net", include_str!("../netlists/termination.net")),
    ("termination_comparator.net", include_str!("../netlists/termination_comparator.net")),
    ("rx_window_comparator.net", include_str!("../netlists/rx_window_comparator.net")),
    ("weak_cp.net", include_str!("../netlists/weak_cp.net")),
    ("strong_cp.net", include_str!("../netlists/strong_cp.net")),
    ("cpbist_comparator.net", include_str!("../netlists/cpbist_comparator.net")),
    ("vcdl.net", include_str!("../netlists/vcdl.net")),
];

/// All reference netlists merged into one.
pub fn reference_netlist() -> Netlist {
    Netlist::merge(
        REFERENCE_NETLISTS
            .iter()
            .map(|(_, text)| parse_netlist(text).expect("shipped netlist parses")),
    )
    .expect("shipped netlists have unique ids")
}

/// Every (device, defect) pair the structural model admits, device order
/// first, then defect class order.
pub fn enumerate_faults(netlist: &Netlist) -> Vec<Fault> {
    let mut out = Vec::with_capacity(netlist.devices.len() * 6);
    for dev in &netlist.devices {
        let classes: &[Defect] = if dev.kind.is_mos() { &Defect::MOS } else { &[Defect::CapacitorShort] };
        out.extend(classes.iter().map(|&d| Fault::new(dev.id.clone(), d)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Effect {
    StuckHigh,
    StuckLow,
    /// Path removed.
    Open,
    /// Paths merged (bypass or node tie).
    Short,
    ParamScale(f64),
    OffsetAdd(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMutation {
    pub target: String,
    pub effect: Effect,
}

impl BehaviorMutation {
    fn new(target: impl Into<String>, effect: Effect) -> Self {
        BehaviorMutation { target: target.into(), effect }
    }
}

/// Magnitude of the offset a diode-connected comparator input adds.
pub const GD_SHORT_OFFSET: f64 = 0.300;

/// Maps a fault to the behavioral mutations it causes.
pub fn mutation_for(fault: &Fault, netlist: &Netlist) -> Result<Vec<BehaviorMutation>> {
    let dev = netlist
        .device(&fault.device_id)
        .ok_or_else(|| Error::FaultNotInUniverse(fault.to_string()))?;
    if !fault.defect.legal_for(dev.kind) {
        return Err(Error::FaultNotInUniverse(fault.to_string()));
    }
    role_mutations(&dev.behavior_role, dev.kind, fault.defect).ok_or_else(|| Error::UnknownRole {
        device: dev.id.clone(),
        role: dev.behavior_role.clone(),
    })
}

fn role_mutations(role: &str, kind: DeviceKind, defect: Defect) -> Option<Vec<BehaviorMutation>> {
    use Defect::*;
    use Effect::*;

    if defect == CapacitorShort {
        return match role {
            "tx.cs_p" | "tx.cs_n" | "cpw.cap" => Some(vec![BehaviorMutation::new(role, Short)]),
            _ => None,
        };
    }
    let one = |target: &str, effect: Effect| Some(vec![BehaviorMutation::new(target, effect)]);
    let (unit, port) = role.split_once('.')?;
    let pmos = kind == DeviceKind::Pmos;

    match unit {
        "tx" => match port {
            "drv_p.pu" | "drv_p.pd" | "drv_n.pu" | "drv_n.pd" => match defect {
                GateDrainShort => one(role, ParamScale(0.2)),
                DrainSourceShort => one(role, Short),
                _ => one(role, Open),
            },
            "weak_p" | "weak_n" => match defect {
                GateDrainShort => one(role, ParamScale(0.25)),
                DrainSourceShort => one(role, StuckLow),
                _ => one(role, ParamScale(0.0)),
            },
            _ => None,
        },
        "term" => {
            if let Some(stack) = port.strip_prefix("bias.") {
                let upper = match stack {
                    "hi_p" | "mid_p" => true,
                    "mid_n" | "lo_n" => false,
                    _ => return None,
                };
                let sign = if upper { 1.0 } else { -1.0 };
                return match defect {
                    // already diode-connected
                    GateDrainShort => one("term.bias", ParamScale(0.95)),
                    GateSourceShort | DrainSourceShort => one("term.vcm", OffsetAdd(0.15 * sign)),
                    _ => one("term.vcm", OffsetAdd(-GD_SHORT_OFFSET * sign)),
                };
            }
            let arm = match port {
                "tg_p.n" | "tg_p.p" => "term.arm_p",
                "tg_n.n" | "tg_n.p" => "term.arm_n",
                _ => return None,
            };
            // nmos gate sits at VDD, pmos gate at GND
            let gate_rail = if pmos { StuckLow } else { StuckHigh };
            match defect {
                GateOpen => one(role, ParamScale(0.0)),
                DrainOpen | SourceOpen => one(&format!("{arm}.dyn"), ParamScale(0.25)),
                GateDrainShort => one("term.vcm", gate_rail),
                GateSourceShort => one(arm, gate_rail),
                DrainSourceShort => one(arm, Short),
                CapacitorShort => None,
            }
        }
        "flash_p" | "rxwin_hi" | "cpbist_hi" => comparator_mutation(unit, port, defect),
        "cpw" => weak_cp_mutation(role, port, defect),
        "cps" => strong_cp_mutation(role, port, defect),
        "vcdl" => vcdl_mutation(port, defect),
        _ => None,
    }
}

fn comparator_mutation(unit: &str, port: &str, defect: Defect) -> Option<Vec<BehaviorMutation>> {
    use Defect::*;
    use Effect::*;
    let s = GD_SHORT_OFFSET;
    // columns: gate-open, drain-open, source-open, gate-drain, gate-source, drain-source
    let row: [Effect; 6] = match port {
        "in_p" => [StuckLow, StuckLow, StuckLow, OffsetAdd(s), StuckLow, StuckHigh],
        "in_n" => [StuckHigh, StuckHigh, StuckHigh, OffsetAdd(-s), StuckHigh, StuckLow],
        "load_d" => [StuckHigh, StuckLow, StuckLow, ParamScale(0.9), StuckLow, StuckHigh],
        "load_m" => [StuckLow, StuckHigh, StuckHigh, OffsetAdd(0.05), StuckHigh, StuckLow],
        "tail" => [StuckLow, StuckLow, StuckLow, ParamScale(0.5), StuckLow, StuckHigh],
        // clocked evaluation switch: a dead clock leaves the precharged output high
        "clk" => [StuckHigh, StuckHigh, StuckHigh, StuckHigh, StuckHigh, StuckHigh],
        "inv_pu" => [StuckLow, StuckLow, StuckLow, StuckLow, StuckLow, StuckHigh],
        "inv_pd" => [StuckHigh, StuckHigh, StuckHigh, StuckHigh, StuckHigh, StuckLow],
        // first gain stage, one inversion ahead of the output inverter
        "pre_pu" => [StuckHigh, StuckHigh, StuckHigh, StuckHigh, StuckHigh, StuckLow],
        "pre_pd" => [StuckLow, StuckLow, StuckLow, StuckLow, StuckLow, StuckHigh],
        _ => return None,
    };
    let col = match defect {
        GateOpen => 0,
        DrainOpen => 1,
        SourceOpen => 2,
        GateDrainShort => 3,
        GateSourceShort => 4,
        DrainSourceShort => 5,
        CapacitorShort => return None,
    };
    let effect = row[col];
    // the clock device's gate-drain short only breaks evaluation at speed
    let target = if port == "clk" && defect == GateDrainShort {
        format!("{unit}.dyn")
    } else {
        unit.to_string()
    };
    Some(vec![BehaviorMutation::new(target, effect)])
}

fn weak_cp_mutation(role: &str, port: &str, defect: Defect) -> Option<Vec<BehaviorMutation>> {
    use Defect::*;
    use Effect::*;
    let one = |target: &str, effect: Effect| Some(vec![BehaviorMutation::new(target, effect)]);
    match port {
        "src_up" | "src_dn" => match defect {
            GateDrainShort => one(&format!("{role}.gate"), Short),
            DrainSourceShort => one(role, Short),
            _ => one(role, Open),
        },
        "sw_up" | "sw_dn" => match defect {
            GateDrainShort => one(&format!("{role}.gate"), Short),
            DrainSourceShort => one(role, Short),
            _ => one(role, Open),
        },
        // charge-balance path and its amplifier: faults drift Vp to a rail
        "bal_up" | "bal_dn" | "amp_in_p" | "amp_in_n" | "amp_tail" | "amp_load" => {
            // (open-type drift, drain-source drift)
            let (open, ds) = match port {
                "bal_up" | "amp_in_p" => (StuckLow, StuckHigh),
                "bal_dn" | "amp_in_n" => (StuckHigh, StuckLow),
                "amp_tail" => (StuckHigh, StuckLow),
                _ => (StuckLow, StuckHigh),
            };
            match defect {
                GateDrainShort => match port {
                    "amp_load" => one("cpw.amp", ParamScale(0.9)),
                    "amp_tail" => one("cpw.amp", ParamScale(0.5)),
                    "amp_in_p" => one("cpw.vp", OffsetAdd(GD_SHORT_OFFSET)),
                    "amp_in_n" => one("cpw.vp", OffsetAdd(-GD_SHORT_OFFSET)),
                    _ => one("cpw.vp", ds),
                },
                DrainSourceShort => one("cpw.vp", ds),
                GateSourceShort if port == "amp_load" => one("cpw.vp", ds),
                _ => one("cpw.vp", open),
            }
        }
        _ => None,
    }
}

fn strong_cp_mutation(role: &str, port: &str, defect: Defect) -> Option<Vec<BehaviorMutation>> {
    use Defect::*;
    use Effect::*;
    let one = |target: &str, effect: Effect| Some(vec![BehaviorMutation::new(target, effect)]);
    match port {
        "src_up" | "src_dn" => match defect {
            GateDrainShort => one(role, ParamScale(0.5)),
            DrainSourceShort => one(role, Short),
            _ => one(role, Open),
        },
        "sw_up" | "sw_dn" => match defect {
            GateDrainShort => one(&format!("{role}.gate"), Short),
            DrainSourceShort => one(role, Short),
            _ => one(role, Open),
        },
        "bias_ref" => match defect {
            GateDrainShort => one("cps.bias", ParamScale(0.5)),
            DrainSourceShort => one("cps.bias", ParamScale(3.0)),
            _ => one("cps.bias", Open),
        },
        "bias_d_p" | "bias_d_n" => {
            let src = if port == "bias_d_p" { "cps.src_up" } else { "cps.src_dn" };
            match defect {
                GateDrainShort => one(src, ParamScale(0.95)),
                _ => one(src, Open),
            }
        }
        "bias_m" => match defect {
            GateDrainShort => one("cps.src_up", ParamScale(0.5)),
            DrainSourceShort => one("cps.src_up", ParamScale(3.0)),
            _ => one("cps.src_up", Open),
        },
        _ => None,
    }
}

fn vcdl_mutation(port: &str, defect: Defect) -> Option<Vec<BehaviorMutation>> {
    use Defect::*;
    use Effect::*;
    let one = |target: &str, effect: Effect| Some(vec![BehaviorMutation::new(target, effect)]);
    match port {
        "v2i" => match defect {
            GateOpen | DrainSourceShort => one("vcdl.gain", ParamScale(0.0)),
            // control node merged with the bias node
            GateDrainShort => one("vcdl.vc_load", Short),
            _ => one("vcdl", Open),
        },
        "mirror_d_p" | "mirror_d_n" => match defect {
            GateDrainShort => one("vcdl.gain", ParamScale(0.95)),
            _ => one("vcdl", Open),
        },
        "mirror_p" | "starve_p" | "starve_n" => match defect {
            GateDrainShort => one("vcdl.gain", ParamScale(0.5)),
            DrainSourceShort => one("vcdl.gain", ParamScale(0.0)),
            _ => one("vcdl", Open),
        },
        "inv_p" | "buf_p" => match defect {
            DrainSourceShort => one("vcdl", StuckHigh),
            GateDrainShort => one("vcdl", StuckLow),
            _ => one("vcdl", Open),
        },
        "inv_n" | "buf_n" => match defect {
            DrainSourceShort => one("vcdl", StuckLow),
            GateDrainShort => one("vcdl", StuckLow),
            _ => one("vcdl", Open),
        },
        _ => None,
    }
}
