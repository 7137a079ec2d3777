//! Fault campaign: every fault through all three stages, aggregated per
//! defect class and per stage.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::LinkModel;
use crate::config::LinkConfig;
use crate::dft::{chain_a, chain_b_names, run_all, GoldenReference, Stage};
use crate::error::{Error, Result};
use crate::fault::{enumerate_faults, Defect, Fault, Netlist};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultVerdict {
    pub fault: Fault,
    pub dc: bool,
    pub scan: bool,
    pub bist: bool,
    /// Evidence per stage, empty where the stage passed.
    pub evidence: [String; 3],
}

impl FaultVerdict {
    pub fn detected_by(&self, stage: Stage) -> bool {
        match stage {
            Stage::Dc => self.dc,
            Stage::Scan => self.scan,
            Stage::Bist => self.bist,
        }
    }

    pub fn first_stage(&self) -> Option<Stage> {
        Stage::ALL.into_iter().find(|&s| self.detected_by(s))
    }

    pub fn detected(&self) -> bool {
        self.dc || self.scan || self.bist
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub defect: Defect,
    pub total: usize,
    pub detected: usize,
}

impl ClassRow {
    pub fn percent(&self) -> f64 {
        percent(self.detected, self.total)
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_class: Vec<ClassRow>,
    /// Cumulative coverage after DC, DC + scan, and all three stages.
    pub per_stage_cumulative: [f64; 3],
    pub overall: f64,
    pub verdicts: Vec<FaultVerdict>,
}

impl CoverageReport {
    pub fn from_verdicts(mut verdicts: Vec<FaultVerdict>) -> Self {
        verdicts.sort_by(|a, b| {
            (a.fault.device_id.as_str(), a.fault.defect).cmp(&(b.fault.device_id.as_str(), b.fault.defect))
        });
        let per_class = Defect::ALL
            .iter()
            .map(|&d| {
                let of: Vec<&FaultVerdict> = verdicts.iter().filter(|v| v.fault.defect == d).collect();
                ClassRow { defect: d, total: of.len(), detected: of.iter().filter(|v| v.detected()).count() }
            })
            .collect();
        let n = verdicts.len();
        let upto = |k: usize| verdicts.iter().filter(|v| Stage::ALL[..=k].iter().any(|&s| v.detected_by(s))).count();
        let per_stage_cumulative = [percent(upto(0), n), percent(upto(1), n), percent(upto(2), n)];
        CoverageReport {
            per_class,
            per_stage_cumulative,
            overall: per_stage_cumulative[2],
            verdicts,
        }
    }

    pub fn stage_count(&self, stage: Stage) -> usize {
        self.verdicts.iter().filter(|v| v.detected_by(stage)).count()
    }
}

/// Verdict for one fault: all three stages run regardless of earlier detection.
pub fn evaluate_fault(
    cfg: &LinkConfig,
    netlist: &Netlist,
    golden: &GoldenReference,
    fault: &Fault,
    seed: u32,
) -> Result<FaultVerdict> {
    let wrap = |e: Error| Error::Simulation(format!("fault {fault}: {e}"));
    let model = LinkModel::with_faults(cfg, std::slice::from_ref(fault), netlist).map_err(wrap)?;
    let [dc, scan, bist] = run_all(&model, golden, seed).map_err(wrap)?;
    Ok(FaultVerdict {
        fault: fault.clone(),
        dc: dc.detected,
        scan: scan.detected,
        bist: bist.detected,
        evidence: [dc.evidence, scan.evidence, bist.evidence],
    })
}

/// Runs `faults` on a pool of `jobs` workers (0 picks the default size).
pub fn run_faults(cfg: &LinkConfig, netlist: &Netlist, faults: &[Fault], seed: u32, jobs: usize) -> Result<CoverageReport> {
    cfg.validate()?;
    let golden = GoldenReference::new(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Simulation(format!("worker pool: {e}")))?;
    let verdicts: Result<Vec<FaultVerdict>> =
        pool.install(|| faults.par_iter().map(|f| evaluate_fault(cfg, netlist, &golden, f, seed)).collect());
    Ok(CoverageReport::from_verdicts(verdicts?))
}

pub fn run_campaign(cfg: &LinkConfig, netlist: &Netlist, seed: u32, jobs: usize) -> Result<CoverageReport> {
    run_faults(cfg, netlist, &enumerate_faults(netlist), seed, jobs)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    device_id: String,
    defect: String,
    dc: u8,
    scan: u8,
    bist: u8,
    first_stage: String,
}

pub fn write_report_csv<W: Write>(report: &CoverageReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for v in &report.verdicts {
        out.serialize(ReportRow {
            device_id: v.fault.device_id.clone(),
            defect: v.fault.defect.as_str().to_string(),
            dc: v.dc as u8,
            scan: v.scan as u8,
            bist: v.bist as u8,
            first_stage: v.first_stage().map(|s| s.as_str().to_string()).unwrap_or_else(|| "none".into()),
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a report CSV back; evidence is not part of that file and comes back empty.
pub fn read_report_csv<R: Read>(r: R) -> Result<CoverageReport> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut verdicts = Vec::new();
    for (i, row) in rdr.deserialize::<ReportRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        let defect: Defect = row.defect.parse().map_err(|e| Error::Report(format!("line {line}: {e}")))?;
        let flag = |v: u8, name: &str| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Report(format!("line {line}: `{name}` must be 0 or 1"))),
        };
        let v = FaultVerdict {
            fault: Fault::new(row.device_id, defect),
            dc: flag(row.dc, "dc")?,
            scan: flag(row.scan, "scan")?,
            bist: flag(row.bist, "bist")?,
            evidence: Default::default(),
        };
        let first = v.first_stage().map(|s| s.as_str()).unwrap_or("none");
        if first != row.first_stage {
            return Err(Error::Report(format!(
                "line {line}: first_stage `{}` disagrees with the stage flags",
                row.first_stage
            )));
        }
        verdicts.push(v);
    }
    Ok(CoverageReport::from_verdicts(verdicts))
}

#[derive(Debug, Serialize)]
struct EvidenceRow<'a> {
    device_id: &'a str,
    defect: &'a str,
    stage: &'a str,
    evidence: &'a str,
}

/// One row per detecting stage with the first diverging observation.
pub fn write_evidence_csv<W: Write>(report: &CoverageReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for v in &report.verdicts {
        for (k, s) in Stage::ALL.iter().enumerate() {
            if v.detected_by(*s) {
                out.serialize(EvidenceRow {
                    device_id: &v.fault.device_id,
                    defect: v.fault.defect.as_str(),
                    stage: s.as_str(),
                    evidence: &v.evidence[k],
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    defect: String,
    total: usize,
    detected: usize,
    percent: String,
}

pub fn write_summary_csv<W: Write>(report: &CoverageReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut total = 0;
    let mut detected = 0;
    for row in &report.per_class {
        total += row.total;
        detected += row.detected;
        out.serialize(SummaryRow {
            defect: row.defect.as_str().into(),
            total: row.total,
            detected: row.detected,
            percent: format!("{:.1}", row.percent()),
        })?;
    }
    out.serialize(SummaryRow {
        defect: "total".into(),
        total,
        detected,
        percent: format!("{:.1}", percent(detected, total)),
    })?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverheadItem {
    pub element: &'static str,
    pub count: usize,
    pub instances: Vec<String>,
}

/// Flops that exist only for test access.
pub const TEST_FLOPS: [&str; 7] =
    ["ffe_probe_p", "ffe_probe_n", "rxwin_hi", "rxwin_lo", "cwin_hi", "cwin_lo", "cpbist"];

/// Test-only hardware of the model.
pub fn overhead() -> Vec<OverheadItem> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let chain_a_cells: Vec<String> = chain_a(false, true).cells.into_iter().map(|c| c.name).collect();
    let chain_b_cells = chain_b_names(10);
    let flops: Vec<String> = TEST_FLOPS
        .iter()
        .filter(|f| chain_a_cells.iter().chain(&chain_b_cells).any(|c| c == *f))
        .map(|f| f.to_string())
        .collect();
    vec![
        OverheadItem { element: "Flip-flops", count: flops.len(), instances: flops },
        OverheadItem {
            element: "Comparators (DC)",
            count: 4,
            instances: s(&["flash_p", "flash_n", "cpbist_hi", "cpbist_lo"]),
        },
        OverheadItem { element: "Comparators (100 MHz)", count: 2, instances: s(&["rxwin_hi", "rxwin_lo"]) },
        OverheadItem { element: "D-latch", count: 1, instances: s(&["tx_half_cycle_latch"]) },
        OverheadItem {
            element: "Multiplexers",
            count: 2,
            instances: s(&["coarse_clk_select", "retime_clk_select"]),
        },
        OverheadItem { element: "3-bit saturating counter", count: 1, instances: s(&["lock_counter"]) },
        OverheadItem { element: "Control signals", count: 2, instances: s(&["S_en", "T_en"]) },
        OverheadItem {
            element: "Logic gates",
            count: 6,
            instances: s(&[
                "cp_bias_p_force",
                "cp_bias_n_force",
                "cwin_input_force_hi",
                "cwin_input_force_lo",
                "coarse_clk_gate",
                "hc_latch_enable",
            ]),
        },
    ]
}

pub const DENOMINATOR_NOTE: &str =
    "coverage counts analog device faults only; digital blocks are outside the denominator";

/// Coverage table, stage summary and overhead listing as text.
pub fn summarize(report: &CoverageReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {DENOMINATOR_NOTE}");
    let _ = writeln!(s, "{:<22} {:>7} {:>9} {:>9}", "Defect", "Faults", "Detected", "Coverage");
    let mut total = 0;
    let mut detected = 0;
    for row in &report.per_class {
        total += row.total;
        detected += row.detected;
        let _ = writeln!(
            s,
            "{:<22} {:>7} {:>9} {:>8.1}%",
            row.defect.label(),
            row.total,
            row.detected,
            row.percent()
        );
    }
    let _ = writeln!(s, "{:<22} {:>7} {:>9} {:>8.1}%", "Total", total, detected, percent(detected, total));
    let _ = writeln!(s);
    let [dc, scan, all] = report.per_stage_cumulative;
    let _ = writeln!(s, "Cumulative coverage: dc {dc:.1}%, dc+scan {scan:.1}%, dc+scan+bist {all:.1}%");
    let _ = writeln!(
        s,
        "Detected per stage: dc {}, scan {}, bist {}",
        report.stage_count(Stage::Dc),
        report.stage_count(Stage::Scan),
        report.stage_count(Stage::Bist)
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "DFT overhead");
    for item in overhead() {
        let _ = writeln!(s, "{:<26} {:>2}  {}", item.element, item.count, item.instances.join(", "));
    }
    s
}
