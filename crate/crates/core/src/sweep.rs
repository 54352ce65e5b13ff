//! Cross-product parameter sweeps with resumable, deterministic output.
//!
//! Every cell writes into `cells/<hash>/` (diagnostics CSV, final snapshot,
//! `record.json`); the record is written last via rename, so a cell with a
//! record is complete and is skipped when the sweep is rerun. After the pool
//! drains, the collector writes `records.csv` and `phase_table.txt`. Wall
//! times go only to the `sweep.log` sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::ConfigDoc;
use crate::criteria::{best_certificate, Case, CertificateSearch};
use crate::dynamics::{run, write_diagnostics, Verdict};
use crate::error::{Error, Result};
use crate::field::Snapshot;

/// Default bound on the number of cells.
pub const DEFAULT_MAX_CELLS: usize = 1024;

/// A base configuration plus sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: ConfigDoc,
    pub axes: Vec<(String, Vec<String>)>,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub seed: u64,
    pub max_cells: usize,
}

impl ExperimentPlan {
    /// Plan from a parsed document; `sweep.*` control keys fill in the
    /// worker count, seed, cap and output directory.
    pub fn from_doc(doc: ConfigDoc, output_dir: Option<PathBuf>) -> Result<Self> {
        let ctl = |k: &str| doc.sweep_control.get(k).cloned();
        let count = |k: &str, default: usize| -> Result<usize> {
            match ctl(k) {
                None => Ok(default),
                Some(v) => v.trim().parse::<usize>().map_err(|_| {
                    Error::Config(format!("sweep.{k}: expected an integer, got `{v}`"))
                }),
            }
        };
        let workers = count(
            "workers",
            std::thread::available_parallelism().map_or(1, |n| n.get()),
        )?;
        let seed = count("seed", 0)? as u64;
        let max_cells = count("max_cells", DEFAULT_MAX_CELLS)?;
        let output_dir = output_dir
            .or_else(|| ctl("output").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("ks-lab-out"));
        let plan = Self {
            axes: doc.axes.clone(),
            base: doc,
            output_dir,
            workers: workers.max(1),
            seed,
            max_cells,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, values) in &self.axes {
            if !crate::config::KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("sweep over unknown key `{key}`")));
            }
            if values.is_empty() {
                return Err(Error::Config(format!("sweep axis `{key}` is empty")));
            }
        }
        let size = self.size();
        if size > self.max_cells {
            return Err(Error::Config(format!(
                "sweep has {size} cells, above the cap of {}",
                self.max_cells
            )));
        }
        Ok(())
    }

    /// Number of cells in the cross product (1 with no axes).
    pub fn size(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Cells in row-major order over the axes (last axis fastest).
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = vec![Cell {
            index: 0,
            params: Vec::new(),
            doc: self.base.clone(),
        }];
        for (key, values) in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut params = cell.params.clone();
                    params.push((key.clone(), v.clone()));
                    next.push(Cell {
                        index: 0,
                        params,
                        doc: cell.doc.with_value(key, v),
                    });
                }
            }
            cells = next;
        }
        for (i, c) in cells.iter_mut().enumerate() {
            c.index = i;
        }
        cells
    }
}

/// One point of the cross product.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub params: Vec<(String, String)>,
    pub doc: ConfigDoc,
}

/// Summary of one sweep cell.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub config_hash: String,
    pub params: Vec<(String, String)>,
    /// `ReachedTEnd`, `BlowupDetected`, `Unresolved` or `Failed`.
    pub verdict: String,
    pub t_star: Option<f64>,
    pub t_unresolved: Option<f64>,
    pub resolved: bool,
    pub steps: usize,
    pub initial_mass: f64,
    pub final_mass_drift: f64,
    pub final_linf: f64,
    pub final_l2: f64,
    pub min_negativity: f64,
    /// Which sufficient criterion was tested (`i`, `ii` or `iii`).
    pub certificate_case: Option<String>,
    pub certificate_present: bool,
    pub certificate_margin: Option<f64>,
    pub diagnostics_path: Option<String>,
    pub snapshot_path: Option<String>,
    pub error: Option<String>,
}

impl RunRecord {
    fn failed(cell: &Cell, hash: String, err: &Error) -> Self {
        Self {
            index: cell.index,
            config_hash: hash,
            params: cell.params.clone(),
            verdict: "Failed".into(),
            t_star: None,
            t_unresolved: None,
            resolved: false,
            steps: 0,
            initial_mass: f64::NAN,
            final_mass_drift: f64::NAN,
            final_linf: f64::NAN,
            final_l2: f64::NAN,
            min_negativity: f64::NAN,
            certificate_case: None,
            certificate_present: false,
            certificate_margin: None,
            diagnostics_path: None,
            snapshot_path: None,
            error: Some(err.to_string()),
        }
    }
}

fn run_cell(cell: &Cell, dir: &Path, hash: &str) -> Result<RunRecord> {
    let exp = cell.doc.experiment()?;
    let sim = &exp.sim;
    let u0 = exp.initial.build(sim.grid)?;
    let (case, certificate) = if sim.alpha == 2.0 && sim.gamma == 0.0 {
        let present = crate::criteria::check_case_i(&u0)?;
        (
            Case::I,
            Some((present, u0.total_mass() - 8.0 * std::f64::consts::PI)),
        )
    } else {
        let case = if sim.alpha == 2.0 {
            Case::Ii
        } else {
            Case::Iii
        };
        let search = CertificateSearch::default_for(&sim.grid);
        let best = best_certificate(&u0, sim.alpha, sim.gamma, case, &search)?;
        (case, Some((best.holds(), best.margin)))
    };
    let outcome = run(sim, &u0)?;
    fs::create_dir_all(dir)?;
    let diag = dir.join("diagnostics.csv");
    write_diagnostics(&outcome, std::io::BufWriter::new(fs::File::create(&diag)?))?;
    let snap = dir.join("final.ksf");
    Snapshot {
        name: "u_final".into(),
        t: outcome.final_state.t,
        field: outcome.final_state.u.clone(),
    }
    .write_to(std::io::BufWriter::new(fs::File::create(&snap)?))?;
    let (t_star, t_unresolved) = match &outcome.verdict {
        Verdict::BlowupDetected { t_star } => (Some(*t_star), None),
        Verdict::Unresolved { t, .. } => (None, Some(*t)),
        Verdict::ReachedTEnd => (None, None),
    };
    let case_label = match case {
        Case::I => "i",
        Case::Ii => "ii",
        Case::Iii => "iii",
    };
    Ok(RunRecord {
        index: cell.index,
        config_hash: hash.to_string(),
        params: cell.params.clone(),
        verdict: outcome.verdict.label().to_string(),
        t_star,
        t_unresolved,
        resolved: outcome.is_resolved(),
        steps: outcome.steps,
        initial_mass: outcome.initial_mass,
        final_mass_drift: outcome.final_mass_drift(),
        final_linf: outcome.final_state.u.max_abs(),
        final_l2: outcome.final_state.u.lp_norm(2.0)?,
        min_negativity: outcome.min_negativity,
        certificate_case: Some(case_label.into()),
        certificate_present: certificate.is_some_and(|c| c.0),
        certificate_margin: certificate.map(|c| c.1),
        diagnostics_path: Some(relative(&diag, dir)),
        snapshot_path: Some(relative(&snap, dir)),
        error: None,
    })
}

fn relative(path: &Path, dir: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let cell = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("cells/{cell}/{name}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs every cell not already completed, then writes the collected
/// outputs. Per-cell failures are recorded, never propagated.
pub fn run_sweep(plan: &ExperimentPlan) -> Result<Vec<RunRecord>> {
    plan.validate()?;
    let cells_dir = plan.output_dir.join("cells");
    fs::create_dir_all(&cells_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let cells = plan.cells();
    let results: Vec<(RunRecord, Option<f64>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let hash = cell.doc.hash();
                let dir = cells_dir.join(&hash);
                let record_path = dir.join("record.json");
                // completed cells are reused; failed ones are retried
                let done = fs::read_to_string(&record_path)
                    .ok()
                    .and_then(|text| serde_json::from_str::<RunRecord>(&text).ok())
                    .filter(|rec| rec.error.is_none());
                if let Some(mut rec) = done {
                    rec.index = cell.index;
                    rec.params = cell.params.clone();
                    return (rec, None);
                }
                let start = Instant::now();
                let rec = run_cell(cell, &dir, &hash)
                    .unwrap_or_else(|e| RunRecord::failed(cell, hash.clone(), &e));
                let elapsed = start.elapsed().as_secs_f64();
                let saved = fs::create_dir_all(&dir).map_err(Error::from).and_then(|_| {
                    let json = serde_json::to_vec_pretty(&rec)
                        .map_err(|e| Error::Format(format!("record encoding: {e}")))?;
                    write_atomic(&record_path, &json)
                });
                if let Err(e) = saved {
                    let mut rec = rec;
                    rec.error = Some(format!("record not persisted: {e}"));
                    return (rec, Some(elapsed));
                }
                (rec, Some(elapsed))
            })
            .collect()
    });
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(plan.output_dir.join("sweep.log"))?;
    for (rec, elapsed) in &results {
        match elapsed {
            Some(s) => writeln!(
                log,
                "cell {} {} ran in {s:.3} s",
                rec.index, rec.config_hash
            )?,
            None => writeln!(
                log,
                "cell {} {} skipped (complete)",
                rec.index, rec.config_hash
            )?,
        }
    }
    let mut records: Vec<RunRecord> = results.into_iter().map(|(r, _)| r).collect();
    records.sort_by_key(|r| r.index);
    let report = report(&records, &plan.axes);
    write_records_csv(
        &records,
        fs::File::create(plan.output_dir.join("records.csv"))?,
    )?;
    fs::write(plan.output_dir.join("phase_table.txt"), report.render())?;
    Ok(records)
}

/// Writes one row per record; columns are fixed so reruns are byte-identical.
pub fn write_records_csv(records: &[RunRecord], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "index",
        "config_hash",
        "params",
        "verdict",
        "t_star",
        "t_unresolved",
        "resolved",
        "steps",
        "initial_mass",
        "final_mass_drift",
        "final_linf",
        "final_l2",
        "certificate_case",
        "certificate_present",
        "certificate_margin",
        "error",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    for r in records {
        let params = r
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        out.write_record([
            r.index.to_string(),
            r.config_hash.clone(),
            params,
            r.verdict.clone(),
            opt(r.t_star),
            opt(r.t_unresolved),
            r.resolved.to_string(),
            r.steps.to_string(),
            format!("{:.17e}", r.initial_mass),
            format!("{:.17e}", r.final_mass_drift),
            format!("{:.17e}", r.final_linf),
            format!("{:.17e}", r.final_l2),
            r.certificate_case.clone().unwrap_or_default(),
            r.certificate_present.to_string(),
            opt(r.certificate_margin),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Verdict and certificate tables over the first two sweep axes plus
/// agreement counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub row_axis: Option<(String, Vec<String>)>,
    pub col_axis: Option<(String, Vec<String>)>,
    /// `verdicts[row][col]` (one column when there is a single axis).
    pub verdicts: Vec<Vec<String>>,
    pub certificates: Vec<Vec<bool>>,
    pub blowup_cells: usize,
    pub certificate_cells: usize,
    /// Certificate present and the run reached `t_end`: a soundness failure.
    pub certificate_and_global: usize,
    pub certificate_and_blowup: usize,
    pub failed_cells: usize,
}

impl SweepReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let row_name = self
            .row_axis
            .as_ref()
            .map_or("-".to_string(), |a| a.0.clone());
        let col_name = self
            .col_axis
            .as_ref()
            .map_or("-".to_string(), |a| a.0.clone());
        let cols: Vec<String> = self
            .col_axis
            .as_ref()
            .map_or(vec!["-".into()], |a| a.1.clone());
        let rows: Vec<String> = self
            .row_axis
            .as_ref()
            .map_or(vec!["-".into()], |a| a.1.clone());
        let short = |v: &str| match v {
            "ReachedTEnd" => "G",
            "BlowupDetected" => "B",
            "Unresolved" => "U",
            _ => "F",
        };
        s.push_str(&format!(
            "verdicts (G = ReachedTEnd, B = BlowupDetected, U = Unresolved, F = Failed), \
             * = certificate present\nrows: {row_name}, columns: {col_name}\n"
        ));
        s.push_str(&format!("{:>12}", ""));
        for c in &cols {
            s.push_str(&format!(" {c:>10}"));
        }
        s.push('\n');
        for (i, r) in rows.iter().enumerate() {
            s.push_str(&format!("{r:>12}"));
            for j in 0..cols.len() {
                let mark = if self.certificates[i][j] { "*" } else { "" };
                s.push_str(&format!(
                    " {:>10}",
                    format!("{}{mark}", short(&self.verdicts[i][j]))
                ));
            }
            s.push('\n');
        }
        s.push_str(&format!(
            "blowup cells: {}\ncertificate cells: {}\ncertificate and BlowupDetected: {}\n\
             certificate and ReachedTEnd: {}\nfailed cells: {}\n",
            self.blowup_cells,
            self.certificate_cells,
            self.certificate_and_blowup,
            self.certificate_and_global,
            self.failed_cells
        ));
        s
    }
}

pub fn report(records: &[RunRecord], axes: &[(String, Vec<String>)]) -> SweepReport {
    let row_axis = axes.first().cloned();
    let col_axis = axes.get(1).cloned();
    let nrows = row_axis.as_ref().map_or(1, |a| a.1.len());
    let ncols = col_axis.as_ref().map_or(1, |a| a.1.len());
    let mut verdicts = vec![vec![String::new(); ncols]; nrows];
    let mut certificates = vec![vec![false; ncols]; nrows];
    let lookup: BTreeMap<usize, &RunRecord> = records.iter().map(|r| (r.index, r)).collect();
    // Records for further axes are folded in by taking the first cell.
    let stride: usize = axes.iter().skip(2).map(|(_, v)| v.len()).product();
    for i in 0..nrows {
        for j in 0..ncols {
            if let Some(r) = lookup.get(&((i * ncols + j) * stride)) {
                verdicts[i][j] = r.verdict.clone();
                certificates[i][j] = r.certificate_present;
            }
        }
    }
    let count = |f: &dyn Fn(&RunRecord) -> bool| records.iter().filter(|r| f(r)).count();
    SweepReport {
        row_axis,
        col_axis,
        verdicts,
        certificates,
        blowup_cells: count(&|r| r.verdict == "BlowupDetected"),
        certificate_cells: count(&|r| r.certificate_present),
        certificate_and_global: count(&|r| r.certificate_present && r.verdict == "ReachedTEnd"),
        certificate_and_blowup: count(&|r| r.certificate_present && r.verdict == "BlowupDetected"),
        failed_cells: count(&|r| r.verdict == "Failed"),
    }
}
