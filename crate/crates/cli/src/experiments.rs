//! The named experiments and their artifacts.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use calabi_core::bounds::{constants, BoundsError, LEDGER_CSV_HEADER};
use calabi_core::flow::{self, FlowError};
use calabi_core::geometry::{energies, GeometryError, REPORT_CSV_HEADER};
use calabi_core::grid::snapshot::{read_snapshot, SnapshotError};
use calabi_core::potential::{inverse_legendre_transform, legendre_transform, PotentialError};
use calabi_core::weak::{approx_potential, choose_schedule, mollify, MollifierSpec, WeakError, WeakPotential};
use calabi_core::{csv_real, FlowState, FlowStatus, KahlerPotential, MonitorLog, ScalarField, SymplecticPotential};
use thiserror::Error;
use toml::{Table, Value};

use crate::config::{ExperimentConfig, ExperimentKind, Initial};

pub const ENERGIES_CSV_HEADER: &str = "m,r,h,mismatch,calabi_energy,mabuchi_energy,total_energy,max_rm,max_grad";
pub const SUMMARY_CSV_HEADER: &str = "m,r,status,steps,t_final,calabi_initial,calabi_final,max_t_calabi,fifth_t_calabi";
pub const LEGENDRE_CSV_HEADER: &str = "start,sup_error,l2_error,input_margin,output_margin";
pub const MOLLIFY_CSV_HEADER: &str = "h,mean_in,mean_out,sup_change,l2_change,convexity_margin";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Weak(#[from] WeakError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// How an experiment ended, once its artifacts are on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    Terminal(String),
}

enum Loaded {
    Smooth(SymplecticPotential),
    Kahler(KahlerPotential),
    Weak(WeakPotential),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_owned(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(io_err(path))
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), RunError> {
    let mut text = format!("{header}\n");
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(path, &text)
}

fn write_potential(path: &Path, pot: &SymplecticPotential) -> Result<(), RunError> {
    let mut out = create(path)?;
    pot.write_to(&mut out)?;
    out.flush().map_err(io_err(path))
}

fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("u_{step:08}.fld"))
}

fn load(cfg: &ExperimentConfig) -> Result<Loaded, RunError> {
    let grid = cfg.grid;
    let a = cfg.amplitude;
    Ok(match &cfg.initial {
        Initial::Flat => Loaded::Smooth(SymplecticPotential::flat(grid)),
        Initial::Cosine => {
            let f =
                ScalarField::sample(grid, |x| x.iter().map(|&xi| a * (PI * xi).cos()).sum()).map_err(|e| RunError::Input(e.to_string()))?;
            Loaded::Smooth(SymplecticPotential::new(f))
        }
        Initial::QuarticExample => {
            Loaded::Weak(WeakPotential::quartic_example(grid.dim(), grid.points_per_axis()).map_err(|e| RunError::Input(e.to_string()))?)
        }
        Initial::Snapshot(path) => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            match cfg.initial_kind.as_deref() {
                Some("weak") => Loaded::Weak(WeakPotential::read_from(&bytes[..])?),
                Some("kahler") => Loaded::Kahler(KahlerPotential::new(read_snapshot(&bytes[..])?.1)),
                _ => Loaded::Smooth(SymplecticPotential::read_from(&bytes[..])?.0),
            }
        }
    })
}

/// Run-metadata file contents: one table per section.
struct Metadata {
    table: Table,
}

impl Metadata {
    fn new(cfg: &ExperimentConfig) -> Self {
        let mut m = Self { table: Table::new() };
        m.set("run", "experiment", cfg.kind.name());
        m.set("run", "version", concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")));
        m.set("run", "rerun", format!("calabi-lab {} --config config.toml --out <dir>", cfg.kind.name()));
        m.set("grid", "N", cfg.grid.points_per_axis() as i64);
        m.set("grid", "dim", cfg.grid.dim() as i64);
        m.set("grid", "spacing", cfg.grid.spacing());
        m.set("initial", "descriptor", cfg.initial.describe());
        if let Some(kind) = &cfg.initial_kind {
            m.set("initial", "snapshot_kind", kind.as_str());
        }
        m
    }

    fn set(&mut self, section: &str, key: &str, value: impl Into<Value>) {
        let entry = self.table.entry(section).or_insert_with(|| Value::Table(Table::new()));
        if let Value::Table(t) = entry {
            t.insert(key.to_string(), value.into());
        }
    }

    fn weak_source(&mut self, weak: &WeakPotential) {
        self.set("initial", "hessian_source", weak.hessian_source().describe());
    }

    fn flow(&mut self, cfg: &ExperimentConfig, pot: &SymplecticPotential) -> Result<(), RunError> {
        self.set("flow", "scheme", cfg.flow.scheme.name());
        self.set("flow", "dt_initial", cfg.flow.time_step(pot)?);
        Ok(())
    }

    fn write(&self, path: &Path) -> Result<(), RunError> {
        write_text(path, &toml::to_string(&self.table).expect("tables serialize"))
    }
}

/// Run `cfg`, writing every artifact under `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    write_text(&cfg.out.join("config.toml"), &toml::to_string(&cfg.to_file()).expect("config serializes"))?;
    let mut meta = Metadata::new(cfg);
    let outcome = match cfg.kind {
        ExperimentKind::Flow => run_flow(cfg, &mut meta)?,
        ExperimentKind::Energies => run_energies(cfg, &mut meta)?,
        ExperimentKind::Legendre => run_legendre(cfg, &mut meta)?,
        ExperimentKind::Mollify => run_mollify(cfg, &mut meta)?,
        ExperimentKind::Bounds => run_bounds(cfg, &mut meta)?,
        ExperimentKind::SmoothQuartic => run_smooth_quartic(cfg, &mut meta)?,
    };
    meta.set(
        "run",
        "status",
        match &outcome {
            Outcome::Completed => "completed".to_string(),
            Outcome::Terminal(s) => s.clone(),
        },
    );
    meta.write(&cfg.out.join("metadata.toml"))?;
    Ok(outcome)
}

/// Flow with monitor log and snapshots written under `dir`.
fn flow_into(dir: &Path, pot: SymplecticPotential, cfg: &ExperimentConfig) -> Result<(FlowState, MonitorLog), RunError> {
    let snapshots = dir.join("snapshots");
    let mut failure = None;
    let every = cfg.snapshot_every;
    let (state, log) = flow::run_observed(pot, &cfg.flow, |s, _| {
        let due = s.step_count == 0 || s.status.is_terminal() || (every > 0 && s.step_count % every == 0);
        if due && failure.is_none() {
            failure = write_potential(&snapshot_path(&snapshots, s.step_count), &s.pot).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let path = dir.join("monitor.csv");
    let mut out = create(&path)?;
    log.write_csv(&mut out).and_then(|_| out.flush()).map_err(io_err(&path))?;
    Ok((state, log))
}

fn status_outcome(status: FlowStatus) -> Outcome {
    match status {
        FlowStatus::Completed => Outcome::Completed,
        other => Outcome::Terminal(other.to_string()),
    }
}

fn status_word(status: FlowStatus) -> &'static str {
    match status {
        FlowStatus::Running => "running",
        FlowStatus::Completed => "completed",
        FlowStatus::Blowup { .. } => "blowup",
        FlowStatus::Stiff { .. } => "stiff",
    }
}

fn run_flow(cfg: &ExperimentConfig, meta: &mut Metadata) -> Result<Outcome, RunError> {
    let pot = match load(cfg)? {
        Loaded::Smooth(p) => p,
        Loaded::Kahler(k) => legendre_transform(&k)?,
        Loaded::Weak(_) => return Err(RunError::Input("weak data cannot be flowed directly".into())),
    };
    meta.flow(cfg, &pot)?;
    let (state, log) = flow_into(&cfg.out, pot, cfg)?;
    meta.set("flow", "steps", state.step_count as i64);
    meta.set("flow", "t_final", state.t);
    meta.set("flow", "rows", log.rows.len() as i64);
    Ok(status_outcome(state.status))
}

/// Mabuchi energy of the quartic example's limit, `dim·2^dim·(2 - ln 3)`.
fn quartic_mabuchi_limit(dim: usize) -> f64 {
    dim as f64 * (1u32 << dim) as f64 * (2.0 - 3f64.ln())
}

fn run_energies(cfg: &ExperimentConfig, meta: &mut Metadata) -> Result<Outcome, RunError> {
    let rows = match load(cfg)? {
        Loaded::Weak(weak) => {
            meta.weak_source(&weak);
            if cfg.initial == Initial::QuarticExample {
                meta.set("derived", "mabuchi_limit", quartic_mabuchi_limit(cfg.grid.dim()));
            }
            let schedule = choose_schedule(&weak, cfg.m);
            let mut rows = Vec::new();
            for entry in schedule.entries() {
                let r = entry.r.ok_or(WeakError::Unresolved { m: entry.m })?;
                let u = approx_potential(weak.periodic_part(), entry.m, &schedule)?;
                let e = energies(&u)?;
                rows.push(format!(
                    "{},{},{},{},{},{},{},{},{}",
                    entry.m,
                    r,
                    csv_real(1.0 / r as f64),
                    entry.mismatch.map(csv_real).unwrap_or_default(),
                    csv_real(e.calabi_energy),
                    csv_real(e.mabuchi_energy),
                    csv_real(e.total_energy),
                    csv_real(e.max_rm),
                    csv_real(e.max_grad),
                ));
            }
            write_csv(&cfg.out.join("energies.csv"), ENERGIES_CSV_HEADER, &rows)?;
            return Ok(Outcome::Completed);
        }
        Loaded::Smooth(p) => vec![energies(&p)?.csv_row(0.0)],
        Loaded::Kahler(k) => vec![energies(&legendre_transform(&k)?)?.csv_row(0.0)],
    };
    write_csv(&cfg.out.join("energies.csv"), REPORT_CSV_HEADER, &rows)?;
    Ok(Outcome::Completed)
}

fn run_legendre(cfg: &ExperimentConfig, meta: &mut Metadata) -> Result<Outcome, RunError> {
    let loaded = match (load(cfg)?, &cfg.initial) {
        // built-in profiles are read as the Kähler-side φ
        (Loaded::Smooth(p), Initial::Flat | Initial::Cosine) => Loaded::Kahler(KahlerPotential::new(p.into_periodic_part())),
        (other, _) => other,
    };
    let (start, kahler, symplectic, error) = match loaded {
        Loaded::Weak(_) => return Err(RunError::Input("legendre needs smooth data".into())),
        Loaded::Smooth(u) => {
            let k = inverse_legendre_transform(&u)?;
            let back = legendre_transform(&k)?;
            let error = back.periodic_part().zip_map(u.periodic_part(), |a, b| a - b).map_err(|e| RunError::Input(e.to_string()))?;
            write_potential(&cfg.out.join("roundtrip.fld"), &back)?;
            ("symplectic", k, u, error)
        }
        Loaded::Kahler(k) => {
            let u = legendre_transform(&k)?;
            let back = inverse_legendre_transform(&u)?;
            let error = back.periodic_part().zip_map(k.periodic_part(), |a, b| a - b).map_err(|e| RunError::Input(e.to_string()))?;
            write_kahler(&cfg.out.join("roundtrip.fld"), &back)?;
            ("kahler", k, u, error)
        }
    };
    write_kahler(&cfg.out.join("kahler.fld"), &kahler)?;
    write_potential(&cfg.out.join("symplectic.fld"), &symplectic)?;
    let row = format!(
        "{start},{},{},{},{}",
        csv_real(error.max_abs()),
        csv_real(error.l2_norm()),
        csv_real(if start == "kahler" { kahler.convexity_margin() } else { symplectic.convexity_margin() }),
        csv_real(if start == "kahler" { symplectic.convexity_margin() } else { kahler.convexity_margin() }),
    );
    write_csv(&cfg.out.join("legendre.csv"), LEGENDRE_CSV_HEADER, &[row])?;
    meta.set("derived", "start", start);
    Ok(Outcome::Completed)
}

fn write_kahler(path: &Path, k: &KahlerPotential) -> Result<(), RunError> {
    let mut out = create(path)?;
    k.write_to(&mut out)?;
    out.flush().map_err(io_err(path))
}

fn run_mollify(cfg: &ExperimentConfig, meta: &mut Metadata) -> Result<Outcome, RunError> {
    let f = match load(cfg)? {
        Loaded::Weak(w) => {
            meta.weak_source(&w);
            w.periodic_part().clone()
        }
        Loaded::Smooth(p) => p.into_periodic_part(),
        Loaded::Kahler(_) => return Err(RunError::Input("mollify expects symplectic or weak data".into())),
    };
    let spec = MollifierSpec::new(cfg.h)?;
    let fh = mollify(&f, &spec);
    let change = fh.zip_map(&f, |a, b| a - b).map_err(|e| RunError::Input(e.to_string()))?;
    let smooth = SymplecticPotential::new(fh);
    write_potential(&cfg.out.join("mollified.fld"), &smooth)?;
    let row = format!(
        "{},{},{},{},{},{}",
        csv_real(cfg.h),
        csv_real(f.mean()),
        csv_real(smooth.periodic_part().mean()),
        csv_real(change.max_abs()),
        csv_real(change.l2_norm()),
        csv_real(smooth.convexity_margin()),
    );
    write_csv(&cfg.out.join("mollify.csv"), MOLLIFY_CSV_HEADER, &[row])?;
    meta.set("derived", "h", cfg.h);
    Ok(Outcome::Completed)
}

fn run_bounds(cfg: &ExperimentConfig, meta: &mut Metadata) -> Result<Outcome, RunError> {
    let ledger = constants(&cfg.bounds);
    write_csv(&cfg.out.join("ledger.csv"), LEDGER_CSV_HEADER, &[ledger.csv_row()])?;
    write_text(&cfg.out.join("ledger.txt"), &ledger.to_text())?;
    meta.set("derived", "C3", ledger.c3);
    meta.set("derived", "R0", ledger.r0);
    meta.set("derived", "lambda", ledger.lambda);
    Ok(Outcome::Completed)
}

struct QuarticRun {
    m: usize,
    r: usize,
    state: FlowState,
    log: MonitorLog,
}

fn run_smooth_quartic(cfg: &ExperimentConfig, meta: &mut Metadata) -> Result<Outcome, RunError> {
    let weak = match load(cfg)? {
        Loaded::Weak(w) => w,
        _ => return Err(RunError::Input("smooth-quartic needs weak data".into())),
    };
    meta.weak_source(&weak);
    let schedule = choose_schedule(&weak, cfg.m);
    let ms: Vec<usize> = (0..).map(|k| 1usize << k).take_while(|&m| m <= cfg.m).collect();
    let runs: Vec<Result<QuarticRun, RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ms
            .iter()
            .map(|&m| {
                let (weak, schedule) = (&weak, &schedule);
                scope.spawn(move || {
                    let r = schedule.r(m)?;
                    let u = approx_potential(weak.periodic_part(), m, schedule)?;
                    let (state, log) = flow_into(&cfg.out.join(format!("m{m:02}")), u, cfg)?;
                    Ok(QuarticRun { m, r, state, log })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("flow thread panicked")).collect()
    });
    let mut rows = Vec::new();
    let mut terminal = Vec::new();
    for run in runs {
        let QuarticRun { m, r, state, log } = run?;
        let product: Vec<f64> = log.rows.iter().map(|row| row.t * row.report.calabi_energy).collect();
        let calabi = log.calabi();
        if state.status != FlowStatus::Completed {
            terminal.push(format!("m = {m}: {}", state.status));
        }
        rows.push(format!(
            "{m},{r},{},{},{},{},{},{},{}",
            status_word(state.status),
            state.step_count,
            csv_real(state.t),
            csv_real(calabi[0]),
            csv_real(calabi[calabi.len() - 1]),
            csv_real(product.iter().copied().fold(0.0, f64::max)),
            product.get(4).map(|&v| csv_real(v)).unwrap_or_default(),
        ));
    }
    write_csv(&cfg.out.join("summary.csv"), SUMMARY_CSV_HEADER, &rows)?;
    meta.flow(cfg, &approx_potential(weak.periodic_part(), 1, &schedule)?)?;
    Ok(if terminal.is_empty() { Outcome::Completed } else { Outcome::Terminal(terminal.join("; ")) })
}
