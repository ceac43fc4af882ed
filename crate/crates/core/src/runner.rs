//! Batch front-end behind the `mfgstop` binary: `run`, `verify` and
//! `scenario`, each returning an exit status and writing artifacts.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{self, AcceptanceSpec, LoadedConfig, Method, ProblemKind};
use crate::control::{control_uniqueness_probe, cosmfg_coupled_solve, verify_cosmfg};
use crate::error::{Error, Result};
use crate::evolutive::{evolutive_uniqueness_probe, osmfg_continuation, verify_mixed_evolutive};
use crate::grid::{default_delta_c, ScalarField};
use crate::io;
use crate::obstacle::solve_obstacle_stationary;
use crate::scenarios::{self, Check, Evidence, EvidenceOptions, Problem, Report, Table};
use crate::stationary::{
    continuation_solve, monotone_iteration_solve, uniqueness_probe, variational_minimize,
    verify_mixed, verify_mixed_fields, MonotoneConfig, VariationalConfig,
};

pub const OUT_ENV: &str = "MFGSTOP_OUT";
const DEFAULT_OUT: &str = "mfgstop_out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ResidualFailure,
    InvalidInput,
    NoConvergence,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::ResidualFailure => 1,
            Status::InvalidInput => 2,
            Status::NoConvergence => 3,
        }
    }

    pub fn of_error(e: &Error) -> Status {
        if e.is_convergence_failure() {
            Status::NoConvergence
        } else {
            Status::InvalidInput
        }
    }
}

/// Result of one command: exit status, human-readable lines, and the
/// directory artifacts went to (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub lines: Vec<String>,
    pub out_dir: Option<PathBuf>,
}

impl Outcome {
    fn failed(e: &Error) -> Self {
        Outcome {
            status: Status::of_error(e),
            lines: vec![format!("error: {e}")],
            out_dir: None,
        }
    }
}

/// Output root: `MFGSTOP_OUT` if set, else the given directory, else
/// `mfgstop_out`.
pub fn output_root(configured: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        Some(v) => PathBuf::from(v),
        None => configured.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Compares every required key of a serialized report against its threshold.
fn gate<T: Serialize>(
    report: &T,
    acceptance: &AcceptanceSpec,
    problem: ProblemKind,
) -> Result<Vec<Check>> {
    let value = serde_json::to_value(report)?;
    AcceptanceSpec::required(problem)
        .iter()
        .map(|key| {
            let v = value
                .get(*key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidInput(format!("report has no field {key}")))?;
            let t = acceptance.get(key).expect("validated");
            Ok(Check::at_most(*key, v, t))
        })
        .collect()
}

fn check_lines(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .map(|c| {
            let op = match c.bound {
                scenarios::Bound::AtMost => "<=",
                scenarios::Bound::AtLeast => ">=",
            };
            let verdict = if c.passed { "ok" } else { "FAIL" };
            format!(
                "{verdict:4} {} = {:.3e} ({op} {:.1e})",
                c.name, c.value, c.threshold
            )
        })
        .collect()
}

fn write_checks(path: &Path, checks: &[Check]) -> Result<()> {
    io::write_json(path, checks)
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Artifacts {
            dir,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn field(&mut self, name: &str, f: &ScalarField) -> Result<()> {
        let p = self.path(&format!("{name}.csv"));
        io::write_field(&p, f)
    }

    fn trajectory(&mut self, name: &str, t: &crate::grid::FieldTrajectory) -> Result<()> {
        let p = self.path(&format!("{name}.csv"));
        io::write_trajectory(&p, t)
    }

    fn table(&mut self, t: &Table) -> Result<()> {
        let p = self.path(&format!("{}.csv", t.name));
        io::write_table(&p, t)
    }

    fn report<T: Serialize>(&mut self, name: &str, r: &T) -> Result<()> {
        let p = self.path(&format!("{name}.json"));
        io::write_json(&p, r)?;
        let p = self.path(&format!("{name}.txt"));
        io::write_text(&p, &io::report_text(name, r)?)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.path(name);
        io::write_json(&p, v)
    }

    fn manifest(&mut self, mut m: Value) -> Result<()> {
        let mut files = self.files.clone();
        files.sort();
        m["files"] = json!(files);
        m["tool"] = json!("mfgstop");
        m["version"] = json!(env!("CARGO_PKG_VERSION"));
        let p = self.dir.join("manifest.json");
        io::write_json(&p, &m)
    }
}

fn convergence_rows<R: Serialize>(
    stages: impl Iterator<Item = (usize, f64, usize, R)>,
    keys: &[&str],
) -> Result<Table> {
    let mut header = vec!["stage".to_string(), "epsilon".into(), "iterations".into()];
    header.extend(keys.iter().map(|k| k.to_string()));
    let mut rows = Vec::new();
    for (stage, eps, its, report) in stages {
        let v = serde_json::to_value(&report)?;
        let mut row = vec![stage as f64, eps, its as f64];
        row.extend(
            keys.iter()
                .map(|k| v.get(*k).and_then(Value::as_f64).unwrap_or(f64::NAN)),
        );
        rows.push(row);
    }
    Ok(Table {
        name: "convergence".into(),
        header,
        rows,
    })
}

/// `mfgstop run --config <path>`.
pub fn run(config_path: &Path, threads: usize) -> Outcome {
    let loaded = match config::load(config_path) {
        Ok(l) => l,
        Err(e) => return Outcome::failed(&e),
    };
    let label = config_path
        .file_stem()
        .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
    let dir = output_root(loaded.config.output_dir.as_deref()).join(label);
    let mut art = match Artifacts::new(dir.clone()) {
        Ok(a) => a,
        Err(e) => return Outcome::failed(&e),
    };
    let mut manifest = json!({
        "command": "run",
        "config": config_path.display().to_string(),
        "config_sha256": sha256_hex(loaded.source.as_bytes()),
        "problem": loaded.config.problem,
        "method": loaded.config.method,
        "scenario": loaded.config.scenario,
        "seed": loaded.config.seed,
        "schedule": loaded.schedule,
    });
    let result = run_loaded(&loaded, &mut art, &mut manifest, threads);
    let outcome = match result {
        Ok(checks) => {
            let status = if checks.iter().all(|c| c.passed) {
                Status::Ok
            } else {
                Status::ResidualFailure
            };
            manifest["checks"] = json!(checks);
            let mut lines = check_lines(&checks);
            lines.push(format!("artifacts: {}", dir.display()));
            Outcome {
                status,
                lines,
                out_dir: Some(dir.clone()),
            }
        }
        Err(e) => {
            let status = Status::of_error(&e);
            let _ = art.json(
                "error.json",
                &json!({ "error": e.to_string(), "residual_history": e.convergence_history() }),
            );
            Outcome {
                status,
                lines: vec![
                    format!("error: {e}"),
                    format!("partial artifacts: {}", dir.display()),
                ],
                out_dir: Some(dir.clone()),
            }
        }
    };
    manifest["exit_code"] = json!(outcome.status.code());
    if let Err(e) = art.manifest(manifest) {
        return Outcome::failed(&e);
    }
    outcome
}

const STATIONARY_KEYS: &[&str] = &[
    "r_obstacle",
    "r_continuation",
    "r_subsolution",
    "r_contact",
    "r_duality",
];
const EVOLUTIVE_KEYS: &[&str] = &[
    "r_obstacle",
    "r_continuation",
    "r_subsolution",
    "r_contact",
    "r_duality",
    "r_terminal",
    "r_initial",
];
const CONTROL_KEYS: &[&str] = &[
    "r_hjb",
    "r_continuation",
    "r_subsolution",
    "r_contact",
    "r_duality",
    "r_boundary_terminal",
    "r_initial",
];

fn run_loaded(
    l: &LoadedConfig,
    art: &mut Artifacts,
    manifest: &mut Value,
    threads: usize,
) -> Result<Vec<Check>> {
    let s = &l.scenario;
    let c = &l.config;
    let cfg = &l.coupling;
    let mut checks;
    match &s.problem {
        Problem::Stationary { rho, obstacle: None } => {
            let zero = ScalarField::zeros(s.grid);
            let (u, m, report, table) = match c.method {
                Method::Continuation => {
                    let res = continuation_solve(&s.cost, rho, &l.schedule, cfg)?;
                    let table = convergence_rows(
                        res.stages.iter().map(|st| (st.stage, st.epsilon, st.iterations, st.report)),
                        STATIONARY_KEYS,
                    )?;
                    art.field("alpha", &res.alpha)?;
                    (res.u, res.m, res.report, table)
                }
                Method::MonotoneIteration => {
                    let mc = MonotoneConfig {
                        delta_c: cfg.delta_c,
                        obstacle: cfg.obstacle,
                        ..MonotoneConfig::default()
                    };
                    let res = monotone_iteration_solve(&s.cost, rho, &mc)?;
                    let dc = cfg.delta_c.unwrap_or_else(|| default_delta_c(&res.u, &zero));
                    let report = verify_mixed(&res.u, &res.m, &s.cost, rho, dc)?;
                    let rows = res
                        .m_history
                        .windows(2)
                        .enumerate()
                        .map(|(k, w)| Ok(vec![(k + 1) as f64, w[1].dist_inf(&w[0])?]))
                        .collect::<Result<_>>()?;
                    let table = Table {
                        name: "convergence".into(),
                        header: vec!["iteration".into(), "m_change".into()],
                        rows,
                    };
                    (res.u, res.m, report, table)
                }
                Method::Variational => {
                    let potential = s
                        .cost
                        .potential()
                        .ok_or_else(|| Error::Config("method variational needs a local cost".into()))?;
                    let res = variational_minimize(&potential, rho, &VariationalConfig::default())?;
                    let u = solve_obstacle_stationary(&s.cost.evaluate(&res.m)?, &zero, &cfg.obstacle)?;
                    let dc = cfg.delta_c.unwrap_or_else(|| default_delta_c(&u, &zero));
                    let report = verify_mixed(&u, &res.m, &s.cost, rho, dc)?;
                    let table = Table {
                        name: "convergence".into(),
                        header: ["outer_iterations", "inner_iterations", "feasibility", "objective"]
                            .map(String::from)
                            .to_vec(),
                        rows: vec![vec![
                            res.outer_iterations as f64,
                            res.inner_iterations as f64,
                            res.feasibility,
                            res.objective,
                        ]],
                    };
                    (u, res.m, report, table)
                }
            };
            art.field("u", &u)?;
            art.field("m", &m)?;
            art.table(&table)?;
            art.report("report", &report)?;
            manifest["delta_c"] = json!(report.delta_c);
            checks = gate(&report, &c.acceptance, c.problem)?;
            if let Some(p) = c.probe {
                let probe = uniqueness_probe(&s.cost, rho, p.n_starts, c.seed, &l.schedule, cfg, threads)?;
                checks.push(Check::at_most("uniqueness gap", probe.max_pairwise_gap, p.max_gap));
            }
        }
        Problem::Stationary { obstacle: Some(_), .. } => {
            return Err(Error::Config(
                "m-dependent obstacle scenarios are verified through `mfgstop scenario`, not solved by `run`".into(),
            ))
        }
        Problem::Evolutive { m0, timegrid, obstacle } => {
            let res = osmfg_continuation(&s.cost, obstacle, m0, timegrid, &l.schedule, cfg)?;
            let table = convergence_rows(
                res.stages.iter().map(|st| (st.stage, st.epsilon, st.iterations, st.report)),
                EVOLUTIVE_KEYS,
            )?;
            let sol = &res.solution;
            art.trajectory("u", &sol.u)?;
            art.trajectory("m", &sol.m)?;
            art.trajectory("psi", &sol.psi)?;
            art.trajectory("alpha", &sol.alpha)?;
            art.table(&table)?;
            art.report("report", &res.report)?;
            manifest["delta_c"] = json!(res.report.delta_c);
            checks = gate(&res.report, &c.acceptance, c.problem)?;
            if let Some(p) = c.probe {
                let probe =
                    evolutive_uniqueness_probe(&s.cost, obstacle, m0, timegrid, p.n_starts, c.seed, &l.schedule, cfg, threads)?;
                checks.push(Check::at_most("uniqueness gap", probe.max_pairwise_gap, p.max_gap));
            }
        }
        Problem::Control {
            m0,
            timegrid,
            hamiltonian,
        } => {
            let res = cosmfg_coupled_solve(&s.cost, hamiltonian, m0, timegrid, &l.schedule, cfg)?;
            let table = convergence_rows(
                res.stages.iter().map(|st| (st.stage, st.epsilon, st.iterations, st.report)),
                CONTROL_KEYS,
            )?;
            art.trajectory("u", &res.u)?;
            art.trajectory("m", &res.m)?;
            art.trajectory("alpha", &res.alpha)?;
            art.table(&table)?;
            art.report("report", &res.report)?;
            manifest["delta_c"] = json!(res.report.delta_c);
            checks = gate(&res.report, &c.acceptance, c.problem)?;
            if let Some(p) = c.probe {
                let probe =
                    control_uniqueness_probe(&s.cost, hamiltonian, m0, timegrid, p.n_starts, c.seed, &l.schedule, cfg, threads)?;
                checks.push(Check::at_most("uniqueness gap", probe.max_pairwise_gap, p.max_gap));
            }
        }
    }
    write_checks(&art.path("checks.json"), &checks)?;
    Ok(checks)
}

/// `mfgstop verify --u <csv> --m <csv> --config <path>`: re-runs the
/// verifier on externally produced fields and prints the report.
pub fn verify(u_path: &Path, m_path: &Path, config_path: &Path) -> Outcome {
    match verify_inner(u_path, m_path, config_path) {
        Ok((checks, text)) => {
            let status = if checks.iter().all(|c| c.passed) {
                Status::Ok
            } else {
                Status::ResidualFailure
            };
            let mut lines = vec![text];
            lines.extend(check_lines(&checks));
            Outcome {
                status,
                lines,
                out_dir: None,
            }
        }
        Err(e) => Outcome::failed(&e),
    }
}

fn verify_inner(u_path: &Path, m_path: &Path, config_path: &Path) -> Result<(Vec<Check>, String)> {
    let l = config::load(config_path)?;
    let s = &l.scenario;
    let c = &l.config;
    let dc = l.coupling.delta_c;
    match &s.problem {
        Problem::Stationary { rho, obstacle } => {
            let u = io::read_field(u_path, &s.grid)?;
            let m = io::read_field(m_path, &s.grid)?;
            let report = match obstacle {
                None => {
                    let d = dc.unwrap_or_else(|| default_delta_c(&u, &ScalarField::zeros(s.grid)));
                    verify_mixed(&u, &m, &s.cost, rho, d)?
                }
                Some(ob) => {
                    let psi = ob.apply(&m)?;
                    let d = dc.unwrap_or_else(|| default_delta_c(&u, &psi));
                    verify_mixed_fields(&u, &m, &s.cost.evaluate(&m)?, rho, &psi, d)?
                }
            };
            Ok((
                gate(&report, &c.acceptance, c.problem)?,
                io::report_text("report", &report)?,
            ))
        }
        Problem::Evolutive {
            m0,
            timegrid,
            obstacle,
        } => {
            let u = io::read_trajectory(u_path, &s.grid, timegrid)?;
            let m = io::read_trajectory(m_path, &s.grid, timegrid)?;
            let report = verify_mixed_evolutive(&u, &m, &s.cost, obstacle, m0, dc)?;
            Ok((
                gate(&report, &c.acceptance, c.problem)?,
                io::report_text("report", &report)?,
            ))
        }
        Problem::Control {
            m0,
            timegrid,
            hamiltonian,
        } => {
            let u = io::read_trajectory(u_path, &s.grid, timegrid)?;
            let m = io::read_trajectory(m_path, &s.grid, timegrid)?;
            let report = verify_cosmfg(&u, &m, &s.cost, hamiltonian, m0, dc)?;
            Ok((
                gate(&report, &c.acceptance, c.problem)?,
                io::report_text("report", &report)?,
            ))
        }
    }
}

/// Writes an evidence bundle to `dir`.
pub fn write_evidence(dir: &Path, ev: &Evidence) -> Result<()> {
    let mut art = Artifacts::new(dir.to_path_buf())?;
    for (name, f) in &ev.fields {
        art.field(name, f)?;
    }
    for (name, t) in &ev.trajectories {
        art.trajectory(name, t)?;
    }
    for t in &ev.tables {
        art.table(t)?;
    }
    for (name, r) in &ev.reports {
        match r {
            Report::Stationary(x) => art.report(&format!("report_{name}"), x)?,
            Report::Evolutive(x) => art.report(&format!("report_{name}"), x)?,
            Report::Control(x) => art.report(&format!("report_{name}"), x)?,
        }
    }
    art.json(
        "evidence.json",
        &json!({
            "scenario": ev.scenario,
            "expected_outcome": ev.expected_outcome,
            "confirmed": ev.confirmed(),
            "checks": ev.checks,
            "notes": ev.notes,
        }),
    )?;
    art.manifest(json!({ "command": "scenario", "scenario": ev.scenario }))
}

/// `mfgstop scenario <name> [--out <dir>]`.
pub fn scenario(name: &str, out: Option<&Path>, threads: usize) -> Outcome {
    let s = match scenarios::scenario(name) {
        Ok(s) => s,
        Err(e) => {
            let mut o = Outcome::failed(&e);
            o.lines.push(format!(
                "registered scenarios: {}",
                scenarios::REGISTRY.join(", ")
            ));
            return o;
        }
    };
    let opts = EvidenceOptions {
        threads,
        ..EvidenceOptions::default()
    };
    let ev = match scenarios::run_evidence(&s, &opts) {
        Ok(ev) => ev,
        Err(e) => return Outcome::failed(&e),
    };
    let dir = output_root(out).join(format!("scenario_{name}"));
    if let Err(e) = write_evidence(&dir, &ev) {
        return Outcome::failed(&e);
    }
    let mut lines = vec![format!(
        "scenario {name}: expected outcome {:?}",
        ev.expected_outcome
    )];
    lines.extend(check_lines(&ev.checks));
    lines.extend(ev.notes.iter().map(|n| format!("note: {n}")));
    lines.push(format!(
        "{} ({})",
        if ev.confirmed() {
            "confirmed"
        } else {
            "NOT confirmed"
        },
        dir.display()
    ));
    Outcome {
        status: if ev.confirmed() {
            Status::Ok
        } else {
            Status::ResidualFailure
        },
        lines,
        out_dir: Some(dir),
    }
}
