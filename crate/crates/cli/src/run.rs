use std::fs;
use std::path::Path;

use mdfrac::meshdim::{build_benchmark_mesh, default_parameters, ApertureLaw, Permeability, Preset};
use mdfrac::solver::{infsup_probe, SolverStats, INFSUP_SIZE_LIMIT};
use mdfrac::verify::{convergence_study_with, ConvergenceReport, LevelRun};
use mdfrac::vtk;
use serde::Serialize;

use crate::config::{Check, RunConfig};

pub const CONSERVATION_LIMIT: f64 = 1e-10;
pub const MIN_RATE: f64 = 0.8;
pub const MAX_MEAN_RATE: f64 = 1.5;
pub const INFSUP_RATIO_LIMIT: f64 = 2.0;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Failed(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "{m}"),
            RunError::Failed(m) => write!(f, "run failed: {m}"),
        }
    }
}

fn failed(e: impl std::fmt::Display) -> RunError {
    RunError::Failed(e.to_string())
}

#[derive(Serialize)]
struct LevelStats {
    level: usize,
    #[serde(flatten)]
    stats: SolverStats,
    conservation: f64,
}

#[derive(Serialize)]
struct ProbeValue {
    level: usize,
    n_dofs: usize,
    beta: f64,
}

pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

pub struct RunOutcome {
    pub log: Vec<String>,
    pub checks: Vec<CheckResult>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| failed(format!("{}: {e}", path.display())))
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let setup = cfg.resolve().map_err(RunError::Config)?;
    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| failed(format!("{}: {e}", out.display())))?;
    let probe = cfg.wants(Check::Infsup) || cfg.features.infsup_probe;
    let mut log = Vec::new();
    let mut stats = Vec::new();
    let mut probes = Vec::new();
    let mut level = 0;
    let last = cfg.levels - 1;
    let mut visit = |run: &LevelRun| -> mdfrac::Result<()> {
        let conservation = run.conservation();
        log.push(format!(
            "level {level}: {} dofs, residual {:.2e}, conservation {conservation:.2e}",
            run.system.n_dofs(),
            run.solution.stats.residual
        ));
        stats.push(LevelStats { level, stats: run.solution.stats.clone(), conservation });
        if probe && run.system.n_dofs() <= INFSUP_SIZE_LIMIT {
            let beta = infsup_probe(&run.system, &run.fields.eps_hat_max.concat())?;
            probes.push(ProbeValue { level, n_dofs: run.system.n_dofs(), beta });
        }
        if level == last {
            let files = vtk::write_run(run, &out.join("vtk"))?;
            log.push(format!("level {level}: wrote {} VTK files", files.len() - 1));
        }
        level += 1;
        Ok(())
    };
    let report = if cfg.levels == 1 {
        let run = setup.mesh(0).and_then(|m| setup.solve_mesh(m)).map_err(failed)?;
        visit(&run).map_err(failed)?;
        None
    } else {
        let report = convergence_study_with(&setup, cfg.levels, cfg.reference_extra, &mut visit).map_err(failed)?;
        write(&out.join("report.csv"), &report.to_csv())?;
        write(&out.join("report.json"), &report.to_json().map_err(failed)?)?;
        Some(report)
    };
    write(&out.join("stats.json"), &serde_json::to_string_pretty(&stats).map_err(failed)?)?;
    if probe {
        write(&out.join("infsup.json"), &serde_json::to_string_pretty(&probes).map_err(failed)?)?;
    }

    let mut checks = Vec::new();
    if cfg.wants(Check::Conservation) {
        let worst = match &report {
            Some(r) => r.levels.iter().map(|l| l.conservation).fold(0.0, f64::max),
            None => stats[0].conservation,
        };
        checks.push(CheckResult {
            check: Check::Conservation,
            passed: worst <= CONSERVATION_LIMIT,
            detail: format!("max relative residual {worst:.2e} (limit {CONSERVATION_LIMIT:.0e})"),
        });
    }
    if let Some(report) = report.as_ref().filter(|_| cfg.wants(Check::Rates)) {
        checks.push(rates_check(report, setup.base.ambient_dim));
    }
    if cfg.wants(Check::Infsup) {
        let values: Vec<f64> = probes.iter().map(|p| p.beta).collect();
        let check = if values.is_empty() {
            CheckResult { check: Check::Infsup, passed: false, detail: format!("no level has at most {INFSUP_SIZE_LIMIT} dofs") }
        } else {
            let max = values.iter().cloned().fold(f64::MIN, f64::max);
            let min = values.iter().cloned().fold(f64::MAX, f64::min);
            let shown: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
            CheckResult {
                check: Check::Infsup,
                passed: min > 0.0 && max / min <= INFSUP_RATIO_LIMIT,
                detail: format!("probe {} (max/min {:.3}, limit {INFSUP_RATIO_LIMIT})", shown.join(", "), max / min),
            }
        };
        checks.push(check);
    }
    Ok(RunOutcome { log, checks })
}

/// Rate rule for `d ≥ 1`, chosen by the ambient dimension: in 2D the mean
/// of the last two rates must lie in [`MIN_RATE`, [`MAX_MEAN_RATE`]]; in 3D
/// every rate between consecutive levels must reach [`MIN_RATE`].
/// Zero-dimensional subdomains are reported but not judged.
fn rates_check(report: &ConvergenceReport, ambient_dim: usize) -> CheckResult {
    let mut passed = true;
    let mut parts = Vec::new();
    for (dim, var) in report.series() {
        let rates = report.rates(dim, var);
        let shown: Vec<String> = rates.iter().map(|r| format!("{r:.2}")).collect();
        let mut line = format!("{}(d={dim}) {}", var.name(), shown.join("/"));
        if dim == 0 {
            line += " (not judged)";
        } else if ambient_dim == 2 {
            let n = rates.len().min(2);
            let mean = report.mean_rate(dim, var, n).unwrap_or(f64::NAN);
            passed &= (MIN_RATE..=MAX_MEAN_RATE).contains(&mean);
            line += &format!(" (mean {mean:.2})");
        } else {
            passed &= rates.iter().all(|r| *r >= MIN_RATE);
        }
        parts.push(line);
    }
    let rule = if ambient_dim == 2 {
        format!("mean of last two in [{MIN_RATE}, {MAX_MEAN_RATE}]")
    } else {
        format!("every rate >= {MIN_RATE}")
    };
    CheckResult { check: Check::Rates, passed, detail: format!("{}; {rule}", parts.join(", ")) }
}

fn describe_permeability(k: &Permeability) -> String {
    match k {
        Permeability::Isotropic(k) => format!("{k}"),
        Permeability::Tensor(t) => format!("{t:?}"),
    }
}

fn describe_aperture(a: &ApertureLaw) -> String {
    match a {
        ApertureLaw::Constant(g) => format!("{g}"),
        ApertureLaw::PinchOut { scale, start, power, axis } => {
            format!("{scale}·(2·max(x{} − {start}, 0))^{power}", axis + 1)
        }
    }
}

pub fn describe(preset: Preset) -> Result<String, RunError> {
    let mesh = build_benchmark_mesh(preset, 0).map_err(failed)?;
    let params = default_parameters(preset);
    let counts = mesh.counts();
    let mut out = format!("{preset} ({}D)\n", preset.ambient_dim());
    out += &format!("subdomains: {}\n", mesh.describe_counts());
    let slashed: Vec<String> = counts.iter().rev().map(|c| c.to_string()).collect();
    out += &format!("counts by dimension, highest first: {}\n", slashed.join("/"));
    out += &format!("interfaces: {}\n", mesh.interfaces.len());
    out += &format!("lower-dimensional subdomains: {}\n", mesh.subdomains.iter().filter(|s| s.dim < preset.ambient_dim()).count());
    let axes: Vec<String> = preset.dirichlet_axes().iter().map(|a| format!("x{}", a + 1)).collect();
    out += &format!("Dirichlet faces: normal to {}; other faces no-flux\n", axes.join(", "));
    out += "feature            subdomains  K          K_nu       gamma\n";
    for (name, p) in &params.features {
        let n = mesh.subdomains.iter().filter(|s| &s.feature == name).count();
        out += &format!(
            "{name:<18} {n:<11} {:<10} {:<10} {}\n",
            describe_permeability(&p.permeability),
            p.normal_permeability,
            describe_aperture(&p.aperture)
        );
    }
    Ok(out)
}
