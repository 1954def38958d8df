//! Experiment drivers behind the CLI subcommands. Each writes its CSV
//! artifacts and a `manifest.txt` into the output directory.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::diagnostics::{
    energy_inequality_check, gronwall_monitor, manufactured_solution, relative_energy,
    EnergyLedger, GronwallConfig, GronwallReport, StrongSolution,
};
use crate::error::{Error, Result};
use crate::galerkin::{run_with, GalerkinSystem, InitialVelocity, RunOutput, RunStats, SimConfig};
use crate::measure::{
    concentration_defect, dissipation_defect, lemma_check, psd_test_default, total_variation,
    trace_total, MatrixMeasure, DEFAULT_LEMMA_CONSTANT,
};
use crate::tensor::SymMat3;
use crate::transport::DensityField;

use super::config::RunConfig;
use super::fieldio::{write_field, FieldData};
use super::svg::line_plot;
use super::verify::{run_suite, Check};

/// Largest energy-inequality excess accepted by `simulate`.
pub const ENERGY_EXCESS_LIMIT: f64 = 1e-3;

/// Locale-independent float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub started: f64,
    pub finished: f64,
    pub artifacts: Vec<PathBuf>,
    /// Solver statistics of the run, if any.
    pub run: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub failure: Option<String>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl Manifest {
    pub fn new(command: &str, config: Vec<(String, String)>) -> Self {
        Manifest {
            command: command.to_string(),
            config,
            started: unix_now(),
            finished: 0.0,
            artifacts: Vec::new(),
            run: Vec::new(),
            checks: Vec::new(),
            failure: None,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "started_unix = {:.3}", self.started);
        let _ = writeln!(s, "finished_unix = {:.3}", self.finished);
        match &self.failure {
            None => {
                let _ = writeln!(
                    s,
                    "status = {}",
                    if self.all_pass() {
                        "pass"
                    } else {
                        "check-failure"
                    }
                );
            }
            Some(msg) => {
                let _ = writeln!(s, "status = failed (partial outputs): {msg}");
            }
        }
        s.push_str("[config]\n");
        for (k, v) in &self.config {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("[artifacts]\n");
        for a in &self.artifacts {
            let _ = writeln!(s, "{}", a.display());
        }
        if !self.run.is_empty() {
            s.push_str("[run]\n");
            for (k, v) in &self.run {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s.push_str("[checks]\n");
        for c in &self.checks {
            let _ = writeln!(s, "{}", c.line());
        }
        s
    }

    /// Stamp the end time and write `manifest.txt` into `out`.
    pub fn finish(&mut self, out: &Path) -> Result<()> {
        self.finished = unix_now();
        let path = out.join("manifest.txt");
        std::fs::write(&path, self.render())?;
        Ok(())
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        std::fs::write(&path, contents)?;
        self.artifacts.push(path);
        Ok(())
    }
}

/// Run `body`; on error record it in the manifest, write the manifest and
/// pass the error on.
fn guarded<T>(
    manifest: &mut Manifest,
    out: &Path,
    body: impl FnOnce(&mut Manifest) -> Result<T>,
) -> Result<T> {
    std::fs::create_dir_all(out)?;
    match body(manifest) {
        Ok(v) => {
            manifest.finish(out)?;
            Ok(v)
        }
        Err(e) => {
            manifest.failure = Some(e.to_string());
            let _ = manifest.finish(out);
            Err(e)
        }
    }
}

pub fn ledger_csv(ledger: &EnergyLedger) -> String {
    let mut s = String::from("t,kinetic,gamma_term,dissipation,defect,total,residual\n");
    for r in &ledger.rows {
        let cols = [
            r.t,
            r.kinetic,
            r.gamma_term,
            r.dissipation,
            r.defect,
            r.total,
            r.residual,
        ]
        .map(fmt_f64);
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

fn ledger_svg(ledger: &EnergyLedger, title: &str) -> String {
    let t: Vec<f64> = ledger.rows.iter().map(|r| r.t).collect();
    let series = [
        (
            "kinetic",
            ledger.rows.iter().map(|r| r.kinetic).collect::<Vec<_>>(),
        ),
        (
            "gamma_term",
            ledger.rows.iter().map(|r| r.gamma_term).collect(),
        ),
        (
            "dissipation",
            ledger.rows.iter().map(|r| r.dissipation).collect(),
        ),
        ("total", ledger.rows.iter().map(|r| r.total).collect()),
    ];
    line_plot(title, &t, &series)
}

fn run_summary(stats: &RunStats) -> Vec<(String, String)> {
    [
        ("steps", stats.steps.to_string()),
        ("halvings", stats.halvings.to_string()),
        (
            "picard_iterations_total",
            stats.total_picard_iterations.to_string(),
        ),
        (
            "picard_iterations_max",
            stats.max_picard_iterations.to_string(),
        ),
        ("rho_min_seen", fmt_f64(stats.rho_range.0)),
        ("rho_max_seen", fmt_f64(stats.rho_range.1)),
        ("max_mass_drift", fmt_f64(stats.max_mass_drift)),
        ("max_gamma_moment_drift", fmt_f64(stats.max_gamma_drift)),
        ("max_dissipation_gap", fmt_f64(stats.max_dissipation_gap)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn run_checks(cfg: &SimConfig, out: &RunOutput) -> Result<Vec<Check>> {
    let excess = energy_inequality_check(&out.ledger)?;
    let (lo, hi) = out.stats.rho_range;
    Ok(vec![
        Check {
            name: "density_bounds".into(),
            pass: out.stats.density_bounds_hold(cfg.rho_min, cfg.rho_max),
            margin: (lo - cfg.rho_min).min(cfg.rho_max - hi),
            detail: format!(
                "density range [{lo}, {hi}] within [{}, {}]",
                cfg.rho_min, cfg.rho_max
            ),
        },
        Check {
            name: "energy_inequality".into(),
            pass: excess <= ENERGY_EXCESS_LIMIT,
            margin: ENERGY_EXCESS_LIMIT - excess,
            detail: format!("max E(t) - E(0) = {excess:.3e}"),
        },
    ])
}

/// `simulate`: run the solver, write `ledger.csv`, snapshots and the manifest.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path, svg: bool) -> Result<(Manifest, RunOutput)> {
    let mut manifest = Manifest::new("simulate", cfg.entries.clone());
    guarded(&mut manifest, out, |m| {
        let every = cfg.sim.snapshot_every;
        let snap_dir = out.join("snapshots");
        if every > 0 {
            std::fs::create_dir_all(&snap_dir)?;
        }
        let mut snaps = Vec::new();
        let result = run_with(&cfg.sim, |step, state| {
            if every > 0 && step % every == 0 {
                let p = snap_dir.join(format!("rho_{step:06}.bin"));
                write_field(&p, &FieldData::from(&state.rho))?;
                snaps.push(p);
            }
            Ok(())
        });
        m.artifacts.extend(snaps);
        let output = result?;
        m.write(out.join("ledger.csv"), &ledger_csv(&output.ledger))?;
        if svg {
            m.write(
                out.join("ledger.svg"),
                &ledger_svg(&output.ledger, "energy ledger"),
            )?;
        }
        m.run = run_summary(&output.stats);
        m.checks = run_checks(&cfg.sim, &output)?;
        Ok(output)
    })
    .map(|o| (manifest, o))
}

/// `verify <suite>`.
pub fn cmd_verify(suite: &str, seed: u64, out: Option<&Path>) -> Result<Manifest> {
    let mut manifest = Manifest::new(
        &format!("verify {suite}"),
        vec![("seed".into(), seed.to_string())],
    );
    let checks = run_suite(suite, seed)?;
    manifest.checks = checks;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        manifest.finish(dir)?;
    }
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct RelativeEnergyOutcome {
    pub strong: StrongSolution,
    /// `(t, E_rel)` per step.
    pub series: Vec<(f64, f64)>,
    pub c_max: f64,
    pub report: Option<GronwallReport>,
    pub run: RunOutput,
}

/// Strong solution matching a Newtonian single-mode configuration.
pub fn strong_solution_for(cfg: &SimConfig) -> Result<StrongSolution> {
    let nu = cfg.potential.newtonian_viscosity().ok_or_else(|| {
        Error::invalid(
            "relative-energy runs need a Newtonian potential (newtonian, or power_law with p = 2)",
        )
    })?;
    match cfg.u0 {
        InitialVelocity::Mode { k, w } => manufactured_solution(k, w, nu),
        _ => Err(Error::invalid("relative-energy runs need u0 = mode")),
    }
}

/// `relative-energy`: compare the Galerkin run against the manufactured
/// strong solution and monitor the Grönwall envelope.
pub fn cmd_relative_energy(
    cfg: &RunConfig,
    out: &Path,
    svg: bool,
) -> Result<(Manifest, RelativeEnergyOutcome)> {
    let mut manifest = Manifest::new("relative-energy", cfg.entries.clone());
    guarded(&mut manifest, out, |m| {
        let strong = strong_solution_for(&cfg.sim)?;
        let sys = GalerkinSystem::from_config(&cfg.sim)?;
        let mut series = Vec::new();
        let run = run_with(&cfg.sim, |_, state| {
            let u = sys.velocity_field(&state.coeffs, state.time)?;
            let e = relative_energy(&state.rho, &u, 0.0, &strong, state.time, cfg.sim.gamma, sys.grid())?;
            series.push((state.time, e));
            Ok(())
        })?;
        let c_max = 2.0 * strong.grad_sup(0.0);
        let gcfg = GronwallConfig {
            floor: cfg.erel_floor,
            c_max,
            window: None,
        };
        let base = series[0].1.max(cfg.erel_floor);
        let mut csv = String::from("t,erel,envelope,kinetic,kinetic_exact\n");
        for ((t, e), row) in series.iter().zip(&run.ledger.rows) {
            let cols = [*t, *e, base * (c_max * t).exp(), row.kinetic, strong.kinetic_energy(*t)].map(fmt_f64);
            csv.push_str(&cols.join(","));
            csv.push('\n');
        }
        m.write(out.join("erel.csv"), &csv)?;
        if svg {
            let t: Vec<f64> = series.iter().map(|p| p.0).collect();
            let e: Vec<f64> = series.iter().map(|p| p.1).collect();
            m.write(out.join("erel.svg"), &line_plot("relative energy", &t, &[("erel", e)]))?;
        }
        let report = if series.len() >= 3 {
            let r = gronwall_monitor(&series, &gcfg)?;
            m.checks.push(Check {
                name: "gronwall_envelope".into(),
                pass: r.pass,
                margin: 1.0 - r.worst_ratio,
                detail: format!(
                    "fitted rate {:.4e}, C_max = {c_max:.4} = 2 sup|grad U(0)|, worst ratio to envelope {:.3e}",
                    r.rate, r.worst_ratio
                ),
            });
            Some(r)
        } else {
            m.checks.push(Check {
                name: "gronwall_envelope".into(),
                pass: series.iter().all(|p| p.1.is_finite()),
                margin: 0.0,
                detail: format!("{} sample(s), too few for a fit; E_rel(0) = {:.6e}", series.len(), series[0].1),
            });
            None
        };
        m.run = run_summary(&run.stats);
        m.checks.extend(run_checks(&cfg.sim, &run)?);
        Ok(RelativeEnergyOutcome {
            strong,
            series,
            c_max,
            report,
            run,
        })
    })
    .map(|o| (manifest, o))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectRow {
    pub n: usize,
    /// `|m(T³) − w⊗w|` in the Frobenius norm (against zero when the limit
    /// equals the sequence).
    pub frobenius_error: f64,
    /// Largest per-cell deviation from `(cell volume) · w⊗w`.
    pub max_cell_error: f64,
    pub defect: f64,
    pub total_variation: f64,
    pub trace: f64,
    pub lemma_ratio: f64,
    pub lemma_pass: bool,
    pub psd: bool,
}

/// Concentration measures of `u_n = √2 w sin(2πn x₁)` against the weak
/// limit `0` (or against `u_n` itself when `identical`).
/// Relative size below which a defect distance is indistinguishable from
/// roundoff in the cell sums.
pub const DEFECT_ROUNDOFF_FLOOR: f64 = 1e-12;

pub fn defect_measures(
    ns: &[usize],
    w: [f64; 3],
    cells: usize,
    identical: bool,
) -> Result<Vec<(usize, MatrixMeasure)>> {
    if w[0] != 0.0 {
        return Err(Error::invalid(format!(
            "w must be orthogonal to e1, got {w:?}"
        )));
    }
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid(
            "n values must be positive and strictly increasing",
        ));
    }
    let rho = DensityField::constant(2, 1.0, 1.0, 1.0)?;
    ns.iter()
        .map(|&n| {
            let nf = n as f64;
            let un = move |_t: f64, x: [f64; 3]| {
                let s = SQRT_2 * (2.0 * PI * nf * x[0]).sin();
                w.map(|c| c * s)
            };
            let zero = |_t: f64, _x: [f64; 3]| [0.0; 3];
            // about eight samples per period of sin², so per-cell averages
            // are resolved and the whole-torus sum is exact
            let sub = (8 * n / cells + 1).max(4);
            let mu = if identical {
                concentration_defect(&rho, &un, &un, 0.0, cells, sub)?
            } else {
                concentration_defect(&rho, &un, &zero, 0.0, cells, sub)?
            };
            Ok((n, mu))
        })
        .collect()
}

pub fn defect_rows(
    ns: &[usize],
    w: [f64; 3],
    cells: usize,
    identical: bool,
) -> Result<Vec<DefectRow>> {
    let target = if identical {
        SymMat3::ZERO
    } else {
        SymMat3::outer(w)
    };
    let cell_target = target.scale(1.0 / (cells * cells * cells) as f64);
    defect_measures(ns, w, cells, identical)?
        .into_iter()
        .map(|(n, mu)| {
            let lemma = lemma_check(&mu, DEFAULT_LEMMA_CONSTANT)?;
            Ok(DefectRow {
                n,
                frobenius_error: (mu.total() - target).norm(),
                max_cell_error: mu
                    .atoms()
                    .iter()
                    .map(|a| (*a - cell_target).norm())
                    .fold(0.0, f64::max),
                defect: dissipation_defect(&mu),
                total_variation: total_variation(&mu),
                trace: trace_total(&mu),
                lemma_ratio: lemma.ratio,
                lemma_pass: lemma.pass,
                psd: psd_test_default(&mu, 42)?.pass,
            })
        })
        .collect()
}

/// `defect-study`: writes `defect.csv` and checks convergence to `w⊗w`.
pub fn cmd_defect_study(
    ns: &[usize],
    w: [f64; 3],
    cells: usize,
    identical: bool,
    out: &Path,
) -> Result<(Manifest, Vec<DefectRow>)> {
    let config = vec![
        (
            "n".to_string(),
            ns.iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        ),
        ("w".to_string(), format!("{} {} {}", w[0], w[1], w[2])),
        ("cells".to_string(), cells.to_string()),
        ("identical".to_string(), identical.to_string()),
    ];
    let mut manifest = Manifest::new("defect-study", config);
    guarded(&mut manifest, out, |m| {
        let rows = defect_rows(ns, w, cells, identical)?;
        let mut csv = String::from(
            "n,frobenius_error,max_cell_error,defect,total_variation,trace,lemma_ratio,lemma_pass,psd\n",
        );
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                fmt_f64(r.frobenius_error),
                fmt_f64(r.max_cell_error),
                fmt_f64(r.defect),
                fmt_f64(r.total_variation),
                fmt_f64(r.trace),
                fmt_f64(r.lemma_ratio),
                r.lemma_pass,
                r.psd
            );
        }
        m.write(out.join("defect.csv"), &csv)?;
        let last = rows.last().expect("nonempty");
        let expected_defect = if identical { 0.0 } else { 0.5 * (w[1] * w[1] + w[2] * w[2]) };
        let target_norm = if identical { 1.0 } else { SymMat3::outer(w).norm().max(f64::MIN_POSITIVE) };
        let floor = DEFECT_ROUNDOFF_FLOOR * target_norm;
        let monotone = rows
            .windows(2)
            .all(|p| p[1].frobenius_error <= p[0].frobenius_error.max(floor));
        let rel = last.frobenius_error / target_norm;
        let defect_rel = if expected_defect > 0.0 {
            (last.defect - expected_defect).abs() / expected_defect
        } else {
            last.defect.abs()
        };
        let domination = rows
            .iter()
            .map(|r| r.total_variation - 2.0 * DEFAULT_LEMMA_CONSTANT * r.defect)
            .fold(f64::NEG_INFINITY, f64::max);
        m.checks = vec![
            Check {
                name: "limit_measure".into(),
                pass: rel <= 0.05,
                margin: 0.05 - rel,
                detail: format!("relative distance of m(T3) from the limit at n = {}: {rel:.3e}", last.n),
            },
            Check {
                name: "monotone_convergence".into(),
                pass: monotone,
                margin: 0.0,
                detail: format!(
                    "distance non-increasing in n, values below {floor:.1e} counted as zero: {}",
                    rows.iter().map(|r| format!("{:.2e}", r.frobenius_error)).collect::<Vec<_>>().join(" ")
                ),
            },
            Check {
                name: "dissipation_defect".into(),
                pass: defect_rel <= 0.05,
                margin: 0.05 - defect_rel,
                detail: format!("D = {:.6e}, expected {expected_defect}", last.defect),
            },
            Check {
                name: "lemma".into(),
                pass: rows.iter().all(|r| r.lemma_pass),
                margin: 0.0,
                detail: "componentwise and aggregate bounds for every n".into(),
            },
            Check {
                name: "trace_domination".into(),
                pass: domination <= 1e-12,
                margin: -domination,
                detail: format!("max |m| - 2 C D = {domination:.3e}"),
            },
        ];
        Ok(rows)
    })
    .map(|r| (manifest, r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub ladder: &'static str,
    pub value: f64,
    pub steps: usize,
    pub final_kinetic: f64,
    /// Largest `|E(t) − E(0)|` along the run.
    pub energy_residual: f64,
    pub max_excess: f64,
    /// `log₂` ratio of successive energy residuals in the dt ladder.
    pub observed_order: Option<f64>,
}

/// Which ladders `convergence` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvergencePlan {
    pub dt: bool,
    pub alpha: bool,
    pub kmax: bool,
}

impl Default for ConvergencePlan {
    fn default() -> Self {
        ConvergencePlan {
            dt: true,
            alpha: true,
            kmax: true,
        }
    }
}

fn summarize(ladder: &'static str, value: f64, out: &RunOutput) -> Result<ConvergenceRow> {
    Ok(ConvergenceRow {
        ladder,
        value,
        steps: out.stats.steps,
        final_kinetic: out.ledger.rows.last().map_or(0.0, |r| r.kinetic),
        energy_residual: out
            .ledger
            .rows
            .iter()
            .map(|r| r.residual.abs())
            .fold(0.0, f64::max),
        max_excess: energy_inequality_check(&out.ledger)?,
        observed_order: None,
    })
}

/// dt ladder `{4dt, 2dt, dt}` over a base configuration.
pub fn dt_ladder(base: &SimConfig) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for factor in [4.0, 2.0, 1.0] {
        let mut cfg = base.clone();
        cfg.dt = base.dt * factor;
        cfg.validate()?;
        let out = crate::galerkin::run(&cfg)?;
        let mut row = summarize("dt", cfg.dt, &out)?;
        if let Some(prev) = rows.last() {
            row.observed_order = Some((prev.energy_residual / row.energy_residual).log2());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `convergence`: dt, α and kmax ladders, written to `convergence.csv`.
pub fn cmd_convergence(
    cfg: &RunConfig,
    plan: ConvergencePlan,
    out: &Path,
) -> Result<(Manifest, Vec<ConvergenceRow>)> {
    let mut manifest = Manifest::new("convergence", cfg.entries.clone());
    guarded(&mut manifest, out, |m| {
        let base = &cfg.sim;
        let mut rows = Vec::new();
        if plan.dt {
            let ladder = dt_ladder(base)?;
            let min_order = ladder
                .iter()
                .filter_map(|r| r.observed_order)
                .fold(f64::INFINITY, f64::min);
            let excess_ok = ladder
                .windows(2)
                .all(|p| p[1].max_excess <= p[0].max_excess + 1e-12);
            m.checks.push(Check {
                name: "dt_residual_order".into(),
                pass: min_order >= 1.0,
                margin: min_order - 1.0,
                detail: format!("smallest observed order of the energy residual: {min_order:.3}"),
            });
            m.checks.push(Check {
                name: "dt_excess_nonincreasing".into(),
                pass: excess_ok,
                margin: 0.0,
                detail: "energy-inequality excess does not grow under dt refinement".into(),
            });
            rows.extend(ladder);
        }
        if plan.alpha {
            for factor in [100.0, 10.0, 1.0] {
                let mut c = base.clone();
                c.alpha = base.alpha * factor;
                let o = crate::galerkin::run(&c)?;
                rows.push(summarize("alpha", c.alpha, &o)?);
            }
        }
        if plan.kmax {
            for k in [base.kmax, base.kmax + 1] {
                if k > 7 {
                    continue;
                }
                let mut c = base.clone();
                c.kmax = k;
                c.quad_m = c.quad_m.max(SimConfig::default_quad_m(k));
                let o = crate::galerkin::run(&c)?;
                rows.push(summarize("kmax", k as f64, &o)?);
            }
        }
        let mut csv = String::from(
            "ladder,value,steps,final_kinetic,energy_residual,max_excess,observed_order\n",
        );
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                r.ladder,
                fmt_f64(r.value),
                r.steps,
                fmt_f64(r.final_kinetic),
                fmt_f64(r.energy_residual),
                fmt_f64(r.max_excess),
                r.observed_order.map(fmt_f64).unwrap_or_default()
            );
        }
        m.write(out.join("convergence.csv"), &csv)?;
        Ok(rows)
    })
    .map(|r| (manifest, r))
}
