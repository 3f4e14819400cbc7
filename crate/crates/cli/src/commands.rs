//! Experiment drivers. Each command writes its files into the output
//! directory and returns the lines to print on standard output.

use std::fs;
use std::path::{Path, PathBuf};

use urnflow::analysis::{
    boundary_equilibria, check_permanence, detect_periodic_orbit, growth_condition_value, interior_equilibrium,
    AttractorSpec, InteriorEquilibrium,
};
use urnflow::ensemble::{
    convergence_statistics, establishment_probability, run_ensemble, write_csv, EnsembleConfig, Population,
};
use urnflow::linalg::check_simplex;
use urnflow::mean_field::flow;
use urnflow::par::Execution;
use urnflow::urn::{simulate_thinned, StopCondition, UrnState};

use crate::config::{resolve_attractor, BuiltModel, ExperimentConfig, Format, OrbitConfig, RunConfig};
use crate::output::{
    decimate, render_svg, support_label, write_analysis_csv, write_file, write_flow_csv, write_orbit_csv,
    write_path_csv, AnalysisRow, Panel, Series,
};
use crate::CliError;

/// Points per series in SVG charts.
const SVG_POINTS: usize = 2000;

/// Per-invocation overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub jobs: usize,
    /// `--out`, which wins over the config file.
    pub out: Option<PathBuf>,
    /// Fallback when neither `--out` nor `output.dir` is set.
    pub env_out: Option<PathBuf>,
    pub thin: Option<u64>,
}

impl RunOptions {
    pub fn output_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .or_else(|| self.env_out.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn thin(&self, cfg: &ExperimentConfig) -> u64 {
        self.thin.unwrap_or(cfg.output.thin).max(1)
    }

    fn execution(&self) -> Execution {
        Execution::with_jobs(self.jobs.max(1))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn save(
    report: &mut Report,
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    write_file(dir, name, f)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", dir.join(name).display())))?;
    report.files.push(dir.join(name));
    Ok(())
}

fn save_text(report: &mut Report, dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    save(report, dir, name, |w| std::io::Write::write_all(w, text.as_bytes()))
}

fn check_z0(z0: &[u64], built: &BuiltModel) -> Result<UrnState, CliError> {
    if z0.len() != built.dim() {
        return Err(CliError::Config(format!(
            "run.z0: expected {} entries, got {}",
            built.dim(),
            z0.len()
        )));
    }
    Ok(UrnState::new(z0.to_vec()))
}

/// Reference level for growth charts: the growth value at the interior
/// equilibrium of a replicator model.
fn growth_reference(built: &BuiltModel) -> Option<(f64, String)> {
    let params = built.replicator.as_ref()?;
    growth_condition_value(params)
        .ok()
        .map(|v| (v, format!("f(x*) = {v:.5}")))
}

pub fn cmd_simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let RunConfig::Simulate {
        z0,
        seed,
        max_steps,
        population_at_least,
        max_tau,
    } = &cfg.run
    else {
        return Err(CliError::Config(format!(
            "run.mode: expected simulate, got {}",
            cfg.run.mode()
        )));
    };
    let built = cfg.model.build()?;
    let z0 = check_z0(z0, &built)?;
    let mut stops = vec![StopCondition::MaxSteps(*max_steps)];
    stops.extend(population_at_least.map(StopCondition::PopulationAtLeast));
    stops.extend(max_tau.map(StopCondition::MaxTau));
    let seed = opts.seed.unwrap_or(*seed);
    let thin = opts.thin(cfg);
    let dir = opts.output_dir(cfg);
    prepare_dir(&dir)?;

    let mut report = Report::default();
    if z0.is_extinct() {
        report
            .warnings
            .push("initial state is empty; the path has a single row".into());
    }
    let path = simulate_thinned(built.model.as_ref(), &z0, &StopCondition::Any(stops), seed, thin)
        .map_err(CliError::runtime)?;
    if cfg.output.wants(Format::Csv) {
        save(&mut report, &dir, "path.csv", |w| write_path_csv(&path, w))?;
    }
    if cfg.output.wants(Format::Svg) {
        let k = path.dim();
        let rows: Vec<usize> = (0..path.len()).collect();
        let freqs: Vec<Vec<f64>> = rows.iter().map(|&r| path.frequencies(r)).collect();
        let mut x_series = Vec::with_capacity(k);
        for i in 0..k {
            let pts = rows.iter().map(|&r| (path.tau(r), freqs[r][i])).collect();
            x_series.push(Series {
                name: format!("x_{}", i + 1),
                points: decimate(pts, SVG_POINTS),
            });
        }
        let pop = rows.iter().map(|&r| (path.tau(r), path.population(r) as f64)).collect();
        let growth = rows
            .iter()
            .filter(|&&r| path.population(r) > 0)
            .map(|&r| (path.tau(r), built.system.growth(&freqs[r])))
            .collect();
        let panels = [
            Panel {
                title: "frequencies".into(),
                x_label: "tau".into(),
                series: x_series,
                log_y: false,
                reference: None,
            },
            Panel {
                title: "population size".into(),
                x_label: "tau".into(),
                series: vec![Series {
                    name: "|z|".into(),
                    points: decimate(pop, SVG_POINTS),
                }],
                log_y: true,
                reference: None,
            },
            Panel {
                title: "growth along the path".into(),
                x_label: "tau".into(),
                series: vec![Series {
                    name: "f(x)".into(),
                    points: decimate(growth, SVG_POINTS),
                }],
                log_y: false,
                reference: growth_reference(&built),
            },
        ];
        save_text(&mut report, &dir, "path.svg", &render_svg(&panels))?;
    }
    let last = path.len() - 1;
    report.lines.push(format!(
        "steps {} tau {:.6} final population {} ({} rows)",
        path.step_index(last),
        path.tau(last),
        path.population(last),
        path.len()
    ));
    Ok(report)
}

/// Equilibria, permanence with weights `p` and the growth condition value
/// of a replicator model.
pub fn analysis_rows(built: &BuiltModel, weights: Option<&[f64]>) -> Result<Vec<AnalysisRow>, CliError> {
    let (Some(a), Some(params)) = (&built.payoff, &built.replicator) else {
        return Err(CliError::Config("equilibrium analysis needs a replicator model".into()));
    };
    let k = a.nrows();
    let uniform = vec![1.0; k];
    let p = weights.unwrap_or(&uniform);
    let eqs = boundary_equilibria(a, 1e-12).map_err(CliError::runtime)?;
    let perm = check_permanence(a, p, &eqs, None, 0.0).map_err(CliError::config)?;
    let mut rows = Vec::new();
    for (e, (_, v)) in eqs.equilibria.iter().zip(&perm.values) {
        rows.push(AnalysisRow {
            kind: "boundary_equilibrium",
            support: support_label(&e.support),
            residual: Some(e.residual),
            value: Some(*v),
            x: e.x.clone(),
        });
    }
    for s in &eqs.skipped {
        rows.push(AnalysisRow {
            kind: "skipped_support",
            support: support_label(s),
            residual: None,
            value: None,
            x: vec![],
        });
    }
    rows.push(AnalysisRow {
        kind: "permanence_minimum",
        support: String::new(),
        residual: None,
        value: (!perm.vacuous).then_some(perm.minimum),
        x: vec![],
    });
    match interior_equilibrium(a).map_err(CliError::runtime)? {
        InteriorEquilibrium::Positive(x) => {
            let value = growth_condition_value(params).map_err(CliError::runtime)?;
            rows.push(AnalysisRow {
                kind: "interior_equilibrium",
                support: support_label(&(0..k).collect::<Vec<_>>()),
                residual: None,
                value: Some(value),
                x,
            });
        }
        InteriorEquilibrium::NonPositive(x) => rows.push(AnalysisRow {
            kind: "nonpositive_solution",
            support: String::new(),
            residual: None,
            value: None,
            x,
        }),
        InteriorEquilibrium::Singular => rows.push(AnalysisRow {
            kind: "singular_interior",
            support: String::new(),
            residual: None,
            value: None,
            x: vec![],
        }),
    }
    Ok(rows)
}

fn orbit_step(
    built: &BuiltModel,
    orbit: &OrbitConfig,
    dir: &Path,
    report: &mut Report,
    rows: &mut Vec<AnalysisRow>,
) -> Result<(), CliError> {
    match detect_periodic_orbit(&built.system, &orbit.x0, orbit.t_max, orbit.tol).map_err(CliError::runtime)? {
        Some(spec) => {
            let AttractorSpec::PeriodicOrbit {
                period, closure_gap, ..
            } = &spec
            else {
                unreachable!("orbit detection returns periodic orbits");
            };
            report.lines.push(format!(
                "periodic orbit: period {period:.6}, closure gap {closure_gap:.3e}"
            ));
            rows.push(AnalysisRow {
                kind: "periodic_orbit",
                support: String::new(),
                residual: Some(*closure_gap),
                value: Some(*period),
                x: spec.points()[0].to_vec(),
            });
            save(report, dir, "orbit.csv", |w| write_orbit_csv(&spec, w))?;
        }
        None => {
            report.lines.push("no stable periodic orbit found".into());
            rows.push(AnalysisRow {
                kind: "no_periodic_orbit",
                support: String::new(),
                residual: None,
                value: None,
                x: vec![],
            });
        }
    }
    Ok(())
}

pub fn cmd_ode(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let RunConfig::Ode {
        x0,
        t_end,
        step,
        analysis,
        orbit,
    } = &cfg.run
    else {
        return Err(CliError::Config(format!(
            "run.mode: expected ode, got {}",
            cfg.run.mode()
        )));
    };
    let built = cfg.model.build()?;
    check_simplex(x0, built.dim()).map_err(|e| CliError::Config(format!("run.x0: {e}")))?;
    let h = step.unwrap_or(built.system.step);
    let dir = opts.output_dir(cfg);
    prepare_dir(&dir)?;
    let mut report = Report::default();

    let sample = flow(&built.system, x0, *t_end, h).map_err(CliError::runtime)?;
    let thin = opts.thin(cfg) as usize;
    let n = sample.times.len();
    let keep: Vec<usize> = (0..n).filter(|i| i % thin == 0 || *i == n - 1).collect();
    let times: Vec<f64> = keep.iter().map(|&i| sample.times[i]).collect();
    let points: Vec<Vec<f64>> = keep.iter().map(|&i| sample.points[i].clone()).collect();
    let growth: Vec<f64> = points.iter().map(|x| built.system.growth(x)).collect();
    if cfg.output.wants(Format::Csv) {
        save(&mut report, &dir, "flow.csv", |w| {
            write_flow_csv(&times, &points, &growth, w)
        })?;
    }
    if cfg.output.wants(Format::Svg) {
        let k = built.dim();
        let x_series = (0..k)
            .map(|i| Series {
                name: format!("x_{}", i + 1),
                points: decimate(times.iter().zip(&points).map(|(t, x)| (*t, x[i])).collect(), SVG_POINTS),
            })
            .collect();
        let panels = [
            Panel {
                title: "flow".into(),
                x_label: "t".into(),
                series: x_series,
                log_y: false,
                reference: None,
            },
            Panel {
                title: "growth along the flow".into(),
                x_label: "t".into(),
                series: vec![Series {
                    name: "f(x)".into(),
                    points: decimate(times.iter().cloned().zip(growth.iter().cloned()).collect(), SVG_POINTS),
                }],
                log_y: false,
                reference: growth_reference(&built),
            },
        ];
        save_text(&mut report, &dir, "flow.svg", &render_svg(&panels))?;
    }
    let last = sample.last();
    report.lines.push(format!(
        "x({t_end}) = [{}]",
        last.iter().map(|v| format!("{v:.9}")).collect::<Vec<_>>().join(", ")
    ));

    let mut rows = Vec::new();
    if *analysis {
        rows = analysis_rows(&built, None)?;
    }
    if let Some(o) = orbit {
        orbit_step(&built, o, &dir, &mut report, &mut rows)?;
    }
    if !rows.is_empty() {
        save(&mut report, &dir, "analysis.csv", |w| {
            write_analysis_csv(built.dim(), &rows, w)
        })?;
    }
    Ok(report)
}

pub fn cmd_analyze(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let RunConfig::Analyze {
        permanence_weights,
        orbit,
    } = &cfg.run
    else {
        return Err(CliError::Config(format!(
            "run.mode: expected analyze, got {}",
            cfg.run.mode()
        )));
    };
    let built = cfg.model.build()?;
    let dir = opts.output_dir(cfg);
    prepare_dir(&dir)?;
    let mut report = Report::default();
    let mut rows = if built.payoff.is_some() {
        analysis_rows(&built, permanence_weights.as_deref())?
    } else {
        Vec::new()
    };
    if let Some(o) = orbit {
        orbit_step(&built, o, &dir, &mut report, &mut rows)?;
    }
    for r in &rows {
        if let Some(v) = r.value {
            report.lines.push(format!("{} {} {v}", r.kind, r.support));
        }
    }
    save(&mut report, &dir, "analysis.csv", |w| {
        write_analysis_csv(built.dim(), &rows, w)
    })?;
    Ok(report)
}

/// Build the ensemble configuration of an `ensemble` run.
pub fn ensemble_config(
    cfg: &ExperimentConfig,
    built: &BuiltModel,
    opts: &RunOptions,
) -> Result<EnsembleConfig, CliError> {
    let RunConfig::Ensemble {
        z0,
        replicates,
        seed,
        max_steps,
        survival_threshold,
        checkpoints,
        attractor,
    } = &cfg.run
    else {
        return Err(CliError::Config(format!(
            "run.mode: expected ensemble, got {}",
            cfg.run.mode()
        )));
    };
    let attractor = attractor.as_ref().map(|a| resolve_attractor(a, built)).transpose()?;
    let ens = EnsembleConfig {
        replicates: *replicates,
        master_seed: opts.seed.unwrap_or(*seed),
        z0: check_z0(z0, built)?,
        stop: StopCondition::MaxSteps(*max_steps),
        survival_threshold: *survival_threshold,
        attractor,
        distance_checkpoints: checkpoints.clone(),
    };
    ens.validate(built.dim()).map_err(CliError::config)?;
    Ok(ens)
}

pub fn cmd_ensemble(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report, CliError> {
    let built = cfg.model.build()?;
    let ens = ensemble_config(cfg, &built, opts)?;
    let dir = opts.output_dir(cfg);
    prepare_dir(&dir)?;
    let mut report = Report::default();
    let result = run_ensemble(built.model.as_ref(), &ens, opts.execution()).map_err(CliError::runtime)?;
    save(&mut report, &dir, "ensemble.csv", |w| write_csv(&result, w))?;
    let est = establishment_probability(&result);
    report.lines.push(format!(
        "establishment {:.3} [{:.3}, {:.3}] ({}/{})",
        est.point, est.lower, est.upper, est.successes, est.trials
    ));
    report.lines.push(format!(
        "extinct {} censored {} failed {}",
        result.count("extinct"),
        result.count("censored"),
        result.count("failed")
    ));
    if let Some(spec) = &ens.attractor {
        let table = convergence_statistics(&result, spec, Population::Established);
        if table.empty {
            report
                .lines
                .push("no established runs for convergence statistics".into());
        }
        for row in &table.rows {
            let at = row.step.map_or("final".to_string(), |s| s.to_string());
            report.lines.push(format!(
                "distance at {at}: median {:.4} [q25 {:.4}, q75 {:.4}] over {} runs",
                row.median, row.q25, row.q75, row.count
            ));
        }
        if let Some(t) = table.trend_fraction {
            report
                .lines
                .push(format!("decreasing distance in {:.1}% of runs", 100.0 * t));
        }
    }
    Ok(report)
}

/// Dispatch on `run.mode`. `verify` is handled by the caller.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report, CliError> {
    match &cfg.run {
        RunConfig::Simulate { .. } => cmd_simulate(cfg, opts),
        RunConfig::Ode { .. } => cmd_ode(cfg, opts),
        RunConfig::Ensemble { .. } => cmd_ensemble(cfg, opts),
        RunConfig::Analyze { .. } => cmd_analyze(cfg, opts),
        RunConfig::Verify { .. } => Err(CliError::Config(
            "run.mode: verify is run through `urnflow verify`".into(),
        )),
    }
}
