//! Monte Carlo replicates of an urn process: establishment frequencies,
//! distances to an attractor, and summability diagnostics.
//!
//! Replicate `r` draws from the ChaCha stream `r` of `master_seed`, and
//! results are collected by replicate index, so a run is reproducible
//! regardless of the worker count.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::analysis::{attractor_distance, AttractorSpec};
use crate::error::{Result, UrnError};
use crate::par::Execution;
use crate::urn::{rng_for, run_chain, StopCondition, UrnModel, UrnState};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;
/// Steps between snapshots of the partial sums.
const SNAPSHOT_EVERY: u64 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub replicates: usize,
    pub master_seed: u64,
    pub z0: UrnState,
    /// Horizon; runs also stop on extinction and on reaching
    /// `survival_threshold`.
    pub stop: StopCondition,
    pub survival_threshold: u64,
    pub attractor: Option<AttractorSpec>,
    /// Step indices at which frequencies are recorded.
    pub distance_checkpoints: Vec<u64>,
}

impl EnsembleConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(UrnError::InvalidParameters("need at least one replicate".into()));
        }
        if self.z0.dim() != k {
            return Err(UrnError::DimensionMismatch {
                expected: k,
                actual: self.z0.dim(),
            });
        }
        if self.survival_threshold <= self.z0.total() {
            return Err(UrnError::InvalidParameters(format!(
                "survival threshold {} must exceed the initial population {}",
                self.survival_threshold,
                self.z0.total()
            )));
        }
        if let Some(spec) = &self.attractor {
            if spec.points().iter().any(|p| p.len() != k) {
                return Err(UrnError::InvalidParameters(
                    "attractor dimension does not match the model".into(),
                ));
            }
        }
        if self.distance_checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(UrnError::InvalidParameters(
                "checkpoints must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Reached the survival threshold.
    Established,
    Extinct,
    /// Hit the horizon with `0 < |z| < M`.
    Censored,
    Failed(String),
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Established => "established",
            Outcome::Extinct => "extinct",
            Outcome::Censored => "censored",
            Outcome::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSummary {
    pub replicate: usize,
    pub outcome: Outcome,
    pub steps: u64,
    pub final_pop: u64,
    pub final_tau: f64,
    /// Frequencies at each checkpoint, `None` if the run ended before it or
    /// was extinct there.
    pub checkpoint_freqs: Vec<Option<Vec<f64>>>,
    /// Final frequencies, `None` when extinct.
    pub final_freqs: Option<Vec<f64>>,
    /// Distances to `cfg.attractor` at the checkpoints, when one was given.
    pub checkpoint_distances: Vec<Option<f64>>,
    pub final_distance: Option<f64>,
    /// `Σ_n 1/|z(n)|^{1.5}` over the visited nonzero states.
    pub sum_inv_pow15: f64,
    /// `Σ_n 1/|z(n)|^2`.
    pub sum_inv_pow2: f64,
    /// Part of `sum_inv_pow15` accrued over (at least) the last tenth of the
    /// steps.
    pub tail_increment15: f64,
}

impl ReplicateSummary {
    fn failed(replicate: usize, n_checkpoints: usize, message: String) -> Self {
        ReplicateSummary {
            replicate,
            outcome: Outcome::Failed(message),
            steps: 0,
            final_pop: 0,
            final_tau: 0.0,
            checkpoint_freqs: vec![None; n_checkpoints],
            final_freqs: None,
            checkpoint_distances: vec![None; n_checkpoints],
            final_distance: None,
            sum_inv_pow15: 0.0,
            sum_inv_pow2: 0.0,
            tail_increment15: 0.0,
        }
    }

    /// Tail increment as a fraction of the total sum.
    pub fn tail_fraction15(&self) -> f64 {
        if self.sum_inv_pow15 > 0.0 {
            self.tail_increment15 / self.sum_inv_pow15
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub summaries: Vec<ReplicateSummary>,
    pub checkpoints: Vec<u64>,
    pub survival_threshold: u64,
    pub master_seed: u64,
}

impl EnsembleResult {
    pub fn count(&self, label: &str) -> usize {
        self.summaries.iter().filter(|s| s.outcome.label() == label).count()
    }

    pub fn established(&self) -> impl Iterator<Item = &ReplicateSummary> {
        self.summaries.iter().filter(|s| s.outcome == Outcome::Established)
    }
}

fn run_replicate(model: &dyn UrnModel, cfg: &EnsembleConfig, replicate: usize) -> Result<ReplicateSummary> {
    let mut rng = rng_for(cfg.master_seed, replicate as u64);
    let stop = StopCondition::Any(vec![
        cfg.stop.clone(),
        StopCondition::PopulationAtLeast(cfg.survival_threshold),
    ]);
    let n_cp = cfg.distance_checkpoints.len();
    let mut checkpoint_freqs: Vec<Option<Vec<f64>>> = vec![None; n_cp];
    let mut next_cp = 0;
    let mut s15 = 0.0;
    let mut s2 = 0.0;
    let mut snapshots: Vec<f64> = Vec::new();
    let end = run_chain(model, &cfg.z0, &stop, &mut rng, |n, z, total, _tau| {
        if n % SNAPSHOT_EVERY == 0 {
            snapshots.push(s15);
        }
        if total > 0 {
            let m = total as f64;
            s15 += 1.0 / (m * m.sqrt());
            s2 += 1.0 / (m * m);
        }
        while next_cp < n_cp && cfg.distance_checkpoints[next_cp] <= n {
            if cfg.distance_checkpoints[next_cp] == n && total > 0 {
                checkpoint_freqs[next_cp] = Some(z.iter().map(|&v| v as f64 / total as f64).collect());
            }
            next_cp += 1;
        }
    })?;
    // Snapshot j holds the sum over states 0..j*SNAPSHOT_EVERY-1; take the
    // latest one not after 90% of the visited states.
    let visited = end.steps + 1;
    let cut = (visited as f64 * 0.9).floor() as u64;
    let idx = ((cut / SNAPSHOT_EVERY) as usize).min(snapshots.len() - 1);
    let tail_increment15 = s15 - snapshots[idx];

    let final_pop = end.state.total();
    let outcome = if final_pop >= cfg.survival_threshold {
        Outcome::Established
    } else if final_pop == 0 {
        Outcome::Extinct
    } else {
        Outcome::Censored
    };
    let final_freqs = (final_pop > 0).then(|| end.state.frequencies());
    let (checkpoint_distances, final_distance) = match &cfg.attractor {
        Some(spec) => (
            checkpoint_freqs
                .iter()
                .map(|x| x.as_ref().map(|x| attractor_distance(x, spec)))
                .collect(),
            final_freqs.as_ref().map(|x| attractor_distance(x, spec)),
        ),
        None => (vec![None; n_cp], None),
    };
    Ok(ReplicateSummary {
        replicate,
        outcome,
        steps: end.steps,
        final_pop,
        final_tau: end.tau,
        checkpoint_freqs,
        final_freqs,
        checkpoint_distances,
        final_distance,
        sum_inv_pow15: s15,
        sum_inv_pow2: s2,
        tail_increment15,
    })
}

/// Run `cfg.replicates` independent chains. Errors inside a replicate are
/// recorded as [`Outcome::Failed`]; only an invalid configuration fails the
/// whole call.
pub fn run_ensemble(model: &dyn UrnModel, cfg: &EnsembleConfig, exec: Execution) -> Result<EnsembleResult> {
    cfg.validate(model.dim())?;
    let n_cp = cfg.distance_checkpoints.len();
    let summaries = exec.map_indexed(cfg.replicates, |r| {
        run_replicate(model, cfg, r).unwrap_or_else(|e| ReplicateSummary::failed(r, n_cp, e.to_string()))
    });
    Ok(EnsembleResult {
        summaries,
        checkpoints: cfg.distance_checkpoints.clone(),
        survival_threshold: cfg.survival_threshold,
        master_seed: cfg.master_seed,
    })
}

/// A proportion with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionEstimate {
    pub successes: usize,
    pub trials: usize,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson 95% score interval for `successes` out of `trials`; with no
/// trials the interval is `[0, 1]`.
pub fn wilson_interval(successes: usize, trials: usize) -> ProportionEstimate {
    if trials == 0 {
        return ProportionEstimate {
            successes,
            trials,
            point: 0.0,
            lower: 0.0,
            upper: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ProportionEstimate {
        successes,
        trials,
        point: p,
        lower: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
        upper: if successes == trials {
            1.0
        } else {
            (center + half).min(1.0)
        },
    }
}

/// Fraction of replicates that reached the survival threshold.
pub fn establishment_probability(result: &EnsembleResult) -> ProportionEstimate {
    wilson_interval(result.count("established"), result.summaries.len())
}

/// Fraction of replicates that died out.
pub fn extinction_probability(result: &EnsembleResult) -> ProportionEstimate {
    wilson_interval(result.count("extinct"), result.summaries.len())
}

/// Which runs enter the convergence statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    /// Every run alive at the checkpoint.
    Surviving,
    /// Only runs that reached the survival threshold.
    Established,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceQuantiles {
    /// Checkpoint step, `None` for the final state.
    pub step: Option<u64>,
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// One row per checkpoint with data, then a row for the final states.
    pub rows: Vec<DistanceQuantiles>,
    /// Fraction of runs, among those with both values, whose distance at the
    /// final state is below the distance at the first checkpoint.
    pub trend_fraction: Option<f64>,
    /// No run qualified.
    pub empty: bool,
}

impl ConvergenceTable {
    pub fn first(&self) -> Option<&DistanceQuantiles> {
        self.rows.iter().find(|r| r.step.is_some())
    }

    pub fn last(&self) -> Option<&DistanceQuantiles> {
        self.rows.last()
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quantiles(step: Option<u64>, mut values: Vec<f64>) -> Option<DistanceQuantiles> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(DistanceQuantiles {
        step,
        count: values.len(),
        min: values[0],
        q25: quantile(&values, 0.25),
        median: quantile(&values, 0.5),
        q75: quantile(&values, 0.75),
        max: values[values.len() - 1],
    })
}

/// Distance quantiles to `attractor` at every checkpoint and at the final
/// state, over the selected runs.
pub fn convergence_statistics(
    result: &EnsembleResult,
    attractor: &AttractorSpec,
    population: Population,
) -> ConvergenceTable {
    let runs: Vec<&ReplicateSummary> = result
        .summaries
        .iter()
        .filter(|s| match population {
            Population::Surviving => !matches!(s.outcome, Outcome::Failed(_)),
            Population::Established => s.outcome == Outcome::Established,
        })
        .collect();
    let mut rows = Vec::new();
    for (c, &step) in result.checkpoints.iter().enumerate() {
        let values = runs
            .iter()
            .filter_map(|s| s.checkpoint_freqs[c].as_ref())
            .map(|x| attractor_distance(x, attractor))
            .collect();
        rows.extend(quantiles(Some(step), values));
    }
    let finals = runs
        .iter()
        .filter_map(|s| s.final_freqs.as_ref())
        .map(|x| attractor_distance(x, attractor))
        .collect();
    rows.extend(quantiles(None, finals));

    let mut pairs = 0;
    let mut decreasing = 0;
    for s in &runs {
        let first = s.checkpoint_freqs.iter().flatten().next();
        if let (Some(a), Some(b)) = (first, s.final_freqs.as_ref()) {
            pairs += 1;
            if attractor_distance(b, attractor) < attractor_distance(a, attractor) {
                decreasing += 1;
            }
        }
    }
    ConvergenceTable {
        empty: rows.is_empty(),
        rows,
        trend_fraction: (pairs > 0).then(|| decreasing as f64 / pairs as f64),
    }
}

/// Among established runs, how many end within `radius` of the attractor.
pub fn established_within(result: &EnsembleResult, attractor: &AttractorSpec, radius: f64) -> ProportionEstimate {
    let mut within = 0;
    let mut total = 0;
    for s in result.established() {
        if let Some(x) = &s.final_freqs {
            total += 1;
            if attractor_distance(x, attractor) <= radius {
                within += 1;
            }
        }
    }
    wilson_interval(within, total)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV header line for a result with the given checkpoints.
pub fn csv_header(checkpoints: &[u64]) -> String {
    let mut h = String::from("replicate,outcome,steps,final_pop,final_tau,sum_inv_pow15,sum_inv_pow2,tail_increment15");
    for c in checkpoints {
        let _ = write!(h, ",dist_{c}");
    }
    h.push_str(",dist_final");
    h
}

/// One row per replicate, then `#agg` footer lines with the outcome counts
/// and the establishment estimate.
pub fn write_csv<W: Write>(result: &EnsembleResult, mut w: W) -> io::Result<()> {
    writeln!(w, "{}", csv_header(&result.checkpoints))?;
    for s in &result.summaries {
        let mut line = format!(
            "{},{},{},{},{},{},{},{}",
            s.replicate,
            s.outcome.label(),
            s.steps,
            s.final_pop,
            s.final_tau,
            s.sum_inv_pow15,
            s.sum_inv_pow2,
            s.tail_increment15
        );
        for d in &s.checkpoint_distances {
            line.push(',');
            line.push_str(&fmt_opt(*d));
        }
        line.push(',');
        line.push_str(&fmt_opt(s.final_distance));
        writeln!(w, "{line}")?;
    }
    let est = establishment_probability(result);
    writeln!(w, "#agg,replicates,{}", result.summaries.len())?;
    for label in ["established", "extinct", "censored", "failed"] {
        writeln!(w, "#agg,{label},{}", result.count(label))?;
    }
    writeln!(w, "#agg,establishment,{},{},{}", est.point, est.lower, est.upper)?;
    Ok(())
}
