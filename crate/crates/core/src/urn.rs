//! Generalized urn Markov chains.
//!
//! A model exposes a finite list of move vectors `w` (with `|w| <= m`), the
//! limiting probabilities `p_w(x)` on the simplex and the exact finite-size
//! kernel `Π(z, z + w)`. The chain is simulated by cumulative-probability
//! inversion over the move list, recomputed at each state. Time is measured
//! on the τ-clock, where update `n` lasts `1/|z(n)|`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UrnError};

/// Allowed deviation of the total kernel mass from 1 before a state is
/// rejected as ill-specified.
pub const KERNEL_MASS_TOL: f64 = 1e-9;

/// An integer move `w ∈ ℤ^k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MoveVector(Vec<i32>);

impl MoveVector {
    pub fn new(w: Vec<i32>) -> Self {
        MoveVector(w)
    }

    pub fn zero(k: usize) -> Self {
        MoveVector(vec![0; k])
    }

    /// `sign * e_i`.
    pub fn unit(k: usize, i: usize, sign: i32) -> Self {
        let mut w = vec![0; k];
        w[i] = sign;
        MoveVector(w)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.0
    }

    /// `|w| = Σ |w_i|`.
    pub fn norm1(&self) -> u32 {
        self.0.iter().map(|v| v.unsigned_abs()).sum()
    }

    /// `α(w) = Σ w_i`, the change in population size.
    pub fn alpha(&self) -> i64 {
        self.0.iter().map(|&v| i64::from(v)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }
}

/// Net change in population size caused by `w`.
pub fn alpha(w: &MoveVector) -> i64 {
    w.alpha()
}

/// Counts of each type.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UrnState(Vec<u64>);

impl UrnState {
    pub fn new(z: Vec<u64>) -> Self {
        UrnState(z)
    }

    pub fn zeros(k: usize) -> Self {
        UrnState(vec![0; k])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_extinct(&self) -> bool {
        self.total() == 0
    }

    /// `z/|z|`, or the null distribution `0` when extinct.
    pub fn frequencies(&self) -> Vec<f64> {
        frequencies(&self.0)
    }

    /// `z + w`, rejecting moves that would make a count negative.
    pub fn apply(&self, w: &MoveVector) -> Result<UrnState> {
        let mut z = self.0.clone();
        apply_move(&mut z, w.as_slice())?;
        Ok(UrnState(z))
    }

    /// State with `|z| = total` closest to `total * x` (largest remainder).
    pub fn from_frequencies(x: &[f64], total: u64) -> UrnState {
        let raw: Vec<f64> = x.iter().map(|v| v * total as f64).collect();
        let mut z: Vec<u64> = raw.iter().map(|v| v.floor() as u64).collect();
        let assigned: u64 = z.iter().sum();
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = raw[a] - raw[a].floor();
            let rb = raw[b] - raw[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
            z[i] += 1;
        }
        UrnState(z)
    }
}

pub(crate) fn frequencies(z: &[u64]) -> Vec<f64> {
    let total: u64 = z.iter().sum();
    if total == 0 {
        return vec![0.0; z.len()];
    }
    let t = total as f64;
    z.iter().map(|&v| v as f64 / t).collect()
}

fn apply_move(z: &mut [u64], w: &[i32]) -> Result<()> {
    for (i, (&zi, &wi)) in z.iter().zip(w).enumerate() {
        if wi < 0 && u64::from(wi.unsigned_abs()) > zi {
            return Err(UrnError::NegativeCount {
                movement: w.to_vec(),
                index: i,
                state: z.to_vec(),
            });
        }
    }
    for (zi, &wi) in z.iter_mut().zip(w) {
        if wi >= 0 {
            *zi += u64::from(wi.unsigned_abs());
        } else {
            *zi -= u64::from(wi.unsigned_abs());
        }
    }
    Ok(())
}

/// A generalized urn model: finite move list, limiting probabilities and the
/// exact finite-population kernel. Implementations are immutable and shared
/// read-only across concurrent simulations.
pub trait UrnModel: Send + Sync {
    /// Number of types `k`.
    fn dim(&self) -> usize;

    /// The constant `m` bounding `|w|` for every move.
    fn max_jump(&self) -> u32;

    /// The moves, in the fixed order used by the probability buffers.
    fn moves(&self) -> &[MoveVector];

    /// Fill `out[i]` with `p_{w_i}(x)` for `x` on the simplex.
    fn limit_probs(&self, x: &[f64], out: &mut [f64]);

    /// Fill `out[i]` with `Π(z, z + w_i)` for a nonzero state `z`.
    fn kernel_probs(&self, z: &[u64], out: &mut [f64]);

    /// Analytic constant `a` with `|p_w(z/|z|) - Π(z, z+w)| <= a/|z|`, when
    /// known.
    fn a_bound(&self) -> Option<f64> {
        None
    }
}

pub type LimitFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(&[u64], &mut [f64]) + Send + Sync>;

/// A move together with its limiting probability map `p_w`.
#[derive(Clone)]
pub struct TransitionRule {
    pub movement: MoveVector,
    limit: LimitFn,
}

impl TransitionRule {
    pub fn new(movement: MoveVector, limit: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        TransitionRule {
            movement,
            limit: Arc::new(limit),
        }
    }

    pub fn limit_prob(&self, x: &[f64]) -> f64 {
        (self.limit)(x)
    }
}

impl std::fmt::Debug for TransitionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransitionRule")
            .field("movement", &self.movement)
            .finish_non_exhaustive()
    }
}

/// A model given directly by a rule list. Unless an exact kernel is
/// supplied, `Π(z, z+w) = p_w(z/|z|)`.
#[derive(Clone)]
pub struct RuleModel {
    k: usize,
    m: u32,
    moves: Vec<MoveVector>,
    rules: Vec<TransitionRule>,
    kernel: Option<KernelFn>,
    a_bound: Option<f64>,
}

impl RuleModel {
    pub fn new(k: usize, m: u32, rules: Vec<TransitionRule>) -> Result<Self> {
        if k == 0 {
            return Err(UrnError::InvalidParameters("k must be positive".into()));
        }
        for r in &rules {
            if r.movement.dim() != k {
                return Err(UrnError::DimensionMismatch {
                    expected: k,
                    actual: r.movement.dim(),
                });
            }
        }
        Ok(RuleModel {
            k,
            m,
            moves: rules.iter().map(|r| r.movement.clone()).collect(),
            rules,
            kernel: None,
            a_bound: None,
        })
    }

    /// Replace the default kernel `p_w(z/|z|)` with an exact one.
    pub fn with_kernel(mut self, kernel: impl Fn(&[u64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.kernel = Some(Arc::new(kernel));
        self
    }

    pub fn with_a_bound(mut self, a: f64) -> Self {
        self.a_bound = Some(a);
        self
    }

    pub fn rules(&self) -> &[TransitionRule] {
        &self.rules
    }

    /// `p_{-e_i}(x) = x_i` for every type: every update removes one
    /// individual.
    pub fn pure_death(k: usize) -> Self {
        let rules = (0..k)
            .map(|i| TransitionRule::new(MoveVector::unit(k, i, -1), move |x: &[f64]| x[i]))
            .collect();
        RuleModel::new(k, 1, rules).expect("valid pure-death rules")
    }

    /// `p_{+e_i}(x) = x_i`: every update adds one individual.
    pub fn pure_birth(k: usize) -> Self {
        let rules = (0..k)
            .map(|i| TransitionRule::new(MoveVector::unit(k, i, 1), move |x: &[f64]| x[i]))
            .collect();
        RuleModel::new(k, 1, rules).expect("valid pure-birth rules")
    }
}

impl UrnModel for RuleModel {
    fn dim(&self) -> usize {
        self.k
    }

    fn max_jump(&self) -> u32 {
        self.m
    }

    fn moves(&self) -> &[MoveVector] {
        &self.moves
    }

    fn limit_probs(&self, x: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.rules) {
            *o = r.limit_prob(x);
        }
    }

    fn kernel_probs(&self, z: &[u64], out: &mut [f64]) {
        match &self.kernel {
            Some(kernel) => kernel(z, out),
            None => self.limit_probs(&frequencies(z), out),
        }
    }

    fn a_bound(&self) -> Option<f64> {
        self.a_bound
    }
}

/// Result of checking (A1)/(A2) and kernel normalization on sample states.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `max_z |Σ_w Π(z, z+w) - 1|` over the samples.
    pub normalization_error: f64,
    /// `sup_z |z| · max_w |p_w(z/|z|) - Π(z, z+w)|` over the samples.
    pub empirical_a: f64,
    /// `max_w |w|` over the move list.
    pub max_move_norm: u32,
    /// Human-readable descriptions of every violated condition.
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check kernel normalization, the jump bound (A1) and estimate the (A2)
/// constant on the given nonzero states.
pub fn validate_model(model: &dyn UrnModel, sample_states: &[UrnState]) -> ValidationReport {
    let k = model.dim();
    let moves = model.moves();
    let max_move_norm = moves.iter().map(MoveVector::norm1).max().unwrap_or(0);
    let mut violations = Vec::new();
    if max_move_norm > model.max_jump() {
        violations.push(format!(
            "move norm {max_move_norm} exceeds the jump bound m = {}",
            model.max_jump()
        ));
    }
    if sample_states.is_empty() {
        violations.push("no sample states supplied".to_string());
    }

    let mut kernel = vec![0.0; moves.len()];
    let mut limit = vec![0.0; moves.len()];
    let mut normalization_error: f64 = 0.0;
    let mut empirical_a: f64 = 0.0;
    for z in sample_states {
        if z.dim() != k {
            violations.push(format!(
                "state {:?} has dimension {} (expected {k})",
                z.counts(),
                z.dim()
            ));
            continue;
        }
        if z.is_extinct() {
            violations.push("sample states must be nonzero".to_string());
            continue;
        }
        model.kernel_probs(z.counts(), &mut kernel);
        model.limit_probs(&z.frequencies(), &mut limit);
        let mass: f64 = kernel.iter().sum();
        normalization_error = normalization_error.max((mass - 1.0).abs());
        let gap = kernel
            .iter()
            .zip(&limit)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        empirical_a = empirical_a.max(gap * z.total() as f64);
        if let Some((i, p)) = kernel.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && **p <= 1.0)) {
            violations.push(format!(
                "Π(z, z+w) = {p} outside [0, 1] for move {:?} at {:?}",
                moves[i].as_slice(),
                z.counts()
            ));
        }
    }
    if normalization_error > KERNEL_MASS_TOL {
        violations.push(format!(
            "kernel normalization error {normalization_error:e} exceeds {KERNEL_MASS_TOL:e}"
        ));
    }
    ValidationReport {
        normalization_error,
        empirical_a,
        max_move_norm,
        violations,
    }
}

/// Reusable sampling state for one chain: the probability buffer.
pub struct Stepper<'a> {
    model: &'a dyn UrnModel,
    probs: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a dyn UrnModel) -> Self {
        Stepper {
            model,
            probs: vec![0.0; model.moves().len()],
        }
    }

    /// Advance `z` in place by one update. The zero state is absorbing.
    pub fn step_in_place<R: Rng + ?Sized>(&mut self, z: &mut [u64], rng: &mut R) -> Result<()> {
        if z.iter().all(|&v| v == 0) {
            return Ok(());
        }
        self.model.kernel_probs(z, &mut self.probs);
        let mass: f64 = self.probs.iter().sum();
        if !mass.is_finite() || (mass - 1.0).abs() > KERNEL_MASS_TOL {
            return Err(UrnError::KernelMass {
                mass,
                state: z.to_vec(),
            });
        }
        let u = rng.random::<f64>() * mass;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            chosen = Some(i);
            if u < acc {
                break;
            }
        }
        // `chosen` is the last positive-probability move if rounding left
        // `u` past the final cumulative sum.
        let i = chosen.ok_or(UrnError::KernelMass {
            mass,
            state: z.to_vec(),
        })?;
        apply_move(z, self.model.moves()[i].as_slice())
    }
}

/// Draw `z(n+1)` given `z(n) = z`.
pub fn step<R: Rng + ?Sized>(model: &dyn UrnModel, z: &UrnState, rng: &mut R) -> Result<UrnState> {
    let mut next = z.counts().to_vec();
    Stepper::new(model).step_in_place(&mut next, rng)?;
    Ok(UrnState(next))
}

/// Random stream for replicate `stream` of a run seeded with `seed`.
/// Streams are independent and do not depend on execution order.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// When a simulation stops. The chain also always stops on extinction, since
/// the zero state is absorbing.
#[derive(Debug, Clone, PartialEq)]
pub enum StopCondition {
    MaxSteps(u64),
    PopulationAtLeast(u64),
    Extinction,
    MaxTau(f64),
    Any(Vec<StopCondition>),
    All(Vec<StopCondition>),
}

impl StopCondition {
    pub fn is_met(&self, n: u64, population: u64, tau: f64) -> bool {
        match self {
            StopCondition::MaxSteps(max) => n >= *max,
            StopCondition::PopulationAtLeast(m) => population >= *m,
            StopCondition::Extinction => population == 0,
            StopCondition::MaxTau(t) => tau >= *t,
            StopCondition::Any(cs) => cs.iter().any(|c| c.is_met(n, population, tau)),
            StopCondition::All(cs) => cs.iter().all(|c| c.is_met(n, population, tau)),
        }
    }
}

/// Final state of a chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEnd {
    pub steps: u64,
    pub state: UrnState,
    pub tau: f64,
}

/// Run the chain from `z0` until `stop` holds (or extinction), calling
/// `observe(n, z(n), |z(n)|, τ(n))` for `n = 0` and after every update.
pub fn run_chain<R, F>(
    model: &dyn UrnModel,
    z0: &UrnState,
    stop: &StopCondition,
    rng: &mut R,
    mut observe: F,
) -> Result<ChainEnd>
where
    R: Rng + ?Sized,
    F: FnMut(u64, &[u64], u64, f64),
{
    if z0.dim() != model.dim() {
        return Err(UrnError::DimensionMismatch {
            expected: model.dim(),
            actual: z0.dim(),
        });
    }
    let mut stepper = Stepper::new(model);
    let mut z = z0.counts().to_vec();
    let mut total: u64 = z.iter().sum();
    let mut tau = 0.0_f64;
    let mut n = 0_u64;
    observe(n, &z, total, tau);
    while total != 0 && !stop.is_met(n, total, tau) {
        tau += 1.0 / total as f64;
        stepper.step_in_place(&mut z, rng)?;
        total = z.iter().sum();
        n += 1;
        observe(n, &z, total, tau);
    }
    Ok(ChainEnd {
        steps: n,
        state: UrnState(z),
        tau,
    })
}

/// A realized trajectory `(n, z(n), τ(n))`, optionally thinned. Frequencies
/// are derived from the stored counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    k: usize,
    thin: u64,
    n: Vec<u64>,
    tau: Vec<f64>,
    counts: Vec<u64>,
}

impl PathRecord {
    fn new(k: usize, thin: u64) -> Self {
        PathRecord {
            k,
            thin,
            n: Vec::new(),
            tau: Vec::new(),
            counts: Vec::new(),
        }
    }

    fn push(&mut self, n: u64, z: &[u64], tau: f64) {
        self.n.push(n);
        self.tau.push(tau);
        self.counts.extend_from_slice(z);
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// Recording stride; `1` means full resolution.
    pub fn thin(&self) -> u64 {
        self.thin
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn step_index(&self, row: usize) -> u64 {
        self.n[row]
    }

    pub fn taus(&self) -> &[f64] {
        &self.tau
    }

    pub fn tau(&self, row: usize) -> f64 {
        self.tau[row]
    }

    pub fn counts(&self, row: usize) -> &[u64] {
        &self.counts[row * self.k..(row + 1) * self.k]
    }

    pub fn population(&self, row: usize) -> u64 {
        self.counts(row).iter().sum()
    }

    pub fn frequencies(&self, row: usize) -> Vec<f64> {
        frequencies(self.counts(row))
    }

    pub fn final_tau(&self) -> f64 {
        *self.tau.last().expect("a path has at least one row")
    }

    pub fn final_state(&self) -> UrnState {
        UrnState(self.counts(self.len() - 1).to_vec())
    }

    /// Row `r` with `τ(r) <= t < τ(r+1)`.
    pub fn row_at(&self, t: f64) -> Result<usize> {
        let horizon = self.final_tau();
        if !(t >= 0.0) || t > horizon {
            return Err(UrnError::BeyondHorizon { t, horizon });
        }
        Ok(self.tau.partition_point(|&s| s <= t) - 1)
    }

    /// `X(t) = x(n)` for `τ(n) <= t < τ(n+1)`.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.frequencies(self.row_at(t)?))
    }
}

/// Interpolated process of `path` at τ-time `t`.
pub fn interpolate(path: &PathRecord, t: f64) -> Result<Vec<f64>> {
    path.interpolate(t)
}

/// Simulate from `z0` with the stream derived from `seed`, recording every
/// `thin`-th update plus the final state.
pub fn simulate_thinned(
    model: &dyn UrnModel,
    z0: &UrnState,
    stop: &StopCondition,
    seed: u64,
    thin: u64,
) -> Result<PathRecord> {
    simulate_stream(model, z0, stop, seed, 0, thin)
}

/// [`simulate_thinned`] on stream `stream` of `seed`. Replicate `r` of an
/// ensemble with master seed `seed` is stream `r`.
pub fn simulate_stream(
    model: &dyn UrnModel,
    z0: &UrnState,
    stop: &StopCondition,
    seed: u64,
    stream: u64,
    thin: u64,
) -> Result<PathRecord> {
    let thin = thin.max(1);
    let mut rng = rng_for(seed, stream);
    let mut path = PathRecord::new(model.dim(), thin);
    let end = run_chain(model, z0, stop, &mut rng, |n, z, _, tau| {
        if n % thin == 0 {
            path.push(n, z, tau);
        }
    })?;
    if end.steps % thin != 0 {
        path.push(end.steps, end.state.counts(), end.tau);
    }
    Ok(path)
}

/// Full-resolution simulation; a deterministic function of its arguments.
pub fn simulate(model: &dyn UrnModel, z0: &UrnState, stop: &StopCondition, seed: u64) -> Result<PathRecord> {
    simulate_thinned(model, z0, stop, seed, 1)
}

/// `E[z(n+1) - z(n) | z(n) = z] = Σ_w Π(z, z+w) w`, by kernel enumeration.
pub fn conditional_mean_increment(model: &dyn UrnModel, z: &UrnState) -> Vec<f64> {
    let mut probs = vec![0.0; model.moves().len()];
    model.kernel_probs(z.counts(), &mut probs);
    let mut out = vec![0.0; model.dim()];
    for (p, w) in probs.iter().zip(model.moves()) {
        for (o, &wi) in out.iter_mut().zip(w.as_slice()) {
            *o += p * f64::from(wi);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_walk() -> RuleModel {
        RuleModel::new(
            1,
            1,
            vec![
                TransitionRule::new(MoveVector::new(vec![1]), |_| 0.5),
                TransitionRule::new(MoveVector::new(vec![-1]), |_| 0.5),
            ],
        )
        .unwrap()
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(&MoveVector::new(vec![1, -1, 0])), 0);
        assert_eq!(alpha(&MoveVector::new(vec![2, 0, 0])), 2);
        assert_eq!(alpha(&MoveVector::new(vec![-1, -1, 0])), -2);
        assert_eq!(MoveVector::new(vec![-1, 2, 0]).norm1(), 3);
    }

    #[test]
    fn zero_state_is_absorbing() {
        let model = RuleModel::pure_death(3);
        let mut rng = rng_for(1, 0);
        let z = step(&model, &UrnState::zeros(3), &mut rng).unwrap();
        assert!(z.is_extinct());
    }

    #[test]
    fn pure_death_single_individual_dies() {
        let model = RuleModel::pure_death(3);
        let mut rng = rng_for(7, 0);
        let z = step(&model, &UrnState::new(vec![1, 0, 0]), &mut rng).unwrap();
        assert_eq!(z.counts(), &[0, 0, 0]);
    }

    #[test]
    fn pure_death_path_and_tau_recursion() {
        let model = RuleModel::pure_death(3);
        let path = simulate(&model, &UrnState::new(vec![3, 0, 0]), &StopCondition::Extinction, 3).unwrap();
        assert_eq!(path.len(), 4);
        assert_eq!(path.final_state().counts(), &[0, 0, 0]);
        let expected = [0.0, 1.0 / 3.0, 1.0 / 3.0 + 1.0 / 2.0, 1.0 / 3.0 + 1.0 / 2.0 + 1.0];
        for (row, e) in expected.iter().enumerate() {
            assert!((path.tau(row) - e).abs() < 1e-15);
        }
        assert_eq!(path.frequencies(3), vec![0.0; 3]);
    }

    #[test]
    fn interpolation_is_right_open() {
        let model = RuleModel::pure_death(3);
        let path = simulate(&model, &UrnState::new(vec![3, 0, 0]), &StopCondition::Extinction, 3).unwrap();
        assert_eq!(path.row_at(0.0).unwrap(), 0);
        assert_eq!(path.row_at(path.tau(1)).unwrap(), 1);
        // τ(1) = 1/3 <= 0.5 < τ(2) = 5/6
        assert_eq!(path.row_at(0.5).unwrap(), 1);
        assert_eq!(path.interpolate(0.5).unwrap(), path.frequencies(1));
        assert!(matches!(
            path.interpolate(path.final_tau() + 1e-9),
            Err(UrnError::BeyondHorizon { .. })
        ));
    }

    #[test]
    fn zero_start_gives_single_row() {
        let model = RuleModel::pure_death(2);
        let path = simulate(&model, &UrnState::zeros(2), &StopCondition::MaxSteps(100), 0).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path.frequencies(0), vec![0.0, 0.0]);
        assert_eq!(path.tau(0), 0.0);
    }

    #[test]
    fn symmetric_moves_have_zero_mean_increment() {
        let m = symmetric_walk();
        assert_eq!(conditional_mean_increment(&m, &UrnState::new(vec![5])), vec![0.0]);
        let d = RuleModel::pure_death(3);
        assert_eq!(
            conditional_mean_increment(&d, &UrnState::new(vec![4, 0, 0])),
            vec![-1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn jump_bound_violation_is_reported() {
        let model = RuleModel::new(2, 1, vec![TransitionRule::new(MoveVector::new(vec![1, 1]), |_| 1.0)]).unwrap();
        let report = validate_model(&model, &[UrnState::new(vec![2, 2])]);
        assert!(!report.is_valid());
        assert_eq!(report.max_move_norm, 2);
    }

    #[test]
    fn mass_deficit_is_an_error() {
        let model = RuleModel::new(1, 1, vec![TransitionRule::new(MoveVector::new(vec![1]), |_| 0.9)]).unwrap();
        let report = validate_model(&model, &[UrnState::new(vec![3])]);
        assert!(!report.is_valid());
        let mut rng = rng_for(0, 0);
        assert!(matches!(
            step(&model, &UrnState::new(vec![3]), &mut rng),
            Err(UrnError::KernelMass { .. })
        ));
    }

    #[test]
    fn negative_counts_are_rejected() {
        // Death of type 2 with positive probability even when z_2 = 0.
        let model = RuleModel::new(2, 1, vec![TransitionRule::new(MoveVector::new(vec![0, -1]), |_| 1.0)]).unwrap();
        let mut rng = rng_for(0, 0);
        assert!(matches!(
            step(&model, &UrnState::new(vec![3, 0]), &mut rng),
            Err(UrnError::NegativeCount { index: 1, .. })
        ));
    }

    #[test]
    fn thinning_keeps_final_row() {
        let model = RuleModel::pure_birth(2);
        let path = simulate_thinned(
            &model,
            &UrnState::new(vec![1, 1]),
            &StopCondition::MaxSteps(250),
            4,
            100,
        )
        .unwrap();
        let ns: Vec<u64> = (0..path.len()).map(|r| path.step_index(r)).collect();
        assert_eq!(ns, vec![0, 100, 200, 250]);
        assert_eq!(path.population(3), 252);
    }

    #[test]
    fn from_frequencies_preserves_total() {
        let z = UrnState::from_frequencies(&[0.2; 5], 103);
        assert_eq!(z.total(), 103);
        let z = UrnState::from_frequencies(&[0.5, 0.25, 0.25], 4);
        assert_eq!(z.counts(), &[2, 1, 1]);
    }

    #[test]
    fn stop_conditions_compose() {
        let s = StopCondition::Any(vec![StopCondition::MaxSteps(10), StopCondition::PopulationAtLeast(5)]);
        assert!(s.is_met(10, 1, 0.0));
        assert!(s.is_met(0, 5, 0.0));
        assert!(!s.is_met(3, 4, 0.0));
        let a = StopCondition::All(vec![StopCondition::MaxTau(1.0), StopCondition::PopulationAtLeast(5)]);
        assert!(!a.is_met(0, 5, 0.5));
        assert!(a.is_met(0, 5, 1.0));
    }
}
