//! Replicator and selection-mutation urn processes.
//!
//! Both builders enumerate every elementary event (baseline birth/death,
//! encounter outcome pair, mutation, fusion) and accumulate its probability
//! onto the resulting move. Events that leave the population unchanged
//! (unaffected encounters, a birth cancelled by a death of the same type,
//! fusions producing no gametes) land on the zero move, so the embedded chain
//! jumps at every update with total mass exactly one.
//!
//! At finite `|z|`, same-type pair events use `x_i (x_i|z| - 1)/|z|` in
//! place of `x_i²`, so that a pair is always two different individuals. The
//! mass freed by this correction, `x_i/|z|` per same-type event, is moved to
//! the zero move.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, UrnError};
use crate::linalg::{mat_vec, quadratic_form, row_major};
use crate::mean_field::{MeanLimitSystem, VectorField};
use crate::urn::{MoveVector, UrnModel};

/// Entry tolerance for probability-valued parameters.
const PARAM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatorParams {
    pub k: usize,
    /// Baseline birth rate.
    pub b: f64,
    /// Baseline death rate.
    pub d: f64,
    /// Encounter rate ν.
    pub nu: f64,
    /// `b_ij`: probability that an `i` meeting a `j` gives birth.
    pub birth: DMatrix<f64>,
    /// `d_ij`: probability that an `i` meeting a `j` dies.
    pub death: DMatrix<f64>,
}

impl ReplicatorParams {
    /// `γ = 1/(b + d + ν)`.
    pub fn gamma(&self) -> f64 {
        1.0 / (self.b + self.d + self.nu)
    }

    /// Payoff matrix `A = 2νγ(B - D)`.
    pub fn payoff(&self) -> DMatrix<f64> {
        (&self.birth - &self.death) * (2.0 * self.nu * self.gamma())
    }

    /// Constant term `(b - d)/(b + d + ν)` of the growth function.
    pub fn baseline_growth(&self) -> f64 {
        (self.b - self.d) * self.gamma()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(UrnError::InvalidParameters("k must be positive".into()));
        }
        if !(self.b > 0.0 && self.d > 0.0 && self.nu >= 0.0) || !(self.b + self.d + self.nu).is_finite() {
            return Err(UrnError::InvalidParameters(format!(
                "need b > 0, d > 0, nu >= 0 (got b = {}, d = {}, nu = {})",
                self.b, self.d, self.nu
            )));
        }
        for (name, m) in [("birth", &self.birth), ("death", &self.death)] {
            if m.shape() != (k, k) {
                return Err(UrnError::InvalidParameters(format!(
                    "{name} matrix is {:?}, expected {k}x{k}",
                    m.shape()
                )));
            }
            if m.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
                return Err(UrnError::InvalidParameters(format!(
                    "{name} entries must lie in [0, 1]"
                )));
            }
        }
        for i in 0..k {
            for j in 0..k {
                if self.birth[(i, j)] + self.death[(i, j)] > 1.0 + PARAM_TOL {
                    return Err(UrnError::InvalidParameters(format!("b_{i}{j} + d_{i}{j} exceeds 1")));
                }
            }
        }
        Ok(())
    }
}

/// Hypercycle game: `B_ij = 1` iff `j ≡ i - 1 (mod k)`, and `D = 0`.
pub fn hypercycle(k: usize, b: f64, d: f64, nu: f64) -> Result<ReplicatorParams> {
    if k < 2 {
        return Err(UrnError::InvalidParameters(format!(
            "hypercycle needs k >= 2 (got {k})"
        )));
    }
    let birth = DMatrix::from_fn(k, k, |i, j| if j == (i + k - 1) % k { 1.0 } else { 0.0 });
    Ok(ReplicatorParams {
        k,
        b,
        d,
        nu,
        birth,
        death: DMatrix::zeros(k, k),
    })
}

/// One contribution `coef · x_i x_j` to the probability of a move.
#[derive(Debug, Clone, Copy)]
struct PairTerm {
    i: usize,
    j: usize,
    coef: f64,
    move_idx: usize,
    /// Same-type pair whose kernel probability carries the finite-size
    /// correction.
    corrected: bool,
}

/// One contribution `coef · x_i` to the probability of a move.
#[derive(Debug, Clone, Copy)]
struct LinearTerm {
    i: usize,
    coef: f64,
    move_idx: usize,
}

/// Shared probability tables for both builders.
#[derive(Debug, Clone)]
struct EventTable {
    k: usize,
    moves: Vec<MoveVector>,
    null_idx: usize,
    constant_null: f64,
    linear: Vec<LinearTerm>,
    pairs: Vec<PairTerm>,
}

impl EventTable {
    fn new(k: usize) -> Self {
        EventTable {
            k,
            moves: vec![MoveVector::zero(k)],
            null_idx: 0,
            constant_null: 0.0,
            linear: Vec::new(),
            pairs: Vec::new(),
        }
    }

    fn index_of(&mut self, w: Vec<i32>) -> usize {
        let w = MoveVector::new(w);
        if let Some(i) = self.moves.iter().position(|m| *m == w) {
            return i;
        }
        self.moves.push(w);
        self.moves.len() - 1
    }

    fn add_linear(&mut self, i: usize, coef: f64, w: Vec<i32>) {
        if coef > 0.0 {
            let move_idx = self.index_of(w);
            self.linear.push(LinearTerm { i, coef, move_idx });
        }
    }

    fn add_pair(&mut self, i: usize, j: usize, coef: f64, w: Vec<i32>, corrected: bool) {
        if coef > 0.0 {
            let move_idx = self.index_of(w);
            self.pairs.push(PairTerm {
                i,
                j,
                coef,
                move_idx,
                corrected,
            });
        }
    }

    fn limit_probs(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[self.null_idx] = self.constant_null;
        for t in &self.linear {
            out[t.move_idx] += t.coef * x[t.i];
        }
        for t in &self.pairs {
            out[t.move_idx] += t.coef * x[t.i] * x[t.j];
        }
        out[self.null_idx] = out[self.null_idx].max(0.0);
    }

    fn kernel_probs(&self, z: &[u64], out: &mut [f64]) {
        let total: u64 = z.iter().sum();
        let n = total as f64;
        let mut x = [0.0_f64; 16];
        let mut x_heap;
        let x: &mut [f64] = if self.k <= 16 {
            &mut x[..self.k]
        } else {
            x_heap = vec![0.0; self.k];
            &mut x_heap
        };
        for (xi, &zi) in x.iter_mut().zip(z) {
            *xi = zi as f64 / n;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        out[self.null_idx] = self.constant_null;
        for t in &self.linear {
            out[t.move_idx] += t.coef * x[t.i];
        }
        for t in &self.pairs {
            if t.corrected {
                // x_i² -> x_i (z_i - 1)/|z|; the difference x_i/|z| is a null event.
                let xi = x[t.i];
                let zi = z[t.i] as f64;
                out[t.move_idx] += t.coef * xi * ((zi - 1.0) / n);
                out[self.null_idx] += t.coef * xi / n;
            } else {
                out[t.move_idx] += t.coef * x[t.i] * x[t.j];
            }
        }
        // The mutation slack γ(μ - Σ x_i r_i) can round below zero.
        out[self.null_idx] = out[self.null_idx].max(0.0);
    }

    fn max_jump(&self) -> u32 {
        self.moves.iter().map(MoveVector::norm1).max().unwrap_or(0)
    }
}

/// The replicator urn process.
#[derive(Debug, Clone)]
pub struct ReplicatorModel {
    params: ReplicatorParams,
    table: EventTable,
    a_bound: f64,
}

/// Outcome of one side of an encounter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Birth,
    Death,
    Unaffected,
}

impl Outcome {
    const ALL: [Outcome; 3] = [Outcome::Birth, Outcome::Death, Outcome::Unaffected];

    fn delta(self) -> i32 {
        match self {
            Outcome::Birth => 1,
            Outcome::Death => -1,
            Outcome::Unaffected => 0,
        }
    }
}

impl ReplicatorModel {
    pub fn new(params: ReplicatorParams) -> Result<Self> {
        params.validate()?;
        let k = params.k;
        let gamma = params.gamma();
        let prob = |o: Outcome, i: usize, j: usize| match o {
            Outcome::Birth => params.birth[(i, j)],
            Outcome::Death => params.death[(i, j)],
            Outcome::Unaffected => (1.0 - params.birth[(i, j)] - params.death[(i, j)]).max(0.0),
        };

        let mut table = EventTable::new(k);
        for i in 0..k {
            let mut w = vec![0; k];
            w[i] = 1;
            table.add_linear(i, gamma * params.b, w.clone());
            w[i] = -1;
            table.add_linear(i, gamma * params.d, w);
        }
        // Individual i initiates an encounter with individual j (ordered pair).
        for i in 0..k {
            for j in 0..k {
                for oi in Outcome::ALL {
                    for oj in Outcome::ALL {
                        let coef = gamma * params.nu * prob(oi, i, j) * prob(oj, j, i);
                        let mut w = vec![0; k];
                        w[i] += oi.delta();
                        w[j] += oj.delta();
                        let corrected = i == j && oi == oj && oi != Outcome::Unaffected;
                        table.add_pair(i, j, coef, w, corrected);
                    }
                }
            }
        }
        let a_bound = (0..k)
            .map(|i| {
                let b = params.birth[(i, i)];
                let d = params.death[(i, i)];
                gamma * params.nu * (b * b + d * d)
            })
            .fold(0.0, f64::max);
        Ok(ReplicatorModel { params, table, a_bound })
    }

    pub fn params(&self) -> &ReplicatorParams {
        &self.params
    }

    /// Closed-form `x ∘ (Ax - xᵀAx)` with growth `(b-d)/(b+d+ν) + xᵀAx`.
    pub fn closed_form_system(&self) -> MeanLimitSystem {
        MeanLimitSystem::new(Arc::new(ReplicatorField::new(
            &self.params.payoff(),
            self.params.baseline_growth(),
        )))
    }
}

impl UrnModel for ReplicatorModel {
    fn dim(&self) -> usize {
        self.params.k
    }

    fn max_jump(&self) -> u32 {
        2
    }

    fn moves(&self) -> &[MoveVector] {
        &self.table.moves
    }

    fn limit_probs(&self, x: &[f64], out: &mut [f64]) {
        self.table.limit_probs(x, out)
    }

    fn kernel_probs(&self, z: &[u64], out: &mut [f64]) {
        self.table.kernel_probs(z, out)
    }

    /// `γν · max_i (b_ii² + d_ii²)`: the largest per-state mass moved by the
    /// same-type correction, which bounds every move's deviation.
    fn a_bound(&self) -> Option<f64> {
        Some(self.a_bound)
    }
}

/// Replicator field `x ∘ (Ax - xᵀAx)` with growth `c + xᵀAx`.
#[derive(Debug, Clone)]
pub struct ReplicatorField {
    k: usize,
    a: Vec<f64>,
    offset: f64,
}

impl ReplicatorField {
    pub fn new(payoff: &DMatrix<f64>, growth_offset: f64) -> Self {
        ReplicatorField {
            k: payoff.nrows(),
            a: row_major(payoff),
            offset: growth_offset,
        }
    }
}

impl VectorField for ReplicatorField {
    fn dim(&self) -> usize {
        self.k
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(&self.a, self.k, x, out);
        let mean: f64 = x.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi * (*o - mean);
        }
    }

    fn growth(&self, x: &[f64]) -> f64 {
        self.offset + quadratic_form(&self.a, self.k, x)
    }
}

/// Build the replicator process, its closed-form mean-limit system and the
/// payoff matrix `A = 2νγ(B - D)`.
pub fn build_replicator(params: ReplicatorParams) -> Result<(Arc<ReplicatorModel>, MeanLimitSystem, DMatrix<f64>)> {
    let model = ReplicatorModel::new(params)?;
    let system = model.closed_form_system();
    let payoff = model.params.payoff();
    Ok((Arc::new(model), system, payoff))
}

/// Offspring law of one fusion: `probs[l] = P[B = 2l]`, so a fusion of `i`
/// and `j` adds `l` gametes of each parental type.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringDist {
    pub probs: Vec<f64>,
}

impl OffspringDist {
    /// Two-point law on `{0, 2m'}` with `2m'` the smallest even integer
    /// `>= mean` (at least 2) and `P[2m'] = mean/(2m')`.
    pub fn two_point(mean: f64) -> Self {
        let half = ((mean / 2.0).ceil() as usize).max(1);
        let p = mean / (2 * half) as f64;
        let mut probs = vec![0.0; half + 1];
        probs[0] = 1.0 - p;
        probs[half] = p;
        OffspringDist { probs }
    }

    /// `E[B]`, the mean total number of gametes produced.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(l, p)| 2.0 * l as f64 * p).sum()
    }

    /// Largest `l` with positive probability.
    pub fn max_half(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMutationParams {
    pub k: usize,
    /// Gamete death rate.
    pub d: f64,
    /// Fusion rate ν.
    pub nu: f64,
    /// Symmetric fitness matrix `F`.
    pub fitness: DMatrix<f64>,
    /// Mutation rates `μ_ij` (`i -> j`), zero diagonal.
    pub mutation: DMatrix<f64>,
    /// Offspring law per ordered pair; must have mean `E[B_ij] = f_ij`.
    pub offspring: Vec<Vec<OffspringDist>>,
}

impl SelectionMutationParams {
    /// Parameters with two-point offspring laws matching `F`.
    pub fn with_default_offspring(d: f64, nu: f64, fitness: DMatrix<f64>, mutation: DMatrix<f64>) -> Self {
        let k = fitness.nrows();
        let offspring = (0..k)
            .map(|i| (0..k).map(|j| OffspringDist::two_point(fitness[(i, j)])).collect())
            .collect();
        SelectionMutationParams {
            k,
            d,
            nu,
            fitness,
            mutation,
            offspring,
        }
    }

    /// Total mutation rate `μ = Σ_{i≠j} μ_ij`.
    pub fn total_mutation(&self) -> f64 {
        let mut mu = 0.0;
        for i in 0..self.k {
            for j in 0..self.k {
                if i != j {
                    mu += self.mutation[(i, j)];
                }
            }
        }
        mu
    }

    /// `γ = 1/(d + μ + ν)`.
    pub fn gamma(&self) -> f64 {
        1.0 / (self.d + self.total_mutation() + self.nu)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(UrnError::InvalidParameters("k must be positive".into()));
        }
        if !(self.d > 0.0 && self.nu > 0.0) {
            return Err(UrnError::InvalidParameters(format!(
                "need d > 0 and nu > 0 (got d = {}, nu = {})",
                self.d, self.nu
            )));
        }
        for (name, m) in [("fitness", &self.fitness), ("mutation", &self.mutation)] {
            if m.shape() != (k, k) {
                return Err(UrnError::InvalidParameters(format!(
                    "{name} matrix is {:?}, expected {k}x{k}",
                    m.shape()
                )));
            }
            if m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(UrnError::InvalidParameters(format!(
                    "{name} entries must be finite and >= 0"
                )));
            }
        }
        for i in 0..k {
            if self.mutation[(i, i)] != 0.0 {
                return Err(UrnError::InvalidParameters(
                    "mutation matrix must have a zero diagonal".into(),
                ));
            }
            for j in 0..k {
                if (self.fitness[(i, j)] - self.fitness[(j, i)]).abs() > PARAM_TOL {
                    return Err(UrnError::InvalidParameters("fitness matrix must be symmetric".into()));
                }
            }
        }
        if self.offspring.len() != k || self.offspring.iter().any(|row| row.len() != k) {
            return Err(UrnError::InvalidParameters(format!(
                "offspring laws must form a {k}x{k} table"
            )));
        }
        for i in 0..k {
            for j in 0..k {
                let dist = &self.offspring[i][j];
                let mass: f64 = dist.probs.iter().sum();
                if dist.probs.iter().any(|p| !(*p >= 0.0)) || (mass - 1.0).abs() > PARAM_TOL {
                    return Err(UrnError::InvalidParameters(format!(
                        "offspring law ({i}, {j}) is not a probability distribution"
                    )));
                }
                if (dist.mean() - self.fitness[(i, j)]).abs() > PARAM_TOL {
                    return Err(UrnError::InvalidParameters(format!(
                        "offspring law ({i}, {j}) has mean {} but f_{i}{j} = {}",
                        dist.mean(),
                        self.fitness[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The selection-mutation (fertility selection) urn process on gametes.
#[derive(Debug, Clone)]
pub struct SelectionMutationModel {
    params: SelectionMutationParams,
    table: EventTable,
    a_bound: f64,
}

impl SelectionMutationModel {
    pub fn new(params: SelectionMutationParams) -> Result<Self> {
        params.validate()?;
        let k = params.k;
        let gamma = params.gamma();
        let mu = params.total_mutation();
        let mut table = EventTable::new(k);
        for i in 0..k {
            let mut w = vec![0; k];
            w[i] = -1;
            table.add_linear(i, gamma * params.d, w);
        }
        let mut row_sums = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let mut w = vec![0; k];
                    w[j] += 1;
                    w[i] -= 1;
                    table.add_linear(i, gamma * params.mutation[(i, j)], w);
                    row_sums[i] += params.mutation[(i, j)];
                }
            }
        }
        // γ uses the total rate μ; a gamete of type i only mutates at rate
        // Σ_j μ_ij, and the remainder γ(μ - Σ_i x_i Σ_j μ_ij) is a null event.
        table.constant_null = gamma * mu;
        for (i, r) in row_sums.iter().enumerate() {
            if *r > 0.0 {
                table.linear.push(LinearTerm {
                    i,
                    coef: -gamma * r,
                    move_idx: table.null_idx,
                });
            }
        }
        for i in 0..k {
            for j in 0..k {
                for (l, &p) in params.offspring[i][j].probs.iter().enumerate() {
                    let l = l as i32;
                    let mut w = vec![0; k];
                    w[i] += l;
                    w[j] += l;
                    table.add_pair(i, j, gamma * params.nu * p, w, i == j && l > 0);
                }
            }
        }
        let a_bound = (0..k)
            .map(|i| {
                let positive: f64 = params.offspring[i][i].probs.iter().skip(1).sum();
                gamma * params.nu * positive
            })
            .fold(0.0, f64::max);
        Ok(SelectionMutationModel { params, table, a_bound })
    }

    pub fn params(&self) -> &SelectionMutationParams {
        &self.params
    }

    /// Closed-form selection-mutation field.
    pub fn closed_form_system(&self) -> MeanLimitSystem {
        MeanLimitSystem::new(Arc::new(SelectionMutationField::new(&self.params)))
    }
}

impl UrnModel for SelectionMutationModel {
    fn dim(&self) -> usize {
        self.params.k
    }

    fn max_jump(&self) -> u32 {
        self.table.max_jump().max(2)
    }

    fn moves(&self) -> &[MoveVector] {
        &self.table.moves
    }

    fn limit_probs(&self, x: &[f64], out: &mut [f64]) {
        self.table.limit_probs(x, out)
    }

    fn kernel_probs(&self, z: &[u64], out: &mut [f64]) {
        self.table.kernel_probs(z, out)
    }

    /// `γν · max_i P[B_ii > 0]`.
    fn a_bound(&self) -> Option<f64> {
        Some(self.a_bound)
    }
}

/// `γν x∘(Fx - xᵀFx) + γ(Mᵀx - r∘x)` where `r_i = Σ_j μ_ij`, with growth
/// `γ(ν xᵀFx - d)`.
#[derive(Debug, Clone)]
pub struct SelectionMutationField {
    k: usize,
    gamma: f64,
    nu: f64,
    d: f64,
    fitness: Vec<f64>,
    mutation: Vec<f64>,
    row_sums: Vec<f64>,
}

impl SelectionMutationField {
    pub fn new(params: &SelectionMutationParams) -> Self {
        let k = params.k;
        SelectionMutationField {
            k,
            gamma: params.gamma(),
            nu: params.nu,
            d: params.d,
            fitness: row_major(&params.fitness),
            mutation: row_major(&params.mutation),
            row_sums: (0..k).map(|i| params.mutation.row(i).sum()).collect(),
        }
    }
}

impl VectorField for SelectionMutationField {
    fn dim(&self) -> usize {
        self.k
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let k = self.k;
        mat_vec(&self.fitness, k, x, out);
        let mean: f64 = x.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
        for j in 0..k {
            let inflow: f64 = (0..k).map(|i| self.mutation[i * k + j] * x[i]).sum();
            out[j] = self.gamma * self.nu * x[j] * (out[j] - mean) + self.gamma * (inflow - self.row_sums[j] * x[j]);
        }
    }

    fn growth(&self, x: &[f64]) -> f64 {
        self.gamma * (self.nu * quadratic_form(&self.fitness, self.k, x) - self.d)
    }
}

/// Build the selection-mutation process and its closed-form system.
pub fn build_selection_mutation(
    params: SelectionMutationParams,
) -> Result<(Arc<SelectionMutationModel>, MeanLimitSystem)> {
    let model = SelectionMutationModel::new(params)?;
    let system = model.closed_form_system();
    Ok((Arc::new(model), system))
}

/// Three alleles with heterozygote fitness `f`, homozygote fitness `f + s`
/// and cyclically symmetric mutation `μ_ij = μ_{(i-j) mod 3}`.
pub fn cyclic_mutation_example(f: f64, s: f64, mu1: f64, mu2: f64, nu: f64, d: f64) -> Result<SelectionMutationParams> {
    if mu1 == mu2 {
        return Err(UrnError::InvalidParameters(
            "cyclic mutation needs mu1 != mu2 for oscillations".into(),
        ));
    }
    if !(f >= 0.0 && s >= 0.0 && mu1 >= 0.0 && mu2 >= 0.0) {
        return Err(UrnError::InvalidParameters("f, s, mu1, mu2 must be nonnegative".into()));
    }
    let fitness = DMatrix::from_fn(3, 3, |i, j| if i == j { f + s } else { f });
    let mutation = DMatrix::from_fn(3, 3, |i, j| match (i + 3 - j) % 3 {
        1 => mu1,
        2 => mu2,
        _ => 0.0,
    });
    let params = SelectionMutationParams::with_default_offspring(d, nu, fitness, mutation);
    params.validate()?;
    Ok(params)
}

/// Fixture used by the regression tests and the bundled configuration:
/// `s` sits 2% above the Hopf threshold `(9/2)(μ₁+μ₂)/ν`, where a stable
/// cycle surrounds the symmetric equilibrium.
pub fn cyclic_mutation_fixture() -> SelectionMutationParams {
    let (mu1, mu2, nu) = (0.10, 0.05, 1.0);
    let s = 4.5 * (mu1 + mu2) / nu * 1.02;
    cyclic_mutation_example(1.0, s, mu1, mu2, nu, 0.5).expect("valid fixture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::barycenter;
    use crate::mean_field::derive_system;

    fn fig1() -> ReplicatorParams {
        hypercycle(5, 1.0, 2.5, 4.0).unwrap()
    }

    #[test]
    fn hypercycle_pattern() {
        let p = hypercycle(3, 1.0, 1.0, 1.0).unwrap();
        let ones: Vec<(usize, usize)> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| p.birth[(i, j)] == 1.0)
            .collect();
        // 1-based (1,3), (2,1), (3,2)
        assert_eq!(ones, vec![(0, 2), (1, 0), (2, 1)]);
        let p2 = hypercycle(2, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p2.birth, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(hypercycle(1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn fig1_payoff_scaling() {
        let a = fig1().payoff();
        let expected = fig1().birth * (16.0 / 15.0);
        assert!((a - expected).abs().max() < 1e-15);
    }

    #[test]
    fn fig1_interior_growth() {
        let (_, sys, _) = build_replicator(fig1()).unwrap();
        assert!((sys.growth(&barycenter(5)) - 1.0 / 75.0).abs() < 1e-12);
    }

    #[test]
    fn no_encounters_gives_baseline_kernel() {
        let mut p = hypercycle(3, 1.0, 2.0, 0.0).unwrap();
        p.birth = DMatrix::from_element(3, 3, 0.3);
        let model = ReplicatorModel::new(p).unwrap();
        let z = [2_u64, 3, 5];
        let mut probs = vec![0.0; model.moves().len()];
        model.kernel_probs(&z, &mut probs);
        for (p, w) in probs.iter().zip(model.moves()) {
            let ws = w.as_slice();
            if let Some(i) = ws.iter().position(|&v| v == 1) {
                assert!((p - z[i] as f64 / 10.0 / 3.0).abs() < 1e-15);
            } else if let Some(i) = ws.iter().position(|&v| v == -1) {
                assert!((p - z[i] as f64 / 10.0 * 2.0 / 3.0).abs() < 1e-15);
            } else {
                assert!(w.is_zero());
                assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn kernel_normalizes_at_balanced_state() {
        let model = ReplicatorModel::new(fig1()).unwrap();
        let mut probs = vec![0.0; model.moves().len()];
        model.kernel_probs(&[10; 5], &mut probs);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_type_pair_vanishes_with_single_individual() {
        let mut p = hypercycle(2, 1.0, 1.0, 2.0).unwrap();
        p.birth = DMatrix::from_element(2, 2, 0.5);
        p.death = DMatrix::from_element(2, 2, 0.25);
        let model = ReplicatorModel::new(p).unwrap();
        let mut probs = vec![0.0; model.moves().len()];
        model.kernel_probs(&[1, 4], &mut probs);
        let two_births = model.moves().iter().position(|w| w.as_slice() == [2, 0]).unwrap();
        let two_deaths = model.moves().iter().position(|w| w.as_slice() == [-2, 0]).unwrap();
        assert_eq!(probs[two_births], 0.0);
        assert_eq!(probs[two_deaths], 0.0);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn replicator_moves_are_bounded() {
        let model = ReplicatorModel::new(fig1()).unwrap();
        assert!(model.moves().iter().all(|w| w.norm1() <= 2));
    }

    #[test]
    fn shifting_birth_and_death_leaves_payoff_unchanged() {
        let mut p = hypercycle(3, 1.0, 1.0, 2.0).unwrap();
        p.birth = DMatrix::from_row_slice(3, 3, &[0.1, 0.4, 0.2, 0.3, 0.1, 0.5, 0.2, 0.2, 0.3]);
        p.death = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.3, 0.1, 0.2, 0.1, 0.4, 0.3, 0.1]);
        let a = p.payoff();
        let mut q = p.clone();
        q.birth.add_scalar_mut(0.1);
        q.death.add_scalar_mut(0.1);
        assert!((q.payoff() - a).abs().max() < 1e-15);
    }

    #[test]
    fn two_point_offspring_has_requested_mean() {
        for f in [0.0, 0.3, 1.0, 1.81, 2.0, 3.5] {
            let dist = OffspringDist::two_point(f);
            assert!((dist.mean() - f).abs() < 1e-12, "f = {f}");
            assert!(dist.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        assert_eq!(OffspringDist::two_point(1.0).probs, vec![0.5, 0.5]);
        assert_eq!(OffspringDist::two_point(3.0).max_half(), 2);
    }

    #[test]
    fn cyclic_example_structure() {
        let p = cyclic_mutation_example(1.0, 0.5, 0.1, 0.05, 1.0, 0.5).unwrap();
        assert_eq!(p.mutation[(1, 0)], 0.1);
        assert_eq!(p.mutation[(0, 1)], 0.05);
        assert_eq!(p.mutation[(2, 0)], 0.05);
        assert_eq!(p.fitness[(0, 0)], 1.5);
        assert_eq!(p.fitness[(0, 1)], 1.0);
        assert!(cyclic_mutation_example(1.0, 0.5, 0.1, 0.1, 1.0, 0.5).is_err());
        assert!(cyclic_mutation_example(1.0, 0.0, 0.1, 0.05, 1.0, 0.5).is_ok());
    }

    #[test]
    fn single_allele_is_birth_death() {
        let p = SelectionMutationParams::with_default_offspring(
            0.5,
            1.0,
            DMatrix::from_element(1, 1, 1.5),
            DMatrix::zeros(1, 1),
        );
        let (model, sys) = build_selection_mutation(p).unwrap();
        let mut probs = vec![0.0; model.moves().len()];
        model.kernel_probs(&[7], &mut probs);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(sys.drift(&[1.0]), vec![0.0]);
        let rules = derive_system(model.clone());
        assert!((rules.growth(&[1.0]) - sys.growth(&[1.0])).abs() < 1e-14);
    }

    #[test]
    fn selection_mutation_rejects_bad_offspring_mean() {
        let mut p = cyclic_mutation_fixture();
        p.offspring[0][1] = OffspringDist { probs: vec![1.0] };
        assert!(SelectionMutationModel::new(p).is_err());
    }
}
