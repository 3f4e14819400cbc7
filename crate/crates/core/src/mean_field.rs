//! The mean-limit ODE `dx/dt = g(x)` and the growth function `f`.
//!
//! For a rule set, `g(x) = Σ_w p_w(x)(w - x α(w))` and
//! `f(x) = Σ_w p_w(x) α(w)`. Flows are integrated with fixed-step classical
//! RK4 followed by projection onto the simplex (tiny negatives clipped, then
//! renormalized by the coordinate sum), so every diagnostic built on a flow is
//! bit-reproducible.

use std::sync::Arc;

use crate::error::{Result, UrnError};
use crate::linalg::{check_simplex, distance, norm};
use crate::urn::{PathRecord, UrnModel, UrnState};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-2;

/// Coordinates below this after a step are treated as integration blow-up.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// A vector field on `S_k` together with a growth function.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn growth(&self, x: &[f64]) -> f64;
}

/// Drift and growth obtained by summing over the rules of an urn model.
pub struct RuleField {
    model: Arc<dyn UrnModel>,
}

impl RuleField {
    pub fn new(model: Arc<dyn UrnModel>) -> Self {
        RuleField { model }
    }
}

impl VectorField for RuleField {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let moves = self.model.moves();
        let mut probs = vec![0.0; moves.len()];
        self.model.limit_probs(x, &mut probs);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (p, w) in probs.iter().zip(moves) {
            if *p == 0.0 {
                continue;
            }
            let a = w.alpha() as f64;
            for ((o, &wi), &xi) in out.iter_mut().zip(w.as_slice()).zip(x) {
                *o += p * (f64::from(wi) - xi * a);
            }
        }
    }

    fn growth(&self, x: &[f64]) -> f64 {
        let moves = self.model.moves();
        let mut probs = vec![0.0; moves.len()];
        self.model.limit_probs(x, &mut probs);
        probs.iter().zip(moves).map(|(p, w)| p * w.alpha() as f64).sum()
    }
}

type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type GrowthFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A field given by closures.
pub struct FnField {
    k: usize,
    drift: Box<DriftFn>,
    growth: Box<GrowthFn>,
}

impl FnField {
    pub fn new(
        k: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        growth: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnField {
            k,
            drift: Box::new(drift),
            growth: Box::new(growth),
        }
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.k
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    fn growth(&self, x: &[f64]) -> f64 {
        (self.growth)(x)
    }
}

/// A mean-limit system: the field plus the integrator step.
#[derive(Clone)]
pub struct MeanLimitSystem {
    field: Arc<dyn VectorField>,
    pub step: f64,
}

impl MeanLimitSystem {
    pub fn new(field: Arc<dyn VectorField>) -> Self {
        MeanLimitSystem {
            field,
            step: DEFAULT_STEP,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn field(&self) -> &Arc<dyn VectorField> {
        &self.field
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.field.drift(x, &mut out);
        out
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        self.field.drift(x, out)
    }

    pub fn growth(&self, x: &[f64]) -> f64 {
        self.field.growth(x)
    }
}

/// Mean-limit system of an urn model, by direct summation over its rules.
pub fn derive_system(model: Arc<dyn UrnModel>) -> MeanLimitSystem {
    MeanLimitSystem::new(Arc::new(RuleField::new(model)))
}

/// Samples `x.t` of a flow at the integrator nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl FlowSample {
    pub fn last(&self) -> &[f64] {
        self.points.last().expect("a flow sample is never empty")
    }
}

/// One RK4 step with simplex projection, reusing scratch buffers.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    out: Vec<f64>,
}

impl Rk4 {
    pub fn new(k: usize) -> Self {
        Rk4 {
            k1: vec![0.0; k],
            k2: vec![0.0; k],
            k3: vec![0.0; k],
            k4: vec![0.0; k],
            tmp: vec![0.0; k],
            out: vec![0.0; k],
        }
    }

    /// Unprojected RK4 increment from `x` into `out`.
    pub fn advance(&mut self, field: &dyn VectorField, x: &[f64], h: f64, out: &mut [f64]) {
        let k = x.len();
        field.drift(x, &mut self.k1);
        for i in 0..k {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        field.drift(&self.tmp, &mut self.k2);
        for i in 0..k {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        field.drift(&self.tmp, &mut self.k3);
        for i in 0..k {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        field.drift(&self.tmp, &mut self.k4);
        for i in 0..k {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    /// Advance `x` in place by `h` and project back onto the simplex;
    /// `t` labels the end time in error reports.
    pub fn step(&mut self, field: &dyn VectorField, x: &mut [f64], h: f64, t: f64) -> Result<()> {
        let mut out = std::mem::take(&mut self.out);
        self.advance(field, x, h, &mut out);
        let projected = project(&mut out, t);
        if projected.is_ok() {
            x.copy_from_slice(&out);
        }
        self.out = out;
        projected
    }
}

/// Clip coordinates in `[-1e-12, 0)` to zero and renormalize.
pub fn project(x: &mut [f64], t: f64) -> Result<()> {
    for (i, v) in x.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(UrnError::NonFinite { t });
        }
        if *v < -NEGATIVE_TOL {
            return Err(UrnError::IntegrationBlowUp { index: i, value: *v, t });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = x.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(UrnError::NonFinite { t });
    }
    x.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

/// Integrate from `x0` over `[0, duration]` with step `h` (the last step is
/// shortened to land on `duration`), calling `visit(t, x)` at every node
/// including `t = 0`. Returns the end point.
pub fn integrate<F>(system: &MeanLimitSystem, x0: &[f64], duration: f64, h: f64, mut visit: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]),
{
    let k = system.dim();
    check_simplex(x0, k)?;
    if !(h > 0.0) || !(duration >= 0.0) {
        return Err(UrnError::InvalidParameters(format!(
            "need h > 0 and duration >= 0 (got h = {h}, duration = {duration})"
        )));
    }
    let mut x = x0.to_vec();
    project(&mut x, 0.0)?;
    visit(0.0, &x);
    let n = node_count(duration, h);
    let field = system.field.as_ref();
    let mut rk = Rk4::new(k);
    let mut out = vec![0.0; k];
    for i in 1..=n {
        let t_prev = (i - 1) as f64 * h;
        let t = if i == n { duration } else { i as f64 * h };
        rk.advance(field, &x, t - t_prev, &mut out);
        project(&mut out, t)?;
        x.copy_from_slice(&out);
        visit(t, &x);
    }
    Ok(x)
}

fn node_count(duration: f64, h: f64) -> usize {
    if duration == 0.0 {
        return 0;
    }
    let n = (duration / h - 1e-9).ceil();
    n.max(1.0) as usize
}

/// The flow `x.t` for `t ∈ [0, T]`, sampled at every integrator node.
pub fn flow(system: &MeanLimitSystem, x0: &[f64], t_end: f64, h: f64) -> Result<FlowSample> {
    if !(t_end > 0.0) {
        return Err(UrnError::InvalidParameters(format!("T must be positive (got {t_end})")));
    }
    let mut times = Vec::new();
    let mut points = Vec::new();
    integrate(system, x0, t_end, h, |t, x| {
        times.push(t);
        points.push(x.to_vec());
    })?;
    Ok(FlowSample { times, points })
}

/// End point `x.t` of the flow.
pub fn flow_to(system: &MeanLimitSystem, x0: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
    integrate(system, x0, t, h, |_, _| {})
}

/// `(1/(T - burn_in)) ∫_{burn_in}^{T} q(x.s) ds` by the trapezoidal rule on
/// the integrator nodes.
pub fn time_average<Q>(system: &MeanLimitSystem, x0: &[f64], t_end: f64, burn_in: f64, mut q: Q) -> Result<f64>
where
    Q: FnMut(&[f64]) -> f64,
{
    if !(t_end > burn_in) || burn_in < 0.0 {
        return Err(UrnError::InvalidParameters(format!(
            "need T > burn_in >= 0 (got T = {t_end}, burn_in = {burn_in})"
        )));
    }
    let h = system.step;
    let start = flow_to(system, x0, burn_in, h)?;
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    integrate(system, &start, t_end - burn_in, h, |t, x| {
        let v = q(x);
        if let Some((tp, vp)) = prev {
            acc += 0.5 * (t - tp) * (v + vp);
        }
        prev = Some((t, v));
    })?;
    Ok(acc / (t_end - burn_in))
}

/// Componentwise time average of `x.s` over `[burn_in, T]`.
pub fn time_average_point(system: &MeanLimitSystem, x0: &[f64], t_end: f64, burn_in: f64) -> Result<Vec<f64>> {
    if !(t_end > burn_in) || burn_in < 0.0 {
        return Err(UrnError::InvalidParameters(format!(
            "need T > burn_in >= 0 (got T = {t_end}, burn_in = {burn_in})"
        )));
    }
    let h = system.step;
    let k = system.dim();
    let start = flow_to(system, x0, burn_in, h)?;
    let mut acc = vec![0.0; k];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    integrate(system, &start, t_end - burn_in, h, |t, x| {
        if let Some((tp, xp)) = &prev {
            for i in 0..k {
                acc[i] += 0.5 * (t - tp) * (x[i] + xp[i]);
            }
        }
        prev = Some((t, x.to_vec()));
    })?;
    Ok(acc.into_iter().map(|v| v / (t_end - burn_in)).collect())
}

/// Windowed average of the growth function along the flow from `x0`.
pub fn time_average_growth(system: &MeanLimitSystem, x0: &[f64], t_end: f64, burn_in: f64) -> Result<f64> {
    let field = system.field.clone();
    time_average(system, x0, t_end, burn_in, move |x| field.growth(x))
}

/// `sup_{h ∈ grid} ‖Φ_h(X(t)) - X(t+h)‖` over `h ∈ [0, window]`, where the
/// grid is the union of the path's update times in the window and the
/// integrator nodes between them. Both one-sided values of `X` are compared
/// at every update time. Needs a full-resolution path.
pub fn apt_error(path: &PathRecord, system: &MeanLimitSystem, t: f64, window: f64) -> Result<f64> {
    if path.thin() != 1 {
        return Err(UrnError::InvalidParameters(
            "apt_error needs a full-resolution path".into(),
        ));
    }
    if path.dim() != system.dim() {
        return Err(UrnError::DimensionMismatch {
            expected: system.dim(),
            actual: path.dim(),
        });
    }
    let end = t + window;
    if !(window >= 0.0) || !(t >= 0.0) || path.final_tau() < end {
        return Err(UrnError::InsufficientHorizon {
            needed: end,
            available: path.final_tau(),
        });
    }
    let k = system.dim();
    let field = system.field.as_ref();
    let h_max = system.step;
    let mut row = path.row_at(t)?;
    let mut y = path.frequencies(row);
    if y.iter().all(|&v| v == 0.0) {
        return Err(UrnError::InvalidParameters(format!("path is extinct at tau = {t}")));
    }
    let mut current = y.clone();
    let mut now = t;
    let mut err: f64 = 0.0;
    let mut rk = Rk4::new(k);
    let mut out = vec![0.0; k];

    let mut advance_to = |target: f64, y: &mut Vec<f64>, now: &mut f64, current: &[f64], err: &mut f64| -> Result<()> {
        let gap = target - *now;
        if gap <= 0.0 {
            return Ok(());
        }
        let n = (gap / h_max).ceil().max(1.0) as usize;
        let h = gap / n as f64;
        for i in 1..=n {
            rk.advance(field, y, h, &mut out);
            let t_node = if i == n { target } else { *now + i as f64 * h };
            project(&mut out, t_node)?;
            y.copy_from_slice(&out);
            *err = err.max(distance(y, current));
        }
        *now = target;
        Ok(())
    };

    while row + 1 < path.len() && path.tau(row + 1) <= end {
        let next_tau = path.tau(row + 1);
        // Left limit at the update time is still x(row).
        advance_to(next_tau, &mut y, &mut now, &current, &mut err)?;
        row += 1;
        current = path.frequencies(row);
        err = err.max(distance(&y, &current));
    }
    advance_to(end, &mut y, &mut now, &current, &mut err)?;
    Ok(err)
}

/// `‖ |z| · E[x(n+1) - x(n) | z(n) = z] - g(z/|z|) ‖`, with the expectation
/// taken exactly over the kernel at `z`.
pub fn lemma1_residual(model: &dyn UrnModel, z: &UrnState, system: &MeanLimitSystem) -> Result<f64> {
    let k = model.dim();
    if z.dim() != k {
        return Err(UrnError::DimensionMismatch {
            expected: k,
            actual: z.dim(),
        });
    }
    if z.is_extinct() {
        return Err(UrnError::InvalidParameters("state must be nonzero".into()));
    }
    let moves = model.moves();
    let mut probs = vec![0.0; moves.len()];
    model.kernel_probs(z.counts(), &mut probs);
    let x = z.frequencies();
    let total = z.total() as f64;
    let mut expected = vec![0.0; k];
    let mut next = vec![0.0; k];
    for (p, w) in probs.iter().zip(moves) {
        if *p == 0.0 {
            continue;
        }
        let new_total = total + w.alpha() as f64;
        for i in 0..k {
            let zi = z.counts()[i] as f64 + f64::from(w.as_slice()[i]);
            next[i] = if new_total > 0.0 { zi / new_total } else { 0.0 };
        }
        for i in 0..k {
            expected[i] += p * (next[i] - x[i]);
        }
    }
    let g = system.drift(&x);
    let diff: Vec<f64> = expected.iter().zip(&g).map(|(e, gi)| total * e - gi).collect();
    Ok(norm(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn::{MoveVector, RuleModel, TransitionRule};

    fn constant_growth(c: f64) -> MeanLimitSystem {
        MeanLimitSystem::new(Arc::new(FnField::new(
            3,
            |_, out: &mut [f64]| out.iter_mut().for_each(|o| *o = 0.0),
            move |_| c,
        )))
    }

    #[test]
    fn pure_death_growth_is_minus_one() {
        let sys = derive_system(Arc::new(RuleModel::pure_death(3)));
        for x in [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [1.0 / 3.0; 3]] {
            assert!((sys.growth(&x) + 1.0).abs() < 1e-15);
            let g = sys.drift(&x);
            assert!(g.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn constant_growth_average_is_exact() {
        let sys = constant_growth(0.37);
        let avg = time_average_growth(&sys, &[0.2, 0.3, 0.5], 10.0, 2.5).unwrap();
        assert!((avg - 0.37).abs() < 1e-14);
    }

    #[test]
    fn flow_lands_on_end_time() {
        let sys = constant_growth(0.0);
        let f = flow(&sys, &[0.2, 0.3, 0.5], 1.005, 0.01).unwrap();
        assert_eq!(*f.times.last().unwrap(), 1.005);
        assert_eq!(f.times.len(), 102);
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = MeanLimitSystem::new(Arc::new(FnField::new(
            2,
            |_, out: &mut [f64]| {
                out[0] = -10.0;
                out[1] = 10.0;
            },
            |_| 0.0,
        )));
        assert!(matches!(
            flow(&sys, &[0.5, 0.5], 1.0, 0.1),
            Err(UrnError::IntegrationBlowUp { index: 0, .. })
        ));
    }

    #[test]
    fn nan_field_is_reported() {
        let sys = MeanLimitSystem::new(Arc::new(FnField::new(
            2,
            |_, out: &mut [f64]| out.iter_mut().for_each(|o| *o = f64::NAN),
            |_| 0.0,
        )));
        assert!(matches!(
            flow(&sys, &[0.5, 0.5], 1.0, 0.1),
            Err(UrnError::NonFinite { .. })
        ));
    }

    #[test]
    fn switch_moves_have_zero_residual() {
        // Type switches preserve |z|, so the normalized increment is exactly w/|z|.
        let model = Arc::new(
            RuleModel::new(
                2,
                2,
                vec![
                    TransitionRule::new(MoveVector::new(vec![1, -1]), |x: &[f64]| 0.3 * x[1]),
                    TransitionRule::new(MoveVector::new(vec![-1, 1]), |x: &[f64]| 0.1 * x[0]),
                    TransitionRule::new(MoveVector::new(vec![0, 0]), |x: &[f64]| 1.0 - 0.3 * x[1] - 0.1 * x[0]),
                ],
            )
            .unwrap(),
        );
        let sys = derive_system(model.clone());
        for n in [100_u64, 1000, 10_000] {
            let z = UrnState::from_frequencies(&[0.4, 0.6], n);
            let r = lemma1_residual(model.as_ref(), &z, &sys).unwrap();
            assert!(r < 10.0 / n as f64, "n = {n}, residual {r}");
        }
    }

    #[test]
    fn residual_at_unit_population_is_finite() {
        let model = Arc::new(RuleModel::pure_death(2));
        let sys = derive_system(model.clone());
        let r = lemma1_residual(model.as_ref(), &UrnState::new(vec![1, 0]), &sys).unwrap();
        assert!(r.is_finite());
    }
}
