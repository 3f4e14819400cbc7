//! Equilibria, permanence, growth conditions, periodic orbits and averages
//! for mean-limit systems on the simplex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, UrnError};
use crate::linalg::{check_simplex, distance, dot, row_major, segment_distance};
use crate::mean_field::{project, MeanLimitSystem, Rk4};
use crate::models::ReplicatorParams;

/// Residual bound for accepting an equilibrium.
pub const EQUILIBRIUM_RESIDUAL_TOL: f64 = 1e-9;
/// Coordinates at or below this are treated as zero when reading a support.
pub const SUPPORT_TOL: f64 = 1e-10;
/// Support systems with a larger condition number are skipped.
pub const MAX_CONDITION: f64 = 1e12;
/// Coordinates below this mean the trajectory has reached the boundary.
pub const INTERIOR_TOL: f64 = 1e-12;
/// Relative spread of the last return times accepted as a stable period.
pub const PERIOD_JITTER_TOL: f64 = 1e-4;
/// Number of consecutive returns compared for period stability.
pub const RETURNS: usize = 5;
/// Samples per period of a detected orbit.
pub const ORBIT_SAMPLES: usize = 256;

const MAX_SUPPORT_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    /// Indices with `x_i > 1e-10`.
    pub support: Vec<usize>,
    /// `‖x ∘ (Ax - xᵀAx)‖`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EquilibriumSet {
    pub equilibria: Vec<Equilibrium>,
    /// Supports whose linear system was singular or ill-conditioned. A
    /// skipped support may carry a continuum of equilibria.
    pub skipped: Vec<Vec<usize>>,
}

impl EquilibriumSet {
    pub fn len(&self) -> usize {
        self.equilibria.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equilibria.is_empty()
    }

    /// The equilibria that are vertices of the simplex.
    pub fn vertices(&self) -> impl Iterator<Item = &Equilibrium> {
        self.equilibria.iter().filter(|e| e.support.len() == 1)
    }
}

/// `‖x ∘ (Ax - xᵀAx)‖` for a row-major `k x k` matrix.
fn replicator_residual(a: &[f64], k: usize, x: &[f64]) -> f64 {
    let ax: Vec<f64> = (0..k).map(|i| dot(&a[i * k..(i + 1) * k], x)).collect();
    let mean = dot(x, &ax);
    x.iter()
        .zip(&ax)
        .map(|(xi, v)| (xi * (v - mean)).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn support_of(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v > SUPPORT_TOL)
        .map(|(i, _)| i)
        .collect()
}

enum SupportSolution {
    Solved(Vec<f64>),
    Singular,
}

/// Solve `(A x)_i = λ` for `i ∈ J`, `x_i = 0` off `J`, `Σ x = 1`.
fn solve_support(a: &DMatrix<f64>, support: &[usize]) -> SupportSolution {
    let k = a.nrows();
    let m = support.len();
    let mut sys = DMatrix::zeros(m + 1, m + 1);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            sys[(r, c)] = a[(i, j)];
        }
        sys[(r, m)] = -1.0;
        sys[(m, r)] = 1.0;
    }
    let sv = sys.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return SupportSolution::Singular;
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    match sys.lu().solve(&rhs) {
        Some(sol) => {
            let mut x = vec![0.0; k];
            for (r, &i) in support.iter().enumerate() {
                x[i] = sol[r];
            }
            SupportSolution::Solved(x)
        }
        None => SupportSolution::Singular,
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(UrnError::InvalidParameters(format!(
            "payoff matrix must be square and nonempty (got {:?})",
            a.shape()
        )));
    }
    Ok(a.nrows())
}

/// Enumerate the equilibria of `ẋ = x∘(Ax - xᵀAx)` on the boundary of the
/// simplex by solving the linear system of every proper nonempty support.
/// Solutions with a coordinate below `-tol` are discarded, small negatives
/// are clipped, and every kept point is re-checked against the field.
pub fn boundary_equilibria(a: &DMatrix<f64>, tol: f64) -> Result<EquilibriumSet> {
    let k = check_square(a)?;
    if k > MAX_SUPPORT_DIM {
        return Err(UrnError::InvalidParameters(format!(
            "support enumeration is limited to k <= {MAX_SUPPORT_DIM} (got {k})"
        )));
    }
    let flat = row_major(a);
    let mut set = EquilibriumSet::default();
    let full = (1_u32 << k) - 1;
    let mut masks: Vec<u32> = (1..full).collect();
    // Smaller supports first so that vertices come first and duplicates
    // found on larger supports collapse onto them.
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let mut x = match solve_support(a, &support) {
            SupportSolution::Solved(x) => x,
            SupportSolution::Singular => {
                set.skipped.push(support);
                continue;
            }
        };
        if x.iter().any(|v| !v.is_finite() || *v < -tol) {
            continue;
        }
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
        let residual = replicator_residual(&flat, k, &x);
        if residual > EQUILIBRIUM_RESIDUAL_TOL {
            continue;
        }
        if set.equilibria.iter().any(|e| distance(&e.x, &x) <= 1e-9) {
            continue;
        }
        set.equilibria.push(Equilibrium {
            support: support_of(&x),
            x,
            residual,
        });
    }
    Ok(set)
}

/// Invasion-rate report for a permanence weight vector `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermanenceReport {
    /// `Σ p_i ((Ax)_i - xᵀAx)` over the face coordinates that vanish at `x`,
    /// one value per considered equilibrium.
    pub values: Vec<(Vec<f64>, f64)>,
    /// Minimum over `values`; `+∞` when there are none.
    pub minimum: f64,
    pub holds: bool,
    /// No boundary equilibrium was available, so the condition holds
    /// vacuously. Usually a sign that the enumeration skipped everything.
    pub vacuous: bool,
}

/// Evaluate the permanence condition with weights `p` at the given boundary
/// equilibria. With `face = Some(F)` only equilibria on the boundary of the
/// face spanned by `F` are considered and invasion rates are summed over
/// `F`; the default is the whole simplex.
pub fn check_permanence(
    a: &DMatrix<f64>,
    p: &[f64],
    eqs: &EquilibriumSet,
    face: Option<&[usize]>,
    tol: f64,
) -> Result<PermanenceReport> {
    let k = check_square(a)?;
    if p.len() != k {
        return Err(UrnError::DimensionMismatch {
            expected: k,
            actual: p.len(),
        });
    }
    if p.iter().any(|v| !(*v > 0.0)) {
        return Err(UrnError::InvalidParameters(
            "permanence weights must be positive".into(),
        ));
    }
    let face: Vec<usize> = match face {
        Some(f) => f.to_vec(),
        None => (0..k).collect(),
    };
    if face.iter().any(|&i| i >= k) {
        return Err(UrnError::InvalidParameters("face index out of range".into()));
    }
    let flat = row_major(a);
    let mut values = Vec::new();
    for e in &eqs.equilibria {
        let inside_face = e.support.iter().all(|i| face.contains(i));
        if !inside_face || e.support.len() >= face.len() {
            continue;
        }
        let x = &e.x;
        let ax: Vec<f64> = (0..k).map(|i| dot(&flat[i * k..(i + 1) * k], x)).collect();
        let mean = dot(x, &ax);
        let v: f64 = face
            .iter()
            .filter(|&&i| x[i] <= SUPPORT_TOL)
            .map(|&i| p[i] * (ax[i] - mean))
            .sum();
        values.push((x.clone(), v));
    }
    let minimum = values.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    Ok(PermanenceReport {
        vacuous: values.is_empty(),
        holds: minimum > tol,
        minimum,
        values,
    })
}

/// Exhaustive search for a permanence witness `p ∈ {1, …, levels}^k`,
/// for `k <= 5`. Returns the first witness in lexicographic order.
pub fn search_permanence_weights(
    a: &DMatrix<f64>,
    eqs: &EquilibriumSet,
    levels: usize,
    tol: f64,
) -> Result<Option<Vec<f64>>> {
    let k = check_square(a)?;
    if k > 5 {
        return Err(UrnError::Unsupported("permanence weight search is limited to k <= 5"));
    }
    if levels == 0 {
        return Ok(None);
    }
    let mut digits = vec![0_usize; k];
    loop {
        let p: Vec<f64> = digits.iter().map(|&d| (d + 1) as f64).collect();
        let report = check_permanence(a, &p, eqs, None, tol)?;
        if report.holds && !report.vacuous {
            return Ok(Some(p));
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(None);
            }
            digits[pos] += 1;
            if digits[pos] < levels {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InteriorEquilibrium {
    /// Unique solution with every coordinate above `1e-9`.
    Positive(Vec<f64>),
    /// Unique solution of the linear system, but not strictly positive.
    NonPositive(Vec<f64>),
    /// The linear system is singular or ill-conditioned.
    Singular,
}

impl InteriorEquilibrium {
    pub fn positive(&self) -> Option<&[f64]> {
        match self {
            InteriorEquilibrium::Positive(x) => Some(x),
            _ => None,
        }
    }
}

/// Solve `(Ax)_i` all equal with `Σx = 1`.
pub fn interior_equilibrium(a: &DMatrix<f64>) -> Result<InteriorEquilibrium> {
    let k = check_square(a)?;
    let support: Vec<usize> = (0..k).collect();
    Ok(match solve_support(a, &support) {
        SupportSolution::Singular => InteriorEquilibrium::Singular,
        SupportSolution::Solved(x) => {
            if x.iter().all(|v| *v > 1e-9) {
                InteriorEquilibrium::Positive(x)
            } else {
                InteriorEquilibrium::NonPositive(x)
            }
        }
    })
}

/// `(b - d)/(b + d + ν) + x̂ᵀAx̂` at the interior equilibrium. When the
/// payoff matrix vanishes identically every point is an equilibrium with
/// `xᵀAx = 0`, and the value is the constant term alone.
pub fn growth_condition_value(params: &ReplicatorParams) -> Result<f64> {
    params.validate()?;
    let a = params.payoff();
    let base = params.baseline_growth();
    if a.iter().all(|v| *v == 0.0) {
        return Ok(base);
    }
    match interior_equilibrium(&a)? {
        InteriorEquilibrium::Positive(x) => {
            let xv = DVector::from_column_slice(&x);
            Ok(base + (xv.transpose() * &a * &xv)[(0, 0)])
        }
        _ => Err(UrnError::NoInteriorEquilibrium),
    }
}

/// `(min f, max f)` over the sample points.
pub fn check_uniform_growth(system: &MeanLimitSystem, region: &[Vec<f64>]) -> Result<(f64, f64)> {
    if region.is_empty() {
        return Err(UrnError::InvalidParameters(
            "region must contain at least one point".into(),
        ));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in region {
        check_simplex(x, system.dim())?;
        let f = system.growth(x);
        lo = lo.min(f);
        hi = hi.max(f);
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttractorSpec {
    Point(Vec<f64>),
    /// Samples at equally spaced times over one period, starting on a
    /// section crossing; the last sample is not repeated.
    PeriodicOrbit {
        points: Vec<Vec<f64>>,
        period: f64,
        closure_gap: f64,
    },
    SampledSet(Vec<Vec<f64>>),
}

impl AttractorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AttractorSpec::Point(_) => "point",
            AttractorSpec::PeriodicOrbit { .. } => "periodic_orbit",
            AttractorSpec::SampledSet(_) => "sampled_set",
        }
    }

    pub fn points(&self) -> Vec<&[f64]> {
        match self {
            AttractorSpec::Point(x) => vec![x.as_slice()],
            AttractorSpec::PeriodicOrbit { points, .. } | AttractorSpec::SampledSet(points) => {
                points.iter().map(Vec::as_slice).collect()
            }
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            AttractorSpec::PeriodicOrbit { period, .. } => Some(*period),
            _ => None,
        }
    }
}

fn check_interior(x: &[f64], t: f64) -> Result<()> {
    match x.iter().enumerate().find(|(_, v)| **v < INTERIOR_TOL) {
        Some((index, value)) => Err(UrnError::LeftInterior {
            index,
            value: *value,
            t,
        }),
        None => Ok(()),
    }
}

/// Fixed-step walker used by the orbit detector.
struct Walker<'a> {
    system: &'a MeanLimitSystem,
    rk: Rk4,
    x: Vec<f64>,
    t: f64,
}

impl<'a> Walker<'a> {
    fn new(system: &'a MeanLimitSystem, x0: &[f64]) -> Self {
        Walker {
            system,
            rk: Rk4::new(system.dim()),
            x: x0.to_vec(),
            t: 0.0,
        }
    }

    fn step(&mut self, h: f64) -> Result<()> {
        self.t += h;
        self.rk.step(self.system.field().as_ref(), &mut self.x, h, self.t)?;
        check_interior(&self.x, self.t)
    }

    /// Point reached from `x` after a partial step `theta`.
    fn partial(&mut self, x: &[f64], theta: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.rk.advance(self.system.field().as_ref(), x, theta, &mut out);
        project(&mut out, self.t)?;
        Ok(out)
    }
}

struct Crossing {
    t: f64,
    x: Vec<f64>,
}

/// Upward crossings of the hyperplane through `p` with normal `normal`,
/// within `radius` of `p`, over `steps` steps from the walker's state.
fn section_crossings(
    walker: &mut Walker<'_>,
    p: &[f64],
    normal: &[f64],
    radius: f64,
    steps: usize,
    h: f64,
) -> Result<Vec<Crossing>> {
    let side = |x: &[f64]| -> f64 { x.iter().zip(p).zip(normal).map(|((xi, pi), ni)| (xi - pi) * ni).sum() };
    let mut crossings = Vec::new();
    let mut s_prev = side(&walker.x);
    for _ in 0..steps {
        let x_prev = walker.x.clone();
        let t_prev = walker.t;
        walker.step(h)?;
        let s_new = side(&walker.x);
        if s_prev < 0.0 && s_new >= 0.0 && distance(&walker.x, p) <= radius {
            let (mut lo, mut hi) = (0.0, h);
            let mut x_hit = walker.x.clone();
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let xm = walker.partial(&x_prev, mid)?;
                if side(&xm) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                    x_hit = xm;
                }
                if hi - lo < 1e-15 * h.max(1.0) {
                    break;
                }
            }
            crossings.push(Crossing {
                t: t_prev + hi,
                x: x_hit,
            });
        }
        s_prev = s_new;
    }
    Ok(crossings)
}

/// Outcome of [`detect_periodic_orbit_detailed`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OrbitDetection {
    pub orbit: Option<AttractorSpec>,
    /// Section crossing times of the last scan.
    pub crossings: Vec<f64>,
    /// Relative spread `(max - min)/mean` of the last five return times.
    pub jitter: Option<f64>,
}

/// Look for a stable periodic orbit reached from the interior point `x0`.
///
/// The flow runs for `t_max/2` to shed the transient. A section is then
/// placed through the current point, normal to the flow there, and the next
/// `t_max/2` is scanned for upward crossings near that point. The last
/// return time is accepted as the period when the last five returns agree to
/// a relative spread of `1e-4`; otherwise the section is re-seated once at
/// the end of the scan. The orbit is sampled at 256 equally spaced times and
/// rejected when it fails to close to within `tol`.
///
/// Returns `None` when the tail settles on a point or the returns never
/// stabilize.
pub fn detect_periodic_orbit(
    system: &MeanLimitSystem,
    x0: &[f64],
    t_max: f64,
    tol: f64,
) -> Result<Option<AttractorSpec>> {
    Ok(detect_periodic_orbit_detailed(system, x0, t_max, tol)?.orbit)
}

/// [`detect_periodic_orbit`] with the crossing times and return jitter.
pub fn detect_periodic_orbit_detailed(
    system: &MeanLimitSystem,
    x0: &[f64],
    t_max: f64,
    tol: f64,
) -> Result<OrbitDetection> {
    let k = system.dim();
    check_simplex(x0, k)?;
    check_interior(x0, 0.0)?;
    let h = system.step;
    if !(t_max > 4.0 * h) {
        return Err(UrnError::InvalidParameters(format!("t_max too short (got {t_max})")));
    }
    let half_steps = (0.5 * t_max / h).ceil() as usize;
    let mut walker = Walker::new(system, x0);
    for _ in 0..half_steps {
        walker.step(h)?;
    }

    let mut report = OrbitDetection::default();
    for _attempt in 0..2 {
        let p = walker.x.clone();
        let start_t = walker.t;
        let normal = system.drift(&p);
        let speed = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if speed < 1e-14 {
            return Ok(report);
        }
        // First pass: how far the tail wanders from p.
        let mut spread: f64 = 0.0;
        let mut probe = Walker::new(system, &p);
        probe.t = start_t;
        for _ in 0..half_steps {
            probe.step(h)?;
            spread = spread.max(distance(&probe.x, &p));
        }
        if spread < 1e-6 {
            return Ok(report);
        }
        let crossings = section_crossings(&mut walker, &p, &normal, 0.25 * spread, half_steps, h)?;
        report.crossings = crossings.iter().map(|c| c.t).collect();
        report.jitter = None;
        if crossings.len() < RETURNS + 1 {
            continue;
        }
        let periods: Vec<f64> = crossings.windows(2).map(|w| w[1].t - w[0].t).collect();
        let last = &periods[periods.len() - RETURNS..];
        let max = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = last.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = last.iter().sum::<f64>() / RETURNS as f64;
        let jitter = (max - min) / mean;
        report.jitter = Some(jitter);
        if jitter > PERIOD_JITTER_TOL {
            continue;
        }
        let period = *periods.last().expect("at least one period");
        let origin = &crossings[crossings.len() - 1].x;
        let (points, end) = sample_orbit(system, origin, period)?;
        let closure_gap = distance(&end, origin);
        if closure_gap <= tol {
            report.orbit = Some(AttractorSpec::PeriodicOrbit {
                points,
                period,
                closure_gap,
            });
        }
        return Ok(report);
    }
    Ok(report)
}

/// Sample the flow from `origin` at `ORBIT_SAMPLES` equally spaced times in
/// `[0, period)`, returning the samples and the point at `period`.
fn sample_orbit(system: &MeanLimitSystem, origin: &[f64], period: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let dt = period / ORBIT_SAMPLES as f64;
    let sub = (dt / system.step).ceil().max(1.0) as usize;
    let h = dt / sub as f64;
    let mut walker = Walker::new(system, origin);
    let mut points = Vec::with_capacity(ORBIT_SAMPLES);
    for _ in 0..ORBIT_SAMPLES {
        points.push(walker.x.clone());
        for _ in 0..sub {
            walker.step(h)?;
        }
    }
    Ok((points, walker.x))
}

/// Average of `q` over the attractor: `q(x̂)` for a point, and the
/// trapezoidal `(1/T)∫₀ᵀ q(x.t) dt` over the samples of a periodic orbit
/// (for a closed, equally spaced sampling this is the sample mean).
pub fn orbit_average<Q>(spec: &AttractorSpec, mut q: Q) -> Result<f64>
where
    Q: FnMut(&[f64]) -> f64,
{
    match spec {
        AttractorSpec::Point(x) => Ok(q(x)),
        AttractorSpec::PeriodicOrbit { points, .. } => {
            Ok(points.iter().map(|x| q(x)).sum::<f64>() / points.len() as f64)
        }
        AttractorSpec::SampledSet(_) => Err(UrnError::Unsupported(
            "averages over a sampled set need an invariant measure",
        )),
    }
}

/// Componentwise [`orbit_average`] of a vector-valued quantity.
pub fn orbit_average_vec<Q>(spec: &AttractorSpec, dim: usize, mut q: Q) -> Result<Vec<f64>>
where
    Q: FnMut(&[f64], &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    match spec {
        AttractorSpec::Point(x) => {
            q(x, &mut buf);
            Ok(buf)
        }
        AttractorSpec::PeriodicOrbit { points, .. } => {
            let mut acc = vec![0.0; dim];
            for x in points {
                q(x, &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
            }
            Ok(acc.into_iter().map(|v| v / points.len() as f64).collect())
        }
        AttractorSpec::SampledSet(_) => Err(UrnError::Unsupported(
            "averages over a sampled set need an invariant measure",
        )),
    }
}

/// Euclidean distance from `x` to the attractor: to the point, to the closed
/// polygon through the orbit samples, or to the nearest sample of a set.
pub fn attractor_distance(x: &[f64], spec: &AttractorSpec) -> f64 {
    match spec {
        AttractorSpec::Point(p) => distance(x, p),
        AttractorSpec::PeriodicOrbit { points, .. } => {
            let n = points.len();
            (0..n)
                .map(|i| segment_distance(x, &points[i], &points[(i + 1) % n]))
                .fold(f64::INFINITY, f64::min)
        }
        AttractorSpec::SampledSet(points) => points.iter().map(|p| distance(x, p)).fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{barycenter, vertex};
    use crate::mean_field::FnField;
    use crate::models::{build_replicator, hypercycle};
    use std::sync::Arc;

    fn hyper_a(k: usize) -> DMatrix<f64> {
        hypercycle(k, 1.0, 2.5, 4.0).unwrap().payoff()
    }

    #[test]
    fn hypercycle3_boundary_equilibria_are_vertices() {
        let set = boundary_equilibria(&hyper_a(3), 1e-12).unwrap();
        assert_eq!(set.len(), 3);
        assert!(set.equilibria.iter().all(|e| e.support.len() == 1));
    }

    #[test]
    fn hypercycle5_flags_degenerate_edges() {
        let set = boundary_equilibria(&hyper_a(5), 1e-12).unwrap();
        assert_eq!(set.vertices().count(), 5);
        assert!(set.skipped.contains(&vec![0, 2]));
        assert!(set.equilibria.iter().all(|e| e.residual <= EQUILIBRIUM_RESIDUAL_TOL));
    }

    #[test]
    fn zero_matrix_reports_continuum() {
        let set = boundary_equilibria(&DMatrix::zeros(3, 3), 1e-12).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.skipped.len(), 3);
    }

    #[test]
    fn permanence_hypercycle_vertices() {
        let a = hyper_a(5);
        let set = boundary_equilibria(&a, 1e-12).unwrap();
        let report = check_permanence(&a, &[1.0; 5], &set, None, 0.0).unwrap();
        assert!(report.holds && !report.vacuous);
        assert!((report.minimum - 16.0 / 15.0).abs() < 1e-10);
    }

    #[test]
    fn permanence_fails_for_dominant_strategy() {
        let a = DMatrix::from_row_slice(3, 3, &[3.0, 3.0, 3.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let set = boundary_equilibria(&a, 1e-12).unwrap();
        let report = check_permanence(&a, &[1.0; 3], &set, None, 0.0).unwrap();
        assert!(!report.holds);
        assert!(report.minimum <= 0.0);
    }

    #[test]
    fn permanence_empty_is_vacuous() {
        let report = check_permanence(&hyper_a(3), &[1.0; 3], &EquilibriumSet::default(), None, 0.0).unwrap();
        assert!(report.vacuous && report.holds);
    }

    #[test]
    fn permanence_on_a_face() {
        let a = hyper_a(3);
        let set = boundary_equilibria(&a, 1e-12).unwrap();
        // On the edge {0, 1}: e_0 is invaded by 1, e_1 is not invaded by 0.
        let report = check_permanence(&a, &[1.0; 3], &set, Some(&[0, 1]), 0.0).unwrap();
        assert_eq!(report.values.len(), 2);
        assert!(!report.holds);
    }

    #[test]
    fn weight_search_finds_uniform_for_hypercycle() {
        let a = hyper_a(3);
        let set = boundary_equilibria(&a, 1e-12).unwrap();
        assert_eq!(search_permanence_weights(&a, &set, 2, 0.0).unwrap(), Some(vec![1.0; 3]));
    }

    #[test]
    fn interior_equilibria() {
        for k in 2..7 {
            let x = interior_equilibrium(&hyper_a(k)).unwrap();
            let x = x.positive().unwrap();
            assert!(x.iter().all(|v| (v - 1.0 / k as f64).abs() < 1e-12));
        }
        assert_eq!(
            interior_equilibrium(&DMatrix::zeros(3, 3)).unwrap(),
            InteriorEquilibrium::Singular
        );
        let rps = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0]);
        let x = interior_equilibrium(&rps).unwrap();
        assert!(distance(x.positive().unwrap(), &barycenter(3)) < 1e-12);
    }

    #[test]
    fn growth_condition_values() {
        let v = growth_condition_value(&hypercycle(5, 1.0, 2.5, 4.0).unwrap()).unwrap();
        assert!((v - 1.0 / 75.0).abs() < 1e-12);
        let v = growth_condition_value(&hypercycle(5, 1.0, 4.0, 4.0).unwrap()).unwrap();
        assert!((v + 7.0 / 45.0).abs() < 1e-12);
        let v = growth_condition_value(&hypercycle(3, 2.0, 2.0, 0.0).unwrap()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn uniform_growth_bounds() {
        let sys = MeanLimitSystem::new(Arc::new(FnField::new(2, |_, out| out.fill(0.0), |_| 0.3)));
        assert_eq!(
            check_uniform_growth(&sys, &[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap(),
            (0.3, 0.3)
        );
        let (_, sys, _) = build_replicator(hypercycle(5, 1.0, 2.5, 4.0).unwrap()).unwrap();
        let (lo, hi) = check_uniform_growth(&sys, &[barycenter(5)]).unwrap();
        assert!((lo - 1.0 / 75.0).abs() < 1e-12 && (hi - 1.0 / 75.0).abs() < 1e-12);
        assert!(check_uniform_growth(&sys, &[]).is_err());
    }

    #[test]
    fn converging_flows_have_no_orbit() {
        let (_, sys, _) = build_replicator(hypercycle(3, 1.0, 2.5, 4.0).unwrap()).unwrap();
        assert!(detect_periodic_orbit(&sys, &[0.5, 0.3, 0.2], 400.0, 1e-6)
            .unwrap()
            .is_none());
        let linear = MeanLimitSystem::new(Arc::new(FnField::new(
            2,
            |x, out| {
                out[0] = 0.5 - x[0];
                out[1] = x[0] - 0.5;
            },
            |_| 0.0,
        )));
        assert!(detect_periodic_orbit(&linear, &[0.9, 0.1], 100.0, 1e-6)
            .unwrap()
            .is_none());
    }

    #[test]
    fn boundary_start_is_rejected() {
        let (_, sys, _) = build_replicator(hypercycle(3, 1.0, 2.5, 4.0).unwrap()).unwrap();
        assert!(matches!(
            detect_periodic_orbit(&sys, &vertex(3, 0), 100.0, 1e-6),
            Err(UrnError::LeftInterior { .. })
        ));
    }

    #[test]
    fn averages_and_distances() {
        let spec = AttractorSpec::Point(barycenter(5));
        assert_eq!(orbit_average(&spec, |_| 1.0).unwrap(), 1.0);
        assert_eq!(attractor_distance(&barycenter(5), &spec), 0.0);
        assert!((attractor_distance(&vertex(5, 0), &spec) - (0.8_f64).sqrt()).abs() < 1e-15);
        let set = AttractorSpec::SampledSet(vec![barycenter(5)]);
        assert!(orbit_average(&set, |_| 1.0).is_err());
        let orbit = AttractorSpec::PeriodicOrbit {
            points: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            period: 1.0,
            closure_gap: 0.0,
        };
        assert_eq!(attractor_distance(&[0.5, 0.5], &orbit), 0.0);
        assert_eq!(orbit_average(&orbit, |x| x[0]).unwrap(), 0.5);
    }
}
