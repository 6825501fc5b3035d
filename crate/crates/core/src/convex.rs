//! Convex QCQP feasibility (phase-I log barrier) and bisection on a scalar level.
//!
//! A constraint is `xᵀQx + cᵀx + d ≤ rhs` with `Q ⪰ 0`, stored as a dense block
//! over its support so that sparse constraints (power budgets, bounds) stay
//! cheap in the Newton system.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct QuadraticConstraint {
    dim: usize,
    support: Vec<usize>,
    quad: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
    rhs: f64,
}

impl QuadraticConstraint {
    /// `quad` and `linear` are given over `support` (local coordinates).
    /// Fails with [`Error::NonConvex`] if `quad` has a negative eigenvalue.
    pub fn new(
        dim: usize,
        support: Vec<usize>,
        quad: DMatrix<f64>,
        linear: DVector<f64>,
        constant: f64,
        rhs: f64,
    ) -> Result<Self> {
        let c = Self::unchecked(dim, support, quad, linear, constant, rhs)?;
        if c.support.is_empty() {
            return Ok(c);
        }
        let sym = (&c.quad + c.quad.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
        let scale = c.quad.amax().max(1.0);
        if min_eig < -PSD_TOLERANCE * scale {
            return Err(Error::NonConvex { index: 0, min_eig });
        }
        Ok(c)
    }

    /// Dense `n x n` form; the support is every index that appears in `quad` or `linear`.
    pub fn from_dense(quad: &DMatrix<f64>, linear: &DVector<f64>, constant: f64, rhs: f64) -> Result<Self> {
        let n = linear.len();
        if quad.nrows() != n || quad.ncols() != n {
            return Err(Error::Shape(format!("quadratic term is {}x{}, expected {n}x{n}", quad.nrows(), quad.ncols())));
        }
        let support: Vec<usize> = (0..n)
            .filter(|&i| linear[i] != 0.0 || quad.row(i).iter().any(|&v| v != 0.0) || quad.column(i).iter().any(|&v| v != 0.0))
            .collect();
        let s = support.len();
        let q = DMatrix::from_fn(s, s, |a, b| quad[(support[a], support[b])]);
        let c = DVector::from_fn(s, |a, _| linear[support[a]]);
        Self::new(n, support, q, c, constant, rhs)
    }

    /// `cᵀx + d ≤ rhs`.
    pub fn linear(dim: usize, support: Vec<usize>, linear: DVector<f64>, constant: f64, rhs: f64) -> Result<Self> {
        let s = support.len();
        Self::unchecked(dim, support, DMatrix::zeros(s, s), linear, constant, rhs)
    }

    /// `Σ_r (a_rᵀx)² + cᵀx + d ≤ rhs`, convex by construction.
    pub fn sum_of_squares(
        dim: usize,
        support: Vec<usize>,
        rows: &[DVector<f64>],
        linear: DVector<f64>,
        constant: f64,
        rhs: f64,
    ) -> Result<Self> {
        let s = support.len();
        let mut quad = DMatrix::zeros(s, s);
        for r in rows {
            if r.len() != s {
                return Err(Error::Shape(format!("factor row has length {}, support has {s}", r.len())));
            }
            quad.ger(1.0, r, r, 1.0);
        }
        Self::unchecked(dim, support, quad, linear, constant, rhs)
    }

    fn unchecked(
        dim: usize,
        support: Vec<usize>,
        quad: DMatrix<f64>,
        linear: DVector<f64>,
        constant: f64,
        rhs: f64,
    ) -> Result<Self> {
        let s = support.len();
        if quad.nrows() != s || quad.ncols() != s || linear.len() != s {
            return Err(Error::Shape(format!("constraint blocks do not match support of size {s}")));
        }
        if support.iter().any(|&i| i >= dim) || support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape("support must be strictly increasing and inside the variable range".into()));
        }
        if !constant.is_finite() || !rhs.is_finite() {
            return Err(Error::Shape("non-finite constraint constant".into()));
        }
        Ok(Self { dim, support, quad, linear, constant, rhs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    fn local(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.support.len(), self.support.iter().map(|&i| x[i]))
    }

    /// `xᵀQx + cᵀx + d`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let xl = self.local(x);
        let qx = &self.quad * &xl;
        xl.dot(&qx) + self.linear.dot(&xl) + self.constant
    }

    /// Value minus rhs; positive means violated.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.value(x) - self.rhs
    }

    // value and local gradient
    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let xl = self.local(x);
        let qx = &self.quad * &xl;
        let val = xl.dot(&qx) + self.linear.dot(&xl) + self.constant;
        let sym_qx = &qx + self.quad.tr_mul(&xl);
        (val, sym_qx + &self.linear)
    }

    fn weight(&self) -> f64 {
        self.rhs.abs().max(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    /// Final iterate.
    pub point: DVector<f64>,
    /// Largest normalized violation `(g_i - rhs_i) / max(|rhs_i|, 1)` at `point`.
    /// `status` is `Feasible` exactly when this is at most the feasibility tolerance.
    pub margin: f64,
    /// Phase-I slack after each centering step.
    pub objective_trace: Vec<f64>,
    pub newton_iters: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct BarrierSettings {
    pub t0: f64,
    pub mu: f64,
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_backtrack: usize,
    pub max_outer: usize,
    pub feasibility_tol: f64,
    /// Stop as soon as a strictly feasible point is found.
    pub early_exit: bool,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 10.0,
            gap_tol: 1e-8,
            newton_tol: 1e-9,
            max_newton: 100,
            max_backtrack: 50,
            max_outer: 64,
            feasibility_tol: 1e-6,
            early_exit: true,
        }
    }
}

/// Decides whether `{x : g_i(x) ≤ rhs_i ∀i}` is non-empty, starting from `start`.
pub fn qcqp_feasibility(constraints: &[QuadraticConstraint], start: &DVector<f64>) -> Result<FeasibilityResult> {
    qcqp_feasibility_with(constraints, start, &BarrierSettings::default())
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

struct Phase1<'a> {
    cons: &'a [QuadraticConstraint],
    n: usize,
}

impl Phase1<'_> {
    fn normalized(&self, x: &DVector<f64>) -> Vec<f64> {
        self.cons.iter().map(|c| c.violation(x) / c.weight()).collect()
    }

    // barrier value only, or None outside the domain
    fn value(&self, t: f64, x: &DVector<f64>, s: f64) -> Option<f64> {
        if s <= -1.0 {
            return None;
        }
        let mut f = t * s - (s + 1.0).ln();
        for c in self.cons {
            let d = s - c.violation(x) / c.weight();
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            f -= d.ln();
        }
        Some(f)
    }

    fn eval(&self, t: f64, x: &DVector<f64>, s: f64) -> Eval {
        let n = self.n;
        let mut grad = DVector::zeros(n + 1);
        let mut hess = DMatrix::zeros(n + 1, n + 1);
        let floor = s + 1.0;
        let mut f = t * s - floor.ln();
        grad[n] = t - 1.0 / floor;
        hess[(n, n)] = 1.0 / (floor * floor);
        for c in self.cons {
            let w = c.weight();
            let (val, g_local) = c.value_grad(x);
            let d = s - (val - c.rhs) / w;
            f -= d.ln();
            let inv = 1.0 / d;
            let sup = &c.support;
            // gradient of h is g_local / w on the support, -1 on s
            for (a, &i) in sup.iter().enumerate() {
                grad[i] += g_local[a] / w * inv;
            }
            grad[n] -= inv;
            let inv2 = inv * inv;
            for (a, &i) in sup.iter().enumerate() {
                let ga = g_local[a] / w;
                for (b, &j) in sup.iter().enumerate() {
                    hess[(i, j)] += ga * g_local[b] / w * inv2 + (c.quad[(a, b)] + c.quad[(b, a)]) / w * inv;
                }
                hess[(i, n)] -= ga * inv2;
                hess[(n, i)] -= ga * inv2;
            }
            hess[(n, n)] += inv2;
        }
        Eval { f, grad, hess }
    }
}

fn solve_newton(hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut h = hess.clone();
        if ridge > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += ridge * scale;
            }
        }
        if let Some(ch) = h.cholesky() {
            let step = ch.solve(&(-grad));
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
    }
    None
}

pub fn qcqp_feasibility_with(
    constraints: &[QuadraticConstraint],
    start: &DVector<f64>,
    settings: &BarrierSettings,
) -> Result<FeasibilityResult> {
    let n = start.len();
    for (index, c) in constraints.iter().enumerate() {
        if c.dim != n {
            return Err(Error::Shape(format!("constraint {index} has dimension {}, start has {n}", c.dim)));
        }
    }
    let problem = Phase1 { cons: constraints, n };
    let mut x = start.clone();
    let mut trace = Vec::new();
    let mut newton_iters = 0;

    let tol = settings.feasibility_tol;
    let finish = |status, point: DVector<f64>, trace, newton_iters| {
        let margin = problem.normalized(&point).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let status = if margin <= tol {
            FeasibilityStatus::Feasible
        } else if status == FeasibilityStatus::Feasible {
            FeasibilityStatus::NumericalFailure
        } else {
            status
        };
        Ok(FeasibilityResult { status, point, margin, objective_trace: trace, newton_iters })
    };

    let max_h = problem.normalized(&x).into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !max_h.is_finite() && !constraints.is_empty() {
        return finish(FeasibilityStatus::NumericalFailure, x, trace, newton_iters);
    }
    if max_h < 0.0 && settings.early_exit {
        return finish(FeasibilityStatus::Feasible, x, trace, newton_iters);
    }
    let mut s = (max_h + 1.0).max(-0.5);
    let m = constraints.len() as f64 + 1.0;
    // keep the initial barrier scale comparable to the starting slack
    let mut t = settings.t0 / s.abs().max(1.0);

    for _ in 0..settings.max_outer {
        // centering
        let mut centered = false;
        for _ in 0..settings.max_newton {
            let ev = problem.eval(t, &x, s);
            if !ev.f.is_finite() {
                return finish(FeasibilityStatus::NumericalFailure, x, trace, newton_iters);
            }
            let Some(step) = solve_newton(ev.hess, &ev.grad) else {
                return finish(FeasibilityStatus::NumericalFailure, x, trace, newton_iters);
            };
            newton_iters += 1;
            let slope = ev.grad.dot(&step);
            if -slope / 2.0 <= settings.newton_tol {
                centered = true;
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..settings.max_backtrack {
                let xn = &x + step.rows(0, n) * alpha;
                let sn = s + step[n] * alpha;
                if let Some(fn_) = problem.value(t, &xn, sn) {
                    if fn_ <= ev.f + 0.25 * alpha * slope {
                        x = xn;
                        s = sn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            if settings.early_exit {
                let mh = problem.normalized(&x).into_iter().fold(f64::NEG_INFINITY, f64::max);
                if mh < 0.0 {
                    trace.push(s);
                    return finish(FeasibilityStatus::Feasible, x, trace, newton_iters);
                }
            }
        }
        trace.push(s);
        log::trace!("barrier t = {t:e} s = {s:e} newton = {newton_iters}");
        if !centered {
            // backtracking or the Newton budget ran out before centering
            let status = if s <= tol { FeasibilityStatus::Feasible } else { FeasibilityStatus::NumericalFailure };
            return finish(status, x, trace, newton_iters);
        }
        // lower bound on the phase-I optimum at a centered point
        if s - m / t > tol {
            return finish(FeasibilityStatus::Infeasible, x, trace, newton_iters);
        }
        if m / t < settings.gap_tol {
            let status = if s <= tol { FeasibilityStatus::Feasible } else { FeasibilityStatus::Infeasible };
            return finish(status, x, trace, newton_iters);
        }
        t *= settings.mu;
    }
    finish(FeasibilityStatus::NumericalFailure, x, trace, newton_iters)
}

/// Outcome of one bisection probe.
#[derive(Clone, Debug)]
pub enum Probe<T> {
    Feasible(T),
    Infeasible,
    Failed,
}

#[derive(Clone, Debug)]
pub struct BisectionOutcome<T> {
    /// Largest level certified feasible.
    pub value: f64,
    pub witness: Option<T>,
    /// Smallest level found infeasible (or the initial upper bound).
    pub upper: f64,
    pub iterations: usize,
    /// Probes that failed numerically; they count as infeasible.
    pub failures: usize,
    /// The lower end was infeasible while the upper end was feasible.
    pub non_monotone: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct BisectionSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-4, abs_tol: 1e-9, max_iter: 200 }
    }
}

/// Bisection on `[lo, hi]` for the largest feasible level, assuming
/// feasibility is monotone (decreasing) in the level. `lo` is taken as
/// feasible when `lo_witness` is given; otherwise it is probed first.
pub fn bisection<T>(
    lo: f64,
    hi: f64,
    settings: &BisectionSettings,
    lo_witness: Option<T>,
    mut probe: impl FnMut(f64) -> Probe<T>,
) -> BisectionOutcome<T> {
    let mut out = BisectionOutcome { value: lo, witness: lo_witness, upper: hi.max(lo), iterations: 0, failures: 0, non_monotone: false };
    if out.witness.is_none() {
        out.iterations += 1;
        match probe(lo) {
            Probe::Feasible(w) => out.witness = Some(w),
            other => {
                if matches!(other, Probe::Failed) {
                    out.failures += 1;
                }
                if hi > lo {
                    out.iterations += 1;
                    out.non_monotone = matches!(probe(hi), Probe::Feasible(_));
                }
                out.upper = lo;
                return out;
            }
        }
    }
    let mut lo = lo;
    let mut hi = out.upper;
    while hi - lo > settings.rel_tol * lo.abs().max(settings.abs_tol) && out.iterations < settings.max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        out.iterations += 1;
        match probe(mid) {
            Probe::Feasible(w) => {
                lo = mid;
                out.witness = Some(w);
            }
            Probe::Infeasible => hi = mid,
            Probe::Failed => {
                out.failures += 1;
                hi = mid;
            }
        }
    }
    out.value = lo;
    out.upper = hi;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball(center: &[f64], radius: f64) -> QuadraticConstraint {
        let n = center.len();
        let c = DVector::from_iterator(n, center.iter().map(|v| -2.0 * v));
        let d: f64 = center.iter().map(|v| v * v).sum();
        QuadraticConstraint::from_dense(&DMatrix::identity(n, n), &c, d, radius * radius).unwrap()
    }

    fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose()
    }

    #[test]
    fn single_ball_is_feasible() {
        let r = qcqp_feasibility(&[ball(&[3.0, -1.0], 0.5)], &DVector::zeros(2)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert!(r.margin <= 0.0);
        let p = &r.point;
        assert!((p[0] - 3.0).powi(2) + (p[1] + 1.0).powi(2) <= 0.25);
    }

    #[test]
    fn disjoint_balls_are_infeasible() {
        let cons = [ball(&[0.0, 0.0], 1.0), ball(&[3.0, 0.0], 1.0)];
        let r = qcqp_feasibility(&cons, &DVector::zeros(2)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
    }

    #[test]
    fn tangent_balls_are_marginal() {
        // touching at one point: phase-I optimum is zero
        let cons = [ball(&[0.0, 0.0], 1.0), ball(&[2.0, 0.0], 1.0)];
        let settings = BarrierSettings { early_exit: false, ..Default::default() };
        let r = qcqp_feasibility_with(&cons, &DVector::zeros(2), &settings).unwrap();
        assert!(r.margin.abs() < 1e-6, "{}", r.margin);
        assert_eq!(r.status, FeasibilityStatus::Feasible);
    }

    #[test]
    fn linear_infeasible_pair() {
        let a = QuadraticConstraint::linear(1, vec![0], DVector::from_element(1, 1.0), 0.0, 1.0).unwrap();
        let b = QuadraticConstraint::linear(1, vec![0], DVector::from_element(1, -1.0), 0.0, -2.0).unwrap();
        let r = qcqp_feasibility(&[a.clone(), b], &DVector::zeros(1)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
        let c = QuadraticConstraint::linear(1, vec![0], DVector::from_element(1, -1.0), 0.0, -0.5).unwrap();
        let r = qcqp_feasibility(&[a, c], &DVector::zeros(1)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert!(r.point[0] > 0.5 && r.point[0] < 1.0);
    }

    #[test]
    fn interval_intersections() {
        let sq = QuadraticConstraint::from_dense(&DMatrix::identity(1, 1), &DVector::zeros(1), 0.0, 1.0).unwrap();
        let lower = |b: f64| QuadraticConstraint::linear(1, vec![0], DVector::from_element(1, -1.0), 0.0, -b).unwrap();
        let r = qcqp_feasibility(&[sq.clone(), lower(0.5)], &DVector::zeros(1)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert!(r.point[0] >= 0.5 && r.point[0] <= 1.0);
        let r = qcqp_feasibility(&[sq, lower(2.0)], &DVector::zeros(1)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
        assert!(r.margin > 0.0);
    }

    #[test]
    fn non_psd_is_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let e = QuadraticConstraint::from_dense(&q, &DVector::zeros(2), 0.0, 1.0).unwrap_err();
        assert!(matches!(e, Error::NonConvex { .. }));
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let cons = [ball(&[0.0, 0.0], 1.0), ball(&[1.5, 0.0], 1.0), ball(&[0.75, 1.0], 0.9)];
        let settings = BarrierSettings { early_exit: false, ..Default::default() };
        let r = qcqp_feasibility_with(&cons, &DVector::from_element(2, 5.0), &settings).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        for w in r.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn sum_of_squares_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<DVector<f64>> = (0..3).map(|_| DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0))).collect();
        let lin = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let c = QuadraticConstraint::sum_of_squares(6, vec![0, 2, 3, 5], &rows, lin.clone(), 0.3, 1.0).unwrap();
        for _ in 0..20 {
            let x = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let xl = DVector::from_vec(vec![x[0], x[2], x[3], x[5]]);
            let direct: f64 = rows.iter().map(|r| r.dot(&xl).powi(2)).sum::<f64>() + lin.dot(&xl) + 0.3;
            assert!((c.value(&x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_random_qcqps() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..50 {
            let n = rng.random_range(2..=40);
            let m = rng.random_range(1..=20);
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            // bounded like every power-constrained problem
            let mut cons = vec![ball(&vec![0.0; n], 2.0 * (n as f64).sqrt())];
            for _ in 0..m {
                let q = random_psd(n, rng.random_range(1..=n.min(6)), &mut rng);
                let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let g0 = x0.dot(&(&q * &x0)) + c.dot(&x0);
                let margin = rng.random_range(0.01..1.0);
                cons.push(QuadraticConstraint::from_dense(&q, &c, 0.0, g0 + margin).unwrap());
            }
            let r = qcqp_feasibility(&cons, &DVector::from_element(n, 3.0)).unwrap();
            assert_eq!(r.status, FeasibilityStatus::Feasible, "trial {trial}");
            for c in &cons {
                assert!(c.violation(&r.point) <= 1e-6 * c.rhs().abs().max(1.0));
            }
            // x_0 <= -1e3 lies outside the bounding ball
            let far = QuadraticConstraint::linear(n, vec![0], DVector::from_element(1, 1.0), 0.0, -1e3).unwrap();
            let mut bad = cons.clone();
            bad.push(far);
            let r = qcqp_feasibility(&bad, &x0).unwrap();
            assert_eq!(r.status, FeasibilityStatus::Infeasible, "trial {trial}");
        }
    }

    #[test]
    fn bisection_finds_threshold() {
        let out = bisection(0.0, 10.0, &BisectionSettings::default(), None, |g| {
            if g <= 3.7 { Probe::Feasible(g) } else { Probe::Infeasible }
        });
        assert!((out.value - 3.7).abs() < 1e-3);
        assert!(out.upper >= 3.7 && out.value <= 3.7);
        assert_eq!(out.witness, Some(out.value));
    }

    #[test]
    fn bisection_threshold_at_bounds() {
        let s = BisectionSettings::default();
        let all = bisection(1.0, 5.0, &s, None, |g| Probe::Feasible(g));
        assert!((all.value - 5.0).abs() < 1e-3);
        let none = bisection(1.0, 5.0, &s, None, |_| Probe::<f64>::Infeasible);
        assert!(none.witness.is_none());
        assert_eq!(none.value, 1.0);
        assert!(!none.non_monotone);
        let mut calls = 0;
        let same = bisection(2.0, 2.0, &s, None, |g| {
            calls += 1;
            Probe::Feasible(g)
        });
        assert_eq!((same.value, calls), (2.0, 1));
    }

    #[test]
    fn bisection_flags_non_monotone_oracle() {
        let out = bisection(1.0, 5.0, &BisectionSettings::default(), None, |g| {
            if g > 4.0 { Probe::Feasible(g) } else { Probe::Infeasible }
        });
        assert!(out.non_monotone);
        assert!(out.witness.is_none());
    }

    #[test]
    fn bisection_bracket_halves() {
        let mut probes = Vec::new();
        let s = BisectionSettings { rel_tol: 1e-6, abs_tol: 1e-6, max_iter: 200 };
        let out = bisection(0.0, 10.0, &s, Some(0.0), |g| {
            probes.push(g);
            if g <= 5.0 { Probe::Feasible(g) } else { Probe::Infeasible }
        });
        assert!((out.value - 5.0).abs() <= 5e-6);
        // distance between consecutive probes halves exactly
        for w in probes.windows(3) {
            let (a, b) = ((w[1] - w[0]).abs(), (w[2] - w[1]).abs());
            assert!((a / b - 2.0).abs() < 1e-9);
        }
        let bound = ((10.0f64) / (1e-6 * 5.0)).log2().ceil() as usize + 2;
        assert!(out.iterations <= bound);
    }

    #[test]
    fn bisection_counts_failures_as_infeasible() {
        let out = bisection(0.0, 8.0, &BisectionSettings::default(), Some(0.0), |g| {
            if g < 2.0 {
                Probe::Feasible(g)
            } else if g < 5.0 {
                Probe::Failed
            } else {
                Probe::Infeasible
            }
        });
        assert!(out.failures > 0);
        assert!(out.value < 2.0 && out.value > 1.99);
    }
}
