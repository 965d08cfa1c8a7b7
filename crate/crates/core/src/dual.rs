//! Gauge dual of the trace-minimization problem.
//!
//! ```text
//! minimize  lambda_1(A^* y)   subject to  <b, y> - eps ||y||_2 >= 1
//! ```
//!
//! This module evaluates the objective and its subgradients, projects onto
//! the feasible set, and takes projected subgradient steps.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};

use crate::eig::{generalized_rightmost, rightmost_eigpairs_from, EigRequest, EigResult, WeightFactor};
use crate::error::{check_dim, GaugeError, Result};
use crate::linalg::{psd_sqrt, CMat, CVec, RVec, C64};
use crate::operator::MeasurementMap;

/// Data of the dual problem: measurements `b`, residual tolerance `eps`, and
/// an optional positive definite weight `C` on the primal objective
/// `<C, X>`.
#[derive(Clone)]
pub struct DualProblem {
    pub map: Arc<dyn MeasurementMap>,
    pub b: RVec,
    pub eps: f64,
    pub weight: Option<Arc<dyn WeightFactor>>,
}

impl std::fmt::Debug for DualProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DualProblem")
            .field("n", &self.map.n())
            .field("m", &self.map.m())
            .field("eps", &self.eps)
            .field("weighted", &self.weight.is_some())
            .finish()
    }
}

impl DualProblem {
    pub fn new(map: Arc<dyn MeasurementMap>, b: RVec, eps: f64) -> Result<Self> {
        check_dim("measurement vector", map.m(), b.len())?;
        if !(eps >= 0.0) || eps >= b.norm() {
            return Err(GaugeError::Contract(format!(
                "need 0 <= eps < ||b|| (eps = {eps}, ||b|| = {})",
                b.norm()
            )));
        }
        Ok(Self {
            map,
            b,
            eps,
            weight: None,
        })
    }

    pub fn with_weight(mut self, weight: Arc<dyn WeightFactor>) -> Result<Self> {
        check_dim("weight dimension", self.map.n(), weight.n())?;
        self.weight = Some(weight);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.map.n()
    }

    pub fn m(&self) -> usize {
        self.map.m()
    }

    /// `<b, y> - eps ||y||`.
    pub fn constraint_value(&self, y: &RVec) -> f64 {
        constraint_value(&self.b, self.eps, y)
    }

    pub fn is_feasible(&self, y: &RVec) -> bool {
        self.constraint_value(y) >= 1.0 - 1e-12
    }

    /// Feasible starting point `b / (||b|| (||b|| - eps))` on the boundary.
    pub fn initial_point(&self) -> RVec {
        let nb = self.b.norm();
        &self.b / (nb * (nb - self.eps))
    }

    /// `b_eps = b - eps y / ||y||`, the measurement target for primal recovery.
    pub fn shifted_target(&self, y: &RVec) -> RVec {
        let ny = y.norm();
        if self.eps == 0.0 || ny == 0.0 {
            self.b.clone()
        } else {
            &self.b - y * (self.eps / ny)
        }
    }

    /// Primal objective: `trace(Z Z^*)`, or `<C, Z Z^*>` with a weight.
    pub fn primal_objective(&self, z: &CMat) -> f64 {
        match &self.weight {
            None => z.norm_squared(),
            Some(w) => (0..z.ncols())
                .map(|j| {
                    let col = z.column(j).into_owned();
                    col.dotc(&w.apply_c(&col)).re
                })
                .sum(),
        }
    }
}

pub fn constraint_value(b: &RVec, eps: f64, y: &RVec) -> f64 {
    b.dot(y) - eps * y.norm()
}

/// `f(y) = lambda_1(A^* y)` (or `lambda_1(A^* y, C)` with a weight) and the
/// eigenpairs behind it. For weighted problems the returned vectors are the
/// generalized eigenvectors, normalized so `u^* C u = 1`.
pub fn dual_objective(prob: &DualProblem, y: &RVec, req: &EigRequest, start: Option<&CVec>) -> Result<(f64, EigResult)> {
    check_dim("dual vector", prob.m(), y.len())?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(GaugeError::NonFinite("dual vector"));
    }
    let map = &prob.map;
    let apply = |v: &CVec| map.apply_adjoint(y, v);
    let eig = match &prob.weight {
        None => rightmost_eigpairs_from(apply, prob.n(), req, start)?,
        Some(w) => {
            let g = generalized_rightmost(apply, w.as_ref(), req, start)?;
            let mut eig = g.reduced;
            eig.vectors = g.vectors;
            eig
        }
    };
    Ok((eig.values[0], eig))
}

/// Choice of the trace-one PSD matrix `T` in `A(U_1 T U_1^*)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubgradientChoice {
    /// `T = e_1 e_1^T`: only the leading eigenvector.
    #[default]
    Leading,
    /// `T = I / r_1`.
    Average,
}

/// Subgradient `A(U_1 T U_1^*)` for an explicit trace-one PSD `T`.
pub fn subgradient(prob: &DualProblem, eig: &EigResult, t: &CMat) -> Result<RVec> {
    let r1 = eig.r1;
    if t.nrows() != r1 || t.ncols() != r1 {
        return Err(GaugeError::Contract(format!("T must be {r1}x{r1}")));
    }
    let tr: f64 = t.diagonal().iter().map(|c| c.re).sum();
    if (tr - 1.0).abs() > 1e-12 {
        return Err(GaugeError::Contract(format!("T must have unit trace, got {tr}")));
    }
    let factor = eig.top(r1) * psd_sqrt(t);
    prob.map.forward_factored(&factor)
}

pub fn subgradient_with(prob: &DualProblem, eig: &EigResult, choice: SubgradientChoice) -> Result<RVec> {
    match choice {
        SubgradientChoice::Leading => prob.map.forward_factored(&eig.top(1)),
        SubgradientChoice::Average => {
            let r1 = eig.r1;
            let factor = eig.top(r1) / C64::from((r1 as f64).sqrt());
            prob.map.forward_factored(&factor)
        }
    }
}

/// Euclidean projection onto `{y : <b, y> - eps ||y|| >= 1}`.
///
/// For `eps = 0` the set is a halfspace. Otherwise the multiplier `mu` of the
/// active constraint is a root of a quartic obtained from the optimality
/// conditions; roots come from a companion matrix, with bisection on the
/// multiplier as a fallback.
pub fn project_feasible(b: &RVec, eps: f64, y: &RVec) -> RVec {
    if constraint_value(b, eps, y) >= 1.0 {
        return y.clone();
    }
    let bb = b.norm_squared();
    if eps == 0.0 {
        return y + b * ((1.0 - b.dot(y)) / bb);
    }
    let candidate = quartic_projection(b, eps, y).or_else(|| bisection_projection(b, eps, y));
    let z = candidate.unwrap_or_else(|| b / (b.norm() * (b.norm() - eps)));
    // lift onto the set by positive homogeneity if roundoff left it short
    let c = constraint_value(b, eps, &z);
    if c < 1.0 && c > 0.0 {
        z / c
    } else {
        z
    }
}

fn point_for_multiplier(b: &RVec, eps: f64, y: &RVec, mu: f64) -> Option<RVec> {
    let w = y + b * mu;
    let r = w.norm();
    let t = r - mu * eps;
    if r > 0.0 && t > 0.0 {
        Some(w * (t / r))
    } else {
        None
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, z) in b.iter().enumerate() {
            out[i + j] += x * z;
        }
    }
    out
}

fn poly_eval(c: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &coef in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + coef;
    }
    (p, dp)
}

fn quartic_projection(b: &RVec, eps: f64, y: &RVec) -> Option<RVec> {
    let bb = b.norm_squared();
    let by = b.dot(y);
    let yy = y.norm_squared();
    let e2 = eps * eps;
    // coefficients in ascending powers of mu
    let q = [yy, 2.0 * by, bb];
    let a = [by - 1.0, bb + e2];
    let s = [yy, 3.0 * by, 2.0 * bb];
    let lhs = poly_mul(&q, &poly_mul(&a, &a));
    let rhs = poly_mul(&s, &s);
    let p: Vec<f64> = lhs.iter().zip(rhs.iter()).map(|(l, r)| l - e2 * r).collect();
    let lead = p[4];
    if !(lead.abs() > 0.0) || !lead.is_finite() {
        return None;
    }
    let mut comp = Matrix4::<f64>::zeros();
    for i in 1..4 {
        comp[(i, i - 1)] = 1.0;
    }
    let tail = Vector4::new(p[0], p[1], p[2], p[3]) / lead;
    for i in 0..4 {
        comp[(i, 3)] = -tail[i];
    }
    let roots = comp.complex_eigenvalues();

    let mut best: Option<(f64, RVec)> = None;
    for root in roots.iter() {
        if root.im.abs() > 1e-6 * (1.0 + root.re.abs()) || root.re < 0.0 {
            continue;
        }
        let mut mu = root.re;
        for _ in 0..8 {
            let (f, df) = poly_eval(&p, mu);
            if df == 0.0 {
                break;
            }
            let next = mu - f / df;
            if !next.is_finite() || next < 0.0 {
                break;
            }
            mu = next;
        }
        let Some(z) = point_for_multiplier(b, eps, y, mu) else {
            continue;
        };
        let c = constraint_value(b, eps, &z);
        if (c - 1.0).abs() > 1e-6 {
            continue;
        }
        let dist = (&z - y).norm();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, z));
        }
    }
    best.map(|(_, z)| z)
}

fn bisection_projection(b: &RVec, eps: f64, y: &RVec) -> Option<RVec> {
    let gap = |mu: f64| point_for_multiplier(b, eps, y, mu).map(|z| constraint_value(b, eps, &z) - 1.0);
    let mut hi = 1.0 / b.norm_squared();
    let mut tries = 0;
    while gap(hi).is_none_or(|g| g < 0.0) {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match gap(mid) {
            Some(g) if g >= 0.0 => hi = mid,
            _ => lo = mid,
        }
    }
    point_for_multiplier(b, eps, y, hi)
}

/// Duality-gap measure `trace(X) lambda_1(A^* y) - 1`, nonnegative for
/// feasible pairs and zero at optimality.
pub fn weak_duality_gap(primal_objective: f64, lambda1: f64) -> f64 {
    primal_objective * lambda1 - 1.0
}

/// Default threshold on `lambda_1` for declaring the primal infeasible.
pub const CERTIFICATE_TOL: f64 = 1e-10;

/// A dual-feasible `y` with `lambda_1(A^* y) <= 0` proves that no PSD `X`
/// satisfies the residual constraint.
pub fn infeasibility_certificate(f: f64, tol: f64) -> bool {
    f <= tol
}

/// Step-size policy for the projected subgradient iteration.
#[derive(Clone, Debug)]
pub struct StepRule {
    /// Use Barzilai-Borwein steps with a nonmonotone linesearch while the top
    /// eigenvalue is simple.
    pub spectral: bool,
    pub memory: usize,
    pub sufficient_decrease: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub subgradient: SubgradientChoice,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            spectral: true,
            memory: 10,
            sufficient_decrease: 1e-4,
            backtrack: 0.5,
            max_backtracks: 12,
            subgradient: SubgradientChoice::Leading,
        }
    }
}

/// Iterate of the dual method with the state its step rules need.
#[derive(Clone, Debug)]
pub struct DualState {
    pub y: RVec,
    pub f: f64,
    pub eig: EigResult,
    pub g: RVec,
    pub k: usize,
    /// Reference scale of the diminishing schedule `alpha0 / k`.
    pub alpha0: f64,
    prev: Option<(RVec, RVec)>,
    history: VecDeque<f64>,
    pub best_y: RVec,
    pub best_f: f64,
    /// Iterations at which the top eigenvalue was detected as multiple.
    pub multiple_hits: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub alpha: f64,
    pub spectral: bool,
    pub backtracks: usize,
}

impl DualState {
    pub fn new(prob: &DualProblem, y: RVec, req: &EigRequest, rule: &StepRule) -> Result<Self> {
        let y = project_feasible(&prob.b, prob.eps, &y);
        let (f, eig) = dual_objective(prob, &y, req, None)?;
        let g = subgradient_with(prob, &eig, rule.subgradient)?;
        let gn = g.norm();
        let alpha0 = if gn > 0.0 { y.norm().max(f64::MIN_POSITIVE) / gn } else { 1.0 };
        let mut history = VecDeque::with_capacity(rule.memory);
        history.push_back(f);
        Ok(Self {
            best_y: y.clone(),
            best_f: f,
            y,
            f,
            eig,
            g,
            k: 0,
            alpha0,
            prev: None,
            history,
            multiple_hits: 0,
        })
    }

    /// Move to a new point whose objective and eigenpairs are already known,
    /// discarding the spectral step memory.
    pub fn reset_at(&mut self, prob: &DualProblem, y: RVec, f: f64, eig: EigResult, rule: &StepRule) -> Result<()> {
        self.g = subgradient_with(prob, &eig, rule.subgradient)?;
        self.y = y;
        self.f = f;
        self.eig = eig;
        self.prev = None;
        self.history.clear();
        self.history.push_back(f);
        self.record_best();
        Ok(())
    }

    fn record_best(&mut self) {
        if self.f < self.best_f {
            self.best_f = self.f;
            self.best_y = self.y.clone();
        }
    }

    fn bb_step(&self) -> f64 {
        if let Some((yp, gp)) = &self.prev {
            let s = &self.y - yp;
            let d = &self.g - gp;
            let sd = s.dot(&d);
            let ss = s.norm_squared();
            if sd > 0.0 && ss > 0.0 {
                return (ss / sd).clamp(1e-10 * self.alpha0, 1e10 * self.alpha0);
            }
        }
        self.alpha0
    }
}

/// One projected subgradient update `y+ = P(y - alpha g)`.
pub fn descend_step(prob: &DualProblem, state: &mut DualState, rule: &StepRule, req: &EigRequest) -> Result<StepInfo> {
    state.k += 1;
    let start = state.eig.vectors.column(0).into_owned();
    let spectral = rule.spectral && state.eig.isolated();
    if !state.eig.isolated() {
        state.multiple_hits += 1;
    }

    let (alpha, y_new, f_new, eig_new, backtracks) = if spectral {
        let f_ref = state.history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha = state.bb_step();
        let mut tries = 0;
        loop {
            let trial = project_feasible(&prob.b, prob.eps, &(&state.y - &state.g * alpha));
            let (f, eig) = dual_objective(prob, &trial, req, Some(&start))?;
            let decrease = state.g.dot(&(&state.y - &trial));
            if f <= f_ref - rule.sufficient_decrease * decrease || tries >= rule.max_backtracks {
                break (alpha, trial, f, eig, tries);
            }
            alpha *= rule.backtrack;
            tries += 1;
        }
    } else {
        let alpha = state.alpha0 / state.k as f64;
        let trial = project_feasible(&prob.b, prob.eps, &(&state.y - &state.g * alpha));
        let (f, eig) = dual_objective(prob, &trial, req, Some(&start))?;
        (alpha, trial, f, eig, 0)
    };

    if !f_new.is_finite() {
        return Err(GaugeError::NonFinite("dual objective"));
    }
    let g_new = subgradient_with(prob, &eig_new, rule.subgradient)?;
    let y_old = std::mem::replace(&mut state.y, y_new);
    let g_old = std::mem::replace(&mut state.g, g_new);
    state.prev = Some((y_old, g_old));
    state.f = f_new;
    state.eig = eig_new;
    if state.history.len() == rule.memory.max(1) {
        state.history.pop_front();
    }
    state.history.push_back(f_new);
    state.record_best();
    Ok(StepInfo {
        alpha,
        spectral,
        backtracks,
    })
}
