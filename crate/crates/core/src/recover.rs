//! Primal recovery, refinement, and the top-level solve loop.
//!
//! Each outer iteration takes a projected subgradient step on the dual,
//! recovers a primal factor from the leading eigenvectors of `A^* y`, polishes
//! it with a smooth nonconvex least-squares refinement, and then refines the
//! dual against that factor. A refined dual point is accepted as a spacer
//! iterate only when it strictly lowers the dual objective.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dual::{
    descend_step, dual_objective, infeasibility_certificate, project_feasible, weak_duality_gap, DualProblem, DualState,
    StepRule, CERTIFICATE_TOL,
};
use crate::eig::{rightmost_eigpairs, EigRequest, EigResult};
use crate::error::{GaugeError, Result};
use crate::linalg::{frob2, hermitian_eig_desc, psd_project, psd_sqrt, CMat, CVec, RVec, C64};
use crate::operator::{MeasurementMap, OpCounts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Recovered,
    Refined,
}

/// Low-rank primal iterate `X = Z Z^*`.
#[derive(Clone, Debug)]
pub struct PrimalFactor {
    pub z: CMat,
    /// Coefficient matrix from recovery, `X = U_1 S U_1^*`.
    pub s: Option<CMat>,
    pub origin: Origin,
}

impl PrimalFactor {
    pub fn new(z: CMat, origin: Origin) -> Self {
        Self { z, s: None, origin }
    }

    pub fn trace(&self) -> f64 {
        frob2(&self.z)
    }

    pub fn rank(&self) -> usize {
        self.z.ncols()
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub factor: PrimalFactor,
    /// `||A(X) - b_eps||`.
    pub residual: f64,
    /// Rank-one coefficient when a single eigenvector is used.
    pub s_scalar: Option<f64>,
    /// `A(u_1 u_1^*)` vanished.
    pub degenerate: bool,
}

/// Least-squares recovery `min_{S >= 0} ||A(U S U^*) - b_eps||` over the
/// leading `rank` eigenvectors of `eig`.
pub fn recover_s(prob: &DualProblem, eig: &EigResult, y: &RVec, rank: usize) -> Result<RecoveryResult> {
    if y.norm() == 0.0 {
        return Err(GaugeError::Contract("recovery needs a nonzero dual vector".into()));
    }
    let b_eps = prob.shifted_target(y);
    let r = rank.clamp(1, eig.vectors.ncols());
    let u = eig.top(r);
    let map = prob.map.as_ref();

    if r == 1 {
        let a = map.forward_factored(&u)?;
        let aa = a.norm_squared();
        let (s, degenerate) = if aa > 0.0 { ((a.dot(&b_eps)).max(0.0) / aa, false) } else { (0.0, true) };
        let residual = (&a * s - &b_eps).norm();
        let z = &u * C64::from(s.sqrt());
        return Ok(RecoveryResult {
            factor: PrimalFactor {
                z,
                s: Some(CMat::from_element(1, 1, C64::from(s))),
                origin: Origin::Recovered,
            },
            residual,
            s_scalar: Some(s),
            degenerate,
        });
    }

    let (basis, cols) = hermitian_basis_images(map, &u)?;
    let coeffs = psd_least_squares(&basis, &cols, &b_eps, r);
    let s = assemble_hermitian(&basis, &coeffs, r);
    let fitted = cols.iter().zip(coeffs.iter()).fold(RVec::zeros(b_eps.len()), |acc, (c, &w)| acc + c * w);
    let residual = (fitted - &b_eps).norm();
    let z = &u * psd_sqrt(&s);
    Ok(RecoveryResult {
        factor: PrimalFactor {
            z,
            s: Some(s),
            origin: Origin::Recovered,
        },
        residual,
        s_scalar: None,
        degenerate: false,
    })
}

/// Orthonormal real basis of `r x r` Hermitian matrices.
fn hermitian_basis(r: usize) -> Vec<CMat> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(r * r);
    for i in 0..r {
        let mut e = CMat::zeros(r, r);
        e[(i, i)] = C64::from(1.0);
        out.push(e);
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let mut e = CMat::zeros(r, r);
            e[(i, j)] = C64::from(h);
            e[(j, i)] = C64::from(h);
            out.push(e);
            let mut e = CMat::zeros(r, r);
            e[(i, j)] = C64::new(0.0, h);
            e[(j, i)] = C64::new(0.0, -h);
            out.push(e);
        }
    }
    out
}

/// Images `A(U E_p U^*)` of the Hermitian basis.
fn hermitian_basis_images(map: &dyn MeasurementMap, u: &CMat) -> Result<(Vec<CMat>, Vec<RVec>)> {
    let r = u.ncols();
    let basis = hermitian_basis(r);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut cols = Vec::with_capacity(basis.len());
    for i in 0..r {
        cols.push(map.forward_factored(&u.columns(i, 1).into_owned())?);
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let ui = u.columns(i, 1).into_owned();
            let uj = u.columns(j, 1).into_owned();
            cols.push(map.forward_sym(&ui, &uj)? * sqrt2);
            cols.push(map.forward_sym(&(&ui * C64::i()), &uj)? * sqrt2);
        }
    }
    Ok((basis, cols))
}

fn assemble_hermitian(basis: &[CMat], coeffs: &[f64], r: usize) -> CMat {
    basis.iter().zip(coeffs.iter()).fold(CMat::zeros(r, r), |acc, (e, &w)| acc + e * C64::from(w))
}

fn hermitian_coeffs(basis: &[CMat], s: &CMat) -> Vec<f64> {
    basis
        .iter()
        .map(|e| e.iter().zip(s.iter()).map(|(a, b)| (a.conj() * b).re).sum())
        .collect()
}

/// Accelerated projected gradient for `min ||sum_p w_p c_p - target||` over
/// coefficient vectors whose Hermitian matrix is PSD.
fn psd_least_squares(basis: &[CMat], cols: &[RVec], target: &RVec, r: usize) -> Vec<f64> {
    let d = cols.len();
    let gram = nalgebra::DMatrix::from_fn(d, d, |i, j| cols[i].dot(&cols[j]));
    let rhs = nalgebra::DVector::from_fn(d, |i, _| cols[i].dot(target));
    let lmax = gram.clone().symmetric_eigen().eigenvalues.amax();
    if lmax <= 0.0 {
        return vec![0.0; d];
    }
    let step = 1.0 / lmax;
    let project = |w: &nalgebra::DVector<f64>| -> nalgebra::DVector<f64> {
        let s = assemble_hermitian(basis, w.as_slice(), r);
        nalgebra::DVector::from_vec(hermitian_coeffs(basis, &psd_project(&s)))
    };
    let mut x = nalgebra::DVector::zeros(d);
    let mut v = x.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let grad = &gram * &v - &rhs;
        let next = project(&(&v - grad * step));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let change = (&next - &x).norm();
        v = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
        if change <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    x.as_slice().to_vec()
}

/// Options for the smooth primal refinement.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    pub max_iter: usize,
    /// Relative gradient tolerance, `||grad|| <= tol_grad max(1, ||grad_0||)`.
    pub tol_grad: f64,
    /// Stop as soon as the residual falls below this absolute value.
    pub tol_residual: f64,
    pub memory: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol_grad: 1e-9,
            tol_residual: 0.0,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub factor: PrimalFactor,
    /// `A(Z Z^*)` at the returned factor.
    pub measurements: RVec,
    /// `||A(Z Z^*) - b_eps||`.
    pub residual: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// The linesearch failed before reaching the tolerance.
    pub stalled: bool,
}

/// `h(Z) = 1/4 ||A(Z Z^*) - target||^2` and its gradient `A^*(A(Z Z^*) - target) Z`.
pub fn primal_objective_grad(map: &dyn MeasurementMap, z: &CMat, target: &RVec) -> Result<(f64, CMat, RVec)> {
    let meas = map.forward_factored(z)?;
    let r = &meas - target;
    let grad = map.adjoint_apply_cols(&r, z)?;
    Ok((0.25 * r.norm_squared(), grad, meas))
}

fn real_dot(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Spectral projected-gradient descent on `h` starting from `z0`.
pub fn refine_primal(prob: &DualProblem, z0: &PrimalFactor, target: &RVec, opts: &RefineOptions) -> Result<RefineResult> {
    if frob2(&z0.z) == 0.0 {
        return Err(GaugeError::Contract("refinement needs a nonzero starting factor".into()));
    }
    let map = prob.map.as_ref();
    let (h0, grad0, meas0) = primal_objective_grad(map, &z0.z, target)?;
    let (mut z, mut h, mut grad, mut meas) = (z0.z.clone(), h0, grad0.clone(), meas0.clone());
    let g0 = grad.norm();
    let stop = opts.tol_grad * g0.max(1.0);
    let mut history = std::collections::VecDeque::with_capacity(opts.memory.max(1));
    history.push_back(h);
    let mut alpha = z.norm() / g0.max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    let mut stalled = false;

    while iterations < opts.max_iter {
        let gn = grad.norm();
        if gn <= stop || 2.0 * h.sqrt() <= opts.tol_residual {
            break;
        }
        let h_ref = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let g2 = gn * gn;
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &z - &grad * C64::from(step);
            let (ht, gt, mt) = primal_objective_grad(map, &trial, target)?;
            if ht.is_finite() && ht <= h_ref - 1e-4 * step * g2 {
                accepted = Some((trial, ht, gt, mt));
                break;
            }
            step *= 0.5;
        }
        let Some((z_new, h_new, g_new, m_new)) = accepted else {
            stalled = true;
            break;
        };
        let s = &z_new - &z;
        let dg = &g_new - &grad;
        let sd = real_dot(&s, &dg);
        alpha = if sd > 0.0 { frob2(&s) / sd } else { step * 2.0 };
        z = z_new;
        grad = g_new;
        meas = m_new;
        if history.len() == opts.memory.max(1) {
            history.pop_front();
        }
        history.push_back(h_new);
        h = h_new;
        iterations += 1;
    }

    // the nonmonotone search may end above the start; keep the better factor
    if h > h0 {
        z = z0.z.clone();
        h = h0;
        grad = grad0;
        meas = meas0;
    }
    Ok(RefineResult {
        factor: PrimalFactor::new(z, Origin::Refined),
        measurements: meas,
        residual: 2.0 * h.sqrt(),
        grad_norm: grad.norm(),
        iterations,
        stalled,
    })
}

/// Options for the dual refinement.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DualRefineOptions {
    pub max_iter: usize,
    /// Relative tolerance on the least-squares residual `||(A^* y) Z - lambda Z||`.
    pub tol: f64,
    pub memory: usize,
}

impl Default for DualRefineOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-12,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DualRefineResult {
    pub y: RVec,
    /// `lambda_1(A^* y)` at the returned point.
    pub f: f64,
    pub eig: EigResult,
    /// Least-squares objective `1/2 ||(A^* y) Z - lambda Z||^2` at the start and end.
    pub q_start: f64,
    pub q_end: f64,
    pub iterations: usize,
}

fn dual_ls_residual(prob: &DualProblem, y: &RVec, z: &CMat, lambda: f64) -> Result<CMat> {
    let az = prob.map.adjoint_apply_cols(y, z)?;
    let cz = match &prob.weight {
        None => z * C64::from(lambda),
        Some(w) => {
            let mut out = CMat::zeros(z.nrows(), z.ncols());
            for j in 0..z.ncols() {
                out.set_column(j, &(w.apply_c(&z.column(j).into_owned()) * C64::from(lambda)));
            }
            out
        }
    };
    Ok(az - cz)
}

/// Projected spectral gradient on `q(y) = 1/2 ||(A^* y) Z - lambda Z||^2` over
/// the dual-feasible set, with `lambda = 1 / trace(Z Z^*)`, started at
/// `y_current`. The returned objective is a fresh evaluation of
/// `lambda_1(A^* y)` with the main loop's eigensolver settings.
pub fn refine_dual(
    prob: &DualProblem,
    zhat: &PrimalFactor,
    y_current: &RVec,
    opts: &DualRefineOptions,
    req: &EigRequest,
) -> Result<DualRefineResult> {
    let trace = prob.primal_objective(&zhat.z);
    if trace <= 0.0 {
        return Err(GaugeError::Contract("dual refinement needs a nonzero factor".into()));
    }
    let lambda = 1.0 / trace;
    let z = &zhat.z;
    let map = prob.map.as_ref();
    let eval = |y: &RVec| -> Result<(f64, RVec)> {
        let r = dual_ls_residual(prob, y, z, lambda)?;
        let g = map.forward_sym(&r, z)?;
        Ok((0.5 * frob2(&r), g))
    };

    let mut y = project_feasible(&prob.b, prob.eps, y_current);
    let (mut q, mut g) = eval(&y)?;
    let q_start = q;
    let scale = 0.5 * lambda * lambda * trace;
    let mut history = std::collections::VecDeque::with_capacity(opts.memory.max(1));
    history.push_back(q);
    let mut alpha = y.norm() / g.norm().max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    while iterations < opts.max_iter && q > opts.tol * opts.tol * scale {
        let q_ref = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = project_feasible(&prob.b, prob.eps, &(&y - &g * step));
            let d = &trial - &y;
            if d.norm() <= 1e-15 * y.norm() {
                break;
            }
            let (qt, gt) = eval(&trial)?;
            if qt <= q_ref + 1e-4 * g.dot(&d) {
                accepted = Some((trial, qt, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((y_new, q_new, g_new)) = accepted else {
            break;
        };
        let s = &y_new - &y;
        let dg = &g_new - &g;
        let sd = s.dot(&dg);
        alpha = if sd > 0.0 { s.norm_squared() / sd } else { step * 2.0 };
        y = y_new;
        g = g_new;
        q = q_new;
        if history.len() == opts.memory.max(1) {
            history.pop_front();
        }
        history.push_back(q);
        iterations += 1;
    }
    if q > q_start {
        y = project_feasible(&prob.b, prob.eps, y_current);
        q = q_start;
    }
    let start = z.column(0).into_owned();
    let (f, eig) = dual_objective(prob, &y, req, Some(&start))?;
    Ok(DualRefineResult {
        y,
        f,
        eig,
        q_start,
        q_end: q,
        iterations,
    })
}

/// Rebalance `Z = [Z1; Z2]` so that `Z1 Z2^*` is unchanged and both blocks
/// carry the same singular values, which minimizes `||Z1||^2 + ||Z2||^2`.
pub fn balance_blocks(z: &CMat, split: usize) -> CMat {
    let n1 = split;
    let n2 = z.nrows() - split;
    let r = z.ncols();
    if n1 == 0 || n2 == 0 || r == 0 || r > n1.min(n2) {
        return z.clone();
    }
    let z1 = z.rows(0, n1).into_owned();
    let z2 = z.rows(n1, n2).into_owned();
    let qr1 = z1.qr();
    let qr2 = z2.qr();
    let core = qr1.r() * qr2.r().adjoint();
    let svd = core.svd(true, true);
    let (Some(p), Some(qt)) = (svd.u, svd.v_t) else {
        return z.clone();
    };
    let root = CMat::from_diagonal(&CVec::from_iterator(r, svd.singular_values.iter().map(|s| C64::from(s.sqrt()))));
    let new1 = qr1.q() * p * &root;
    let new2 = qr2.q() * qt.adjoint() * &root;
    let mut out = CMat::zeros(n1 + n2, r);
    out.rows_mut(0, n1).copy_from(&new1);
    out.rows_mut(n1, n2).copy_from(&new2);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// Full method with primal and dual refinement.
    Gauge,
    /// Stop at the first primal refinement that fits the measurements.
    GaugeFeas,
    /// Subgradient iteration with recovery only, no refinement or spacer steps.
    GaugeNodfp,
}

impl SolveMode {
    pub fn label(&self) -> &'static str {
        match self {
            SolveMode::Gauge => "gauge",
            SolveMode::GaugeFeas => "gauge-feas",
            SolveMode::GaugeNodfp => "gauge-nodfp",
        }
    }
}

impl std::str::FromStr for SolveMode {
    type Err = GaugeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauge" => Ok(SolveMode::Gauge),
            "gauge-feas" => Ok(SolveMode::GaugeFeas),
            "gauge-nodfp" => Ok(SolveMode::GaugeNodfp),
            other => Err(GaugeError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Starting point for the primal refinement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimalInit {
    /// `U_1 S^{1/2}` from the current dual iterate.
    #[default]
    Recovered,
    /// Scaled leading eigenvector of `A^* b` on the first outer iteration.
    AdjointLeading,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub mode: SolveMode,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
    pub max_rank: usize,
    pub eig: EigRequest,
    pub step: StepRule,
    pub refine: RefineOptions,
    pub dual_refine: DualRefineOptions,
    pub tol_cert: f64,
    pub primal_init: PrimalInit,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::Gauge,
            tol_feas: 1e-5,
            tol_gap: 1e-5,
            max_iter: 1000,
            max_rank: 4,
            eig: EigRequest::default(),
            step: StepRule::default(),
            refine: RefineOptions::default(),
            dual_refine: DualRefineOptions::default(),
            tol_cert: CERTIFICATE_TOL,
            primal_init: PrimalInit::Recovered,
        }
    }
}

impl SolveOptions {
    pub fn with_mode(mut self, mode: SolveMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    MaxIter,
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIter => "max-iter",
        }
    }
}

/// One line of the iteration log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationLog {
    pub k: usize,
    pub f: f64,
    pub gap: f64,
    pub feas_residual: f64,
    #[serde(rename = "nDFT")]
    pub n_dft: u64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub factor: PrimalFactor,
    pub y: RVec,
    /// `lambda_1(A^* y)` at the returned `y`.
    pub f: f64,
    /// `trace(X) f - 1` at the returned pair.
    pub gap: f64,
    /// `||A(X) - b||`.
    pub residual: f64,
    pub iterations: usize,
    pub counts: OpCounts,
    pub spacer_accepts: usize,
    /// Iterations at which the top eigenvalue was multiple.
    pub multiple_hits: usize,
    /// Lowest dual objective seen and where.
    pub best_dual: (RVec, f64),
}

struct Candidate {
    factor: PrimalFactor,
    y: RVec,
    f: f64,
    gap: f64,
    residual: f64,
    merit: f64,
}

/// Run the gauge-dual method on `prob`.
///
/// Weighted problems are reduced to unweighted ones by composing the weight
/// factor into the map; the returned factor is mapped back.
pub fn solve_gauge(
    prob: &DualProblem,
    opts: &SolveOptions,
    observer: &mut dyn FnMut(&IterationLog),
) -> Result<SolveReport> {
    if let Some(w) = &prob.weight {
        if !w.is_identity() {
            let map: Arc<dyn MeasurementMap> = Arc::new(crate::apps::weighted::WeightedMap::new(prob.map.clone(), w.clone())?);
            let inner = DualProblem::new(map, prob.b.clone(), prob.eps)?;
            let mut report = solve_unweighted(&inner, opts, observer)?;
            let mut z = CMat::zeros(report.factor.z.nrows(), report.factor.z.ncols());
            for j in 0..z.ncols() {
                z.set_column(j, &w.apply_r_inv_adj(&report.factor.z.column(j).into_owned()));
            }
            report.factor.z = z;
            return Ok(report);
        }
    }
    solve_unweighted(prob, opts, observer)
}

fn solve_unweighted(
    prob: &DualProblem,
    opts: &SolveOptions,
    observer: &mut dyn FnMut(&IterationLog),
) -> Result<SolveReport> {
    let map = prob.map.clone();
    let counts_start = map.counter().snapshot();
    let b_scale = prob.b.norm().max(1.0);
    let feas_tol = opts.tol_feas * b_scale;
    let split = map.block_split();

    let mut state = DualState::new(prob, prob.initial_point(), &opts.eig, &opts.step)?;
    let mut best: Option<Candidate> = None;
    let mut spacer_accepts = 0;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;

    let finish = |status: SolveStatus,
                  cand: Candidate,
                  iterations: usize,
                  state: &DualState,
                  spacer_accepts: usize|
     -> SolveReport {
        SolveReport {
            status,
            factor: cand.factor,
            y: cand.y,
            f: cand.f,
            gap: cand.gap,
            residual: cand.residual,
            iterations,
            counts: map.counter().snapshot() - counts_start,
            spacer_accepts,
            multiple_hits: state.multiple_hits,
            best_dual: (state.best_y.clone(), state.best_f),
        }
    };

    if infeasibility_certificate(state.f, opts.tol_cert) {
        let z = CMat::zeros(prob.n(), 1);
        let cand = Candidate {
            factor: PrimalFactor::new(z, Origin::Recovered),
            y: state.y.clone(),
            f: state.f,
            gap: -1.0,
            residual: prob.b.norm(),
            merit: f64::INFINITY,
        };
        return Ok(finish(SolveStatus::Infeasible, cand, 0, &state, 0));
    }

    for k in 1..=opts.max_iter {
        iterations = k;
        descend_step(prob, &mut state, &opts.step, &opts.eig)?;
        if infeasibility_certificate(state.f, opts.tol_cert) {
            status = SolveStatus::Infeasible;
            let cand = Candidate {
                factor: PrimalFactor::new(CMat::zeros(prob.n(), 1), Origin::Recovered),
                y: state.y.clone(),
                f: state.f,
                gap: -1.0,
                residual: prob.b.norm(),
                merit: f64::INFINITY,
            };
            best = Some(cand);
            break;
        }

        let rank = state.eig.r1.min(opts.max_rank);
        let recovered = recover_s(prob, &state.eig, &state.y, rank)?;
        let b_eps = prob.shifted_target(&state.y);

        let (factor, measurements) = if opts.mode == SolveMode::GaugeNodfp {
            let meas = map.forward_factored(&recovered.factor.z)?;
            (recovered.factor, meas)
        } else {
            let start = if opts.primal_init == PrimalInit::AdjointLeading && k == 1 {
                adjoint_leading_factor(prob, &opts.eig)?
            } else {
                recovered.factor
            };
            let refined = if frob2(&start.z) > 0.0 {
                let mut ropts = opts.refine.clone();
                if opts.mode == SolveMode::GaugeFeas {
                    ropts.tol_residual = ropts.tol_residual.max(feas_tol);
                }
                let mut r = refine_primal(prob, &start, &b_eps, &ropts)?;
                if let Some(n1) = split {
                    r.factor.z = balance_blocks(&r.factor.z, n1);
                }
                r
            } else {
                let meas = RVec::zeros(prob.m());
                RefineResult {
                    residual: b_eps.norm(),
                    factor: start,
                    measurements: meas,
                    grad_norm: 0.0,
                    iterations: 0,
                    stalled: true,
                }
            };

            if opts.mode == SolveMode::GaugeFeas && refined.residual <= feas_tol {
                let residual = (&refined.measurements - &prob.b).norm();
                let trace = prob.primal_objective(&refined.factor.z);
                let cand = Candidate {
                    gap: weak_duality_gap(trace, state.f),
                    factor: refined.factor,
                    y: state.y.clone(),
                    f: state.f,
                    residual,
                    merit: 0.0,
                };
                observer(&IterationLog {
                    k,
                    f: cand.f,
                    gap: cand.gap,
                    feas_residual: residual,
                    n_dft: (map.counter().snapshot() - counts_start).dft,
                });
                return Ok(finish(SolveStatus::Feasible, cand, k, &state, spacer_accepts));
            }

            if frob2(&refined.factor.z) > 0.0 {
                let dref = refine_dual(prob, &refined.factor, &state.y, &opts.dual_refine, &opts.eig)?;
                if dref.f < state.f {
                    state.reset_at(prob, dref.y, dref.f, dref.eig, &opts.step)?;
                    spacer_accepts += 1;
                }
            }
            (refined.factor, refined.measurements)
        };

        let residual = (&measurements - &prob.b).norm();
        let trace = prob.primal_objective(&factor.z);
        let gap = weak_duality_gap(trace, state.f);
        observer(&IterationLog {
            k,
            f: state.f,
            gap,
            feas_residual: residual,
            n_dft: (map.counter().snapshot() - counts_start).dft,
        });

        let excess = (residual - prob.eps).max(0.0) / b_scale;
        let merit = excess.max(gap.abs());
        let cand = Candidate {
            factor,
            y: state.y.clone(),
            f: state.f,
            gap,
            residual,
            merit,
        };
        let converged = residual <= prob.eps + feas_tol && gap.abs() <= opts.tol_gap;
        if converged {
            status = SolveStatus::Optimal;
            best = Some(cand);
            break;
        }
        if best.as_ref().is_none_or(|b| merit < b.merit) {
            best = Some(cand);
        }
    }

    let cand = match best {
        Some(c) => c,
        None => Candidate {
            factor: PrimalFactor::new(CMat::zeros(prob.n(), 1), Origin::Recovered),
            y: state.y.clone(),
            f: state.f,
            gap: -1.0,
            residual: prob.b.norm(),
            merit: f64::INFINITY,
        },
    };
    Ok(finish(status, cand, iterations, &state, spacer_accepts))
}

/// `gamma u_1` with `u_1` the leading eigenvector of `A^* b` and `gamma^2`
/// the least-squares scale of `A(u_1 u_1^*)` against `b`.
fn adjoint_leading_factor(prob: &DualProblem, req: &EigRequest) -> Result<PrimalFactor> {
    let eig = rightmost_eigpairs(|v: &CVec| prob.map.apply_adjoint(&prob.b, v), prob.n(), req)?;
    let u = eig.top(1);
    let a = prob.map.forward_factored(&u)?;
    let aa = a.norm_squared();
    let s = if aa > 0.0 { a.dot(&prob.b).max(0.0) / aa } else { 0.0 };
    Ok(PrimalFactor::new(u * C64::from(s.sqrt()), Origin::Recovered))
}

/// Dense `A^* y` assembled column by column; meant for checks on small maps.
pub fn dense_adjoint(map: &dyn MeasurementMap, y: &RVec) -> Result<CMat> {
    let n = map.n();
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        let mut e = CVec::zeros(n);
        e[j] = C64::from(1.0);
        out.set_column(j, &map.adjoint_apply(y, &e)?);
    }
    Ok(out)
}

/// Terms of the optimality conditions for a pair `(X = Z Z^*, y)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimalityTerms {
    /// `| ||A(X) - b|| - eps |`.
    pub feasibility: f64,
    /// `| <b, y> - eps ||y|| - 1 |`.
    pub dual_active: f64,
    /// `|| (b - A(X)) - eps y / ||y|| ||` (zero when `eps = 0`).
    pub alignment: f64,
    /// `lambda_1 trace(X) - <A^* y, X>`, relative to `lambda_1 trace(X)`.
    pub complementarity: f64,
    /// `||(A^* y) Z - lambda_1 Z|| / (|lambda_1| ||Z||)`.
    pub invariance: f64,
    /// `trace(X) lambda_1 - 1`.
    pub gap: f64,
}

impl OptimalityTerms {
    pub fn max_violation(&self) -> f64 {
        [
            self.feasibility,
            self.dual_active,
            self.alignment,
            self.complementarity.abs(),
            self.invariance,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluate the optimality conditions, using `lambda_1` from the eigensolver.
pub fn optimality_terms(prob: &DualProblem, z: &CMat, y: &RVec, req: &EigRequest) -> Result<OptimalityTerms> {
    let (lambda1, _) = dual_objective(prob, y, req, None)?;
    let meas = prob.map.forward_factored(z)?;
    let resid = &prob.b - &meas;
    let ny = y.norm();
    let alignment = if prob.eps > 0.0 && ny > 0.0 { (&resid - y * (prob.eps / ny)).norm() } else { 0.0 };
    let trace = prob.primal_objective(z);
    let ay_z = prob.map.adjoint_apply_cols(y, z)?;
    let inner: f64 = real_dot(z, &ay_z);
    let scale = (lambda1 * trace).abs().max(f64::MIN_POSITIVE);
    let inv = (&ay_z - z * C64::from(lambda1)).norm() / (lambda1.abs() * z.norm()).max(f64::MIN_POSITIVE);
    Ok(OptimalityTerms {
        feasibility: (resid.norm() - prob.eps).abs() / prob.b.norm(),
        dual_active: (prob.constraint_value(y) - 1.0).abs(),
        alignment: alignment / prob.b.norm(),
        complementarity: (lambda1 * trace - inner) / scale,
        invariance: inv,
        gap: weak_duality_gap(trace, lambda1),
    })
}

/// Dense check used in tests: eigen-decomposition of `A^* y`.
pub fn dense_lambda1(map: &dyn MeasurementMap, y: &RVec) -> Result<f64> {
    let (vals, _) = hermitian_eig_desc(&dense_adjoint(map, y)?);
    Ok(vals[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::instance::{gen_certified_noisy_instance, gen_gaussian_instance, Truth};
    use crate::harness::metrics::metric_xerr;
    use crate::linalg::{random_cmat, random_rvec};
    use crate::operator::DenseMap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet() -> impl FnMut(&IterationLog) {
        |_| {}
    }

    #[test]
    fn rank_two_recovery_reproduces_planted_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let map = Arc::new(DenseMap::random(&mut rng, 6, 30));
        let y = random_rvec(&mut rng, 30);
        let ay = dense_adjoint(map.as_ref(), &y).unwrap();
        let (_, vecs) = hermitian_eig_desc(&ay);
        let u = vecs.columns(0, 2).into_owned();
        let g = random_cmat(&mut rng, 2, 2);
        let s0 = &g * g.adjoint();
        let b = map.forward_factored(&(&u * psd_sqrt(&s0))).unwrap();
        let prob = DualProblem::new(map, b, 0.0).unwrap();
        let (_, eig) = dual_objective(&prob, &y, &EigRequest::default().with_k(2).with_tol(1e-13), None).unwrap();
        let rec = recover_s(&prob, &eig, &y, 2).unwrap();
        let x_rec = &rec.factor.z * rec.factor.z.adjoint();
        let x0 = &u * &s0 * u.adjoint();
        assert!((x_rec - &x0).norm() / x0.norm() < 1e-6);
        assert!(rec.residual < 1e-6 * prob.b.norm());
    }

    #[test]
    fn refine_primal_fits_diagonal_measurements() {
        // A(X) = diag(X): any Z with |z_i|^2 = b_i is a global minimizer
        let n = 5;
        let map = Arc::new(DenseMap::diagonal_extraction(n));
        let b = RVec::from_vec(vec![1.0, 4.0, 0.25, 2.0, 9.0]);
        let prob = DualProblem::new(map.clone(), b.clone(), 0.0).unwrap();
        let z0 = CMat::from_element(n, 1, C64::new(0.7, 0.2));
        let out = refine_primal(&prob, &PrimalFactor::new(z0, Origin::Recovered), &b, &RefineOptions::default()).unwrap();
        assert!(out.residual < 1e-6, "residual {}", out.residual);
        for i in 0..n {
            assert!((out.factor.z[(i, 0)].norm_sqr() - b[i]).abs() < 1e-6);
        }
        assert_eq!(out.factor.origin, Origin::Refined);
    }

    #[test]
    fn refine_dual_does_not_increase_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let map = Arc::new(DenseMap::random(&mut rng, 6, 20));
        let b = random_rvec(&mut rng, 20);
        let prob = DualProblem::new(map, b, 0.0).unwrap();
        let y = prob.initial_point();
        let z = PrimalFactor::new(random_cmat(&mut rng, 6, 1), Origin::Refined);
        let out = refine_dual(&prob, &z, &y, &DualRefineOptions::default(), &EigRequest::default()).unwrap();
        assert!(out.q_end <= out.q_start);
        assert!(prob.is_feasible(&out.y));
    }

    #[test]
    fn refine_dual_keeps_an_exact_eigenpair() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let map = Arc::new(DenseMap::random(&mut rng, 5, 12));
        let mut y = random_rvec(&mut rng, 12);
        if dense_lambda1(map.as_ref(), &y).unwrap() < 0.0 {
            y = -y;
        }
        let (vals, vecs) = hermitian_eig_desc(&dense_adjoint(map.as_ref(), &y).unwrap());
        let b = &y * (2.0 / y.norm_squared());
        let prob = DualProblem::new(map, b, 0.0).unwrap();
        let z = vecs.columns(0, 1) * C64::from(1.0 / vals[0].sqrt());
        let factor = PrimalFactor::new(z, Origin::Refined);
        let out = refine_dual(&prob, &factor, &y, &DualRefineOptions::default(), &EigRequest::default().with_tol(1e-12))
            .unwrap();
        assert!(out.q_start < 1e-20);
        assert!((&out.y - &y).norm() <= 1e-12 * y.norm());
        assert!((out.f - vals[0]).abs() < 1e-9);
    }

    #[test]
    fn balancing_preserves_the_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut z = random_cmat(&mut rng, 9, 1);
        z.rows_mut(0, 4).scale_mut(10.0);
        let bal = balance_blocks(&z, 4);
        let before = z.rows(0, 4) * z.rows(4, 5).adjoint();
        let after = bal.rows(0, 4) * bal.rows(4, 5).adjoint();
        assert!((before - after).norm() < 1e-12 * z.norm_squared());
        assert!((bal.rows(0, 4).norm() - bal.rows(4, 5).norm()).abs() < 1e-10);
        assert!(bal.norm_squared() <= z.norm_squared());
    }

    #[test]
    fn certified_noiseless_solve_is_optimal() {
        let inst = gen_certified_noisy_instance(16, 6, 0.0, 1).unwrap();
        let Truth::Lifted { x0 } = &inst.truth else { unreachable!() };
        let report = solve_gauge(&inst.prob, &SolveOptions::default(), &mut quiet()).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!(metric_xerr(x0, &report.factor.z) <= 1e-4);
        assert!(report.gap.abs() <= 1e-5);
    }

    #[test]
    fn skipping_refinement_costs_more_transforms() {
        let inst = gen_gaussian_instance(16, 8, 2).unwrap();
        let full = solve_gauge(&inst.prob, &SolveOptions::default(), &mut quiet()).unwrap();
        let bare = solve_gauge(&inst.prob, &SolveOptions::default().with_mode(SolveMode::GaugeNodfp), &mut quiet())
            .unwrap();
        assert!(bare.counts.dft > full.counts.dft);
        assert_eq!(bare.spacer_accepts, 0);
    }

    #[test]
    fn feasibility_mode_stops_early() {
        let inst = gen_gaussian_instance(16, 8, 3).unwrap();
        let opts = SolveOptions::default().with_mode(SolveMode::GaugeFeas);
        let report = solve_gauge(&inst.prob, &opts, &mut quiet()).unwrap();
        assert!(matches!(report.status, SolveStatus::Feasible | SolveStatus::Optimal));
        assert!(report.residual <= opts.tol_feas * inst.prob.b.norm().max(1.0));
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let n = 3;
        let coeffs = (0..n)
            .map(|k| {
                let mut a = CMat::zeros(n, n);
                a[(k, k)] = C64::from(-1.0);
                a
            })
            .collect();
        let map = Arc::new(DenseMap::new(coeffs).unwrap());
        let prob = DualProblem::new(map, RVec::from_vec(vec![1.0, 0.0, 0.0]), 0.0).unwrap();
        let report = solve_gauge(&prob, &SolveOptions::default(), &mut quiet()).unwrap();
        assert_eq!(report.status, SolveStatus::Infeasible);
    }

    #[test]
    fn observer_sees_every_iteration() {
        let inst = gen_gaussian_instance(8, 6, 4).unwrap();
        let mut seen = Vec::new();
        let report = solve_gauge(&inst.prob, &SolveOptions::default(), &mut |e| seen.push(e.k)).unwrap();
        assert_eq!(seen.len(), report.iterations);
        assert!(seen.windows(2).all(|w| w[1] == w[0] + 1));
    }
}
