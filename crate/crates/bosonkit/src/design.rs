//! Fisher information, inferable-subspace projection, A-optimal experiment design and
//! maximum-likelihood fitting of a unitary submatrix with loss and indistinguishability.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::hidden_dof::{restricted_outcomes, restricted_probability_gradient, thermal_class_function};
use crate::linopt::{
    coeffs_from_unitary, hermitian_eigen, unitary_completion, unitary_from_coeffs_with_derivatives, GellMannCoeffs, OccupationList,
};
use crate::stats::{multinomial, CountsDataset, OutcomeCount, OutcomeLabel, SettingCounts};
use crate::{CMatrix, Complex64, RMatrix};

/// `F = Jᵀ diag(1/p) J` for an `O × R` Jacobian and an outcome distribution.
///
/// Outcomes with zero probability must have zero sensitivity.
pub fn fisher_information(jacobian: &RMatrix, probs: &[f64]) -> Result<RMatrix> {
    if jacobian.nrows() != probs.len() {
        return mismatch(format!("{} Jacobian rows for {} outcomes", jacobian.nrows(), probs.len()));
    }
    let r = jacobian.ncols();
    let mut f = RMatrix::zeros(r, r);
    for (o, &p) in probs.iter().enumerate() {
        let row = jacobian.row(o);
        if p <= 0.0 {
            if row.iter().any(|&x| x.abs() > 1e-12) {
                return Err(Error::Degenerate(format!(
                    "outcome {o} has zero probability but nonzero sensitivity"
                )));
            }
            continue;
        }
        f += row.transpose() * row / p;
    }
    Ok(f)
}

/// One measurement setting linearized at the reference point.
#[derive(Clone, Debug, PartialEq)]
pub struct SettingModel {
    pub id: String,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    /// `T̃_{o,r} = ∂p(o)/∂θ_r`, one row per outcome.
    pub jacobian: RMatrix,
}

impl SettingModel {
    /// Checks normalization (`1e-8`) and zero column sums of the Jacobian (`1e-8` relative to its scale).
    pub fn new(id: String, labels: Vec<String>, probs: Vec<f64>, jacobian: RMatrix) -> Result<Self> {
        if labels.len() != probs.len() || jacobian.nrows() != probs.len() {
            return mismatch("labels, probabilities and Jacobian rows must agree in length");
        }
        if probs.iter().any(|&p| !(-1e-12..=1.0 + 1e-12).contains(&p)) {
            return invalid(format!("setting {id}: probability outside [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return invalid(format!("setting {id}: probabilities sum to {total}"));
        }
        let scale = jacobian.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for c in 0..jacobian.ncols() {
            let s: f64 = jacobian.column(c).sum();
            if s.abs() > 1e-8 * scale {
                return invalid(format!("setting {id}: Jacobian column {c} sums to {s}"));
            }
        }
        Ok(SettingModel {
            id,
            labels,
            probs,
            jacobian,
        })
    }

    pub fn fisher(&self) -> Result<RMatrix> {
        fisher_information(&self.jacobian, &self.probs)
    }
}

/// Orthonormal basis of the locally inferable subspace and the projected Jacobians.
#[derive(Clone, Debug, PartialEq)]
pub struct InferableProjection {
    /// `B_⊥(K)`, `R′ × R` with orthonormal columns.
    pub basis: RMatrix,
    /// `T^{(s)} = T̃^{(s)} B`.
    pub projected: Vec<RMatrix>,
    /// Singular values of the stacked Jacobian, descending.
    pub singular_values: Vec<f64>,
}

impl InferableProjection {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

/// Relative singular-value threshold used by [`project_inferable`].
pub const RANK_THRESHOLD: f64 = 1e-8;

/// Complement of the joint kernel of the stacked Jacobians by singular-value thresholding.
pub fn project_inferable(jacobians: &[RMatrix]) -> Result<InferableProjection> {
    if jacobians.is_empty() {
        return invalid("need at least one setting");
    }
    let cols = jacobians[0].ncols();
    if jacobians.iter().any(|j| j.ncols() != cols) {
        return mismatch("Jacobians must share the parameter dimension");
    }
    let rows: usize = jacobians.iter().map(|j| j.nrows()).sum();
    let mut stacked = RMatrix::zeros(rows.max(cols), cols);
    let mut at = 0;
    for j in jacobians {
        stacked.view_mut((at, 0), j.shape()).copy_from(j);
        at += j.nrows();
    }
    let svd = stacked.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let top = singular_values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(Error::Degenerate("all Jacobians vanish".into()));
    }
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| svd.singular_values[k] > RANK_THRESHOLD * top)
        .collect();
    let mut basis = RMatrix::zeros(cols, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        basis.set_column(c, &v_t.row(k).transpose());
    }
    let projected = jacobians.iter().map(|j| j * &basis).collect();
    Ok(InferableProjection {
        basis,
        projected,
        singular_values,
    })
}

/// A design problem on the inferable subspace.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    pub settings: Vec<SettingModel>,
    pub projection: InferableProjection,
    /// Projected per-setting Fisher information `F^{(s)}`.
    pub fishers: Vec<RMatrix>,
    /// Cost weights `Y_r` on the projected parameters.
    pub y: Vec<f64>,
}

impl DesignProblem {
    /// Projects onto the inferable subspace; `y` defaults to all ones.
    pub fn new(settings: Vec<SettingModel>, y: Option<Vec<f64>>) -> Result<Self> {
        let jac: Vec<RMatrix> = settings.iter().map(|s| s.jacobian.clone()).collect();
        let projection = project_inferable(&jac)?;
        let fishers = settings
            .par_iter()
            .zip(&projection.projected)
            .map(|(s, t)| fisher_information(t, &s.probs))
            .collect::<Result<Vec<_>>>()?;
        let r = projection.rank();
        let y = y.unwrap_or_else(|| vec![1.0; r]);
        if y.len() != r {
            return mismatch(format!("{} cost weights for {r} inferable parameters", y.len()));
        }
        if y.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return invalid("cost weights must be nonnegative");
        }
        Ok(DesignProblem {
            settings,
            projection,
            fishers,
            y,
        })
    }

    pub fn rank(&self) -> usize {
        self.projection.rank()
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.settings.iter().map(|s| s.probs.clone()).collect()
    }

    pub fn cost(&self, q: &[f64]) -> f64 {
        a_optimal_cost(&self.fishers, &self.y, q)
    }
}

/// `F(q) = Σ_s q_s F^{(s)}`.
pub fn aggregate_fisher(fishers: &[RMatrix], q: &[f64]) -> RMatrix {
    let r = fishers[0].nrows();
    let mut f = RMatrix::zeros(r, r);
    for (fs, &qs) in fishers.iter().zip(q) {
        if qs != 0.0 {
            f += fs * qs;
        }
    }
    f
}

fn inverse_pd(f: &RMatrix) -> Option<RMatrix> {
    let chol = f.clone().cholesky()?;
    let inv = chol.inverse();
    inv.iter().all(|x| x.is_finite()).then_some(inv)
}

/// A-optimal cost `Σ_r Y_r² (F(q)⁻¹)_{rr}`; `+∞` when `F(q)` is singular.
pub fn a_optimal_cost(fishers: &[RMatrix], y: &[f64], q: &[f64]) -> f64 {
    match inverse_pd(&aggregate_fisher(fishers, q)) {
        Some(inv) => y.iter().enumerate().map(|(r, yr)| yr * yr * inv[(r, r)]).sum(),
        None => f64::INFINITY,
    }
}

/// Cost and `a_s = Tr(F⁻¹ W F⁻¹ F^{(s)})`, so that `∂cost/∂q_s = −a_s`.
fn cost_and_sensitivities(fishers: &[RMatrix], y: &[f64], q: &[f64]) -> Option<(f64, Vec<f64>)> {
    let inv = inverse_pd(&aggregate_fisher(fishers, q))?;
    let w = RMatrix::from_diagonal(&nalgebra::DVector::from_iterator(y.len(), y.iter().map(|v| v * v)));
    let a = &inv * w * &inv;
    let cost = y.iter().enumerate().map(|(r, yr)| yr * yr * inv[(r, r)]).sum();
    let sens = fishers.iter().map(|fs| a.component_mul(fs).sum()).collect();
    Some((cost, sens))
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Solver controls shared by the two design routes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignOptions {
    /// Stop when the Frank-Wolfe gap (an upper bound on `cost − optimum`) is below `tol · cost`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            tol: 1e-9,
            max_iter: 200_000,
        }
    }
}

/// Weights and optimal cost from [`a_optimal_direct`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectSolution {
    pub q: Vec<f64>,
    pub cost: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn fw_gap(q: &[f64], sens: &[f64]) -> f64 {
    let max = sens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max - q.iter().zip(sens).map(|(a, b)| a * b).sum::<f64>()
}

fn check_fishers(fishers: &[RMatrix], y: &[f64]) -> Result<()> {
    if fishers.is_empty() {
        return invalid("need at least one setting");
    }
    let r = fishers[0].nrows();
    if fishers.iter().any(|f| f.shape() != (r, r)) || y.len() != r {
        return mismatch("Fisher matrices and cost weights must share the parameter dimension");
    }
    let total = aggregate_fisher(fishers, &vec![1.0; fishers.len()]);
    if inverse_pd(&total).is_none() {
        return Err(Error::Infeasible("aggregate Fisher information is singular".into()));
    }
    Ok(())
}

/// Minimizes `Σ_r Y_r² (Σ_s q_s F^{(s)})⁻¹_{rr}` over the simplex.
///
/// Accelerated projected gradient with backtracking and adaptive restart, started from the
/// uniform design. The returned `gap` certifies `cost − optimum ≤ gap`.
pub fn a_optimal_direct(fishers: &[RMatrix], y: &[f64], opts: &DesignOptions) -> Result<DirectSolution> {
    check_fishers(fishers, y)?;
    let n = fishers.len();
    let eval = |q: &[f64]| cost_and_sensitivities(fishers, y, q);
    let mut x = vec![1.0 / n as f64; n];
    let (mut fx, mut sx) = eval(&x).ok_or_else(|| Error::Infeasible("uniform design is singular".into()))?;
    if n == 1 {
        return Ok(DirectSolution {
            q: x,
            cost: fx,
            gap: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut gap = fw_gap(&x, &sx);
    let mut yv = x.clone();
    let mut momentum: f64 = 1.0;
    let smax = sx.iter().copied().fold(0.0, f64::max);
    let mut step = 0.1 / smax.max(1e-300);
    let mut it = 0;
    while it < opts.max_iter && gap > opts.tol * fx {
        it += 1;
        let (fy, sy) = match eval(&yv) {
            Some(v) => v,
            None => {
                yv = x.clone();
                momentum = 1.0;
                (fx, sx.clone())
            }
        };
        // gradient is −s
        let (z, fz) = loop {
            let z = project_simplex(&yv.iter().zip(&sy).map(|(a, s)| a + step * s).collect::<Vec<_>>());
            let fz = a_optimal_cost(fishers, y, &z);
            let d: Vec<f64> = z.iter().zip(&yv).map(|(a, b)| a - b).collect();
            let lin: f64 = -d.iter().zip(&sy).map(|(a, s)| a * s).sum::<f64>();
            let quad: f64 = d.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
            if fz.is_finite() && fz <= fy + lin + quad + 1e-15 * fy.abs() {
                break (z, fz);
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::Numerical("line search failed in design solver".into()));
            }
        };
        if fz > fx {
            yv = x.clone();
            momentum = 1.0;
            continue;
        }
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next;
        let ext: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        yv = project_simplex(&ext);
        momentum = next;
        x = z;
        let (f_new, s_new) = eval(&x).expect("accepted iterate has finite cost");
        fx = f_new.min(fz);
        sx = s_new;
        gap = fw_gap(&x, &sx);
        step *= 1.5;
    }
    Ok(DirectSolution {
        q: x,
        cost: fx,
        gap,
        iterations: it,
        converged: gap <= opts.tol * fx,
    })
}

/// Linear estimator coefficients `C^{(r)}_{o,s}`: one `O_s × R` matrix per setting.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorBank {
    pub coeffs: Vec<RMatrix>,
}

impl EstimatorBank {
    /// Largest `|Σ_o C_{o,s} p(o|s)|`.
    pub fn mean_zero_residual(&self, probs: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, p) in self.coeffs.iter().zip(probs) {
            for r in 0..c.ncols() {
                let s: f64 = c.column(r).iter().zip(p).map(|(a, b)| a * b).sum();
                worst = worst.max(s.abs());
            }
        }
        worst
    }

    /// Largest entry of `|Σ_s C_sᵀ T_s − I|`.
    pub fn unbiasedness_residual(&self, t: &[RMatrix]) -> f64 {
        let r = self.coeffs[0].ncols();
        let mut m = -RMatrix::identity(r, r);
        for (c, ts) in self.coeffs.iter().zip(t) {
            m += c.transpose() * ts;
        }
        m.amax()
    }

    /// Per-shot covariance `Σ_s C_sᵀ Σ_s C_s / q_s` of the estimators; zero-weight settings are skipped.
    pub fn covariance(&self, q: &[f64], probs: &[Vec<f64>]) -> RMatrix {
        let r = self.coeffs[0].ncols();
        let mut cov = RMatrix::zeros(r, r);
        for ((c, p), &qs) in self.coeffs.iter().zip(probs).zip(q) {
            if qs <= 0.0 {
                continue;
            }
            let sigma = one_shot_covariance(p);
            cov += c.transpose() * sigma * c / qs;
        }
        cov
    }
}

/// `Σ = diag(p) − p pᵀ`.
pub fn one_shot_covariance(p: &[f64]) -> RMatrix {
    let n = p.len();
    RMatrix::from_fn(n, n, |a, b| if a == b { p[a] - p[a] * p[b] } else { -p[a] * p[b] })
}

/// Result of [`a_optimal_socp`].
#[derive(Clone, Debug, PartialEq)]
pub struct SocpSolution {
    pub q: Vec<f64>,
    pub bank: EstimatorBank,
    /// Cone bounds `D_s = ‖(√Σ_s)^{⊕R}(⊕_r Y_r C_s^{(r)})‖₂`.
    pub d: Vec<f64>,
    /// `(Σ_s D_s)²`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimum-variance locally unbiased estimators for fixed weights:
/// `C_s^{(r)} = q_s diag(1/p_s) T_s F(q)⁻¹ e_r`.
fn estimator_bank(t: &[RMatrix], probs: &[Vec<f64>], q: &[f64], finv: &RMatrix) -> EstimatorBank {
    let coeffs = t
        .iter()
        .zip(probs)
        .zip(q)
        .map(|((ts, p), &qs)| {
            let mut c = ts * finv * qs;
            for (o, &po) in p.iter().enumerate() {
                let scale = if po > 0.0 { 1.0 / po } else { 0.0 };
                c.row_mut(o).scale_mut(scale);
            }
            c
        })
        .collect();
    EstimatorBank { coeffs }
}

fn cone_bounds(bank: &EstimatorBank, probs: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    bank.coeffs
        .iter()
        .zip(probs)
        .map(|(c, p)| {
            let sigma = one_shot_covariance(p);
            let m = c.transpose() * sigma * c;
            y.iter().enumerate().map(|(r, yr)| yr * yr * m[(r, r)]).sum::<f64>().max(0.0).sqrt()
        })
        .collect()
}

/// The SOCP route: alternate the closed-form estimator step for fixed `q` with the
/// theorem's weight elimination `q_s = D_s / Σ D_s` until the design is stationary.
///
/// `t` are the projected Jacobians and `probs` the reference distributions. The reported
/// cost `(Σ_s D_s)²` is evaluated from the returned estimator bank.
pub fn a_optimal_socp(t: &[RMatrix], probs: &[Vec<f64>], y: &[f64], opts: &DesignOptions) -> Result<SocpSolution> {
    if t.len() != probs.len() {
        return mismatch("one reference distribution per setting required");
    }
    let fishers = t
        .iter()
        .zip(probs)
        .map(|(ts, p)| fisher_information(ts, p))
        .collect::<Result<Vec<_>>>()?;
    check_fishers(&fishers, y)?;
    let n = t.len();
    let mut q = vec![1.0 / n as f64; n];
    let mut it = 0;
    let mut converged = false;
    loop {
        let (cost, sens) = cost_and_sensitivities(&fishers, y, &q).ok_or_else(|| Error::Infeasible("design became singular".into()))?;
        if fw_gap(&q, &sens) <= opts.tol * cost {
            converged = true;
            break;
        }
        if it >= opts.max_iter {
            break;
        }
        it += 1;
        let v: Vec<f64> = q.iter().zip(&sens).map(|(qs, a)| qs * a.max(0.0).sqrt()).collect();
        let total: f64 = v.iter().sum();
        q = v.iter().map(|x| x / total).collect();
    }
    let finv = inverse_pd(&aggregate_fisher(&fishers, &q)).ok_or_else(|| Error::Infeasible("design became singular".into()))?;
    let bank = estimator_bank(t, probs, &q, &finv);
    let d = cone_bounds(&bank, probs, y);
    let cost = d.iter().sum::<f64>().powi(2);
    Ok(SocpSolution {
        q,
        bank,
        d,
        cost,
        iterations: it,
        converged,
    })
}

/// Largest-remainder rounding of `q N`: floors first, then one extra shot to each of the
/// largest fractional parts (ties to the lowest index), so the total is exactly `N`.
pub fn shot_allocation(q: &[f64], n: u64) -> Vec<u64> {
    let target: Vec<f64> = q.iter().map(|&x| x.max(0.0) * n as f64).collect();
    let mut shots: Vec<u64> = target.iter().map(|t| t.floor() as u64).collect();
    let assigned: u64 = shots.iter().sum();
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| {
        (target[b] - target[b].floor())
            .total_cmp(&(target[a] - target[a].floor()))
            .then(a.cmp(&b))
    });
    let residual = n.saturating_sub(assigned) as usize;
    for &k in order.iter().cycle().take(residual) {
        shots[k] += 1;
    }
    shots
}

/// One entry of the design output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignWeight {
    pub setting: String,
    pub q: f64,
    pub shots: u64,
}

/// Design output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub schema_version: u32,
    pub weights: Vec<DesignWeight>,
    pub cost_per_shot_per_param: f64,
    pub inferable_parameters: usize,
    pub direct_cost: f64,
    pub socp_cost: f64,
    pub converged: bool,
}

/// Solves a design problem by both routes and rounds the direct weights to `shots`.
pub fn design_report(problem: &DesignProblem, shots: u64, opts: &DesignOptions) -> Result<DesignReport> {
    let direct = a_optimal_direct(&problem.fishers, &problem.y, opts)?;
    let socp = a_optimal_socp(&problem.projection.projected, &problem.probs(), &problem.y, opts)?;
    let alloc = shot_allocation(&direct.q, shots);
    let weights = problem
        .settings
        .iter()
        .zip(&direct.q)
        .zip(alloc)
        .map(|((s, &q), shots)| DesignWeight {
            setting: s.id.clone(),
            q,
            shots,
        })
        .collect();
    Ok(DesignReport {
        schema_version: 1,
        weights,
        cost_per_shot_per_param: direct.cost / problem.rank() as f64,
        inferable_parameters: problem.rank(),
        direct_cost: direct.cost,
        socp_cost: socp.cost,
        converged: direct.converged && socp.converged,
    })
}

/// Jacobian file: settings with reference probabilities and Jacobian rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianFile {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub settings: Vec<JacobianSetting>,
    /// Optional cost weights on the projected parameters.
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianSetting {
    pub id: String,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    pub probs: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
}

impl JacobianSetting {
    pub fn to_model(&self) -> Result<SettingModel> {
        let rows = self.jacobian.len();
        let cols = self.jacobian.first().map_or(0, |r| r.len());
        if self.jacobian.iter().any(|r| r.len() != cols) {
            return mismatch(format!("setting {}: ragged Jacobian", self.id));
        }
        let jac = RMatrix::from_fn(rows, cols, |a, b| self.jacobian[a][b]);
        let labels = self.labels.clone().unwrap_or_else(|| (0..rows).map(|o| o.to_string()).collect());
        SettingModel::new(self.id.clone(), labels, self.probs.clone(), jac)
    }
}

/// Description of a boson-inference design: which sites are inputs and outputs and the
/// excited-state occupation `x` of the thermal hidden state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BosonDesignSpec {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub x: f64,
}

/// Restricted thermal model of every nonempty subset of inputs, parameterized by the
/// Gell-Mann coefficients of a `(|S|+|I|)`-dimensional unitary whose top-left block is `M`.
#[derive(Clone, Debug)]
pub struct BosonDesign {
    pub spec: BosonDesignSpec,
    /// Reference coefficients `c⁽⁰⁾`.
    pub coeffs: GellMannCoeffs,
    /// Input column indices for each setting.
    pub subsets: Vec<Vec<usize>>,
}

fn pattern_label(h: &OccupationList) -> String {
    let parts: Vec<String> = h.0.iter().map(|c| c.to_string()).collect();
    format!("({})", parts.join(","))
}

impl BosonDesign {
    /// `reference` is either the `|S| × |I|` submatrix (completed to a unitary) or the
    /// full `(|S|+|I|)`-dimensional unitary.
    pub fn new(spec: BosonDesignSpec, reference: &CMatrix) -> Result<Self> {
        let (s, i) = (spec.outputs.len(), spec.inputs.len());
        if s == 0 || i == 0 {
            return invalid("need at least one input and one output");
        }
        if i > crate::hidden_dof::DEFAULT_MAX_N {
            return Err(Error::SizeLimit(format!("{i} inputs above {}", crate::hidden_dof::DEFAULT_MAX_N)));
        }
        if !(0.0..1.0).contains(&spec.x) {
            return invalid(format!("x = {} outside [0, 1)", spec.x));
        }
        let d = s + i;
        let v = if reference.shape() == (d, d) {
            reference.clone()
        } else if reference.shape() == (s, i) {
            unitary_completion(reference)?
        } else {
            return mismatch(format!("reference must be {s}x{i} or {d}x{d}"));
        };
        let coeffs = coeffs_from_unitary(&v)?;
        let subsets = (1u32..(1 << i))
            .map(|mask| (0..i).filter(|a| mask & (1 << a) != 0).collect::<Vec<_>>())
            .collect();
        Ok(BosonDesign { spec, coeffs, subsets })
    }

    pub fn setting_id(&self, k: usize) -> String {
        let sites: Vec<String> = self.subsets[k].iter().map(|&a| self.spec.inputs[a].to_string()).collect();
        sites.join(",")
    }

    fn outcomes(&self, k: usize) -> Vec<OccupationList> {
        restricted_outcomes(self.spec.outputs.len(), self.subsets[k].len())
    }

    fn submatrix(&self, v: &CMatrix, k: usize) -> CMatrix {
        let cols = &self.subsets[k];
        CMatrix::from_fn(self.spec.outputs.len(), cols.len(), |r, c| v[(r, cols[c])])
    }

    /// Outcome distribution of setting `k` at coefficients `c`.
    pub fn setting_probs(&self, k: usize, c: &[f64]) -> Result<Vec<f64>> {
        let coeffs = GellMannCoeffs {
            d: self.coeffs.d,
            c: c.to_vec(),
        };
        let v = crate::linopt::unitary_from_coeffs(&coeffs);
        let m = self.submatrix(&v, k);
        let class = thermal_class_function(self.spec.x, m.ncols())?;
        self.outcomes(k)
            .iter()
            .map(|h| Ok(restricted_probability_gradient(&m, &class, h)?.0))
            .collect()
    }

    /// Probabilities and Jacobian with respect to all `d²` coefficients at the reference.
    pub fn setting_model(&self, k: usize) -> Result<SettingModel> {
        let (v, dv) = unitary_from_coeffs_with_derivatives(&self.coeffs);
        self.model_with(k, &v, &dv)
    }

    fn model_with(&self, k: usize, v: &CMatrix, dv: &[CMatrix]) -> Result<SettingModel> {
        let m = self.submatrix(v, k);
        let cols = &self.subsets[k];
        let class = thermal_class_function(self.spec.x, m.ncols())?;
        let outcomes = self.outcomes(k);
        let mut probs = Vec::with_capacity(outcomes.len());
        let mut jac = RMatrix::zeros(outcomes.len(), dv.len());
        for (o, h) in outcomes.iter().enumerate() {
            let (p, g) = restricted_probability_gradient(&m, &class, h)?;
            probs.push(p);
            for (r, dvr) in dv.iter().enumerate() {
                let mut acc = 0.0;
                for a in 0..m.nrows() {
                    for (b, &col) in cols.iter().enumerate() {
                        acc += (g[(a, b)] * dvr[(a, col)]).re;
                    }
                }
                jac[(o, r)] = 2.0 * acc;
            }
        }
        let labels = outcomes.iter().map(pattern_label).collect();
        SettingModel::new(self.setting_id(k), labels, probs, jac)
    }

    /// All settings linearized at the reference point.
    pub fn setting_models(&self) -> Result<Vec<SettingModel>> {
        let (v, dv) = unitary_from_coeffs_with_derivatives(&self.coeffs);
        (0..self.subsets.len())
            .into_par_iter()
            .map(|k| self.model_with(k, &v, &dv))
            .collect()
    }

    pub fn problem(&self, y: Option<Vec<f64>>) -> Result<DesignProblem> {
        DesignProblem::new(self.setting_models()?, y)
    }
}

/// Single- and two-particle model with loss and partial distinguishability on a submatrix
/// `M = U(S|I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoParticleModel {
    pub m: CMatrix,
    pub loss: f64,
    pub indist: f64,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

fn distinct(v: &[usize]) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.windows(2).all(|w| w[0] != w[1])
}

impl TwoParticleModel {
    pub fn new(m: CMatrix, loss: f64, indist: f64, inputs: Vec<usize>, outputs: Vec<usize>) -> Result<Self> {
        if m.shape() != (outputs.len(), inputs.len()) {
            return mismatch(format!("M must be {}x{}", outputs.len(), inputs.len()));
        }
        if !(0.0..=1.0).contains(&loss) || !(0.0..=1.0).contains(&indist) {
            return invalid("loss and indistinguishability must lie in [0, 1]");
        }
        if !distinct(&inputs) || !distinct(&outputs) || inputs.contains(&0) || outputs.contains(&0) {
            return invalid("input and output sites must be distinct and 1-based");
        }
        let (vals, _) = hermitian_eigen(&(CMatrix::identity(m.ncols(), m.ncols()) - m.adjoint() * &m));
        if vals.iter().any(|&v| v < -1e-10) {
            return invalid("I − M†M is not PSD");
        }
        Ok(TwoParticleModel {
            m,
            loss,
            indist,
            inputs,
            outputs,
        })
    }

    /// Every single-input and two-input setting, as sorted site lists.
    pub fn settings(&self) -> Vec<Vec<usize>> {
        let mut sites = self.inputs.clone();
        sites.sort_unstable();
        let mut out: Vec<Vec<usize>> = sites.iter().map(|&a| vec![a]).collect();
        for (x, &a) in sites.iter().enumerate() {
            for &b in &sites[x + 1..] {
                out.push(vec![a, b]);
            }
        }
        out
    }

    fn columns(&self, setting: &[usize]) -> Result<Vec<usize>> {
        let cols: Vec<usize> = setting
            .iter()
            .map(|s| {
                self.inputs
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| Error::InvalidInput(format!("site {s} is not a model input")))
            })
            .collect::<Result<_>>()?;
        match cols.len() {
            1 => Ok(cols),
            2 if cols[0] != cols[1] => Ok(cols),
            _ => invalid("settings prepare one particle or two on distinct sites"),
        }
    }

    /// Outcome labels of a setting; the catch-all event (τ or ζ) is [`OutcomeLabel::Other`].
    pub fn labels(&self, setting: &[usize]) -> Result<Vec<OutcomeLabel>> {
        let cols = self.columns(setting)?;
        let mut out = Vec::new();
        if cols.len() == 2 {
            for x in 0..self.outputs.len() {
                for y in x + 1..self.outputs.len() {
                    let (a, b) = (self.outputs[x], self.outputs[y]);
                    out.push(OutcomeLabel::Sites(vec![a.min(b), a.max(b)]));
                }
            }
        }
        out.extend(self.outputs.iter().map(|&s| OutcomeLabel::Sites(vec![s])));
        if cols.len() == 1 {
            out.push(OutcomeLabel::Empty);
        }
        out.push(OutcomeLabel::Other);
        Ok(out)
    }

    /// Probabilities in [`Self::labels`] order and, for outcome weights `w`, `G = Σ_o w_o ∂p_o/∂M` (Wirtinger, `M*` fixed).
    pub fn probs_and_gradient(&self, setting: &[usize], w: Option<&[f64]>) -> Result<(Vec<f64>, CMatrix)> {
        let cols = self.columns(setting)?;
        let m = &self.m;
        let l = self.loss;
        let ns = self.outputs.len();
        let mut g = CMatrix::zeros(ns, self.inputs.len());
        let mut probs = Vec::new();
        let sq = |s: usize, a: usize| m[(s, a)].norm_sqr();
        if let [a] = cols[..] {
            let wl = |k: usize| w.map_or(0.0, |w| w[k]);
            let other = ns + 1;
            let mut inside = 0.0;
            for s in 0..ns {
                let p = (1.0 - l) * sq(s, a);
                inside += sq(s, a);
                probs.push(p);
                g[(s, a)] += m[(s, a)].conj() * ((wl(s) - wl(other)) * (1.0 - l));
            }
            probs.push(l);
            probs.push((1.0 - l) * (1.0 - inside));
        } else {
            let (a, b) = (cols[0], cols[1]);
            let i = self.indist;
            let surv = (1.0 - l) * (1.0 - l);
            let npairs = ns * (ns - 1) / 2;
            let zeta = npairs + ns;
            let wl = |k: usize| w.map_or(0.0, |w| w[k]);
            let mut k = 0;
            for s in 0..ns {
                for t in s + 1..ns {
                    let (msa, mtb, msb, mta) = (m[(s, a)], m[(t, b)], m[(s, b)], m[(t, a)]);
                    let z = msa * mtb * msb.conj() * mta.conj();
                    let part = msa.norm_sqr() * mtb.norm_sqr() + msb.norm_sqr() * mta.norm_sqr() + 2.0 * i * z.re;
                    probs.push(surv * part);
                    let c = (wl(k) - wl(zeta)) * surv;
                    if c != 0.0 {
                        g[(s, a)] += (msa.conj() * mtb.norm_sqr() + mtb * msb.conj() * mta.conj() * i) * c;
                        g[(t, b)] += (mtb.conj() * msa.norm_sqr() + msa * msb.conj() * mta.conj() * i) * c;
                        g[(s, b)] += (msb.conj() * mta.norm_sqr() + msa.conj() * mtb.conj() * mta * i) * c;
                        g[(t, a)] += (mta.conj() * msb.norm_sqr() + msa.conj() * mtb.conj() * msb * i) * c;
                    }
                    k += 1;
                }
            }
            for s in 0..ns {
                let single = l * (1.0 - l);
                probs.push(single * (sq(s, a) + sq(s, b)));
                let c = (wl(npairs + s) - wl(zeta)) * single;
                g[(s, a)] += m[(s, a)].conj() * c;
                g[(s, b)] += m[(s, b)].conj() * c;
            }
            let rest = 1.0 - probs.iter().sum::<f64>();
            probs.push(rest);
        }
        if let Some(bad) = probs.iter().find(|p| !(-1e-10..=1.0 + 1e-10).contains(*p)) {
            return Err(Error::Numerical(format!("model probability {bad} outside [0, 1]")));
        }
        Ok((probs, g))
    }

    /// Outcome probabilities in [`Self::labels`] order.
    pub fn probs(&self, setting: &[usize]) -> Result<Vec<f64>> {
        Ok(self.probs_and_gradient(setting, None)?.0)
    }

    /// Labelled outcome distribution of one setting.
    pub fn distribution(&self, setting: &[usize]) -> Result<Vec<(OutcomeLabel, f64)>> {
        Ok(self.labels(setting)?.into_iter().zip(self.probs(setting)?).collect())
    }
}

/// Labelled outcome distribution of a single- or two-particle setting.
pub fn two_particle_model_probs(model: &TwoParticleModel, setting: &[usize]) -> Result<Vec<(OutcomeLabel, f64)>> {
    model.distribution(setting)
}

/// `(1/2) Σ_o |p_o − q_o|`.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return mismatch("distributions have different outcome spaces");
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Maximum over settings of the total variation distance between two models.
///
/// `(1 + d)/2` is the optimal probability of guessing correctly which of the two models
/// produced a single shot of the worst-case setting.
pub fn max_tvd(a: &TwoParticleModel, b: &TwoParticleModel, settings: &[Vec<usize>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in settings {
        if a.labels(s)? != b.labels(s)? {
            return mismatch(format!("models disagree on the outcome space of setting {s:?}"));
        }
        worst = worst.max(tvd(&a.probs(s)?, &b.probs(s)?)?);
    }
    Ok(worst)
}

/// Draws `shots` outcomes for every setting.
pub fn synthesize_counts<R: Rng + ?Sized>(
    model: &TwoParticleModel,
    settings: &[Vec<usize>],
    shots: u64,
    rng: &mut R,
) -> Result<CountsDataset> {
    let mut out = Vec::with_capacity(settings.len());
    for s in settings {
        let labels = model.labels(s)?;
        let probs: Vec<f64> = model.probs(s)?.into_iter().map(|p| p.max(0.0)).collect();
        let counts = multinomial(shots, &probs, rng);
        out.push(SettingCounts {
            prepared_sites: s.clone(),
            outcomes: labels
                .into_iter()
                .zip(counts)
                .map(|(label, count)| OutcomeCount { label, count })
                .collect(),
        });
    }
    let modes = model.inputs.iter().chain(&model.outputs).copied().max().unwrap_or(0);
    CountsDataset::new(modes, out)
}

/// Counts of a setting arranged in the model's label order; unknown labels go to the
/// catch-all event.
fn model_counts(setting: &SettingCounts, labels: &[OutcomeLabel]) -> Vec<u64> {
    let catch = labels.len() - 1;
    let mut out = vec![0; labels.len()];
    for o in &setting.outcomes {
        let k = labels.iter().position(|l| *l == o.label).unwrap_or(catch);
        out[k] += o.count;
    }
    out
}

/// Stage 1: the pooled lost-particle frequency of all single-particle settings.
pub fn loss_from_singles(data: &CountsDataset) -> Result<f64> {
    let (mut lost, mut total) = (0u64, 0u64);
    for s in data.settings.iter().filter(|s| s.prepared_sites.len() == 1) {
        lost += s.count(&OutcomeLabel::Empty);
        total += s.total();
    }
    if total == 0 {
        return invalid("dataset has no single-particle data");
    }
    Ok(lost as f64 / total as f64)
}

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-300;

/// Options for [`mle_fit`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when the largest gradient entry of the per-shot negative log-likelihood is below this.
    pub grad_tol: f64,
    /// Stop when an accepted step changes the per-shot objective by less than this.
    pub f_tol: f64,
    pub memory: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 1000,
            grad_tol: 1e-9,
            f_tol: 1e-15,
            memory: 10,
        }
    }
}

/// Output of [`mle_fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    /// Gauge-fixed model (first output row and first input column real nonnegative).
    pub model: TwoParticleModel,
    pub coeffs: GellMannCoeffs,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted iteration, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Multiplies rows and columns by phases so column 0 and row 0 are real nonnegative.
pub fn gauge_fix(m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    let phase = |z: Complex64| {
        if z.norm() > 0.0 {
            z.conj() / z.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    };
    if out.ncols() == 0 || out.nrows() == 0 {
        return out;
    }
    for s in 0..out.nrows() {
        let p = phase(out[(s, 0)]);
        for a in 0..out.ncols() {
            out[(s, a)] *= p;
        }
    }
    for a in 1..out.ncols() {
        let p = phase(out[(0, a)]);
        for s in 0..out.nrows() {
            out[(s, a)] *= p;
        }
    }
    out
}

struct Likelihood<'a> {
    data: Vec<(Vec<usize>, Vec<u64>)>,
    inputs: &'a [usize],
    outputs: &'a [usize],
    loss: f64,
    indist: f64,
    d: usize,
    shots: f64,
}

impl Likelihood<'_> {
    fn model(&self, v: &CMatrix) -> TwoParticleModel {
        let m = v.view((0, 0), (self.outputs.len(), self.inputs.len())).into_owned();
        TwoParticleModel {
            m,
            loss: self.loss,
            indist: self.indist,
            inputs: self.inputs.to_vec(),
            outputs: self.outputs.to_vec(),
        }
    }

    /// Per-shot negative log-likelihood and its gradient in the coefficients.
    fn eval(&self, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, dv) = unitary_from_coeffs_with_derivatives(&GellMannCoeffs { d: self.d, c: c.to_vec() });
        let model = self.model(&v);
        let mut ll = 0.0;
        let mut g = CMatrix::zeros(self.outputs.len(), self.inputs.len());
        for (setting, counts) in &self.data {
            let probs = model.probs(setting)?;
            let w: Vec<f64> = counts
                .iter()
                .zip(&probs)
                .map(|(&n, &p)| if n == 0 { 0.0 } else { n as f64 / p.max(PROB_FLOOR) })
                .collect();
            ll += counts
                .iter()
                .zip(&probs)
                .map(|(&n, &p)| if n == 0 { 0.0 } else { n as f64 * p.max(PROB_FLOOR).ln() })
                .sum::<f64>();
            g += model.probs_and_gradient(setting, Some(&w))?.1;
        }
        let grad = dv
            .iter()
            .map(|dvr| {
                let mut acc = 0.0;
                for a in 0..g.nrows() {
                    for b in 0..g.ncols() {
                        acc += (g[(a, b)] * dvr[(a, b)]).re;
                    }
                }
                -2.0 * acc / self.shots
            })
            .collect();
        Ok((-ll / self.shots, grad))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-likelihood of a dataset under a model (probabilities floored at [`PROB_FLOOR`]).
pub fn log_likelihood(model: &TwoParticleModel, data: &CountsDataset) -> Result<f64> {
    let mut ll = 0.0;
    for s in &data.settings {
        let labels = model.labels(&s.prepared_sites)?;
        let probs = model.probs(&s.prepared_sites)?;
        for (&n, &p) in model_counts(s, &labels).iter().zip(&probs) {
            if n > 0 {
                ll += n as f64 * p.max(PROB_FLOOR).ln();
            }
        }
    }
    Ok(ll)
}

/// Two-stage maximum-likelihood fit of `M = U(S|I)` with fixed indistinguishability.
///
/// Stage 1 sets the loss to the pooled lost-particle frequency of the single-particle
/// settings. Stage 2 runs L-BFGS with a backtracking (Armijo) line search on the
/// log-likelihood over the `(|S|+|I|)²` Gell-Mann coefficients of a unitary whose
/// top-left block is `M`. Accepted steps never decrease the likelihood.
pub fn mle_fit(
    data: &CountsDataset,
    inputs: &[usize],
    outputs: &[usize],
    init: &GellMannCoeffs,
    indist: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    let d = inputs.len() + outputs.len();
    if init.d != d || init.c.len() != d * d {
        return mismatch(format!("initial coefficients must be for dimension {d}"));
    }
    if !(0.0..=1.0).contains(&indist) {
        return invalid("indistinguishability outside [0, 1]");
    }
    if !data.settings.iter().any(|s| s.prepared_sites.len() == 2) {
        return invalid("dataset has no two-particle setting");
    }
    let loss = loss_from_singles(data)?;
    let template = TwoParticleModel::new(
        CMatrix::zeros(outputs.len(), inputs.len()),
        loss,
        indist,
        inputs.to_vec(),
        outputs.to_vec(),
    )?;
    let mut grouped = Vec::new();
    for s in &data.settings {
        let labels = template.labels(&s.prepared_sites)?;
        grouped.push((s.prepared_sites.clone(), model_counts(s, &labels)));
    }
    let shots = grouped.iter().map(|(_, c)| c.iter().sum::<u64>()).sum::<u64>().max(1) as f64;
    let lik = Likelihood {
        data: grouped,
        inputs,
        outputs,
        loss,
        indist,
        d,
        shots,
    };

    let mut x = init.c.clone();
    let (mut f, mut g) = lik.eval(&x)?;
    if !f.is_finite() {
        return Err(Error::Numerical("non-finite likelihood at the initial point".into()));
    }
    let mut trace = vec![-f * shots];
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        if g.iter().fold(0.0f64, |a, v| a.max(v.abs())) <= opts.grad_tol {
            converged = true;
            break;
        }
        it += 1;
        // two-loop recursion
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &dir);
            for (di, yi) in dir.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = hist
            .last()
            .map_or(1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300), |(s, y, _)| {
                dot(s, y) / dot(y, y)
            });
        dir.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for (di, si) in dir.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = lik.eval(&trial)?;
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                break Some((trial, ft, gt));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((xn, fnew, gn)) = accepted else {
            converged = true;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.remove(0);
            }
        }
        let change = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        trace.push(-f * shots);
        if change.abs() <= opts.f_tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let coeffs = GellMannCoeffs { d, c: x };
    let v = crate::linopt::unitary_from_coeffs(&coeffs);
    let mut model = lik.model(&v);
    model.m = gauge_fix(&model.m);
    Ok(FitResult {
        model,
        coeffs,
        log_likelihood: -f * shots,
        trace,
        iterations: it,
        converged,
    })
}
