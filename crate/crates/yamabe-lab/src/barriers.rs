//! Sub/super-solution pairs for the three sign classes of η₁, the local
//! Dirichlet solve, and the partition-of-unity gluing.
//!
//! All inequalities are checked on the discrete rows the iteration actually
//! solves: (K_τ u)_i / row_scale_i − λu_i^{p−1}, with the boundary rows also
//! carrying −(2/(p−2))ζu^{p/2}.

use crate::geometry::{GeometryError, GeometrySpec, RadialGeometry};
use crate::linalg::{smallest_eig_generalized, solve_banded, LinalgError};
use crate::operators::{assemble, box_system, OperatorError, RobinSystem};
use crate::spectral::{
    classify, find_c_eta1, first_eigen, first_robin_eigen, flux_rayleigh, minimize_quotient, minimize_yamabe_quotient, EigenClass,
    FluxPencil, MinimizeOptions, SpectralError,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    ZeroEigen,
    NegativeEigen,
    PositiveEigen,
}

#[derive(Debug, Error, Clone)]
pub enum BarrierError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("eta1 = {eta1} is not in the {expected} class (zero threshold {threshold})")]
    WrongCase { expected: EigenClass, eta1: f64, threshold: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{which} inequality violated at node {node}: {value:e} (tolerance {tol:e})")]
    Validation { which: &'static str, node: usize, value: f64, tol: f64 },
    #[error("local Dirichlet problem not solvable after {retries} shrinks: {detail}")]
    DomainSize { retries: usize, detail: String },
    #[error("gluing failed at node {node}: super-solution row {value:e} after {halvings} halvings of gamma (last gamma {gamma:e})")]
    Glue { node: usize, value: f64, gamma: f64, halvings: usize, data: Box<GlueData> },
    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Box<BarrierError> },
}

impl BarrierError {
    pub fn stage(self, stage: &'static str) -> BarrierError {
        match self {
            e @ BarrierError::Stage { .. } => e,
            e => BarrierError::Stage { stage, source: Box::new(e) },
        }
    }

    /// Innermost error below any stage tags.
    pub fn root(&self) -> &BarrierError {
        match self {
            BarrierError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

trait StageExt<T> {
    fn at(self, stage: &'static str) -> Result<T, BarrierError>;
}

impl<T, E: Into<BarrierError>> StageExt<T> for Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T, BarrierError> {
        self.map_err(|e| e.into().stage(stage))
    }
}

/// Every constant used to build a pair.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub eta1: Option<f64>,
    pub eta1_beta: Option<f64>,
    pub beta: Option<f64>,
    pub c_eta1: Option<f64>,
    pub delta: Option<f64>,
    pub delta_cap: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub k1: Option<f64>,
    pub t_scale: Option<f64>,
    /// ζ from the constructive boundary inequality
    pub zeta_barrier: Option<f64>,
    /// ζ cap from the iteration smallness inequalities
    pub zeta_iteration_cap: Option<f64>,
    pub zeta_active: Option<String>,
    pub resolvent_norm: Option<f64>,
    pub a_shift: Option<f64>,
    pub omega_bounds: Option<(f64, f64)>,
    pub omega_retries: Option<usize>,
    pub dirichlet_lambda1: Option<f64>,
    pub dirichlet_mu: Option<f64>,
    pub glue_halvings: Option<usize>,
    pub region_components: Option<[usize; 3]>,
    pub sub_worst: Option<f64>,
    pub super_worst: Option<f64>,
    pub tol_b: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierPair {
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub lambda: f64,
    pub zeta: f64,
    pub a_shift: f64,
    pub tau: f64,
    pub case_tag: CaseTag,
    pub diagnostics: Diagnostics,
}

/// Worst rows of a candidate pair.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    /// max over nodes of the sub-solution row (must be ≤ tol)
    pub sub_worst: (usize, f64),
    /// min over nodes of the super-solution row (must be ≥ −tol)
    pub super_worst: (usize, f64),
    /// max of u_minus − u_plus
    pub ordering_worst: (usize, f64),
    /// min over nodes and s of −R − τ + λ(p−1)s^{p−2} + A
    pub shift_margin: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Discrete rows of −aΔ_g u + (R+τ)u − λu^{p−1} (interior) and
/// B_g u − (2/(p−2))ζu^{p/2} (ends, plus their half-cell interior part).
pub fn equation_rows(geom: &RadialGeometry, sys: &RobinSystem, lambda: f64, zeta: f64, u: &[f64]) -> Vec<f64> {
    let p = geom.dim.p;
    let n = u.len();
    let ku = sys.apply_form(u);
    let mut r: Vec<f64> = (0..n).map(|i| ku[i] - sys.mass[i] * lambda * u[i].max(0.0).powf(p - 1.0)).collect();
    let rc = geom.dim.robin_coeff;
    let (s0, s1) = geom.bdry_weights;
    r[0] -= geom.dim.a * s0 * rc * zeta * u[0].max(0.0).powf(0.5 * p);
    r[n - 1] -= geom.dim.a * s1 * rc * zeta * u[n - 1].max(0.0).powf(0.5 * p);
    r.iter().zip(&sys.row_scale).map(|(x, s)| x / s).collect()
}

/// Magnitude the rows are compared against: max(1, sup|R+τ|·sup u, |λ|·sup u^{p−1}).
pub fn residual_scale(geom: &RadialGeometry, tau: f64, lambda: f64, u: &[f64]) -> f64 {
    let sup_u = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sup_c = geom.scalar.iter().fold(0.0f64, |m, r| m.max((r + tau).abs()));
    1f64.max(sup_c * sup_u).max(lambda.abs() * sup_u.powf(geom.dim.p - 1.0))
}

/// A = max(1, max_{x,s}(R + τ − λ(p−1)s^{p−2})) + 1 over s ∈ [smin, smax].
pub fn choose_shift(geom: &RadialGeometry, tau: f64, lambda: f64, smin: f64, smax: f64) -> f64 {
    let p = geom.dim.p;
    let sup_c = geom.scalar.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r + tau));
    let samples: Vec<f64> =
        if lambda <= 0.0 { vec![smin, smax] } else { (0..64).map(|k| smin + (smax - smin) * k as f64 / 63.0).collect() };
    let worst = samples.iter().map(|s| sup_c - lambda * (p - 1.0) * s.max(0.0).powf(p - 2.0)).fold(f64::NEG_INFINITY, f64::max);
    worst.max(1.0) + 1.0
}

fn shift_margin(geom: &RadialGeometry, tau: f64, lambda: f64, a_shift: f64, smin: f64, smax: f64) -> f64 {
    let p = geom.dim.p;
    let sup_c = geom.scalar.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r + tau));
    (0..=256)
        .map(|k| smin + (smax - smin) * k as f64 / 256.0)
        .chain([smin, smax])
        .map(|s| -sup_c + lambda * (p - 1.0) * s.max(0.0).powf(p - 2.0) + a_shift)
        .fold(f64::INFINITY, f64::min)
}

fn arg_extreme(v: &[f64], max: bool) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate() {
        if (max && x > best.1) || (!max && x < best.1) {
            best = (i, x);
        }
    }
    best
}

/// Evaluates every barrier inequality; never fails on a bad pair, only on bad input.
pub fn check_barrier(
    geom: &RadialGeometry,
    u_minus: &[f64],
    u_plus: &[f64],
    lambda: f64,
    zeta: f64,
    a_shift: f64,
    tau: f64,
) -> Result<ValidationReport, BarrierError> {
    geom.check_len(u_minus)?;
    geom.check_len(u_plus)?;
    let sys = box_system(geom, tau)?;
    let tol = 1e-8 * residual_scale(geom, tau, lambda, u_plus);
    let sub_worst = arg_extreme(&equation_rows(geom, &sys, lambda, zeta, u_minus), true);
    let super_worst = arg_extreme(&equation_rows(geom, &sys, lambda, zeta, u_plus), false);
    let gap: Vec<f64> = u_minus.iter().zip(u_plus).map(|(a, b)| a - b).collect();
    let ordering_worst = arg_extreme(&gap, true);
    let smin = u_minus.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = u_plus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let margin = shift_margin(geom, tau, lambda, a_shift, smin, smax);
    let nonneg = smin >= 0.0 && u_minus.iter().any(|&x| x > 0.0);
    let passed = nonneg && ordering_worst.1 <= 0.0 && sub_worst.1 <= tol && super_worst.1 >= -tol && margin > 0.0 && zeta >= 0.0;
    Ok(ValidationReport { sub_worst, super_worst, ordering_worst, shift_margin: margin, tol, passed })
}

/// Errors with the first failing inequality and its worst node.
pub fn validate_barrier(geom: &RadialGeometry, pair: &BarrierPair) -> Result<ValidationReport, BarrierError> {
    let rep = check_barrier(geom, &pair.u_minus, &pair.u_plus, pair.lambda, pair.zeta, pair.a_shift, pair.tau)?;
    if rep.passed {
        return Ok(rep);
    }
    let fail = |which, (node, value): (usize, f64)| BarrierError::Validation { which, node, value, tol: rep.tol };
    if let Some(node) = pair.u_minus.iter().position(|&x| x < 0.0) {
        return Err(fail("nonnegativity", (node, pair.u_minus[node])));
    }
    if pair.u_minus.iter().all(|&x| x == 0.0) {
        return Err(fail("nontrivial sub-solution", (0, 0.0)));
    }
    if rep.ordering_worst.1 > 0.0 {
        return Err(fail("ordering", rep.ordering_worst));
    }
    if rep.sub_worst.1 > rep.tol {
        return Err(fail("sub-solution", rep.sub_worst));
    }
    if rep.super_worst.1 < -rep.tol {
        return Err(fail("super-solution", rep.super_worst));
    }
    if pair.zeta < 0.0 {
        return Err(fail("zeta sign", (0, pair.zeta)));
    }
    Err(fail("shift", (0, rep.shift_margin)))
}

impl BarrierPair {
    /// Builds and validates; the validation is part of construction.
    #[allow(clippy::too_many_arguments)]
    pub fn validated(
        geom: &RadialGeometry,
        u_minus: Vec<f64>,
        u_plus: Vec<f64>,
        lambda: f64,
        zeta: f64,
        tau: f64,
        case_tag: CaseTag,
        mut diagnostics: Diagnostics,
    ) -> Result<BarrierPair, BarrierError> {
        let smin = u_minus.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = u_plus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let a_shift = choose_shift(geom, tau, lambda, smin, smax);
        diagnostics.a_shift = Some(a_shift);
        let mut pair = BarrierPair { u_minus, u_plus, lambda, zeta, a_shift, tau, case_tag, diagnostics };
        let rep = validate_barrier(geom, &pair)?;
        pair.diagnostics.sub_worst = Some(rep.sub_worst.1);
        pair.diagnostics.super_worst = Some(rep.super_worst.1);
        pair.diagnostics.tol_b = Some(rep.tol);
        Ok(pair)
    }

    /// Same pair with a smaller ζ, revalidated.
    pub fn with_zeta(&self, geom: &RadialGeometry, zeta: f64) -> Result<BarrierPair, BarrierError> {
        let mut pair = self.clone();
        pair.zeta = zeta;
        let rep = validate_barrier(geom, &pair)?;
        pair.diagnostics.sub_worst = Some(rep.sub_worst.1);
        pair.diagnostics.super_worst = Some(rep.super_worst.1);
        Ok(pair)
    }
}

/// Outcome of the zero class: the eigenfunction itself solves λ = ζ = 0.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroSolution {
    /// positive eigenfunction scaled to sup φ = 1
    #[serde(skip)]
    pub phi: Vec<f64>,
    pub eta1: f64,
    pub threshold: f64,
    /// sup over the strong rows of Box_g φ and B_g φ
    pub box_residual: f64,
}

pub fn case_zero(spec: &GeometrySpec) -> Result<ZeroSolution, BarrierError> {
    let c = classify(spec)?;
    if c.class != EigenClass::Zero {
        return Err(BarrierError::WrongCase { expected: EigenClass::Zero, eta1: c.eta1, threshold: c.threshold });
    }
    let geom = spec.build()?;
    let sys = box_system(&geom, 0.0)?;
    let s = c.phi.iter().cloned().fold(0.0, f64::max);
    let phi: Vec<f64> = c.phi.iter().map(|x| x / s).collect();
    let rows = equation_rows(&geom, &sys, 0.0, 0.0, &phi);
    let box_residual = rows.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(ZeroSolution { phi, eta1: c.eta1, threshold: c.threshold, box_residual })
}

/// Power iteration with u ↦ K_A⁻¹M(A − R + η)u, whose top eigenvalue is 1 at φ.
/// The eigensolver stops at a residual near 1e-10; this map is the one the
/// monotone iteration applies, so its fixed point is what a seeded run sees.
/// Returns (η, φ) with sup φ = 1.
///
/// Only the seed of a fixed-point run needs this: the polished vector is no
/// smoother, and at h ≈ 1e-4 its storage round-off already dominates the
/// O(h²) curvature error at the one-sided boundary stencil.
pub fn polish_null_vector(geom: &RadialGeometry, eta: f64, phi: &[f64]) -> Result<(f64, Vec<f64>), BarrierError> {
    let sys = box_system(geom, 0.0)?;
    let pencil = FluxPencil::from_system(&sys);
    let sup_c = geom.scalar.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r - eta));
    let a_shift = sup_c.max(1.0) + 1.0;
    let rc = geom.dim.robin_coeff;
    let sys_a = assemble(geom, &vec![a_shift; geom.num_nodes], (rc * geom.h_inner, rc * geom.h_outer))?;
    let normalize = |v: &[f64]| {
        let s = v.iter().cloned().fold(0.0, f64::max);
        v.iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let (mut eta, mut u) = (eta, normalize(phi));
    for _ in 0..200 {
        let rhs: Vec<f64> = (0..u.len()).map(|i| sys.mass[i] * (a_shift - geom.scalar[i] + eta) * u[i]).collect();
        let w = normalize(&sys_a.solve_form(&rhs)?);
        let change = w.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = w;
        eta = flux_rayleigh(&pencil, &u);
        if change <= 4.0 * f64::EPSILON {
            break;
        }
    }
    Ok((eta, u))
}

fn require_positive_h(geom: &RadialGeometry) -> Result<(), BarrierError> {
    if geom.h_inner > 0.0 && geom.h_outer > 0.0 {
        Ok(())
    } else {
        Err(BarrierError::Precondition(format!(
            "mean curvature must be positive on both boundary spheres (inner {}, outer {}); precondition the geometry",
            geom.h_inner, geom.h_outer
        )))
    }
}

/// u₋ = tφ with sup u₋ = 0.9, u₊ ≡ K₁, ζ = inf h·K₁^{(2−p)/2}.
pub fn case_negative(geom: &RadialGeometry, lambda: Option<f64>) -> Result<BarrierPair, BarrierError> {
    let (eta1, phi) = first_eigen(geom).at("eigen")?;
    if !(eta1 < 0.0) {
        return Err(BarrierError::Precondition(format!("eta1 = {eta1} is not negative")).stage("eigen"));
    }
    require_positive_h(geom).at("precondition")?;
    let lambda = lambda.unwrap_or(0.5 * eta1);
    if !(lambda > eta1 && lambda < 0.0) {
        return Err(BarrierError::Precondition(format!("lambda = {lambda} must lie in ({eta1}, 0)")).stage("lambda"));
    }
    let p = geom.dim.p;
    let sup_phi = phi.iter().cloned().fold(0.0, f64::max);
    let t = 0.9 / sup_phi;
    let u_minus: Vec<f64> = phi.iter().map(|x| t * x).collect();
    let inf_r = geom.scalar.iter().cloned().fold(f64::INFINITY, f64::min);
    let sup_um = u_minus.iter().cloned().fold(0.0, f64::max);
    let k1 = (inf_r / lambda).max(sup_um.powf(p - 2.0)).powf(1.0 / (p - 2.0));
    let zeta = geom.h_inner.min(geom.h_outer) * k1.powf(0.5 * (2.0 - p));
    let diagnostics = Diagnostics {
        eta1: Some(eta1),
        k1: Some(k1),
        t_scale: Some(t),
        zeta_barrier: Some(zeta),
        zeta_active: Some("barrier".into()),
        ..Default::default()
    };
    BarrierPair::validated(geom, u_minus, vec![k1; geom.num_nodes], lambda, zeta, 0.0, CaseTag::NegativeEigen, diagnostics).at("validate")
}

/// Result of the local Dirichlet problem on Ω = [ρ₀, ρ₁].
#[derive(Clone, Debug, Serialize)]
pub struct DirichletSolution {
    /// s·v, zero outside Ω
    #[serde(skip)]
    pub u: Vec<f64>,
    /// solution with coefficient μ, normalized Σ M v^p = 1, zero outside Ω
    #[serde(skip)]
    pub v: Vec<f64>,
    pub mu: f64,
    pub scale: f64,
    pub lambda_target: f64,
    /// nodes carrying the zero boundary values
    pub omega_nodes: (usize, usize),
    pub omega_bounds: (f64, f64),
    /// first Dirichlet eigenvalue of −Δ_g on Ω
    pub lambda1: f64,
    /// both smallness margins, each ≥ 0 when accepted
    pub smallness: (f64, f64),
    pub retries: usize,
    pub iterations: usize,
    pub newton_steps: usize,
}

/// Largest interior run of nodes with R + τ < 0, inset by one node.
pub fn select_omega(geom: &RadialGeometry, tau: f64) -> Result<(f64, f64), BarrierError> {
    let n = geom.num_nodes;
    let neg: Vec<bool> = geom.scalar.iter().map(|r| r + tau < 0.0).collect();
    let (mut best, mut start) = ((0usize, 0usize), None);
    for i in 1..n - 1 {
        match (neg[i], start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 {
                    best = (s, i);
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if n - 1 - s > best.1 - best.0 {
            best = (s, n - 1);
        }
    }
    // best = [first negative, one past last negative); inset by one node
    let (lo, hi) = (best.0 + 1, best.1.saturating_sub(2));
    if best.1 <= best.0 || hi < lo + 3 {
        return Err(BarrierError::Precondition("R_g + tau is not negative on an interior subinterval".into()));
    }
    Ok((geom.nodes[lo], geom.nodes[hi]))
}

fn omega_nodes(geom: &RadialGeometry, omega: (f64, f64)) -> Result<(usize, usize), BarrierError> {
    let idx = |r: f64| ((r - geom.r0) / geom.step).round() as isize;
    let (i0, i1) = (idx(omega.0), idx(omega.1));
    if !(omega.0 < omega.1) || i0 < 1 || i1 > geom.num_nodes as isize - 2 || i1 - i0 < 4 {
        return Err(BarrierError::Precondition(format!(
            "Omega = [{}, {}] must be strictly interior and span at least 4 cells",
            omega.0, omega.1
        )));
    }
    Ok((i0 as usize, i1 as usize))
}

/// First Dirichlet eigenpair of −Δ_g on the nodes strictly between i0 and i1.
pub fn dirichlet_eigen(geom: &RadialGeometry, i0: usize, i1: usize) -> Result<(f64, Vec<f64>), BarrierError> {
    let lap = assemble(geom, &vec![0.0; geom.num_nodes], (0.0, 0.0))?;
    let pencil = FluxPencil::restrict(&lap, i0 + 1, i1 - 1);
    let (_, phi) = smallest_eig_generalized(&pencil.shifted(0.0), &pencil.mass)?;
    Ok((flux_rayleigh(&pencil, &phi) / geom.dim.a, phi))
}

/// sup|R| + |τ| ≤ aλ₁ and a/n − ((n−2)/(2n) + 1/2)(sup|R| + |τ|)/λ₁ ≥ 0, as margins.
pub fn smallness_margins(geom: &RadialGeometry, tau: f64, lambda1: f64) -> (f64, f64) {
    let s = geom.sup_abs_scalar() + tau.abs();
    let nf = geom.dim.n as f64;
    let a = geom.dim.a;
    (a * lambda1 - s, a / nf - ((nf - 2.0) / (2.0 * nf) + 0.5) * s / lambda1)
}

fn newton_polish(pencil: &FluxPencil, mu: f64, p: f64, w: &mut [f64]) -> Result<usize, BarrierError> {
    let resid = |w: &[f64]| -> Vec<f64> {
        let kw = pencil.apply(w);
        (0..w.len()).map(|i| kw[i] - mu * pencil.mass[i] * w[i].powf(p - 1.0)).collect()
    };
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut f = resid(w);
    let mut steps = 0;
    for _ in 0..30 {
        let fnorm = sup(&f);
        let floor = 1e-15 * sup(&pencil.apply(w)).max(f64::MIN_POSITIVE);
        if fnorm <= floor {
            break;
        }
        let mut jac = pencil.shifted(0.0);
        for i in 0..w.len() {
            jac.diag[i] -= mu * (p - 1.0) * pencil.mass[i] * w[i].powf(p - 2.0);
        }
        let dw = solve_banded(&jac, &f)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let cand: Vec<f64> = w.iter().zip(&dw).map(|(x, d)| x - t * d).collect();
            if cand.iter().all(|&x| x > 0.0) {
                let fc = resid(&cand);
                if sup(&fc) < fnorm {
                    w.copy_from_slice(&cand);
                    f = fc;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        steps += 1;
        if !improved {
            break;
        }
    }
    Ok(steps)
}

/// Solves −aΔ_g u + (R+τ)u = λ_target u^{p−1} on Ω with u = 0 on ∂Ω.
/// Shrinks Ω by 20% about its centre (up to 8 times) until the smallness
/// condition holds with the computed Dirichlet λ₁ and μ > 0.
pub fn local_dirichlet_solve(
    geom: &RadialGeometry,
    omega: (f64, f64),
    tau: f64,
    lambda_target: f64,
) -> Result<DirichletSolution, BarrierError> {
    if !(lambda_target > 0.0) {
        return Err(BarrierError::Precondition(format!("lambda_target = {lambda_target} must be positive")));
    }
    let p = geom.dim.p;
    let sys = box_system(geom, tau)?;
    let mut bounds = omega;
    let mut last_issue = String::new();
    for retries in 0..=8 {
        if retries > 0 {
            let (c, half) = (0.5 * (bounds.0 + bounds.1), 0.4 * (bounds.1 - bounds.0));
            bounds = (c - half, c + half);
        }
        let (i0, i1) = omega_nodes(geom, bounds)?;
        if let Some(i) = (i0..=i1).find(|&i| !(geom.scalar[i] + tau < 0.0)) {
            return Err(BarrierError::Precondition(format!("R_g + tau = {} >= 0 at node {i} inside Omega", geom.scalar[i] + tau)));
        }
        let (lambda1, eig) = dirichlet_eigen(geom, i0, i1)?;
        let smallness = smallness_margins(geom, tau, lambda1);
        if smallness.0 < 0.0 || smallness.1 < 0.0 {
            last_issue = format!("smallness margins {:?} with lambda1 = {lambda1}", smallness);
            continue;
        }
        let pencil = FluxPencil::restrict(&sys, i0 + 1, i1 - 1);
        let opts = MinimizeOptions::default();
        let (mu, mut w, iterations) = minimize_quotient(&pencil, p, &eig, opts.max_iter, opts.tol)?;
        if !(mu > 0.0) || w.iter().any(|&x| !(x > 0.0)) {
            last_issue = format!("Dirichlet quotient minimum mu = {mu} is not positive");
            continue;
        }
        let newton_steps = newton_polish(&pencil, mu, p, &mut w)?;
        let scale = (mu / lambda_target).powf(1.0 / (p - 2.0));
        let mut v = vec![0.0; geom.num_nodes];
        v[i0 + 1..i1].copy_from_slice(&w);
        let u = v.iter().map(|x| scale * x).collect();
        return Ok(DirichletSolution {
            u,
            v,
            mu,
            scale,
            lambda_target,
            omega_nodes: (i0, i1),
            omega_bounds: (geom.nodes[i0], geom.nodes[i1]),
            lambda1,
            smallness,
            retries,
            iterations,
            newton_steps,
        });
    }
    Err(BarrierError::DomainSize { retries: 8, detail: last_issue })
}

/// Pieces of the glued super-solution.
#[derive(Clone, Debug, Serialize)]
pub struct GlueData {
    pub omega_bounds: (f64, f64),
    pub omega_nodes: (usize, usize),
    #[serde(skip)]
    pub u1: Vec<f64>,
    #[serde(skip)]
    pub phi_scaled: Vec<f64>,
    #[serde(skip)]
    pub u_plus: Vec<f64>,
    pub gamma: f64,
    pub theta: f64,
    #[serde(skip)]
    pub chi: [Vec<f64>; 3],
    /// nodes of Ω₁ = V∩D″, Ω₂ = V′∩D″, Ω₃ = D′
    #[serde(skip)]
    pub regions: [Vec<usize>; 3],
    pub region_components: [usize; 3],
    pub halvings: usize,
    /// worst super-solution row (node, value) of the last attempt
    pub worst: (usize, f64),
    pub tol: f64,
    /// V = ∅: φ returned unchanged
    pub degenerate: bool,
}

/// Quintic smoothstep, C² with zero first and second derivatives at 0 and 1.
pub fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn components(nodes: &[usize]) -> usize {
    if nodes.is_empty() {
        return 0;
    }
    1 + nodes.windows(2).filter(|w| w[1] != w[0] + 1).count()
}

/// Initial γ from 20λγ + 2 sup|R| γ² < θ/2 and 31λ(sup φ + γ)⁴γ < θ/2,
/// capped at half the least value of φ on Ω.
fn initial_gamma(lambda: f64, sup_r: f64, theta: f64, sup_phi: f64, min_phi_omega: f64) -> f64 {
    let half = 0.5 * theta;
    let root = if sup_r > 0.0 {
        (-20.0 * lambda + (400.0 * lambda * lambda + 8.0 * sup_r * half).sqrt()) / (4.0 * sup_r)
    } else {
        half / (20.0 * lambda)
    };
    let mut g = 0.9 * root;
    while 31.0 * lambda * (sup_phi + g).powi(4) * g >= half && g > 1e-300 {
        g *= 0.5;
    }
    g.min(0.5 * min_phi_omega)
}

/// Partition-of-unity super-solution ū = χ₁u₁ + χ₂φ + χ₃(φ+γ) on Ω, φ outside.
/// Interior super-solution rows are validated; γ is halved up to 12 times.
pub fn glue(
    geom: &RadialGeometry,
    u1: &[f64],
    phi_scaled: &[f64],
    lambda: f64,
    tau: f64,
    theta: f64,
) -> Result<(Vec<f64>, GlueData), BarrierError> {
    geom.check_len(u1)?;
    geom.check_len(phi_scaled)?;
    if let Some(i) = phi_scaled.iter().position(|&x| !(x > 0.0)) {
        return Err(BarrierError::Precondition(format!("scaled eigenfunction not positive at node {i}")));
    }
    let n = geom.num_nodes;
    let support: Vec<usize> = (0..n).filter(|&i| u1[i] != 0.0).collect();
    let (first, last) = match (support.first(), support.last()) {
        (Some(&a), Some(&b)) if a >= 2 && b + 2 < n => (a - 1, b + 1),
        _ => return Err(BarrierError::Precondition("u1 must vanish outside an interior subinterval".into())),
    };
    if !(theta > 0.0) {
        return Err(BarrierError::Precondition(format!("theta = {theta} must be positive")));
    }
    let sys = box_system(geom, tau)?;
    let sup_phi = phi_scaled.iter().cloned().fold(0.0, f64::max);
    let min_phi_omega = phi_scaled[first..=last].iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-8
        * residual_scale(geom, tau, lambda, &{
            let mut m = phi_scaled.to_vec();
            for i in first..=last {
                m[i] = m[i].max(u1[i]);
            }
            m
        });
    let interior_worst = |u: &[f64]| {
        let rows = equation_rows(geom, &sys, lambda, 0.0, u);
        arg_extreme(&rows[1..n - 1], false)
    };

    let mut data = GlueData {
        omega_bounds: (geom.nodes[first], geom.nodes[last]),
        omega_nodes: (first, last),
        u1: u1.to_vec(),
        phi_scaled: phi_scaled.to_vec(),
        u_plus: phi_scaled.to_vec(),
        gamma: 0.0,
        theta,
        chi: [vec![0.0; n], vec![1.0; n], vec![0.0; n]],
        regions: [vec![], vec![], vec![]],
        region_components: [0; 3],
        halvings: 0,
        worst: (0, 0.0),
        tol,
        degenerate: false,
    };

    if (first..=last).all(|i| u1[i] <= phi_scaled[i]) {
        let w = interior_worst(phi_scaled);
        data.worst = (w.0 + 1, w.1);
        data.degenerate = true;
        data.regions[1] = (first..=last).collect();
        data.region_components = [0, 1, 0];
        if w.1 < -tol {
            let (node, value) = data.worst;
            return Err(BarrierError::Glue { node, value, gamma: 0.0, halvings: 0, data: Box::new(data) });
        }
        return Ok((phi_scaled.to_vec(), data));
    }

    let sup_r = geom.sup_abs_scalar();
    let mut gamma = initial_gamma(lambda, sup_r, theta, sup_phi, min_phi_omega);
    for halvings in 0..=12 {
        if halvings > 0 {
            gamma *= 0.5;
        }
        let mut chi = [vec![0.0; n], vec![1.0; n], vec![0.0; n]];
        let mut regions: [Vec<usize>; 3] = [vec![], vec![], vec![]];
        let mut u_plus = phi_scaled.to_vec();
        for i in first..=last {
            let d = u1[i] - phi_scaled[i];
            let c1 = smoothstep((d - 0.625 * gamma) / (0.25 * gamma));
            let c2 = smoothstep((-d - 0.625 * gamma) / (0.25 * gamma));
            let c3 = 1.0 - c1 - c2;
            chi[0][i] = c1;
            chi[1][i] = c2;
            chi[2][i] = c3;
            u_plus[i] = c1 * u1[i] + c2 * phi_scaled[i] + c3 * (phi_scaled[i] + gamma);
            if d > 0.5 * gamma {
                regions[0].push(i);
            }
            if d < -0.5 * gamma {
                regions[1].push(i);
            }
            if d.abs() < gamma {
                regions[2].push(i);
            }
        }
        let w = interior_worst(&u_plus);
        data.gamma = gamma;
        data.halvings = halvings;
        data.worst = (w.0 + 1, w.1);
        data.region_components = [components(&regions[0]), components(&regions[1]), components(&regions[2])];
        data.chi = chi;
        data.regions = regions;
        data.u_plus = u_plus;
        if w.1 >= -tol {
            let u = data.u_plus.clone();
            return Ok((u, data));
        }
    }
    let (node, value) = data.worst;
    Err(BarrierError::Glue { node, value, gamma, halvings: 12, data: Box::new(data) })
}

/// Knobs for the positive class.
#[derive(Clone, Debug)]
pub struct PositiveOptions {
    /// β = beta_fraction · C_{η₁}
    pub beta_fraction: f64,
    /// δ = delta_fraction · closed-form cap, unless delta is given
    pub delta_fraction: f64,
    pub delta: Option<f64>,
    /// λ_τ when already known (continuation)
    pub lambda_tau: Option<f64>,
    pub omega: Option<(f64, f64)>,
    pub minimize: MinimizeOptions,
}

impl Default for PositiveOptions {
    fn default() -> Self {
        PositiveOptions {
            beta_fraction: 0.5,
            delta_fraction: 0.5,
            delta: None,
            lambda_tau: None,
            omega: None,
            minimize: MinimizeOptions::default(),
        }
    }
}

/// The constants of the positive class, computed before the Dirichlet solve and gluing.
#[derive(Clone, Debug, Serialize)]
pub struct PositiveConstants {
    pub eta1: f64,
    pub lambda_tau: f64,
    pub c_eta1: f64,
    pub beta: f64,
    pub eta1_beta: f64,
    pub delta_cap: f64,
    pub delta: f64,
    pub theta: f64,
    pub zeta: f64,
    /// δ·φ̂ with φ̂ the M-normalized β-eigenfunction
    #[serde(skip)]
    pub phi_scaled: Vec<f64>,
}

/// λ_τ, β, φ, δ, θ and ζ for the positive class.
pub fn positive_constants(geom: &RadialGeometry, tau: f64, opts: &PositiveOptions) -> Result<PositiveConstants, BarrierError> {
    if !(tau < 0.0) {
        return Err(BarrierError::Precondition(format!("tau = {tau} must be negative")).stage("tau"));
    }
    let (eta1, _) = first_eigen(geom).at("eigen")?;
    if !(eta1 > 0.0) {
        return Err(BarrierError::Precondition(format!("eta1 = {eta1} is not positive")).stage("eigen"));
    }
    require_positive_h(geom).at("precondition")?;
    let lambda_tau = match opts.lambda_tau {
        Some(l) => l,
        None => minimize_yamabe_quotient(geom, tau, &opts.minimize).at("lambda_tau")?.lambda,
    };
    if !(lambda_tau > 0.0) {
        return Err(BarrierError::Precondition(format!("lambda_tau = {lambda_tau} is not positive")).stage("lambda_tau"));
    }
    let c_eta1 = find_c_eta1(geom).at("beta")?;
    let beta = opts.beta_fraction * c_eta1;
    let (eta1_beta, phi_hat) = first_robin_eigen(geom, &geom.scalar, beta).at("eigen_beta")?;
    if !(eta1_beta + tau > 0.0) {
        return Err(BarrierError::Precondition(format!("eta1_beta + tau = {} is not positive", eta1_beta + tau)).stage("eigen_beta"));
    }
    let p = geom.dim.p;
    let inf_hat = phi_hat.iter().cloned().fold(f64::INFINITY, f64::min);
    let sup_hat = phi_hat.iter().cloned().fold(0.0, f64::max);
    let delta_cap = ((eta1_beta + tau) * inf_hat / (2f64.powf(p - 2.0) * lambda_tau * sup_hat.powf(p - 1.0))).powf(1.0 / (p - 2.0));
    let delta = opts.delta.unwrap_or(opts.delta_fraction * delta_cap);
    if !(delta > 0.0 && delta < delta_cap) {
        return Err(BarrierError::Precondition(format!("delta = {delta} outside (0, {delta_cap})")).stage("delta"));
    }
    let phi: Vec<f64> = phi_hat.iter().map(|x| delta * x).collect();
    let theta = (eta1_beta + tau) * delta * sup_hat - 2f64.powf(p - 2.0) * lambda_tau * (delta * inf_hat).powf(p - 1.0);
    let n = geom.num_nodes;
    let inf_b = phi[0].min(phi[n - 1]);
    let sup_b = phi[0].max(phi[n - 1]);
    let zeta = beta * inf_b / (geom.dim.robin_coeff * sup_b.powf(0.5 * p));
    Ok(PositiveConstants { eta1, lambda_tau, c_eta1, beta, eta1_beta, delta_cap, delta, theta, zeta, phi_scaled: phi })
}

/// Sub-solution from the local Dirichlet solve, super-solution by gluing.
pub fn case_positive(geom: &RadialGeometry, tau: f64, opts: &PositiveOptions) -> Result<BarrierPair, BarrierError> {
    let k = positive_constants(geom, tau, opts)?;
    let omega = match opts.omega {
        Some(o) => o,
        None => select_omega(geom, tau).at("omega")?,
    };
    let dir = local_dirichlet_solve(geom, omega, tau, k.lambda_tau).at("dirichlet")?;
    let (u_plus, glue_data) = glue(geom, &dir.u, &k.phi_scaled, k.lambda_tau, tau, k.theta).at("glue")?;
    let diagnostics = Diagnostics {
        eta1: Some(k.eta1),
        eta1_beta: Some(k.eta1_beta),
        beta: Some(k.beta),
        c_eta1: Some(k.c_eta1),
        delta: Some(k.delta),
        delta_cap: Some(k.delta_cap),
        gamma: Some(glue_data.gamma),
        theta: Some(k.theta),
        zeta_barrier: Some(k.zeta),
        zeta_active: Some("barrier".into()),
        omega_bounds: Some(dir.omega_bounds),
        omega_retries: Some(dir.retries),
        dirichlet_lambda1: Some(dir.lambda1),
        dirichlet_mu: Some(dir.mu),
        glue_halvings: Some(glue_data.halvings),
        region_components: Some(glue_data.region_components),
        ..Default::default()
    };
    BarrierPair::validated(geom, dir.u, u_plus, k.lambda_tau, k.zeta, tau, CaseTag::PositiveEigen, diagnostics).at("validate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Dimension, FlatFrame, PotentialTerm};

    fn well(nodes: usize, depth: f64, h: (f64, f64)) -> RadialGeometry {
        let frame = FlatFrame {
            potential: vec![PotentialTerm::Gauss { amp: -depth, width: 0.2, center: 1.5 }],
            h_inner: Some(h.0),
            h_outer: Some(h.1),
        };
        build_geometry(Dimension::new(3).unwrap(), 1.0, 2.0, nodes, |_| 1.0, &frame).unwrap()
    }

    #[test]
    fn smoothstep_is_a_c2_ramp() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(2.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let h = 1e-4;
        let d2 = (smoothstep(1.0) - 2.0 * smoothstep(1.0 - h) + smoothstep(1.0 - 2.0 * h)) / (h * h);
        assert!(d2.abs() < 1e-2);
    }

    #[test]
    fn negative_pair_is_valid_and_zeta_is_tight() {
        let g = well(401, 20.0, (1.0, 0.5));
        let pair = case_negative(&g, None).unwrap();
        let k1 = pair.u_plus[0];
        assert!(pair.lambda < 0.0 && pair.zeta > 0.0);
        let cont = g.h_inner.min(g.h_outer) * k1 - pair.zeta * k1.powf(0.5 * g.dim.p);
        assert!(cont.abs() < 1e-10);
        assert!(pair.u_minus.iter().cloned().fold(0.0, f64::max) < 1.0);
    }

    #[test]
    fn negative_rejects_bad_lambda_and_positive_geometry() {
        let g = well(201, 20.0, (1.0, 0.5));
        let eta1 = first_eigen(&g).unwrap().0;
        assert!(case_negative(&g, Some(0.1)).is_err());
        assert!(case_negative(&g, Some(1.5 * eta1)).is_err());
        let pos = well(201, 0.5, (1.0, 0.5));
        assert!(matches!(case_negative(&pos, None).unwrap_err().root(), BarrierError::Precondition(_)));
    }

    #[test]
    fn validator_rejects_inflated_constants() {
        let g = well(201, 20.0, (1.0, 0.5));
        let pair = case_negative(&g, None).unwrap();
        let mut bad = pair.clone();
        bad.zeta *= 1.5;
        assert!(matches!(validate_barrier(&g, &bad), Err(BarrierError::Validation { which: "super-solution", .. })));
        let mut bad = pair.clone();
        bad.u_minus.iter_mut().for_each(|x| *x *= 3.0);
        assert!(validate_barrier(&g, &bad).is_err());
    }

    #[test]
    fn dirichlet_solution_satisfies_its_rows() {
        let g = well(801, 8.0, (1.0, 0.5));
        let omega = select_omega(&g, -0.05).unwrap();
        let sol = local_dirichlet_solve(&g, omega, -0.05, 1.0).unwrap();
        let (i0, i1) = sol.omega_nodes;
        assert_eq!(sol.u[i0], 0.0);
        assert_eq!(sol.u[i1], 0.0);
        assert!(sol.smallness.0 >= 0.0 && sol.smallness.1 >= 0.0);
        let sys = box_system(&g, -0.05).unwrap();
        let rows = equation_rows(&g, &sys, 1.0, 0.0, &sol.u);
        let scale = residual_scale(&g, -0.05, 1.0, &sol.u);
        assert!(rows[i0 + 1..i1].iter().all(|r| r.abs() < 1e-9 * scale));
    }

    #[test]
    fn degenerate_glue_returns_phi() {
        let g = well(201, 8.0, (1.0, 0.5));
        let phi: Vec<f64> = vec![1.0; 201];
        let mut u1 = vec![0.0; 201];
        for (i, x) in u1.iter_mut().enumerate().take(120).skip(80) {
            *x = 0.01 * ((i - 80) as f64 * (120 - i) as f64) / 400.0;
        }
        // φ ≡ 1 need not be a super-solution inside the well; only the returned field is checked
        match glue(&g, &u1, &phi, 1e-3, -0.05, 1.0) {
            Ok((u, data)) => {
                assert!(data.degenerate);
                assert_eq!(u, phi);
            }
            Err(BarrierError::Glue { data, .. }) => assert!(data.degenerate && data.u_plus == phi),
            Err(e) => panic!("{e}"),
        }
    }
}
