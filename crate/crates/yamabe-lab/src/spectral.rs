//! First Robin eigenvalues, the admissible β range, and the Yamabe-type
//! quotients λ(M) and λ_τ.

use crate::geometry::{norm_lp, GeometryError, GeometrySpec, RadialGeometry};
use crate::linalg::{smallest_eig_generalized, solve_banded, BandedSystem, LinalgError};
use crate::operators::{assemble, box_system, OperatorError, RobinSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("quotient minimization stalled after {iterations} steps at value {last}")]
    NoConvergence { iterations: usize, last: f64 },
    #[error("quotient of the zero field is undefined")]
    ZeroField,
}

/// Box_g with boundary coefficient (2/(p-2))h_g − β on both components.
pub fn robin_eigen_system(geom: &RadialGeometry, shift_c0: &[f64], beta: f64) -> Result<RobinSystem, SpectralError> {
    let rc = geom.dim.robin_coeff;
    Ok(assemble(geom, shift_c0, (rc * geom.h_inner - beta, rc * geom.h_outer - beta))?)
}

/// Smallest eigenpair of Box_g φ = η φ with ∂φ/∂ν + ((2/(p-2))h_g − β)φ = 0.
/// φ is M-normalized and positive.
pub fn first_robin_eigen(geom: &RadialGeometry, shift_c0: &[f64], beta: f64) -> Result<(f64, Vec<f64>), SpectralError> {
    if !(beta >= 0.0) {
        return Err(SpectralError::Precondition(format!("beta = {beta} must be >= 0")));
    }
    let sys = robin_eigen_system(geom, shift_c0, beta)?;
    let (_, phi) = smallest_eig_generalized(&sys.form, &sys.mass)?;
    Ok((flux_rayleigh(&FluxPencil::from_system(&sys), &phi), phi))
}

/// Rayleigh quotient in flux form. The assembled diagonal carries rounding of
/// order eps·(edge weight) per row; the eigenvector error enters only
/// quadratically here, so this recovers η₁ far below that floor.
pub(crate) fn flux_rayleigh(pencil: &FluxPencil, x: &[f64]) -> f64 {
    let den: f64 = pencil.mass.iter().zip(x).map(|(m, v)| m * v * v).sum();
    pencil.energy(x) / den
}

/// η₁ of the geometry (β = 0, c₀ = R_g).
pub fn first_eigen(geom: &RadialGeometry) -> Result<(f64, Vec<f64>), SpectralError> {
    first_robin_eigen(geom, &geom.scalar, 0.0)
}

/// Largest β in [0, 2·(2/(p-2))·max h] with η_{1,β} > 0, by bisection to 1e-6 relative.
pub fn find_c_eta1(geom: &RadialGeometry) -> Result<f64, SpectralError> {
    let (eta, _) = first_eigen(geom)?;
    if !(eta > 0.0) {
        return Err(SpectralError::Precondition(format!("eta1 = {eta} is not positive")));
    }
    if !(geom.h_inner > 0.0 && geom.h_outer > 0.0) {
        return Err(SpectralError::Precondition(format!(
            "mean curvature must be positive on both boundary spheres (inner {}, outer {})",
            geom.h_inner, geom.h_outer
        )));
    }
    let eta_at = |b: f64| first_robin_eigen(geom, &geom.scalar, b).map(|e| e.0);
    let (mut lo, mut hi) = (0.0, 2.0 * geom.dim.robin_coeff * geom.h_inner.max(geom.h_outer));
    if eta_at(hi)? > 0.0 {
        return Ok(hi);
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if eta_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// 2^{-2/n}·(n(n-2)/4)·Vol(S^n)^{2/n}, the hemisphere constant.
pub fn sharp_bound(n: usize) -> f64 {
    let nf = n as f64;
    let vol_sn = crate::geometry::sphere_measure(n);
    2f64.powf(-2.0 / nf) * (nf * (nf - 2.0) / 4.0) * vol_sn.powf(2.0 / nf)
}

/// Quotient data in flux form: K u = zeroth·u + Σ edge·(difference), with lumped mass.
#[derive(Clone, Debug)]
pub(crate) struct FluxPencil {
    pub edge: Vec<f64>,
    pub zeroth: Vec<f64>,
    pub mass: Vec<f64>,
}

impl FluxPencil {
    pub fn from_system(sys: &RobinSystem) -> Self {
        FluxPencil { edge: sys.edge.clone(), zeroth: sys.zeroth.clone(), mass: sys.mass.clone() }
    }

    /// Principal block on nodes lo..=hi, the other nodes held at zero.
    pub fn restrict(sys: &RobinSystem, lo: usize, hi: usize) -> Self {
        let mut zeroth = sys.zeroth[lo..=hi].to_vec();
        if lo > 0 {
            zeroth[0] += sys.edge[lo - 1];
        }
        if hi + 1 < sys.mass.len() {
            let last = zeroth.len() - 1;
            zeroth[last] += sys.edge[hi];
        }
        FluxPencil { edge: sys.edge[lo..hi].to_vec(), zeroth, mass: sys.mass[lo..=hi].to_vec() }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.zeroth.iter().zip(u).map(|(z, x)| z * x).collect();
        for (i, w) in self.edge.iter().enumerate() {
            let f = w * (u[i] - u[i + 1]);
            out[i] += f;
            out[i + 1] -= f;
        }
        out
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        let z: f64 = self.zeroth.iter().zip(u).map(|(a, x)| a * x * x).sum();
        let g: f64 = self.edge.iter().enumerate().map(|(i, w)| w * (u[i] - u[i + 1]).powi(2)).sum();
        z + g
    }

    /// K + σM as a banded matrix.
    pub fn shifted(&self, sigma: f64) -> BandedSystem {
        let mut diag: Vec<f64> = self.zeroth.iter().zip(&self.mass).map(|(z, m)| z + sigma * m).collect();
        for (i, w) in self.edge.iter().enumerate() {
            diag[i] += w;
            diag[i + 1] += w;
        }
        let off = self.edge.iter().map(|w| -w).collect();
        BandedSystem::symmetric(diag, off).expect("bands consistent")
    }

    fn p_mass(&self, u: &[f64], p: f64) -> f64 {
        self.mass.iter().zip(u).map(|(m, x)| m * x.abs().powf(p)).sum()
    }
}

/// Tuning knobs for the λ_τ minimizer.
#[derive(Clone, Debug, Serialize)]
pub struct MinimizeOptions {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// stop when the quotient decreases by less than this (relative) over 5 steps
    pub tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { seed: 7, restarts: 3, max_iter: 5000, tol: 1e-10 }
    }
}

/// Result of a quotient minimization.
#[derive(Clone, Debug, Serialize)]
pub struct YamabeMinimum {
    pub lambda: f64,
    #[serde(skip)]
    pub minimizer: Vec<f64>,
    pub iterations: usize,
    /// max − min over the eigenfunction start and the random restarts
    pub spread: f64,
    pub candidates: Vec<f64>,
}

/// Sobolev-preconditioned projected gradient for min uᵀKu / (Σ M u^p)^{2/p} over u ≥ 0.
/// Returns (value, minimizer normalized to Σ M u^p = 1, iterations).
pub(crate) fn minimize_quotient(
    pencil: &FluxPencil,
    p: f64,
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<(f64, Vec<f64>, usize), SpectralError> {
    let normalize = |u: &mut Vec<f64>| -> bool {
        let s = pencil.p_mass(u, p);
        if !(s > 0.0) || !s.is_finite() {
            return false;
        }
        let f = s.powf(-1.0 / p);
        u.iter_mut().for_each(|x| *x *= f);
        true
    };
    let mut u: Vec<f64> = init.iter().map(|x| x.max(0.0)).collect();
    if !normalize(&mut u) {
        return Err(SpectralError::ZeroField);
    }
    // shift making the preconditioner positive definite
    let lmin = smallest_eig_generalized(&pencil.shifted(0.0), &pencil.mass)?.0;
    let sigma = (-lmin).max(0.0) + lmin.abs().max(1.0);
    let precond = pencil.shifted(sigma);

    let mut q = pencil.energy(&u);
    let mut history = vec![q];
    let mut t: f64 = 0.5;
    for it in 1..=max_iter {
        let ku = pencil.apply(&u);
        let grad: Vec<f64> = (0..u.len()).map(|i| 2.0 * (ku[i] - q * pencil.mass[i] * u[i].powf(p - 1.0))).collect();
        let dir = solve_banded(&precond, &grad)?;
        let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut accepted = false;
        if slope > 0.0 {
            t = (2.0 * t).min(1.0);
            for _ in 0..60 {
                let mut cand: Vec<f64> = u.iter().zip(&dir).map(|(x, d)| (x - t * d).max(0.0)).collect();
                if normalize(&mut cand) {
                    let qc = pencil.energy(&cand);
                    if qc <= q - 1e-4 * t * slope {
                        u = cand;
                        q = qc;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        history.push(q);
        let k = history.len() - 1;
        let stalled = !accepted || (k >= 5 && history[k - 5] - q < tol * q.abs().max(1.0));
        if stalled {
            return Ok((q, u, it));
        }
    }
    Err(SpectralError::NoConvergence { iterations: max_iter, last: q })
}

/// The form K_τ: c₀ = R_g + τ, boundary (2/(p-2))h_g.
pub fn tau_system(geom: &RadialGeometry, tau: f64) -> Result<RobinSystem, SpectralError> {
    Ok(box_system(geom, tau)?)
}

/// uᵀK_τu / ‖u‖_p².
pub fn yamabe_quotient(geom: &RadialGeometry, tau: f64, u: &[f64]) -> Result<f64, SpectralError> {
    geom.check_len(u)?;
    if u.iter().all(|&x| x == 0.0) {
        return Err(SpectralError::ZeroField);
    }
    let sys = tau_system(geom, tau)?;
    let num = crate::operators::quadratic_form(&sys, u);
    let den = norm_lp(geom, u, geom.dim.p)?;
    Ok(num / (den * den))
}

/// λ_τ by projected gradient from the Robin eigenfunction, plus seeded random restarts.
pub fn minimize_yamabe_quotient(geom: &RadialGeometry, tau: f64, opts: &MinimizeOptions) -> Result<YamabeMinimum, SpectralError> {
    if tau > 0.0 {
        return Err(SpectralError::Precondition(format!("tau = {tau} must be <= 0")));
    }
    let sys = tau_system(geom, tau)?;
    let pencil = FluxPencil::from_system(&sys);
    let p = geom.dim.p;
    let (_, phi) = first_robin_eigen(geom, &sys.c0, 0.0)?;
    let mut best = minimize_quotient(&pencil, p, &phi, opts.max_iter, opts.tol)?;
    let mut candidates = vec![best.0];
    let mut iterations = best.2;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let init: Vec<f64> = (0..geom.num_nodes).map(|_| 0.2 + rng.gen::<f64>()).collect();
        let run = minimize_quotient(&pencil, p, &init, opts.max_iter, opts.tol)?;
        candidates.push(run.0);
        iterations += run.2;
        if run.0 < best.0 {
            best = run;
        }
    }
    let spread = candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - candidates.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(YamabeMinimum { lambda: best.0, minimizer: best.1, iterations, spread, candidates })
}

/// Single warm-started minimization (no restarts).
pub fn minimize_yamabe_from(geom: &RadialGeometry, tau: f64, init: &[f64], opts: &MinimizeOptions) -> Result<YamabeMinimum, SpectralError> {
    geom.check_len(init)?;
    let sys = tau_system(geom, tau)?;
    let (q, u, it) = minimize_quotient(&FluxPencil::from_system(&sys), geom.dim.p, init, opts.max_iter, opts.tol)?;
    Ok(YamabeMinimum { lambda: q, minimizer: u, iterations: it, spread: 0.0, candidates: vec![q] })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenClass {
    Negative,
    Zero,
    Positive,
}

impl fmt::Display for EigenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EigenClass::Negative => "negative",
            EigenClass::Zero => "zero",
            EigenClass::Positive => "positive",
        })
    }
}

/// Sign classification of η₁ with a Richardson-based zero band.
#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub eta1: f64,
    pub eta1_coarse: f64,
    /// estimated discretization error of eta1
    pub error_estimate: f64,
    pub threshold: f64,
    pub class: EigenClass,
    #[serde(skip)]
    pub phi: Vec<f64>,
}

pub fn richardson_pair(spec: &GeometrySpec) -> Result<((f64, Vec<f64>), f64, f64), SpectralError> {
    let cells = spec.num_nodes - 1;
    let coarse = cells / 2;
    if coarse < 4 {
        return Err(SpectralError::Precondition(format!("{} nodes is too coarse to classify", spec.num_nodes)));
    }
    let fine = first_eigen(&spec.build()?)?;
    let eta_c = first_eigen(&spec.with_nodes(coarse + 1).build()?)?.0;
    let ratio = (cells as f64 / coarse as f64).powi(2);
    Ok((fine, eta_c, ratio))
}

/// Classifies sign(η₁); |η₁| ≤ 10× the Richardson estimate counts as zero.
pub fn classify(spec: &GeometrySpec) -> Result<Classification, SpectralError> {
    let ((eta, phi), eta_c, ratio) = richardson_pair(spec)?;
    let geom = spec.build()?;
    let est = (eta - eta_c).abs() / (ratio - 1.0);
    let threshold = (10.0 * est).max(1e-12 * (1.0 + geom.sup_abs_scalar()));
    let class = if eta.abs() <= threshold {
        EigenClass::Zero
    } else if eta < 0.0 {
        EigenClass::Negative
    } else {
        EigenClass::Positive
    };
    Ok(Classification { eta1: eta, eta1_coarse: eta_c, error_estimate: est, threshold, class, phi })
}

/// Adds a constant to the flat-frame potential so that the Richardson
/// extrapolated η₁ vanishes. Used to land in the zero class on purpose.
pub fn tune_zero_potential(spec: &GeometrySpec) -> Result<(GeometrySpec, f64), SpectralError> {
    let extrapolated = |c: f64| -> Result<f64, SpectralError> {
        let s = GeometrySpec { frame: spec.frame.with_constant(c), ..spec.clone() };
        let ((eta, _), eta_c, ratio) = richardson_pair(&s)?;
        Ok(eta + (eta - eta_c) / (ratio - 1.0))
    };
    let (mut c0, mut f0) = (0.0, extrapolated(0.0)?);
    let mut c1 = -f0;
    let mut f1 = extrapolated(c1)?;
    for _ in 0..30 {
        if f1.abs() < 1e-13 || f1 == f0 {
            break;
        }
        let c2 = c1 - f1 * (c1 - c0) / (f1 - f0);
        c0 = c1;
        f0 = f1;
        c1 = c2;
        f1 = extrapolated(c1)?;
    }
    Ok((GeometrySpec { frame: spec.frame.with_constant(c1), ..spec.clone() }, c1))
}

/// Summary of the spectral quantities for one geometry.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub eta1: f64,
    #[serde(skip)]
    pub phi: Vec<f64>,
    pub beta: Option<f64>,
    pub eta1_beta: Option<f64>,
    pub lambda_m: f64,
    pub tau: f64,
    pub lambda_tau: f64,
    #[serde(skip)]
    pub minimizer: Vec<f64>,
    pub sharp_bound: f64,
}
