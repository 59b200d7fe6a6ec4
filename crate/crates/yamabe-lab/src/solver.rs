//! Monotone iteration between barriers, the iteration-side ζ cap, and the
//! τ → 0⁻ continuation for the positive class.

use crate::barriers::{
    case_negative, case_positive, equation_rows, positive_constants, residual_scale, BarrierError, BarrierPair, PositiveOptions,
};
use crate::geometry::{norm_lp, GeometryError, RadialGeometry};
use crate::linalg::LinalgError;
use crate::operators::{assemble, box_system, check_maximum_principle, OperatorError, RobinSystem};
use crate::spectral::{minimize_yamabe_from, minimize_yamabe_quotient, SpectralError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("monotonicity lost at iteration {iteration}, node {node}: {value:e} with A = {a_shift}")]
    Monotonicity { iteration: usize, node: usize, value: f64, a_shift: f64 },
    #[error("no convergence after {iterations} iterations (increment {increment:e}, residual {residual:e})")]
    NoConvergence { iterations: usize, increment: f64, residual: f64 },
    #[error("degeneration along the continuation: {0}")]
    Degeneration(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationReport {
    /// first and last few iterates
    #[serde(skip)]
    pub iterates_kept: Vec<(usize, Vec<f64>)>,
    pub residual_history: Vec<f64>,
    pub increment_history: Vec<f64>,
    pub ordering_violations: usize,
    pub worst_violation: f64,
    /// linear steps whose difference field broke the discrete maximum principle
    pub max_principle_failures: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub solution: Vec<f64>,
    pub lambda: f64,
    pub zeta: f64,
    pub a_shift: f64,
    /// number of times A was doubled after a monotonicity failure
    pub a_retries: usize,
    pub scale: f64,
}

impl IterationReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// One step of −aΔ_g w + Aw = Au − (R+τ)u + λu^{p−1}, B_g w = (2/(p−2))ζu^{p/2},
/// in form-scaled rows, given the assembled K_A.
pub fn linear_step(geom: &RadialGeometry, sys_a: &RobinSystem, pair: &BarrierPair, u: &[f64]) -> Result<Vec<f64>, SolverError> {
    let rhs = step_rhs(geom, pair, pair.a_shift, u);
    Ok(sys_a.solve_form(&rhs)?)
}

fn step_rhs(geom: &RadialGeometry, pair: &BarrierPair, a_shift: f64, u: &[f64]) -> Vec<f64> {
    let p = geom.dim.p;
    let n = u.len();
    let mut rhs: Vec<f64> = (0..n)
        .map(|i| {
            let c = geom.scalar[i] + pair.tau;
            geom.vol_weights[i] * (a_shift * u[i] - c * u[i] + pair.lambda * u[i].max(0.0).powf(p - 1.0))
        })
        .collect();
    let coef = geom.dim.a * geom.dim.robin_coeff * pair.zeta;
    rhs[0] += coef * geom.bdry_weights.0 * u[0].max(0.0).powf(0.5 * p);
    rhs[n - 1] += coef * geom.bdry_weights.1 * u[n - 1].max(0.0).powf(0.5 * p);
    rhs
}

/// K_A: c₀ ≡ A, boundary (2/(p−2))h_g.
pub fn shifted_system(geom: &RadialGeometry, a_shift: f64) -> Result<RobinSystem, SolverError> {
    let rc = geom.dim.robin_coeff;
    Ok(assemble(geom, &vec![a_shift; geom.num_nodes], (rc * geom.h_inner, rc * geom.h_outer))?)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn iterate_once(
    geom: &RadialGeometry,
    pair: &BarrierPair,
    start: &[f64],
    a_shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<IterationReport, SolverError> {
    let sys_a = shifted_system(geom, a_shift)?;
    let sys_tau = box_system(geom, pair.tau)?;
    let scale = residual_scale(geom, pair.tau, pair.lambda, &pair.u_plus);
    let ubound = sup(&pair.u_plus).max(1.0);
    let (count_tol, fail_tol) = (1e-12 * ubound, 1e-9 * ubound);
    let mut u = start.to_vec();
    let mut report = IterationReport {
        iterates_kept: vec![(0, u.clone())],
        residual_history: vec![sup(&equation_rows(geom, &sys_tau, pair.lambda, pair.zeta, &u))],
        increment_history: vec![],
        ordering_violations: 0,
        worst_violation: 0.0,
        max_principle_failures: 0,
        converged: false,
        iterations: 0,
        solution: vec![],
        lambda: pair.lambda,
        zeta: pair.zeta,
        a_shift,
        a_retries: 0,
        scale,
    };
    let mut tail: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut prev_rhs = step_rhs(geom, pair, a_shift, &u);
    for k in 1..=max_iter {
        let next = sys_a.solve_form(&prev_rhs)?;
        // the difference solves K_A w = rhs(u_{k-1}) − rhs(u_k) ≥ 0
        let diff: Vec<f64> = u.iter().zip(&next).map(|(a, b)| a - b).collect();
        if !check_maximum_principle(&sys_a, &diff).holds {
            report.max_principle_failures += 1;
        }
        for i in 0..u.len() {
            let up = next[i] - u[i];
            let down = pair.u_minus[i] - next[i];
            let v = up.max(down);
            if v > count_tol {
                report.ordering_violations += 1;
                if v > report.worst_violation {
                    report.worst_violation = v;
                }
                if v > fail_tol {
                    return Err(SolverError::Monotonicity { iteration: k, node: i, value: v, a_shift });
                }
            }
        }
        let inc = sup(&diff);
        u = next;
        prev_rhs = step_rhs(geom, pair, a_shift, &u);
        let res = sup(&equation_rows(geom, &sys_tau, pair.lambda, pair.zeta, &u));
        report.increment_history.push(inc);
        report.residual_history.push(res);
        report.iterations = k;
        if report.iterates_kept.len() < 3 {
            report.iterates_kept.push((k, u.clone()));
        } else {
            tail.push((k, u.clone()));
            if tail.len() > 3 {
                tail.remove(0);
            }
        }
        if inc <= tol * sup(&u) && res <= 10.0 * tol * scale {
            report.converged = true;
            break;
        }
    }
    report.iterates_kept.extend(tail.into_iter().filter(|(k, _)| *k > 2));
    if !report.converged {
        return Err(SolverError::NoConvergence {
            iterations: max_iter,
            increment: report.increment_history.last().copied().unwrap_or(f64::NAN),
            residual: report.final_residual(),
        });
    }
    report.solution = u;
    Ok(report)
}

/// Monotone iteration u₀ = u₊, u_{k+1} = K_A⁻¹ F(u_k), with ordering checks.
/// A monotonicity failure triggers one retry with A doubled.
pub fn monotone_iterate(geom: &RadialGeometry, pair: &BarrierPair, tol: f64, max_iter: usize) -> Result<IterationReport, SolverError> {
    monotone_iterate_from(geom, pair, &pair.u_plus.clone(), tol, max_iter)
}

/// Same as `monotone_iterate` but started from `start`, which must lie in [u₋, u₊]
/// and be a super-solution for monotone decrease.
pub fn monotone_iterate_from(
    geom: &RadialGeometry,
    pair: &BarrierPair,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<IterationReport, SolverError> {
    geom.check_len(start)?;
    match iterate_once(geom, pair, start, pair.a_shift, tol, max_iter) {
        Err(SolverError::Monotonicity { .. }) => {
            let mut rep = iterate_once(geom, pair, start, 2.0 * pair.a_shift, tol, max_iter)?;
            rep.a_retries = 1;
            Ok(rep)
        }
        other => other,
    }
}

/// Discrete L^q norm of f and of its g-gradient on cells.
pub fn w1q_norm(geom: &RadialGeometry, f: &[f64], q: f64) -> Result<f64, SolverError> {
    geom.check_len(f)?;
    let lq = norm_lp(geom, f, q)?.powf(q);
    let grad: f64 =
        cell_weights(geom).iter().enumerate().map(|(i, (w, metric))| w * (metric * (f[i + 1] - f[i]) / geom.step).abs().powf(q)).sum();
    Ok((lq + grad).powf(1.0 / q))
}

/// W^{1,q} plus nodal second differences at interior nodes.
pub fn w2q_norm(geom: &RadialGeometry, f: &[f64], q: f64) -> Result<f64, SolverError> {
    let w1 = w1q_norm(geom, f, q)?.powf(q);
    let p = geom.dim.p;
    let h2 = geom.step * geom.step;
    let second: f64 = (1..geom.num_nodes - 1)
        .map(|i| {
            let d2 = geom.v[i].powf(2.0 - p) * (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
            geom.vol_weights[i] * d2.abs().powf(q)
        })
        .sum();
    Ok((w1 + second).powf(1.0 / q))
}

/// (g-volume, |∇r|_g) per cell, from the midpoint values.
fn cell_weights(geom: &RadialGeometry) -> Vec<(f64, f64)> {
    let p = geom.dim.p;
    let n = geom.dim.n as f64;
    (0..geom.num_nodes - 1)
        .map(|i| {
            let rm = 0.5 * (geom.nodes[i] + geom.nodes[i + 1]);
            let vm = (geom.v[i] * geom.v[i + 1]).sqrt();
            (geom.omega * rm.powf(n - 1.0) * geom.step * vm.powf(p), vm.powf(0.5 * (2.0 - p)))
        })
        .collect()
}

/// ‖g‖ on ∂M for data constant on each boundary sphere.
fn boundary_norm(geom: &RadialGeometry, g: (f64, f64), q: f64) -> f64 {
    let (s0, s1) = geom.bdry_weights;
    (s0 * g.0.abs().powf(q) + s1 * g.1.abs().powf(q)).powf(1.0 / q)
}

/// Largest observed ‖w‖_{W^{2,q}} / (‖f‖_{L^q} + ‖g‖) over probe solves of
/// (−aΔ_g + A)w = f, ∂w/∂ν + (2/(p−2))h_g w = g.
pub fn resolvent_norm(geom: &RadialGeometry, a_shift: f64, u0: &[f64], q: f64) -> Result<f64, SolverError> {
    let sys = shifted_system(geom, a_shift)?;
    let n = geom.num_nodes;
    let ramp: Vec<f64> = geom.nodes.iter().map(|r| (r - geom.r0) / (geom.r1 - geom.r0)).collect();
    let probes: Vec<(Vec<f64>, (f64, f64))> =
        vec![(vec![1.0; n], (0.0, 0.0)), (ramp, (0.0, 0.0)), (vec![0.0; n], (1.0, 1.0)), (u0.to_vec(), (0.0, 0.0))];
    let mut worst = 0.0f64;
    for (f, g) in probes {
        let w = sys.solve(&f, g)?;
        let denom = norm_lp(geom, &f, q)? + boundary_norm(geom, g, q);
        worst = worst.max(w2q_norm(geom, &w, q)? / denom);
    }
    Ok(worst)
}

/// Both iteration smallness caps on ζ, evaluated at u₀ = u₊.
#[derive(Clone, Debug, Serialize)]
pub struct ZetaCap {
    pub q: f64,
    pub w1q_norm: f64,
    pub resolvent_norm: f64,
    pub cap_first: f64,
    pub cap_second: f64,
    pub zeta_in: f64,
    pub zeta_out: f64,
    /// which bound is active: "barrier", "iteration-first" or "iteration-second"
    pub active: String,
}

impl ZetaCap {
    /// Both inequalities re-evaluated at ζ; nonnegative means satisfied.
    pub fn slacks(&self, zeta: f64) -> (f64, f64) {
        (1.0 - zeta / self.cap_first, 1.0 - zeta / self.cap_second)
    }
}

/// The caps as functions of u₀ alone.
pub fn zeta_caps(geom: &RadialGeometry, u0: &[f64], lambda: f64, a_shift: f64, tau: f64) -> Result<(f64, f64, f64, f64), SolverError> {
    let p = geom.dim.p;
    let q = geom.dim.n as f64 + 1.0;
    let rc = geom.dim.robin_coeff;
    let pow: Vec<f64> = u0.iter().map(|x| x.powf(0.5 * p)).collect();
    let w1q = w1q_norm(geom, &pow, q)?;
    let c_prime = resolvent_norm(geom, a_shift, u0, q)?;
    let su = sup(u0);
    let vol = geom.volume();
    let bracket = (a_shift + geom.sup_abs_scalar() + tau.abs() + lambda.abs() * su.powf(p - 2.0)) * su * vol + 1.0;
    let cap_first = 1.0 / (rc * w1q);
    let cap_second = 1.0 / (rc * su.powf(0.5 * p) * vol + rc * 0.5 * p * su.powf(0.5 * (p - 2.0)) * c_prime * bracket);
    Ok((cap_first, cap_second, w1q, c_prime))
}

/// min(ζ, both caps); revalidates the pair when ζ shrinks.
pub fn select_zeta_cap(geom: &RadialGeometry, pair: &BarrierPair) -> Result<(BarrierPair, ZetaCap), SolverError> {
    let (cap_first, cap_second, w1q, c_prime) = zeta_caps(geom, &pair.u_plus, pair.lambda, pair.a_shift, pair.tau)?;
    let zeta_out = pair.zeta.min(cap_first).min(cap_second);
    let active = if zeta_out == pair.zeta {
        "barrier"
    } else if cap_first <= cap_second {
        "iteration-first"
    } else {
        "iteration-second"
    };
    let mut out = if zeta_out < pair.zeta { pair.with_zeta(geom, zeta_out)? } else { pair.clone() };
    out.diagnostics.zeta_iteration_cap = Some(cap_first.min(cap_second));
    out.diagnostics.zeta_active = Some(active.into());
    out.diagnostics.resolvent_norm = Some(c_prime);
    let cap = ZetaCap {
        q: geom.dim.n as f64 + 1.0,
        w1q_norm: w1q,
        resolvent_norm: c_prime,
        cap_first,
        cap_second,
        zeta_in: pair.zeta,
        zeta_out,
        active: active.into(),
    };
    Ok((out, cap))
}

/// Barriers, ζ cap and iteration for η₁ < 0.
pub fn solve_negative(
    geom: &RadialGeometry,
    lambda: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(BarrierPair, ZetaCap, IterationReport), SolverError> {
    let pair = case_negative(geom, lambda)?;
    let (pair, cap) = select_zeta_cap(geom, &pair)?;
    let report = monotone_iterate(geom, &pair, tol, max_iter)?;
    Ok((pair, cap, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationOptions {
    pub tau0: f64,
    pub steps: usize,
    /// extra halvings allowed while waiting for the Cauchy criterion
    pub max_extra_steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub cauchy_tol: f64,
    pub warm_start: bool,
    #[serde(skip)]
    pub positive: PositiveOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            tau0: -0.05,
            steps: 8,
            max_extra_steps: 24,
            tol: 1e-9,
            max_iter: 20000,
            cauchy_tol: 1e-8,
            warm_start: true,
            positive: PositiveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationStep {
    pub tau: f64,
    /// τ after rescaling the metric to unit volume
    pub tau_unit: f64,
    pub lambda_tau: f64,
    pub zeta: f64,
    pub norm_p: f64,
    pub norm_r: f64,
    pub distance_prev: Option<f64>,
    pub warm_started: bool,
    pub iterations: usize,
    pub ordering_violations: usize,
    #[serde(skip)]
    pub solution: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageFailure {
    pub step: usize,
    pub tau: f64,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationTrace {
    pub tau_schedule: Vec<f64>,
    /// λ_τ along the whole schedule (computed before any barrier is built)
    pub lambda_schedule: Vec<f64>,
    pub tau_unit_schedule: Vec<f64>,
    pub steps: Vec<ContinuationStep>,
    pub delta: Option<f64>,
    pub r_exponent: f64,
    #[serde(skip)]
    pub limit: Option<Vec<f64>>,
    pub lambda_limit: Option<f64>,
    pub zeta: Option<f64>,
    pub limit_residual: Option<f64>,
    pub cauchy: bool,
    pub failure: Option<StageFailure>,
    /// constants of the last barrier pair attempted (JSON-ready)
    pub diagnostics: Option<crate::barriers::Diagnostics>,
}

fn stage_of(e: &SolverError) -> String {
    match e {
        SolverError::Barrier(BarrierError::Stage { stage, .. }) => (*stage).to_string(),
        SolverError::Barrier(_) => "barrier".into(),
        SolverError::Monotonicity { .. } | SolverError::NoConvergence { .. } => "iterate".into(),
        SolverError::Degeneration(_) => "degeneration".into(),
        SolverError::Spectral(_) => "lambda_tau".into(),
        _ => "solver".into(),
    }
}

/// τ_k = τ₀·2^{−k}: λ_τ along the schedule, a uniform δ, barriers and
/// monotone iteration per step, then Cauchy detection in sup-norm.
pub fn continuation(geom: &RadialGeometry, opts: &ContinuationOptions) -> ContinuationTrace {
    let p = geom.dim.p;
    let r_exp = p * 1.25;
    let vol_scale = geom.volume().powf(2.0 / geom.dim.n as f64);
    let total = opts.steps + opts.max_extra_steps;
    let schedule: Vec<f64> = (0..=total).map(|k| opts.tau0 * 0.5f64.powi(k as i32)).collect();
    let mut trace = ContinuationTrace {
        tau_schedule: schedule[..=opts.steps].to_vec(),
        lambda_schedule: vec![],
        tau_unit_schedule: vec![],
        steps: vec![],
        delta: None,
        r_exponent: r_exp,
        limit: None,
        lambda_limit: None,
        zeta: None,
        limit_residual: None,
        cauchy: false,
        failure: None,
        diagnostics: None,
    };
    let fail = |trace: &mut ContinuationTrace, step: usize, tau: f64, e: SolverError| {
        trace.failure = Some(StageFailure { step, tau, stage: stage_of(&e), message: e.to_string() });
    };

    // λ_τ for the base schedule, warm-started from the previous minimizer
    let mut lambdas = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &tau in &trace.tau_schedule.clone() {
        let res = match &warm {
            None => minimize_yamabe_quotient(geom, tau, &opts.positive.minimize),
            Some(w) => minimize_yamabe_from(geom, tau, w, &opts.positive.minimize),
        };
        match res {
            Ok(m) => {
                lambdas.push(m.lambda);
                warm = Some(m.minimizer);
            }
            Err(e) => {
                fail(&mut trace, lambdas.len(), tau, e.into());
                return trace;
            }
        }
    }
    trace.tau_unit_schedule = trace.tau_schedule.iter().map(|t| t * vol_scale).collect();
    trace.lambda_schedule = lambdas.clone();

    // uniform δ: half the smallest closed-form cap over the schedule
    let mut cap = f64::INFINITY;
    for (k, &tau) in trace.tau_schedule.iter().enumerate() {
        let o = PositiveOptions { lambda_tau: Some(lambdas[k]), delta: None, ..opts.positive.clone() };
        match positive_constants(geom, tau, &o) {
            Ok(c) => cap = cap.min(c.delta_cap),
            Err(e) => {
                fail(&mut trace, k, tau, e.into());
                return trace;
            }
        }
    }
    let delta = opts.positive.delta_fraction * cap;
    trace.delta = Some(delta);

    let mut prev: Option<Vec<f64>> = None;
    let mut lambda_warm = warm;
    for (k, &tau) in schedule.iter().enumerate() {
        let lambda_tau = if k < lambdas.len() {
            lambdas[k]
        } else {
            match minimize_yamabe_from(geom, tau, lambda_warm.as_ref().expect("warm start"), &opts.positive.minimize) {
                Ok(m) => {
                    lambda_warm = Some(m.minimizer);
                    trace.tau_schedule.push(tau);
                    trace.tau_unit_schedule.push(tau * vol_scale);
                    trace.lambda_schedule.push(m.lambda);
                    m.lambda
                }
                Err(e) => {
                    fail(&mut trace, k, tau, e.into());
                    return trace;
                }
            }
        };
        let o = PositiveOptions { lambda_tau: Some(lambda_tau), delta: Some(delta), ..opts.positive.clone() };
        let pair = match case_positive(geom, tau, &o) {
            Ok(pair) => pair,
            Err(e) => {
                if let BarrierError::Glue { data, .. } = e.root() {
                    trace.diagnostics = Some(crate::barriers::Diagnostics {
                        gamma: Some(data.gamma),
                        theta: Some(data.theta),
                        omega_bounds: Some(data.omega_bounds),
                        glue_halvings: Some(data.halvings),
                        region_components: Some(data.region_components),
                        delta: Some(delta),
                        ..Default::default()
                    });
                }
                fail(&mut trace, k, tau, e.into());
                return trace;
            }
        };
        let (pair, _) = match select_zeta_cap(geom, &pair) {
            Ok(x) => x,
            Err(e) => {
                fail(&mut trace, k, tau, e);
                return trace;
            }
        };
        trace.zeta = Some(pair.zeta);
        trace.diagnostics = Some(pair.diagnostics.clone());
        let start = match &prev {
            Some(u) if opts.warm_start && within(u, &pair.u_minus, &pair.u_plus) && is_super(geom, &pair, u) => Some(u.clone()),
            _ => None,
        };
        let warm_started = start.is_some();
        let res = match &start {
            Some(u) => monotone_iterate_from(geom, &pair, u, opts.tol, opts.max_iter),
            None => monotone_iterate(geom, &pair, opts.tol, opts.max_iter),
        };
        let rep = match res {
            Ok(r) => r,
            Err(e) => {
                fail(&mut trace, k, tau, e);
                return trace;
            }
        };
        let u = rep.solution.clone();
        let (norm_p, norm_r) = match (norm_lp(geom, &u, p), norm_lp(geom, &u, r_exp)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                fail(&mut trace, k, tau, e.into());
                return trace;
            }
        };
        let distance_prev = prev.as_ref().map(|v| v.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        trace.steps.push(ContinuationStep {
            tau,
            tau_unit: tau * vol_scale,
            lambda_tau,
            zeta: pair.zeta,
            norm_p,
            norm_r,
            distance_prev,
            warm_started,
            iterations: rep.iterations,
            ordering_violations: rep.ordering_violations,
            solution: u.clone(),
        });
        let first = &trace.steps[0];
        if norm_p < 1e-6 || norm_r > 1e6 * first.norm_r {
            let e = SolverError::Degeneration(format!("norms p = {norm_p:e}, r = {norm_r:e} at tau = {tau}"));
            fail(&mut trace, k, tau, e);
            return trace;
        }
        prev = Some(u);
        if k >= opts.steps && distance_prev.is_some_and(|d| d <= opts.cauchy_tol) {
            trace.cauchy = true;
            break;
        }
    }
    if let (true, Some(last)) = (trace.cauchy, trace.steps.last()) {
        let lambda = last.lambda_tau;
        let res = box_system(geom, 0.0).map(|sys| sup(&equation_rows(geom, &sys, lambda, last.zeta, &last.solution)));
        trace.limit_residual = res.ok();
        trace.limit = Some(last.solution.clone());
        trace.lambda_limit = Some(lambda);
    } else if trace.failure.is_none() {
        let (k, tau) = (trace.steps.len(), *schedule.last().unwrap_or(&opts.tau0));
        fail(&mut trace, k, tau, SolverError::Degeneration("successive solutions never became Cauchy".into()));
    }
    trace
}

fn within(u: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    u.iter().zip(lo).zip(hi).all(|((x, a), b)| a <= x && x <= b)
}

/// The start of a decreasing iteration must itself be a super-solution.
fn is_super(geom: &RadialGeometry, pair: &BarrierPair, u: &[f64]) -> bool {
    let Ok(sys) = box_system(geom, pair.tau) else { return false };
    let tol = 1e-8 * residual_scale(geom, pair.tau, pair.lambda, &pair.u_plus);
    equation_rows(geom, &sys, pair.lambda, pair.zeta, u).iter().all(|&r| r >= -tol)
}
