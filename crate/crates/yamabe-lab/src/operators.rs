//! Discrete conformal Laplacian with Robin rows, and the curvature maps of a
//! conformal change g̃ = u^{p-2} g.
//!
//! The quadratic form a∫|∇u|² + ∫c₀u² + a∫robin_c·u² dS is assembled by
//! conservative fluxes through exact radial shells. Dividing its rows by the
//! node mass (interior) or by a·S (boundary) gives the strong rows used for
//! pointwise comparisons; the boundary row is then the ghost-node-eliminated
//! Robin condition.

use crate::geometry::{curvature_with_frame, flat_normal_derivs, GeometryError, RadialGeometry};
use crate::linalg::{solve_banded, BandedSystem, LinalgError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid conformal factor: u = {value} at node {node}")]
    NonPositive { node: usize, value: f64 },
}

#[derive(Clone, Debug)]
pub struct RobinSystem {
    /// symmetric tridiagonal form matrix
    pub form: BandedSystem,
    pub mass: Vec<f64>,
    /// M_i at interior nodes, a·S at the two boundary nodes
    pub row_scale: Vec<f64>,
    pub c0: Vec<f64>,
    pub robin_c: (f64, f64),
    pub bdry_weights: (f64, f64),
    pub a: f64,
    /// edge weights a·e·v_i·v_{i+1}
    pub edge: Vec<f64>,
    /// zeroth-order diagonal: M·c₀ plus the Robin terms at the ends
    pub zeroth: Vec<f64>,
    step: f64,
    /// v^{(2-p)/2} at the two ends, converting flat normals to g-normals
    normal_factor: (f64, f64),
}

pub fn assemble(geom: &RadialGeometry, c0: &[f64], robin_c: (f64, f64)) -> Result<RobinSystem, OperatorError> {
    geom.check_len(c0)?;
    let n = geom.num_nodes;
    let a = geom.dim.a;
    let v = &geom.v;
    let (s0, s1) = geom.bdry_weights;
    let mut zeroth: Vec<f64> = (0..n).map(|i| geom.vol_weights[i] * c0[i]).collect();
    zeroth[0] += a * robin_c.0 * s0;
    zeroth[n - 1] += a * robin_c.1 * s1;
    let edge: Vec<f64> = (0..n - 1).map(|i| a * geom.conductance[i] * v[i] * v[i + 1]).collect();
    let mut diag = zeroth.clone();
    let mut off = vec![0.0; n - 1];
    for (i, w) in edge.iter().enumerate() {
        diag[i] += w;
        diag[i + 1] += w;
        off[i] = -w;
    }
    let mut row_scale = geom.vol_weights.clone();
    row_scale[0] = a * s0;
    row_scale[n - 1] = a * s1;
    let e = 0.5 * (2.0 - geom.dim.p);
    Ok(RobinSystem {
        form: BandedSystem::symmetric(diag, off)?,
        mass: geom.vol_weights.clone(),
        row_scale,
        c0: c0.to_vec(),
        robin_c,
        bdry_weights: geom.bdry_weights,
        a,
        edge,
        zeroth,
        step: geom.step,
        normal_factor: (v[0].powf(e), v[n - 1].powf(e)),
    })
}

/// The Box_g system: c₀ = R_g + shift, Robin coefficients (2/(p-2)) h_g.
pub fn box_system(geom: &RadialGeometry, shift: f64) -> Result<RobinSystem, OperatorError> {
    let c0: Vec<f64> = geom.scalar.iter().map(|r| r + shift).collect();
    let rc = geom.dim.robin_coeff;
    assemble(geom, &c0, (rc * geom.h_inner, rc * geom.h_outer))
}

impl RobinSystem {
    pub fn size(&self) -> usize {
        self.mass.len()
    }

    /// K u evaluated in flux form, so constants see no stiffness round-off.
    pub fn apply_form(&self, u: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.zeroth.iter().zip(u).map(|(z, x)| z * x).collect();
        for (i, w) in self.edge.iter().enumerate() {
            let flux = w * (u[i] - u[i + 1]);
            out[i] += flux;
            out[i + 1] -= flux;
        }
        out
    }

    /// Strong rows: form rows divided by the row scale.
    pub fn strong(&self) -> BandedSystem {
        let s = &self.row_scale;
        let n = self.size();
        let diag = (0..n).map(|i| self.form.diag[i] / s[i]).collect();
        let sub = (0..n - 1).map(|i| self.form.sub[i] / s[i + 1]).collect();
        let sup = (0..n - 1).map(|i| self.form.sup[i] / s[i]).collect();
        BandedSystem::new(sub, diag, sup).expect("bands consistent")
    }

    /// Form-scaled right side for interior data f and boundary data g.
    pub fn rhs(&self, f: &[f64], g: (f64, f64)) -> Vec<f64> {
        let n = self.size();
        let mut b: Vec<f64> = f.iter().zip(&self.mass).map(|(x, m)| x * m).collect();
        b[0] += self.a * self.bdry_weights.0 * g.0;
        b[n - 1] += self.a * self.bdry_weights.1 * g.1;
        b
    }

    /// Solves the strong problem (−aΔ_g + c₀)w = f, ∂w/∂ν + robin_c·w = g.
    pub fn solve(&self, f: &[f64], g: (f64, f64)) -> Result<Vec<f64>, OperatorError> {
        self.solve_form(&self.rhs(f, g))
    }

    /// K w = rhs: banded elimination plus one correction against the
    /// flux-form residual. The elimination error grows with the condition
    /// number (~N²); the flux-form residual does not, so one pass brings w
    /// back to rounding level.
    pub fn solve_form(&self, rhs: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let mut x = solve_banded(&self.form, rhs)?;
        let kx = self.apply_form(&x);
        let r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
        let dx = solve_banded(&self.form, &r)?;
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        Ok(x)
    }

    /// Row residual of Kw − rhs divided by the row scale.
    pub fn strong_residual(&self, w: &[f64], rhs: &[f64]) -> Vec<f64> {
        let kw = self.apply_form(w);
        (0..w.len()).map(|i| (kw[i] - rhs[i]) / self.row_scale[i]).collect()
    }

    /// ∂u/∂ν_g + robin_c·u at (r0, r1) by one-sided second-order differences.
    pub fn boundary_operator(&self, u: &[f64]) -> (f64, f64) {
        let n = u.len();
        let h = self.step;
        let d_in = -(-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        let d_out = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
        (self.normal_factor.0 * d_in + self.robin_c.0 * u[0], self.normal_factor.1 * d_out + self.robin_c.1 * u[n - 1])
    }
}

/// Strong rows at interior nodes; B_g u at the two boundary entries.
pub fn apply_box(sys: &RobinSystem, u: &[f64]) -> Vec<f64> {
    let ku = sys.apply_form(u);
    let n = u.len();
    let mut out: Vec<f64> = (0..n).map(|i| ku[i] / sys.row_scale[i]).collect();
    let (b0, b1) = sys.boundary_operator(u);
    out[0] = b0;
    out[n - 1] = b1;
    out
}

/// uᵀ K u
pub fn quadratic_form(sys: &RobinSystem, u: &[f64]) -> f64 {
    let zeroth: f64 = sys.zeroth.iter().zip(u).map(|(z, x)| z * x * x).sum();
    let grad: f64 = sys.edge.iter().enumerate().map(|(i, w)| w * (u[i] - u[i + 1]).powi(2)).sum();
    grad + zeroth
}

fn check_positive(u: &[f64]) -> Result<(), OperatorError> {
    match u.iter().position(|&x| !(x > 0.0)) {
        Some(node) => Err(OperatorError::NonPositive { node, value: u[node] }),
        None => Ok(()),
    }
}

/// R of g̃ = u^{p-2} g, i.e. u^{1-p}(−aΔ_g u + R_g u), evaluated through the composite factor v·u.
pub fn scalar_curvature_of_conformal(geom: &RadialGeometry, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
    geom.check_len(u)?;
    check_positive(u)?;
    let w: Vec<f64> = geom.v.iter().zip(u).map(|(a, b)| a * b).collect();
    Ok(curvature_with_frame(geom.dim, &geom.nodes, &w, &geom.frame_potential, geom.frame_h).0)
}

/// (h_inner, h_outer) of g̃ = u^{p-2} g.
pub fn mean_curvature_of_conformal(geom: &RadialGeometry, u: &[f64]) -> Result<(f64, f64), OperatorError> {
    geom.check_len(u)?;
    let last = u.len() - 1;
    check_positive(&[u[0], u[last]]).map_err(|e| match e {
        OperatorError::NonPositive { node, value } => OperatorError::NonPositive { node: if node == 0 { 0 } else { last }, value },
        other => other,
    })?;
    // only the three nodes nearest each end enter the one-sided stencils
    let w: Vec<f64> = geom.v.iter().zip(u).map(|(a, b)| a * b.max(f64::MIN_POSITIVE)).collect();
    let (dn_in, dn_out) = flat_normal_derivs(&geom.nodes, &w);
    let p = geom.dim.p;
    let half = 0.5 * (p - 2.0);
    let h_in = w[0].powf(-0.5 * p) * (half * dn_in + geom.frame_h.0 * w[0]);
    let h_out = w[last].powf(-0.5 * p) * (half * dn_out + geom.frame_h.1 * w[last]);
    Ok((h_in, h_out))
}

/// Outcome of the discrete maximum-principle check.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxPrincipleCheck {
    /// c₀ ≥ 0 and strong rows of u ≥ 0 at interior nodes
    pub applicable: bool,
    pub min_interior: f64,
    pub bound: f64,
    pub holds: bool,
}

/// If c₀ ≥ 0 and the strong interior rows of u are ≥ 0, then
/// min over interior nodes ≥ min(0, boundary values) − 1e-10.
pub fn check_maximum_principle(sys: &RobinSystem, u: &[f64]) -> MaxPrincipleCheck {
    let n = u.len();
    let ku = sys.apply_form(u);
    let strong: Vec<f64> = ku.iter().zip(&sys.row_scale).map(|(a, s)| a / s).collect();
    let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let applicable = sys.c0.iter().all(|&c| c >= 0.0) && strong[1..n - 1].iter().all(|&s| s >= -1e-12 * scale);
    let min_interior = u[1..n - 1].iter().copied().fold(f64::INFINITY, f64::min);
    let bound = 0.0f64.min(u[0]).min(u[n - 1]);
    MaxPrincipleCheck { applicable, min_interior, bound, holds: !applicable || min_interior >= bound - 1e-10 }
}
