//! Radially symmetric annulus A(r0, r1) in R^n with metric g = v^{p-2} δ.
//!
//! Curvature comes from the conformal transformation laws applied to a flat
//! frame. The frame normally carries R = 0 and h = ±1/r, but it may also
//! carry a synthetic potential and boundary curvatures (see [`FlatFrame`]),
//! which is how the negative and zero eigenvalue classes become reachable.

use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid metric: conformal factor {value} at r = {r}")]
    InvalidMetric { r: f64, value: f64 },
    #[error("shape mismatch: expected {expected} nodes, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid exponent q = {0}, need q >= 1")]
    InvalidExponent(f64),
    #[error("invalid spec `{0}`")]
    Spec(String),
}

/// Exponents fixed by the ambient dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Dimension {
    pub n: usize,
    /// 4(n-1)/(n-2)
    pub a: f64,
    /// 2n/(n-2)
    pub p: f64,
    /// 2/(p-2) = (n-2)/2
    pub robin_coeff: f64,
}

impl Dimension {
    pub fn new(n: usize) -> Result<Self, GeometryError> {
        if n < 3 {
            return Err(GeometryError::InvalidDomain(format!("n = {n}, need n >= 3")));
        }
        let nf = n as f64;
        Ok(Dimension { n, a: 4.0 * (nf - 1.0) / (nf - 2.0), p: 2.0 * nf / (nf - 2.0), robin_coeff: (nf - 2.0) / 2.0 })
    }

    /// Power of v in the boundary measure, 2(n-1)/(n-2).
    pub fn boundary_exponent(&self) -> f64 {
        let nf = self.n as f64;
        2.0 * (nf - 1.0) / (nf - 2.0)
    }
}

/// Γ(m/2) for a positive integer m.
fn gamma_half(m: usize) -> f64 {
    if m % 2 == 0 {
        (1..m / 2).map(|k| k as f64).product()
    } else {
        // Γ(1/2) = sqrt(pi), Γ(x+1) = xΓ(x)
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x + 0.25 < m as f64 / 2.0 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Surface measure of the unit k-sphere in R^{k+1}.
pub fn sphere_measure(k: usize) -> f64 {
    let m = k + 1;
    2.0 * PI.powf(m as f64 / 2.0) / gamma_half(m)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; k];
    let mut ws = vec![0.0; k];
    for i in 0..k {
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Monotone piecewise cubic (Fritsch–Carlson) through tabulated points.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, GeometryError> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(GeometryError::Spec("table needs at least two (r, v) rows".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::Spec("table radii must be strictly increasing".into()));
        }
        let m = xs.len();
        let secant: Vec<f64> = (0..m - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut slopes = vec![0.0; m];
        slopes[0] = secant[0];
        slopes[m - 1] = secant[m - 2];
        for i in 1..m - 1 {
            slopes[i] = if secant[i - 1] * secant[i] <= 0.0 { 0.0 } else { 0.5 * (secant[i - 1] + secant[i]) };
        }
        for i in 0..m - 1 {
            if secant[i] == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let al = slopes[i] / secant[i];
            let be = slopes[i + 1] / secant[i];
            let s = al * al + be * be;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                slopes[i] = t * al * secant[i];
                slopes[i + 1] = t * be * secant[i];
            }
        }
        Ok(MonotoneCubic { xs, ys, slopes })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let m = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[m - 1] {
            return self.ys[m - 1];
        }
        let i = match self.xs.partition_point(|&t| t <= x) {
            0 => 0,
            k => k - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }
}

fn parse_floats(body: &str, want: Option<usize>, whole: &str) -> Result<Vec<f64>, GeometryError> {
    let vals: Result<Vec<f64>, _> = body.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| GeometryError::Spec(whole.to_string()))?;
    if want.is_some_and(|w| w != vals.len()) || vals.iter().any(|x| !x.is_finite()) {
        return Err(GeometryError::Spec(whole.to_string()));
    }
    Ok(vals)
}

/// A conformal factor v(r) described by name.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorSpec {
    Flat,
    /// v = r^k
    Power(f64),
    /// v = 1 + A exp(-(r - rc)^2 / s^2)
    Gauss {
        amp: f64,
        width: f64,
        center: f64,
    },
    /// v = exp(Σ c_k cos(kπt)), t = (r - r0)/(r1 - r0); smooth, positive, used for random factors
    Fourier(Vec<f64>),
    Table(MonotoneCubic),
    Product(Vec<FactorSpec>),
}

impl FactorSpec {
    /// Parses "flat", "power:k", "gauss:A,s,rc", "fourier:c1,c2,..." and products joined by '*'.
    pub fn parse(s: &str) -> Result<Self, GeometryError> {
        let s = s.trim();
        if s.contains('*') {
            let parts: Result<Vec<_>, _> = s.split('*').map(FactorSpec::parse).collect();
            return Ok(FactorSpec::Product(parts?));
        }
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        match name.trim() {
            "flat" if body.is_empty() => Ok(FactorSpec::Flat),
            "power" => Ok(FactorSpec::Power(parse_floats(body, Some(1), s)?[0])),
            "gauss" => {
                let v = parse_floats(body, Some(3), s)?;
                if v[1] == 0.0 {
                    return Err(GeometryError::Spec(s.to_string()));
                }
                Ok(FactorSpec::Gauss { amp: v[0], width: v[1], center: v[2] })
            }
            "fourier" => Ok(FactorSpec::Fourier(parse_floats(body, None, s)?)),
            _ => Err(GeometryError::Spec(s.to_string())),
        }
    }

    pub fn eval(&self, r: f64, r0: f64, r1: f64) -> f64 {
        match self {
            FactorSpec::Flat => 1.0,
            FactorSpec::Power(k) => r.powf(*k),
            FactorSpec::Gauss { amp, width, center } => 1.0 + amp * (-((r - center) / width).powi(2)).exp(),
            FactorSpec::Fourier(c) => {
                let t = (r - r0) / (r1 - r0);
                c.iter().enumerate().map(|(k, ck)| ck * ((k + 1) as f64 * PI * t).cos()).sum::<f64>().exp()
            }
            FactorSpec::Table(tab) => tab.eval(r),
            FactorSpec::Product(fs) => fs.iter().map(|f| f.eval(r, r0, r1)).product(),
        }
    }
}

/// One additive term of the flat-frame potential.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialTerm {
    Const(f64),
    /// A exp(-(r - rc)^2 / s^2)
    Gauss {
        amp: f64,
        width: f64,
        center: f64,
    },
}

/// Curvature data of the flat reference frame before the conformal change.
///
/// Defaults are the honest flat values: zero potential and h = ±1/r.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatFrame {
    pub potential: Vec<PotentialTerm>,
    pub h_inner: Option<f64>,
    pub h_outer: Option<f64>,
}

impl FlatFrame {
    /// Parses "const:c" and "gauss:A,s,rc" terms joined by '+'. "zero" is the empty sum.
    pub fn parse_potential(s: &str) -> Result<Vec<PotentialTerm>, GeometryError> {
        let s = s.trim();
        if s == "zero" || s.is_empty() {
            return Ok(vec![]);
        }
        s.split('+')
            .map(|term| {
                let term = term.trim();
                let (name, body) = term.split_once(':').ok_or_else(|| GeometryError::Spec(term.into()))?;
                match name.trim() {
                    "const" => Ok(PotentialTerm::Const(parse_floats(body, Some(1), term)?[0])),
                    "gauss" => {
                        let v = parse_floats(body, Some(3), term)?;
                        if v[1] == 0.0 {
                            return Err(GeometryError::Spec(term.into()));
                        }
                        Ok(PotentialTerm::Gauss { amp: v[0], width: v[1], center: v[2] })
                    }
                    _ => Err(GeometryError::Spec(term.into())),
                }
            })
            .collect()
    }

    pub fn potential_at(&self, r: f64) -> f64 {
        self.potential
            .iter()
            .map(|t| match t {
                PotentialTerm::Const(c) => *c,
                PotentialTerm::Gauss { amp, width, center } => amp * (-((r - center) / width).powi(2)).exp(),
            })
            .sum()
    }

    pub fn boundary(&self, r0: f64, r1: f64) -> (f64, f64) {
        (self.h_inner.unwrap_or(-1.0 / r0), self.h_outer.unwrap_or(1.0 / r1))
    }

    pub fn with_constant(&self, c: f64) -> FlatFrame {
        let mut out = self.clone();
        out.potential.push(PotentialTerm::Const(c));
        out
    }
}

/// Everything needed to rebuild a geometry at another resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometrySpec {
    pub n: usize,
    pub r0: f64,
    pub r1: f64,
    pub num_nodes: usize,
    pub factor: FactorSpec,
    pub frame: FlatFrame,
}

impl GeometrySpec {
    pub fn build(&self) -> Result<RadialGeometry, GeometryError> {
        let dim = Dimension::new(self.n)?;
        if let FactorSpec::Table(t) = &self.factor {
            let (lo, hi) = t.range();
            if lo > self.r0 || hi < self.r1 {
                return Err(GeometryError::Spec(format!("factor table covers [{lo}, {hi}], domain is [{}, {}]", self.r0, self.r1)));
            }
        }
        let (r0, r1) = (self.r0, self.r1);
        build_geometry(dim, r0, r1, self.num_nodes, |r| self.factor.eval(r, r0, r1), &self.frame)
    }

    pub fn with_nodes(&self, num_nodes: usize) -> GeometrySpec {
        GeometrySpec { num_nodes, ..self.clone() }
    }

    /// Same spec with the factor multiplied by `extra`.
    pub fn with_extra_factor(&self, extra: FactorSpec) -> GeometrySpec {
        let factor = match &self.factor {
            FactorSpec::Product(fs) => {
                let mut fs = fs.clone();
                fs.push(extra);
                FactorSpec::Product(fs)
            }
            f => FactorSpec::Product(vec![f.clone(), extra]),
        };
        GeometrySpec { factor, ..self.clone() }
    }
}

/// The discretized annulus.
#[derive(Clone, Debug)]
pub struct RadialGeometry {
    pub dim: Dimension,
    pub r0: f64,
    pub r1: f64,
    pub num_nodes: usize,
    /// grid spacing h
    pub step: f64,
    pub nodes: Vec<f64>,
    /// conformal factor samples
    pub v: Vec<f64>,
    /// scalar curvature R_g at nodes
    pub scalar: Vec<f64>,
    pub h_inner: f64,
    pub h_outer: f64,
    /// ∫·dVol_g weights
    pub vol_weights: Vec<f64>,
    /// ∫·dS_g weights at r0 and r1
    pub bdry_weights: (f64, f64),
    /// |S^{n-1}|
    pub omega: f64,
    /// flat hat-function masses ω∫hat_i r^{n-1} dr
    pub flat_mass: Vec<f64>,
    /// flat shell conductances ω/∫ r^{1-n} dr, one per cell
    pub conductance: Vec<f64>,
    /// flat-frame potential at nodes
    pub frame_potential: Vec<f64>,
    /// flat-frame boundary curvatures (inner, outer)
    pub frame_h: (f64, f64),
}

/// Builds the geometry for the factor `v(r)` over the given flat frame.
pub fn build_geometry(
    dim: Dimension,
    r0: f64,
    r1: f64,
    num_nodes: usize,
    factor: impl Fn(f64) -> f64,
    frame: &FlatFrame,
) -> Result<RadialGeometry, GeometryError> {
    if !(r0 > 0.0 && r1 > r0 && r1.is_finite()) {
        return Err(GeometryError::InvalidDomain(format!("need 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")));
    }
    if num_nodes < 5 {
        return Err(GeometryError::InvalidDomain(format!("need at least 5 nodes, got {num_nodes}")));
    }
    let nodes = grid(r0, r1, num_nodes);
    let v: Vec<f64> = nodes.iter().map(|&r| factor(r)).collect();
    let potential: Vec<f64> = nodes.iter().map(|&r| frame.potential_at(r)).collect();
    from_samples(dim, nodes, v, potential, frame.boundary(r0, r1))
}

fn grid(r0: f64, r1: f64, num_nodes: usize) -> Vec<f64> {
    let n = num_nodes - 1;
    let h = (r1 - r0) / n as f64;
    (0..num_nodes).map(|i| if i == n { r1 } else { r0 + i as f64 * h }).collect()
}

fn from_samples(
    dim: Dimension,
    nodes: Vec<f64>,
    v: Vec<f64>,
    frame_potential: Vec<f64>,
    frame_h: (f64, f64),
) -> Result<RadialGeometry, GeometryError> {
    if let Some(i) = v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(GeometryError::InvalidMetric { r: nodes[i], value: v[i] });
    }
    let num_nodes = nodes.len();
    let (r0, r1) = (nodes[0], nodes[num_nodes - 1]);
    let step = (r1 - r0) / (num_nodes - 1) as f64;
    let n = dim.n;
    let omega = sphere_measure(n - 1);

    let (gx, gw) = gauss_legendre(8);
    let mut flat_mass = vec![0.0; num_nodes];
    let mut conductance = vec![0.0; num_nodes - 1];
    for i in 0..num_nodes - 1 {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let hc = b - a;
        let (mut left, mut right, mut inv) = (0.0, 0.0, 0.0);
        for (x, w) in gx.iter().zip(&gw) {
            let t = 0.5 * (x + 1.0);
            let r = a + t * hc;
            let wr = 0.5 * w * hc * r.powi(n as i32 - 1);
            left += wr * (1.0 - t);
            right += wr * t;
            inv += 0.5 * w * hc * r.powi(1 - n as i32);
        }
        flat_mass[i] += omega * left;
        flat_mass[i + 1] += omega * right;
        conductance[i] = omega / inv;
    }

    let vol_weights: Vec<f64> = flat_mass.iter().zip(&v).map(|(m, vi)| m * vi.powf(dim.p)).collect();
    let be = dim.boundary_exponent();
    let bdry_weights = (omega * v[0].powf(be) * r0.powi(n as i32 - 1), omega * v[num_nodes - 1].powf(be) * r1.powi(n as i32 - 1));
    let (scalar, h_inner, h_outer) = curvature_with_frame(dim, &nodes, &v, &frame_potential, frame_h);
    Ok(RadialGeometry {
        dim,
        r0,
        r1,
        num_nodes,
        step,
        nodes,
        v,
        scalar,
        h_inner,
        h_outer,
        vol_weights,
        bdry_weights,
        omega,
        flat_mass,
        conductance,
        frame_potential,
        frame_h,
    })
}

/// Flat Laplacian w'' + (n-1)/r w' by centered differences, one-sided second order at the ends.
pub(crate) fn flat_laplacian(n: usize, nodes: &[f64], w: &[f64]) -> Vec<f64> {
    let m = w.len();
    let h = (nodes[m - 1] - nodes[0]) / (m - 1) as f64;
    let k = (n - 1) as f64;
    (0..m)
        .map(|i| {
            let (d1, d2) = if i == 0 {
                ((-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h), (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / (h * h))
            } else if i == m - 1 {
                ((3.0 * w[i] - 4.0 * w[i - 1] + w[i - 2]) / (2.0 * h), (2.0 * w[i] - 5.0 * w[i - 1] + 4.0 * w[i - 2] - w[i - 3]) / (h * h))
            } else {
                ((w[i + 1] - w[i - 1]) / (2.0 * h), (w[i + 1] - 2.0 * w[i] + w[i - 1]) / (h * h))
            };
            d2 + k / nodes[i] * d1
        })
        .collect()
}

/// Outward flat normal derivatives at (r0, r1), one-sided second order.
pub(crate) fn flat_normal_derivs(nodes: &[f64], w: &[f64]) -> (f64, f64) {
    let m = w.len();
    let h = (nodes[m - 1] - nodes[0]) / (m - 1) as f64;
    let inner = -(-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h);
    let outer = (3.0 * w[m - 1] - 4.0 * w[m - 2] + w[m - 3]) / (2.0 * h);
    (inner, outer)
}

/// Curvature of v^{p-2}δ over the default flat frame (zero potential, h = ±1/r).
pub fn curvature_of_factor(dim: Dimension, nodes: &[f64], v: &[f64]) -> (Vec<f64>, f64, f64) {
    let pot = vec![0.0; nodes.len()];
    let frame_h = (-1.0 / nodes[0], 1.0 / nodes[nodes.len() - 1]);
    curvature_with_frame(dim, nodes, v, &pot, frame_h)
}

/// Curvature of v^{p-2}δ over a flat frame with potential and boundary curvatures:
/// R = v^{1-p}(-aΔv + R_frame v), h = v^{-p/2}(((p-2)/2)∂_ν v + h_frame v).
pub fn curvature_with_frame(
    dim: Dimension,
    nodes: &[f64],
    v: &[f64],
    frame_potential: &[f64],
    frame_h: (f64, f64),
) -> (Vec<f64>, f64, f64) {
    let lap = flat_laplacian(dim.n, nodes, v);
    let r: Vec<f64> = (0..v.len()).map(|i| v[i].powf(1.0 - dim.p) * (-dim.a * lap[i] + frame_potential[i] * v[i])).collect();
    let (dn_in, dn_out) = flat_normal_derivs(nodes, v);
    let m = v.len() - 1;
    let half = 0.5 * (dim.p - 2.0);
    let h_in = v[0].powf(-0.5 * dim.p) * (half * dn_in + frame_h.0 * v[0]);
    let h_out = v[m].powf(-0.5 * dim.p) * (half * dn_out + frame_h.1 * v[m]);
    (r, h_in, h_out)
}

impl RadialGeometry {
    /// The geometry of the metric u^{p-2} g, i.e. factor v·u over the same flat frame.
    pub fn conformal(&self, u: &[f64]) -> Result<RadialGeometry, GeometryError> {
        self.check_len(u)?;
        let v: Vec<f64> = self.v.iter().zip(u).map(|(a, b)| a * b).collect();
        from_samples(self.dim, self.nodes.clone(), v, self.frame_potential.clone(), self.frame_h)
    }

    /// The same geometry with a constant added to the flat-frame potential.
    pub fn with_frame_shift(&self, c: f64) -> RadialGeometry {
        let pot: Vec<f64> = self.frame_potential.iter().map(|x| x + c).collect();
        from_samples(self.dim, self.nodes.clone(), self.v.clone(), pot, self.frame_h).expect("factor already validated")
    }

    pub fn check_len(&self, f: &[f64]) -> Result<(), GeometryError> {
        if f.len() != self.num_nodes {
            return Err(GeometryError::Shape { expected: self.num_nodes, got: f.len() });
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.vol_weights.iter().sum()
    }

    pub fn sup_abs_scalar(&self) -> f64 {
        self.scalar.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn last(&self) -> usize {
        self.num_nodes - 1
    }
}

/// Σ vol_weights_i f_i
pub fn integrate(geom: &RadialGeometry, f: &[f64]) -> Result<f64, GeometryError> {
    geom.check_len(f)?;
    Ok(geom.vol_weights.iter().zip(f).map(|(w, x)| w * x).sum())
}

/// (Σ vol_weights_i |f_i|^q)^{1/q}
pub fn norm_lp(geom: &RadialGeometry, f: &[f64], q: f64) -> Result<f64, GeometryError> {
    if !(q >= 1.0) {
        return Err(GeometryError::InvalidExponent(q));
    }
    geom.check_len(f)?;
    let s: f64 = geom.vol_weights.iter().zip(f).map(|(w, x)| w * x.abs().powf(q)).sum();
    Ok(s.powf(1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize, r0: f64, r1: f64, nodes: usize) -> RadialGeometry {
        build_geometry(Dimension::new(n).unwrap(), r0, r1, nodes, |_| 1.0, &FlatFrame::default()).unwrap()
    }

    #[test]
    fn exponents_for_three_dimensions() {
        let d = Dimension::new(3).unwrap();
        assert_eq!((d.a, d.p, d.robin_coeff), (8.0, 6.0, 0.5));
        for n in 3..9 {
            let d = Dimension::new(n).unwrap();
            let nf = n as f64;
            assert!((d.a * (d.p - 2.0) - 16.0 * (nf - 1.0) / (nf - 2.0).powi(2)).abs() < 1e-12);
            assert!((d.robin_coeff * (d.p - 2.0) - 2.0).abs() < 1e-14);
        }
        assert!(matches!(Dimension::new(2), Err(GeometryError::InvalidDomain(_))));
    }

    #[test]
    fn sphere_measures() {
        assert!((sphere_measure(1) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_measure(2) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_measure(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_measure(4) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flat_four_dimensional_curvature() {
        let g = flat(4, 1.0, 2.0, 41);
        assert!(g.scalar.iter().all(|&r| r == 0.0));
        assert_eq!(g.h_outer, 0.5);
        assert_eq!(g.h_inner, -1.0);
    }

    #[test]
    fn flat_volume_and_moment() {
        let g = flat(3, 1.0, 2.0, 2001);
        let vol = 28.0 * PI / 3.0;
        assert!((integrate(&g, &vec![1.0; g.num_nodes]).unwrap() - vol).abs() < 1e-10 * vol);
        let r = g.nodes.clone();
        assert!((integrate(&g, &r).unwrap() - 15.0 * PI).abs() < 1e-8 * 15.0 * PI);
        assert_eq!(integrate(&g, &vec![0.0; g.num_nodes]).unwrap(), 0.0);
    }

    #[test]
    fn norms() {
        let g = flat(3, 1.0, 2.0, 301);
        let vol = g.volume();
        assert!((norm_lp(&g, &vec![1.0; 301], 2.0).unwrap() - vol.sqrt()).abs() < 1e-12);
        let two = norm_lp(&g, &vec![2.0; 301], 6.0).unwrap();
        assert!((two - 2.0 * (28.0 * PI / 3.0f64).powf(1.0 / 6.0)).abs() < 1e-9);
        let f: Vec<f64> = g.nodes.iter().map(|r| (3.0 * r).sin()).collect();
        let f2: Vec<f64> = f.iter().map(|x| x * x).collect();
        assert!((norm_lp(&g, &f, 2.0).unwrap() - integrate(&g, &f2).unwrap().sqrt()).abs() < 1e-12);
        assert!(matches!(norm_lp(&g, &f, 0.5), Err(GeometryError::InvalidExponent(_))));
        assert!(matches!(integrate(&g, &f[1..]), Err(GeometryError::Shape { .. })));
    }

    #[test]
    fn constant_factor_scales_mean_curvature() {
        let d = Dimension::new(4).unwrap();
        let g = build_geometry(d, 1.0, 2.0, 21, |_| 4.0, &FlatFrame::default()).unwrap();
        assert!(g.scalar.iter().all(|r| r.abs() < 1e-12));
        assert!((g.h_outer - 0.125).abs() < 1e-15);
        let d3 = Dimension::new(3).unwrap();
        let g3 = build_geometry(d3, 1.0, 2.0, 21, |_| 1.7, &FlatFrame::default()).unwrap();
        assert!(g3.scalar.iter().all(|r| r.abs() < 1e-10));
        let s = 1.7f64.powf(1.0 - 3.0);
        assert!((g3.h_inner + s).abs() < 1e-13 && (g3.h_outer - 0.5 * s).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_input() {
        let d = Dimension::new(3).unwrap();
        let fr = FlatFrame::default();
        assert!(matches!(build_geometry(d, 2.0, 1.0, 10, |_| 1.0, &fr), Err(GeometryError::InvalidDomain(_))));
        assert!(matches!(build_geometry(d, 1.0, 2.0, 4, |_| 1.0, &fr), Err(GeometryError::InvalidDomain(_))));
        let bad = build_geometry(d, 1.0, 2.0, 11, |r| if r > 1.5 { -1.0 } else { 1.0 }, &fr);
        assert!(matches!(bad, Err(GeometryError::InvalidMetric { .. })));
    }

    #[test]
    fn factor_spec_parsing() {
        assert_eq!(FactorSpec::parse("flat").unwrap(), FactorSpec::Flat);
        assert_eq!(FactorSpec::parse("power:2").unwrap(), FactorSpec::Power(2.0));
        assert_eq!(FactorSpec::parse("gauss:0.2, 0.3, 1.5").unwrap(), FactorSpec::Gauss { amp: 0.2, width: 0.3, center: 1.5 });
        assert!(FactorSpec::parse("gauss:1,2").is_err());
        assert!(FactorSpec::parse("bogus").is_err());
        let p = FactorSpec::parse("power:1*gauss:1,1,1").unwrap();
        assert!((p.eval(2.0, 1.0, 2.0) - 2.0 * (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        let pot = FlatFrame::parse_potential("gauss:-5,0.2,1.5 + const:0.25").unwrap();
        assert_eq!(pot.len(), 2);
        assert!(FlatFrame::parse_potential("wave:1").is_err());
    }

    #[test]
    fn monotone_cubic_preserves_monotonicity() {
        let xs = vec![1.0, 1.2, 1.5, 1.6, 2.0];
        let ys = vec![1.0, 1.0, 2.0, 5.0, 5.1];
        let c = MonotoneCubic::new(xs.clone(), ys.clone()).unwrap();
        let mut prev = c.eval(1.0);
        for k in 0..=1000 {
            let x = 1.0 + k as f64 / 1000.0;
            let y = c.eval(x);
            assert!(y >= prev - 1e-14);
            prev = y;
        }
        for (x, y) in xs.iter().zip(&ys) {
            assert!((c.eval(*x) - y).abs() < 1e-14);
        }
        assert!(MonotoneCubic::new(vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }
}
