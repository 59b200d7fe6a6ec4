//! Banded and dense linear algebra, plus the smallest generalized eigenpair
//! of a symmetric pencil (K, diag M).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular system: pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("eigen iteration did not converge after {iterations} steps (last Rayleigh quotient {last_rq})")]
    NoConvergence { iterations: usize, last_rq: f64 },
}

/// Tridiagonal matrix with optional corner entries A[0][2] and A[n-1][n-3].
#[derive(Clone, Debug, PartialEq)]
pub struct BandedSystem {
    /// A[i+1][i]
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    /// A[i][i+1]
    pub sup: Vec<f64>,
    pub corner_first: f64,
    pub corner_last: f64,
}

impl BandedSystem {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self, LinalgError> {
        let n = diag.len();
        if n == 0 || sub.len() + 1 != n || sup.len() + 1 != n {
            return Err(LinalgError::Size(format!("bands {}/{}/{}", sub.len(), n, sup.len())));
        }
        Ok(BandedSystem { sub, diag, sup, corner_first: 0.0, corner_last: 0.0 })
    }

    /// Symmetric tridiagonal from diagonal and off-diagonal.
    pub fn symmetric(diag: Vec<f64>, off: Vec<f64>) -> Result<Self, LinalgError> {
        BandedSystem::new(off.clone(), diag, off)
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, x)| d * x).collect();
        for i in 0..n - 1 {
            y[i] += self.sup[i] * x[i + 1];
            y[i + 1] += self.sub[i] * x[i];
        }
        if n >= 3 {
            y[0] += self.corner_first * x[2];
            y[n - 1] += self.corner_last * x[n - 3];
        }
        y
    }

    pub fn inf_norm(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.sub[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.sup[i].abs();
                }
                if n >= 3 && i == 0 {
                    s += self.corner_first.abs();
                }
                if n >= 3 && i == n - 1 {
                    s += self.corner_last.abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.size();
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, self.diag[i]);
            if i + 1 < n {
                m.set(i, i + 1, self.sup[i]);
                m.set(i + 1, i, self.sub[i]);
            }
        }
        if n >= 3 {
            m.set(0, 2, m.get(0, 2) + self.corner_first);
            m.set(n - 1, n - 3, m.get(n - 1, n - 3) + self.corner_last);
        }
        m
    }
}

/// Thomas algorithm after eliminating the corner entries.
pub fn solve_banded(sys: &BandedSystem, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = sys.size();
    if rhs.len() != n {
        return Err(LinalgError::Size(format!("rhs {} vs system {}", rhs.len(), n)));
    }
    let tiny = 1e-14 * sys.inf_norm();
    let mut a = sys.sub.clone();
    let mut b = sys.diag.clone();
    let mut c = sys.sup.clone();
    let mut d = rhs.to_vec();
    if n >= 3 && sys.corner_first != 0.0 {
        // row0 -= f·row1 cancels A[0][2] against A[1][2]
        if c[1].abs() <= tiny {
            return Err(LinalgError::Singular { row: 1, pivot: c[1] });
        }
        let f = sys.corner_first / c[1];
        b[0] -= f * a[0];
        c[0] -= f * b[1];
        d[0] -= f * d[1];
    }
    if n >= 3 && sys.corner_last != 0.0 {
        let k = n - 2;
        if a[k - 1].abs() <= tiny {
            return Err(LinalgError::Singular { row: k, pivot: a[k - 1] });
        }
        let f = sys.corner_last / a[k - 1];
        a[n - 2] -= f * b[k];
        b[n - 1] -= f * c[k];
        d[n - 1] -= f * d[k];
    }
    for i in 0..n {
        if i > 0 {
            let m = a[i - 1] / b[i - 1];
            b[i] -= m * c[i - 1];
            d[i] -= m * d[i - 1];
        }
        if !(b[i].abs() > tiny) {
            return Err(LinalgError::Singular { row: i, pivot: b[i] });
        }
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
    }
    Ok(x)
}

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LinalgError::Size("matrix is not square".into()));
        }
        Ok(DenseMatrix { n, data: rows.concat() })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Partial-pivot LU solve.
pub fn solve_dense(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = m.n;
    if rhs.len() != n {
        return Err(LinalgError::Size(format!("rhs {} vs matrix {}", rhs.len(), n)));
    }
    let tiny = 1e-14 * m.inf_norm();
    let mut a = m.data.clone();
    let mut b = rhs.to_vec();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
        if !(a[piv * n + k].abs() > tiny) {
            return Err(LinalgError::Singular { row: k, pivot: a[piv * n + k] });
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            b.swap(k, piv);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            if f != 0.0 {
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Ok(x)
}

/// LDLᵀ factor of K − σM without pivoting. `negatives` is the inertia count.
pub struct ShiftedFactor {
    kind: FactorKind,
    pub negatives: usize,
}

enum FactorKind {
    Tri { d: Vec<f64>, l: Vec<f64> },
    Dense { n: usize, l: Vec<f64>, d: Vec<f64> },
}

impl ShiftedFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.kind {
            FactorKind::Tri { d, l } => {
                let n = d.len();
                let mut y = rhs.to_vec();
                for i in 1..n {
                    y[i] -= l[i - 1] * y[i - 1];
                }
                for i in 0..n {
                    y[i] /= d[i];
                }
                for i in (0..n - 1).rev() {
                    y[i] -= l[i] * y[i + 1];
                }
                y
            }
            FactorKind::Dense { n, l, d } => {
                let n = *n;
                let mut y = rhs.to_vec();
                for i in 0..n {
                    for j in 0..i {
                        y[i] -= l[i * n + j] * y[j];
                    }
                }
                for i in 0..n {
                    y[i] /= d[i];
                }
                for i in (0..n).rev() {
                    for j in i + 1..n {
                        y[i] -= l[j * n + i] * y[j];
                    }
                }
                y
            }
        }
    }
}

/// Symmetric operators usable in the generalized eigen solver.
pub trait SymmetricPencil {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn inf_norm(&self) -> f64;
    /// Lower bound on the spectrum of M^{-1/2} K M^{-1/2} by Gershgorin discs.
    fn gershgorin_lower(&self, m: &[f64]) -> f64;
    fn factor_shifted(&self, sigma: f64, m: &[f64]) -> ShiftedFactor;
}

fn guard_pivot(p: f64, scale: f64) -> f64 {
    // exact zero pivots would stop the iteration; nudge them (measure-zero event)
    if p == 0.0 {
        1e-300_f64.max(1e-16 * scale)
    } else {
        p
    }
}

impl SymmetricPencil for BandedSystem {
    fn size(&self) -> usize {
        self.diag.len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        BandedSystem::apply(self, x)
    }
    fn inf_norm(&self) -> f64 {
        BandedSystem::inf_norm(self)
    }
    fn gershgorin_lower(&self, m: &[f64]) -> f64 {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut r = 0.0;
                if i > 0 {
                    r += self.sub[i - 1].abs() / (m[i] * m[i - 1]).sqrt();
                }
                if i + 1 < n {
                    r += self.sup[i].abs() / (m[i] * m[i + 1]).sqrt();
                }
                self.diag[i] / m[i] - r
            })
            .fold(f64::INFINITY, f64::min)
    }
    fn factor_shifted(&self, sigma: f64, m: &[f64]) -> ShiftedFactor {
        let n = self.diag.len();
        let scale = self.inf_norm().max(1e-300);
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        let mut negatives = 0;
        for i in 0..n {
            let mut di = self.diag[i] - sigma * m[i];
            if i > 0 {
                di -= l[i - 1] * l[i - 1] * d[i - 1];
            }
            di = guard_pivot(di, scale);
            if di < 0.0 {
                negatives += 1;
            }
            d[i] = di;
            if i + 1 < n {
                l[i] = self.sub[i] / di;
            }
        }
        ShiftedFactor { kind: FactorKind::Tri { d, l }, negatives }
    }
}

impl SymmetricPencil for DenseMatrix {
    fn size(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        DenseMatrix::apply(self, x)
    }
    fn inf_norm(&self) -> f64 {
        DenseMatrix::inf_norm(self)
    }
    fn gershgorin_lower(&self, m: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                let r: f64 = (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j).abs() / (m[i] * m[j]).sqrt()).sum();
                self.get(i, i) / m[i] - r
            })
            .fold(f64::INFINITY, f64::min)
    }
    fn factor_shifted(&self, sigma: f64, m: &[f64]) -> ShiftedFactor {
        let n = self.n;
        let scale = self.inf_norm().max(1e-300);
        let mut a = self.data.clone();
        for i in 0..n {
            a[i * n + i] -= sigma * m[i];
        }
        let mut l = vec![0.0; n * n];
        let mut d = vec![0.0; n];
        let mut negatives = 0;
        for j in 0..n {
            let mut dj = a[j * n + j];
            for k in 0..j {
                dj -= l[j * n + k] * l[j * n + k] * d[k];
            }
            dj = guard_pivot(dj, scale);
            if dj < 0.0 {
                negatives += 1;
            }
            d[j] = dj;
            l[j * n + j] = 1.0;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k] * d[k];
                }
                l[i * n + j] = s / dj;
            }
        }
        ShiftedFactor { kind: FactorKind::Dense { n, l, d }, negatives }
    }
}

const EIG_TOL: f64 = 1e-10;
const EIG_MAX_ITER: usize = 500;

/// Smallest eigenpair of K φ = η M φ by shift-and-invert iteration.
///
/// The shift starts below the Gershgorin bound and moves toward the Rayleigh
/// quotient, but only to values the LDLᵀ inertia count certifies to lie below
/// the smallest eigenvalue. φ is M-normalized with its largest-magnitude entry positive.
pub fn smallest_eig_generalized<K: SymmetricPencil>(k: &K, m: &[f64]) -> Result<(f64, Vec<f64>), LinalgError> {
    let n = k.size();
    if m.len() != n {
        return Err(LinalgError::Size(format!("mass {} vs operator {}", m.len(), n)));
    }
    if m.iter().any(|&x| !(x > 0.0)) {
        return Err(LinalgError::Size("mass must be strictly positive".into()));
    }
    let knorm = k.inf_norm().max(1e-300);
    let lower = k.gershgorin_lower(m);
    let mut sigma = lower - 1e-3 * (1.0 + lower.abs());
    let mut fac = k.factor_shifted(sigma, m);

    // generic positive start vector
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.7 + 0.3).sin()).collect();
    normalize_m(&mut x, m);
    let mut rq_prev = f64::INFINITY;
    let mut rq = rayleigh(k, m, &x);
    let mut settled = 0;
    for it in 0..EIG_MAX_ITER {
        let mx: Vec<f64> = x.iter().zip(m).map(|(a, b)| a * b).collect();
        let mut y = fac.solve(&mx);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NoConvergence { iterations: it, last_rq: rq });
        }
        // inverse Rayleigh quotient: σ + xᵀMx / xᵀMy, free of the cancellation in xᵀKx
        let xmy: f64 = mx.iter().zip(&y).map(|(a, b)| a * b).sum();
        normalize_m(&mut y, m);
        x = y;
        rq = if xmy != 0.0 { sigma + 1.0 / xmy } else { rayleigh(k, m, &x) };
        let kx = k.apply(&x);
        let res = kx.iter().zip(&x).zip(m).map(|((a, xi), mi)| (a - rq * mi * xi).abs()).fold(0.0, f64::max);
        let small_step = (rq - rq_prev).abs() <= EIG_TOL * rq.abs().max(1.0);
        if small_step && res <= 1e-10 * knorm {
            settled += 1;
            if settled >= 2 {
                fix_sign(&mut x);
                return Ok((rq, x));
            }
        } else {
            settled = 0;
        }
        rq_prev = rq;
        // move the shift toward the Rayleigh quotient, certified below the spectrum
        let rnorm: f64 = kx.iter().zip(&x).zip(m).map(|((a, xi), mi)| (a - rq * mi * xi).powi(2) / mi).sum::<f64>().sqrt();
        let gap = rnorm.max(1e-9 * (1.0 + rq.abs()));
        let mut trial = rq - 2.0 * gap;
        if trial > sigma {
            for _ in 0..40 {
                let f = k.factor_shifted(trial, m);
                if f.negatives == 0 {
                    sigma = trial;
                    fac = f;
                    break;
                }
                trial = 0.5 * (sigma + trial);
                if trial - sigma <= 1e-14 * (1.0 + sigma.abs()) {
                    break;
                }
            }
        }
    }
    Err(LinalgError::NoConvergence { iterations: EIG_MAX_ITER, last_rq: rq })
}

fn rayleigh<K: SymmetricPencil>(k: &K, m: &[f64], x: &[f64]) -> f64 {
    let kx = k.apply(x);
    let num: f64 = kx.iter().zip(x).map(|(a, b)| a * b).sum();
    let den: f64 = x.iter().zip(m).map(|(a, b)| a * a * b).sum();
    num / den
}

fn normalize_m(x: &mut [f64], m: &[f64]) {
    let s: f64 = x.iter().zip(m).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= s);
}

fn fix_sign(x: &mut [f64]) {
    let big = x.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if big < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Oracle: smallest eigenvalue of K − ηM by bisection on the number of sign
/// changes in the leading principal minors of K − ηM, each minor computed by
/// its own partial-pivot elimination. Intended for small dense matrices (≤ 64).
pub fn bisection_smallest_eig(k: &DenseMatrix, m: &[f64]) -> Result<f64, LinalgError> {
    let n = k.n;
    if n > 64 {
        return Err(LinalgError::Size(format!("oracle limited to size 64, got {n}")));
    }
    if m.len() != n || m.iter().any(|&x| !(x > 0.0)) {
        return Err(LinalgError::Size("mass must match and be positive".into()));
    }
    // Gershgorin bound in the M^{-1/2}KM^{-1/2} scaling, computed here independently
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        for j in 0..n {
            if j != i {
                r += k.get(i, j).abs() / (m[i] * m[j]).sqrt();
            }
        }
        lo = lo.min(k.get(i, i) / m[i] - r);
        hi = hi.min(k.get(i, i) / m[i]);
    }
    lo -= 1.0 + lo.abs() * 1e-6;
    hi += 1e-12 * (1.0 + hi.abs());
    let count_below = |eta: f64| -> usize {
        let mut changes = 0;
        let mut prev_sign = 1.0;
        for size in 1..=n {
            let mut a: Vec<f64> = Vec::with_capacity(size * size);
            for i in 0..size {
                for j in 0..size {
                    a.push(k.get(i, j) - if i == j { eta * m[i] } else { 0.0 });
                }
            }
            let s = det_sign(&mut a, size);
            if s != prev_sign {
                changes += 1;
            }
            prev_sign = s;
        }
        changes
    };
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn det_sign(a: &mut [f64], n: usize) -> f64 {
    let mut sign = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap();
        if a[piv * n + c] == 0.0 {
            // a zero minor; treat as the sign it approaches from below
            return sign;
        }
        if piv != c {
            for j in 0..n {
                a.swap(c * n + j, piv * n + j);
            }
            sign = -sign;
        }
        if a[c * n + c] < 0.0 {
            sign = -sign;
        }
        for i in c + 1..n {
            let f = a[i * n + c] / a[c * n + c];
            for j in c..n {
                a[i * n + j] -= f * a[c * n + j];
            }
        }
    }
    sign
}
