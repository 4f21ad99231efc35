//! Dense complex matrix kernel.
//!
//! Everything here works on small square matrices (dimension up to a few
//! hundred) stored row-major. The exponential uses degree-13 Padé with
//! scaling and squaring; Hermitian problems go through cyclic Jacobi.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Hermiticity tolerance accepted by [`hermitian_eig`], relative to `‖z‖_F`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Jacobi stops once the off-diagonal Frobenius mass drops below this
/// fraction of `‖z‖_F`.
pub const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

// Padé(13) coefficients and the 1-norm threshold from Higham (2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix of dimension {dim} needs {expected} entries, got {got}")]
    InvalidShape { dim: usize, expected: usize, got: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (‖z - z†‖_F = {deviation:e}, allowed {allowed:e})")]
    NotHermitian { deviation: f64, allowed: f64 },
    #[error("singular matrix in linear solve")]
    Singular,
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.6e}{:+.6e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl CMatrix {
    pub fn new(dim: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        let expected = dim * dim;
        if dim == 0 || data.len() != expected {
            return Err(LinalgError::InvalidShape { dim, expected, got: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from real rows. Panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "ragged row");
            data.extend(row.iter().map(|&x| C64::new(x, 0.0)));
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "ragged row");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(dim > 0);
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![C64::new(1.0, 0.0); dim])
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|r| (0..self.dim).all(|c| r == c || self[(r, c)] == C64::new(0.0, 0.0)))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * c).collect() }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * c).collect() }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: C64, other: &CMatrix) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + c * b).collect(),
        }
    }

    pub fn try_matmul(&self, other: &CMatrix) -> Result<CMatrix, LinalgError> {
        check_dims(self, other)?;
        Ok(self.matmul(other))
    }

    fn matmul(&self, other: &CMatrix) -> CMatrix {
        let n = self.dim;
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let out_row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        CMatrix { dim: n, data: out }
    }

    /// Left-multiplies by `diag(d)`: scales row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[C64]) -> CMatrix {
        assert_eq!(d.len(), self.dim);
        let n = self.dim;
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            for z in &mut out.data[i * n..(i + 1) * n] {
                *z *= di;
            }
        }
        out
    }

    /// Right-multiplies by `diag(d)`: scales column `j` by `d[j]`.
    pub fn scale_cols(&self, d: &[C64]) -> CMatrix {
        assert_eq!(d.len(), self.dim);
        let n = self.dim;
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            for (z, &dj) in row.iter_mut().zip(d) {
                *z *= dj;
            }
        }
        out
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (n, m) = (self.dim, other.dim);
        CMatrix::from_fn(n * m, |r, c| self[(r / m, c / m)] * other[(r % m, c % m)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.dim)
            .map(|c| (0..self.dim).map(|r| self[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `‖self + self†‖_F`; zero for anti-Hermitian matrices.
    pub fn anti_hermitian_defect(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                s += (self[(r, c)] + self[(c, r)].conj()).norm_sqr();
            }
        }
        s.sqrt()
    }

    /// `‖self - self†‖_F`; zero for Hermitian matrices.
    pub fn hermitian_defect(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                s += (self[(r, c)] - self[(c, r)].conj()).norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermitian_defect() <= rel_tol * self.frobenius_norm()
    }

    pub fn is_anti_hermitian(&self, rel_tol: f64) -> bool {
        self.anti_hermitian_defect() <= rel_tol * self.frobenius_norm()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.matmul(rhs)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        self.add_scaled(C64::new(1.0, 0.0), rhs)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        self.add_scaled(C64::new(-1.0, 0.0), rhs)
    }
}

fn check_dims(a: &CMatrix, b: &CMatrix) -> Result<(), LinalgError> {
    if a.dim != b.dim {
        return Err(LinalgError::DimensionMismatch { left: a.dim, right: b.dim });
    }
    Ok(())
}

/// `ab - ba`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    check_dims(a, b)?;
    Ok(&a.matmul(b) - &b.matmul(a))
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value, from the top eigenvalue of `m†m`.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    let gram = &m.adjoint() * m;
    // m†m is Hermitian up to rounding; symmetrize before the eigensolve.
    let herm = (&gram + &gram.adjoint()).scale_real(0.5);
    match hermitian_eig(&herm) {
        Ok(eig) => eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        // Unreachable for a symmetrized finite matrix, fall back to the bound.
        Err(_) => frobenius_norm(m),
    }
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.dim;
    let norm = m.one_norm();
    if norm == 0.0 {
        return Ok(CMatrix::identity(n));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = m.scale_real(0.5f64.powi(s));
    let ident = CMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| C64::new(PADE13[k], 0.0);

    let inner_u = a6.scale(b(13)).add_scaled(b(11), &a4).add_scaled(b(9), &a2);
    let u_poly = (&a6 * &inner_u)
        .add_scaled(b(7), &a6)
        .add_scaled(b(5), &a4)
        .add_scaled(b(3), &a2)
        .add_scaled(b(1), &ident);
    let u = &a * &u_poly;
    let inner_v = a6.scale(b(12)).add_scaled(b(10), &a4).add_scaled(b(8), &a2);
    let v = (&a6 * &inner_v)
        .add_scaled(b(6), &a6)
        .add_scaled(b(4), &a4)
        .add_scaled(b(2), &a2)
        .add_scaled(b(0), &ident);

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Solves `p x = q` by LU with partial pivoting.
pub fn solve(p: &CMatrix, q: &CMatrix) -> Result<CMatrix, LinalgError> {
    check_dims(p, q)?;
    let n = p.dim;
    let mut a = p.data.clone();
    let mut b = q.data.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .unwrap_or(col);
        if a[pivot * n + col].norm() == 0.0 {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
                b.swap(pivot * n + k, col * n + k);
            }
        }
        let inv = C64::new(1.0, 0.0) / a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for k in col..n {
                let t = a[col * n + k];
                a[row * n + k] -= f * t;
            }
            for k in 0..n {
                let t = b[col * n + k];
                b[row * n + k] -= f * t;
            }
        }
    }
    for col in (0..n).rev() {
        let inv = C64::new(1.0, 0.0) / a[col * n + col];
        for k in 0..n {
            let mut acc = b[col * n + k];
            for j in col + 1..n {
                acc -= a[col * n + j] * b[j * n + k];
            }
            b[col * n + k] = acc * inv;
        }
    }
    CMatrix::new(n, b)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `k` is the eigenvector of `eigenvalues[k]`.
    pub basis: CMatrix,
}

impl HermitianEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `basis · diag(eigenvalues) · basis†`.
    pub fn reconstruct(&self) -> CMatrix {
        let d: Vec<C64> = self.eigenvalues.iter().map(|&x| C64::new(x, 0.0)).collect();
        &self.basis.scale_cols(&d) * &self.basis.adjoint()
    }

    /// Largest eigenvalue magnitude, i.e. the spectral norm of the source matrix.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

pub fn hermitian_eig(z: &CMatrix) -> Result<HermitianEig, LinalgError> {
    hermitian_eig_with(z, HERMITIAN_TOL, JACOBI_TOL)
}

/// Cyclic Jacobi with explicit tolerances.
pub fn hermitian_eig_with(
    z: &CMatrix,
    hermitian_tol: f64,
    jacobi_tol: f64,
) -> Result<HermitianEig, LinalgError> {
    if !z.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let norm = z.frobenius_norm();
    let deviation = z.hermitian_defect();
    let allowed = hermitian_tol * norm;
    if deviation > allowed {
        return Err(LinalgError::NotHermitian { deviation, allowed });
    }
    let n = z.dim;
    let mut a = z.clone();
    let mut v = CMatrix::identity(n);
    let target = jacobi_tol * norm;

    let off_norm = |a: &CMatrix| {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += a[(r, c)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let phase = apq / r; // e^{iφ}
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = diag-phase then real rotation on (p, q).
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;
                // a <- a G
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                // a <- G† a
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                // v <- v G
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut basis = CMatrix::from_fn(n, |r, c| v[(r, order[c])]);
    orthonormalize_columns(&mut basis);
    Ok(HermitianEig { eigenvalues, basis })
}

/// Two passes of modified Gram–Schmidt over the columns, in place.
/// Removes the unitarity defect that Jacobi rotations accumulate.
pub fn orthonormalize_columns(m: &mut CMatrix) {
    let n = m.dim;
    for _ in 0..2 {
        for c in 0..n {
            for prev in 0..c {
                let mut dot = C64::new(0.0, 0.0);
                for r in 0..n {
                    dot += m[(r, prev)].conj() * m[(r, c)];
                }
                for r in 0..n {
                    let sub = dot * m[(r, prev)];
                    m[(r, c)] -= sub;
                }
            }
            let norm = (0..n).map(|r| m[(r, c)].norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                for r in 0..n {
                    m[(r, c)] /= norm;
                }
            }
        }
    }
}

/// `e^{c Z}` for the Hermitian `Z` behind `eig`.
pub fn exp_scaled(eig: &HermitianEig, c: C64) -> CMatrix {
    let d = exp_diag(eig, c);
    &eig.basis.scale_cols(&d) * &eig.basis.adjoint()
}

/// `e^{c Z} · m` without forming the exponential.
pub fn exp_scaled_apply(eig: &HermitianEig, c: C64, m: &CMatrix) -> CMatrix {
    let d = exp_diag(eig, c);
    let rotated = &eig.basis.adjoint() * m;
    &eig.basis * &rotated.scale_rows(&d)
}

fn exp_diag(eig: &HermitianEig, c: C64) -> Vec<C64> {
    eig.eigenvalues.iter().map(|&lam| (c * lam).exp()).collect()
}

/// Tolerance for recognising a sum of single-qubit terms, relative to `‖z‖_F`.
pub const LOCAL_SUM_TOL: f64 = 1e-14;

/// `z = shift·I + Σ_s b_s`, where `b_s` is a traceless 2×2 block on
/// qubit `s` (qubit 0 is the most significant bit of the row index).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSum {
    pub shift: C64,
    /// Row-major `[b00, b01, b10, b11]` per qubit.
    pub terms: Vec<[C64; 4]>,
}

impl LocalSum {
    /// Decomposes `z` if it is a sum of single-qubit operators on
    /// `dim = 2^L`.
    pub fn detect(z: &CMatrix, rel_tol: f64) -> Option<LocalSum> {
        let d = z.dim;
        if d < 2 || !d.is_power_of_two() || !z.is_finite() {
            return None;
        }
        let l = d.trailing_zeros() as usize;
        let shift = z.trace() / d as f64;
        let half = (d / 2) as f64;
        let mut terms = Vec::with_capacity(l);
        for site in 0..l {
            let bit = 1usize << (l - 1 - site);
            let mut a = [C64::new(0.0, 0.0); 4];
            for r in (0..d).filter(|r| r & bit == 0) {
                a[0] += z[(r, r)];
                a[1] += z[(r, r | bit)];
                a[2] += z[(r | bit, r)];
                a[3] += z[(r | bit, r | bit)];
            }
            let mean = (a[0] + a[3]) * 0.5;
            terms.push([(a[0] - mean) / half, a[1] / half, a[2] / half, (a[3] - mean) / half]);
        }
        let local = LocalSum { shift, terms };
        let deviation = frobenius_norm(&(z - &local.to_matrix()));
        (deviation <= rel_tol * z.frobenius_norm().max(f64::MIN_POSITIVE)).then_some(local)
    }

    pub fn sites(&self) -> usize {
        self.terms.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.sites()
    }

    pub fn to_matrix(&self) -> CMatrix {
        self.mul(&CMatrix::identity(self.dim()))
    }

    /// `(z - shift·I) · m`.
    fn mul_traceless(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.dim);
        for site in 0..self.sites() {
            let mut part = m.clone();
            apply_site(&mut part, self.sites(), site, &self.terms[site]);
            out = &out + &part;
        }
        out
    }

    /// `z · m`.
    pub fn mul(&self, m: &CMatrix) -> CMatrix {
        self.mul_traceless(m).add_scaled(self.shift, m)
    }

    /// `e^{c z} · m`, one closed-form 2×2 exponential per qubit.
    pub fn exp_apply(&self, c: f64, m: &CMatrix) -> CMatrix {
        let mut out = m.scale((self.shift * c).exp());
        for (site, b) in self.terms.iter().enumerate() {
            apply_site(&mut out, self.sites(), site, &exp_traceless_2x2(b, c));
        }
        out
    }

    /// `‖z‖₂ ≤ |shift| + Σ ‖b_s‖_F`.
    pub fn norm_bound(&self) -> f64 {
        self.shift.norm() + self.terms.iter().map(|b| b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()).sum::<f64>()
    }
}

/// `e^{c b}` for traceless 2×2 `b`, using `b² = δ I`.
fn exp_traceless_2x2(b: &[C64; 4], c: f64) -> [C64; 4] {
    let delta = b[0] * b[0] + b[1] * b[2];
    let s = delta.sqrt();
    let x = s * c;
    let (ch, sh) = if x.norm() == 0.0 { (C64::new(1.0, 0.0), C64::new(c, 0.0)) } else { (x.cosh(), x.sinh() / s) };
    [ch + sh * b[0], sh * b[1], sh * b[2], ch + sh * b[3]]
}

/// Left-multiplies `m` by the 2×2 block `u` acting on qubit `site`.
fn apply_site(m: &mut CMatrix, sites: usize, site: usize, u: &[C64; 4]) {
    let d = m.dim;
    let bit = 1usize << (sites - 1 - site);
    for r in (0..d).filter(|r| r & bit == 0) {
        let (r0, r1) = (r * d, (r | bit) * d);
        for col in 0..d {
            let (a, b) = (m.data[r0 + col], m.data[r1 + col]);
            m.data[r0 + col] = u[0] * a + u[1] * b;
            m.data[r1 + col] = u[2] * a + u[3] * b;
        }
    }
}
