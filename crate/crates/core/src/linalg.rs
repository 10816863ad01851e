//! Positive definite hermitian forms on the section space, their whitening
//! factors, and hermitian generators of Bergman geodesics.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Eigendata `H = U diag(exp(log_eigs)) U†` kept alongside forms built from
/// geodesics, so that determinants and inverses stay accurate when the
/// condition number is far beyond what a triangular factorization tolerates.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub vectors: CMat,
    pub log_eigs: Vec<f64>,
}

/// A positive definite hermitian form on `H⁰(X, -mK_X)`, written in the
/// reference basis (so the reference form `H₀` is the identity).
#[derive(Debug, Clone)]
pub struct HermitianForm {
    mat: CMat,
    spectral: Option<Spectral>,
}

/// Factor `W` with `W† H W = I`, stored as `W = exp(log_scale)·w`.
///
/// `w_inv` is the inverse of `w`, so `H = exp(-2·log_scale)·w_inv† w_inv`.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub w: CMat,
    pub w_inv: CMat,
    pub log_scale: f64,
    pub log_det: f64,
}

impl Whitening {
    /// Maps a form written in the whitened frame back to reference coordinates.
    pub fn unwhiten(&self, k: &CMat) -> CMat {
        (self.w_inv.adjoint() * k * &self.w_inv) * C64::from((-2.0 * self.log_scale).exp())
    }
}

const HERMITIAN_TOL: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-13;

impl HermitianForm {
    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::ShapeMismatch {
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        let scale = mat.norm().max(f64::MIN_POSITIVE);
        let asym = (&mat - mat.adjoint()).norm() / scale;
        if !asym.is_finite() || asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian(asym));
        }
        let mat = (&mat + mat.adjoint()) * C64::from(0.5);
        Ok(Self {
            mat,
            spectral: None,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_spectral(CMat::identity(n, n), vec![0.0; n])
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        if let Some((i, &d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
            return Err(Error::NotPositiveDefinite { index: i, pivot: d });
        }
        let n = diag.len();
        Ok(Self::from_spectral(
            CMat::identity(n, n),
            diag.iter().map(|d| d.ln()).collect(),
        ))
    }

    /// Form with eigenvectors `vectors` (columns, unitary) and eigenvalues `exp(log_eigs)`.
    pub fn from_spectral(vectors: CMat, log_eigs: Vec<f64>) -> Self {
        let n = log_eigs.len();
        let mut scaled = vectors.clone();
        for (j, l) in log_eigs.iter().enumerate() {
            let s = C64::from(l.exp());
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        let mut mat = &scaled * vectors.adjoint();
        mat = (&mat + mat.adjoint()) * C64::from(0.5);
        Self {
            mat,
            spectral: Some(Spectral { vectors, log_eigs }),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn spectral(&self) -> Option<&Spectral> {
        self.spectral.as_ref()
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    /// `e^c · H`.
    pub fn scale_exp(&self, c: f64) -> Self {
        let mat = &self.mat * C64::from(c.exp());
        let spectral = self.spectral.as_ref().map(|s| Spectral {
            vectors: s.vectors.clone(),
            log_eigs: s.log_eigs.iter().map(|l| l + c).collect(),
        });
        Self { mat, spectral }
    }

    /// Lower Cholesky factor `L` with `H = L L†`, rejecting pivots below
    /// `1e-13·‖H‖`.
    pub fn cholesky(&self) -> Result<CMat> {
        let n = self.dim();
        let floor = PIVOT_FLOOR * self.mat.norm();
        let mut l = CMat::zeros(n, n);
        for j in 0..n {
            let mut d = self.mat[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > floor) {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = C64::from(djj);
            for i in j + 1..n {
                let mut s = self.mat[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    pub fn whitening(&self) -> Result<Whitening> {
        if let Some(s) = &self.spectral {
            let n = self.dim();
            let log_scale = s
                .log_eigs
                .iter()
                .map(|l| -0.5 * l)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut w = s.vectors.clone();
            let mut w_inv = s.vectors.adjoint();
            for (j, l) in s.log_eigs.iter().enumerate() {
                let a = C64::from((-0.5 * l - log_scale).exp());
                let b = C64::from((0.5 * l + log_scale).exp());
                for i in 0..n {
                    w[(i, j)] *= a;
                    w_inv[(j, i)] *= b;
                }
            }
            return Ok(Whitening {
                w,
                w_inv,
                log_scale,
                log_det: s.log_eigs.iter().sum(),
            });
        }
        let l = self.cholesky()?;
        let l_inv = lower_triangular_inverse(&l);
        let log_det = (0..self.dim()).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
        Ok(Whitening {
            w: l_inv.adjoint(),
            w_inv: l.adjoint(),
            log_scale: 0.0,
            log_det,
        })
    }

    /// `log det(H H₀⁻¹)` with `H₀ = I`.
    pub fn log_det(&self) -> Result<f64> {
        if let Some(s) = &self.spectral {
            return Ok(s.log_eigs.iter().sum());
        }
        let l = self.cholesky()?;
        Ok((0..self.dim()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
    }

    /// Rescales to `det H = det H₀ = 1`.
    pub fn gauge_normalized(&self) -> Result<Self> {
        let ld = self.log_det()?;
        Ok(self.scale_exp(-ld / self.dim() as f64))
    }

    /// Frobenius mass of the entries coupling different blocks, relative to `‖H‖`.
    pub fn off_block_mass(&self, block_of: &[usize]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if block_of[i] != block_of[j] {
                    s += self.mat[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt() / self.mat.norm()
    }
}

fn lower_triangular_inverse(l: &CMat) -> CMat {
    let n = l.nrows();
    let mut inv = CMat::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = C64::from(1.0) / l[(j, j)];
        for i in j + 1..n {
            let mut s = C64::from(0.0);
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

/// Eigendecomposition of a hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(a.nrows(), a.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `exp(s·K)` for hermitian `K`.
pub fn hermitian_exp(k: &CMat, s: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(k);
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let e = C64::from((s * v).exp());
        for i in 0..k.nrows() {
            scaled[(i, j)] *= e;
        }
    }
    let out = &scaled * vecs.adjoint();
    (&out + out.adjoint()) * C64::from(0.5)
}

/// Hermitian generator `A` of the Bergman geodesic ray `H_t = e^{-tA*} e^{-tA}`.
#[derive(Debug, Clone)]
pub struct GeodesicGenerator {
    a: CMat,
    integral_spectrum: bool,
    eigenvalues: Vec<f64>,
    vectors: CMat,
}

impl GeodesicGenerator {
    pub fn new(a: CMat, integral_spectrum: bool) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::ShapeMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        let asym = (&a - a.adjoint()).norm();
        if asym > 1e-12 * a.norm().max(1.0) {
            return Err(Error::NotHermitian(asym));
        }
        let a = (&a + a.adjoint()) * C64::from(0.5);
        let (eigenvalues, vectors) = hermitian_eigen(&a);
        Self::checked(a, integral_spectrum, eigenvalues, vectors)
    }

    pub fn from_diagonal(diag: &[f64], integral_spectrum: bool) -> Result<Self> {
        let n = diag.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
        let vectors = CMat::from_fn(n, n, |r, c| {
            if r == order[c] {
                C64::from(1.0)
            } else {
                C64::from(0.0)
            }
        });
        let eigenvalues = order.iter().map(|&i| diag[i]).collect();
        let a = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            diag.iter().map(|&d| C64::from(d)),
        ));
        Self::checked(a, integral_spectrum, eigenvalues, vectors)
    }

    /// Generator `U diag(eigenvalues) U†`.
    pub fn from_eigen(eigenvalues: &[f64], unitary: CMat, integral_spectrum: bool) -> Result<Self> {
        let n = eigenvalues.len();
        if unitary.nrows() != n || unitary.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: unitary.nrows(),
            });
        }
        let defect = (unitary.adjoint() * &unitary - CMat::identity(n, n)).norm();
        if defect > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "eigenvector matrix is not unitary (defect {defect:e})"
            )));
        }
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            eigenvalues.iter().map(|&d| C64::from(d)),
        ));
        Self::new(&unitary * d * unitary.adjoint(), integral_spectrum)
    }

    fn checked(
        a: CMat,
        integral_spectrum: bool,
        eigenvalues: Vec<f64>,
        vectors: CMat,
    ) -> Result<Self> {
        if integral_spectrum {
            if let Some(bad) = eigenvalues.iter().find(|l| (*l - l.round()).abs() > 1e-8) {
                return Err(Error::InvalidInput(format!(
                    "eigenvalue {bad} is not within 1e-8 of an integer"
                )));
            }
        }
        Ok(Self {
            a,
            integral_spectrum,
            eigenvalues,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.a
    }

    pub fn integral_spectrum(&self) -> bool {
        self.integral_spectrum
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unitary eigenvector matrix matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn lambda_max(&self) -> f64 {
        *self
            .eigenvalues
            .last()
            .expect("generator has positive size")
    }

    /// `tr(A + A*)`.
    pub fn trace_sym(&self) -> f64 {
        2.0 * self.eigenvalues.iter().sum::<f64>()
    }

    /// `A + c·Id`, keeping the cached eigenvectors.
    pub fn shifted(&self, c: f64) -> Self {
        let n = self.dim();
        Self {
            a: &self.a + CMat::identity(n, n) * C64::from(c),
            integral_spectrum: self.integral_spectrum && (c - c.round()).abs() < 1e-12,
            eigenvalues: self.eigenvalues.iter().map(|l| l + c).collect(),
            vectors: self.vectors.clone(),
        }
    }

    pub fn negated(&self) -> Self {
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).rev().collect();
        let eigenvalues = order.iter().map(|&i| -self.eigenvalues[i]).collect();
        let vectors = CMat::from_fn(n, n, |r, c| self.vectors[(r, order[c])]);
        order.clear();
        Self {
            a: -&self.a,
            integral_spectrum: self.integral_spectrum,
            eigenvalues,
            vectors,
        }
    }

    /// `A − λ_max·Id` and the shift `λ_max` that was removed.
    pub fn gauge_shifted(&self) -> (Self, f64) {
        let lm = self.lambda_max();
        (self.shifted(-lm), lm)
    }

    /// The point `H_t = e^{-tA*} e^{-tA} = U e^{-2tΛ} U†` of the ray.
    pub fn at(&self, t: f64) -> HermitianForm {
        HermitianForm::from_spectral(
            self.vectors.clone(),
            self.eigenvalues.iter().map(|l| -2.0 * t * l).collect(),
        )
    }

    /// Whether `A` preserves the blocks of a weight decomposition.
    pub fn off_block_mass(&self, block_of: &[usize]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if block_of[i] != block_of[j] {
                    s += self.a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    }
}

/// Random hermitian matrix with Gaussian entries, rescaled to Frobenius norm `norm`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, norm: f64, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::from(rng.sample::<f64, _>(StandardNormal));
        for j in i + 1..n {
            let z = C64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    let f = m.norm();
    m * C64::from(norm / f)
}
