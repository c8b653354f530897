//! Small dense symmetric-matrix kernels.
//!
//! Everything here targets the low-dimensional regime (d ≤ ~16) used by the
//! image model. Eigendecompositions use cyclic Jacobi rotations, which are
//! unconditionally stable for symmetric input and need no external LAPACK.

use crate::error::{Error, Result};

/// Eigenvalue floor applied inside Gaussian density evaluation.
pub const ABS_EIG_FLOOR: f64 = 1e-250;

const SYMMETRY_TOL: f64 = 1e-12;
const NEGATIVITY_TOL: f64 = 1e-10;
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A dense symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, checking the symmetry tolerance.
    ///
    /// The stored matrix is the symmetrized `(A + Aᵀ) / 2`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        let scale = 1.0 + data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                let gap = (data[i * dim + j] - data[j * dim + i]).abs();
                // NaN gaps fail this comparison as well
                if !(gap <= SYMMETRY_TOL * scale) {
                    return Err(Error::NonSymmetric { row: i, col: j, gap });
                }
            }
        }
        Ok(Self::symmetrized(dim, data))
    }

    fn symmetrized(dim: usize, mut data: Vec<f64>) -> Self {
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Self { dim, data }
    }

    /// Builds from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = s;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, v) in values.iter().enumerate() {
            m.data[i * dim + i] = *v;
        }
        m
    }

    /// Builds `Σ_k w_k · v_k v_kᵀ` from the columns of `vectors` (column-major `dim × dim`).
    fn from_spectral(dim: usize, vectors: &[f64], weights: &[f64]) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let mut acc = 0.0;
                for k in 0..dim {
                    acc += vectors[k * dim + i] * weights[k] * vectors[k * dim + j];
                }
                data[i * dim + j] = acc;
                data[j * dim + i] = acc;
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Symmetric square `A·A` (exact symmetry restored afterwards).
    pub fn square(&self) -> Self {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = (0..d).map(|k| self.get(i, k) * self.get(k, j)).sum();
            }
        }
        Self::symmetrized(d, data)
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

/// Eigendecomposition `A = Q·diag(λ)·Qᵀ` with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored column-major: column `k` is `vectors[k*d..(k+1)*d]`.
    pub vectors: Vec<f64>,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> &[f64] {
        let d = self.values.len();
        &self.vectors[k * d..(k + 1) * d]
    }
}

/// Cyclic Jacobi eigensolver.
///
/// Converges when the off-diagonal Frobenius mass drops below `1e-14` of the
/// total Frobenius norm; the relative criterion keeps tiny (collapsed)
/// covariances resolvable.
pub fn sym_eigen(a: &SymMatrix) -> Result<SymEigen> {
    let d = a.dim;
    // work on A / max|A| so squared norms neither underflow nor overflow
    let scale = a.max_abs();
    if !scale.is_finite() {
        return Err(Error::EigFailure { sweeps: 0 });
    }
    let inv = if scale > 0.0 { 1.0 / scale } else { 1.0 };
    let mut m: Vec<f64> = a.data.iter().map(|x| x * inv).collect();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let total = m.iter().map(|x| x * x).sum::<f64>().sqrt();

    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += m[i * d + j] * m[i * d + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > JACOBI_TOL * total {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigFailure { sweeps });
        }
        sweeps += 1;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                m[p * d + q] = 0.0;
                m[q * d + p] = 0.0;
                // v is column-major: column k holds eigenvector k
                for k in 0..d {
                    let vp = v[p * d + k];
                    let vq = v[q * d + k];
                    v[p * d + k] = c * vp - s * vq;
                    v[q * d + k] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[i * d + i].total_cmp(&m[j * d + j]));
    let values = order.iter().map(|&i| m[i * d + i] * scale).collect();
    let mut vectors = Vec::with_capacity(d * d);
    for &i in &order {
        vectors.extend_from_slice(&v[i * d..(i + 1) * d]);
    }
    Ok(SymEigen { values, vectors })
}

fn check_psd(values: &[f64]) -> Result<()> {
    let scale: f64 = values.iter().map(|v| v.abs()).sum();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVITY_TOL * scale {
        return Err(Error::NotPsd { min_eig: min });
    }
    Ok(())
}

/// Principal square root `Q·diag(√max(λ, floor))·Qᵀ`.
pub fn sym_sqrt(a: &SymMatrix, eig_floor: f64) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    check_psd(&eig.values)?;
    let roots: Vec<f64> = eig.values.iter().map(|&l| l.max(eig_floor).sqrt()).collect();
    Ok(SymMatrix::from_spectral(a.dim, &eig.vectors, &roots))
}

/// `tr(A^{1/2})`, i.e. the nuclear norm of `A^{1/2}`.
pub fn trace_sqrt(a: &SymMatrix) -> Result<f64> {
    if a.dim == 2 {
        return trace_sqrt_2x2(a);
    }
    let eig = sym_eigen(a)?;
    check_psd(&eig.values)?;
    Ok(eig.values.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

// For 2×2 PSD matrices tr(A^{1/2}) = √(tr A + 2√det A); this form keeps full
// relative precision when the entries are tiny.
fn trace_sqrt_2x2(a: &SymMatrix) -> Result<f64> {
    let (x, y, z) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
    let tr = x + z;
    let det = x * z - y * y;
    let disc = ((x - z) * (x - z) + 4.0 * y * y).sqrt();
    let lmin = 0.5 * (tr - disc);
    if !tr.is_finite() || !det.is_finite() {
        return Err(Error::EigFailure { sweeps: 0 });
    }
    check_psd(&[lmin, 0.5 * (tr + disc)])?;
    // det may lose precision near rank deficiency; clamp at zero
    Ok((tr.max(0.0) + 2.0 * det.max(0.0).sqrt()).sqrt())
}

/// Lower-triangular Cholesky factor together with the diagonal jitter used.
#[derive(Clone, Debug)]
pub struct Cholesky {
    dim: usize,
    /// Row-major lower-triangular factor.
    lower: Vec<f64>,
    pub jitter: f64,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// Writes `L·z` into `out`.
    #[inline]
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i + 1];
            out[i] = row.iter().zip(z).map(|(l, x)| l * x).sum();
        }
    }

    /// Reconstructs `L·Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = (0..=i.min(j)).map(|k| self.get(i, k) * self.get(j, k)).sum();
            }
        }
        SymMatrix { dim: d, data }
    }
}

fn try_cholesky(a: &SymMatrix, jitter: f64) -> Option<Vec<f64>> {
    let d = a.dim;
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Cholesky factorization of `A + j·I` for the smallest jitter in
/// `{0, base, 10·base, …, 10⁶·base}` that succeeds.
///
/// The exact zero matrix is the one singular input accepted without jitter; it
/// factors as `L = 0` so degenerate Gaussians sample their mean.
pub fn cholesky_jitter(a: &SymMatrix, base_jitter: f64) -> Result<Cholesky> {
    if a.data.iter().all(|&v| v == 0.0) {
        return Ok(Cholesky {
            dim: a.dim,
            lower: vec![0.0; a.dim * a.dim],
            jitter: 0.0,
        });
    }
    let levels = std::iter::once(0.0).chain((0..=6).map(|k| base_jitter * 10f64.powi(k)));
    for jitter in levels {
        if let Some(lower) = try_cholesky(a, jitter) {
            return Ok(Cholesky {
                dim: a.dim,
                lower,
                jitter,
            });
        }
    }
    Err(Error::NotFactorizable)
}

/// Smallest eigenvalue of `B − A`; `B ⪰ A` iff the result is `≥ −tol`.
pub fn min_eig_of_difference(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    let diff = b.sub(a)?;
    let eig = sym_eigen(&diff)?;
    Ok(eig.values[0])
}
