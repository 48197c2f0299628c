//! Shift-invariant kernels on connectivity patterns, their spectral
//! densities, and spectral graph kernels built from the normalized
//! Laplacian.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Cauchy, Distribution, Normal, Uniform};

use crate::error::{check_len, invalid, Error, Result};
use crate::graph::Graph;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// `exp(-‖a-b‖² / (2σ²))`, bandwidth = σ².
    Gaussian,
    /// `exp(-‖a-b‖₁ / σ)`, bandwidth = σ.
    Laplacian,
    /// `∏ 1 / (1 + (aᵢ-bᵢ)² / σ²)`, bandwidth = σ.
    Cauchy,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::Cauchy => "cauchy",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            KernelFamily::Gaussian => 0,
            KernelFamily::Laplacian => 1,
            KernelFamily::Cauchy => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(KernelFamily::Gaussian),
            1 => Some(KernelFamily::Laplacian),
            2 => Some(KernelFamily::Cauchy),
            _ => None,
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "laplacian" => Ok(KernelFamily::Laplacian),
            "cauchy" => Ok(KernelFamily::Cauchy),
            other => Err(invalid("family", format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A standardized shift-invariant kernel: `κ(a, a) = 1`, `0 <= κ <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid("bandwidth", format!("must be positive, got {bandwidth}")));
        }
        Ok(KernelSpec { family, bandwidth })
    }

    pub fn gaussian(sigma2: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma2)
    }

    /// Closed-form evaluation.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_len(a.len(), b.len())?;
        if !(self.bandwidth > 0.0) {
            return Err(invalid("bandwidth", "must be positive"));
        }
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        let s = self.bandwidth;
        Ok(match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = diffs.map(|d| d * d).sum();
                (-sq / (2.0 * s)).exp()
            }
            KernelFamily::Laplacian => {
                let l1: f64 = diffs.map(f64::abs).sum();
                (-l1 / s).exp()
            }
            KernelFamily::Cauchy => diffs.map(|d| 1.0 / (1.0 + d * d / (s * s))).product(),
        })
    }

    /// Draw a `d × dim` matrix (row-major) whose rows are i.i.d. from the
    /// kernel's normalized spectral density.
    pub fn spectral_sample(&self, d: usize, dim: usize, seed: u64) -> Result<Vec<f64>> {
        if d == 0 || dim == 0 {
            return Err(invalid("d", "feature count and dimension must be positive"));
        }
        let mut rng = seed::rng(seed);
        let count = d * dim;
        let s = self.bandwidth;
        let v = match self.family {
            KernelFamily::Gaussian => {
                let dist = Normal::new(0.0, 1.0 / s.sqrt()).map_err(|e| invalid("bandwidth", e.to_string()))?;
                (0..count).map(|_| dist.sample(&mut rng)).collect()
            }
            KernelFamily::Laplacian => {
                let dist = Cauchy::new(0.0, 1.0 / s).map_err(|e| invalid("bandwidth", e.to_string()))?;
                (0..count).map(|_| dist.sample(&mut rng)).collect()
            }
            KernelFamily::Cauchy => {
                // Laplace(0, 1/σ) by inversion.
                let scale = 1.0 / s;
                let u = Uniform::new(-0.5, 0.5).expect("valid range");
                (0..count)
                    .map(|_| {
                        let x: f64 = u.sample(&mut rng);
                        -scale * x.signum() * (1.0 - 2.0 * x.abs()).ln()
                    })
                    .collect()
            }
        };
        Ok(v)
    }
}

pub fn eval_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    spec.eval(a, b)
}

/// Gram matrix `K[i, j] = κ(xᵢ, xⱼ)` over a set of patterns.
pub fn kernel_matrix(spec: &KernelSpec, patterns: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = patterns.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = spec.eval(&patterns[i], &patterns[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Spectral response `r(λ)` of a graph kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphKernelFamily {
    /// `r(λ) = exp(σ² λ / 2)`.
    Diffusion { sigma2: f64 },
    /// `r(λ) = 1` on the `band` smallest eigenvalues, `1 / out_of_band`
    /// elsewhere.
    Bandlimited { band: usize, out_of_band: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphKernelSpec {
    pub family: GraphKernelFamily,
    /// `r†(λ) = 1 / r(λ)` only where `r(λ) > floor`, else 0.
    pub floor: f64,
}

pub const DEFAULT_PINV_FLOOR: f64 = 1e-10;
pub const DEFAULT_OUT_OF_BAND: f64 = 1e-6;

impl GraphKernelSpec {
    pub fn diffusion(sigma2: f64) -> Self {
        GraphKernelSpec {
            family: GraphKernelFamily::Diffusion { sigma2 },
            floor: DEFAULT_PINV_FLOOR,
        }
    }

    pub fn bandlimited(band: usize) -> Self {
        GraphKernelSpec {
            family: GraphKernelFamily::Bandlimited {
                band,
                out_of_band: DEFAULT_OUT_OF_BAND,
            },
            floor: DEFAULT_PINV_FLOOR,
        }
    }

    /// `r†` applied to an ascending spectrum.
    fn inverse_response(&self, eigenvalues: &[f64]) -> Result<Vec<f64>> {
        let pinv = |r: f64| if r > self.floor { 1.0 / r } else { 0.0 };
        match self.family {
            GraphKernelFamily::Diffusion { sigma2 } => {
                if !(sigma2 >= 0.0) {
                    return Err(invalid("sigma2", "must be non-negative"));
                }
                Ok(eigenvalues.iter().map(|&l| pinv((sigma2 * l / 2.0).exp())).collect())
            }
            GraphKernelFamily::Bandlimited { band, out_of_band } => {
                if !(out_of_band > 0.0) {
                    return Err(invalid("out_of_band", "must be positive"));
                }
                Ok((0..eigenvalues.len())
                    .map(|i| pinv(if i < band { 1.0 } else { 1.0 / out_of_band }))
                    .collect())
            }
        }
    }
}

/// Eigendecomposition of a normalized Laplacian with ascending eigenvalues,
/// shared by every graph kernel built on the same graph.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl LaplacianSpectrum {
    pub fn new(g: &Graph) -> Result<Self> {
        let eig = SymmetricEigen::new(g.normalized_laplacian()?);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mut u = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            u.set_column(col, &eig.eigenvectors.column(i));
        }
        Ok(LaplacianSpectrum {
            eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
            eigenvectors: u,
        })
    }

    /// `K̄ = U r†(Λ) Uᵀ`.
    pub fn kernel(&self, spec: &GraphKernelSpec) -> Result<DMatrix<f64>> {
        let response = spec.inverse_response(&self.eigenvalues)?;
        let mut scaled = self.eigenvectors.clone();
        for (mut col, r) in scaled.column_iter_mut().zip(response) {
            col *= r;
        }
        let k = &scaled * self.eigenvectors.transpose();
        // Symmetrize away rounding.
        Ok((&k + k.transpose()) * 0.5)
    }

    /// The `rows × cols` block of `K̄`, without forming the full matrix.
    pub fn kernel_block(&self, spec: &GraphKernelSpec, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
        let n = self.eigenvalues.len();
        if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let response = spec.inverse_response(&self.eigenvalues)?;
        let mut left = self.eigenvectors.select_rows(rows);
        for (mut col, r) in left.column_iter_mut().zip(response) {
            col *= r;
        }
        Ok(left * self.eigenvectors.select_rows(cols).transpose())
    }
}

/// `K̄ = U r†(Λ) Uᵀ` for the normalized Laplacian `L = U Λ Uᵀ`.
pub fn graph_kernel_matrix(g: &Graph, spec: &GraphKernelSpec) -> Result<DMatrix<f64>> {
    LaplacianSpectrum::new(g)?.kernel(spec)
}
