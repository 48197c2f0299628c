//! Random Fourier feature encoding of connectivity patterns.
//!
//! An [`RfMap`] freezes `D` spectral samples `v_1..v_D` of a shift-invariant
//! kernel. A pattern `a` is encoded as
//!
//! ```text
//! z(a) = D^{-1/2} [sin(v_1ᵀa), ..., sin(v_Dᵀa), cos(v_1ᵀa), ..., cos(v_Dᵀa)]
//! ```
//!
//! so that `z(a)ᵀz(b)` is an unbiased estimate of `κ(a, b)`. The encoding is
//! many-to-one (any null-space direction of `V` is invisible to it), which
//! is what lets a node share `z(a)` without revealing `a`. Learners only
//! ever consume [`RfVector`]s.

use std::io::{Read, Write};

use crate::error::{check_len, invalid, Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::seed;

/// Version of the `[sin..., cos...]` layout recorded in serialized maps.
pub const LAYOUT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GRKRFMAP";

/// An encoded node: the only node representation learners accept.
#[derive(Debug, Clone, PartialEq)]
pub struct RfVector(Vec<f64>);

impl RfVector {
    /// Wrap features that were encoded elsewhere, e.g. by the node itself.
    pub fn from_encoded(values: Vec<f64>) -> Self {
        RfVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfMap {
    kernel: KernelSpec,
    d: usize,
    n: usize,
    seed: u64,
    /// `d × n`, row-major.
    v: Vec<f64>,
}

impl RfMap {
    /// Draw a fresh map for patterns of length `n`.
    pub fn new(kernel: KernelSpec, d: usize, n: usize, seed: u64) -> Result<Self> {
        let v = kernel.spectral_sample(d, n, seed)?;
        Ok(RfMap { kernel, d, n, seed, v })
    }

    /// The map for entry `index` of a kernel dictionary drawn from
    /// `base_seed`.
    pub fn for_dictionary_entry(
        kernel: KernelSpec,
        d: usize,
        n: usize,
        base_seed: u64,
        index: usize,
    ) -> Result<Self> {
        Self::new(kernel, d, n, seed::derive_seed(base_seed, index as u64))
    }

    /// Build a map from an explicit spectral matrix (`d × n`, row-major).
    pub fn from_matrix(kernel: KernelSpec, d: usize, n: usize, v: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(invalid("d", "feature count and dimension must be positive"));
        }
        check_len(d * n, v.len())?;
        Ok(RfMap {
            kernel,
            d,
            n,
            seed: 0,
            v,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    /// Length of an encoding, `2D`.
    pub fn output_dim(&self) -> usize {
        2 * self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spectral_row(&self, i: usize) -> &[f64] {
        &self.v[i * self.n..(i + 1) * self.n]
    }

    pub fn encode(&self, a: &[f64]) -> Result<RfVector> {
        check_len(self.n, a.len())?;
        let scale = 1.0 / (self.d as f64).sqrt();
        let mut z = vec![0.0; 2 * self.d];
        for i in 0..self.d {
            let (s, c) = dot(self.spectral_row(i), a).sin_cos();
            z[i] = scale * s;
            z[self.d + i] = scale * c;
        }
        Ok(RfVector(z))
    }

    /// `z(a)ᵀ z(b)`.
    pub fn approx_kernel(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let za = self.encode(a)?;
        let zb = self.encode(b)?;
        Ok(za.dot(zb.as_slice()))
    }

    /// A pattern `a' != a` with `V a' = V a`, hence the same encoding.
    ///
    /// The offset is the component of a deterministic pseudo-random
    /// direction orthogonal to the row space of `V`, scaled to unit norm.
    pub fn null_space_collision(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, a.len())?;
        let basis = self.row_space_basis();
        if basis.len() >= self.n {
            return Err(Error::NoCollision);
        }
        let mut rng = seed::rng(seed::derive_seed(self.seed, 0x0C01_11DE));
        let normal = rand_distr::StandardNormal;
        for _ in 0..16 {
            let mut w: Vec<f64> = (0..self.n)
                .map(|_| rand_distr::Distribution::<f64>::sample(&normal, &mut rng))
                .collect();
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > 1e-8 {
                return Ok(a.iter().zip(&w).map(|(x, wi)| x + wi / norm).collect());
            }
        }
        Err(Error::NoCollision)
    }

    /// Orthonormal basis of span{v_i} by modified Gram–Schmidt.
    fn row_space_basis(&self) -> Vec<Vec<f64>> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 0..self.d {
            let mut r = self.spectral_row(i).to_vec();
            let scale = dot(&r, &r).sqrt();
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &r);
                    r.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
                }
            }
            let norm = dot(&r, &r).sqrt();
            if norm > 1e-10 * scale.max(f64::MIN_POSITIVE) && norm > 0.0 {
                r.iter_mut().for_each(|x| *x /= norm);
                basis.push(r);
            }
            if basis.len() == self.n {
                break;
            }
        }
        basis
    }

    /// Little-endian binary record:
    ///
    /// ```text
    /// magic "GRKRFMAP" | u32 layout | u64 d | u64 n | u8 family |
    /// f64 bandwidth | u64 seed | d·n f64 values, row-major
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&LAYOUT_VERSION.to_le_bytes())?;
        w.write_all(&(self.d as u64).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&[self.kernel.family.code()])?;
        w.write_all(&self.kernel.bandwidth.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in &self.v {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        fn take<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
            let mut buf = [0u8; K];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated map: {e}")))?;
            Ok(buf)
        }
        if &take::<8, _>(&mut r)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let layout = u32::from_le_bytes(take(&mut r)?);
        if layout != LAYOUT_VERSION {
            return Err(Error::Format(format!("unsupported layout version {layout}")));
        }
        let d = u64::from_le_bytes(take(&mut r)?) as usize;
        let n = u64::from_le_bytes(take(&mut r)?) as usize;
        let [code] = take::<1, _>(&mut r)?;
        let family = KernelFamily::from_code(code)
            .ok_or_else(|| Error::Format(format!("unknown kernel family code {code}")))?;
        let bandwidth = f64::from_le_bytes(take(&mut r)?);
        let seed = u64::from_le_bytes(take(&mut r)?);
        let count = d
            .checked_mul(n)
            .filter(|&c| c > 0 && c <= (1 << 32))
            .ok_or_else(|| Error::Format(format!("implausible shape {d}×{n}")))?;
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            v.push(f64::from_le_bytes(take(&mut r)?));
        }
        let kernel = KernelSpec::new(family, bandwidth)?;
        Ok(RfMap { kernel, d, n, seed, v })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(45 + 8 * self.v.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

pub fn encode(map: &RfMap, a: &[f64]) -> Result<RfVector> {
    map.encode(a)
}

pub fn approx_kernel(map: &RfMap, a: &[f64], b: &[f64]) -> Result<f64> {
    map.approx_kernel(a, b)
}

pub fn null_space_collision(map: &RfMap, a: &[f64]) -> Result<Vec<f64>> {
    map.null_space_collision(a)
}
