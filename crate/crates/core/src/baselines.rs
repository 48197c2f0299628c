//! Comparison methods: batch kernel ridge regression (graph kernels or
//! connectivity kernels), graph k-nearest-neighbour averaging, and the
//! batch random-feature least-squares solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, invalid, Error, Result};
use crate::features::RfMap;
use crate::graph::{Graph, SamplingPlan};
use crate::kernel::{kernel_matrix, KernelSpec};

/// Solve `(A + ridge·I) x = b` for symmetric PSD `A`: Cholesky, then LU,
/// then (only when `ridge == 0`) the minimum-norm SVD solution.
pub fn solve_regularized(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    check_len(n, b.len())?;
    let sys = a + DMatrix::identity(n, n) * ridge;
    if let Some(ch) = sys.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    if ridge == 0.0 {
        let svd = sys.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        return svd.solve(b, eps).map_err(|e| Error::Singular(e.to_string()));
    }
    sys.lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(format!("ridge {ridge} does not regularize the system")))
}

/// `α = (K + μ M I)⁻¹ y`.
pub fn batch_kernel_ridge(k: &DMatrix<f64>, y: &[f64], mu: f64) -> Result<Vec<f64>> {
    let m = y.len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if k.nrows() != m || k.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: k.nrows(),
        });
    }
    if !(mu >= 0.0) {
        return Err(invalid("mu", "must be non-negative"));
    }
    let rhs = DVector::from_column_slice(y);
    let ridge = mu * m as f64;
    let sys = k + DMatrix::identity(m, m) * ridge;
    let solve = |s: &DMatrix<f64>| -> Option<DVector<f64>> {
        let x = match s.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => s.clone().lu().solve(&rhs)?,
        };
        x.iter().all(|v| v.is_finite()).then_some(x)
    };
    let alpha = solve(&sys).ok_or_else(|| Error::Singular(format!("K + {ridge}·I")))?;
    let resid = (&sys * &alpha - &rhs).norm();
    if resid > 1e-8 * rhs.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Singular(format!("residual {resid:e} after solving K + {ridge}·I")));
    }
    Ok(alpha.iter().copied().collect())
}

/// `f̂(v) = Σ α_m κ(v, v_m)`.
pub fn batch_predict(alpha: &[f64], cross_kernel_row: &[f64]) -> Result<f64> {
    check_len(alpha.len(), cross_kernel_row.len())?;
    Ok(alpha.iter().zip(cross_kernel_row).map(|(a, k)| a * k).sum())
}

/// Where the kernel values of a batch model come from.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSource {
    /// Rows of a graph kernel `K̄` over the full node set.
    GraphKernel,
    /// A shift-invariant kernel on connectivity patterns; keeps the
    /// training patterns to build cross-kernel rows.
    Connectivity {
        spec: KernelSpec,
        patterns: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchKernelModel {
    pub alpha: Vec<f64>,
    pub sampled: Vec<usize>,
    pub source: KernelSource,
}

impl BatchKernelModel {
    /// Kernel ridge on `K̄` restricted to the sampled nodes.
    pub fn fit_graph_kernel(kbar: &DMatrix<f64>, plan: &SamplingPlan, y: &[f64], mu: f64) -> Result<Self> {
        check_len(plan.sampled.len(), y.len())?;
        let k = kbar.select_rows(&plan.sampled).select_columns(&plan.sampled);
        Ok(BatchKernelModel {
            alpha: batch_kernel_ridge(&k, y, mu)?,
            sampled: plan.sampled.clone(),
            source: KernelSource::GraphKernel,
        })
    }

    /// Kernel ridge with `κ` evaluated on the given training patterns.
    pub fn fit_connectivity(spec: KernelSpec, patterns: Vec<Vec<f64>>, sampled: Vec<usize>, y: &[f64], mu: f64) -> Result<Self> {
        check_len(patterns.len(), y.len())?;
        let k = kernel_matrix(&spec, &patterns)?;
        Ok(BatchKernelModel {
            alpha: batch_kernel_ridge(&k, y, mu)?,
            sampled,
            source: KernelSource::Connectivity { spec, patterns },
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        batch_predict(&self.alpha, row)
    }

    /// Prediction for `node` read from the `node` row of `K̄`.
    pub fn predict_graph_node(&self, kbar: &DMatrix<f64>, node: usize) -> Result<f64> {
        if node >= kbar.nrows() {
            return Err(Error::IndexOutOfRange {
                index: node,
                len: kbar.nrows(),
            });
        }
        let row: Vec<f64> = self.sampled.iter().map(|&s| kbar[(node, s)]).collect();
        self.predict_row(&row)
    }

    /// Prediction for a connectivity pattern (connectivity source only).
    pub fn predict_pattern(&self, pattern: &[f64]) -> Result<f64> {
        match &self.source {
            KernelSource::Connectivity { spec, patterns } => {
                let row = patterns
                    .iter()
                    .map(|p| spec.eval(pattern, p))
                    .collect::<Result<Vec<_>>>()?;
                self.predict_row(&row)
            }
            KernelSource::GraphKernel => Err(invalid("source", "graph-kernel models predict from K̄ rows")),
        }
    }
}

/// kNN weights from a pattern of link weights: keep the `k` strongest
/// links (ties broken by index), drop unlabeled nodes, and renormalize.
/// Returns `(node, weight)` pairs summing to 1.
pub fn knn_weights(pattern: &[f64], labeled: &[Option<f64>], k: usize) -> Option<Vec<(usize, f64)>> {
    let mut links: Vec<(usize, f64)> = pattern
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (i, w))
        .collect();
    links.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    links.truncate(k);
    let kept: Vec<(usize, f64)> = links
        .into_iter()
        .filter(|(i, _)| labeled.get(*i).is_some_and(Option::is_some))
        .collect();
    let total: f64 = kept.iter().map(|(_, w)| w).sum();
    (total > 0.0).then(|| kept.into_iter().map(|(i, w)| (i, w / total)).collect())
}

/// Weighted average of labeled neighbours given a pattern of link weights
/// to nodes `0..pattern.len()`. `node` only labels the error.
pub fn knn_from_pattern(pattern: &[f64], labeled: &[Option<f64>], k: usize, node: usize) -> Result<f64> {
    check_len(pattern.len(), labeled.len())?;
    let w = knn_weights(pattern, labeled, k).ok_or(Error::KnnInapplicable(node))?;
    Ok(w.iter().map(|&(i, wi)| wi * labeled[i].expect("filtered to labeled")).sum())
}

/// kNN prediction for a node of `g` from its in-link column.
pub fn knn_predict(g: &Graph, labeled: &[Option<f64>], node: usize, k: usize) -> Result<f64> {
    check_len(g.n_nodes(), labeled.len())?;
    if node >= g.n_nodes() {
        return Err(Error::IndexOutOfRange {
            index: node,
            len: g.n_nodes(),
        });
    }
    let col: Vec<f64> = g.adjacency().column(node).iter().copied().collect();
    knn_from_pattern(&col, labeled, k, node)
}

/// Stack the encodings of `patterns` into an `M × 2D` matrix.
pub fn rf_design_matrix(map: &RfMap, patterns: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::zeros(patterns.len(), map.output_dim());
    for (i, a) in patterns.iter().enumerate() {
        let e = map.encode(a)?;
        for (j, v) in e.as_slice().iter().enumerate() {
            z[(i, j)] = *v;
        }
    }
    Ok(z)
}

/// `θ = (ZᵀZ + μ M I)⁻¹ Zᵀ y`, solved in whichever of the sample or
/// feature dimension is smaller; with `μ = 0` the minimum-norm solution.
pub fn batch_rf_ls(z: &DMatrix<f64>, y: &[f64], mu: f64) -> Result<Vec<f64>> {
    check_len(z.nrows(), y.len())?;
    if z.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if !(mu >= 0.0) {
        return Err(invalid("mu", "must be non-negative"));
    }
    if z.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("batch_rf_ls input"));
    }
    let yv = DVector::from_column_slice(y);
    let theta = if mu == 0.0 {
        let svd = z.clone().svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        svd.solve(&yv, eps).map_err(|e| Error::Singular(e.to_string()))?
    } else if z.nrows() < z.ncols() {
        // Fewer samples than features: θ = Zᵀ (Z Zᵀ + μ M I)⁻¹ y.
        z.transpose() * solve_regularized(&(z * z.transpose()), &yv, mu * z.nrows() as f64)?
    } else {
        solve_regularized(&(z.transpose() * z), &(z.transpose() * &yv), mu * z.nrows() as f64)?
    };
    Ok(theta.iter().copied().collect())
}
