//! Static-regret diagnostics against the best fixed random-feature
//! predictor in hindsight.

use nalgebra::{DMatrix, DVector};

use crate::baselines::solve_regularized;
use crate::error::{check_len, Error, Result};
use crate::features::RfVector;

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    /// `Σ_{τ<=t} L_τ(f̂_τ)` for every prefix `t`.
    pub cumulative_online_loss: Vec<f64>,
    /// Loss of the best fixed predictor on each prefix.
    pub best_fixed_loss: Vec<f64>,
    pub regret: Vec<f64>,
    /// Slope of `ln Reg(t)` against `ln t`; `None` when the series has too
    /// few positive points to fit.
    pub fitted_growth_exponent: Option<f64>,
}

/// Best fixed least-squares predictor per kernel, for every prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixOracle {
    /// `min_p min_θ Σ_{τ<=t} [(θᵀz_{p,τ} - y_τ)² + μ‖θ‖²]` for each `t`.
    pub best_loss: Vec<f64>,
    /// Full-horizon loss of each kernel's best predictor.
    pub final_loss: Vec<f64>,
    /// Each kernel's best parameter vector at the full horizon.
    pub theta_star: Vec<Vec<f64>>,
}

impl PrefixOracle {
    /// Kernel with the smallest full-horizon loss.
    pub fn best_kernel(&self) -> usize {
        self.final_loss
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(p, _)| p)
    }
}

/// Accumulate `ZᵀZ` and `Zᵀy` along the stream and solve the regularized
/// normal equations at every prefix; `encoded[p][t]` is sample `t` under
/// kernel `p`. At prefix `t` the ridge is `t·μ`, matching the batch solve.
pub fn prefix_oracle(encoded: &[Vec<RfVector>], labels: &[f64], mu: f64) -> Result<PrefixOracle> {
    if encoded.is_empty() || labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let t_max = labels.len();
    let mut best = vec![f64::INFINITY; t_max];
    let mut final_loss = Vec::with_capacity(encoded.len());
    let mut theta_star = Vec::with_capacity(encoded.len());
    for zs in encoded {
        check_len(t_max, zs.len())?;
        let dim = zs[0].len();
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        let mut yy = 0.0;
        let mut theta = DVector::zeros(dim);
        let mut value = 0.0;
        for (t, (z, &y)) in zs.iter().zip(labels).enumerate() {
            check_len(dim, z.len())?;
            let zv = DVector::from_column_slice(z.as_slice());
            gram.ger(1.0, &zv, &zv, 1.0);
            b.axpy(y, &zv, 1.0);
            yy += y * y;
            theta = solve_regularized(&gram, &b, mu * (t + 1) as f64)?;
            // At the optimum the objective equals yᵀy - θᵀZᵀy.
            value = (yy - theta.dot(&b)).max(0.0);
            best[t] = best[t].min(value);
        }
        final_loss.push(value);
        theta_star.push(theta.iter().copied().collect());
    }
    Ok(PrefixOracle {
        best_loss: best,
        final_loss,
        theta_star,
    })
}

/// Least-squares slope of `ln Reg(t)` on `ln t` over `t >= t_min`, using
/// log-spaced prefixes so late times do not dominate the fit.
pub fn growth_exponent(regret: &[f64], t_min: usize) -> Option<f64> {
    let t_max = regret.len();
    let t_min = t_min.max(1);
    if t_max < t_min + 1 {
        return None;
    }
    let points = 40;
    let (lo, hi) = ((t_min as f64).ln(), (t_max as f64).ln());
    let mut ts: Vec<usize> = (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .map(|t| t.clamp(t_min, t_max))
        .collect();
    ts.dedup();
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .filter(|&&t| regret[t - 1] > 0.0)
        .map(|&t| ((t as f64).ln(), regret[t - 1].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Regret series of `online_losses` against the per-prefix oracle; the
/// exponent is fitted on `t >= t_min`.
pub fn static_regret(online_losses: &[f64], oracle_prefix_loss: &[f64], t_min: usize) -> Result<RegretReport> {
    check_len(online_losses.len(), oracle_prefix_loss.len())?;
    let cumulative: Vec<f64> = online_losses
        .iter()
        .scan(0.0, |acc, l| {
            *acc += l;
            Some(*acc)
        })
        .collect();
    let regret: Vec<f64> = cumulative.iter().zip(oracle_prefix_loss).map(|(c, o)| c - o).collect();
    let fitted_growth_exponent = growth_exponent(&regret, t_min);
    Ok(RegretReport {
        cumulative_online_loss: cumulative,
        best_fixed_loss: oracle_prefix_loss.to_vec(),
        regret,
        fitted_growth_exponent,
    })
}

/// Right-hand side of the multi-kernel regret bound for one kernel:
/// `ln P / η + ‖θ*‖² / (2η) + η L² T / 2 + η T`.
pub fn regret_bound(n_kernels: usize, eta: f64, theta_star_norm2: f64, lipschitz: f64, horizon: usize) -> f64 {
    let t = horizon as f64;
    (n_kernels as f64).ln() / eta + theta_star_norm2 / (2.0 * eta) + eta * lipschitz * lipschitz * t / 2.0 + eta * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::batch_rf_ls;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn zero_regret_has_no_exponent() {
        let losses = vec![0.5; 100];
        let oracle: Vec<f64> = (1..=100).map(|t| 0.5 * t as f64).collect();
        let r = static_regret(&losses, &oracle, 1).unwrap();
        assert!(r.regret.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(r.fitted_growth_exponent, None);
        assert!(static_regret(&losses, &oracle[..10], 1).is_err());
    }

    #[test]
    fn exponent_of_power_laws() {
        for alpha in [0.3, 0.5, 1.0] {
            let reg: Vec<f64> = (1..=2000).map(|t| 3.0 * (t as f64).powf(alpha)).collect();
            let e = growth_exponent(&reg, 10).unwrap();
            assert!((e - alpha).abs() < 1e-3, "{alpha}: {e}");
        }
    }

    fn random_encoded(t: usize, dim: usize, seed: u64) -> (Vec<RfVector>, Vec<f64>) {
        let mut rng = seed::rng(seed);
        let zs = (0..t)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= n);
                RfVector::from_encoded(v)
            })
            .collect();
        let ys = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        (zs, ys)
    }

    #[test]
    fn oracle_matches_batch_solve_on_every_prefix() {
        let (zs, ys) = random_encoded(40, 6, 3);
        let mu = 1e-2;
        let oracle = prefix_oracle(std::slice::from_ref(&zs), &ys, mu).unwrap();
        for t in [1, 5, 17, 40] {
            let z = DMatrix::from_fn(t, 6, |i, j| zs[i].as_slice()[j]);
            let theta = DVector::from_vec(batch_rf_ls(&z, &ys[..t], mu).unwrap());
            let direct = (&z * &theta - DVector::from_column_slice(&ys[..t])).norm_squared() + t as f64 * mu * theta.norm_squared();
            assert!((oracle.best_loss[t - 1] - direct).abs() < 1e-10, "t={t}");
        }
        assert_eq!(oracle.theta_star[0].len(), 6);
    }

    #[test]
    fn oracle_takes_the_better_kernel() {
        let (z1, ys) = random_encoded(30, 4, 1);
        let (z2, _) = random_encoded(30, 4, 2);
        let both = prefix_oracle(&[z1.clone(), z2.clone()], &ys, 1e-3).unwrap();
        let a = prefix_oracle(&[z1], &ys, 1e-3).unwrap();
        let b = prefix_oracle(&[z2], &ys, 1e-3).unwrap();
        for t in 0..30 {
            assert_eq!(both.best_loss[t], a.best_loss[t].min(b.best_loss[t]));
        }
        let best = both.best_kernel();
        assert_eq!(both.final_loss[best], both.best_loss[29]);
    }

    #[test]
    fn bound_terms() {
        let b = regret_bound(2, 0.5, 4.0, 2.0, 100);
        let expected = 2f64.ln() / 0.5 + 4.0 + 0.5 * 4.0 * 100.0 / 2.0 + 50.0;
        assert!((b - expected).abs() < 1e-12);
    }
}
