//! The multi-kernel learner: one random-feature learner per dictionary
//! kernel, combined by multiplicative (hedge) weights, plus the
//! learner-level ensemble over several feature providers.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{check_len, invalid, Error, Result};
use crate::features::{RfMap, RfVector};
use crate::graph::Graph;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::learner::{clipped, Loss, SingleKernelState};

/// A node as seen by the learner: its encoding under every dictionary map.
/// Raw connectivity never reaches the training interface.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedNode(Vec<RfVector>);

impl EncodedNode {
    pub fn from_encodings(z: Vec<RfVector>) -> Self {
        EncodedNode(z)
    }

    pub fn encodings(&self) -> &[RfVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// What happened at one online step, all measured before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub prediction: f64,
    pub combined_loss: f64,
    pub kernel_losses: Vec<f64>,
    pub weights: Vec<f64>,
    /// Gradient norm of every learner's step.
    pub grad_norms: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized weights from log-domain weights.
pub fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|l| (l - lse).exp()).collect()
}

/// `w_p ← w_p · exp(-η ℓ_p)` in the log domain, renormalized so that
/// `Σ w_p = 1`.
pub fn hedge_update(log_w: &mut [f64], losses: &[f64], eta: f64) {
    for (l, loss) in log_w.iter_mut().zip(losses) {
        *l -= eta * loss;
    }
    let lse = log_sum_exp(log_w);
    log_w.iter_mut().for_each(|l| *l -= lse);
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(invalid("eta", format!("must lie in (0, 1], got {eta}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklModel {
    maps: Vec<RfMap>,
    learners: Vec<SingleKernelState>,
    /// Un-normalized weights, stored as logarithms.
    log_weights: Vec<f64>,
    eta: f64,
    base_seed: u64,
}

impl MklModel {
    /// `P` zero-initialized learners with independent maps drawn from
    /// `(seed, p)` and uniform weights `1/P`. `eta` drives both the
    /// gradient steps and the weight update.
    pub fn new(kernels: &[KernelSpec], d: usize, n: usize, eta: f64, loss: Loss, seed: u64) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_eta(eta)?;
        let maps = kernels
            .iter()
            .enumerate()
            .map(|(p, k)| RfMap::for_dictionary_entry(*k, d, n, seed, p))
            .collect::<Result<Vec<_>>>()?;
        let learners = maps
            .iter()
            .map(|m| SingleKernelState::new(m, eta, loss))
            .collect::<Result<Vec<_>>>()?;
        let p = kernels.len() as f64;
        Ok(MklModel {
            maps,
            learners,
            log_weights: vec![-p.ln(); kernels.len()],
            eta,
            base_seed: seed,
        })
    }

    pub fn n_kernels(&self) -> usize {
        self.maps.len()
    }

    pub fn input_dim(&self) -> usize {
        self.maps[0].input_dim()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn maps(&self) -> &[RfMap] {
        &self.maps
    }

    pub fn learners(&self) -> &[SingleKernelState] {
        &self.learners
    }

    pub fn learners_mut(&mut self) -> &mut [SingleKernelState] {
        &mut self.learners
    }

    /// Use a different gradient step for every learner, keeping `eta` for
    /// the weight update.
    pub fn set_learner_eta(&mut self, eta: f64) {
        self.learners.iter_mut().for_each(|l| l.eta = eta);
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Normalized weights `w̄_p`.
    pub fn weights(&self) -> Vec<f64> {
        normalize_log_weights(&self.log_weights)
    }

    /// Overwrite the un-normalized weights (must be positive).
    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        check_len(self.n_kernels(), w.len())?;
        if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(invalid("weights", "must be positive and finite"));
        }
        self.log_weights = w.iter().map(|x| x.ln()).collect();
        Ok(())
    }

    /// Multiply every un-normalized weight by `c > 0`.
    pub fn scale_weights(&mut self, c: f64) {
        let lc = c.ln();
        self.log_weights.iter_mut().for_each(|l| *l += lc);
    }

    /// Encode a pattern under every dictionary map.
    pub fn encode(&self, pattern: &[f64]) -> Result<EncodedNode> {
        Ok(EncodedNode(
            self.maps.iter().map(|m| m.encode(pattern)).collect::<Result<_>>()?,
        ))
    }

    fn check_node(&self, z: &EncodedNode) -> Result<()> {
        check_len(self.n_kernels(), z.len())
    }

    /// Per-kernel predictions `θ_pᵀ z_p`.
    pub fn kernel_predictions(&self, z: &EncodedNode) -> Result<Vec<f64>> {
        self.check_node(z)?;
        self.learners
            .iter()
            .zip(&z.0)
            .map(|(l, zp)| l.predict_encoded(zp))
            .collect()
    }

    /// `Σ w̄_p θ_pᵀ z_p`.
    pub fn predict_encoded(&self, z: &EncodedNode) -> Result<f64> {
        let preds = self.kernel_predictions(z)?;
        Ok(self.weights().iter().zip(&preds).map(|(w, p)| w * p).sum())
    }

    /// Prediction for an unsampled or newly-joining node.
    pub fn predict(&self, pattern: &[f64]) -> Result<f64> {
        self.predict_encoded(&self.encode(pattern)?)
    }

    /// Loss incurred by the combined prediction: the data term at the
    /// combined prediction plus the weight-averaged penalties.
    fn combined_loss(&self, prediction: f64, label: f64, weights: &[f64]) -> Result<f64> {
        let loss = self.learners[0].loss;
        let penalty: f64 = weights
            .iter()
            .zip(&self.learners)
            .map(|(w, l)| w * l.theta_norm2())
            .sum();
        Ok(loss.data_term(prediction, label)? + loss.mu * penalty)
    }

    /// One online step: record the incurred losses, take a gradient step
    /// in every learner, then scale every weight by
    /// `exp(-η · clip(ℓ_p, 0, 1))`.
    pub fn update(&mut self, z: &EncodedNode, label: f64) -> Result<StepRecord> {
        let preds = self.kernel_predictions(z)?;
        let weights = self.weights();
        let prediction: f64 = weights.iter().zip(&preds).map(|(w, p)| w * p).sum();
        let combined_loss = self.combined_loss(prediction, label, &weights)?;
        let kernel_losses = self
            .learners
            .iter()
            .zip(&preds)
            .map(|(l, &p)| l.loss.value(p, label, l.theta_norm2()))
            .collect::<Result<Vec<_>>>()?;
        if !combined_loss.is_finite() || kernel_losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("loss"));
        }
        let grad_norms = self
            .learners
            .iter_mut()
            .zip(&z.0)
            .map(|(l, zp)| l.ogd_step_with_norm(zp, label))
            .collect::<Result<Vec<_>>>()?;
        let clipped_losses: Vec<f64> = kernel_losses.iter().map(|&l| clipped(l)).collect();
        hedge_update(&mut self.log_weights, &clipped_losses, self.eta);
        Ok(StepRecord {
            prediction,
            combined_loss,
            kernel_losses,
            weights,
            grad_norms,
        })
    }

    /// Sequential pass over an encoded stream.
    pub fn train(&mut self, samples: &[(EncodedNode, f64)]) -> Result<Vec<StepRecord>> {
        samples.iter().map(|(z, y)| self.update(z, *y)).collect()
    }

    /// Sequential pass over labeled nodes, pulling each node's features
    /// from `provider` and encoding them before training.
    pub fn train_nodes(&mut self, provider: &dyn FeatureProvider, samples: &[(usize, f64)]) -> Result<Vec<StepRecord>> {
        check_len(self.input_dim(), provider.dim())?;
        samples
            .iter()
            .map(|&(node, y)| {
                let z = self.encode(&provider.features(node)?)?;
                self.update(&z, y)
            })
            .collect()
    }

    /// Predict a newly-joining node and, when its label arrives, learn
    /// from it.
    pub fn absorb_new_node(&mut self, pattern: &[f64], label: Option<f64>) -> Result<f64> {
        let z = self.encode(pattern)?;
        let p = self.predict_encoded(&z)?;
        if let Some(y) = label {
            self.update(&z, y)?;
        }
        Ok(p)
    }

    /// Text bundle: header, dictionary, weights and every learner
    /// checkpoint. Maps are rebuilt from the dictionary and seed on load.
    pub fn to_checkpoint(&self, config_hash: u64) -> String {
        let mut s = String::from("gradraker-mkl v1\n");
        let _ = writeln!(s, "config_hash {config_hash}");
        let _ = writeln!(s, "base_seed {}", self.base_seed);
        let _ = writeln!(s, "eta {:?}", self.eta);
        let _ = writeln!(s, "d {}", self.maps[0].n_features());
        let _ = writeln!(s, "n {}", self.input_dim());
        let _ = writeln!(s, "kernels {}", self.n_kernels());
        for m in &self.maps {
            let _ = writeln!(s, "{} {:?}", m.kernel().family.name(), m.kernel().bandwidth);
        }
        for lw in &self.log_weights {
            let _ = writeln!(s, "{lw:?}");
        }
        for l in &self.learners {
            s += &l.to_checkpoint();
            s += "end\n";
        }
        s
    }

    /// Parse a bundle; returns the model and the recorded config hash.
    pub fn from_checkpoint(text: &str) -> Result<(Self, u64)> {
        let fmt_err = |m: String| Error::Format(m);
        let mut lines = text.lines();
        if lines.next() != Some("gradraker-mkl v1") {
            return Err(fmt_err("missing bundle header".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("expected `{key}`")))
        };
        let num = |s: String| s.parse::<u64>().map_err(|_| Error::Format(format!("bad integer `{s}`")));
        let config_hash = num(field("config_hash")?)?;
        let base_seed = num(field("base_seed")?)?;
        let eta: f64 = field("eta")?
            .parse()
            .map_err(|_| fmt_err("bad eta".into()))?;
        let d = num(field("d")?)? as usize;
        let n = num(field("n")?)? as usize;
        let p = num(field("kernels")?)? as usize;
        let mut lines = text.lines().skip(7);
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad float `{s}`")));
        let mut kernels = Vec::with_capacity(p);
        for _ in 0..p {
            let line = lines.next().ok_or_else(|| fmt_err("truncated dictionary".into()))?;
            let (fam, bw) = line
                .split_once(' ')
                .ok_or_else(|| fmt_err(format!("bad kernel line `{line}`")))?;
            kernels.push(KernelSpec::new(fam.parse::<KernelFamily>()?, parse_f(bw)?)?);
        }
        let log_weights = (0..p)
            .map(|_| parse_f(lines.next().ok_or_else(|| fmt_err("truncated weights".into()))?))
            .collect::<Result<Vec<_>>>()?;
        let rest: Vec<&str> = lines.collect();
        let blocks: Vec<String> = rest
            .split(|l| *l == "end")
            .filter(|b| !b.is_empty())
            .map(|b| b.join("\n"))
            .collect();
        check_len(p, blocks.len())?;
        let learners = blocks
            .iter()
            .map(|b| SingleKernelState::from_checkpoint(b))
            .collect::<Result<Vec<_>>>()?;
        let mut model = MklModel::new(&kernels, d, n, eta, learners[0].loss, base_seed)?;
        for (l, m) in learners.iter().zip(&model.maps) {
            check_len(m.output_dim(), l.theta.len())?;
            if l.map_id != m.seed() {
                return Err(fmt_err("learner does not match its map".into()));
            }
        }
        model.learners = learners;
        model.log_weights = log_weights;
        Ok((model, config_hash))
    }
}

/// Tab-separated trace: `t`, combined loss, `P` per-kernel losses, `P`
/// normalized weights.
pub fn write_trace_tsv<W: Write>(records: &[StepRecord], mut w: W) -> Result<()> {
    let p = records.first().map_or(0, |r| r.weights.len());
    let mut header = String::from("t\tcombined_loss");
    (0..p).for_each(|i| header += &format!("\tloss_{i}"));
    (0..p).for_each(|i| header += &format!("\tweight_{i}"));
    writeln!(w, "{header}")?;
    for (t, r) in records.iter().enumerate() {
        let mut row = format!("{}\t{:?}", t + 1, r.combined_loss);
        for v in r.kernel_losses.iter().chain(&r.weights) {
            row += &format!("\t{v:?}");
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// A source of per-node feature vectors of fixed length.
pub trait FeatureProvider {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn features(&self, node: usize) -> Result<Vec<f64>>;
}

/// Features read off the columns of an `N × N` matrix: the adjacency
/// (connectivity), a power of it (multi-hop), or one layer of a multilayer
/// graph. Optionally restricted to a subset of rows.
#[derive(Debug, Clone)]
pub struct MatrixProvider {
    name: String,
    matrix: DMatrix<f64>,
    keep: Option<Vec<usize>>,
}

impl MatrixProvider {
    pub fn new(name: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        MatrixProvider {
            name: name.into(),
            matrix,
            keep: None,
        }
    }

    pub fn connectivity(g: &Graph) -> Self {
        Self::new("connectivity", g.adjacency().clone())
    }

    /// Columns of `A^hops`.
    pub fn hops(g: &Graph, hops: usize) -> Result<Self> {
        Ok(Self::new(format!("hop{hops}"), g.power_adjacency(hops)?))
    }

    /// Keep only the listed coordinates of every feature vector.
    pub fn restricted(mut self, keep: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&k| k >= self.matrix.nrows()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.matrix.nrows(),
            });
        }
        self.keep = Some(keep);
        Ok(self)
    }
}

impl FeatureProvider for MatrixProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.keep.as_ref().map_or(self.matrix.nrows(), Vec::len)
    }

    fn features(&self, node: usize) -> Result<Vec<f64>> {
        if node >= self.matrix.ncols() {
            return Err(Error::IndexOutOfRange {
                index: node,
                len: self.matrix.ncols(),
            });
        }
        let col = self.matrix.column(node);
        Ok(match &self.keep {
            Some(keep) => keep.iter().map(|&k| col[k]).collect(),
            None => col.iter().copied().collect(),
        })
    }
}

/// External nodal feature vectors, one row per node.
#[derive(Debug, Clone)]
pub struct TableProvider {
    name: String,
    rows: Vec<Vec<f64>>,
}

impl TableProvider {
    pub fn new(name: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyInput)?.len();
        for r in &rows {
            check_len(dim, r.len())?;
        }
        Ok(TableProvider { name: name.into(), rows })
    }
}

impl FeatureProvider for TableProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn features(&self, node: usize) -> Result<Vec<f64>> {
        self.rows.get(node).cloned().ok_or(Error::IndexOutOfRange {
            index: node,
            len: self.rows.len(),
        })
    }
}

/// One level up: each (provider, model) pair is a learner, combined by
/// hedge weights `β` driven by each learner's clipped incurred loss.
pub struct EnsembleModel {
    providers: Vec<Box<dyn FeatureProvider>>,
    models: Vec<MklModel>,
    log_beta: Vec<f64>,
    eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStep {
    pub prediction: f64,
    pub loss: f64,
    pub learner_losses: Vec<f64>,
    pub betas: Vec<f64>,
}

pub fn ensemble_combine(
    providers: Vec<Box<dyn FeatureProvider>>,
    models: Vec<MklModel>,
    eta: f64,
) -> Result<EnsembleModel> {
    if providers.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_len(providers.len(), models.len())?;
    check_eta(eta)?;
    for (p, m) in providers.iter().zip(&models) {
        check_len(m.input_dim(), p.dim())?;
    }
    let k = providers.len() as f64;
    Ok(EnsembleModel {
        log_beta: vec![-k.ln(); providers.len()],
        providers,
        models,
        eta,
    })
}

impl EnsembleModel {
    pub fn betas(&self) -> Vec<f64> {
        normalize_log_weights(&self.log_beta)
    }

    pub fn models(&self) -> &[MklModel] {
        &self.models
    }

    pub fn providers(&self) -> &[Box<dyn FeatureProvider>] {
        &self.providers
    }

    /// Encode `node` with every provider/model pair.
    pub fn encode(&self, node: usize) -> Result<Vec<EncodedNode>> {
        self.providers
            .iter()
            .zip(&self.models)
            .map(|(p, m)| m.encode(&p.features(node)?))
            .collect()
    }

    pub fn predict_encoded(&self, z: &[EncodedNode]) -> Result<f64> {
        check_len(self.models.len(), z.len())?;
        let preds = self
            .models
            .iter()
            .zip(z)
            .map(|(m, zi)| m.predict_encoded(zi))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.betas().iter().zip(&preds).map(|(b, p)| b * p).sum())
    }

    pub fn predict(&self, node: usize) -> Result<f64> {
        self.predict_encoded(&self.encode(node)?)
    }

    pub fn update(&mut self, z: &[EncodedNode], label: f64) -> Result<EnsembleStep> {
        check_len(self.models.len(), z.len())?;
        let betas = self.betas();
        let records = self
            .models
            .iter_mut()
            .zip(z)
            .map(|(m, zi)| m.update(zi, label))
            .collect::<Result<Vec<_>>>()?;
        let prediction: f64 = betas.iter().zip(&records).map(|(b, r)| b * r.prediction).sum();
        let loss = self.models[0].learners[0].loss.data_term(prediction, label)?;
        let learner_losses: Vec<f64> = records.iter().map(|r| r.combined_loss).collect();
        let clipped_losses: Vec<f64> = learner_losses.iter().map(|&l| clipped(l)).collect();
        hedge_update(&mut self.log_beta, &clipped_losses, self.eta);
        Ok(EnsembleStep {
            prediction,
            loss,
            learner_losses,
            betas,
        })
    }

    pub fn train_nodes(&mut self, samples: &[(usize, f64)]) -> Result<Vec<EnsembleStep>> {
        samples
            .iter()
            .map(|&(node, y)| {
                let z = self.encode(node)?;
                self.update(&z, y)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::erdos_renyi;
    use crate::learner::LossKind;
    use crate::seed;
    use rand::Rng;

    fn gaussians(bws: &[f64]) -> Vec<KernelSpec> {
        bws.iter().map(|&b| KernelSpec::gaussian(b).unwrap()).collect()
    }

    fn random_stream(n: usize, t: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = seed::rng(seed);
        (0..t)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
                (a, rng.random_range(-1.0..1.0))
            })
            .collect()
    }

    #[test]
    fn init_weights() {
        let ls = Loss::least_squares(0.0);
        assert!(MklModel::new(&[], 5, 3, 0.5, ls, 0).is_err());
        assert!(MklModel::new(&gaussians(&[1.0]), 5, 3, 1.5, ls, 0).is_err());
        assert!(MklModel::new(&gaussians(&[1.0]), 5, 3, 0.0, ls, 0).is_err());
        let m = MklModel::new(&gaussians(&[1.0, 5.0]), 5, 3, 0.5, ls, 0).unwrap();
        assert_eq!(m.weights(), vec![0.5, 0.5]);
        assert!(m.learners().iter().all(|l| l.theta.iter().all(|&t| t == 0.0)));
        assert_ne!(m.maps()[0].seed(), m.maps()[1].seed());
        assert_eq!(m.predict(&[1.0, 0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn convex_combination_by_hand() {
        let mut m = MklModel::new(&gaussians(&[1.0, 2.0]), 4, 3, 0.5, Loss::least_squares(0.0), 1).unwrap();
        let a = [1.0, 1.0, 0.0];
        let z = m.encode(&a).unwrap();
        // θ_p = c_p z_p gives θ_pᵀ z_p = c_p since ‖z_p‖ = 1.
        for (l, (zp, c)) in m.learners.iter_mut().zip(z.encodings().iter().zip([1.0, 3.0])) {
            l.theta = zp.as_slice().iter().map(|v| c * v).collect();
        }
        m.set_weights(&[0.25, 0.75]).unwrap();
        let preds = m.kernel_predictions(&z).unwrap();
        assert!((preds[0] - 1.0).abs() < 1e-12 && (preds[1] - 3.0).abs() < 1e-12);
        assert!((m.predict(&a).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn hedge_update_by_hand() {
        let mut lw = vec![0.5f64.ln(), 0.5f64.ln()];
        hedge_update(&mut lw, &[1.0, 0.0], 0.5);
        let w = normalize_log_weights(&lw);
        let expected = (-0.5f64).exp() / (1.0 + (-0.5f64).exp());
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((w[0] - 0.377541).abs() < 1e-6);

        let mut lw = vec![0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        hedge_update(&mut lw, &[0.7, 0.7, 0.7], 0.9);
        let w = normalize_log_weights(&lw);
        for (a, b) in w.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn long_streams_do_not_underflow() {
        let mut lw = vec![-(2f64.ln()); 2];
        for _ in 0..100_000 {
            hedge_update(&mut lw, &[1.0, 0.0], 1.0);
        }
        let w = normalize_log_weights(&lw);
        assert!(w[0] >= 0.0 && w[1] == 1.0);
        assert!(lw.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn smaller_loss_gains_weight_monotonically() {
        let mut lw = vec![-(2f64.ln()); 2];
        let mut prev = 0.5;
        for t in 0..50 {
            let l0 = 0.1 + 0.01 * (t % 7) as f64;
            hedge_update(&mut lw, &[l0, l0 + 0.2], 0.5);
            let w = normalize_log_weights(&lw)[0];
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn simplex_and_determinism() {
        let stream = random_stream(8, 200, 4);
        let run = || {
            let mut m = MklModel::new(&gaussians(&[0.5, 2.0, 8.0]), 20, 8, 0.5, Loss::least_squares(1e-3), 9).unwrap();
            let samples: Vec<_> = stream.iter().map(|(a, y)| (m.encode(a).unwrap(), *y)).collect();
            let recs = m.train(&samples).unwrap();
            for r in &recs {
                assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(r.weights.iter().all(|&w| w > 0.0));
            }
            (m, recs)
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert!((m1.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_kernel_reduces_to_plain_learner() {
        let stream = random_stream(6, 300, 11);
        let loss = Loss::least_squares(1e-2);
        let mut m = MklModel::new(&gaussians(&[2.0]), 15, 6, 0.4, loss, 5).unwrap();
        let map = m.maps()[0].clone();
        let mut single = SingleKernelState::new(&map, 0.4, loss).unwrap();
        let trace = single.train_stream(&map, &stream).unwrap();
        let samples: Vec<_> = stream.iter().map(|(a, y)| (m.encode(a).unwrap(), *y)).collect();
        let recs = m.train(&samples).unwrap();
        for (r, l) in recs.iter().zip(&trace) {
            assert_eq!(r.weights, vec![1.0]);
            assert_eq!(r.combined_loss.to_bits(), l.to_bits());
            assert_eq!(r.kernel_losses[0].to_bits(), l.to_bits());
        }
        assert_eq!(m.learners()[0].theta, single.theta);
    }

    #[test]
    fn scaling_weights_changes_nothing() {
        let stream = random_stream(5, 100, 2);
        let base = MklModel::new(&gaussians(&[1.0, 4.0]), 10, 5, 0.7, Loss::least_squares(0.0), 3).unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        b.scale_weights(1e-200);
        for (x, y) in &stream {
            let za = a.encode(x).unwrap();
            let zb = b.encode(x).unwrap();
            assert!((a.predict_encoded(&za).unwrap() - b.predict_encoded(&zb).unwrap()).abs() < 1e-12);
            a.update(&za, *y).unwrap();
            b.update(&zb, *y).unwrap();
            for (wa, wb) in a.weights().iter().zip(b.weights()) {
                assert!((wa - wb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn records_use_pre_update_state() {
        let mut m = MklModel::new(&gaussians(&[1.0, 3.0]), 10, 4, 0.5, Loss::least_squares(0.0), 0).unwrap();
        let z = m.encode(&[1.0, 0.0, 1.0, 0.0]).unwrap();
        let r = m.update(&z, 2.0).unwrap();
        assert_eq!(r.prediction, 0.0);
        assert_eq!(r.combined_loss, 4.0);
        assert_eq!(r.kernel_losses, vec![4.0, 4.0]);
        assert_eq!(r.weights, vec![0.5, 0.5]);
        assert!(m.update(&EncodedNode::from_encodings(vec![]), 1.0).is_err());
    }

    #[test]
    fn hinge_and_logistic_models_train() {
        for kind in [LossKind::Hinge, LossKind::Logistic] {
            let loss = Loss::new(kind, 1e-3).unwrap();
            let mut m = MklModel::new(&gaussians(&[1.0, 4.0]), 10, 4, 0.5, loss, 0).unwrap();
            let z = m.encode(&[1.0, 0.0, 1.0, 0.0]).unwrap();
            assert!(m.update(&z, 0.3).is_err());
            let r = m.update(&z, -1.0).unwrap();
            assert!(r.combined_loss.is_finite());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let stream = random_stream(5, 50, 8);
        let mut m = MklModel::new(&gaussians(&[1.0, 4.0]), 6, 5, 0.3, Loss::least_squares(1e-4), 77).unwrap();
        let samples: Vec<_> = stream.iter().map(|(a, y)| (m.encode(a).unwrap(), *y)).collect();
        m.train(&samples).unwrap();
        let text = m.to_checkpoint(0xABCD);
        let (back, hash) = MklModel::from_checkpoint(&text).unwrap();
        assert_eq!(hash, 0xABCD);
        assert_eq!(back, m);
        assert!(MklModel::from_checkpoint("gradraker-mkl v0\n").is_err());
    }

    #[test]
    fn trace_tsv_layout() {
        let mut m = MklModel::new(&gaussians(&[1.0, 4.0]), 6, 3, 0.3, Loss::least_squares(0.0), 1).unwrap();
        let z = m.encode(&[1.0, 0.0, 1.0]).unwrap();
        let recs = vec![m.update(&z, 1.0).unwrap(), m.update(&z, 1.0).unwrap()];
        let mut out = Vec::new();
        write_trace_tsv(&recs, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t\tcombined_loss\tloss_0\tloss_1\tweight_0\tweight_1");
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split('\t').count() == 6));
    }

    #[test]
    fn providers() {
        let g = erdos_renyi(6, 0.5, 1).unwrap();
        let c = MatrixProvider::connectivity(&g);
        assert_eq!(c.dim(), 6);
        assert_eq!(c.features(2).unwrap(), g.connectivity_pattern(2, Default::default()).unwrap().vector);
        let h = MatrixProvider::hops(&g, 2).unwrap();
        assert_eq!(h.name(), "hop2");
        let r = MatrixProvider::connectivity(&g).restricted(vec![0, 3]).unwrap();
        assert_eq!(r.dim(), 2);
        assert_eq!(r.features(1).unwrap(), vec![g.adjacency()[(0, 1)], g.adjacency()[(3, 1)]]);
        assert!(c.features(6).is_err());
        let t = TableProvider::new("attrs", vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(t.features(1).unwrap(), vec![3.0, 4.0]);
        assert!(TableProvider::new("bad", vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn single_provider_ensemble_matches_model() {
        let g = erdos_renyi(12, 0.3, 3).unwrap();
        let loss = Loss::least_squares(1e-3);
        let model = MklModel::new(&gaussians(&[1.0, 4.0]), 10, 12, 0.5, loss, 2).unwrap();
        let mut plain = model.clone();
        let mut ens = ensemble_combine(vec![Box::new(MatrixProvider::connectivity(&g))], vec![model], 0.5).unwrap();
        let samples: Vec<(usize, f64)> = (0..12).map(|i| (i, (i as f64 * 0.3).sin())).collect();
        let steps = ens.train_nodes(&samples).unwrap();
        let recs = plain.train_nodes(&MatrixProvider::connectivity(&g), &samples).unwrap();
        for (s, r) in steps.iter().zip(&recs) {
            assert_eq!(s.prediction, r.prediction);
            assert_eq!(s.betas, vec![1.0]);
        }
        for node in 0..12 {
            assert_eq!(ens.predict(node).unwrap(), plain.predict(&g.adjacency().column(node).iter().copied().collect::<Vec<_>>()).unwrap());
        }
    }

    #[test]
    fn ensemble_validation() {
        let g = erdos_renyi(5, 0.5, 1).unwrap();
        let m = MklModel::new(&gaussians(&[1.0]), 4, 7, 0.5, Loss::least_squares(0.0), 0).unwrap();
        assert!(ensemble_combine(vec![Box::new(MatrixProvider::connectivity(&g))], vec![m.clone()], 0.5).is_err());
        assert!(ensemble_combine(vec![], vec![], 0.5).is_err());
        assert!(ensemble_combine(vec![Box::new(MatrixProvider::connectivity(&g))], vec![], 0.5).is_err());
    }
}
