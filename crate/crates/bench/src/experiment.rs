//! Experiment protocols: accuracy sweeps on synthetic and real graphs,
//! regret runs and the new-node runtime benchmark.

use std::hint::black_box;

use gradraker::baselines::{batch_kernel_ridge, knn_from_pattern, BatchKernelModel};
use gradraker::graph::{erdos_renyi, load_edge_list, load_labels, synth_signal, unit_normalize};
use gradraker::kernel::{kernel_matrix, LaplacianSpectrum};
use gradraker::mkl::StepRecord;
use gradraker::regret::{prefix_oracle, regret_bound, static_regret, RegretReport};
use gradraker::seed::{derive_seed, rng};
use gradraker::{EncodedNode, Error, Graph, GraphKernelSpec, KernelSpec, Loss, MklModel, RfVector, SamplingPlan};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, LabelScaling, Method, PatternScope, Scenario};
use crate::error::{io_err, BenchError, BenchResult};
use crate::metrics::{conventional_nmse, mean, nmse, rms, time_median};
use crate::patterns::PatternView;
use crate::report::{aggregate, RunReport, TimingRow, TrialRow};

/// One configured estimator; graph-kernel methods expand to one variant
/// per bandwidth or band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Gradraker,
    Kl,
    Knn,
    GkDf(f64),
    GkBl(usize),
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Gradraker => "gradraker".into(),
            Variant::Kl => "kl".into(),
            Variant::Knn => "knn".into(),
            Variant::GkDf(s) => format!("gk-df:{s}"),
            Variant::GkBl(b) => format!("gk-bl:{b}"),
        }
    }

    fn graph_spec(&self) -> Option<GraphKernelSpec> {
        match *self {
            Variant::GkDf(s) => Some(GraphKernelSpec::diffusion(s)),
            Variant::GkBl(b) => Some(GraphKernelSpec::bandlimited(b)),
            _ => None,
        }
    }
}

pub fn variants(cfg: &ExperimentConfig, methods: &[Method]) -> Vec<Variant> {
    let mut out = Vec::new();
    for m in methods {
        match m {
            Method::Gradraker => out.push(Variant::Gradraker),
            Method::Kl => out.push(Variant::Kl),
            Method::Knn => out.push(Variant::Knn),
            Method::GkDf => out.extend(cfg.gk_df_bandwidths.iter().map(|&s| Variant::GkDf(s))),
            Method::GkBl => out.extend(cfg.gk_bl_bands.iter().map(|&b| Variant::GkBl(b))),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: String,
    pub nmse: Option<f64>,
    pub conventional_nmse: Option<f64>,
    /// Regularization picked by cross-validation.
    pub mu: Option<f64>,
    /// New nodes that kNN could not reach and that fell back to the
    /// training mean.
    pub knn_fallbacks: usize,
    #[serde(skip)]
    pub predictions: Vec<f64>,
    pub train_seconds: Option<f64>,
    pub infer_seconds_per_node: Option<f64>,
}

pub struct TrialOutput {
    pub results: Vec<MethodResult>,
    /// Gradraker's training trace, when it ran.
    pub trace: Option<Vec<StepRecord>>,
}

/// A graph with its graph-kernel view: the symmetrized graph and its
/// Laplacian spectrum.
pub struct GraphContext {
    pub graph: Graph,
    pub gk: Option<(Graph, LaplacianSpectrum)>,
}

impl GraphContext {
    pub fn new(graph: Graph, with_spectrum: bool) -> BenchResult<Self> {
        let gk = if with_spectrum {
            let sym = symmetrized(&graph)?;
            let spectrum = LaplacianSpectrum::new(&sym)?;
            Some((sym, spectrum))
        } else {
            None
        };
        Ok(GraphContext { graph, gk })
    }
}

/// Undirected version of a graph: `max(A, Aᵀ)` for directed input.
pub fn symmetrized(g: &Graph) -> gradraker::Result<Graph> {
    if !g.is_directed() {
        return Ok(g.clone());
    }
    let a = g.adjacency();
    let sym = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].max(a[(j, i)]));
    Graph::from_adjacency(sym, false)
}

/// Everything one accuracy trial needs.
pub struct TrialInput<'a> {
    pub ctx: &'a GraphContext,
    /// Label of every node; `None` for unlabelled nodes.
    pub values: &'a [Option<f64>],
    /// Training nodes in stream order; `unsampled` are the new nodes in
    /// arrival order, all labelled.
    pub plan: &'a SamplingPlan,
    /// Unlabelled nodes present from the start.
    pub background: &'a [usize],
    pub seed: u64,
    pub timing: bool,
}

/// Number of training samples used for fitting during cross-validation;
/// the remainder validates. Returns `m` when no split is possible.
pub fn cv_split(m: usize, fraction: f64) -> usize {
    if fraction <= 0.0 || m < 2 {
        return m;
    }
    let n_val = ((m as f64 * fraction).round() as usize).clamp(1, m - 1);
    m - n_val
}

/// Grid value with the smallest validation error; the first grid entry
/// when there is nothing to validate on. Failed fits are skipped.
pub fn select_mu<F>(grid: &[f64], can_validate: bool, mut val_err: F) -> BenchResult<f64>
where
    F: FnMut(f64) -> gradraker::Result<f64>,
{
    if grid.len() == 1 || !can_validate {
        return Ok(grid[0]);
    }
    let mut best: Option<(f64, f64)> = None;
    for &mu in grid {
        if let Ok(e) = val_err(mu) {
            if e.is_finite() && best.is_none_or(|(_, b)| e < b) {
                best = Some((mu, e));
            }
        }
    }
    best.map(|(mu, _)| mu)
        .ok_or_else(|| BenchError::Setup("no value in mu_grid gave a usable fit".into()))
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len().max(1) as f64
}

pub fn gradraker_model(cfg: &ExperimentConfig, dim: usize, mu: f64, seed: u64) -> gradraker::Result<MklModel> {
    let mut m = MklModel::new(&cfg.kernels, cfg.d, dim, cfg.eta, Loss::new(cfg.loss, mu)?, seed)?;
    if let Some(e) = cfg.learner_eta {
        m.set_learner_eta(e);
    }
    Ok(m)
}

fn train_encoded(model: &mut MklModel, enc: &[EncodedNode], y: &[f64]) -> gradraker::Result<Vec<StepRecord>> {
    enc.iter().zip(y).map(|(z, &l)| model.update(z, l)).collect()
}

struct Prepared<'a> {
    cfg: &'a ExperimentConfig,
    input: &'a TrialInput<'a>,
    /// Scaled training labels.
    y: Vec<f64>,
    scale: f64,
    truth: Vec<f64>,
    train_pats: Vec<Vec<f64>>,
    new_pats: Vec<Vec<f64>>,
    dim: usize,
    /// Links of the first arrival to the nodes present before it.
    first_links: Option<Vec<f64>>,
    n_fit: usize,
}

impl Prepared<'_> {
    fn m(&self) -> usize {
        self.y.len()
    }

    fn can_validate(&self) -> bool {
        self.n_fit < self.m()
    }

    fn reps(&self) -> usize {
        self.cfg.timing_reps
    }

    fn finish(&self, variant: Variant, scaled_preds: Vec<f64>, mu: Option<f64>) -> MethodResult {
        let predictions: Vec<f64> = scaled_preds.iter().map(|p| p * self.scale).collect();
        MethodResult {
            method: variant.label(),
            nmse: nmse(&predictions, &self.truth),
            conventional_nmse: conventional_nmse(&predictions, &self.truth),
            mu,
            knn_fallbacks: 0,
            predictions,
            train_seconds: None,
            infer_seconds_per_node: None,
        }
    }

    fn per_node(&self, total: f64) -> f64 {
        total / self.new_pats.len().max(1) as f64
    }
}

fn run_gradraker(p: &Prepared) -> BenchResult<(MethodResult, Vec<StepRecord>)> {
    let cfg = p.cfg;
    let seed = derive_seed(p.input.seed, 10);
    let encoder = gradraker_model(cfg, p.dim, 0.0, seed)?;
    let enc: Vec<EncodedNode> = p
        .train_pats
        .iter()
        .map(|a| encoder.encode(a))
        .collect::<gradraker::Result<_>>()?;
    let n_fit = p.n_fit;
    let mu = select_mu(&cfg.mu_grid, p.can_validate(), |mu| {
        let mut m = gradraker_model(cfg, p.dim, mu, seed)?;
        train_encoded(&mut m, &enc[..n_fit], &p.y[..n_fit])?;
        let pred = enc[n_fit..]
            .iter()
            .map(|z| m.predict_encoded(z))
            .collect::<gradraker::Result<Vec<_>>>()?;
        Ok(mse(&pred, &p.y[n_fit..]))
    })?;
    let mut model = gradraker_model(cfg, p.dim, mu, seed)?;
    let trace = train_encoded(&mut model, &enc, &p.y)?;
    let preds = p
        .new_pats
        .iter()
        .map(|a| model.predict(a))
        .collect::<gradraker::Result<Vec<_>>>()?;
    let mut r = p.finish(Variant::Gradraker, preds, Some(mu));
    if p.input.timing {
        r.train_seconds = Some(time_median(p.reps(), || {
            let mut m = gradraker_model(cfg, p.dim, mu, seed).expect("model built above");
            for (a, &l) in p.train_pats.iter().zip(&p.y) {
                let z = m.encode(a).expect("encoded above");
                black_box(m.update(&z, l).expect("trained above"));
            }
        }));
        let total = time_median(p.reps(), || {
            for a in &p.new_pats {
                black_box(model.predict(a).expect("predicted above"));
            }
        });
        r.infer_seconds_per_node = Some(p.per_node(total));
    }
    Ok((r, trace))
}

fn run_kl(p: &Prepared) -> BenchResult<MethodResult> {
    let spec = KernelSpec::gaussian(p.cfg.kl_bandwidth)?;
    let sampled = &p.input.plan.sampled;
    let n_fit = p.n_fit;
    let fit = |mu: f64, upto: usize| {
        BatchKernelModel::fit_connectivity(spec, p.train_pats[..upto].to_vec(), sampled[..upto].to_vec(), &p.y[..upto], mu)
    };
    let mu = select_mu(&p.cfg.mu_grid, p.can_validate(), |mu| {
        let model = fit(mu, n_fit)?;
        let pred = p.train_pats[n_fit..]
            .iter()
            .map(|a| model.predict_pattern(a))
            .collect::<gradraker::Result<Vec<_>>>()?;
        Ok(mse(&pred, &p.y[n_fit..]))
    })?;
    let model = fit(mu, p.m())?;
    let preds = p
        .new_pats
        .iter()
        .map(|a| model.predict_pattern(a))
        .collect::<gradraker::Result<Vec<_>>>()?;
    let mut r = p.finish(Variant::Kl, preds, Some(mu));
    if p.input.timing {
        r.train_seconds = Some(time_median(p.reps(), || {
            black_box(fit(mu, p.m()).expect("fitted above"));
        }));
        let total = time_median(p.reps(), || {
            for a in &p.new_pats {
                black_box(model.predict_pattern(a).expect("predicted above"));
            }
        });
        r.infer_seconds_per_node = Some(p.per_node(total));
    }
    Ok(r)
}

fn knn_predictions(g: &Graph, labeled: &[Option<f64>], nodes: &[usize], fallback: f64) -> gradraker::Result<(Vec<f64>, usize)> {
    let k = g.max_neighbor_count().max(1);
    let mut fallbacks = 0;
    let preds = nodes
        .iter()
        .map(|&v| {
            let col: Vec<f64> = g.adjacency().column(v).iter().copied().collect();
            match knn_from_pattern(&col, labeled, k, v) {
                Err(Error::KnnInapplicable(_)) => {
                    fallbacks += 1;
                    Ok(fallback)
                }
                other => other,
            }
        })
        .collect::<gradraker::Result<Vec<_>>>()?;
    Ok((preds, fallbacks))
}

fn run_knn(p: &Prepared) -> BenchResult<MethodResult> {
    let g = &p.input.ctx.graph;
    let mut labeled = vec![None; g.n_nodes()];
    for (&i, &l) in p.input.plan.sampled.iter().zip(&p.y) {
        labeled[i] = Some(l);
    }
    let fallback = mean(&p.y).unwrap_or(0.0);
    let nodes = &p.input.plan.unsampled;
    let (preds, fallbacks) = knn_predictions(g, &labeled, nodes, fallback)?;
    let mut r = p.finish(Variant::Knn, preds, None);
    r.knn_fallbacks = fallbacks;
    if p.input.timing {
        r.train_seconds = Some(0.0);
        let total = time_median(p.reps(), || {
            black_box(knn_predictions(g, &labeled, nodes, fallback).expect("predicted above"));
        });
        r.infer_seconds_per_node = Some(p.per_node(total));
    }
    Ok(r)
}

fn gk_fit(spectrum: &LaplacianSpectrum, spec: &GraphKernelSpec, nodes: &[usize], y: &[f64], mu: f64) -> gradraker::Result<Vec<f64>> {
    let k = spectrum.kernel_block(spec, nodes, nodes)?;
    batch_kernel_ridge(&k, y, mu)
}

fn gk_predict(spectrum: &LaplacianSpectrum, spec: &GraphKernelSpec, targets: &[usize], nodes: &[usize], alpha: &[f64]) -> gradraker::Result<Vec<f64>> {
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let cross = spectrum.kernel_block(spec, targets, nodes)?;
    Ok((cross * nalgebra::DVector::from_column_slice(alpha)).iter().copied().collect())
}

/// Cost of serving one new node with a graph kernel: rebuild the graph
/// with the node attached, decompose, refit and predict.
pub fn gk_new_node(g: &Graph, links: &[f64], spec: &GraphKernelSpec, sampled: &[usize], y: &[f64], mu: f64) -> gradraker::Result<f64> {
    let grown = g.with_new_node(links)?;
    let spectrum = LaplacianSpectrum::new(&grown)?;
    let alpha = gk_fit(&spectrum, spec, sampled, y, mu)?;
    Ok(gk_predict(&spectrum, spec, &[g.n_nodes()], sampled, &alpha)?[0])
}

fn run_gk(p: &Prepared, variant: Variant) -> BenchResult<MethodResult> {
    let (gk_graph, spectrum) = p
        .input
        .ctx
        .gk
        .as_ref()
        .ok_or_else(|| BenchError::Setup("graph-kernel method without a spectrum".into()))?;
    let spec = variant.graph_spec().expect("graph-kernel variant");
    let sampled = &p.input.plan.sampled;
    let n_fit = p.n_fit;
    let mu = select_mu(&p.cfg.mu_grid, p.can_validate(), |mu| {
        let alpha = gk_fit(spectrum, &spec, &sampled[..n_fit], &p.y[..n_fit], mu)?;
        let pred = gk_predict(spectrum, &spec, &sampled[n_fit..], &sampled[..n_fit], &alpha)?;
        Ok(mse(&pred, &p.y[n_fit..]))
    })?;
    let alpha = gk_fit(spectrum, &spec, sampled, &p.y, mu)?;
    let preds = gk_predict(spectrum, &spec, &p.input.plan.unsampled, sampled, &alpha)?;
    let mut r = p.finish(variant, preds, Some(mu));
    if p.input.timing {
        r.train_seconds = Some(time_median(p.reps(), || {
            let s = LaplacianSpectrum::new(gk_graph).expect("decomposed above");
            black_box(gk_fit(&s, &spec, sampled, &p.y, mu).expect("fitted above"));
        }));
        if let Some(links) = &p.first_links {
            r.infer_seconds_per_node = Some(time_median(p.reps(), || {
                black_box(gk_new_node(gk_graph, links, &spec, sampled, &p.y, mu).expect("fitted above"));
            }));
        }
    }
    Ok(r)
}

/// Run every configured method on one trial.
pub fn run_trial(cfg: &ExperimentConfig, input: &TrialInput) -> BenchResult<TrialOutput> {
    let plan = input.plan;
    let y_raw: Vec<f64> = plan
        .sampled
        .iter()
        .map(|&i| input.values[i].ok_or_else(|| BenchError::Setup(format!("training node {i} has no label"))))
        .collect::<BenchResult<_>>()?;
    let truth: Vec<f64> = plan
        .unsampled
        .iter()
        .map(|&i| input.values[i].ok_or_else(|| BenchError::Setup(format!("evaluation node {i} has no label"))))
        .collect::<BenchResult<_>>()?;
    let scale = match cfg.label_scaling {
        LabelScaling::Rms => Some(rms(&y_raw)).filter(|r| *r > 0.0).unwrap_or(1.0),
        LabelScaling::None => 1.0,
    };
    let y: Vec<f64> = y_raw.iter().map(|v| v / scale).collect();

    let g = &input.ctx.graph;
    let mut view = PatternView::new(g, cfg.pattern_scope, cfg.normalize_patterns, &plan.sampled, input.background);
    let first_links = match (&input.ctx.gk, plan.unsampled.first()) {
        (Some((gk_graph, _)), Some(&v)) => {
            let sym = PatternView::new(gk_graph, PatternScope::Progressive, false, &plan.sampled, input.background);
            Some(sym.links(v))
        }
        _ => None,
    };
    let dim = view.dim();
    let (train_pats, new_pats) = view.stream(&plan.sampled, &plan.unsampled);
    let prepared = Prepared {
        cfg,
        input,
        n_fit: cv_split(y.len(), cfg.cv_fraction),
        y,
        scale,
        truth,
        train_pats,
        new_pats,
        dim,
        first_links,
    };

    let mut results = Vec::new();
    let mut trace = None;
    for variant in variants(cfg, &cfg.methods) {
        let r = match variant {
            Variant::Gradraker => {
                let (r, t) = run_gradraker(&prepared)?;
                trace = Some(t);
                r
            }
            Variant::Kl => run_kl(&prepared)?,
            Variant::Knn => run_knn(&prepared)?,
            Variant::GkDf(_) | Variant::GkBl(_) => run_gk(&prepared, variant)?,
        };
        results.push(r);
    }
    Ok(TrialOutput { results, trace })
}

fn uses_graph_kernels(methods: &[Method]) -> bool {
    methods.iter().any(|m| matches!(m, Method::GkDf | Method::GkBl))
}

/// Column patterns of every node, unit-normalized when configured.
pub fn full_patterns(g: &Graph, normalize: bool) -> Vec<Vec<f64>> {
    (0..g.n_nodes())
        .map(|i| {
            let mut v: Vec<f64> = g.adjacency().column(i).iter().copied().collect();
            if normalize {
                unit_normalize(&mut v);
            }
            v
        })
        .collect()
}

/// Synthetic graph and signal for one seed.
pub fn synthetic_instance(cfg: &ExperimentConfig, seed: u64, with_spectrum: bool) -> BenchResult<(GraphContext, Vec<f64>)> {
    let g = erdos_renyi(cfg.n_nodes, cfg.edge_prob, derive_seed(seed, 0))?;
    let ctx = GraphContext::new(g, with_spectrum || cfg.scenario == Scenario::Diffusion)?;
    let truth_kernel = match cfg.scenario {
        Scenario::Diffusion => {
            let (_, spectrum) = ctx.gk.as_ref().expect("spectrum computed for the diffusion scenario");
            spectrum.kernel(&GraphKernelSpec::diffusion(cfg.truth_bandwidth))?
        }
        Scenario::Connectivity => kernel_matrix(
            &KernelSpec::gaussian(cfg.truth_bandwidth)?,
            &full_patterns(&ctx.graph, cfg.normalize_patterns),
        )?,
    };
    let signal = synth_signal(&ctx.graph, &truth_kernel, cfg.noise_var, derive_seed(seed, 1))?;
    Ok((ctx, signal.values))
}

fn sample_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

fn collect_trial(
    report: &mut RunReport,
    trial: usize,
    sample_count: usize,
    out: TrialOutput,
) {
    for r in &out.results {
        report.trials.push(TrialRow {
            trial,
            sample_count,
            method: r.method.clone(),
            nmse: r.nmse,
            conventional_nmse: r.conventional_nmse,
            mu: r.mu,
            knn_fallbacks: r.knn_fallbacks,
        });
        for (phase, secs) in [("train", r.train_seconds), ("infer_per_node", r.infer_seconds_per_node)] {
            if let Some(seconds) = secs {
                report.timings.push(TimingRow {
                    trial,
                    sample_count,
                    method: r.method.clone(),
                    phase: phase.into(),
                    seconds,
                });
            }
        }
    }
    if let Some(t) = out.trace {
        if trial == 0 {
            report.traces.push((format!("gradraker_m{sample_count}_trial0"), t));
        }
    }
}

/// Accuracy on synthetic Erdős–Rényi graphs over `cfg.trials` seeds.
pub fn run_synthetic(cfg: &ExperimentConfig) -> BenchResult<RunReport> {
    let mut report = RunReport::new("synthetic", cfg);
    let with_spectrum = uses_graph_kernels(&cfg.methods);
    let m = sample_count(cfg.sample_fraction, cfg.n_nodes);
    for trial in 0..cfg.trials {
        let seed = derive_seed(cfg.seed, trial as u64);
        let (ctx, values) = synthetic_instance(cfg, seed, with_spectrum)?;
        let plan = SamplingPlan::random(cfg.n_nodes, m, derive_seed(seed, 2))?;
        let values: Vec<Option<f64>> = values.into_iter().map(Some).collect();
        let input = TrialInput {
            ctx: &ctx,
            values: &values,
            plan: &plan,
            background: &[],
            seed,
            timing: trial < cfg.timing_trials,
        };
        let out = run_trial(cfg, &input)?;
        collect_trial(&mut report, trial, m, out);
    }
    report.rows = aggregate(&report.trials);
    report.note_undefined();
    Ok(report)
}

/// Graph and label table named by the configuration.
pub fn load_dataset(cfg: &ExperimentConfig) -> BenchResult<(Graph, Vec<Vec<Option<f64>>>)> {
    let edges = cfg
        .edge_list
        .as_ref()
        .ok_or_else(|| BenchError::Setup("dataset runs need `edge_list`".into()))?;
    let labels = cfg
        .labels
        .as_ref()
        .ok_or_else(|| BenchError::Setup("dataset runs need `labels`".into()))?;
    let text = std::fs::read_to_string(edges).map_err(io_err(edges))?;
    let g = load_edge_list(&text, cfg.directed, cfg.weighted)?;
    let text = std::fs::read_to_string(labels).map_err(io_err(labels))?;
    let table = load_labels(&text, &g)?;
    Ok((g, table.columns))
}

/// Accuracy on a real graph. Every label column is a separate signal and
/// runs `cfg.trials` random splits per sample count.
pub fn run_dataset(cfg: &ExperimentConfig) -> BenchResult<RunReport> {
    let (g, columns) = load_dataset(cfg)?;
    let ctx = GraphContext::new(g, uses_graph_kernels(&cfg.methods))?;
    let mut report = RunReport::new("dataset", cfg);
    let mut trial_index = 0;
    for (c, values) in columns.iter().enumerate() {
        let labelled: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
        let background: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_none()).collect();
        if labelled.is_empty() {
            return Err(BenchError::Setup(format!("label column {c} is empty")));
        }
        let counts = if cfg.sample_counts.is_empty() {
            vec![sample_count(cfg.sample_fraction, labelled.len())]
        } else {
            cfg.sample_counts.clone()
        };
        for t in 0..cfg.trials {
            let seed = derive_seed(derive_seed(cfg.seed, c as u64), t as u64);
            let mut order = labelled.clone();
            order.shuffle(&mut rng(derive_seed(seed, 2)));
            for &m in &counts {
                if m == 0 || m > order.len() {
                    return Err(BenchError::Setup(format!(
                        "sample count {m} outside 1..={} labelled nodes",
                        order.len()
                    )));
                }
                let plan = SamplingPlan {
                    sampled: order[..m].to_vec(),
                    unsampled: order[m..].to_vec(),
                };
                let input = TrialInput {
                    ctx: &ctx,
                    values,
                    plan: &plan,
                    background: &background,
                    seed,
                    timing: trial_index < cfg.timing_trials,
                };
                let out = run_trial(cfg, &input)?;
                collect_trial(&mut report, trial_index, m, out);
            }
            trial_index += 1;
        }
    }
    report.rows = aggregate(&report.trials);
    report.note_undefined();
    Ok(report)
}

/// Regret bound check for one dictionary entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub kernel: usize,
    /// Online loss minus this kernel's best fixed loss.
    pub regret: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrial {
    pub trial: usize,
    pub fitted_growth_exponent: Option<f64>,
    pub final_regret: f64,
    /// Largest per-step gradient norm, used as the Lipschitz constant.
    pub lipschitz: f64,
    pub bounds: Vec<BoundCheck>,
    pub final_weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretRun {
    pub config: std::collections::BTreeMap<String, String>,
    pub eta: f64,
    pub fit_from: usize,
    pub trials: Vec<RegretTrial>,
    pub mean_growth_exponent: Option<f64>,
    #[serde(skip)]
    pub first_series: Option<RegretReport>,
}

/// Static regret of the multi-kernel learner on a stream of node draws
/// with replacement from one synthetic graph per trial.
pub fn run_regret(cfg: &ExperimentConfig) -> BenchResult<RegretRun> {
    let horizon = cfg.regret_horizon;
    if horizon < 2 {
        return Err(BenchError::Setup("regret_horizon must be at least 2".into()));
    }
    let eta = cfg.regret_eta.unwrap_or(1.0 / (horizon as f64).sqrt());
    let fit_from = ((cfg.regret_fit_from * horizon as f64) as usize).max(1);
    let mut trials = Vec::new();
    let mut first_series = None;
    for trial in 0..cfg.trials {
        let seed = derive_seed(cfg.seed, trial as u64);
        let (ctx, values) = synthetic_instance(cfg, seed, false)?;
        let n = ctx.graph.n_nodes();
        let patterns = full_patterns(&ctx.graph, cfg.normalize_patterns);
        let mut draw = rng(derive_seed(seed, 3));
        let nodes: Vec<usize> = (0..horizon).map(|_| draw.random_range(0..n)).collect();
        let raw: Vec<f64> = nodes.iter().map(|&i| values[i]).collect();
        let scale = match cfg.label_scaling {
            LabelScaling::Rms => Some(rms(&raw)).filter(|r| *r > 0.0).unwrap_or(1.0),
            LabelScaling::None => 1.0,
        };
        let ys: Vec<f64> = raw.iter().map(|v| v / scale).collect();

        let mut model = MklModel::new(&cfg.kernels, cfg.d, n, eta, Loss::new(cfg.loss, cfg.regret_mu)?, derive_seed(seed, 10))?;
        if let Some(e) = cfg.learner_eta {
            model.set_learner_eta(e);
        }
        let enc: Vec<EncodedNode> = nodes
            .iter()
            .map(|&i| model.encode(&patterns[i]))
            .collect::<gradraker::Result<_>>()?;
        let records = train_encoded(&mut model, &enc, &ys)?;
        let losses: Vec<f64> = records.iter().map(|r| r.combined_loss).collect();
        let lipschitz = records
            .iter()
            .flat_map(|r| r.grad_norms.iter().copied())
            .fold(0.0, f64::max);

        let per_kernel: Vec<Vec<RfVector>> = (0..model.n_kernels())
            .map(|p| enc.iter().map(|e| e.encodings()[p].clone()).collect())
            .collect();
        let oracle = prefix_oracle(&per_kernel, &ys, cfg.regret_mu)?;
        let series = static_regret(&losses, &oracle.best_loss, fit_from)?;
        let total: f64 = losses.iter().sum();
        let bounds = (0..model.n_kernels())
            .map(|p| {
                let theta2: f64 = oracle.theta_star[p].iter().map(|x| x * x).sum();
                let regret = total - oracle.final_loss[p];
                let bound = regret_bound(model.n_kernels(), eta, theta2, lipschitz, horizon);
                BoundCheck {
                    kernel: p,
                    regret,
                    bound,
                    holds: regret <= bound,
                }
            })
            .collect();
        trials.push(RegretTrial {
            trial,
            fitted_growth_exponent: series.fitted_growth_exponent,
            final_regret: *series.regret.last().expect("horizon >= 2"),
            lipschitz,
            bounds,
            final_weights: model.weights(),
        });
        if trial == 0 {
            first_series = Some(series);
        }
    }
    let exps: Vec<f64> = trials.iter().filter_map(|t| t.fitted_growth_exponent).collect();
    Ok(RegretRun {
        config: cfg.echo(),
        eta,
        fit_from,
        mean_growth_exponent: if exps.len() == trials.len() { mean(&exps) } else { None },
        trials,
        first_series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewNodeRow {
    pub n_nodes: usize,
    pub method: String,
    pub seconds_per_node: f64,
}

/// Wall-clock cost of serving one new node as the graph grows.
pub fn bench_newnode(cfg: &ExperimentConfig) -> BenchResult<Vec<NewNodeRow>> {
    let mut rows = Vec::new();
    let mu = cfg.mu_grid[0];
    for &n in &cfg.newnode_sizes {
        let seed = derive_seed(cfg.seed, n as u64);
        let g = erdos_renyi(n, cfg.edge_prob, derive_seed(seed, 0))?;
        let m = sample_count(cfg.sample_fraction, n);
        let plan = SamplingPlan::random(n, m, derive_seed(seed, 2))?;
        // Label values do not affect the cost; draw them at random.
        let mut draw = rng(derive_seed(seed, 1));
        let y: Vec<f64> = (0..m).map(|_| draw.random_range(0.5..1.5)).collect();
        let arrivals: Vec<usize> = plan.unsampled.iter().copied().take(cfg.newnode_batch.max(1)).collect();
        let mut view = PatternView::new(&g, cfg.pattern_scope, cfg.normalize_patterns, &plan.sampled, &[]);
        let first_links = view.links(arrivals[0]);
        let (train, new) = view.stream(&plan.sampled, &arrivals);
        let per = |total: f64| total / arrivals.len() as f64;
        for variant in variants(cfg, &cfg.newnode_methods) {
            let seconds = match variant {
                Variant::Gradraker => {
                    let mut model = gradraker_model(cfg, view.dim(), mu, derive_seed(seed, 10))?;
                    for (a, &l) in train.iter().zip(&y) {
                        let z = model.encode(a)?;
                        model.update(&z, l)?;
                    }
                    per(time_median(cfg.timing_reps, || {
                        for a in &new {
                            black_box(model.predict(a).expect("valid pattern"));
                        }
                    }))
                }
                Variant::Kl => {
                    let model = BatchKernelModel::fit_connectivity(
                        KernelSpec::gaussian(cfg.kl_bandwidth)?,
                        train.clone(),
                        plan.sampled.clone(),
                        &y,
                        mu,
                    )?;
                    per(time_median(cfg.timing_reps, || {
                        for a in &new {
                            black_box(model.predict_pattern(a).expect("valid pattern"));
                        }
                    }))
                }
                Variant::Knn => {
                    let mut labeled = vec![None; n];
                    for (&i, &l) in plan.sampled.iter().zip(&y) {
                        labeled[i] = Some(l);
                    }
                    per(time_median(cfg.timing_reps, || {
                        black_box(knn_predictions(&g, &labeled, &arrivals, 1.0).expect("valid graph"));
                    }))
                }
                Variant::GkDf(_) | Variant::GkBl(_) => {
                    let spec = variant.graph_spec().expect("graph-kernel variant");
                    gk_new_node(&g, &first_links, &spec, &plan.sampled, &y, mu)?;
                    time_median(cfg.timing_reps, || {
                        black_box(gk_new_node(&g, &first_links, &spec, &plan.sampled, &y, mu).expect("checked above"));
                    })
                }
            };
            rows.push(NewNodeRow {
                n_nodes: n,
                method: variant.label(),
                seconds_per_node: seconds,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cv_split_bounds() {
        assert_eq!(cv_split(50, 0.2), 40);
        assert_eq!(cv_split(1, 0.2), 1);
        assert_eq!(cv_split(5, 0.0), 5);
        assert_eq!(cv_split(2, 0.9), 1);
    }

    #[test]
    fn select_mu_prefers_smallest_error() {
        let grid = [1e-3, 1e-2, 1e-1];
        let mu = select_mu(&grid, true, |mu| Ok((mu - 1e-2).abs())).unwrap();
        assert_eq!(mu, 1e-2);
        assert_eq!(select_mu(&grid, false, |_| Ok(0.0)).unwrap(), 1e-3);
        let mu = select_mu(&grid, true, |mu| if mu < 0.05 { Err(Error::Singular("x".into())) } else { Ok(1.0) }).unwrap();
        assert_eq!(mu, 1e-1);
        assert!(select_mu(&grid, true, |_| Err(Error::EmptyInput)).is_err());
    }

    #[test]
    fn symmetrize_directed() {
        let g = load_edge_list("0 1\n1 2\n", true, false).unwrap();
        let s = symmetrized(&g).unwrap();
        assert!(!s.is_directed());
        assert_eq!(s.n_edges(), 2);
    }

    #[test]
    fn variant_expansion() {
        let mut cfg = ExperimentConfig::default();
        cfg.gk_df_bandwidths = vec![1.0, 5.0];
        cfg.gk_bl_bands = vec![3];
        let v: Vec<String> = variants(&cfg, &cfg.methods).iter().map(Variant::label).collect();
        assert_eq!(v, ["gradraker", "kl", "knn", "gk-df:1", "gk-df:5", "gk-bl:3"]);
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig::parse(
            "n_nodes = 40\nedge_prob = 0.2\nsample_fraction = 0.5\ntrials = 2\nmu_grid = 1e-3,1e-1\ngk_bl_bands = 5\nd = 20\ntiming_reps = 1\n",
        )
        .unwrap()
    }

    #[test]
    fn synthetic_trial_runs_every_method() {
        let cfg = small_cfg();
        let report = run_synthetic(&cfg).unwrap();
        let methods: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(methods, ["gradraker", "kl", "knn", "gk-df:1", "gk-df:5", "gk-bl:5"]);
        for row in &report.rows {
            assert_eq!(row.trials, 2);
            assert!(row.nmse_mean.unwrap().is_finite());
        }
        assert_eq!(report.traces.len(), 1);
        assert_eq!(report.traces[0].1.len(), 20);
        // Timing is recorded for the first trial only.
        assert!(report.timings.iter().all(|t| t.trial == 0));
        assert!(report.timings.iter().any(|t| t.method == "gk-df:1" && t.phase == "infer_per_node"));
    }

    #[test]
    fn gk_new_node_matches_transductive_fit() {
        let g = erdos_renyi(15, 0.3, 2).unwrap();
        let spec = GraphKernelSpec::diffusion(1.0);
        let sampled = [0, 3, 5, 7];
        let y = [1.0, 0.5, -0.2, 0.8];
        let links: Vec<f64> = (0..15).map(|k| if k % 4 == 0 { 1.0 } else { 0.0 }).collect();
        let grown = g.with_new_node(&links).unwrap();
        let kbar = gradraker::kernel::graph_kernel_matrix(&grown, &spec).unwrap();
        let plan = SamplingPlan {
            sampled: sampled.to_vec(),
            unsampled: vec![],
        };
        let model = BatchKernelModel::fit_graph_kernel(&kbar, &plan, &y, 0.1).unwrap();
        let direct = model.predict_graph_node(&kbar, 15).unwrap();
        let fast = gk_new_node(&g, &links, &spec, &sampled, &y, 0.1).unwrap();
        assert!((direct - fast).abs() < 1e-9, "{direct} vs {fast}");
    }

    #[test]
    fn full_sampling_leaves_nmse_undefined() {
        let mut cfg = small_cfg();
        cfg.sample_fraction = 1.0;
        cfg.trials = 1;
        cfg.methods = vec![Method::Knn, Method::Kl];
        let report = run_synthetic(&cfg).unwrap();
        assert!(report.rows.iter().all(|r| r.defined == 0 && r.nmse_mean.is_none()));
        assert!(!report.notes.is_empty());
    }
}
