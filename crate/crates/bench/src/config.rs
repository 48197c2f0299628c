//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use gradraker::{KernelFamily, KernelSpec, LossKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Ground truth of the synthetic experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// `K̄` from the diffusion graph kernel.
    Diffusion,
    /// `K̄` from a Gaussian kernel on connectivity patterns.
    Connectivity,
}

/// Which coordinates of a node's connectivity the pattern-based methods see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternScope {
    /// Length-`N` patterns; training nodes link only to sampled nodes and
    /// each new node links to sampled nodes plus new nodes that arrived
    /// before it.
    Progressive,
    /// Length-`M` patterns over the sampled nodes only.
    Sampled,
    /// Full adjacency columns for every node.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelScaling {
    /// Divide labels by the root-mean-square of the training labels.
    Rms,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Gradraker,
    Kl,
    Knn,
    GkDf,
    GkBl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gradraker => "gradraker",
            Method::Kl => "kl",
            Method::Knn => "knn",
            Method::GkDf => "gk-df",
            Method::GkBl => "gk-bl",
        }
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "gradraker" => Ok(Method::Gradraker),
            "kl" => Ok(Method::Kl),
            "knn" => Ok(Method::Knn),
            "gk-df" => Ok(Method::GkDf),
            "gk-bl" => Ok(Method::GkBl),
            other => Err(err(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // Graph source.
    pub n_nodes: usize,
    pub edge_prob: f64,
    pub edge_list: Option<String>,
    pub labels: Option<String>,
    pub directed: bool,
    pub weighted: bool,
    // Synthetic signal.
    pub scenario: Scenario,
    pub truth_bandwidth: f64,
    pub noise_var: f64,
    // Learner.
    pub kernels: Vec<KernelSpec>,
    pub d: usize,
    pub eta: f64,
    pub learner_eta: Option<f64>,
    pub loss: LossKind,
    pub mu_grid: Vec<f64>,
    pub cv_fraction: f64,
    // Protocol.
    pub sample_fraction: f64,
    pub sample_counts: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub kl_bandwidth: f64,
    pub gk_df_bandwidths: Vec<f64>,
    pub gk_bl_bands: Vec<usize>,
    pub normalize_patterns: bool,
    pub pattern_scope: PatternScope,
    pub label_scaling: LabelScaling,
    // Timing.
    pub timing_reps: usize,
    pub timing_trials: usize,
    // Regret runs.
    pub regret_horizon: usize,
    pub regret_eta: Option<f64>,
    pub regret_mu: f64,
    pub regret_fit_from: f64,
    // New-node runtime bench.
    pub newnode_sizes: Vec<usize>,
    pub newnode_batch: usize,
    pub newnode_methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_nodes: 1000,
            edge_prob: 0.2,
            edge_list: None,
            labels: None,
            directed: false,
            weighted: false,
            scenario: Scenario::Connectivity,
            truth_bandwidth: 5.0,
            noise_var: 0.01,
            kernels: vec![
                KernelSpec::gaussian(1.0).expect("positive"),
                KernelSpec::gaussian(5.0).expect("positive"),
            ],
            d: 10,
            eta: 0.5,
            learner_eta: None,
            loss: LossKind::LeastSquares,
            mu_grid: (-7..=0).map(|e| 10f64.powi(e)).collect(),
            cv_fraction: 0.2,
            sample_fraction: 0.05,
            sample_counts: Vec::new(),
            trials: 100,
            seed: 1,
            methods: vec![Method::Gradraker, Method::Kl, Method::Knn, Method::GkDf, Method::GkBl],
            kl_bandwidth: 5.0,
            gk_df_bandwidths: vec![1.0, 5.0],
            gk_bl_bands: vec![10],
            normalize_patterns: true,
            pattern_scope: PatternScope::Progressive,
            label_scaling: LabelScaling::Rms,
            timing_reps: 5,
            timing_trials: 1,
            regret_horizon: 2000,
            regret_eta: None,
            regret_mu: 1e-3,
            regret_fit_from: 0.1,
            newnode_sizes: vec![500, 1000, 2000],
            newnode_batch: 200,
            newnode_methods: vec![Method::Gradraker, Method::Kl, Method::Knn, Method::GkDf],
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(err(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn fmt_list<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// `family:bandwidth` pairs, e.g. `gaussian:1,gaussian:5`.
fn parse_kernels(v: &str) -> Result<Vec<KernelSpec>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (fam, bw) = item
                .split_once(':')
                .ok_or_else(|| err(format!("kernel `{item}` must look like family:bandwidth")))?;
            let family: KernelFamily = fam.parse().map_err(|e: gradraker::Error| err(e.to_string()))?;
            let bw: f64 = parse_num("kernels", bw)?;
            KernelSpec::new(family, bw).map_err(|e| err(e.to_string()))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", i + 1)))?;
            c.set(k.trim(), v.trim())
                .map_err(|e| err(format!("line {}: {}", i + 1, e.0)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "n_nodes" => self.n_nodes = parse_num(key, v)?,
            "edge_prob" => self.edge_prob = parse_num(key, v)?,
            "edge_list" => self.edge_list = Some(v.to_string()),
            "labels" => self.labels = Some(v.to_string()),
            "directed" => self.directed = parse_bool(key, v)?,
            "weighted" => self.weighted = parse_bool(key, v)?,
            "scenario" => {
                self.scenario = match v {
                    "diffusion" => Scenario::Diffusion,
                    "connectivity" => Scenario::Connectivity,
                    _ => return Err(err(format!("unknown scenario `{v}`"))),
                }
            }
            "truth_bandwidth" => self.truth_bandwidth = parse_num(key, v)?,
            "noise_var" => self.noise_var = parse_num(key, v)?,
            "kernels" => self.kernels = parse_kernels(v)?,
            "d" => self.d = parse_num(key, v)?,
            "eta" => self.eta = parse_num(key, v)?,
            "learner_eta" => self.learner_eta = Some(parse_num(key, v)?),
            "loss" => self.loss = v.parse().map_err(|e: gradraker::Error| err(e.to_string()))?,
            "mu_grid" => self.mu_grid = parse_list(key, v)?,
            "cv_fraction" => self.cv_fraction = parse_num(key, v)?,
            "sample_fraction" => self.sample_fraction = parse_num(key, v)?,
            "sample_counts" => self.sample_counts = parse_list(key, v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "methods" => self.methods = parse_list(key, v)?,
            "kl_bandwidth" => self.kl_bandwidth = parse_num(key, v)?,
            "gk_df_bandwidths" => self.gk_df_bandwidths = parse_list(key, v)?,
            "gk_bl_bands" => self.gk_bl_bands = parse_list(key, v)?,
            "normalize_patterns" => self.normalize_patterns = parse_bool(key, v)?,
            "pattern_scope" => {
                self.pattern_scope = match v {
                    "progressive" => PatternScope::Progressive,
                    "sampled" => PatternScope::Sampled,
                    "full" => PatternScope::Full,
                    _ => return Err(err(format!("unknown pattern_scope `{v}`"))),
                }
            }
            "label_scaling" => {
                self.label_scaling = match v {
                    "rms" => LabelScaling::Rms,
                    "none" => LabelScaling::None,
                    _ => return Err(err(format!("unknown label_scaling `{v}`"))),
                }
            }
            "timing_reps" => self.timing_reps = parse_num(key, v)?,
            "timing_trials" => self.timing_trials = parse_num(key, v)?,
            "regret_horizon" => self.regret_horizon = parse_num(key, v)?,
            "regret_eta" => self.regret_eta = Some(parse_num(key, v)?),
            "regret_mu" => self.regret_mu = parse_num(key, v)?,
            "regret_fit_from" => self.regret_fit_from = parse_num(key, v)?,
            "newnode_sizes" => self.newnode_sizes = parse_list(key, v)?,
            "newnode_batch" => self.newnode_batch = parse_num(key, v)?,
            "newnode_methods" => self.newnode_methods = parse_list(key, v)?,
            other => return Err(err(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(err("sample_fraction must lie in (0, 1]"));
        }
        if self.trials == 0 {
            return Err(err("trials must be at least 1"));
        }
        if self.mu_grid.is_empty() || self.mu_grid.iter().any(|m| !(*m >= 0.0)) {
            return Err(err("mu_grid must be a non-empty list of non-negative values"));
        }
        if self.kernels.is_empty() {
            return Err(err("kernels must list at least one kernel"));
        }
        if self.d == 0 {
            return Err(err("d must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(err("eta must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.cv_fraction) {
            return Err(err("cv_fraction must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(err("edge_prob must lie in [0, 1]"));
        }
        if self.n_nodes == 0 {
            return Err(err("n_nodes must be positive"));
        }
        if self.timing_reps == 0 {
            return Err(err("timing_reps must be at least 1"));
        }
        if self.noise_var < 0.0 {
            return Err(err("noise_var must be non-negative"));
        }
        Ok(())
    }

    /// Every setting as `key = value` lines in a fixed order.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let opt = |o: &Option<String>| o.clone().unwrap_or_default();
        let optf = |o: Option<f64>| o.map(|x| x.to_string()).unwrap_or_default();
        let kernels: Vec<String> = self
            .kernels
            .iter()
            .map(|k| format!("{}:{}", k.family.name(), k.bandwidth))
            .collect();
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let nn_methods: Vec<&str> = self.newnode_methods.iter().map(|m| m.name()).collect();
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("n_nodes", self.n_nodes.to_string());
        put("edge_prob", self.edge_prob.to_string());
        put("edge_list", opt(&self.edge_list));
        put("labels", opt(&self.labels));
        put("directed", self.directed.to_string());
        put("weighted", self.weighted.to_string());
        put(
            "scenario",
            match self.scenario {
                Scenario::Diffusion => "diffusion",
                Scenario::Connectivity => "connectivity",
            }
            .into(),
        );
        put("truth_bandwidth", self.truth_bandwidth.to_string());
        put("noise_var", self.noise_var.to_string());
        put("kernels", kernels.join(","));
        put("d", self.d.to_string());
        put("eta", self.eta.to_string());
        put("learner_eta", optf(self.learner_eta));
        put("loss", self.loss.name().into());
        put("mu_grid", fmt_list(&self.mu_grid));
        put("cv_fraction", self.cv_fraction.to_string());
        put("sample_fraction", self.sample_fraction.to_string());
        put("sample_counts", fmt_list(&self.sample_counts));
        put("trials", self.trials.to_string());
        put("seed", self.seed.to_string());
        put("methods", methods.join(","));
        put("kl_bandwidth", self.kl_bandwidth.to_string());
        put("gk_df_bandwidths", fmt_list(&self.gk_df_bandwidths));
        put("gk_bl_bands", fmt_list(&self.gk_bl_bands));
        put("normalize_patterns", self.normalize_patterns.to_string());
        put(
            "pattern_scope",
            match self.pattern_scope {
                PatternScope::Progressive => "progressive",
                PatternScope::Sampled => "sampled",
                PatternScope::Full => "full",
            }
            .into(),
        );
        put(
            "label_scaling",
            match self.label_scaling {
                LabelScaling::Rms => "rms",
                LabelScaling::None => "none",
            }
            .into(),
        );
        put("timing_reps", self.timing_reps.to_string());
        put("timing_trials", self.timing_trials.to_string());
        put("regret_horizon", self.regret_horizon.to_string());
        put("regret_eta", optf(self.regret_eta));
        put("regret_mu", self.regret_mu.to_string());
        put("regret_fit_from", self.regret_fit_from.to_string());
        put("newnode_sizes", fmt_list(&self.newnode_sizes));
        put("newnode_batch", self.newnode_batch.to_string());
        put("newnode_methods", nn_methods.join(","));
        m
    }

    /// FNV-1a hash of the echoed configuration.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in self.echo() {
            for b in k.bytes().chain(std::iter::once(b'=')).chain(v.bytes()).chain(std::iter::once(b'\n')) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}
