//! Losses and the single-kernel online learner: constant-step online
//! gradient descent on `θ` in the random-feature space.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, invalid, Error, Result};
use crate::features::{dot, RfMap, RfVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(p - y)²`
    LeastSquares,
    /// `max(0, 1 - y p)`, labels in {-1, +1}
    Hinge,
    /// `ln(1 + exp(-y p))`, labels in {-1, +1}; `P(y = 1) = 1 / (1 + e^{-p})`
    Logistic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::LeastSquares => "least_squares",
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "least_squares" | "ls" => Ok(LossKind::LeastSquares),
            "hinge" => Ok(LossKind::Hinge),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(invalid("loss", format!("unknown loss `{other}`"))),
        }
    }
}

/// A data-fit term plus the ridge penalty `mu ‖θ‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub kind: LossKind,
    pub mu: f64,
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-x})` without overflow.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Loss {
    pub fn new(kind: LossKind, mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(invalid("mu", format!("must be finite and non-negative, got {mu}")));
        }
        Ok(Loss { kind, mu })
    }

    pub fn least_squares(mu: f64) -> Self {
        Loss {
            kind: LossKind::LeastSquares,
            mu,
        }
    }

    fn check_label(&self, label: f64) -> Result<()> {
        match self.kind {
            LossKind::LeastSquares if label.is_finite() => Ok(()),
            LossKind::LeastSquares => Err(Error::NonFinite("label")),
            _ if label == 1.0 || label == -1.0 => Ok(()),
            _ => Err(Error::InvalidLabel(label)),
        }
    }

    /// Data-fit term only.
    pub fn data_term(&self, prediction: f64, label: f64) -> Result<f64> {
        self.check_label(label)?;
        Ok(match self.kind {
            LossKind::LeastSquares => (prediction - label).powi(2),
            LossKind::Hinge => (1.0 - label * prediction).max(0.0),
            LossKind::Logistic => softplus(-label * prediction),
        })
    }

    /// `C(prediction, label) + mu · theta_norm2`.
    pub fn value(&self, prediction: f64, label: f64, theta_norm2: f64) -> Result<f64> {
        Ok(self.data_term(prediction, label)? + self.mu * theta_norm2)
    }

    /// Derivative of the data term with respect to the prediction.
    fn slope(&self, prediction: f64, label: f64) -> f64 {
        match self.kind {
            LossKind::LeastSquares => 2.0 * (prediction - label),
            // Subgradient 0 at the hinge point.
            LossKind::Hinge => {
                if label * prediction < 1.0 {
                    -label
                } else {
                    0.0
                }
            }
            LossKind::Logistic => -label * sigmoid(-label * prediction),
        }
    }

    /// Gradient with respect to `θ` of `C(θᵀz, y) + mu ‖θ‖²`.
    pub fn grad(&self, z: &[f64], theta: &[f64], label: f64) -> Result<Vec<f64>> {
        check_len(theta.len(), z.len())?;
        self.check_label(label)?;
        let s = self.slope(dot(theta, z), label);
        Ok(z.iter()
            .zip(theta)
            .map(|(zi, ti)| s * zi + 2.0 * self.mu * ti)
            .collect())
    }
}

pub fn loss_value(loss: &Loss, prediction: f64, label: f64, theta_norm2: f64) -> Result<f64> {
    loss.value(prediction, label, theta_norm2)
}

pub fn loss_grad(loss: &Loss, z: &[f64], theta: &[f64], label: f64) -> Result<Vec<f64>> {
    loss.grad(z, theta, label)
}

/// The value fed to multiplicative weight updates: the loss clipped to
/// `[0, 1]`.
pub fn clipped(loss: f64) -> f64 {
    loss.clamp(0.0, 1.0)
}

/// One kernel's learner: `f(a) = θᵀ z(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleKernelState {
    pub theta: Vec<f64>,
    pub eta: f64,
    pub loss: Loss,
    /// Seed of the [`RfMap`] this state was trained against.
    pub map_id: u64,
}

impl SingleKernelState {
    pub fn new(map: &RfMap, eta: f64, loss: Loss) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(invalid("eta", format!("must be finite and non-negative, got {eta}")));
        }
        Ok(SingleKernelState {
            theta: vec![0.0; map.output_dim()],
            eta,
            loss,
            map_id: map.seed(),
        })
    }

    pub fn theta_norm2(&self) -> f64 {
        dot(&self.theta, &self.theta)
    }

    pub fn predict_encoded(&self, z: &RfVector) -> Result<f64> {
        check_len(self.theta.len(), z.len())?;
        Ok(z.dot(&self.theta))
    }

    /// `θᵀ z(a)`; the same path serves unsampled and newly-joining nodes.
    pub fn predict(&self, map: &RfMap, pattern: &[f64]) -> Result<f64> {
        self.predict_encoded(&map.encode(pattern)?)
    }

    /// Loss of the current iterate on `(z, label)`.
    pub fn loss_at(&self, z: &RfVector, label: f64) -> Result<f64> {
        let p = self.predict_encoded(z)?;
        self.loss.value(p, label, self.theta_norm2())
    }

    /// `θ ← θ - η ∇L(θᵀz, y)`.
    pub fn ogd_step(&mut self, z: &RfVector, label: f64) -> Result<()> {
        self.ogd_step_with_norm(z, label).map(|_| ())
    }

    /// As [`Self::ogd_step`], returning `‖∇L‖` at the pre-update iterate.
    pub fn ogd_step_with_norm(&mut self, z: &RfVector, label: f64) -> Result<f64> {
        let g = self.loss.grad(z.as_slice(), &self.theta, label)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= self.eta * gi);
        Ok(dot(&g, &g).sqrt())
    }

    /// Sequential pass over encoded samples. Returns the loss incurred at
    /// each step, measured before that step's update.
    pub fn train_encoded(&mut self, samples: &[(RfVector, f64)]) -> Result<Vec<f64>> {
        let mut trace = Vec::with_capacity(samples.len());
        for (z, y) in samples {
            trace.push(self.loss_at(z, *y)?);
            self.ogd_step(z, *y)?;
        }
        Ok(trace)
    }

    /// Encode each `(pattern, label)` with `map` and train on it in order.
    pub fn train_stream(&mut self, map: &RfMap, samples: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
        let encoded = samples
            .iter()
            .map(|(a, y)| Ok((map.encode(a)?, *y)))
            .collect::<Result<Vec<_>>>()?;
        self.train_encoded(&encoded)
    }

    /// Predict a newly-joining node and, when its label is known, take one
    /// more gradient step on it.
    pub fn absorb_new_node(&mut self, map: &RfMap, pattern: &[f64], label: Option<f64>) -> Result<f64> {
        let z = map.encode(pattern)?;
        let p = self.predict_encoded(&z)?;
        if let Some(y) = label {
            self.ogd_step(&z, y)?;
        }
        Ok(p)
    }

    /// Line-oriented text checkpoint; floats use shortest round-trip
    /// formatting, so parsing it back is exact.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::from("gradraker-learner v1\n");
        s += &format!("map_id {}\n", self.map_id);
        s += &format!("loss {}\n", self.loss.kind);
        s += &format!("mu {:?}\n", self.loss.mu);
        s += &format!("eta {:?}\n", self.eta);
        s += &format!("theta {}\n", self.theta.len());
        for t in &self.theta {
            s += &format!("{t:?}\n");
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let fmt_err = |m: &str| Error::Format(m.to_string());
        if lines.next() != Some("gradraker-learner v1") {
            return Err(fmt_err("missing learner header"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| fmt_err("truncated checkpoint"))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("expected `{key}`")))
        };
        let parse_f = |s: String| s.parse::<f64>().map_err(|_| Error::Format(format!("bad float `{s}`")));
        let map_id = field("map_id")?
            .parse::<u64>()
            .map_err(|_| fmt_err("bad map_id"))?;
        let kind: LossKind = field("loss")?.parse()?;
        let mu = parse_f(field("mu")?)?;
        let eta = parse_f(field("eta")?)?;
        let len = field("theta")?
            .parse::<usize>()
            .map_err(|_| fmt_err("bad theta length"))?;
        let theta = (0..len)
            .map(|_| {
                let l = lines.next().ok_or_else(|| fmt_err("truncated theta"))?;
                parse_f(l.to_string())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SingleKernelState {
            theta,
            eta,
            loss: Loss::new(kind, mu)?,
            map_id,
        })
    }
}
