//! Error metrics and small statistics helpers.

/// `(1/|S^c|) ‖x̂ - x‖² / ‖x‖²` over the evaluated nodes. `None` when there
/// is nothing to evaluate or the reference is identically zero.
pub fn nmse(pred: &[f64], truth: &[f64]) -> Option<f64> {
    conventional_nmse(pred, truth).map(|v| v / truth.len() as f64)
}

/// `‖x̂ - x‖² / ‖x‖²` without the per-node factor.
pub fn conventional_nmse(pred: &[f64], truth: &[f64]) -> Option<f64> {
    assert_eq!(pred.len(), truth.len(), "prediction and truth lengths differ");
    let den: f64 = truth.iter().map(|x| x * x).sum();
    if truth.is_empty() || den == 0.0 {
        return None;
    }
    let num: f64 = pred.iter().zip(truth).map(|(p, x)| (p - x).powi(2)).sum();
    Some(num / den)
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation; zero for a single value.
pub fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Median wall-clock seconds of `reps` runs of `f`.
pub fn time_median<F: FnMut()>(reps: usize, mut f: F) -> f64 {
    let times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let start = std::time::Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    median(&times).unwrap_or(0.0)
}
