use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::alphabet::Symbol;
use crate::error::Error;

/// Generator settings for the synthetic frame-classification task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    /// Non-blank labels; features have this many dimensions.
    pub num_labels: usize,
    pub min_label_len: usize,
    pub max_label_len: usize,
    /// Frames per label, inclusive range.
    pub min_duration: usize,
    pub max_duration: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_labels < 2 {
            return bad("num_labels must be at least 2");
        }
        if self.min_label_len == 0 || self.min_label_len > self.max_label_len {
            return bad("label length range must satisfy 1 <= min <= max");
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            return bad("duration range must satisfy 1 <= min <= max");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be finite and >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `T' x num_labels`.
    pub features: Array2<f64>,
    pub labels: Vec<Symbol>,
    /// Generating label of every frame.
    pub alignment: Vec<Symbol>,
}

/// `n` utterances. Adjacent labels always differ, so each label's run of
/// frames is recoverable from the features alone.
pub fn generate_dataset<R: Rng>(
    task: &SyntheticTask,
    n: usize,
    prefix: &str,
    rng: &mut R,
) -> Result<Vec<Utterance>, Error> {
    task.validate()?;
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let normal = Normal::new(0.0, task.noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let k = task.num_labels as Symbol;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let len = rng.random_range(task.min_label_len..=task.max_label_len);
        let mut labels: Vec<Symbol> = Vec::with_capacity(len);
        while labels.len() < len {
            let l = rng.random_range(1..=k);
            if labels.last() != Some(&l) {
                labels.push(l);
            }
        }
        let mut alignment = Vec::new();
        for &l in &labels {
            let d = rng.random_range(task.min_duration..=task.max_duration);
            alignment.extend(std::iter::repeat_n(l, d));
        }
        let mut features = Array2::zeros((alignment.len(), task.num_labels));
        for (t, &l) in alignment.iter().enumerate() {
            for d in 0..task.num_labels {
                let onehot = if d + 1 == l as usize { 1.0 } else { 0.0 };
                let eps = if task.noise > 0.0 { normal.sample(rng) } else { 0.0 };
                features[[t, d]] = onehot + eps;
            }
        }
        out.push(Utterance {
            id: format!("{prefix}{i:05}"),
            features,
            labels,
            alignment,
        });
    }
    Ok(out)
}
