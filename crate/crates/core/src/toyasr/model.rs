use log::{debug, warn};
use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::graph::GtcGraph;
use crate::loss::{loss, loss_and_gradient};
use crate::posterior::{LogitMatrix, PosteriorMatrix};

/// Weights of the two-layer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `H x D_in`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `K x H`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Params {
    fn zeros_like(other: &Params) -> Params {
        Params {
            w1: Array2::zeros(other.w1.dim()),
            b1: Array1::zeros(other.b1.dim()),
            w2: Array2::zeros(other.w2.dim()),
            b2: Array1::zeros(other.b2.dim()),
        }
    }

    fn add_scaled(&mut self, other: &Params, scale: f64) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
    }

    pub fn norm(&self) -> f64 {
        let sq = |a: f64, v: &f64| a + v * v;
        (self.w1.fold(0.0, sq) + self.b1.fold(0.0, sq) + self.w2.fold(0.0, sq) + self.b2.fold(0.0, sq)).sqrt()
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

/// Frame classifier: stacked input frames → tanh hidden layer → logits over
/// blank plus labels.
///
/// Output frame `t` sees input frames `t*stride - context ..
/// t*stride + stride + context`, zero-padded at the edges, so
/// `T = ceil(T' / stride)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameModel {
    pub params: Params,
    pub feature_dim: usize,
    pub stride: usize,
    pub context: usize,
}

struct Activations {
    x: Array2<f64>,
    h: Array2<f64>,
    u: Array2<f64>,
}

impl FrameModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng>(
        feature_dim: usize,
        hidden: usize,
        num_symbols: usize,
        stride: usize,
        context: usize,
        rng: &mut R,
    ) -> FrameModel {
        assert!(stride >= 1 && feature_dim >= 1 && hidden >= 1 && num_symbols >= 2);
        let d_in = feature_dim * (stride + 2 * context);
        let mut init = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
        };
        let w1 = init(hidden, d_in);
        let w2 = init(num_symbols, hidden);
        FrameModel {
            params: Params {
                w1,
                b1: Array1::zeros(hidden),
                w2,
                b2: Array1::zeros(num_symbols),
            },
            feature_dim,
            stride,
            context,
        }
    }

    pub fn num_symbols(&self) -> usize {
        self.params.b2.len()
    }

    pub fn output_frames(&self, input_frames: usize) -> usize {
        input_frames.div_ceil(self.stride)
    }

    fn stack(&self, features: &Array2<f64>) -> Array2<f64> {
        assert_eq!(features.ncols(), self.feature_dim, "feature dimension");
        let t_in = features.nrows() as isize;
        let t_out = self.output_frames(features.nrows());
        let width = self.stride + 2 * self.context;
        let d = self.feature_dim;
        let mut x = Array2::zeros((t_out, d * width));
        for t in 0..t_out {
            let first = (t * self.stride) as isize - self.context as isize;
            for w in 0..width {
                let src = first + w as isize;
                if (0..t_in).contains(&src) {
                    x.slice_mut(s![t, w * d..(w + 1) * d])
                        .assign(&features.row(src as usize));
                }
            }
        }
        x
    }

    fn activations(&self, features: &Array2<f64>) -> Activations {
        let x = self.stack(features);
        let p = &self.params;
        let mut h = x.dot(&p.w1.t());
        h += &p.b1;
        h.mapv_inplace(f64::tanh);
        let mut u = h.dot(&p.w2.t());
        u += &p.b2;
        Activations { x, h, u }
    }

    pub fn logits(&self, features: &Array2<f64>) -> LogitMatrix {
        LogitMatrix::new(self.activations(features).u).expect("finite logits")
    }

    pub fn posteriors(&self, features: &Array2<f64>) -> PosteriorMatrix {
        self.logits(features).softmax()
    }

    fn backprop(&self, act: &Activations, du: &Array2<f64>) -> Params {
        let p = &self.params;
        let dw2 = du.t().dot(&act.h);
        let db2 = du.sum_axis(Axis(0));
        let mut da = du.dot(&p.w2);
        da.zip_mut_with(&act.h, |g, &h| *g *= 1.0 - h * h);
        let dw1 = da.t().dot(&act.x);
        let db1 = da.sum_axis(Axis(0));
        Params {
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
        }
    }

    /// GTC loss of one utterance and its parameter gradient; `None` when
    /// the graph has no path of the output length.
    pub fn loss_and_param_grad(&self, features: &Array2<f64>, graph: &GtcGraph) -> Option<(f64, Params)> {
        let act = self.activations(features);
        let post = LogitMatrix::new(act.u.clone()).ok()?.softmax();
        let lg = loss_and_gradient(graph, &post).ok()?;
        Some((lg.loss, self.backprop(&act, &lg.grad)))
    }

    /// GTC loss only; `+inf` when infeasible.
    pub fn loss(&self, features: &Array2<f64>, graph: &GtcGraph) -> f64 {
        loss(graph, &self.posteriors(features)).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Evaluate the full-data loss after every epoch.
    pub track_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            learning_rate: 0.1,
            batch_size: 16,
            clip_norm: 5.0,
            track_loss: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainStats {
    /// Mean feasible-utterance loss before training and after each epoch,
    /// when tracked.
    pub epoch_losses: Vec<f64>,
    /// Infeasible (utterance, graph) pairs, counted once per epoch.
    pub skipped: usize,
}

/// One training example: input features and its supervision graph.
pub type Example<'a> = (&'a Array2<f64>, &'a GtcGraph);

/// Mean loss over the feasible examples.
pub fn mean_loss(model: &FrameModel, data: &[Example<'_>]) -> f64 {
    let losses: Vec<f64> = data.par_iter().map(|(x, g)| model.loss(x, g)).collect();
    let finite: Vec<f64> = losses.into_iter().filter(|l| l.is_finite()).collect();
    finite.iter().sum::<f64>() / finite.len().max(1) as f64
}

/// Mini-batch SGD on the mean per-utterance GTC loss.
///
/// Per-utterance gradients are computed in parallel and summed in example
/// order, so results do not depend on the thread count.
pub fn train<R: Rng>(
    model: &mut FrameModel,
    data: &[Example<'_>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> TrainStats {
    let mut stats = TrainStats::default();
    if cfg.track_loss {
        stats.epoch_losses.push(mean_loss(model, data));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let results: Vec<Option<(f64, Params)>> = batch
                .par_iter()
                .map(|&i| model.loss_and_param_grad(data[i].0, data[i].1))
                .collect();
            let mut total = Params::zeros_like(&model.params);
            let mut used = 0usize;
            for r in results {
                match r {
                    Some((_, g)) => {
                        total.add_scaled(&g, 1.0);
                        used += 1;
                    }
                    None => stats.skipped += 1,
                }
            }
            if used == 0 {
                continue;
            }
            let mut scale = 1.0 / used as f64;
            let norm = total.norm() * scale;
            if norm > cfg.clip_norm {
                scale *= cfg.clip_norm / norm;
            }
            model.params.add_scaled(&total, -cfg.learning_rate * scale);
        }
        if cfg.track_loss {
            let l = mean_loss(model, data);
            debug!("epoch {epoch}: loss {l:.4}");
            stats.epoch_losses.push(l);
        }
    }
    if stats.skipped > 0 {
        warn!("skipped {} infeasible utterance/graph pairs", stats.skipped);
    }
    stats
}
