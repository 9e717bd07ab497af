use std::fmt::Write as _;
use std::str::FromStr;

use log::info;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::data::{generate_dataset, SyntheticTask, Utterance};
use super::decode::{decode_nbest, greedy_decode};
use super::model::{train, FrameModel, TrainConfig};
use crate::alphabet::{Alphabet, Symbol};
use crate::error::{Error, ParseError};
use crate::graph::{ctc_linear_graph, GtcGraph};
use crate::pipeline::{build_supervision_graph, graph_oracle_ler, NBestList, PipelineConfig};

const DEFAULT_CONFIG: &str = include_str!("../../config/default_experiment.conf");

/// Everything that defines one self-training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: SyntheticTask,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub hidden: usize,
    pub stride: usize,
    pub context: usize,
    pub seed_train: TrainConfig,
    pub train: TrainConfig,
    /// Start every self-training run from the seed model's weights.
    pub init_from_seed: bool,
    pub nbest: usize,
    pub beam: usize,
    pub mu: f64,
    pub eta_low: f64,
    pub eta_high: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::builtin()
            .overridden(DEFAULT_CONFIG, "default_experiment.conf")
            .expect("bundled config parses")
    }
}

fn field<T: FromStr>(value: &str, key: &str, line: usize, source: &str) -> Result<T, ParseError> {
    value
        .parse()
        .map_err(|_| ParseError::new(source, line, format!("bad value {value:?} for {key}")))
}

impl ExperimentConfig {
    /// Flat `key = value` lines; `#` starts a comment. Keys not given keep
    /// their built-in defaults, so a file may override only a few.
    pub fn parse(text: &str, source: &str) -> Result<Self, ParseError> {
        Self::default().overridden(text, source)
    }

    fn overridden(mut self, text: &str, source: &str) -> Result<Self, ParseError> {
        let c = &mut self;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                ParseError::new(source, line, format!("expected key = value, got {content:?}"))
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "seed" => c.seed = field(v, key, line, source)?,
                "num_labels" => c.task.num_labels = field(v, key, line, source)?,
                "min_label_len" => c.task.min_label_len = field(v, key, line, source)?,
                "max_label_len" => c.task.max_label_len = field(v, key, line, source)?,
                "min_duration" => c.task.min_duration = field(v, key, line, source)?,
                "max_duration" => c.task.max_duration = field(v, key, line, source)?,
                "noise" => c.task.noise = field(v, key, line, source)?,
                "labeled" => c.labeled = field(v, key, line, source)?,
                "unlabeled" => c.unlabeled = field(v, key, line, source)?,
                "test" => c.test = field(v, key, line, source)?,
                "hidden" => c.hidden = field(v, key, line, source)?,
                "stride" => c.stride = field(v, key, line, source)?,
                "context" => c.context = field(v, key, line, source)?,
                "seed_epochs" => c.seed_train.epochs = field(v, key, line, source)?,
                "seed_learning_rate" => c.seed_train.learning_rate = field(v, key, line, source)?,
                "epochs" => c.train.epochs = field(v, key, line, source)?,
                "learning_rate" => c.train.learning_rate = field(v, key, line, source)?,
                "batch_size" => {
                    let b = field(v, key, line, source)?;
                    c.seed_train.batch_size = b;
                    c.train.batch_size = b;
                }
                "clip_norm" => {
                    let n = field(v, key, line, source)?;
                    c.seed_train.clip_norm = n;
                    c.train.clip_norm = n;
                }
                "init_from_seed" => c.init_from_seed = field(v, key, line, source)?,
                "nbest" => c.nbest = field(v, key, line, source)?,
                "beam" => c.beam = field(v, key, line, source)?,
                "mu" => c.mu = field(v, key, line, source)?,
                "eta_low" => c.eta_low = field(v, key, line, source)?,
                "eta_high" => c.eta_high = field(v, key, line, source)?,
                _ => return Err(ParseError::new(source, line, format!("unknown key {key}"))),
            }
        }
        Ok(self)
    }

    /// Fallback values underneath the bundled file.
    fn builtin() -> Self {
        ExperimentConfig {
            seed: 1,
            task: SyntheticTask {
                num_labels: 8,
                min_label_len: 5,
                max_label_len: 10,
                min_duration: 4,
                max_duration: 6,
                noise: 0.6,
            },
            labeled: 200,
            unlabeled: 800,
            test: 500,
            hidden: 64,
            stride: 1,
            context: 2,
            seed_train: TrainConfig::default(),
            train: TrainConfig::default(),
            init_from_seed: false,
            nbest: 20,
            beam: 32,
            mu: 0.6,
            eta_low: 0.02,
            eta_high: 0.05,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.task;
        let kv: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("num_labels", t.num_labels.to_string()),
            ("min_label_len", t.min_label_len.to_string()),
            ("max_label_len", t.max_label_len.to_string()),
            ("min_duration", t.min_duration.to_string()),
            ("max_duration", t.max_duration.to_string()),
            ("noise", t.noise.to_string()),
            ("labeled", self.labeled.to_string()),
            ("unlabeled", self.unlabeled.to_string()),
            ("test", self.test.to_string()),
            ("hidden", self.hidden.to_string()),
            ("stride", self.stride.to_string()),
            ("context", self.context.to_string()),
            ("seed_epochs", self.seed_train.epochs.to_string()),
            ("seed_learning_rate", self.seed_train.learning_rate.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("clip_norm", self.train.clip_norm.to_string()),
            ("init_from_seed", self.init_from_seed.to_string()),
            ("nbest", self.nbest.to_string()),
            ("beam", self.beam.to_string()),
            ("mu", self.mu.to_string()),
            ("eta_low", self.eta_low.to_string()),
            ("eta_high", self.eta_high.to_string()),
        ];
        for (k, v) in kv {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.task.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.labeled == 0 || self.unlabeled == 0 || self.test == 0 {
            return bad("labeled, unlabeled and test sizes must be at least 1");
        }
        if self.hidden == 0 || self.stride == 0 {
            return bad("hidden and stride must be at least 1");
        }
        if self.nbest == 0 || self.beam < self.nbest {
            return bad("need 1 <= nbest <= beam");
        }
        if self.train.batch_size == 0 || self.seed_train.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        for eta in [self.eta_low, self.eta_high] {
            PipelineConfig::with_eta(eta).validate()?;
        }
        PipelineConfig {
            mu: self.mu,
            ..Default::default()
        }
        .validate()?;
        Ok(())
    }
}

/// Where a condition's supervision for the unlabeled split comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Supervision {
    /// No retraining; the seed model itself.
    Seed,
    OneBest,
    ConfusionNetwork {
        unit_weights: bool,
        eta: f64,
    },
    /// Per utterance, the N-best entry closest to the truth.
    OracleNBest,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub supervision: Supervision,
}

/// The conditions of one run, in report order.
pub fn conditions(cfg: &ExperimentConfig) -> Vec<Condition> {
    let mut out = vec![
        Condition {
            name: "seed".into(),
            supervision: Supervision::Seed,
        },
        Condition {
            name: "1best".into(),
            supervision: Supervision::OneBest,
        },
    ];
    for (level, eta) in [("none", 0.0), ("low", cfg.eta_low), ("high", cfg.eta_high)] {
        for (w, unit) in [("unit", true), ("prob", false)] {
            out.push(Condition {
                name: format!("cn-{w}-{level}"),
                supervision: Supervision::ConfusionNetwork {
                    unit_weights: unit,
                    eta,
                },
            });
        }
    }
    out.push(Condition {
        name: format!("oracle-{}best", cfg.nbest),
        supervision: Supervision::OracleNBest,
    });
    out.push(Condition {
        name: "ground-truth".into(),
        supervision: Supervision::GroundTruth,
    });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub name: String,
    pub test_ler: f64,
    /// Best error rate reachable inside the supervision on the unlabeled split.
    pub oracle_ler: Option<f64>,
    /// Mean label nodes per reference label of the supervision graphs.
    pub density: Option<f64>,
    /// Unlabeled utterances dropped for want of a usable graph.
    pub unusable: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub rows: Vec<ConditionResult>,
}

impl Report {
    pub fn get(&self, name: &str) -> Option<&ConditionResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn test_ler(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |r| r.test_ler)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("seed\tcondition\ttest_ler\toracle_ler\tdensity\tunusable\n");
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            writeln!(
                s,
                "{}\t{}\t{:.4}\t{}\t{}\t{}",
                self.seed,
                r.name,
                r.test_ler,
                opt(r.oracle_ler),
                opt(r.density),
                r.unusable
            )
            .unwrap();
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("seed {}\n", self.seed);
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        for r in &self.rows {
            let extra = match (r.oracle_ler, r.density) {
                (Some(o), Some(d)) => format!("  oracle {:5.2}%  density {d:.3}", 100.0 * o),
                (Some(o), None) => format!("  oracle {:5.2}%", 100.0 * o),
                _ => String::new(),
            };
            writeln!(
                s,
                "  {:width$}  test LER {:5.2}%{extra}",
                r.name,
                100.0 * r.test_ler
            )
            .unwrap();
        }
        s
    }
}

fn edit_distance(a: &[Symbol], b: &[Symbol]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Corpus-level error rate of greedy transcripts.
pub fn evaluate(model: &FrameModel, data: &[Utterance]) -> f64 {
    let errs: usize = data
        .par_iter()
        .map(|u| edit_distance(&greedy_decode(&model.posteriors(&u.features)), &u.labels))
        .sum();
    let total: usize = data.iter().map(|u| u.labels.len()).sum();
    errs as f64 / total as f64
}

struct Supervised {
    graphs: Vec<Option<GtcGraph>>,
    oracle_ler: Option<f64>,
    density: Option<f64>,
}

fn linear(labels: &[Symbol], alphabet: &Alphabet) -> Option<GtcGraph> {
    ctc_linear_graph(labels, alphabet).ok()
}

fn supervise(
    sup: Supervision,
    cfg: &ExperimentConfig,
    alphabet: &Alphabet,
    unlabeled: &[Utterance],
    nbests: &[NBestList],
) -> Supervised {
    let total_ref: usize = unlabeled.iter().map(|u| u.labels.len()).sum();
    let rate = |d: usize| Some(d as f64 / total_ref as f64);
    let pick = |choose: &dyn Fn(&NBestList, &Utterance) -> Vec<Symbol>| -> Supervised {
        let picks: Vec<Vec<Symbol>> = nbests.iter().zip(unlabeled).map(|(n, u)| choose(n, u)).collect();
        let dist: usize = picks
            .iter()
            .zip(unlabeled)
            .map(|(p, u)| edit_distance(p, &u.labels))
            .sum();
        let dens = picks
            .iter()
            .zip(unlabeled)
            .map(|(p, u)| p.len() as f64 / u.labels.len() as f64)
            .sum::<f64>()
            / unlabeled.len() as f64;
        Supervised {
            graphs: picks.iter().map(|p| linear(p, alphabet)).collect(),
            oracle_ler: rate(dist),
            density: Some(dens),
        }
    };
    match sup {
        Supervision::Seed => Supervised {
            graphs: Vec::new(),
            oracle_ler: None,
            density: None,
        },
        Supervision::OneBest => pick(&|n, _| n.hyps.first().map(|h| h.tokens.clone()).unwrap_or_default()),
        Supervision::OracleNBest => pick(&|n, u| {
            n.hyps
                .iter()
                .min_by_key(|h| edit_distance(&h.tokens, &u.labels))
                .map(|h| h.tokens.clone())
                .unwrap_or_default()
        }),
        Supervision::GroundTruth => pick(&|_, u| u.labels.clone()),
        Supervision::ConfusionNetwork { unit_weights, eta } => {
            let pc = PipelineConfig {
                mu: cfg.mu,
                eta,
                unit_weights,
                ..Default::default()
            };
            // the truth is read only for the oracle and density columns
            let built: Vec<(Option<GtcGraph>, f64, f64)> = nbests
                .par_iter()
                .zip(unlabeled)
                .map(|(n, u)| {
                    if n.hyps.is_empty() {
                        return (None, u.labels.len() as f64, 0.0);
                    }
                    match build_supervision_graph(n, alphabet, &pc) {
                        Ok(g) => {
                            let ler = graph_oracle_ler(&g, &u.labels).unwrap_or(1.0);
                            let d = g.density(u.labels.len()).unwrap_or(0.0);
                            (Some(g), ler * u.labels.len() as f64, d)
                        }
                        Err(_) => (None, u.labels.len() as f64, 0.0),
                    }
                })
                .collect();
            let dist: f64 = built.iter().map(|b| b.1).sum();
            let dens = built.iter().map(|b| b.2).sum::<f64>() / built.len() as f64;
            Supervised {
                graphs: built.into_iter().map(|b| b.0).collect(),
                oracle_ler: Some(dist / total_ref as f64),
                density: Some(dens),
            }
        }
    }
}

/// Trains a seed model on the labeled split, pseudo-labels the unlabeled
/// split with its N-best lists, and retrains one model per condition on
/// labeled plus pseudo-labeled data.
pub fn self_train_experiment(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    let alphabet = Alphabet::numbered(cfg.task.num_labels);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labeled = generate_dataset(&cfg.task, cfg.labeled, "lab", &mut data_rng)?;
    let unlabeled = generate_dataset(&cfg.task, cfg.unlabeled, "unl", &mut data_rng)?;
    let test = generate_dataset(&cfg.task, cfg.test, "tst", &mut data_rng)?;

    let model_seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
    let fresh = |rng: &mut ChaCha8Rng| {
        FrameModel::new(
            cfg.task.num_labels,
            cfg.hidden,
            alphabet.len(),
            cfg.stride,
            cfg.context,
            rng,
        )
    };
    let labeled_graphs: Vec<GtcGraph> = labeled
        .iter()
        .map(|u| ctc_linear_graph(&u.labels, &alphabet))
        .collect::<Result<_, _>>()?;
    let labeled_examples: Vec<(&Array2<f64>, &GtcGraph)> = labeled
        .iter()
        .zip(&labeled_graphs)
        .map(|(u, g)| (&u.features, g))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(model_seed);
    let mut seed_model = fresh(&mut rng);
    train(&mut seed_model, &labeled_examples, &cfg.seed_train, &mut rng);
    info!("seed model trained");

    let nbests: Vec<NBestList> = unlabeled
        .par_iter()
        .map(|u| decode_nbest(&seed_model, &u.id, &u.features, cfg.nbest, cfg.beam))
        .collect();

    let conds = conditions(cfg);
    let rows: Vec<ConditionResult> = conds
        .par_iter()
        .map(|c| {
            let sup = supervise(c.supervision, cfg, &alphabet, &unlabeled, &nbests);
            let unusable = sup.graphs.iter().filter(|g| g.is_none()).count();
            let test_ler = if c.supervision == Supervision::Seed {
                evaluate(&seed_model, &test)
            } else {
                let mut examples = labeled_examples.clone();
                for (u, g) in unlabeled.iter().zip(&sup.graphs) {
                    if let Some(g) = g {
                        examples.push((&u.features, g));
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(model_seed.wrapping_add(1));
                let mut model = if cfg.init_from_seed {
                    seed_model.clone()
                } else {
                    fresh(&mut rng)
                };
                train(&mut model, &examples, &cfg.train, &mut rng);
                evaluate(&model, &test)
            };
            info!("{}: test LER {:.4}", c.name, test_ler);
            ConditionResult {
                name: c.name.clone(),
                test_ler,
                oracle_ler: sup.oracle_ler,
                density: sup.density,
                unusable,
            }
        })
        .collect();
    Ok(Report { seed: cfg.seed, rows })
}
