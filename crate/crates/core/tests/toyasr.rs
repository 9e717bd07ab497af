mod common;

use common::rng;
use gtc::alphabet::Alphabet;
use gtc::graph::{ctc_linear_graph, GtcGraph};
use gtc::oracle::relative_error;
use gtc::toyasr::*;
use ndarray::Array2;
use rand::Rng;

fn noise_free_task() -> SyntheticTask {
    SyntheticTask {
        noise: 0.0,
        ..ExperimentConfig::default().task
    }
}

fn linear_graphs(data: &[Utterance], alphabet: &Alphabet) -> Vec<GtcGraph> {
    data.iter()
        .map(|u| ctc_linear_graph(&u.labels, alphabet).unwrap())
        .collect()
}

#[test]
fn supervised_noise_free_training_reaches_low_ler() {
    let cfg = ExperimentConfig::default();
    let task = noise_free_task();
    let alphabet = Alphabet::numbered(task.num_labels);
    let mut r = rng(11);
    let train_set = generate_dataset(&task, cfg.labeled, "tr", &mut r).unwrap();
    let test_set = generate_dataset(&task, 200, "te", &mut r).unwrap();
    let graphs = linear_graphs(&train_set, &alphabet);
    let examples: Vec<Example> = train_set
        .iter()
        .zip(&graphs)
        .map(|(u, g)| (&u.features, g))
        .collect();
    let mut model = FrameModel::new(
        task.num_labels,
        cfg.hidden,
        alphabet.len(),
        cfg.stride,
        cfg.context,
        &mut r,
    );
    let before = evaluate(&model, &test_set);
    let tc = TrainConfig {
        track_loss: true,
        ..cfg.seed_train
    };
    let stats = train(&mut model, &examples, &tc, &mut r);
    let ler = evaluate(&model, &test_set);
    assert!(ler < 0.05, "test LER {ler} (untrained {before})");
    assert_eq!(stats.skipped, 0);
    // full-batch loss is non-increasing epoch to epoch
    let l = &stats.epoch_losses;
    assert_eq!(l.len(), tc.epochs + 1);
    for w in l.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "loss rose: {l:?}");
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let task = SyntheticTask {
        noise: 0.3,
        min_label_len: 2,
        max_label_len: 4,
        min_duration: 2,
        max_duration: 4,
        ..noise_free_task()
    };
    let alphabet = Alphabet::numbered(task.num_labels);
    let mut r = rng(12);
    let data = generate_dataset(&task, 2, "g", &mut r).unwrap();
    let graphs = linear_graphs(&data, &alphabet);
    let model = FrameModel::new(task.num_labels, 6, alphabet.len(), 2, 1, &mut r);

    let total = |m: &FrameModel| -> f64 {
        data.iter()
            .zip(&graphs)
            .map(|(u, g)| m.loss(&u.features, g))
            .sum()
    };
    let grads: Vec<Params> = data
        .iter()
        .zip(&graphs)
        .map(|(u, g)| model.loss_and_param_grad(&u.features, g).unwrap().1)
        .collect();
    let sum = |f: fn(&Params) -> &Array2<f64>| -> Array2<f64> {
        grads
            .iter()
            .map(f)
            .fold(Array2::zeros(f(&grads[0]).dim()), |a, b| a + b)
    };
    let gw1 = sum(|p| &p.w1);
    let gw2 = sum(|p| &p.w2);
    let gb1: ndarray::Array1<f64> = grads
        .iter()
        .map(|p| &p.b1)
        .fold(ndarray::Array1::zeros(6), |a, b| a + b);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = |set: &dyn Fn(&mut FrameModel, f64), analytic: f64| {
        let mut plus = model.clone();
        set(&mut plus, h);
        let mut minus = model.clone();
        set(&mut minus, -h);
        let fd = (total(&plus) - total(&minus)) / (2.0 * h);
        worst = worst.max(relative_error(analytic, fd, 1e-3));
    };
    for _ in 0..40 {
        let (i, j) = (r.random_range(0..gw1.nrows()), r.random_range(0..gw1.ncols()));
        probe(&|m, d| m.params.w1[[i, j]] += d, gw1[[i, j]]);
        let (i, j) = (r.random_range(0..gw2.nrows()), r.random_range(0..gw2.ncols()));
        probe(&|m, d| m.params.w2[[i, j]] += d, gw2[[i, j]]);
    }
    for i in 0..6 {
        probe(&|m, d| m.params.b1[i] += d, gb1[i]);
    }
    assert!(worst <= 1e-4, "max relative error {worst}");
}

fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::parse(
        "labeled = 20\nunlabeled = 30\ntest = 20\nhidden = 16\nseed_epochs = 2\nepochs = 2\nnbest = 5\nbeam = 8\n",
        "tiny",
    )
    .unwrap()
}

#[test]
fn report_is_deterministic_across_thread_counts() {
    let cfg = tiny_config();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| self_train_experiment(&cfg).unwrap());
    let parallel = self_train_experiment(&cfg).unwrap();
    assert_eq!(single.to_tsv(), parallel.to_tsv());
    assert_eq!(single.rows.len(), conditions(&cfg).len());
    assert!(single.rows.iter().all(|r| (0.0..=1.5).contains(&r.test_ler)));
}

#[test]
fn report_tsv_has_one_row_per_condition() {
    let report = self_train_experiment(&tiny_config()).unwrap();
    let tsv = report.to_tsv();
    let mut lines = tsv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed\tcondition\ttest_ler\toracle_ler\tdensity\tunusable"
    );
    assert_eq!(lines.count(), report.rows.len());
    assert!(report.get("seed").unwrap().oracle_ler.is_none());
    assert_eq!(report.get("ground-truth").unwrap().oracle_ler, Some(0.0));
    assert!(report.summary().contains("cn-prob-high"));
}

#[test]
fn nbest_scores_sorted_on_trained_model() {
    let cfg = ExperimentConfig::default();
    let alphabet = Alphabet::numbered(cfg.task.num_labels);
    let mut r = rng(13);
    let data = generate_dataset(&cfg.task, 10, "n", &mut r).unwrap();
    let model = FrameModel::new(
        cfg.task.num_labels,
        16,
        alphabet.len(),
        cfg.stride,
        cfg.context,
        &mut r,
    );
    for u in &data {
        let list = decode_nbest(&model, &u.id, &u.features, 20, 32);
        assert!(!list.is_empty() && list.len() <= 20);
        assert!(list.hyps.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(list.hyps.iter().all(|h| h.score <= 0.0));
        let one = decode_nbest(&model, &u.id, &u.features, 1, 32);
        assert_eq!(one.hyps[0].tokens, list.hyps[0].tokens);
    }
}
