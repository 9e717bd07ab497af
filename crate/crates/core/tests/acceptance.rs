//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use gtc::alphabet::{Alphabet, Symbol};
use gtc::graph::{ctc_linear_graph, GtcGraph};
use gtc::loss::{gradient, log_probability_at, loss, trellis};
use gtc::oracle::*;
use gtc::pipeline::{
    build_supervision_graph, graph_oracle_ler, nbest_oracle_ler, sequence_error_rate, PipelineConfig,
};
use gtc::posterior::PosteriorMatrix;
use gtc::semiring::LogSemiring;
use gtc::toyasr::{self_train_experiment, ExperimentConfig, Report};
use gtc::wfst::{determinize, minimize, remove_epsilon, Wfst};
use ndarray::Axis;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    println!(
        "{} {name}: {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.pass
}

/// Feasible instances small enough to enumerate: at most 10 emitting nodes
/// and 12 frames.
fn instance_set(n: usize) -> (Vec<(GtcGraph, PosteriorMatrix)>, usize) {
    let mut r = rng(9001);
    let budget = EnumerationBudget::default();
    let mut out = Vec::with_capacity(n);
    let mut too_large = 0;
    while out.len() < n {
        let g = random_graph(&mut r, 10, 4);
        let frames = r.random_range(1..=12);
        if walk_count(&g, frames) > budget.max_paths as u128 {
            too_large += 1;
            continue;
        }
        let y = random_posteriors(&mut r, frames, 5);
        if loss(&g, &y).unwrap().is_finite() {
            out.push((g, y));
        }
    }
    (out, too_large)
}

fn oracle_equivalence(set: &[(GtcGraph, PosteriorMatrix)], skipped: usize) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut paths = 0usize;
    for (g, y) in set {
        let pg = brute_force_pg(g, y, EnumerationBudget::default()).unwrap();
        paths += pg.consumed;
        let p = (-loss(g, y).unwrap()).exp();
        worst = worst.max((p - pg.value).abs() / pg.value);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(60),
        format!(
            "{} instances, {paths} paths enumerated, {skipped} over budget redrawn, max rel err {worst:.2e}, {:.1}s",
            set.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn frame_invariance(set: &[(GtcGraph, PosteriorMatrix)]) -> Outcome {
    let mut worst: f64 = 0.0;
    for (g, y) in set {
        let st = trellis(g, y).unwrap();
        for t in 1..=y.frames() {
            let lp = log_probability_at(&st.alpha, &st.beta, y, g, t).unwrap();
            worst = worst.max((lp + st.neg_log_prob).abs());
        }
    }
    outcome(
        worst <= 1e-10,
        format!("{} instances, max log deviation {worst:.2e}", set.len()),
    )
}

fn ctc_reduction() -> Outcome {
    let mut r = rng(9002);
    let a = Alphabet::numbered(4);
    let (mut loss_err, mut grad_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let len = r.random_range(1..=5);
        let labels: Vec<Symbol> = (0..len).map(|_| r.random_range(1..=4)).collect();
        let frames = r.random_range(2 * len..=2 * len + 6);
        let u = random_logits(&mut r, frames, 5, 2.0);
        let y = u.softmax();
        let g = ctc_linear_graph(&labels, &a).unwrap();
        let expect = reference_ctc(&labels, &y).unwrap();
        loss_err = loss_err.max(relative_error(loss(&g, &y).unwrap(), expect, 1e-12));
        let grad = gradient(&g, &y).unwrap();
        let fd = finite_diff_with(&u, 1e-5, |p| reference_ctc(&labels, p).unwrap()).unwrap();
        for (x, z) in grad.iter().zip(fd.iter()) {
            grad_err = grad_err.max(relative_error(*x, *z, 1e-3));
        }
    }
    outcome(
        loss_err <= 1e-9 && grad_err <= 1e-5,
        format!("50 cases, loss rel err {loss_err:.2e}, gradient rel err {grad_err:.2e}"),
    )
}

fn gradient_check() -> Outcome {
    let mut r = rng(9003);
    let (mut worst, mut row_sum): (f64, f64) = (0.0, 0.0);
    let mut checked = 0;
    while checked < 100 {
        let g = random_graph(&mut r, 6, 3);
        let frames = r.random_range(1..=8);
        let u = random_logits(&mut r, frames, 4, 2.0);
        let Ok(grad) = gradient(&g, &u.softmax()) else {
            continue;
        };
        let Ok(fd) = finite_diff_grad(&g, &u, 1e-5, EnumerationBudget::default()) else {
            continue;
        };
        for (x, z) in grad.iter().zip(fd.iter()) {
            worst = worst.max(relative_error(*x, *z, 1e-3));
        }
        for row in grad.axis_iter(Axis(0)) {
            row_sum = row_sum.max(row.sum().abs());
        }
        checked += 1;
    }
    outcome(
        worst <= 1e-5 && row_sum <= 1e-8,
        format!("100 instances, max rel err {worst:.2e}, max |row sum| {row_sum:.2e}"),
    )
}

fn log_weights(f: &Wfst) -> BTreeMap<Vec<Symbol>, f64> {
    string_weights(f, PathSum::Log, EnumerationBudget::default())
        .unwrap()
        .value
}

fn wfst_soundness() -> Outcome {
    let mut r = rng(9004);
    let mut worst: f64 = 0.0;
    let mut language_mismatch = 0;
    let mut compare = |a: &BTreeMap<Vec<Symbol>, f64>, b: &BTreeMap<Vec<Symbol>, f64>| {
        if a.keys().ne(b.keys()) {
            language_mismatch += 1;
            return;
        }
        for (k, w) in a {
            worst = worst.max((w - b[k]).abs());
        }
    };
    for _ in 0..200 {
        let f = random_wfst(&mut r, 12, 5, true, true);
        let before = log_weights(&f);
        let e = remove_epsilon::<LogSemiring>(&f).unwrap();
        compare(&before, &log_weights(&e));
        let d = determinize::<LogSemiring>(&e).unwrap();
        compare(&before, &log_weights(&d));
        let m = minimize::<LogSemiring>(&d).unwrap();
        compare(&before, &log_weights(&m));
    }
    outcome(
        worst <= 1e-10 && language_mismatch == 0,
        format!("200 machines x 3 ops, {language_mismatch} language mismatches, max weight diff {worst:.2e}"),
    )
}

fn pipeline_invariants() -> Outcome {
    let a = Alphabet::numbered(8);
    let mut r = rng(9005);
    let mut violations = Vec::new();
    let mut dens_sum = [0.0; 3];
    let n = 200;
    for i in 0..n {
        let (nb, reference) = synthetic_nbest(&mut r, 20, 8);
        let one = sequence_error_rate(&nb.best().tokens, &reference).unwrap();
        let nbest = nbest_oracle_ler(&nb, &reference).unwrap();
        let mut dens = [0.0; 3];
        let mut graph = 0.0;
        for (j, eta) in [0.0, 0.02, 0.05].into_iter().enumerate() {
            let cfg = PipelineConfig::with_eta(eta);
            let g = build_supervision_graph(&nb, &a, &cfg).unwrap();
            dens[j] = g.density(reference.len()).unwrap();
            dens_sum[j] += dens[j];
            if j == 0 {
                graph = graph_oracle_ler(&g, &reference).unwrap();
            }
        }
        if !(graph <= nbest + 1e-12 && nbest <= one) {
            violations.push(format!("#{i} ler {graph}/{nbest}/{one}"));
        }
        if !(dens[0] >= dens[1] && dens[1] >= dens[2]) {
            violations.push(format!("#{i} density {dens:?}"));
        }
    }
    let mean = dens_sum.map(|d| d / n as f64);
    outcome(
        violations.is_empty(),
        format!(
            "{n} synthetic 20-best lists, mu 0.6, mean density {:.3}/{:.3}/{:.3}, violations {violations:?}",
            mean[0], mean[1], mean[2]
        ),
    )
}

/// Per-seed reports from the bundled default configuration.
fn demo_reports() -> (Vec<Report>, Duration) {
    let start = Instant::now();
    let base = ExperimentConfig::default();
    let reports = (0..3)
        .map(|i| {
            let cfg = ExperimentConfig {
                seed: base.seed + i,
                ..base.clone()
            };
            self_train_experiment(&cfg).expect("experiment runs")
        })
        .collect();
    (reports, start.elapsed())
}

fn table2_trend(reports: &[Report], elapsed: Duration) -> Outcome {
    let mut votes = 0;
    let mut lines = Vec::new();
    for rep in reports {
        let seed = rep.test_ler("seed");
        let one = rep.test_ler("1best");
        let (best_cn, best_name) = rep
            .rows
            .iter()
            .filter(|r| r.name.starts_with("cn-"))
            .map(|r| (r.test_ler, r.name.as_str()))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        let prob_high = rep.test_ler("cn-prob-high");
        let unit_none = rep.test_ler("cn-unit-none");
        let ok = seed > one && one >= best_cn && prob_high <= unit_none;
        votes += usize::from(ok);
        lines.push(format!(
            "seed {}: {:.2} > {:.2} >= {:.2} ({best_name}), prob-high {:.2} <= unit-none {:.2} {}",
            rep.seed,
            100.0 * seed,
            100.0 * one,
            100.0 * best_cn,
            100.0 * prob_high,
            100.0 * unit_none,
            if ok { "ok" } else { "no" }
        ));
    }
    outcome(
        2 * votes > reports.len() && elapsed < Duration::from_secs(15 * 60),
        format!(
            "{votes}/{} seeds agree, {:.0}s; {}",
            reports.len(),
            elapsed.as_secs_f64(),
            lines.join("; ")
        ),
    )
}

fn table1_trend(reports: &[Report]) -> Outcome {
    let mut all = true;
    let mut lines = Vec::new();
    for rep in reports {
        let oracle = |name: &str| rep.get(name).and_then(|r| r.oracle_ler).unwrap();
        let (one, nbest, graph) = (oracle("1best"), oracle("oracle-20best"), oracle("cn-prob-none"));
        let ok = one > nbest && nbest > graph;
        all &= ok;
        lines.push(format!(
            "seed {}: {:.2} > {:.2} > {:.2}",
            rep.seed,
            100.0 * one,
            100.0 * nbest,
            100.0 * graph
        ));
    }
    outcome(
        all,
        format!("oracle LER 1-best > 20-best > CN graph; {}", lines.join("; ")),
    )
}

fn main() {
    let (set, skipped) = instance_set(500);
    let mut ok = true;
    ok &= run("oracle equivalence", || oracle_equivalence(&set, skipped));
    ok &= run("frame invariance", || frame_invariance(&set));
    ok &= run("ctc reduction", ctc_reduction);
    ok &= run("gradient correctness", gradient_check);
    ok &= run("wfst optimization soundness", wfst_soundness);
    ok &= run("pipeline invariants", pipeline_invariants);
    let (reports, elapsed) = demo_reports();
    ok &= run("self-training test LER trend", || table2_trend(&reports, elapsed));
    ok &= run("oracle LER trend", || table1_trend(&reports));
    if !ok {
        std::process::exit(1);
    }
}
