//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always show in `cargo test` output.

mod common;

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use srlang::analysis::{
    ari, consensus_cluster, nmi, transition_network, ClusteringResult, ConsensusSettings, KMeansClusterer,
};
use srlang::corpus::{EncodedCorpus, TokenId};
use srlang::neural::{
    compute_targets_for_batch, extract_sr_table, loss_and_gradients, train, ModelConfig, ModelParameters, TrainState,
};
use srlang::rng::rng_for;
use srlang::sr::{
    exact_sr_oracle, lambda_return_targets, linf_distance, LearningRate, TabularLearner, TargetScale,
    TransitionMatrix,
};
use srlang::synth::{markov_corpus, random_stochastic};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

// ---------------------------------------------------------------------------
// Oracles written independently of the crate.

/// `Σ_{k≥1} γ^{k−1} T^k`, summed until the terms vanish.
fn neumann_sr(t: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let mut term = t.clone();
    let mut sum = term.clone();
    for _ in 0..2000 {
        term = gamma * term.dot(t);
        sum += &term;
        if term.iter().all(|v| v.abs() < 1e-18) {
            break;
        }
    }
    sum
}

/// Explicit λ = 0 target for row `t`.
fn one_step(window: &[usize], boot: ArrayView2<f64>, gamma: f64, c: f64, t: usize) -> Array1<f64> {
    let mut g = gamma * &boot.row(t + 1);
    g[window[t + 1]] += c;
    g
}

/// Explicit λ = 1 target: discounted indicator sum to the window end plus
/// one bootstrap from the last position.
fn monte_carlo(window: &[usize], boot: ArrayView2<f64>, gamma: f64, c: f64, t: usize) -> Array1<f64> {
    let len = window.len();
    let mut g = Array1::zeros(boot.ncols());
    for k in 0..(len - 1 - t) {
        g[window[t + 1 + k]] += c * gamma.powi(k as i32);
    }
    g + gamma.powi((len - 1 - t) as i32) * &boot.row(len - 1)
}

/// Adjusted Rand index from explicit pair enumeration.
fn ari_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let pairs = both + only_a + only_b + neither;
    let same_a = both + only_a;
    let same_b = both + only_b;
    let expected = same_a * same_b / pairs;
    let max = 0.5 * (same_a + same_b);
    if max == expected {
        0.0
    } else {
        (both - expected) / (max - expected)
    }
}

fn random_partition<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

// ---------------------------------------------------------------------------
// Criteria

fn oracle_fixed_point() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(2024, "acceptance/oracle");
    let (mut resid, mut rowsum, mut series) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let s = rng.random_range(2..=10);
        let t = random_stochastic(s, &mut rng);
        for gamma in [0.2, 0.5, 0.8] {
            let m = exact_sr_oracle(&t, gamma).unwrap().m;
            let tm = t.matrix();
            let rhs = tm + &(gamma * tm.dot(&m));
            resid = resid.max(linf_distance(m.view(), rhs.view()));
            for r in m.rows() {
                rowsum = rowsum.max((r.sum() - 1.0 / (1.0 - gamma)).abs());
            }
            series = series.max(linf_distance(m.view(), neumann_sr(tm, gamma).view()));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        resid <= 1e-9 && rowsum <= 1e-6 && series <= 1e-9 && within(elapsed, Duration::from_secs(1)),
        format!(
            "max |M-(T+gTM)| {resid:.2e}, max row-sum error {rowsum:.2e}, vs power series {series:.2e}, {elapsed:.2?}"
        ),
    )
}

fn tabular_convergence() -> Outcome {
    // 5-cycle with a skip-two edge: ergodic and aperiodic.
    let mut t = Array2::zeros((5, 5));
    for i in 0..5 {
        t[[i, (i + 1) % 5]] = 0.9;
        t[[i, (i + 2) % 5]] = 0.1;
    }
    let chain = TransitionMatrix::new(t).unwrap();
    let mut rng = rng_for(3, "acceptance/tabular");
    let corpus = markov_corpus(&chain, 200_000, 80, &mut rng).unwrap();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for gamma in [0.2, 0.5, 0.8] {
        let rate = LearningRate::Harmonic { alpha0: 0.5, kappa: 50.0 };
        let mut learner = TabularLearner::new(5, gamma, 0.9, rate).unwrap();
        learner.sweep(&corpus).unwrap();
        let d = linf_distance(learner.table.m.view(), exact_sr_oracle(&chain, gamma).unwrap().m.view());
        worst = worst.max(d);
        parts.push(format!("g={gamma}: {d:.4}"));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-2 && within(elapsed, Duration::from_secs(10)),
        format!("L-inf to oracle [{}], {} transitions, {elapsed:.2?}", parts.join(", "), corpus.token_count),
    )
}

fn lambda_boundaries() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(5, "acceptance/lambda");
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = rng.random_range(2..=6);
        let len = rng.random_range(2..=10);
        let gamma = rng.random_range(0.0..0.99);
        let window: Vec<usize> = (0..len).map(|_| rng.random_range(0..s)).collect();
        for scale in [TargetScale::Raw, TargetScale::Normalized] {
            let mut boot = Array2::from_shape_fn((len, s), |_| rng.random::<f64>());
            let c = match scale {
                TargetScale::Raw => 1.0,
                TargetScale::Normalized => {
                    for mut r in boot.rows_mut() {
                        let total = r.sum();
                        r /= total;
                    }
                    1.0 - gamma
                }
            };
            let zero = lambda_return_targets(&window, boot.view(), gamma, 0.0, scale).unwrap();
            let one = lambda_return_targets(&window, boot.view(), gamma, 1.0, scale).unwrap();
            for t in 0..len - 1 {
                let a = &zero.g.row(t) - &one_step(&window, boot.view(), gamma, c, t);
                let b = &one.g.row(t) - &monte_carlo(&window, boot.view(), gamma, c, t);
                worst = worst.max(a.iter().chain(b.iter()).fold(0.0, |m, v| m.max(v.abs())));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && within(elapsed, Duration::from_secs(1)),
        format!("max deviation {worst:.2e} over 100 windows x 2 scales, {elapsed:.2?}"),
    )
}

fn target_normalization() -> Outcome {
    let mut rng = rng_for(6, "acceptance/normalization");
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = rng.random_range(1..=8);
        let len = rng.random_range(2..=10);
        let gamma = rng.random_range(0.0..1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let window: Vec<usize> = (0..len).map(|_| rng.random_range(0..s)).collect();
        let mut boot = Array2::from_shape_fn((len, s), |_| rng.random::<f64>() + 1e-12);
        for mut r in boot.rows_mut() {
            let total = r.sum();
            r /= total;
        }
        let g = lambda_return_targets(&window, boot.view(), gamma, lambda, TargetScale::Normalized).unwrap();
        for r in g.g.rows() {
            worst = worst.max((r.sum() - 1.0).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max |row sum - 1| {worst:.2e} over 1000 cases"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let config = ModelConfig {
        vocab_size: 8,
        hidden: 8,
        trunk_blocks: 2,
        head_blocks: 2,
        gammas: vec![0.3, 0.7],
        window_len: 5,
        lambda: 0.8,
        ..ModelConfig::default()
    };
    let mut rng = rng_for(7, "acceptance/gradcheck");
    let mut params = ModelParameters::init(&config, &mut rng);
    // Move biases and norms off their initial values so every path is exercised.
    for t in params.tensors_mut() {
        t.mapv_inplace(|v| v + 0.1 * (rng.random::<f64>() - 0.5));
    }
    let batch: Vec<Vec<TokenId>> = (0..3).map(|_| (0..5).map(|_| rng.random_range(0..8)).collect()).collect();
    let targets: Vec<_> = config
        .gammas
        .iter()
        .enumerate()
        .map(|(k, &g)| compute_targets_for_batch(&batch, &params, k, g, config.lambda).unwrap())
        .collect();
    let total = |p: &ModelParameters| -> f64 { loss_and_gradients(p, &batch, &targets).unwrap().0.iter().sum() };
    let (_, grads) = loss_and_gradients(&params, &batch, &targets).unwrap();

    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Array2<f64>> = grads.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    for (ti, name) in names.iter().enumerate() {
        let shape = analytic[ti].dim();
        let mut fd = Array2::zeros(shape);
        for idx in 0..shape.0 * shape.1 {
            let (r, c) = (idx / shape.1, idx % shape.1);
            let orig = params.tensors_mut()[ti][[r, c]];
            params.tensors_mut()[ti][[r, c]] = orig + h;
            let up = total(&params);
            params.tensors_mut()[ti][[r, c]] = orig - h;
            let down = total(&params);
            params.tensors_mut()[ti][[r, c]] = orig;
            fd[[r, c]] = (up - down) / (2.0 * h);
        }
        let diff = (&analytic[ti] - &fd).mapv(|v| v * v).sum().sqrt();
        let scale = analytic[ti].mapv(|v| v * v).sum().sqrt().max(fd.mapv(|v| v * v).sum().sqrt()).max(1e-12);
        let rel = diff / scale;
        if rel >= worst.0 {
            worst = (rel, name.clone());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 < 1e-4 && within(elapsed, Duration::from_secs(30)),
        format!(
            "{} tensors, worst relative error {:.2e} ({}), {elapsed:.2?}",
            names.len(),
            worst.0,
            worst.1
        ),
    )
}

struct NeuralRun {
    chain: TransitionMatrix,
    state: TrainState,
    epoch_totals: Vec<f64>,
    final_losses: Vec<f64>,
    elapsed: Duration,
}

fn neural_run() -> NeuralRun {
    let mut rng = rng_for(11, "acceptance/neural-chain");
    let chain = random_stochastic(10, &mut rng);
    let corpus: EncodedCorpus = markov_corpus(&chain, 50_000, 20, &mut rng).unwrap();
    let config = ModelConfig {
        vocab_size: 10,
        hidden: 32,
        trunk_blocks: 2,
        head_blocks: 2,
        gammas: vec![0.2, 0.5, 0.8],
        window_len: 20,
        lambda: 0.9,
        ema_alpha: 0.99,
        lr: 1e-3,
        lr_min: 1e-5,
        warmup_steps: 50,
        weight_decay: 1e-5,
        batch_size: 64,
        epochs: 12,
        grad_clip_norm: 1.0,
        seed: 1,
    };
    let start = Instant::now();
    let total = config.planned_steps(corpus.len());
    let mut state = TrainState::new(config, total).unwrap();
    let summaries = train(&mut state, &corpus, |_| {}, |_, _| Ok(())).unwrap();
    NeuralRun {
        chain,
        state,
        epoch_totals: summaries.iter().map(|s| s.mean_total).collect(),
        final_losses: summaries.last().unwrap().mean_losses.clone(),
        elapsed: start.elapsed(),
    }
}

fn neural_vs_oracle(run: &NeuralRun) -> Outcome {
    let ids: Vec<TokenId> = (0..10).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for (head, gamma) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let rows = extract_sr_table(&run.state.params, head, &ids).unwrap();
        let oracle = exact_sr_oracle(&run.chain, gamma).unwrap().m * (1.0 - gamma);
        let tv = rows
            .rows()
            .into_iter()
            .zip(oracle.rows())
            .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if gamma < 0.6 {
            ok &= tv <= 0.05;
        }
        parts.push(format!("g={gamma}: {tv:.4}"));
    }
    let e = &run.epoch_totals;
    let decreasing = e.len() >= 3 && e[0] > e[1] && e[1] > e[2];
    outcome(
        ok && decreasing && within(run.elapsed, Duration::from_secs(300)),
        format!(
            "max TV [{}] (gated: 0.2, 0.5); epoch losses {:.4} > {:.4} > {:.4}: {decreasing}; trained in {:.2?}",
            parts.join(", "),
            e[0],
            e[1],
            e[2],
            run.elapsed
        ),
    )
}

fn loss_ordering(run: &NeuralRun) -> Outcome {
    let l = &run.final_losses;
    outcome(
        l[2] < l[1] && l[1] < l[0],
        format!("final-epoch KL g=0.8 {:.4} < g=0.5 {:.4} < g=0.2 {:.4}", l[2], l[1], l[0]),
    )
}

fn metrics() -> Outcome {
    let mut rng = rng_for(8, "acceptance/metrics");
    let mut ok = true;
    let mut notes = Vec::new();

    let a = random_partition(200, 4, &mut rng);
    let relabeled: Vec<usize> = a.iter().map(|&x| (x + 1) % 4).collect();
    let (ai, ni) = (ari(&a, &relabeled).value, nmi(&a, &relabeled).value);
    ok &= (ai - 1.0).abs() < 1e-12 && (ni - 1.0).abs() < 1e-12;
    notes.push(format!("identical ARI {ai} NMI {ni:.12}"));

    let rows: Vec<usize> = (0..200).map(|i| i % 4).collect();
    let cols: Vec<usize> = (0..200).map(|i| (i / 4) % 5).collect();
    let n0 = nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).value.max(nmi(&rows, &cols).value);
    ok &= n0.abs() < 1e-12;
    notes.push(format!("independent NMI {n0:.1e}"));

    let mut sum = 0.0;
    for _ in 0..100 {
        let x = random_partition(200, 4, &mut rng);
        let y = random_partition(200, 4, &mut rng);
        sum += ari(&x, &y).value.abs();
    }
    ok &= sum / 100.0 < 0.05;
    notes.push(format!("random mean |ARI| {:.4}", sum / 100.0));

    let mut worst = 0.0f64;
    let cases: Vec<(Vec<usize>, Vec<usize>)> = vec![
        (vec![0, 0, 1, 1], vec![0, 0, 0, 1]),
        (vec![0, 0, 1, 1], vec![0, 1, 0, 1]),
        (vec![0, 0, 0, 1, 1, 2], vec![1, 1, 0, 0, 2, 2]),
        (vec![0, 1, 2, 3], vec![0, 0, 1, 1]),
    ];
    for (x, y) in &cases {
        worst = worst.max((ari(x, y).value - ari_pairs(x, y)).abs());
    }
    for _ in 0..50 {
        let n = rng.random_range(2..30);
        let x = random_partition(n, rng.random_range(1..5), &mut rng);
        let y = random_partition(n, rng.random_range(1..5), &mut rng);
        worst = worst.max((ari(&x, &y).value - ari_pairs(&x, &y)).abs());
    }
    ok &= worst < 1e-12 && ari(&[0, 0, 1, 1], &[0, 0, 0, 1]).value == 0.0;
    notes.push(format!("pair-counting oracle deviation {worst:.1e}"));
    outcome(ok, notes.join("; "))
}

fn consensus_recovery() -> Outcome {
    let mut rng = rng_for(9, "acceptance/blobs");
    let sigma = 1.0;
    let centers = [[0.0, 0.0], [10.0, 0.0], [5.0, 8.660254037844386]];
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut x = Array2::zeros((90, 2));
    let mut planted = Vec::new();
    for i in 0..90 {
        let c = i % 3;
        x[[i, 0]] = centers[c][0] + noise.sample(&mut rng);
        x[[i, 1]] = centers[c][1] + noise.sample(&mut rng);
        planted.push(c);
    }
    let start = Instant::now();
    let r = consensus_cluster(x.view(), &KMeansClusterer, &[3], &ConsensusSettings::new(21)).unwrap();
    let elapsed = start.elapsed();
    let score = ari(&r.cuts[&3].assignments, &planted).value;
    outcome(
        score == 1.0 && within(elapsed, Duration::from_secs(60)),
        format!(
            "ARI {score} at K=3, {} base trials ({} resolutions skipped), {elapsed:.2?}",
            r.coassociation.trials,
            r.skipped_resolutions.len()
        ),
    )
}

fn transition_sanity() -> Outcome {
    let mut rng = rng_for(10, "acceptance/transitions");
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(3..20);
        let v = n + rng.random_range(0..10);
        let mut rows = Array2::from_shape_fn((n, v), |_| rng.random::<f64>());
        for mut r in rows.rows_mut() {
            let s = r.sum();
            r /= s;
        }
        let k = rng.random_range(1..=n);
        let c = ClusteringResult::new((0..n).map(|i| i % k).collect(), k, "t", 0).unwrap();
        let cols: Vec<usize> = (0..n).collect();
        let net = transition_network(rows.view(), &cols, &c, 3, None).unwrap();
        for r in net.matrix.rows() {
            worst = worst.max((r.sum() - 1.0).abs());
        }
    }

    let c = ClusteringResult::new(vec![0, 0, 1, 1, 2], 3, "t", 0).unwrap();
    let cols = [0, 1, 2, 3, 4];
    // Each token sends all analyzed mass into its own cluster (identity) or
    // into the next cluster (cyclic off-diagonal), plus mass outside.
    let own = ndarray::array![
        [0.3, 0.2, 0.0, 0.0, 0.0, 0.5],
        [0.1, 0.0, 0.0, 0.0, 0.0, 0.9],
        [0.0, 0.0, 0.4, 0.4, 0.0, 0.2],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.7, 0.3],
    ];
    let ident = transition_network(own.view(), &cols, &c, 3, None).unwrap();
    let next = ndarray::array![
        [0.0, 0.0, 0.3, 0.2, 0.0, 0.5],
        [0.0, 0.0, 0.0, 0.1, 0.0, 0.9],
        [0.0, 0.0, 0.0, 0.0, 0.8, 0.2],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.6, 0.1, 0.0, 0.0, 0.0, 0.3],
    ];
    let cyc = transition_network(next.view(), &cols, &c, 3, None).unwrap();
    let want = ndarray::array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
    let two = ClusteringResult::new(vec![0, 0, 1, 1], 2, "t", 0).unwrap();
    let anti_rows = ndarray::array![[0.0, 0.0, 0.5, 0.5], [0.0, 0.0, 1.0, 0.0], [0.2, 0.8, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]];
    let anti = transition_network(anti_rows.view(), &[0, 1, 2, 3], &two, 2, None).unwrap();
    let sub = transition_network(own.view(), &cols, &c, 3, Some(&[0, 2])).unwrap();

    let exact = ident.matrix == Array2::<f64>::eye(3)
        && cyc.matrix == want
        && anti.matrix == ndarray::array![[0.0, 1.0], [1.0, 0.0]];
    let external = sub.max_external == Some(vec![0.0, 0.0]);
    outcome(
        worst <= 1e-6 && exact && external,
        format!("max |row sum - 1| {worst:.1e}; identity/anti-diagonal exact: {exact}; internal-only max_external = 0: {external}"),
    )
}

fn pipeline_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    common::write_toy_corpus(dir.path(), 30_000, 12);
    let cfg = common::write_config(dir.path(), &common::small_config());
    let cfg = cfg.to_str().unwrap();
    let start = Instant::now();
    let mut snaps = Vec::new();
    for (mode, out) in [("tabular", "run1"), ("tabular", "run2"), ("neural", "run3"), ("neural", "run4")] {
        let o = common::srlang(&[
            "pipeline",
            "--config",
            cfg,
            "--set",
            &format!("output={out}"),
            "--set",
            &format!("train_mode={mode}"),
        ]);
        if !o.status.success() {
            return outcome(false, format!("pipeline failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let _: Value = serde_json::from_slice(&o.stdout).unwrap();
        snaps.push(common::snapshot(&dir.path().join(out)));
    }
    let tab = snaps[0] == snaps[1];
    let neu = snaps[2] == snaps[3];
    outcome(
        tab && neu,
        format!(
            "tabular: {} files identical: {tab}; neural: {} files identical: {neu}; {:.2?}",
            snaps[0].len(),
            snaps[2].len(),
            start.elapsed()
        ),
    )
}

fn smoke_mini_corpus() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    common::write_toy_corpus(dir.path(), 1_000_000, 13);
    let mut c = common::small_config();
    c["model"]["gammas"] = serde_json::json!([0.2]);
    c["model"]["window_len"] = 80.into();
    c["tabular"]["sweeps"] = 1.into();
    c["analysis"]["target_ks"] = serde_json::json!([3]);
    let cfg = common::write_config(dir.path(), &c);
    let o = common::srlang(&["pipeline", "--config", cfg.to_str().unwrap()]);
    if !o.status.success() {
        return outcome(false, format!("pipeline failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let m: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/analysis/gamma_0.2/consensus-kmeans_k3_metrics.json")).unwrap(),
    )
    .unwrap();
    let score = m["ari"].as_f64().unwrap();
    outcome(
        score > 0.2,
        format!("ARI vs POS {score:.3} at K=3 over {} NVA tokens (generated toy-grammar corpus)", m["tokens"]),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()));

    let mut failures = 0;
    let mut report = |name: &str, gating: bool, run: &dyn Fn() -> Outcome| {
        if !selected(name) {
            return;
        }
        let o = run();
        let tag = match (o.pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (non-gating)",
        };
        println!("[{tag}] {name}: {}", o.detail);
        if !o.pass && gating {
            failures += 1;
        }
    };

    println!("acceptance criteria");
    report("oracle fixed point", true, &oracle_fixed_point);
    report("tabular convergence", true, &tabular_convergence);
    report("lambda boundary identities", true, &lambda_boundaries);
    report("target normalization", true, &target_normalization);
    report("gradient check", true, &gradient_check);
    if selected("neural-vs-oracle") || selected("loss ordering") {
        let run = neural_run();
        report("neural-vs-oracle", true, &|| neural_vs_oracle(&run));
        report("loss ordering", true, &|| loss_ordering(&run));
    }
    report("metrics", true, &metrics);
    report("consensus recovery", true, &consensus_recovery);
    report("transition sanity", true, &transition_sanity);
    report("end-to-end determinism", true, &pipeline_determinism);
    report("smoke: mini-corpus ARI", false, &smoke_mini_corpus);

    if failures > 0 {
        println!("{failures} gating criteria failed");
        std::process::exit(1);
    }
}
