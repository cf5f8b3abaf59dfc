//! `srlang` subcommands: build, train, analyze, export and pipeline.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   vocab.tsv  lexicon.tsv  windows.mat  build_summary.json
//!   sr_gamma_<g>.mat ...          (tabular)   model.ckpt (neural)
//!   train_log.csv  epoch_log.csv
//!   analysis/index.json  analysis/rollup.csv
//!   analysis/gamma_<g>/{pca.mat, pca.json, <algorithm>_k<K>_{clustering,metrics,transitions}.json, ..._transitions.csv}
//!   bundle/                       (export)
//! ```

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    align_clusterings, ari, consensus_cluster, encode_labels, kmeans, nmi, pca_reduce, purity_matrices,
    transition_network, ClusteringResult, ConsensusSettings, KMeansClusterer, MetricFlag,
};
use crate::config::{RunConfig, TrainMode};
use crate::corpus::{
    build_pos_lexicon, encode_windows, parse_tagged_stream, parse_token_documents, select_analysis_tokens,
    EncodedCorpus, PosLexicon, TokenId, Vocabulary,
};
use crate::error::{Error, Result};
use crate::matfile::{self, Dtype, MatrixContainer};
use crate::neural::{self, extract_sr_table, TrainState};
use crate::rng::derive_seed;
use crate::sr::{LearningRate, TabularLearner};

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const WINDOWS_FILE: &str = "windows.mat";
pub const BUILD_SUMMARY_FILE: &str = "build_summary.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const ANALYSIS_DIR: &str = "analysis";
pub const BUNDLE_DIR: &str = "bundle";
pub const LOCK_FILE: &str = ".srlang.lock";

pub fn sr_table_file(gamma: f64) -> String {
    format!("sr_gamma_{gamma}.mat")
}

fn gamma_dir(gamma: f64) -> String {
    format!("gamma_{gamma}")
}

#[derive(Debug, Parser)]
#[command(name = "srlang", version, about = "Successor representations of token sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build vocabulary, POS lexicon and windowed corpus.
    Build(RunArgs),
    /// Learn SR tables (tabular) or a multi-head model (neural).
    Train(RunArgs),
    /// PCA, consensus clustering, metrics and transition networks.
    Analyze(RunArgs),
    /// Write the self-describing bundle consumed by the plotting tools.
    Export(RunArgs),
    /// build, train, analyze and export in sequence.
    Pipeline(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set model.lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Global seed (overrides `model.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<Value> {
    let (Command::Build(args)
    | Command::Train(args)
    | Command::Analyze(args)
    | Command::Export(args)
    | Command::Pipeline(args)) = command;
    let config = RunConfig::load(&args.config, &args.set, args.seed)?;
    let _lock = OutputLock::acquire(&config.output)?;
    match command {
        Command::Build(_) => Ok(serde_json::to_value(build(&config)?).expect("serializable")),
        Command::Train(_) => train(&config),
        Command::Analyze(_) => analyze(&config),
        Command::Export(_) => export(&config),
        Command::Pipeline(_) => {
            let b = build(&config)?;
            let t = train(&config)?;
            let a = analyze(&config)?;
            let e = export(&config)?;
            Ok(json!({"build": b, "train": t, "analyze": a, "export": e}))
        }
    }
}

/// Advisory lock: a marker file created exclusively in the output directory
/// and removed on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => {
                let _ = fs::write(&path, std::process::id().to_string());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is in use (remove {} if no run is active)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    matfile::write_atomic(path, text.as_bytes())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| matfile::malformed(path, e))
}

fn csv_string(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 records")
}

// ---------------------------------------------------------------------------
// build

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub vocab_size: usize,
    pub real_tokens: usize,
    pub documents: usize,
    pub tokens: usize,
    pub windows: usize,
    pub window_len: usize,
    pub oov_count: usize,
    pub oov_rate: f64,
}

pub fn build(config: &RunConfig) -> Result<BuildSummary> {
    let tagged_text = read_text(&config.tagged)?;
    let tokens_text = read_text(&config.tokens)?;
    let tagged = parse_tagged_stream(&tagged_text, config.lowercase, &config.tagged)?;
    let lexicon = build_pos_lexicon(tagged.iter().map(|(t, g)| (t.as_str(), g.as_str())))?;
    let docs = parse_token_documents(&tokens_text, config.lowercase);
    let stream: Vec<&str> = docs.iter().flatten().map(String::as_str).collect();
    let vocab = Vocabulary::build(&stream, &lexicon, config.max_vocab)?;
    let corpus = encode_windows(&docs, &vocab, &lexicon, config.model.window_len)?;

    let out = &config.output;
    write_text(&out.join(VOCAB_FILE), &vocab.to_tsv())?;
    write_text(&out.join(LEXICON_FILE), &lexicon.to_tsv())?;
    let dtype = if vocab.len() < (1 << 24) { Dtype::F32 } else { Dtype::F64 };
    let windows = Array2::from_shape_fn((corpus.len(), corpus.window_len), |(i, j)| {
        corpus.windows[i][j] as f64
    });
    MatrixContainer::new("windows", windows, dtype)
        .with_description("token ids, one window per row")
        .save(&out.join(WINDOWS_FILE))?;

    let summary = BuildSummary {
        vocab_size: vocab.len(),
        real_tokens: vocab.real_count(),
        documents: docs.len(),
        tokens: corpus.token_count,
        windows: corpus.len(),
        window_len: corpus.window_len,
        oov_count: corpus.oov_count,
        oov_rate: corpus.oov_rate(),
    };
    write_json(&out.join(BUILD_SUMMARY_FILE), &summary)?;
    log::info!(
        "built vocabulary of {} entries, {} windows, OOV rate {:.4}",
        summary.vocab_size,
        summary.windows,
        summary.oov_rate
    );
    Ok(summary)
}

fn load_vocab(config: &RunConfig) -> Result<(Vocabulary, PosLexicon)> {
    let vp = config.output.join(VOCAB_FILE);
    let lp = config.output.join(LEXICON_FILE);
    Ok((Vocabulary::from_tsv(&read_text(&vp)?, &vp)?, PosLexicon::from_tsv(&read_text(&lp)?, &lp)?))
}

fn load_corpus(config: &RunConfig, vocab_size: usize) -> Result<EncodedCorpus> {
    let path = config.output.join(WINDOWS_FILE);
    let m = MatrixContainer::load(&path)?;
    let mut windows = Vec::with_capacity(m.data.nrows());
    for row in m.data.rows() {
        let mut w = Vec::with_capacity(row.len());
        for &v in row {
            if v < 0.0 || v.fract() != 0.0 || v as usize >= vocab_size {
                return Err(matfile::malformed(&path, format!("bad token id {v}")));
            }
            w.push(v as TokenId);
        }
        windows.push(w);
    }
    EncodedCorpus::from_windows(windows)
}

// ---------------------------------------------------------------------------
// train

fn log_header(gammas: &[f64], first: &str, wallclock: bool) -> Vec<String> {
    let mut h = vec![first.to_string(), "lr".into(), "loss_total".into()];
    h.extend(gammas.iter().map(|g| format!("loss_gamma_{g}")));
    if wallclock {
        h.push("wallclock".into());
    }
    h
}

fn log_row(first: u64, lr: f64, losses: &[f64], wallclock: Option<f64>) -> Vec<String> {
    let mut r = vec![first.to_string(), lr.to_string(), losses.iter().sum::<f64>().to_string()];
    r.extend(losses.iter().map(f64::to_string));
    if let Some(t) = wallclock {
        r.push(format!("{t:.3}"));
    }
    r
}

pub fn train(config: &RunConfig) -> Result<Value> {
    let (vocab, _) = load_vocab(config)?;
    let corpus = load_corpus(config, vocab.len())?;
    if corpus.window_len != config.model.window_len {
        return Err(Error::Config(format!(
            "built windows have length {} but model.window_len is {}; rerun build",
            corpus.window_len, config.model.window_len
        )));
    }
    match config.train_mode {
        TrainMode::Tabular => train_tabular(config, &corpus, vocab.len()),
        TrainMode::Neural => train_neural(config, &corpus, vocab.len()),
    }
}

fn train_tabular(config: &RunConfig, corpus: &EncodedCorpus, states: usize) -> Result<Value> {
    let start = Instant::now();
    let rate = LearningRate::Harmonic {
        alpha0: config.tabular.alpha0,
        kappa: config.tabular.kappa,
    };
    let mut learners = config
        .model
        .gammas
        .iter()
        .map(|&g| TabularLearner::new(states, g, config.model.lambda, rate))
        .collect::<Result<Vec<_>>>()?;
    let gammas = &config.model.gammas;
    let mut rows = vec![log_header(gammas, "step", config.log_wallclock)];
    let mut errors = Vec::new();
    for sweep in 0..config.tabular.sweeps {
        errors = learners
            .par_iter_mut()
            .map(|l| l.sweep(corpus))
            .collect::<Result<Vec<_>>>()?;
        if learners.iter().any(|l| l.table.m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NumericalFailure(format!("non-finite table entry in sweep {sweep}")));
        }
        let updates = learners[0].updates;
        rows.push(log_row(
            updates,
            rate.at(updates),
            &errors,
            config.log_wallclock.then(|| start.elapsed().as_secs_f64()),
        ));
        log::info!("sweep {sweep}: mean |TD error| per gamma {errors:?}");
    }
    for l in &learners {
        MatrixContainer::new("sr", l.table.m.clone(), Dtype::F64)
            .with_gamma(l.table.gamma)
            .with_description("tabular arrival SR, raw occupancy")
            .save(&config.output.join(sr_table_file(l.table.gamma)))?;
    }
    write_text(&config.output.join(TRAIN_LOG_FILE), &csv_string(&rows))?;
    Ok(json!({
        "mode": "tabular",
        "sweeps": config.tabular.sweeps,
        "updates_per_gamma": learners[0].updates,
        "final_td_error": errors,
        "tables": config.model.gammas.iter().map(|&g| sr_table_file(g)).collect::<Vec<_>>(),
    }))
}

fn train_neural(config: &RunConfig, corpus: &EncodedCorpus, vocab_size: usize) -> Result<Value> {
    let start = Instant::now();
    let mut model = config.model.clone();
    model.vocab_size = vocab_size;
    let total = model.planned_steps(corpus.len());
    let mut state = TrainState::new(model, total)?;
    let gammas = config.model.gammas.clone();
    let ckpt = config.output.join(CHECKPOINT_FILE);
    let mut steps = vec![log_header(&gammas, "step", config.log_wallclock)];
    let mut epochs = vec![log_header(&gammas, "epoch", false)];
    epochs[0].remove(1);

    let result = neural::train(
        &mut state,
        corpus,
        |r| {
            steps.push(log_row(
                r.step,
                r.lr,
                &r.losses,
                config.log_wallclock.then(|| start.elapsed().as_secs_f64()),
            ))
        },
        |s, e| {
            let mut row = log_row(e.epoch as u64, 0.0, &e.mean_losses, None);
            row.remove(1);
            epochs.push(row);
            log::info!("epoch {}: mean loss {:.6} {:?}", e.epoch, e.mean_total, e.mean_losses);
            s.save(&ckpt)
        },
    );
    // Logs are written even when training stops early; the checkpoint on
    // disk is then the last completed epoch.
    write_text(&config.output.join(TRAIN_LOG_FILE), &csv_string(&steps))?;
    write_text(&config.output.join(EPOCH_LOG_FILE), &csv_string(&epochs))?;
    let summaries = result?;
    Ok(json!({
        "mode": "neural",
        "steps": state.step,
        "epochs": summaries.len(),
        "final_epoch_losses": summaries.last().map(|s| s.mean_losses.clone()),
        "checkpoint": CHECKPOINT_FILE,
    }))
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisIndex {
    pub gammas: Vec<f64>,
    pub target_ks: Vec<usize>,
    pub tokens: usize,
    pub algorithms: Vec<String>,
    /// `[gamma][algorithm]` → K values that produced outputs.
    pub outputs: Vec<GammaOutputs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaOutputs {
    pub gamma: f64,
    pub components: usize,
    pub zero_variance: bool,
    pub ks: Vec<usize>,
}

/// Probability rows over the vocabulary for the analyzed tokens, plus the
/// indices of tokens whose row carried no mass.
fn sr_rows(config: &RunConfig, head: usize, gamma: f64, ids: &[TokenId], vocab_size: usize) -> Result<(Array2<f64>, Vec<usize>)> {
    let rows = match config.train_mode {
        TrainMode::Tabular => {
            let path = config.output.join(sr_table_file(gamma));
            let m = MatrixContainer::load(&path)?;
            if m.data.dim() != (vocab_size, vocab_size) || m.header.gamma != Some(gamma) {
                return Err(matfile::malformed(&path, "table shape or gamma does not match the run"));
            }
            let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
            m.data.select(Axis(0), &idx)
        }
        TrainMode::Neural => {
            let state = TrainState::load(&config.output.join(CHECKPOINT_FILE))?;
            if state.params.vocab_size() != vocab_size {
                return Err(Error::Config("checkpoint vocabulary differs from the built vocabulary".into()));
            }
            extract_sr_table(&state.params, head, ids)?
        }
    };
    // Tabular rows only approximately sum to 1/(1-γ); renormalize to
    // distributions.
    let mut rows = rows;
    let mut empty = Vec::new();
    for (i, mut r) in rows.rows_mut().into_iter().enumerate() {
        let s = r.sum();
        if s > 0.0 {
            r /= s;
        } else {
            empty.push(i);
        }
    }
    Ok((rows, empty))
}

fn flag_names(flags: &[MetricFlag]) -> Vec<String> {
    flags
        .iter()
        .map(|f| serde_json::to_value(f).expect("flag").as_str().expect("string").to_string())
        .collect()
}

struct Evaluation {
    rollup: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    dir: &Path,
    config: &RunConfig,
    gamma: f64,
    clustering: &ClusteringResult,
    vocab: &Vocabulary,
    ids: &[TokenId],
    pos: &[String],
    rows: &Array2<f64>,
) -> Result<Evaluation> {
    let k = clustering.k;
    let algo = &clustering.algorithm;
    let (pos_idx, _) = encode_labels(pos);
    let a = ari(&clustering.assignments, &pos_idx);
    let n = nmi(&clustering.assignments, &pos_idx);
    let purity = purity_matrices(clustering, pos)?;
    let mut flags = flag_names(&a.flags);
    for f in flag_names(&n.flags) {
        if !flags.contains(&f) {
            flags.push(f);
        }
    }
    if !purity.empty_clusters.is_empty() && !flags.iter().any(|f| f == "empty_cluster") {
        flags.push("empty_cluster".into());
    }
    let mean_purity = purity.purity.iter().sum::<f64>() / k as f64;
    let stem = format!("{algo}_k{k}");

    write_json(
        &dir.join(format!("{stem}_metrics.json")),
        &json!({
            "gamma": gamma,
            "K": k,
            "algorithm": algo,
            "seed": clustering.seed,
            "tokens": ids.len(),
            "ari": a.value,
            "nmi": n.value,
            "purities": purity.purity,
            "mean_purity": mean_purity,
            "majority": purity.majority,
            "sizes": clustering.sizes(),
            "labels": purity.labels,
            "frequency": purity.frequency.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "fraction": purity.fraction.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "flags": flags,
        }),
    )?;

    let table: Vec<Value> = ids
        .iter()
        .zip(pos)
        .zip(&clustering.assignments)
        .map(|((&id, p), &c)| json!({"token": vocab.token(id), "id": id, "pos": p, "cluster": c}))
        .collect();
    write_json(
        &dir.join(format!("{stem}_clustering.json")),
        &json!({
            "provenance": {
                "gamma": gamma,
                "K": k,
                "algorithm": algo,
                "seed": clustering.seed,
                "global_seed": config.model.seed,
                "train_mode": config.train_mode,
                "variance_fraction": config.analysis.variance_fraction,
            },
            "rows": table,
        }),
    )?;

    let columns: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let net = transition_network(rows.view(), &columns, clustering, config.analysis.top_k, None)?;
    write_json(
        &dir.join(format!("{stem}_transitions.json")),
        &json!({
            "gamma": gamma,
            "K": k,
            "algorithm": algo,
            "clusters": net.clusters,
            "majority": purity.majority,
            "matrix": net.matrix.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "edges": net.edges,
            "max_external": net.max_external,
            "zero_rows": net.zero_rows,
        }),
    )?;
    let mut csv_rows = vec![std::iter::once("source".to_string())
        .chain(net.clusters.iter().map(|c| format!("c{c}")))
        .collect::<Vec<_>>()];
    for (i, r) in net.matrix.outer_iter().enumerate() {
        csv_rows.push(
            std::iter::once(format!("c{}", net.clusters[i]))
                .chain(r.iter().map(f64::to_string))
                .collect(),
        );
    }
    write_text(&dir.join(format!("{stem}_transitions.csv")), &csv_string(&csv_rows))?;

    Ok(Evaluation {
        rollup: vec![
            gamma.to_string(),
            k.to_string(),
            algo.clone(),
            a.value.to_string(),
            n.value.to_string(),
            mean_purity.to_string(),
            flags.join(";"),
        ],
    })
}

pub fn analyze(config: &RunConfig) -> Result<Value> {
    let (vocab, lexicon) = load_vocab(config)?;
    let s = &config.analysis;
    let selected = select_analysis_tokens(&vocab, &lexicon, s.per_pos_cap, &s.tags)?;
    if selected.len() < 3 {
        return Err(Error::InputTooSmall(format!(
            "only {} tokens carry the analyzed tags {:?}",
            selected.len(),
            s.tags
        )));
    }
    let ids: Vec<TokenId> = selected.iter().map(|(id, _)| *id).collect();
    let pos: Vec<String> = selected.iter().map(|(_, p)| p.clone()).collect();
    let n = ids.len();
    let root = config.output.join(ANALYSIS_DIR);
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;

    let header = ["gamma", "K", "algorithm", "ari", "nmi", "mean_purity", "flags"];
    let mut rollup = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let mut outputs = Vec::new();
    let mut algorithms = vec!["consensus-kmeans".to_string()];
    if s.kmeans_baseline {
        algorithms.push("kmeans".into());
    }

    for (head, &gamma) in config.model.gammas.iter().enumerate() {
        let dir = root.join(gamma_dir(gamma));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (rows, empty) = sr_rows(config, head, gamma, &ids, vocab.len())?;
        if !empty.is_empty() {
            log::warn!("gamma {gamma}: {} analyzed tokens have no SR mass", empty.len());
        }
        let pca = pca_reduce(rows.view(), s.variance_fraction)?;
        MatrixContainer::new("pca", pca.reduced.clone(), Dtype::F64)
            .with_gamma(gamma)
            .with_description("PCA coordinates of analyzed SR rows")
            .save(&dir.join("pca.mat"))?;
        write_json(
            &dir.join("pca.json"),
            &json!({
                "components": pca.components(),
                "explained": pca.explained,
                "cumulative": pca.cumulative_explained(),
                "zero_variance": pca.zero_variance,
                "tokens_without_mass": empty,
            }),
        )?;
        let mut done = GammaOutputs {
            gamma,
            components: pca.components(),
            zero_variance: pca.zero_variance,
            ks: Vec::new(),
        };
        if pca.zero_variance {
            for &k in &s.target_ks {
                rollup.push(vec![gamma.to_string(), k.to_string(), "consensus-kmeans".into(), String::new(), String::new(), String::new(), "zero_variance".into()]);
            }
            outputs.push(done);
            continue;
        }

        let settings = ConsensusSettings {
            resolutions: s.resolutions.clone(),
            repeats: s.repeats,
            seed: derive_seed(config.model.seed, &format!("consensus/gamma={gamma}")),
        };
        let consensus = consensus_cluster(pca.reduced.view(), &KMeansClusterer, &s.target_ks, &settings)?;
        for &k in &s.target_ks {
            let Some(cons) = consensus.cuts.get(&k) else {
                rollup.push(vec![gamma.to_string(), k.to_string(), "consensus-kmeans".into(), String::new(), String::new(), String::new(), format!("k_exceeds_n(N={n})")]);
                continue;
            };
            rollup.push(evaluate(&dir, config, gamma, cons, &vocab, &ids, &pos, &rows)?.rollup);
            if s.kmeans_baseline {
                let seed = derive_seed(config.model.seed, &format!("kmeans/gamma={gamma}/k={k}"));
                let km = kmeans(pca.reduced.view(), k, seed)?.clustering;
                let km = align_clusterings(cons, &km)?;
                rollup.push(evaluate(&dir, config, gamma, &km, &vocab, &ids, &pos, &rows)?.rollup);
            }
            done.ks.push(k);
        }
        outputs.push(done);
    }

    write_text(&root.join("rollup.csv"), &csv_string(&rollup))?;
    let index = AnalysisIndex {
        gammas: config.model.gammas.clone(),
        target_ks: s.target_ks.clone(),
        tokens: n,
        algorithms,
        outputs,
    };
    write_json(&root.join("index.json"), &index)?;
    Ok(serde_json::to_value(index).expect("serializable"))
}

// ---------------------------------------------------------------------------
// export

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: String,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

fn csv_data_rows(text: &str) -> usize {
    text.lines().count().saturating_sub(1)
}

pub fn export(config: &RunConfig) -> Result<Value> {
    let root = config.output.join(ANALYSIS_DIR);
    let index: AnalysisIndex = read_json(&root.join("index.json")).map_err(|e| match e {
        Error::MissingInput { path, .. } => Error::MissingInput {
            path,
            reason: "nothing to export; run analyze first".into(),
        },
        e => e,
    })?;
    let bundle = config.output.join(BUNDLE_DIR);
    if bundle.exists() {
        fs::remove_dir_all(&bundle).map_err(|e| Error::io(&bundle, e))?;
    }
    fs::create_dir_all(&bundle).map_err(|e| Error::io(&bundle, e))?;
    let mut files = Vec::new();

    for out in &index.outputs {
        let g = out.gamma;
        let dir = root.join(gamma_dir(g));
        let pca = MatrixContainer::load(&dir.join("pca.mat"))?;
        let mut header = vec!["token".to_string(), "id".into(), "pos".into()];
        let mut cluster_cols = Vec::new();
        let mut tokens: Vec<(String, u64, String)> = Vec::new();
        for &k in &out.ks {
            for algo in &index.algorithms {
                let stem = format!("{algo}_k{k}");
                let clustering: Value = read_json(&dir.join(format!("{stem}_clustering.json")))?;
                let rows = clustering["rows"]
                    .as_array()
                    .ok_or_else(|| matfile::malformed(&dir, "clustering file without rows"))?;
                if tokens.is_empty() {
                    tokens = rows
                        .iter()
                        .map(|r| {
                            (
                                r["token"].as_str().unwrap_or_default().to_string(),
                                r["id"].as_u64().unwrap_or_default(),
                                r["pos"].as_str().unwrap_or_default().to_string(),
                            )
                        })
                        .collect();
                }
                let col: Vec<String> = rows.iter().map(|r| r["cluster"].to_string()).collect();
                header.push(if algo == "consensus-kmeans" {
                    format!("cluster_k{k}")
                } else {
                    format!("{algo}_k{k}")
                });
                cluster_cols.push(col);

                for (suffix, kind) in [("transitions.json", "transitions"), ("metrics.json", "metrics")] {
                    let name = format!("{kind}_gamma_{g}_{stem}.json");
                    let src = dir.join(format!("{stem}_{suffix}"));
                    fs::copy(&src, bundle.join(&name)).map_err(|e| Error::io(&src, e))?;
                    files.push(ManifestEntry {
                        path: name,
                        kind: kind.into(),
                        rows: k,
                        gamma: Some(g),
                        k: Some(k),
                    });
                }
            }
        }
        if tokens.is_empty() {
            continue;
        }
        header.extend((1..=pca.data.ncols()).map(|c| format!("pc_{c}")));
        let mut rows = vec![header];
        for (i, (tok, id, p)) in tokens.iter().enumerate() {
            let mut r = vec![tok.clone(), id.to_string(), p.clone()];
            r.extend(cluster_cols.iter().map(|c| c[i].clone()));
            r.extend(pca.data.row(i).iter().map(f64::to_string));
            rows.push(r);
        }
        let name = format!("embeddings_gamma_{g}.csv");
        write_text(&bundle.join(&name), &csv_string(&rows))?;
        files.push(ManifestEntry {
            path: name,
            kind: "embeddings".into(),
            rows: tokens.len(),
            gamma: Some(g),
            k: None,
        });
    }
    if files.is_empty() {
        return Err(Error::MissingInput {
            path: root,
            reason: "analysis produced no clusterings to export".into(),
        });
    }

    for (src, name, kind) in [
        (config.output.join(TRAIN_LOG_FILE), "loss.csv", "loss"),
        (config.output.join(EPOCH_LOG_FILE), "epoch_loss.csv", "epoch_loss"),
        (root.join("rollup.csv"), "rollup.csv", "rollup"),
    ] {
        if let Ok(text) = fs::read_to_string(&src) {
            write_text(&bundle.join(name), &text)?;
            files.push(ManifestEntry {
                path: name.into(),
                kind: kind.into(),
                rows: csv_data_rows(&text),
                gamma: None,
                k: None,
            });
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = json!({
        "format": "srlang-viz-bundle",
        "version": 1,
        "gammas": index.gammas,
        "target_ks": index.target_ks,
        "algorithms": index.algorithms,
        "tokens": index.tokens,
        "files": files,
    });
    write_json(&bundle.join("manifest.json"), &manifest)?;
    Ok(json!({"bundle": bundle, "files": files.len()}))
}
