//! Cluster geometry of SR rows: PCA, k-means, prime-K consensus clustering,
//! partition metrics and cluster-level transition networks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};

pub const KMEANS_MAX_ITER: usize = 300;

pub const CONSENSUS_PRIMES: [usize; 24] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];
pub const CONSENSUS_REPEATS: usize = 10;

/// Default target resolutions for the noun/verb/adjective setting.
pub const NVA_TARGET_KS: [usize; 9] = [3, 10, 20, 30, 40, 50, 60, 80, 100];

#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub x: Array2<f64>,
    pub token_ids: Vec<TokenId>,
    pub pos_labels: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(x: Array2<f64>, token_ids: Vec<TokenId>, pos_labels: Vec<String>) -> Result<Self> {
        if x.nrows() != token_ids.len() || x.nrows() != pos_labels.len() {
            return Err(Error::ShapeError(format!(
                "{} rows, {} token ids, {} labels",
                x.nrows(),
                token_ids.len(),
                pos_labels.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite embedding entry".into()));
        }
        Ok(EmbeddingSet { x, token_ids, pos_labels })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub algorithm: String,
    pub seed: u64,
}

impl ClusteringResult {
    pub fn new(assignments: Vec<usize>, k: usize, algorithm: impl Into<String>, seed: u64) -> Result<Self> {
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::ParamOutOfRange(format!("cluster index {bad} >= K = {k}")));
        }
        Ok(ClusteringResult {
            assignments,
            k,
            algorithm: algorithm.into(),
            seed,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(k, _)| k)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// PCA

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// N×D′ projection of the centered rows.
    pub reduced: Array2<f64>,
    /// D×D′ principal directions as columns.
    pub basis: Array2<f64>,
    pub mean: Array1<f64>,
    /// Explained-variance ratio of each retained component.
    pub explained: Vec<f64>,
    pub zero_variance: bool,
}

impl PcaResult {
    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn cumulative_explained(&self) -> f64 {
        self.explained.iter().sum()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.reduced.dot(&self.basis.t()) + &self.mean
    }
}

pub fn pca_reduce(x: ArrayView2<f64>, variance_fraction: f64) -> Result<PcaResult> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::InputTooSmall(format!("PCA needs at least 2 rows, got {n}")));
    }
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::ParamOutOfRange(format!(
            "variance fraction {variance_fraction} must lie in (0, 1]"
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    let total: f64 = centered.iter().map(|v| v * v).sum();
    if total <= 1e-24 {
        log::warn!("PCA input has zero variance; returning no components");
        return Ok(PcaResult {
            reduced: Array2::zeros((n, 0)),
            basis: Array2::zeros((d, 0)),
            mean,
            explained: Vec::new(),
            zero_variance: true,
        });
    }

    let m = DMatrix::from_row_iterator(n, d, centered.iter().copied());
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let s_max = sv[order[0]];
    let rank_tol = s_max * f64::EPSILON * n.max(d) as f64;
    let mut keep = 0;
    let mut cumulative = 0.0;
    let mut explained = Vec::new();
    for &i in &order {
        if sv[i] <= rank_tol {
            break;
        }
        let ratio = sv[i] * sv[i] / total;
        cumulative += ratio;
        explained.push(ratio);
        keep += 1;
        if variance_fraction < 1.0 && cumulative >= variance_fraction - 1e-12 {
            break;
        }
    }

    let mut basis = Array2::zeros((d, keep));
    for (c, &i) in order.iter().take(keep).enumerate() {
        let row = v_t.row(i);
        // Sign convention: the largest-magnitude loading is positive.
        let mut pivot = 0;
        for j in 1..d {
            if row[j].abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            basis[[j, c]] = sign * row[j];
        }
    }
    let reduced = centered.dot(&basis);
    Ok(PcaResult {
        reduced,
        basis,
        mean,
        explained,
        zero_variance: false,
    })
}

// ---------------------------------------------------------------------------
// k-means

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub clustering: ClusteringResult,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_plus_plus<R: Rng + ?Sized>(x: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    let (n, d) = x.dim();
    if k == 0 || k > n {
        return Err(Error::ParamOutOfRange(format!("K = {k} must lie in 1..={n}")));
    }
    let mut rng = rng_for(seed, "kmeans");
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let mut assign = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dc = sq_dist(x.row(i), centroids.row(c));
                if dc < best_d {
                    best_d = dc;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
            dist[i] = best_d;
            inertia += best_d;
        }
        history.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        if iterations == KMEANS_MAX_ITER {
            break;
        }
        iterations += 1;

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(assign[i]).scaled_add(1.0, &x.row(i));
            counts[assign[i]] += 1;
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let row = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&row);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<usize>, |acc, i| match acc {
                        Some(j) if dist[j] >= dist[i] => Some(j),
                        _ => Some(i),
                    })
                    .expect("k <= n leaves a free point");
                taken[far] = true;
                centroids.row_mut(c).assign(&x.row(far));
                log::debug!("k-means reseeded empty cluster {c} at point {far}");
            }
        }
    }

    let inertia = *history.last().expect("at least one assignment step");
    Ok(KMeansFit {
        clustering: ClusteringResult::new(assign, k, "kmeans", seed)?,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// Base clusterer used inside the consensus ensemble.
pub trait BaseClusterer: Sync {
    fn name(&self) -> &str;
    fn cluster(&self, x: ArrayView2<f64>, k: usize, seed: u64) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KMeansClusterer;

impl BaseClusterer for KMeansClusterer {
    fn name(&self) -> &str {
        "kmeans"
    }

    fn cluster(&self, x: ArrayView2<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
        Ok(kmeans(x, k, seed)?.clustering.assignments)
    }
}

// ---------------------------------------------------------------------------
// Consensus clustering

#[derive(Debug, Clone)]
pub struct CoAssociationMatrix {
    pub c: Array2<f64>,
    pub trials: usize,
}

/// One agglomeration step; nodes `0..N` are observations and step `i`
/// creates node `N + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub dissimilarity: f64,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct ConsensusSettings {
    pub resolutions: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
}

impl ConsensusSettings {
    pub fn new(seed: u64) -> Self {
        ConsensusSettings {
            resolutions: CONSENSUS_PRIMES.to_vec(),
            repeats: CONSENSUS_REPEATS,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConsensusResult {
    pub cuts: BTreeMap<usize, ClusteringResult>,
    /// Requested K values that could not be cut (K = 0 or K > N).
    pub rejected_ks: Vec<usize>,
    pub skipped_resolutions: Vec<usize>,
    pub coassociation: CoAssociationMatrix,
    pub merges: Vec<Merge>,
}

#[inline]
fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

pub fn consensus_cluster(
    x: ArrayView2<f64>,
    base: &dyn BaseClusterer,
    target_ks: &[usize],
    settings: &ConsensusSettings,
) -> Result<ConsensusResult> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::InputTooSmall(format!("consensus clustering needs N >= 3, got {n}")));
    }
    let (usable, skipped): (Vec<usize>, Vec<usize>) =
        settings.resolutions.iter().partition(|&&p| p < n && p >= 1);
    if !skipped.is_empty() {
        log::warn!("skipping base resolutions {skipped:?} (N = {n})");
    }
    if usable.is_empty() || settings.repeats == 0 {
        return Err(Error::InputTooSmall(format!(
            "no base resolution below N = {n}"
        )));
    }
    let trials: Vec<(usize, usize)> = usable
        .iter()
        .flat_map(|&p| (0..settings.repeats).map(move |r| (p, r)))
        .collect();

    let pairs = n * (n - 1) / 2;
    let counts = trials
        .par_iter()
        .map(|&(p, r)| -> Result<Vec<u32>> {
            let seed = derive_seed(settings.seed, &format!("consensus/{p}/{r}"));
            let labels = base.cluster(x, p, seed)?;
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); p];
            for (i, &l) in labels.iter().enumerate() {
                members[l].push(i);
            }
            let mut counts = vec![0u32; pairs];
            for m in &members {
                for (s, &i) in m.iter().enumerate() {
                    for &j in &m[s + 1..] {
                        counts[condensed_index(n, i, j)] += 1;
                    }
                }
            }
            Ok(counts)
        })
        .try_reduce(
            || vec![0u32; pairs],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;

    let total = trials.len() as f64;
    let mut c = Array2::<f64>::eye(n);
    let mut condensed = vec![0.0f64; pairs];
    for i in 0..n {
        for j in i + 1..n {
            let idx = condensed_index(n, i, j);
            let f = counts[idx] as f64 / total;
            c[[i, j]] = f;
            c[[j, i]] = f;
            condensed[idx] = 1.0 - f;
        }
    }

    let dendrogram = kodama::linkage(&mut condensed, n, kodama::Method::Average);
    let merges: Vec<Merge> = dendrogram
        .steps()
        .iter()
        .map(|s| Merge {
            a: s.cluster1,
            b: s.cluster2,
            dissimilarity: s.dissimilarity,
            size: s.size,
        })
        .collect();

    let algorithm = format!("consensus-{}", base.name());
    let mut cuts = BTreeMap::new();
    let mut rejected = Vec::new();
    for &k in target_ks {
        if k == 0 || k > n {
            log::warn!("target K = {k} outside 1..={n}; skipped");
            rejected.push(k);
            continue;
        }
        let labels = cut_dendrogram(&merges, n, k);
        cuts.insert(k, ClusteringResult::new(labels, k, algorithm.clone(), settings.seed)?);
    }

    Ok(ConsensusResult {
        cuts,
        rejected_ks: rejected,
        skipped_resolutions: skipped,
        coassociation: CoAssociationMatrix { c, trials: trials.len() },
        merges,
    })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Partition left after the first `N - k` merges, labelled by first
/// appearance.
pub fn cut_dendrogram(merges: &[Merge], n: usize, k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    let mut node_rep: Vec<usize> = (0..n).collect();
    for m in merges.iter().take(n.saturating_sub(k)) {
        let ra = find(&mut parent, node_rep[m.a]);
        let rb = find(&mut parent, node_rep[m.b]);
        parent[rb] = ra;
        node_rep.push(ra);
    }
    let mut label_of = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if label_of[r] == usize::MAX {
                label_of[r] = next;
                next += 1;
            }
            label_of[r]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    SingleCluster,
    AllSingletons,
    EmptyCluster,
    ZeroDenominator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub flags: Vec<MetricFlag>,
}

/// Maps arbitrary labels to dense indices in sorted label order.
pub fn encode_labels<T: Ord + Clone>(labels: &[T]) -> (Vec<usize>, Vec<T>) {
    let mut names: Vec<T> = labels.to_vec();
    names.sort();
    names.dedup();
    let idx = labels
        .iter()
        .map(|l| names.binary_search(l).expect("label present"))
        .collect();
    (idx, names)
}

fn contingency(a: &[usize], b: &[usize]) -> Array2<f64> {
    assert_eq!(a.len(), b.len(), "partitions must cover the same items");
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut t = Array2::zeros((ka, kb));
    for (&i, &j) in a.iter().zip(b) {
        t[[i, j]] += 1.0;
    }
    t
}

fn degeneracy_flags(a: &[usize], flags: &mut Vec<MetricFlag>) {
    let mut seen = a.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() <= 1 && !flags.contains(&MetricFlag::SingleCluster) {
        flags.push(MetricFlag::SingleCluster);
    }
    if a.len() > 1 && seen.len() == a.len() && !flags.contains(&MetricFlag::AllSingletons) {
        flags.push(MetricFlag::AllSingletons);
    }
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `2 I / (H(a) + H(b))`, natural log.
pub fn nmi(a: &[usize], b: &[usize]) -> Score {
    let mut flags = Vec::new();
    degeneracy_flags(a, &mut flags);
    degeneracy_flags(b, &mut flags);
    let n = a.len() as f64;
    if a.is_empty() {
        return Score { value: 0.0, flags };
    }
    let t = contingency(a, b);
    let rows = t.sum_axis(Axis(1));
    let cols = t.sum_axis(Axis(0));
    let ha = entropy(rows.iter().copied(), n);
    let hb = entropy(cols.iter().copied(), n);
    let mut mi = 0.0;
    for ((i, j), &nij) in t.indexed_iter() {
        if nij > 0.0 {
            mi += nij / n * (n * nij / (rows[i] * cols[j])).ln();
        }
    }
    if flags.contains(&MetricFlag::SingleCluster) || ha + hb <= 0.0 {
        if !flags.contains(&MetricFlag::ZeroDenominator) && ha + hb <= 0.0 {
            flags.push(MetricFlag::ZeroDenominator);
        }
        return Score { value: 0.0, flags };
    }
    let value = (2.0 * mi / (ha + hb)).clamp(0.0, 1.0);
    Score { value, flags }
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index, pair-counting form.
pub fn ari(a: &[usize], b: &[usize]) -> Score {
    let mut flags = Vec::new();
    degeneracy_flags(a, &mut flags);
    degeneracy_flags(b, &mut flags);
    let n = a.len() as f64;
    let t = contingency(a, b);
    let index: f64 = t.iter().map(|&v| choose2(v)).sum();
    let sa: f64 = t.sum_axis(Axis(1)).iter().map(|&v| choose2(v)).sum();
    let sb: f64 = t.sum_axis(Axis(0)).iter().map(|&v| choose2(v)).sum();
    let total = choose2(n);
    if total <= 0.0 {
        flags.push(MetricFlag::ZeroDenominator);
        return Score { value: 0.0, flags };
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    let denom = max - expected;
    if denom == 0.0 {
        flags.push(MetricFlag::ZeroDenominator);
        return Score { value: 0.0, flags };
    }
    Score {
        value: (index - expected) / denom,
        flags,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurityReport {
    /// Column labels, sorted.
    pub labels: Vec<String>,
    /// K×J counts.
    pub frequency: Array2<usize>,
    /// K×J row fractions; rows of empty clusters are zero.
    pub fraction: Array2<f64>,
    pub purity: Vec<f64>,
    pub majority: Vec<Option<String>>,
    pub empty_clusters: Vec<usize>,
}

pub fn purity_matrices<S: AsRef<str>>(clustering: &ClusteringResult, labels: &[S]) -> Result<PurityReport> {
    if labels.len() != clustering.assignments.len() {
        return Err(Error::ShapeError(format!(
            "{} labels for {} clustered items",
            labels.len(),
            clustering.assignments.len()
        )));
    }
    let owned: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
    let (idx, names) = encode_labels(&owned);
    let k = clustering.k;
    let j = names.len();
    let mut frequency = Array2::<usize>::zeros((k, j));
    for (&c, &l) in clustering.assignments.iter().zip(&idx) {
        frequency[[c, l]] += 1;
    }
    let mut fraction = Array2::<f64>::zeros((k, j));
    let mut purity = vec![0.0; k];
    let mut majority = vec![None; k];
    let mut empty = Vec::new();
    for c in 0..k {
        let row = frequency.row(c);
        let size: usize = row.sum();
        if size == 0 {
            empty.push(c);
            continue;
        }
        let mut best = 0;
        for l in 0..j {
            fraction[[c, l]] = row[l] as f64 / size as f64;
            if row[l] > row[best] {
                best = l;
            }
        }
        purity[c] = row[best] as f64 / size as f64;
        majority[c] = Some(names[best].clone());
    }
    Ok(PurityReport {
        labels: names,
        frequency,
        fraction,
        purity,
        majority,
        empty_clusters: empty,
    })
}

// ---------------------------------------------------------------------------
// Transition networks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionNetwork {
    /// Cluster ids labelling the rows/columns of `matrix`.
    pub clusters: Vec<usize>,
    pub matrix: Array2<f64>,
    pub edges: Vec<Edge>,
    /// Subnetwork mode only: strongest connection from each source into a
    /// cluster outside the subset.
    pub max_external: Option<Vec<f64>>,
    /// Clusters whose row is all zeros (no tokens or no analyzed mass).
    pub zero_rows: Vec<usize>,
}

/// `sr_rows[n]` is the SR distribution row of analyzed token `n` over the
/// full vocabulary; `columns[n]` is that token's column in the same rows.
pub fn transition_network(
    sr_rows: ArrayView2<f64>,
    columns: &[usize],
    clustering: &ClusteringResult,
    top_k: usize,
    restrict: Option<&[usize]>,
) -> Result<TransitionNetwork> {
    let n = columns.len();
    if sr_rows.nrows() != n || clustering.assignments.len() != n {
        return Err(Error::ShapeError(format!(
            "{} SR rows, {} columns, {} assignments",
            sr_rows.nrows(),
            n,
            clustering.assignments.len()
        )));
    }
    if let Some(&c) = columns.iter().find(|&&c| c >= sr_rows.ncols()) {
        return Err(Error::VocabOutOfRange {
            id: c,
            vocab_size: sr_rows.ncols(),
        });
    }
    if sr_rows.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidTarget("SR rows must be finite and non-negative".into()));
    }
    let k = clustering.k;
    let a = &clustering.assignments;
    let mut mass = Array2::<f64>::zeros((k, k));
    let mut sizes = vec![0usize; k];
    for src in 0..n {
        sizes[a[src]] += 1;
        for dst in 0..n {
            mass[[a[src], a[dst]]] += sr_rows[[src, columns[dst]]];
        }
    }
    let mut zero_rows = Vec::new();
    for c in 0..k {
        let total: f64 = mass.row(c).sum();
        if sizes[c] == 0 || total <= 0.0 {
            mass.row_mut(c).fill(0.0);
            zero_rows.push(c);
            continue;
        }
        // Averaging over the cluster's tokens then renormalizing is a single
        // row scaling.
        mass.row_mut(c).mapv_inplace(|v| v / total);
    }
    if !zero_rows.is_empty() {
        log::warn!("transition rows with no mass: {zero_rows:?}");
    }

    let (clusters, matrix, max_external) = match restrict {
        None => ((0..k).collect::<Vec<_>>(), mass, None),
        Some(subset) => {
            if let Some(&bad) = subset.iter().find(|&&c| c >= k) {
                return Err(Error::ParamOutOfRange(format!("cluster {bad} >= K = {k}")));
            }
            let m = subset.len();
            let sub = Array2::from_shape_fn((m, m), |(i, j)| mass[[subset[i], subset[j]]]);
            let ext = subset
                .iter()
                .map(|&s| {
                    (0..k)
                        .filter(|c| !subset.contains(c))
                        .map(|c| mass[[s, c]])
                        .fold(0.0, f64::max)
                })
                .collect();
            (subset.to_vec(), sub, Some(ext))
        }
    };
    let zero_rows = zero_rows.into_iter().filter(|c| clusters.contains(c)).collect();

    let mut edges = Vec::new();
    for (i, row) in matrix.outer_iter().enumerate() {
        let mut order: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
        order.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
        for &j in order.iter().take(top_k) {
            edges.push(Edge {
                source: clusters[i],
                target: clusters[j],
                weight: row[j],
            });
        }
    }

    Ok(TransitionNetwork {
        clusters,
        matrix,
        edges,
        max_external,
        zero_rows,
    })
}

// ---------------------------------------------------------------------------
// Alignment

/// Minimum-cost assignment of each row to a distinct column (rows <= cols).
fn hungarian(cost: &Array2<i64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    assert!(n <= m);
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Relabels `b` so its clusters carry the labels of the `a` clusters they
/// overlap most, using a maximum-total-overlap matching. Clusters of `b`
/// left without a partner get fresh labels from `a.k` upwards.
pub fn align_clusterings(a: &ClusteringResult, b: &ClusteringResult) -> Result<ClusteringResult> {
    if a.assignments.len() != b.assignments.len() {
        return Err(Error::ShapeError(format!(
            "cannot align partitions of {} and {} items",
            a.assignments.len(),
            b.assignments.len()
        )));
    }
    let (ka, kb) = (a.k, b.k);
    let m = ka.max(kb);
    let mut cost = Array2::<i64>::zeros((kb, m));
    for (&x, &y) in a.assignments.iter().zip(&b.assignments) {
        cost[[y, x]] -= 1;
    }
    let matched = hungarian(&cost);
    let mut fresh = ka;
    let relabel: Vec<usize> = matched
        .iter()
        .map(|&col| {
            if col < ka {
                col
            } else {
                fresh += 1;
                fresh - 1
            }
        })
        .collect();
    ClusteringResult::new(
        b.assignments.iter().map(|&y| relabel[y]).collect(),
        fresh,
        b.algorithm.clone(),
        b.seed,
    )
}
