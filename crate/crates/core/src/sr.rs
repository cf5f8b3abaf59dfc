//! Exact successor-representation mathematics and a tabular TD learner.
//!
//! All SRs here use the arrival convention: `M(s, s')` counts discounted
//! visits to `s'` from the next step onward, so `M = T (I - γT)^{-1}` and every
//! row sums to `1 / (1 - γ)`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::corpus::EncodedCorpus;
use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-9;
const DISTRIBUTION_TOL: f64 = 1e-6;

pub fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::DiscountOutOfRange(gamma))
    }
}

/// Row-stochastic next-state matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(Array2<f64>);

impl TransitionMatrix {
    pub fn new(t: Array2<f64>) -> Result<Self> {
        if t.nrows() != t.ncols() || t.nrows() == 0 {
            return Err(Error::ShapeError(format!(
                "transition matrix must be square and non-empty, got {:?}",
                t.shape()
            )));
        }
        for (i, row) in t.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::ParamOutOfRange(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::ParamOutOfRange(format!("row {i} sums to {sum}")));
            }
        }
        Ok(TransitionMatrix(t))
    }

    pub fn states(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn next_state<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = self.0.row(state);
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // Rounding left u above the cumulative sum; take the last reachable state.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(state)
    }

    /// Samples a trajectory of `len` states starting at `start`.
    pub fn sample_path<R: Rng + ?Sized>(&self, start: usize, len: usize, rng: &mut R) -> Vec<usize> {
        let mut path = Vec::with_capacity(len);
        let mut s = start;
        for _ in 0..len {
            path.push(s);
            s = self.next_state(s, rng);
        }
        path
    }
}

/// Expected discounted future occupancy matrix for one discount.
#[derive(Debug, Clone, PartialEq)]
pub struct SrMatrix {
    pub m: Array2<f64>,
    pub gamma: f64,
}

impl SrMatrix {
    pub fn zeros(states: usize, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(SrMatrix {
            m: Array2::zeros((states, states)),
            gamma,
        })
    }

    pub fn states(&self) -> usize {
        self.m.nrows()
    }

    /// `(1 - γ) M`, one probability row per source state.
    pub fn to_distribution(&self) -> SrDistributionTable {
        SrDistributionTable {
            p: &self.m * (1.0 - self.gamma),
            gamma: self.gamma,
        }
    }
}

/// Normalized SR: `P = (1 - γ) M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrDistributionTable {
    pub p: Array2<f64>,
    pub gamma: f64,
}

impl SrDistributionTable {
    pub fn to_sr(&self) -> SrMatrix {
        SrMatrix {
            m: &self.p / (1.0 - self.gamma),
            gamma: self.gamma,
        }
    }
}

/// Closed-form SR: solves `(I - γT) M = T`.
pub fn exact_sr_oracle(t: &TransitionMatrix, gamma: f64) -> Result<SrMatrix> {
    check_gamma(gamma)?;
    let s = t.states();
    let tm = DMatrix::from_row_iterator(s, s, t.matrix().iter().copied());
    let a = DMatrix::<f64>::identity(s, s) - &tm * gamma;
    let sol = a
        .lu()
        .solve(&tm)
        .ok_or_else(|| Error::NumericalFailure("singular (I - γT)".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite SR solution".into()));
    }
    let m = Array2::from_shape_fn((s, s), |(i, j)| sol[(i, j)]);
    Ok(SrMatrix { m, gamma })
}

/// `v(s) = Σ_s' M(s, s') r(s')`.
pub fn value_from_sr(sr: &SrMatrix, reward: ArrayView1<f64>) -> Result<Array1<f64>> {
    if reward.len() != sr.states() {
        return Err(Error::ShapeError(format!(
            "reward has {} entries for {} states",
            reward.len(),
            sr.states()
        )));
    }
    Ok(sr.m.dot(&reward))
}

pub fn distribution_from_sr(m_row: ArrayView1<f64>, gamma: f64) -> Result<Array1<f64>> {
    check_gamma(gamma)?;
    Ok(&m_row * (1.0 - gamma))
}

pub fn sr_from_distribution(p_row: ArrayView1<f64>, gamma: f64) -> Result<Array1<f64>> {
    check_gamma(gamma)?;
    Ok(&p_row / (1.0 - gamma))
}

/// One-step Bellman target `φ(s_{t+1}) + γ M̂(s_{t+1}, :)`.
pub fn one_step_target(next: usize, next_row: ArrayView1<f64>, gamma: f64) -> Result<Array1<f64>> {
    n_step_target(&[next], next_row, gamma, 1)
}

/// `Σ_{k<n} γ^k φ(s_{t+k+1}) + γ^n M̂(s_{t+n}, :)` where `future[k]` is
/// `s_{t+k+1}` and `boot_row` is the estimate for `s_{t+n}`.
pub fn n_step_target(
    future: &[usize],
    boot_row: ArrayView1<f64>,
    gamma: f64,
    n: usize,
) -> Result<Array1<f64>> {
    if n == 0 {
        return Err(Error::ParamOutOfRange("n must be >= 1".into()));
    }
    if future.len() < n {
        return Err(Error::InputTooShort(format!(
            "{} future states supplied for an {n}-step target",
            future.len()
        )));
    }
    let s = boot_row.len();
    let mut g = &boot_row * gamma.powi(n as i32);
    for (k, &state) in future[..n].iter().enumerate() {
        if state >= s {
            return Err(Error::ShapeError(format!("state {state} >= {s}")));
        }
        g[state] += gamma.powi(k as i32);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetScale {
    /// Raw occupancy: one-hot features and raw SR bootstrap rows.
    Raw,
    /// Distributional: one-hot scaled by `1 - γ`, bootstrap rows are
    /// probability rows, every target sums to one.
    Normalized,
}

/// λ-return targets for one window, one row per position `0..L-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaReturnTargets {
    pub g: Array2<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

/// Backward λ-return recursion over a window.
///
/// `bootstrap` has one row per window position; row `t` is the bootstrap
/// estimate for the state at position `t` (row 0 is never read). The result
/// has `L - 1` rows since the final position has no successor.
pub fn lambda_return_targets(
    window: &[usize],
    bootstrap: ArrayView2<f64>,
    gamma: f64,
    lambda: f64,
    scale: TargetScale,
) -> Result<LambdaReturnTargets> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::ParamOutOfRange(format!("gamma {gamma} not in [0, 1)")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::ParamOutOfRange(format!("lambda {lambda} not in [0, 1]")));
    }
    let len = window.len();
    if len < 2 {
        return Err(Error::InputTooShort("window needs at least 2 positions".into()));
    }
    if bootstrap.nrows() != len {
        return Err(Error::ShapeError(format!(
            "{} bootstrap rows for a window of {len}",
            bootstrap.nrows()
        )));
    }
    let states = bootstrap.ncols();
    if let Some(&bad) = window.iter().find(|&&s| s >= states) {
        return Err(Error::ShapeError(format!("state {bad} >= {states}")));
    }
    let feature_scale = match scale {
        TargetScale::Raw => 1.0,
        TargetScale::Normalized => {
            for t in 1..len {
                let sum = bootstrap.row(t).sum();
                if (sum - 1.0).abs() > DISTRIBUTION_TOL {
                    return Err(Error::InvalidTarget(format!(
                        "bootstrap row {t} sums to {sum}"
                    )));
                }
            }
            1.0 - gamma
        }
    };

    let mut g = Array2::<f64>::zeros((len - 1, states));
    let last = len - 2;
    {
        let mut row = g.row_mut(last);
        row.scaled_add(gamma, &bootstrap.row(len - 1));
        row[window[len - 1]] += feature_scale;
    }
    for t in (0..last).rev() {
        let (mut head, tail) = g.view_mut().split_at(Axis(0), t + 1);
        let mut row = head.row_mut(t);
        let next = tail.row(0);
        row.scaled_add(gamma * (1.0 - lambda), &bootstrap.row(t + 1));
        row.scaled_add(gamma * lambda, &next);
        row[window[t + 1]] += feature_scale;
    }
    Ok(LambdaReturnTargets { g, gamma, lambda })
}

/// Step-size schedule for the tabular learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Constant(f64),
    /// `α_k = α0 / (1 + k / κ)` where `k` counts updates so far.
    Harmonic { alpha0: f64, kappa: f64 },
}

impl LearningRate {
    pub fn at(&self, k: u64) -> f64 {
        match *self {
            LearningRate::Constant(a) => a,
            LearningRate::Harmonic { alpha0, kappa } => alpha0 / (1.0 + k as f64 / kappa),
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, ok_kappa) = match *self {
            LearningRate::Constant(a) => (a, true),
            LearningRate::Harmonic { alpha0, kappa } => (alpha0, kappa > 0.0),
        };
        if !(0.0..=1.0).contains(&a) || !ok_kappa {
            return Err(Error::ParamOutOfRange(format!("bad learning rate {self:?}")));
        }
        Ok(())
    }
}

/// Tabular TD(λ) learner over raw occupancy.
///
/// Windows are independent: each window's targets are built from a snapshot
/// of the table taken when the window starts, and the final position of every
/// window receives no update.
#[derive(Debug, Clone)]
pub struct TabularLearner {
    pub table: SrMatrix,
    pub lambda: f64,
    pub rate: LearningRate,
    pub updates: u64,
}

impl TabularLearner {
    pub fn new(states: usize, gamma: f64, lambda: f64, rate: LearningRate) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::ParamOutOfRange(format!("lambda {lambda} not in [0, 1]")));
        }
        rate.validate()?;
        Ok(TabularLearner {
            table: SrMatrix::zeros(states, gamma)?,
            lambda,
            rate,
            updates: 0,
        })
    }

    /// One pass over the corpus. Returns the mean L1 norm of the TD error
    /// `G_t - M̂(s_t, :)` over all updates.
    pub fn sweep(&mut self, corpus: &EncodedCorpus) -> Result<f64> {
        let states = self.table.states();
        let mut total_err = 0.0;
        let mut n = 0u64;
        for w in &corpus.windows {
            let window: Vec<usize> = w.iter().map(|&id| id as usize).collect();
            if let Some(&bad) = window.iter().find(|&&s| s >= states) {
                return Err(Error::ShapeError(format!(
                    "token {bad} outside table of {states} states"
                )));
            }
            let boot = self.table.m.select(Axis(0), &window);
            let targets = lambda_return_targets(
                &window,
                boot.view(),
                self.table.gamma,
                self.lambda,
                TargetScale::Raw,
            )?;
            for (t, g) in targets.g.rows().into_iter().enumerate() {
                let alpha = self.rate.at(self.updates);
                let mut row = self.table.m.row_mut(window[t]);
                let mut err = 0.0;
                row.zip_mut_with(&g, |m, &target| {
                    let delta = target - *m;
                    err += delta.abs();
                    *m += alpha * delta;
                });
                total_err += err;
                n += 1;
                self.updates += 1;
            }
        }
        Ok(if n == 0 { 0.0 } else { total_err / n as f64 })
    }
}

/// Sup-norm distance between two equally shaped matrices.
pub fn linf_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
