//! Aggregates a label matrix into probabilistic labels `P(y | L)`.
//!
//! Two models sit behind [`LabelModelConfig::kind`]: a smoothed majority vote
//! and a one-coin accuracy model fitted by EM (each LF is correct with
//! probability `a_j` whenever it votes).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lf::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelModelKind {
    #[default]
    Majority,
    WeightedEm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelModelConfig {
    pub kind: LabelModelKind,
    pub prior_positive: f64,
    pub em_iters: usize,
    /// Stop once no LF accuracy moves by more than this between iterations.
    pub em_tol: f64,
    /// Pseudo-count added to both outcomes.
    pub smoothing: f64,
}

impl Default for LabelModelConfig {
    fn default() -> Self {
        LabelModelConfig {
            kind: LabelModelKind::Majority,
            prior_positive: 0.5,
            em_iters: 100,
            em_tol: 1e-9,
            smoothing: 1.0,
        }
    }
}

impl LabelModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_positive > 0.0 && self.prior_positive < 1.0) {
            return Err(Error::Config("label_model.prior_positive must be in (0,1)".into()));
        }
        if self.em_iters == 0 {
            return Err(Error::Config("label_model.em_iters must be >= 1".into()));
        }
        if self.smoothing.is_nan() || self.smoothing <= 0.0 {
            return Err(Error::Config("label_model.smoothing must be > 0".into()));
        }
        if self.em_tol.is_nan() || self.em_tol < 0.0 {
            return Err(Error::Config("label_model.em_tol must be >= 0".into()));
        }
        Ok(())
    }
}

pub const ACCURACY_CLAMP: (f64, f64) = (0.05, 0.95);
const EM_INIT_ACCURACY: f64 = 0.7;

/// Per-row posterior `P(y=+1 | L)`; `P(y=-1 | L) = 1 - p_pos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub rows: Vec<usize>,
    pub p_pos: Vec<f64>,
    /// Shannon entropy in nats.
    pub uncertainty: Vec<f64>,
    pub covered: Vec<bool>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn probs(&self, r: usize) -> (f64, f64) {
        (self.p_pos[r], 1.0 - self.p_pos[r])
    }

    /// Row position of example `id`; rows are kept in ascending id order.
    pub fn row_of(&self, id: usize) -> Option<usize> {
        self.rows.binary_search(&id).ok()
    }

    pub fn uncertainty_of(&self, id: usize) -> Option<f64> {
        self.row_of(id).map(|r| self.uncertainty[r])
    }

    pub fn num_covered(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "id,p_pos,uncertainty,covered")?;
        for r in 0..self.rows.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.rows[r], self.p_pos[r], self.uncertainty[r], self.covered[r]
            )?;
        }
        Ok(())
    }
}

/// Binary entropy `-Σ p ln p` in nats with `0 ln 0 = 0`.
pub fn entropy(p_pos: f64) -> f64 {
    fn term(p: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else {
            -p * p.ln()
        }
    }
    term(p_pos) + term(1.0 - p_pos)
}

pub fn uncertainty(posterior: &Posterior, row: usize) -> f64 {
    posterior.uncertainty[row]
}

fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// A fitted aggregator that can score any matrix with the same columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedLabelModel {
    Majority {
        smoothing: f64,
        prior_positive: f64,
    },
    WeightedEm {
        accuracies: Vec<f64>,
        prior_positive: f64,
        /// Penalized observed-data log-likelihood before each M-step.
        objective_trace: Vec<f64>,
    },
}

impl FittedLabelModel {
    pub fn posterior(&self, matrix: &LabelMatrix) -> Posterior {
        match self {
            FittedLabelModel::Majority {
                smoothing,
                prior_positive,
            } => majority_posterior(matrix, *smoothing, *prior_positive),
            FittedLabelModel::WeightedEm {
                accuracies,
                prior_positive,
                ..
            } => one_coin_posterior(matrix, accuracies, *prior_positive).0,
        }
    }

    pub fn accuracies(&self) -> Option<&[f64]> {
        match self {
            FittedLabelModel::WeightedEm { accuracies, .. } => Some(accuracies),
            FittedLabelModel::Majority { .. } => None,
        }
    }
}

fn finish(rows: Vec<usize>, p_pos: Vec<f64>, covered: Vec<bool>) -> Posterior {
    let uncertainty = p_pos.iter().map(|&p| entropy(p)).collect();
    Posterior {
        rows,
        p_pos,
        uncertainty,
        covered,
    }
}

fn majority_posterior(matrix: &LabelMatrix, s: f64, prior: f64) -> Posterior {
    let mut p_pos = Vec::with_capacity(matrix.num_rows());
    let mut covered = Vec::with_capacity(matrix.num_rows());
    for r in 0..matrix.num_rows() {
        let (mut pos, mut neg) = (0usize, 0usize);
        for &v in matrix.row(r) {
            match v {
                1 => pos += 1,
                -1 => neg += 1,
                _ => {}
            }
        }
        if pos + neg == 0 {
            p_pos.push(prior);
            covered.push(false);
        } else {
            p_pos.push((pos as f64 + s) / ((pos + neg) as f64 + 2.0 * s));
            covered.push(true);
        }
    }
    finish(matrix.rows.clone(), p_pos, covered)
}

/// One-coin posterior for fixed accuracies. Also returns the observed-data
/// log-likelihood `Σ_rows ln Σ_y P(y) Π_j P(vote_j | y)`.
pub fn one_coin_posterior(matrix: &LabelMatrix, accuracies: &[f64], prior: f64) -> (Posterior, f64) {
    assert_eq!(accuracies.len(), matrix.num_lfs);
    let ln_a: Vec<f64> = accuracies.iter().map(|a| a.ln()).collect();
    let ln_not_a: Vec<f64> = accuracies.iter().map(|a| (1.0 - a).ln()).collect();
    let (ln_prior_pos, ln_prior_neg) = (prior.ln(), (1.0 - prior).ln());
    let mut p_pos = Vec::with_capacity(matrix.num_rows());
    let mut covered = Vec::with_capacity(matrix.num_rows());
    let mut loglik = 0.0;
    for r in 0..matrix.num_rows() {
        let (mut lp, mut ln) = (ln_prior_pos, ln_prior_neg);
        let mut any = false;
        for (j, &v) in matrix.row(r).iter().enumerate() {
            match v {
                1 => {
                    lp += ln_a[j];
                    ln += ln_not_a[j];
                    any = true;
                }
                -1 => {
                    lp += ln_not_a[j];
                    ln += ln_a[j];
                    any = true;
                }
                _ => {}
            }
        }
        if any {
            p_pos.push(sigmoid(lp - ln));
            loglik += log_sum_exp(lp, ln);
        } else {
            p_pos.push(prior);
        }
        covered.push(any);
    }
    (finish(matrix.rows.clone(), p_pos, covered), loglik)
}

fn penalty(accuracies: &[f64], s: f64) -> f64 {
    accuracies.iter().map(|a| s * (a.ln() + (1.0 - a).ln())).sum()
}

/// Fits the configured aggregator on `matrix`.
pub fn fit(matrix: &LabelMatrix, config: &LabelModelConfig) -> FittedLabelModel {
    match config.kind {
        LabelModelKind::Majority => FittedLabelModel::Majority {
            smoothing: config.smoothing,
            prior_positive: config.prior_positive,
        },
        LabelModelKind::WeightedEm => fit_em(matrix, config),
    }
}

fn fit_em(matrix: &LabelMatrix, config: &LabelModelConfig) -> FittedLabelModel {
    let (lo, hi) = ACCURACY_CLAMP;
    let s = config.smoothing;
    let prior = config.prior_positive;
    let mut acc = vec![EM_INIT_ACCURACY; matrix.num_lfs];
    let mut trace = Vec::new();
    for _ in 0..config.em_iters {
        let (post, loglik) = one_coin_posterior(matrix, &acc, prior);
        trace.push(loglik + penalty(&acc, s));
        let mut agree = vec![0.0; matrix.num_lfs];
        let mut count = vec![0usize; matrix.num_lfs];
        for r in 0..matrix.num_rows() {
            let p = post.p_pos[r];
            for (j, &v) in matrix.row(r).iter().enumerate() {
                match v {
                    1 => {
                        agree[j] += p;
                        count[j] += 1;
                    }
                    -1 => {
                        agree[j] += 1.0 - p;
                        count[j] += 1;
                    }
                    _ => {}
                }
            }
        }
        // the objective flattens below rounding well before the accuracies
        // settle, so convergence is judged on the parameters
        let mut shift: f64 = 0.0;
        for j in 0..matrix.num_lfs {
            let next = ((agree[j] + s) / (count[j] as f64 + 2.0 * s)).clamp(lo, hi);
            shift = shift.max((next - acc[j]).abs());
            acc[j] = next;
        }
        if shift <= config.em_tol {
            break;
        }
    }
    FittedLabelModel::WeightedEm {
        accuracies: acc,
        prior_positive: prior,
        objective_trace: trace,
    }
}

/// Fits and scores the same matrix. An all-abstain matrix yields pure priors.
pub fn fit_posterior(matrix: &LabelMatrix, config: &LabelModelConfig) -> Posterior {
    fit(matrix, config).posterior(matrix)
}

/// Penalized objective maximized by EM, exposed for oracle checks.
pub fn em_objective(matrix: &LabelMatrix, accuracies: &[f64], config: &LabelModelConfig) -> f64 {
    one_coin_posterior(matrix, accuracies, config.prior_positive).1 + penalty(accuracies, config.smoothing)
}
