//! Scoring functions, softmax inference, and the constrained conditional
//! model `f^μ = f − μ·v_C`.

use std::fmt;

use crate::constraint::{ConstraintMap, Instance, LabelSet};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// CCM tradeoff `μ ∈ [0, ∞]`. `Infinite` selects strict inference and is
/// never approximated by a large finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mu {
    Finite(f64),
    Infinite,
}

impl Mu {
    pub const ZERO: Mu = Mu::Finite(0.0);

    /// `f64::INFINITY` maps to [`Mu::Infinite`]; negative or NaN is rejected.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            Err(Error::Domain(format!("mu must lie in [0, inf], got {value}")))
        } else if value.is_infinite() {
            Ok(Mu::Infinite)
        } else {
            Ok(Mu::Finite(value))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Mu::Infinite)
    }

    pub fn value(self) -> f64 {
        match self {
            Mu::Finite(v) => v,
            Mu::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Mu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mu::Finite(v) => write!(f, "{v}"),
            Mu::Infinite => f.write_str("inf"),
        }
    }
}

/// Log-softmax with max-score subtraction. Rejects non-finite scores.
pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if let Some((label, &value)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
        return Err(Error::InvalidScore { label, value });
    }
    Ok(centered_log_normalize(scores, |_| true))
}

/// `s_y − max − log Σ_{keep} exp(s − max)` for kept labels, `-inf` elsewhere.
fn centered_log_normalize<K: Fn(usize) -> bool>(scores: &[f64], keep: K) -> Vec<f64> {
    let max = scores
        .iter()
        .enumerate()
        .filter(|(y, _)| keep(*y))
        .fold(f64::NEG_INFINITY, |m, (_, s)| m.max(*s));
    let centered: Vec<f64> = scores.iter().map(|s| s - max).collect();
    let log_z = log_sum_exp(
        centered
            .iter()
            .enumerate()
            .filter(|(y, _)| keep(*y))
            .map(|(_, v)| *v),
    );
    centered
        .iter()
        .enumerate()
        .map(|(y, v)| if keep(y) { v - log_z } else { f64::NEG_INFINITY })
        .collect()
}

pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    Ok(log_softmax(scores)?.into_iter().map(f64::exp).collect())
}

/// Log-probabilities of the CCM `f^μ` at one instance. With `μ = ∞` the
/// inadmissible labels get `-inf` and the rest are renormalized over `C(x)`.
pub fn ccm_log_softmax(scores: &[f64], admissible: LabelSet, mu: Mu) -> Result<Vec<f64>> {
    match mu {
        Mu::Finite(m) => {
            let shifted = shift_scores(scores, admissible, m);
            log_softmax(&shifted)
        }
        Mu::Infinite => {
            log_softmax(scores)?;
            Ok(centered_log_normalize(scores, |y| admissible.contains(y)))
        }
    }
}

/// `f(x, y) − μ·1{y ∉ C(x)}` for finite `μ`.
pub fn shift_scores(scores: &[f64], admissible: LabelSet, mu: f64) -> Vec<f64> {
    scores
        .iter()
        .enumerate()
        .map(|(y, s)| if admissible.contains(y) { *s } else { s - mu })
        .collect()
}

/// A scoring function `f: X × Y → R` with softmax inference.
pub trait Scorer: Send + Sync {
    fn num_labels(&self) -> usize;

    /// Raw scores `f(x, ·)`. Strict CCMs report `-inf` on excluded labels.
    fn scores(&self, x: &Instance) -> Result<Vec<f64>>;

    /// Log of the predicted distribution.
    fn log_predict(&self, x: &Instance) -> Result<Vec<f64>> {
        log_softmax(&self.scores(x)?)
    }

    fn predict(&self, x: &Instance) -> Result<Vec<f64>> {
        Ok(self.log_predict(x)?.into_iter().map(f64::exp).collect())
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn num_labels(&self) -> usize {
        (**self).num_labels()
    }
    fn scores(&self, x: &Instance) -> Result<Vec<f64>> {
        (**self).scores(x)
    }
    fn log_predict(&self, x: &Instance) -> Result<Vec<f64>> {
        (**self).log_predict(x)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn num_labels(&self) -> usize {
        (**self).num_labels()
    }
    fn scores(&self, x: &Instance) -> Result<Vec<f64>> {
        (**self).scores(x)
    }
    fn log_predict(&self, x: &Instance) -> Result<Vec<f64>> {
        (**self).log_predict(x)
    }
}

/// Softmax prediction of a scorer at an instance.
pub fn softmax_predict<S: Scorer + ?Sized>(scorer: &S, x: &Instance) -> Result<Vec<f64>> {
    softmax(&scorer.scores(x)?)
}

/// Prediction of a CCM at an instance.
pub fn ccm_predict<S: Scorer>(model: &CcmModel<S>, x: &Instance) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Index of the maximal score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (y, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = y;
        }
    }
    best
}

pub fn argmax_label<S: Scorer + ?Sized>(scorer: &S, x: &Instance) -> Result<usize> {
    Ok(argmax(&scorer.scores(x)?))
}

/// `f(x, j) = w_jᵀx`, with an optional budget `Σ_j ‖w_j‖² ≤ B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    weights: Vec<Vec<f64>>,
    norm_budget: Option<f64>,
}

impl LinearScorer {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        let dim = weights.first().map_or(0, Vec::len);
        if weights.len() < 2 {
            return Err(Error::InvalidLabelSpace(weights.len()));
        }
        for row in &weights {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        Ok(Self {
            weights,
            norm_budget: None,
        })
    }

    pub fn zeros(labels: usize, dim: usize) -> Self {
        Self {
            weights: vec![vec![0.0; dim]; labels],
            norm_budget: None,
        }
    }

    /// Attaches a budget and projects onto it.
    pub fn with_budget(mut self, budget: f64) -> Result<Self> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(Error::Domain(format!("norm budget must be >= 0, got {budget}")));
        }
        self.norm_budget = Some(budget);
        self.project();
        Ok(self)
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn norm_budget(&self) -> Option<f64> {
        self.norm_budget
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum()
    }

    /// Flattened row-major parameters.
    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    pub fn from_flat(labels: usize, dim: usize, flat: &[f64]) -> Self {
        Self {
            weights: flat.chunks(dim.max(1)).take(labels).map(<[f64]>::to_vec).collect(),
            norm_budget: None,
        }
    }

    /// Euclidean projection onto `Σ‖w_j‖² ≤ B` when a budget is set.
    pub fn project(&mut self) {
        if let Some(b) = self.norm_budget {
            project_to_ball(self.weights.iter_mut().flatten(), b);
        }
    }

    pub fn score_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .map(|w| w.iter().zip(features).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Scales the values onto `Σ v² ≤ budget` if they lie outside.
pub fn project_to_ball<'a, I>(values: I, budget: f64)
where
    I: IntoIterator<Item = &'a mut f64>,
{
    let mut vals: Vec<&mut f64> = values.into_iter().collect();
    let sq: f64 = vals.iter().map(|v| **v * **v).sum();
    if sq > budget {
        let scale = if sq > 0.0 { (budget / sq).sqrt() } else { 0.0 };
        for v in vals.iter_mut() {
            **v *= scale;
        }
    }
}

impl Scorer for LinearScorer {
    fn num_labels(&self) -> usize {
        self.weights.len()
    }

    fn scores(&self, x: &Instance) -> Result<Vec<f64>> {
        self.score_features(&x.features)
    }
}

/// Tabulated scores, one finite row per instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    labels: usize,
    rows: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(labels: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if labels < 2 {
            return Err(Error::InvalidLabelSpace(labels));
        }
        for row in &rows {
            if row.len() != labels {
                return Err(Error::DimensionMismatch {
                    expected: labels,
                    found: row.len(),
                });
            }
            if let Some((label, &value)) = row.iter().enumerate().find(|(_, s)| !s.is_finite()) {
                return Err(Error::InvalidScore { label, value });
            }
        }
        Ok(Self { labels, rows })
    }

    /// Rows of log-probabilities; each row must be a strictly positive
    /// probability vector.
    pub fn from_probabilities(rows: &[Vec<f64>]) -> Result<Self> {
        let labels = rows.first().map_or(0, Vec::len);
        Self::new(
            labels,
            rows.iter()
                .map(|r| r.iter().map(|p| p.ln()).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Partition sums `(Z^C, Z^{-C})` at one row.
    pub fn partition_sums(&self, id: usize, admissible: LabelSet) -> Result<(f64, f64)> {
        let row = self.row(id)?;
        let mut inside = 0.0;
        let mut outside = 0.0;
        for (y, s) in row.iter().enumerate() {
            if admissible.contains(y) {
                inside += s.exp();
            } else {
                outside += s.exp();
            }
        }
        Ok((inside, outside))
    }

    pub fn row(&self, id: usize) -> Result<&[f64]> {
        self.rows
            .get(id)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownInstance {
                id,
                len: self.rows.len(),
            })
    }
}

impl Scorer for ScoreTable {
    fn num_labels(&self) -> usize {
        self.labels
    }

    fn scores(&self, x: &Instance) -> Result<Vec<f64>> {
        Ok(self.row(x.id)?.to_vec())
    }
}

/// The constrained conditional model `f^μ(x, y) = f(x, y) − μ·v_C(x, y)`.
#[derive(Debug, Clone)]
pub struct CcmModel<S> {
    pub base: S,
    pub mu: Mu,
    pub cmap: ConstraintMap,
}

impl<S: Scorer> CcmModel<S> {
    pub fn new(base: S, mu: Mu, cmap: ConstraintMap) -> Self {
        Self { base, mu, cmap }
    }
}

impl<S: Scorer> Scorer for CcmModel<S> {
    fn num_labels(&self) -> usize {
        self.base.num_labels()
    }

    fn scores(&self, x: &Instance) -> Result<Vec<f64>> {
        let s = self.base.scores(x)?;
        let adm = self.cmap.admissible(x.id)?;
        Ok(match self.mu {
            Mu::Finite(m) => shift_scores(&s, adm, m),
            Mu::Infinite => s
                .iter()
                .enumerate()
                .map(|(y, v)| if adm.contains(y) { *v } else { f64::NEG_INFINITY })
                .collect(),
        })
    }

    fn log_predict(&self, x: &Instance) -> Result<Vec<f64>> {
        let s = self.base.scores(x)?;
        ccm_log_softmax(&s, self.cmap.admissible(x.id)?, self.mu)
    }
}

/// The fixed scorer `(x, y) ↦ −μ·v_C(x, y)`.
#[derive(Debug, Clone)]
pub struct ViolationPenalty {
    pub mu: f64,
    pub cmap: ConstraintMap,
}

impl Scorer for ViolationPenalty {
    fn num_labels(&self) -> usize {
        self.cmap.labels().count()
    }

    fn scores(&self, x: &Instance) -> Result<Vec<f64>> {
        let adm = self.cmap.admissible(x.id)?;
        Ok((0..self.num_labels())
            .map(|y| if adm.contains(y) { 0.0 } else { -self.mu })
            .collect())
    }
}

/// Either concrete scorer kind; what training returns.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyScorer {
    Linear(LinearScorer),
    Table(ScoreTable),
}

impl Scorer for AnyScorer {
    fn num_labels(&self) -> usize {
        match self {
            AnyScorer::Linear(s) => s.num_labels(),
            AnyScorer::Table(s) => s.num_labels(),
        }
    }

    fn scores(&self, x: &Instance) -> Result<Vec<f64>> {
        match self {
            AnyScorer::Linear(s) => s.scores(x),
            AnyScorer::Table(s) => s.scores(x),
        }
    }
}

impl From<LinearScorer> for AnyScorer {
    fn from(s: LinearScorer) -> Self {
        AnyScorer::Linear(s)
    }
}

impl From<ScoreTable> for AnyScorer {
    fn from(s: ScoreTable) -> Self {
        AnyScorer::Table(s)
    }
}
