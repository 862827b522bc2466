//! Loss and violation functionals: pointwise, empirical, and exact
//! population forms, with analytic gradients in score space and for linear
//! scorers.

use std::fmt;
use std::str::FromStr;

use crate::constraint::{ConstraintMap, Dataset, FiniteDistribution, Instance, LabelSet};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, softplus, CompensatedSum};
use crate::scoring::{argmax, ccm_log_softmax, LinearScorer, Mu, Scorer};

/// Cross-entropy and margin values are clamped here when the gold label has
/// probability exactly zero (strict inference with `y_ora ∉ C(x)`).
pub const STRICT_LOSS_CAP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Ell1,
    CrossEntropy,
    HingeMargin,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ell1 => "ell1",
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::HingeMargin => "hinge_margin",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ell1" | "l1" => Ok(LossKind::Ell1),
            "cross_entropy" | "ce" => Ok(LossKind::CrossEntropy),
            "hinge_margin" | "hinge" => Ok(LossKind::HingeMargin),
            other => Err(Error::Domain(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// Whether a report is an exact population value or a sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Empirical(usize),
    ExactPopulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub kind: LossKind,
    pub risk: f64,
    pub violation_l1: f64,
    pub violation_ce: f64,
    pub margin: Option<f64>,
    pub basis: Basis,
}

impl RiskReport {
    /// Column order of [`RiskReport::to_csv_row`].
    pub const CSV_HEADER: &'static str = "basis,samples,kind,risk,violation_l1,violation_ce,margin";

    pub fn to_csv_row(&self) -> String {
        let (basis, n) = match self.basis {
            Basis::Empirical(m) => ("empirical", m.to_string()),
            Basis::ExactPopulation => ("population", String::new()),
        };
        let margin = self.margin.map(fmt_real).unwrap_or_default();
        format!(
            "{basis},{n},{},{},{},{},{margin}",
            self.kind,
            fmt_real(self.risk),
            fmt_real(self.violation_l1),
            fmt_real(self.violation_ce)
        )
    }

    /// `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        match self.basis {
            Basis::Empirical(m) => out.push_str(&format!("basis = empirical\nsamples = {m}\n")),
            Basis::ExactPopulation => out.push_str("basis = population\n"),
        }
        out.push_str(&format!("kind = {}\n", self.kind));
        out.push_str(&format!("risk = {}\n", fmt_real(self.risk)));
        out.push_str(&format!("violation_l1 = {}\n", fmt_real(self.violation_l1)));
        out.push_str(&format!("violation_ce = {}\n", fmt_real(self.violation_ce)));
        if let Some(m) = self.margin {
            out.push_str(&format!("margin = {}\n", fmt_real(m)));
        }
        out
    }
}

/// 17 significant digits; round-trips through `str::parse::<f64>`.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn cap(v: f64) -> f64 {
    v.min(STRICT_LOSS_CAP)
}

/// `−log p` from a log-probability, clamped at [`STRICT_LOSS_CAP`].
pub fn cross_entropy_from_log(log_p: f64) -> f64 {
    cap(-log_p).max(0.0)
}

/// `max_y f(x, y) − f(x, gold)`.
pub fn margin(scores: &[f64], gold: usize) -> f64 {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores[gold] == f64::NEG_INFINITY {
        return STRICT_LOSS_CAP;
    }
    cap(best - scores[gold])
}

/// Margin of the loss-augmented scores `f + ℓ`, with `ℓ(y, gold) = 1{y ≠ gold}`.
pub fn hinge_loss(scores: &[f64], gold: usize) -> f64 {
    hinge_loss_with(scores, gold, |y, g| if y == g { 0.0 } else { 1.0 })
}

/// Margin of `f + ℓ` for a caller-supplied label cost.
pub fn hinge_loss_with<L: Fn(usize, usize) -> f64>(scores: &[f64], gold: usize, cost: L) -> f64 {
    let augmented: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(y, s)| s + cost(y, gold))
        .collect();
    margin(&augmented, gold)
}

/// `(v_ℓ¹, v_ce)` at one instance from model log-probabilities.
pub fn violation_from_log(log_p: &[f64], admissible: LabelSet) -> (f64, f64) {
    let inside = log_sum_exp(
        log_p
            .iter()
            .enumerate()
            .filter(|(y, _)| admissible.contains(*y))
            .map(|(_, v)| *v),
    );
    let outside_terms = log_p
        .iter()
        .enumerate()
        .filter(|(y, _)| !admissible.contains(*y))
        .map(|(_, v)| *v);
    let outside = log_sum_exp(outside_terms.clone());
    if outside == f64::NEG_INFINITY {
        return (0.0, 0.0);
    }
    let mut l1 = CompensatedSum::new();
    l1.extend(outside_terms.map(f64::exp));
    (l1.value(), cap(softplus(outside - inside)))
}

fn check_gold(labels: usize, gold: usize) -> Result<()> {
    if gold < labels {
        Ok(())
    } else {
        Err(Error::LabelOutOfRange {
            label: gold,
            count: labels,
        })
    }
}

fn loss_from_parts(kind: LossKind, log_p: &[f64], scores: &[f64], gold: usize) -> f64 {
    match kind {
        LossKind::Ell1 => 1.0 - log_p[gold].exp(),
        LossKind::CrossEntropy => cross_entropy_from_log(log_p[gold]),
        LossKind::HingeMargin => hinge_loss(scores, gold),
    }
}

/// Loss of `scorer` at `(x, gold)`.
pub fn pointwise_loss<S: Scorer + ?Sized>(
    kind: LossKind,
    scorer: &S,
    x: &Instance,
    gold: usize,
) -> Result<f64> {
    check_gold(scorer.num_labels(), gold)?;
    Ok(match kind {
        LossKind::Ell1 => 1.0 - scorer.log_predict(x)?[gold].exp(),
        LossKind::CrossEntropy => cross_entropy_from_log(scorer.log_predict(x)?[gold]),
        LossKind::HingeMargin => hinge_loss(&scorer.scores(x)?, gold),
    })
}

/// `v_C(x, f)` (ℓ¹) or `v_ce(x, f)` at one instance.
pub fn pointwise_violation<S: Scorer + ?Sized>(
    kind: LossKind,
    scorer: &S,
    cmap: &ConstraintMap,
    x: &Instance,
) -> Result<f64> {
    let adm = cmap.admissible(x.id)?;
    let (l1, ce) = violation_from_log(&scorer.log_predict(x)?, adm);
    match kind {
        LossKind::Ell1 => Ok(l1),
        LossKind::CrossEntropy => Ok(ce),
        LossKind::HingeMargin => Err(Error::Domain(
            "violation is defined for ell1 and cross_entropy only".into(),
        )),
    }
}

/// Exact population risk, violations, and margin of a scorer.
pub fn population_risk<S: Scorer + ?Sized>(
    dist: &FiniteDistribution,
    scorer: &S,
    kind: LossKind,
) -> Result<RiskReport> {
    let cmap = dist.constraint();
    let mut risk = CompensatedSum::new();
    let mut v1 = CompensatedSum::new();
    let mut vce = CompensatedSum::new();
    let mut mar = CompensatedSum::new();
    for p in dist.points() {
        let scores = scorer.scores(&p.instance)?;
        let log_p = scorer.log_predict(&p.instance)?;
        let (l1, ce) = violation_from_log(&log_p, cmap.admissible(p.instance.id)?);
        risk.add(p.weight * loss_from_parts(kind, &log_p, &scores, p.oracle));
        v1.add(p.weight * l1);
        vce.add(p.weight * ce);
        mar.add(p.weight * margin(&scores, p.oracle));
    }
    Ok(RiskReport {
        kind,
        risk: risk.value(),
        violation_l1: v1.value(),
        violation_ce: vce.value(),
        margin: Some(mar.value()),
        basis: Basis::ExactPopulation,
    })
}

/// Mean loss over `S_L`; violation fields average over `S_U`, or over the
/// labeled instances when `S_U` is empty.
pub fn empirical_risk<S: Scorer + ?Sized>(
    dataset: &Dataset,
    scorer: &S,
    cmap: &ConstraintMap,
    kind: LossKind,
) -> Result<RiskReport> {
    if dataset.labeled.is_empty() {
        return Err(Error::EmptySplit("labeled"));
    }
    let n = dataset.labeled.len() as f64;
    let mut risk = CompensatedSum::new();
    let mut mar = CompensatedSum::new();
    for s in &dataset.labeled {
        check_gold(scorer.num_labels(), s.label)?;
        let scores = scorer.scores(&s.instance)?;
        let log_p = scorer.log_predict(&s.instance)?;
        risk.add(loss_from_parts(kind, &log_p, &scores, s.label));
        mar.add(margin(&scores, s.label));
    }
    let pool: Vec<&Instance> = if dataset.unlabeled.is_empty() {
        dataset.labeled.iter().map(|s| &s.instance).collect()
    } else {
        dataset.unlabeled.iter().collect()
    };
    let (v1, vce) = mean_violations(scorer, cmap, &pool)?;
    Ok(RiskReport {
        kind,
        risk: risk.value() / n,
        violation_l1: v1,
        violation_ce: vce,
        margin: Some(mar.value() / n),
        basis: Basis::Empirical(dataset.labeled.len()),
    })
}

/// Mean violation over `S_U`.
pub fn empirical_violation<S: Scorer + ?Sized>(
    dataset: &Dataset,
    scorer: &S,
    cmap: &ConstraintMap,
    kind: LossKind,
) -> Result<f64> {
    if dataset.unlabeled.is_empty() {
        return Err(Error::EmptySplit("unlabeled"));
    }
    let pool: Vec<&Instance> = dataset.unlabeled.iter().collect();
    let (v1, vce) = mean_violations(scorer, cmap, &pool)?;
    match kind {
        LossKind::Ell1 => Ok(v1),
        LossKind::CrossEntropy => Ok(vce),
        LossKind::HingeMargin => Err(Error::Domain(
            "violation is defined for ell1 and cross_entropy only".into(),
        )),
    }
}

fn mean_violations<S: Scorer + ?Sized>(
    scorer: &S,
    cmap: &ConstraintMap,
    pool: &[&Instance],
) -> Result<(f64, f64)> {
    let mut v1 = CompensatedSum::new();
    let mut vce = CompensatedSum::new();
    for x in pool {
        let (a, b) = violation_from_log(&scorer.log_predict(x)?, cmap.admissible(x.id)?);
        v1.add(a);
        vce.add(b);
    }
    let n = pool.len() as f64;
    Ok((v1.value() / n, vce.value() / n))
}

// ---------------------------------------------------------------------------
// Gradients with respect to the score vector f(x, ·).
//
// `log_p` is the model's predictive log-distribution: plain softmax for a base
// scorer, or the CCM distribution for f^μ (strict inference included). The
// formulas below hold for all of them because the CCM shift is constant in f.

/// Gradient of the loss at `(x, gold)` with respect to the scores.
pub fn loss_score_gradient(kind: LossKind, log_p: &[f64], scores: &[f64], gold: usize) -> Vec<f64> {
    let c = log_p.len();
    let mut g = vec![0.0; c];
    match kind {
        LossKind::HingeMargin => {
            if scores[gold] == f64::NEG_INFINITY {
                return g;
            }
            let aug: Vec<f64> = scores
                .iter()
                .enumerate()
                .map(|(y, s)| if y == gold { *s } else { s + 1.0 })
                .collect();
            let top = argmax(&aug);
            g[top] += 1.0;
            g[gold] -= 1.0;
        }
        LossKind::CrossEntropy | LossKind::Ell1 => {
            if log_p[gold] == f64::NEG_INFINITY {
                // clamped constant loss
                return g;
            }
            let scale = if kind == LossKind::Ell1 {
                log_p[gold].exp()
            } else {
                1.0
            };
            for (y, lp) in log_p.iter().enumerate() {
                g[y] = scale * lp.exp();
            }
            g[gold] -= scale;
        }
    }
    g
}

/// Gradient of the violation at `x` with respect to the scores.
pub fn violation_score_gradient(kind: LossKind, log_p: &[f64], admissible: LabelSet) -> Vec<f64> {
    let c = log_p.len();
    let p: Vec<f64> = log_p.iter().map(|v| v.exp()).collect();
    match kind {
        LossKind::Ell1 => {
            let outside: f64 = (0..c).filter(|y| !admissible.contains(*y)).map(|y| p[y]).sum();
            (0..c)
                .map(|k| {
                    let v = if admissible.contains(k) { 0.0 } else { 1.0 };
                    p[k] * (v - outside)
                })
                .collect()
        }
        LossKind::CrossEntropy => {
            let inside = log_sum_exp(
                (0..c)
                    .filter(|y| admissible.contains(*y))
                    .map(|y| log_p[y]),
            );
            (0..c)
                .map(|k| {
                    let restricted = if admissible.contains(k) {
                        (log_p[k] - inside).exp()
                    } else {
                        0.0
                    };
                    p[k] - restricted
                })
                .collect()
        }
        LossKind::HingeMargin => vec![0.0; c],
    }
}

fn outer(g: &[f64], features: &[f64]) -> Vec<Vec<f64>> {
    g.iter()
        .map(|gy| features.iter().map(|x| gy * x).collect())
        .collect()
}

/// Gradient of the pointwise loss over the weights of a linear scorer
/// (a subgradient for the hinge kind).
pub fn loss_gradient(
    kind: LossKind,
    scorer: &LinearScorer,
    x: &Instance,
    gold: usize,
) -> Result<Vec<Vec<f64>>> {
    check_gold(scorer.num_labels(), gold)?;
    let scores = scorer.scores(x)?;
    let log_p = crate::scoring::log_softmax(&scores)?;
    Ok(outer(
        &loss_score_gradient(kind, &log_p, &scores, gold),
        &x.features,
    ))
}

/// Gradient of the pointwise violation over the weights of a linear scorer.
pub fn violation_gradient(
    kind: LossKind,
    scorer: &LinearScorer,
    cmap: &ConstraintMap,
    x: &Instance,
) -> Result<Vec<Vec<f64>>> {
    let log_p = crate::scoring::log_softmax(&scorer.scores(x)?)?;
    Ok(outer(
        &violation_score_gradient(kind, &log_p, cmap.admissible(x.id)?),
        &x.features,
    ))
}

/// Gradient over the base weights of the loss of the CCM `f^μ` (strict
/// inference when `μ = ∞`, computed on the distribution renormalized over
/// `C(x)`).
pub fn ccm_loss_gradient(
    kind: LossKind,
    scorer: &LinearScorer,
    cmap: &ConstraintMap,
    mu: Mu,
    x: &Instance,
    gold: usize,
) -> Result<Vec<Vec<f64>>> {
    check_gold(scorer.num_labels(), gold)?;
    let scores = scorer.scores(x)?;
    let adm = cmap.admissible(x.id)?;
    let log_p = ccm_log_softmax(&scores, adm, mu)?;
    let shifted: Vec<f64> = match mu {
        Mu::Finite(m) => crate::scoring::shift_scores(&scores, adm, m),
        Mu::Infinite => scores
            .iter()
            .enumerate()
            .map(|(y, s)| if adm.contains(y) { *s } else { f64::NEG_INFINITY })
            .collect(),
    };
    Ok(outer(
        &loss_score_gradient(kind, &log_p, &shifted, gold),
        &x.features,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{LabelSpace, Point};
    use crate::scoring::{CcmModel, ScoreTable};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_row(scores: Vec<f64>) -> ScoreTable {
        ScoreTable::new(scores.len(), vec![scores]).unwrap()
    }

    fn x0() -> Instance {
        Instance::new(0, vec![])
    }

    #[test]
    fn pointwise_loss_examples() {
        // near-certain gold: loss 0 in both kinds within rounding
        let sharp = one_row(vec![800.0, 0.0, 0.0]);
        assert_eq!(pointwise_loss(LossKind::Ell1, &sharp, &x0(), 0).unwrap(), 0.0);
        assert_eq!(pointwise_loss(LossKind::CrossEntropy, &sharp, &x0(), 0).unwrap(), 0.0);

        let flat = one_row(vec![0.0; 4]);
        assert!((pointwise_loss(LossKind::Ell1, &flat, &x0(), 2).unwrap() - 0.75).abs() < 1e-15);
        assert!(
            (pointwise_loss(LossKind::CrossEntropy, &flat, &x0(), 2).unwrap() - 4f64.ln()).abs()
                < 1e-15
        );
        let h = one_row(vec![2.0, 0.0, 0.0]);
        assert_eq!(pointwise_loss(LossKind::HingeMargin, &h, &x0(), 0).unwrap(), 0.0);
        assert_eq!(pointwise_loss(LossKind::HingeMargin, &h, &x0(), 1).unwrap(), 3.0);
        assert!(pointwise_loss(LossKind::Ell1, &flat, &x0(), 4).is_err());
    }

    #[test]
    fn strict_gold_outside_constraint_is_clamped() {
        let labels = LabelSpace::new(3).unwrap();
        let cmap = ConstraintMap::uniform(labels, 1, LabelSet::from_labels([0, 1])).unwrap();
        let m = CcmModel::new(one_row(vec![0.0, 0.0, 0.0]), Mu::Infinite, cmap);
        assert_eq!(
            pointwise_loss(LossKind::CrossEntropy, &m, &x0(), 2).unwrap(),
            STRICT_LOSS_CAP
        );
        assert_eq!(pointwise_loss(LossKind::Ell1, &m, &x0(), 2).unwrap(), 1.0);
        assert_eq!(
            pointwise_loss(LossKind::HingeMargin, &m, &x0(), 2).unwrap(),
            STRICT_LOSS_CAP
        );
    }

    #[test]
    fn pointwise_violation_examples() {
        let labels = LabelSpace::new(4).unwrap();
        let full = ConstraintMap::uniform(labels, 1, LabelSet::full(4)).unwrap();
        let flat = one_row(vec![0.0; 4]);
        assert_eq!(pointwise_violation(LossKind::Ell1, &flat, &full, &x0()).unwrap(), 0.0);
        assert_eq!(
            pointwise_violation(LossKind::CrossEntropy, &flat, &full, &x0()).unwrap(),
            0.0
        );
        let three = ConstraintMap::uniform(labels, 1, LabelSet::from_labels([0, 1, 2])).unwrap();
        let v1 = pointwise_violation(LossKind::Ell1, &flat, &three, &x0()).unwrap();
        let vce = pointwise_violation(LossKind::CrossEntropy, &flat, &three, &x0()).unwrap();
        assert!((v1 - 0.25).abs() < 1e-15);
        assert!((vce + 0.75f64.ln()).abs() < 1e-15);

        let strict = CcmModel::new(one_row(vec![3.0, -1.0, 0.5, 7.0]), Mu::Infinite, three.clone());
        assert_eq!(pointwise_violation(LossKind::Ell1, &strict, &three, &x0()).unwrap(), 0.0);
        assert_eq!(
            pointwise_violation(LossKind::CrossEntropy, &strict, &three, &x0()).unwrap(),
            0.0
        );
    }

    fn random_dist(rng: &mut ChaCha8Rng, n: usize, c: usize) -> FiniteDistribution {
        let labels = LabelSpace::new(c).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let head: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - head;
        let sets = (0..n)
            .map(|_| {
                let mut s = LabelSet::from_bits(rng.random_range(1..(1u64 << c)));
                if s.is_empty() {
                    s.insert(0);
                }
                s
            })
            .collect();
        let cmap = ConstraintMap::new(labels, sets).unwrap();
        let points = weights
            .iter()
            .map(|w| Point::new(vec![], *w, rng.random_range(0..c)))
            .collect();
        FiniteDistribution::new(labels, points, cmap).unwrap()
    }

    fn random_table(rng: &mut ChaCha8Rng, n: usize, c: usize) -> ScoreTable {
        ScoreTable::new(
            c,
            (0..n)
                .map(|_| (0..c).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn population_risk_examples() {
        let labels = LabelSpace::new(2).unwrap();
        let cmap = ConstraintMap::uniform(labels, 1, LabelSet::full(2)).unwrap();
        let d = FiniteDistribution::new(labels, vec![Point::new(vec![], 1.0, 0)], cmap).unwrap();
        let flat = one_row(vec![0.0, 0.0]);
        let r = population_risk(&d, &flat, LossKind::Ell1).unwrap();
        assert!((r.risk - 0.5).abs() < 1e-15);
        let perfect = one_row(vec![900.0, 0.0]);
        for kind in [LossKind::Ell1, LossKind::CrossEntropy, LossKind::HingeMargin] {
            assert_eq!(population_risk(&d, &perfect, kind).unwrap().risk, 0.0);
        }
    }

    #[test]
    fn population_risk_matches_reverse_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = random_dist(&mut rng, 3, 4);
        let f = random_table(&mut rng, 3, 4);
        for kind in [LossKind::Ell1, LossKind::CrossEntropy] {
            let report = population_risk(&d, &f, kind).unwrap();
            // independent route: direct exp/sum per point, summed in reverse
            let mut total = 0.0;
            for p in d.points().iter().rev() {
                let row = &f.rows()[p.instance.id];
                let z: f64 = row.iter().map(|s| s.exp()).sum();
                let prob = row[p.oracle].exp() / z;
                let loss = match kind {
                    LossKind::Ell1 => 1.0 - prob,
                    _ => -prob.ln(),
                };
                total += p.weight * loss;
            }
            assert!((report.risk - total).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dist(&mut rng, 6, 3);
        let f = random_table(&mut rng, 6, 3);
        let empty = Dataset::new(d.labels(), vec![], vec![]).unwrap();
        assert!(matches!(
            empirical_risk(&empty, &f, d.constraint(), LossKind::Ell1),
            Err(Error::EmptySplit("labeled"))
        ));
        assert!(matches!(
            empirical_violation(&empty, &f, d.constraint(), LossKind::Ell1),
            Err(Error::EmptySplit("unlabeled"))
        ));

        let ds = crate::constraint::sample_dataset(&d, 10_000, 100, 17);
        let emp = empirical_risk(&ds, &f, d.constraint(), LossKind::Ell1).unwrap();
        let pop = population_risk(&d, &f, LossKind::Ell1).unwrap();
        assert!((emp.risk - pop.risk).abs() < 0.05);
        assert_eq!(emp.basis, Basis::Empirical(10_000));
    }

    #[test]
    fn empirical_mean_of_two() {
        // ℓ¹ losses 0.2 and 0.4 from probabilities 0.8 and 0.6 on the gold label
        let labels = LabelSpace::new(2).unwrap();
        let f = ScoreTable::from_probabilities(&[vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
        let cmap = ConstraintMap::uniform(labels, 2, LabelSet::full(2)).unwrap();
        let ds = Dataset::new(
            labels,
            vec![
                crate::constraint::LabeledSample {
                    instance: Instance::new(0, vec![]),
                    label: 0,
                },
                crate::constraint::LabeledSample {
                    instance: Instance::new(1, vec![]),
                    label: 0,
                },
            ],
            vec![],
        )
        .unwrap();
        let r = empirical_risk(&ds, &f, &cmap, LossKind::Ell1).unwrap();
        assert!((r.risk - 0.3).abs() < 1e-15);
    }

    #[test]
    fn report_serializations() {
        let r = RiskReport {
            kind: LossKind::CrossEntropy,
            risk: 0.5,
            violation_l1: 0.25,
            violation_ce: 0.125,
            margin: None,
            basis: Basis::Empirical(4),
        };
        assert_eq!(
            r.to_csv_row(),
            "empirical,4,cross_entropy,5.0000000000000000e-1,2.5000000000000000e-1,1.2500000000000000e-1,"
        );
        assert!(r.to_key_values().contains("risk = 5.0000000000000000e-1\n"));
        assert_eq!(RiskReport::CSV_HEADER.split(',').count(), 7);
    }

    fn fd_gradient<F: Fn(&LinearScorer) -> f64>(w: &LinearScorer, f: F) -> Vec<Vec<f64>> {
        let h = 1e-5;
        let c = w.num_labels();
        let p = w.dim();
        let base = w.flat();
        let mut g = vec![vec![0.0; p]; c];
        for k in 0..c * p {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += h;
            minus[k] -= h;
            let fp = f(&LinearScorer::from_flat(c, p, &plus));
            let fm = f(&LinearScorer::from_flat(c, p, &minus));
            g[k / p][k % p] = (fp - fm) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let fa: Vec<f64> = a.iter().flatten().copied().collect();
        let fb: Vec<f64> = b.iter().flatten().copied().collect();
        let diff: f64 = fa.iter().zip(&fb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = crate::numeric::l2_norm(&fa).max(crate::numeric::l2_norm(&fb)).max(1e-6);
        diff / scale
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = LabelSpace::new(4).unwrap();
        let cmap = ConstraintMap::uniform(labels, 1, LabelSet::from_labels([0, 2])).unwrap();
        for _ in 0..10 {
            let w = LinearScorer::new(
                (0..4)
                    .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
            )
            .unwrap();
            let x = Instance::new(0, (0..5).map(|_| rng.random_range(-1.0..1.0)).collect());
            for kind in [LossKind::Ell1, LossKind::CrossEntropy] {
                let a = loss_gradient(kind, &w, &x, 2).unwrap();
                let n = fd_gradient(&w, |s| pointwise_loss(kind, s, &x, 2).unwrap());
                assert!(rel_err(&a, &n) < 1e-5, "{kind} loss");
                let a = violation_gradient(kind, &w, &cmap, &x).unwrap();
                let n = fd_gradient(&w, |s| pointwise_violation(kind, s, &cmap, &x).unwrap());
                assert!(rel_err(&a, &n) < 1e-5, "{kind} violation");
                for mu in [Mu::Finite(0.7), Mu::Infinite] {
                    let a = ccm_loss_gradient(kind, &w, &cmap, mu, &x, 0).unwrap();
                    let n = fd_gradient(&w, |s| {
                        let m = CcmModel::new(s.clone(), mu, cmap.clone());
                        pointwise_loss(kind, &m, &x, 0).unwrap()
                    });
                    assert!(rel_err(&a, &n) < 1e-5, "{kind} ccm {mu}");
                }
            }
        }
    }

    #[test]
    fn gradient_special_cases() {
        let w = LinearScorer::new(vec![vec![40.0, 0.0], vec![-40.0, 0.0]]).unwrap();
        let x = Instance::new(0, vec![1.0, 0.5]);
        let g = loss_gradient(LossKind::CrossEntropy, &w, &x, 0).unwrap();
        let norm: f64 = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-10);

        let sym = LinearScorer::new(vec![vec![0.3, -0.2], vec![0.3, -0.2]]).unwrap();
        let g = loss_gradient(LossKind::CrossEntropy, &sym, &x, 1).unwrap();
        for (a, b) in g[0].iter().zip(&g[1]) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn ell1_bounded_by_cross_entropy(
            scores in proptest::collection::vec(-30.0f64..30.0, 2..8),
            gold_seed in 0usize..100,
        ) {
            let gold = gold_seed % scores.len();
            let f = one_row(scores.clone());
            let l1 = pointwise_loss(LossKind::Ell1, &f, &x0(), gold).unwrap();
            let ce = pointwise_loss(LossKind::CrossEntropy, &f, &x0(), gold).unwrap();
            prop_assert!(l1 <= ce + 1e-15);
            // half the ℓ¹ distance to the one-hot vector
            let p = crate::scoring::softmax(&scores).unwrap();
            let half: f64 = p.iter().enumerate()
                .map(|(y, v)| (if y == gold { 1.0 } else { 0.0 } - v).abs())
                .sum::<f64>() / 2.0;
            prop_assert!((half - l1).abs() < 1e-12);
        }

        #[test]
        fn lipschitz_bound_on_constraint_mass(
            a in proptest::collection::vec(-4.0f64..4.0, 5),
            b in proptest::collection::vec(-4.0f64..4.0, 5),
            bits in 1u64..31,
        ) {
            let adm = LabelSet::from_bits(bits);
            let mass = |s: &[f64]| -> f64 {
                let p = crate::scoring::softmax(s).unwrap();
                adm.iter().map(|y| p[y]).sum()
            };
            let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let k = 0.25 * (1.0 + 1.0 / adm.len() as f64).sqrt();
            prop_assert!((mass(&a) - mass(&b)).abs() <= k * dist + 1e-15);
        }
    }
}
