//! Risk change under constrained conditional models: cross-entropy, ℓ¹, and
//! margin deltas, the safe-μ rule, and the conditions under which combining
//! CCM with violation regularization helps or cannot help.

use std::fmt;

use crate::constraint::FiniteDistribution;
use crate::error::{Error, Result};
use crate::lambert::lambert_w0;
use crate::losses::{fmt_real, margin, population_risk, LossKind, STRICT_LOSS_CAP};
use crate::numeric::{log_sum_exp, CompensatedSum};
use crate::scoring::{argmax, log_softmax, shift_scores, CcmModel, Mu, Scorer};

/// Tolerance separating `improves` / `degrades` from `neutral`.
pub const SIGN_TOLERANCE: f64 = 1e-12;
/// Finite-difference step for derivatives in μ.
pub const MU_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RiskDelta {
    pub mu: Mu,
    /// `R_ce(f) − R_ce(f^μ)`.
    pub delta_ce: f64,
    /// `V(f)(1 − e^{−μ}) − μ·V_ora`.
    pub lower_bound_ce: f64,
    /// `R(f) − R(f^μ)` for the ℓ¹ loss.
    pub delta_l1: f64,
    /// `((1 − e^{−2μ})/2)·E[P_f(y_ora)P_f(−C)] − μ·V_ora`.
    pub lower_bound_l1: f64,
    /// `M(f) − M(f^μ)`.
    pub delta_margin: f64,
    /// `V(f)/V_ora`; infinite when `V_ora = 0`.
    pub eta: f64,
    /// Whether `delta_ce ≥ lower_bound_ce − 1e−10`.
    pub bound_holds: bool,
}

impl RiskDelta {
    pub const CSV_HEADER: &'static str =
        "instance_set,mu,delta_ce,lower_bound_ce,delta_l1,lower_bound_l1,delta_margin,eta";

    pub fn to_csv_row(&self, instance_set: &str) -> String {
        format!(
            "{instance_set},{},{},{},{},{},{},{}",
            self.mu,
            fmt_real(self.delta_ce),
            fmt_real(self.lower_bound_ce),
            fmt_real(self.delta_l1),
            fmt_real(self.lower_bound_l1),
            fmt_real(self.delta_margin),
            fmt_real(self.eta)
        )
    }
}

/// `η = V/V_ora`, infinite when `V_ora = 0`.
pub fn relative_violation(violation: f64, noise: f64) -> f64 {
    if noise == 0.0 {
        f64::INFINITY
    } else {
        violation / noise
    }
}

fn mu_times(mu: Mu, v: f64) -> f64 {
    match mu {
        Mu::Finite(m) => m * v,
        Mu::Infinite if v == 0.0 => 0.0,
        Mu::Infinite => f64::INFINITY,
    }
}

/// `1 − e^{−kμ}`.
fn saturation(mu: Mu, k: f64) -> f64 {
    match mu {
        Mu::Finite(m) => -(-k * m).exp_m1(),
        Mu::Infinite => 1.0,
    }
}

/// Cross-entropy, ℓ¹, and margin deltas of the CCM at `μ` over the exact
/// population, with the analytic lower bounds.
pub fn risk_delta<S: Scorer>(dist: &FiniteDistribution, scorer: &S, mu: Mu) -> Result<RiskDelta> {
    let cmap = dist.constraint();
    let ccm = CcmModel::new(scorer, mu, cmap.clone());
    let base_ce = population_risk(dist, scorer, LossKind::CrossEntropy)?;
    let ccm_ce = population_risk(dist, &ccm, LossKind::CrossEntropy)?;
    let base_l1 = population_risk(dist, scorer, LossKind::Ell1)?;
    let ccm_l1 = population_risk(dist, &ccm, LossKind::Ell1)?;

    let v = base_ce.violation_l1;
    let v_ora = dist.noise_rate();
    let lower_bound_ce = v * saturation(mu, 1.0) - mu_times(mu, v_ora);
    let mut joint = CompensatedSum::new();
    for p in dist.points() {
        let lp = scorer.log_predict(&p.instance)?;
        let adm = cmap.admissible(p.instance.id)?;
        let outside: f64 = (0..lp.len())
            .filter(|y| !adm.contains(*y))
            .map(|y| lp[y].exp())
            .sum();
        joint.add(p.weight * lp[p.oracle].exp() * outside);
    }
    let lower_bound_l1 = 0.5 * saturation(mu, 2.0) * joint.value() - mu_times(mu, v_ora);
    let delta_ce = base_ce.risk - ccm_ce.risk;
    Ok(RiskDelta {
        mu,
        delta_ce,
        lower_bound_ce,
        delta_l1: base_l1.risk - ccm_l1.risk,
        lower_bound_l1,
        delta_margin: base_ce.margin.unwrap_or(0.0) - ccm_ce.margin.unwrap_or(0.0),
        eta: relative_violation(v, v_ora),
        bound_holds: delta_ce >= lower_bound_ce - 1e-10,
    })
}

/// `R_ce(f^μ)` for any real `μ`, negative values included (used for
/// two-sided differences at 0).
pub fn ccm_cross_entropy<S: Scorer + ?Sized>(
    dist: &FiniteDistribution,
    scorer: &S,
    mu: f64,
) -> Result<f64> {
    let cmap = dist.constraint();
    let mut acc = CompensatedSum::new();
    for p in dist.points() {
        let s = scorer.scores(&p.instance)?;
        let lp = log_softmax(&shift_scores(&s, cmap.admissible(p.instance.id)?, mu))?;
        acc.add(p.weight * (-lp[p.oracle]).min(STRICT_LOSS_CAP));
    }
    Ok(acc.value())
}

/// `V(f^μ)`, the ℓ¹ violation of the CCM at real `μ`.
pub fn ccm_violation<S: Scorer + ?Sized>(
    dist: &FiniteDistribution,
    scorer: &S,
    mu: f64,
) -> Result<f64> {
    let cmap = dist.constraint();
    let mut acc = CompensatedSum::new();
    for p in dist.points() {
        let s = scorer.scores(&p.instance)?;
        let adm = cmap.admissible(p.instance.id)?;
        let lp = log_softmax(&shift_scores(&s, adm, mu))?;
        let outside = log_sum_exp((0..lp.len()).filter(|y| !adm.contains(*y)).map(|y| lp[y]));
        acc.add(p.weight * outside.exp());
    }
    Ok(acc.value())
}

/// Central difference of `μ ↦ Δ^μ_ce` at `mu` with step [`MU_FD_STEP`].
pub fn delta_ce_derivative_fd<S: Scorer + ?Sized>(
    dist: &FiniteDistribution,
    scorer: &S,
    mu: f64,
) -> Result<f64> {
    let h = MU_FD_STEP;
    let up = ccm_cross_entropy(dist, scorer, mu + h)?;
    let down = ccm_cross_entropy(dist, scorer, mu - h)?;
    Ok((down - up) / (2.0 * h))
}

/// Exact `d/dμ Δ^μ_ce = V(f^μ) − V_ora`.
pub fn delta_ce_derivative<S: Scorer + ?Sized>(
    dist: &FiniteDistribution,
    scorer: &S,
    mu: f64,
) -> Result<f64> {
    Ok(ccm_violation(dist, scorer, mu)? - dist.noise_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenefitSign {
    Improves,
    Degrades,
    Neutral,
}

impl fmt::Display for BenefitSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenefitSign::Improves => "improves",
            BenefitSign::Degrades => "degrades",
            BenefitSign::Neutral => "neutral",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalBenefit {
    pub sign: BenefitSign,
    pub violation: f64,
    pub noise_rate: f64,
    /// Central difference of `Δ^μ_ce` at `μ = 0`.
    pub derivative_fd: f64,
}

/// Whether a small `μ > 0` lowers the cross-entropy risk: `improves` iff
/// `V(f) > V_ora`.
pub fn marginal_benefit_sign<S: Scorer + ?Sized>(
    dist: &FiniteDistribution,
    scorer: &S,
) -> Result<MarginalBenefit> {
    let violation = ccm_violation(dist, scorer, 0.0)?;
    let noise_rate = dist.noise_rate();
    let sign = if violation > noise_rate + SIGN_TOLERANCE {
        BenefitSign::Improves
    } else if violation < noise_rate - SIGN_TOLERANCE {
        BenefitSign::Degrades
    } else {
        BenefitSign::Neutral
    };
    Ok(MarginalBenefit {
        sign,
        violation,
        noise_rate,
        derivative_fd: delta_ce_derivative_fd(dist, scorer, 0.0)?,
    })
}

/// Largest `μ` with a nonnegative guaranteed risk change:
/// `W₀(−η·e^{−η}) + η` with `η = V/V_ora`.
pub fn select_mu(violation: f64, noise: f64) -> Result<Mu> {
    if !(noise >= 0.0 && violation.is_finite()) {
        return Err(Error::Precondition(format!(
            "need finite V and V_ora >= 0, got V = {violation}, V_ora = {noise}"
        )));
    }
    if violation < noise {
        return Err(Error::Precondition(format!(
            "V = {violation} is below V_ora = {noise}"
        )));
    }
    if noise == 0.0 {
        return Ok(Mu::Infinite);
    }
    let eta = violation / noise;
    if eta == 1.0 {
        return Ok(Mu::ZERO);
    }
    let w = lambert_w0((-eta * (-eta).exp()).max(crate::lambert::BRANCH_POINT))?;
    Mu::new((w + eta).max(0.0))
}

/// `(V_ce(f_post) − μ·V_ora)/V_ce(f_post^μ) − 1`: regularization weights
/// strictly below it make the combined objective beat `f_post`.
///
/// Requires `Δ^μ_ce(f_post) > 0`, except at `μ = 0` where the expression is
/// defined and equals 0.
pub fn combo_rho_threshold<S: Scorer>(
    dist: &FiniteDistribution,
    f_post: &S,
    mu: Mu,
) -> Result<f64> {
    if mu == Mu::ZERO {
        return Ok(0.0);
    }
    let delta = risk_delta(dist, f_post, mu)?.delta_ce;
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!(
            "CCM does not improve the model: delta_ce = {delta}"
        )));
    }
    let base = population_risk(dist, f_post, LossKind::CrossEntropy)?;
    let ccm = CcmModel::new(f_post, mu, dist.constraint().clone());
    let shifted = population_risk(dist, &ccm, LossKind::CrossEntropy)?;
    let numerator = base.violation_ce - mu_times(mu, dist.noise_rate());
    if shifted.violation_ce == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(numerator / shifted.violation_ce - 1.0)
}

/// `min_f V(f)` over an enumerated class, with the index of a minimizer.
pub fn min_violation<S: Scorer>(dist: &FiniteDistribution, grid: &[S]) -> Result<(usize, f64)> {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, f) in grid.iter().enumerate() {
        let v = population_risk(dist, f, LossKind::Ell1)?.violation_l1;
        if v < best.1 {
            best = (i, v);
        }
    }
    if best.0 == usize::MAX {
        return Err(Error::Precondition("scorer grid is empty".into()));
    }
    Ok(best)
}

/// `1/(V_ora − V(f_∞))`, the regularization weight at and above which
/// post-training CCM cannot reduce the cross-entropy risk.
pub fn post_training_futility_rho<S: Scorer>(dist: &FiniteDistribution, grid: &[S]) -> Result<f64> {
    let (_, v_inf) = min_violation(dist, grid)?;
    futility_threshold(dist.noise_rate(), v_inf)
}

pub fn futility_threshold(noise: f64, min_violation: f64) -> Result<f64> {
    if noise < min_violation {
        return Err(Error::Precondition(format!(
            "hypothesis not met: V_ora = {noise} < V(f_inf) = {min_violation}"
        )));
    }
    let gap = noise - min_violation;
    Ok(if gap == 0.0 { f64::INFINITY } else { 1.0 / gap })
}

/// 64 geometric points in `[1e−3, 40]`.
pub fn mu_grid() -> Vec<f64> {
    let (lo, hi) = (1e-3f64.ln(), 40f64.ln());
    (0..64)
        .map(|i| (lo + (hi - lo) * i as f64 / 63.0).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoBenefitReport {
    /// Largest `Δ^μ_ce` over the grid.
    pub max_delta_grid: f64,
    pub delta_infinite: f64,
    /// `V(f) − V_ora`.
    pub derivative_at_zero: f64,
    pub holds: bool,
}

/// Checks that no `μ ∈ (0, ∞]` lowers the cross-entropy risk of `scorer`:
/// grid of [`mu_grid`], the strict path, and the sign of the derivative at 0.
pub fn check_no_ccm_benefit<S: Scorer>(
    dist: &FiniteDistribution,
    scorer: &S,
    tolerance: f64,
) -> Result<NoBenefitReport> {
    let base = population_risk(dist, scorer, LossKind::CrossEntropy)?.risk;
    let mut max_delta = f64::NEG_INFINITY;
    for mu in mu_grid() {
        max_delta = max_delta.max(base - ccm_cross_entropy(dist, scorer, mu)?);
    }
    let delta_infinite = risk_delta(dist, scorer, Mu::Infinite)?.delta_ce;
    let derivative_at_zero = delta_ce_derivative(dist, scorer, 0.0)?;
    Ok(NoBenefitReport {
        max_delta_grid: max_delta,
        delta_infinite,
        derivative_at_zero,
        holds: max_delta <= tolerance && delta_infinite <= tolerance && derivative_at_zero <= 0.0,
    })
}

/// `M(f) − M(f^μ)`.
pub fn margin_delta<S: Scorer>(dist: &FiniteDistribution, scorer: &S, mu: Mu) -> Result<f64> {
    let cmap = dist.constraint();
    let ccm = CcmModel::new(scorer, mu, cmap.clone());
    let mut acc = CompensatedSum::new();
    for p in dist.points() {
        let a = margin(&scorer.scores(&p.instance)?, p.oracle);
        let b = margin(&ccm.scores(&p.instance)?, p.oracle);
        acc.add(p.weight * (a - b));
    }
    Ok(acc.value())
}

/// `E[(max_{y∉C} f − max_{y∈C} f)₊]`.
pub fn integrality_gap<S: Scorer>(dist: &FiniteDistribution, scorer: &S) -> Result<f64> {
    let cmap = dist.constraint();
    let mut acc = CompensatedSum::new();
    for p in dist.points() {
        let s = scorer.scores(&p.instance)?;
        let adm = cmap.admissible(p.instance.id)?;
        let (mut inside, mut outside) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (y, v) in s.iter().enumerate() {
            if adm.contains(y) {
                inside = inside.max(*v);
            } else {
                outside = outside.max(*v);
            }
        }
        if outside > inside {
            acc.add(p.weight * (outside - inside));
        }
    }
    Ok(acc.value())
}

/// `R(f) − R(f^μ)` for the ℓ¹ loss.
pub fn l1_delta<S: Scorer>(dist: &FiniteDistribution, scorer: &S, mu: Mu) -> Result<f64> {
    Ok(risk_delta(dist, scorer, mu)?.delta_l1)
}

/// `E[v(x, argmax f)]`, the zero-one style violation.
pub fn zero_one_violation<S: Scorer>(dist: &FiniteDistribution, scorer: &S) -> Result<f64> {
    let cmap = dist.constraint();
    let mut acc = CompensatedSum::new();
    for p in dist.points() {
        let y = argmax(&scorer.scores(&p.instance)?);
        if !cmap.admissible(p.instance.id)?.contains(y) {
            acc.add(p.weight);
        }
    }
    Ok(acc.value())
}

/// `d/dμ P_{f^μ}(y|x) = P_{f^μ}(y)(P_{f^μ}(−C|x) − v(x, y))` for every label.
pub fn ccm_probability_derivative(
    scores: &[f64],
    admissible: crate::constraint::LabelSet,
    mu: f64,
) -> Result<Vec<f64>> {
    let p: Vec<f64> = log_softmax(&shift_scores(scores, admissible, mu))?
        .into_iter()
        .map(f64::exp)
        .collect();
    let outside: f64 = (0..p.len()).filter(|y| !admissible.contains(*y)).map(|y| p[y]).sum();
    Ok((0..p.len())
        .map(|y| {
            let v = if admissible.contains(y) { 0.0 } else { 1.0 };
            p[y] * (outside - v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{ConstraintMap, LabelSet, LabelSpace, Point};
    use crate::scoring::ScoreTable;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random instance; the oracle label is admissible unless `noisy`.
    fn instance(rng: &mut ChaCha8Rng, n: usize, c: usize, noisy: bool) -> (FiniteDistribution, ScoreTable) {
        let labels = LabelSpace::new(c).unwrap();
        let mut sets = Vec::new();
        let mut points = Vec::new();
        for i in 0..n {
            let mut s = LabelSet::from_bits(rng.random_range(1..(1u64 << c) - 1));
            if s.is_empty() {
                s.insert(0);
            }
            let admissible: Vec<usize> = s.iter().collect();
            let excluded: Vec<usize> = s.complement(c).iter().collect();
            let oracle = if noisy && i % 3 == 0 && !excluded.is_empty() {
                excluded[rng.random_range(0..excluded.len())]
            } else {
                admissible[rng.random_range(0..admissible.len())]
            };
            sets.push(s);
            points.push(Point::new(vec![], 1.0 / n as f64, oracle));
        }
        let cmap = ConstraintMap::new(labels, sets).unwrap();
        let d = normalized(labels, points, cmap);
        let f = ScoreTable::new(
            c,
            (0..n)
                .map(|_| (0..c).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect(),
        )
        .unwrap();
        (d, f)
    }

    fn normalized(l: LabelSpace, mut p: Vec<Point>, c: ConstraintMap) -> FiniteDistribution {
        let n = p.len();
        let head: f64 = p[..n - 1].iter().map(|q| q.weight).sum();
        p[n - 1].weight = 1.0 - head;
        FiniteDistribution::new(l, p, c).unwrap()
    }

    #[test]
    fn zero_mu_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (d, f) = instance(&mut rng, 7, 4, true);
        let r = risk_delta(&d, &f, Mu::ZERO).unwrap();
        assert_eq!(r.delta_ce, 0.0);
        assert_eq!(r.delta_l1, 0.0);
        assert_eq!(r.delta_margin, 0.0);
        assert_eq!(margin_delta(&d, &f, Mu::ZERO).unwrap(), 0.0);
    }

    #[test]
    fn strict_noise_free_delta_is_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let (d, f) = instance(&mut rng, 9, 5, false);
            let r = risk_delta(&d, &f, Mu::Infinite).unwrap();
            let v = population_risk(&d, &f, LossKind::CrossEntropy).unwrap().violation_ce;
            assert!((r.delta_ce - v).abs() < 1e-12);
            assert!(r.eta.is_infinite());
            let m = margin_delta(&d, &f, Mu::Infinite).unwrap();
            assert!((m - integrality_gap(&d, &f).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_delta_dominates_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, f) = instance(&mut rng, 12, 4, true);
        assert!(d.noise_rate() > 0.0);
        for mu in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let r = risk_delta(&d, &f, Mu::new(mu).unwrap()).unwrap();
            assert!(r.bound_holds, "mu = {mu}");
            assert!(r.delta_l1 >= r.lower_bound_l1 - 1e-12, "mu = {mu}");
        }
    }

    #[test]
    fn derivative_identity_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (d, f) = instance(&mut rng, 10, 4, true);
        let mut prev = f64::INFINITY;
        for mu in [0.0, 0.1, 0.3, 1.0, 3.0, 8.0] {
            let exact = delta_ce_derivative(&d, &f, mu).unwrap();
            let fd = delta_ce_derivative_fd(&d, &f, mu).unwrap();
            assert!((exact - fd).abs() < 1e-6);
            assert!(exact <= prev + 1e-15);
            prev = exact;
        }
    }

    #[test]
    fn select_mu_examples() {
        assert_eq!(select_mu(0.3, 0.3).unwrap(), Mu::ZERO);
        assert_eq!(select_mu(0.2, 0.0).unwrap(), Mu::Infinite);
        assert!(matches!(select_mu(0.1, 0.2), Err(Error::Precondition(_))));
        let mu = select_mu(0.4, 0.2).unwrap().value();
        // the positive root of (1 − e^{−μ})·2 − μ by bisection
        let g = |m: f64| 2.0 * (1.0 - (-m).exp()) - m;
        let (mut lo, mut hi) = (0.5, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((mu - lo).abs() < 1e-10);
        assert!(g(mu).abs() < 1e-12);
    }

    #[test]
    fn combo_threshold_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, f) = instance(&mut rng, 8, 4, false);
        assert_eq!(combo_rho_threshold(&d, &f, Mu::Infinite).unwrap(), f64::INFINITY);
        assert_eq!(combo_rho_threshold(&d, &f, Mu::ZERO).unwrap(), 0.0);

        let (d, f) = instance(&mut rng, 8, 3, true);
        let mu = Mu::new(0.5).unwrap();
        match combo_rho_threshold(&d, &f, mu) {
            Ok(th) => {
                let vb = population_risk(&d, &f, LossKind::CrossEntropy).unwrap().violation_ce;
                let ccm = CcmModel::new(&f, mu, d.constraint().clone());
                let vs = population_risk(&d, &ccm, LossKind::CrossEntropy).unwrap().violation_ce;
                assert!((th - ((vb - 0.5 * d.noise_rate()) / vs - 1.0)).abs() < 1e-12);
            }
            Err(Error::Precondition(_)) => {
                assert!(risk_delta(&d, &f, mu).unwrap().delta_ce <= 0.0);
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn futility_threshold_examples() {
        assert_eq!(futility_threshold(0.3, 0.3).unwrap(), f64::INFINITY);
        assert_eq!(futility_threshold(0.6, 0.1).unwrap(), 2.0);
        assert!((futility_threshold(0.3, 0.1).unwrap() - 5.0).abs() < 1e-12);
        assert!(futility_threshold(0.1, 0.3).is_err());
        assert_eq!(mu_grid().len(), 64);
        assert!((mu_grid()[63] - 40.0).abs() < 1e-12);
    }

    #[test]
    fn probability_derivative_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let adm = LabelSet::from_bits(rng.random_range(1..31));
            let mu = rng.random_range(0.0..4.0);
            let exact = ccm_probability_derivative(&s, adm, mu).unwrap();
            let p = |m: f64| crate::scoring::softmax(&shift_scores(&s, adm, m)).unwrap();
            let (a, b) = (p(mu + MU_FD_STEP), p(mu - MU_FD_STEP));
            for y in 0..5 {
                let fd = (a[y] - b[y]) / (2.0 * MU_FD_STEP);
                assert!((fd - exact[y]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn argmax_inside_constraint_has_no_margin_gain() {
        let labels = LabelSpace::new(3).unwrap();
        let cmap = ConstraintMap::uniform(labels, 1, LabelSet::from_labels([0, 1])).unwrap();
        let d = FiniteDistribution::new(labels, vec![Point::new(vec![], 1.0, 1)], cmap).unwrap();
        let f = ScoreTable::new(3, vec![vec![2.0, 1.0, 0.5]]).unwrap();
        assert_eq!(margin_delta(&d, &f, Mu::Infinite).unwrap(), 0.0);
        assert_eq!(zero_one_violation(&d, &f).unwrap(), 0.0);
    }
}
