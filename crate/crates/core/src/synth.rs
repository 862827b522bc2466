//! Synthetic distributions: finite supports with a controlled noise rate,
//! the small constructions used to make bounds tight, and feature samples
//! inside the unit sphere.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::constraint::{ConstraintMap, FiniteDistribution, LabelSet, LabelSpace, Point};
use crate::error::{Error, Result};
use crate::losses::{population_risk, LossKind};
use crate::numeric::{dot, l2_norm};
use crate::scoring::{argmax, LinearScorer, ScoreTable};
use crate::training::{baseline_scorer, evaluate_regularized_objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Uniform,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSpec {
    pub labels: usize,
    pub num_points: usize,
    pub target_noise: f64,
    pub seed: u64,
    pub dim: usize,
    pub weights: WeightScheme,
}

impl FiniteSpec {
    pub fn new(labels: usize, num_points: usize, target_noise: f64, seed: u64) -> Self {
        Self {
            labels,
            num_points,
            target_noise,
            seed,
            dim: 3,
            weights: WeightScheme::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMeta {
    pub target_noise: f64,
    /// Recomputed with [`FiniteDistribution::noise_rate`].
    pub achieved_noise: f64,
    /// Set when the target is not reachable at the weight granularity.
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dist: FiniteDistribution,
    pub meta: SynthMeta,
}

/// Uniform-weight distribution with `c` labels, `num_points` support
/// points, and noise rate as close to `target` as the `1/n` grid allows.
pub fn make_finite(c: usize, num_points: usize, target: f64, seed: u64) -> Result<Synthetic> {
    make_finite_with(&FiniteSpec::new(c, num_points, target, seed))
}

pub fn make_finite_with(spec: &FiniteSpec) -> Result<Synthetic> {
    let labels = LabelSpace::new(spec.labels)?;
    let c = spec.labels;
    let n = spec.num_points;
    if n == 0 {
        return Err(Error::Domain("num_points must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.target_noise) {
        return Err(Error::Domain(format!(
            "target noise must lie in [0, 1], got {}",
            spec.target_noise
        )));
    }
    if spec.dim == 0 {
        return Err(Error::Domain("dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let weights = match spec.weights {
        WeightScheme::Uniform => vec![1.0 / n as f64; n],
        WeightScheme::Random => {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
            let total: f64 = raw.iter().sum();
            let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let head: f64 = w[..n - 1].iter().sum();
            w[n - 1] = 1.0 - head;
            w
        }
    };

    let scale = 1.0 / (spec.dim as f64).sqrt();
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..spec.dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
        .collect();
    let planted: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let oracle: Vec<usize> = features
        .iter()
        .map(|x| argmax(&planted.iter().map(|w| dot(w, x)).collect::<Vec<_>>()))
        .collect();

    let noisy = choose_noisy(&weights, spec.target_noise, &mut rng);
    let mut sets = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = LabelSet::EMPTY;
        for y in 0..c {
            if rng.random::<bool>() {
                s.insert(y);
            }
        }
        if noisy[i] {
            s.remove(oracle[i]);
            if s.is_empty() {
                let others: Vec<usize> = (0..c).filter(|&y| y != oracle[i]).collect();
                s.insert(others[rng.random_range(0..others.len())]);
            }
        } else {
            s.insert(oracle[i]);
        }
        sets.push(s);
    }
    let cmap = ConstraintMap::new(labels, sets)?;
    let points = (0..n)
        .map(|i| Point::new(features[i].clone(), weights[i], oracle[i]))
        .collect();
    let dist = FiniteDistribution::new(labels, points, cmap)?;
    let achieved = dist.noise_rate();
    let warning = ((achieved - spec.target_noise).abs() > 1e-12).then(|| {
        format!(
            "target noise {} not reachable at this weight granularity; achieved {}",
            spec.target_noise, achieved
        )
    });
    Ok(Synthetic {
        dist,
        meta: SynthMeta {
            target_noise: spec.target_noise,
            achieved_noise: achieved,
            warning,
        },
    })
}

/// Picks the points whose oracle label will be excluded. Uniform weights:
/// `round(target·n)` points uniformly at random. Otherwise: greedy over a
/// random order, heaviest first, keeping the total at most the target, then
/// the single best extra point if it lands closer.
fn choose_noisy(weights: &[f64], target: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = weights.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut noisy = vec![false; n];
    let uniform = weights.iter().all(|w| *w == weights[0]);
    if uniform {
        let k = (target * n as f64).round() as usize;
        for &i in order.iter().take(k.min(n)) {
            noisy[i] = true;
        }
        return noisy;
    }
    order.sort_by(|a, b| weights[*b].total_cmp(&weights[*a]));
    let mut acc = 0.0;
    for &i in &order {
        if acc + weights[i] <= target + 1e-15 {
            noisy[i] = true;
            acc += weights[i];
        }
    }
    if let Some(&extra) = order
        .iter()
        .filter(|&&i| !noisy[i])
        .min_by(|a, b| weights[**a].total_cmp(&weights[**b]))
    {
        if (acc + weights[extra] - target).abs() < (acc - target).abs() {
            noisy[extra] = true;
        }
    }
    noisy
}

/// A named instance with an enumerated scorer set.
#[derive(Debug, Clone)]
pub struct Construction {
    pub dist: FiniteDistribution,
    pub scorers: Vec<ScoreTable>,
    pub names: Vec<String>,
    /// The inequality the construction is built to make tight or trigger.
    pub designed_for: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProofConstruction {
    /// One instance, labels `{y_ora = 0, y' = 1, y'' = 2}`, `C = {0, 2}`;
    /// `f_0 = (a, b, 1−a−b)` and `f_∞ = (a−ε₁, b−ε₂, 1−a−b+ε₁+ε₂)`.
    DeviationTightness {
        a: f64,
        b: f64,
        eps1: f64,
        eps2: f64,
        rho: f64,
    },
    /// A noise-free distribution with the baseline `t·1{y ∈ C(x)}`.
    BaselineViolation { t: f64, labels: usize, points: usize, seed: u64 },
    /// Noise rate `noise` and a grid whose minimal violation is
    /// `min_violation`.
    FutilityGrid {
        noise: f64,
        min_violation: f64,
        points: usize,
        grid_size: usize,
        seed: u64,
    },
}

impl ProofConstruction {
    pub fn name(&self) -> &'static str {
        match self {
            ProofConstruction::DeviationTightness { .. } => "deviation_tightness",
            ProofConstruction::BaselineViolation { .. } => "baseline_violation",
            ProofConstruction::FutilityGrid { .. } => "futility_grid",
        }
    }
}

pub fn make_proof_construction(kind: ProofConstruction) -> Result<Construction> {
    match kind {
        ProofConstruction::DeviationTightness {
            a,
            b,
            eps1,
            eps2,
            rho,
        } => deviation_tightness(a, b, eps1, eps2, rho),
        ProofConstruction::BaselineViolation {
            t,
            labels,
            points,
            seed,
        } => baseline_violation(t, labels, points, seed),
        ProofConstruction::FutilityGrid {
            noise,
            min_violation,
            points,
            grid_size,
            seed,
        } => futility_grid(noise, min_violation, points, grid_size, seed),
    }
}

fn deviation_tightness(a: f64, b: f64, eps1: f64, eps2: f64, rho: f64) -> Result<Construction> {
    let fail = |m: &str| Err(Error::Construction(m.to_string()));
    if !(a > 0.0 && b > 0.0 && a + b < 1.0) {
        return fail("need a > 0, b > 0, a + b < 1");
    }
    if !(eps1 > 0.0 && eps1 < a && eps2 > 0.0 && eps2 < b) {
        return fail("need 0 < eps1 < a and 0 < eps2 < b");
    }
    if !(rho > 0.0) {
        return fail("need rho > 0");
    }
    if eps1 >= rho * eps2 {
        return fail("need eps1 < rho * eps2");
    }
    let labels = LabelSpace::new(3)?;
    let cmap = ConstraintMap::new(labels, vec![LabelSet::from_labels([0, 2])])?;
    let dist = FiniteDistribution::new(labels, vec![Point::new(vec![], 1.0, 0)], cmap)?;
    let f0 = ScoreTable::from_probabilities(&[vec![a, b, 1.0 - a - b]])?;
    let finf = ScoreTable::from_probabilities(&[vec![a - eps1, b - eps2, 1.0 - a - b + eps1 + eps2]])?;
    let l0 = evaluate_regularized_objective(&f0, &dist, rho, LossKind::Ell1)?;
    let linf = evaluate_regularized_objective(&finf, &dist, rho, LossKind::Ell1)?;
    if !(linf < l0) {
        return Err(Error::Construction(format!(
            "self-check failed: objective of f_inf {linf} is not below f_0 {l0}"
        )));
    }
    Ok(Construction {
        dist,
        scorers: vec![f0, finf],
        names: vec!["f_0".into(), "f_inf".into()],
        designed_for: "R(f_rho) <= R(f_0) + rho (V(f_0) - V(f_inf)) approaches equality as eps1 -> rho eps2"
            .into(),
    })
}

fn baseline_violation(t: f64, labels: usize, points: usize, seed: u64) -> Result<Construction> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Construction(format!("need finite t >= 0, got {t}")));
    }
    let dist = make_finite(labels, points, 0.0, seed)?.dist;
    let baseline = baseline_scorer(dist.constraint(), t)?;
    let v = population_risk(&dist, &baseline, LossKind::Ell1)?.violation_l1;
    let limit = labels as f64 * (-t).exp();
    if v > limit {
        return Err(Error::Construction(format!(
            "self-check failed: baseline violation {v} exceeds c e^-t = {limit}"
        )));
    }
    Ok(Construction {
        dist,
        scorers: vec![baseline],
        names: vec![format!("f_t (t = {t})")],
        designed_for: "V(f_rho) <= 1/rho + u with u = V(f_t)".into(),
    })
}

fn futility_grid(
    noise: f64,
    min_violation: f64,
    points: usize,
    grid_size: usize,
    seed: u64,
) -> Result<Construction> {
    if !(min_violation > 0.0 && min_violation <= noise && noise < 1.0) {
        return Err(Error::Construction(format!(
            "need 0 < V(f_inf) <= V_ora < 1, got V(f_inf) = {min_violation}, V_ora = {noise}"
        )));
    }
    if grid_size < 1 || points < 1 {
        return Err(Error::Construction("need at least one point and one scorer".into()));
    }
    let c = 3;
    let labels = LabelSpace::new(c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = (noise * points as f64).round() as usize;
    if (k as f64 / points as f64 - noise).abs() > 1e-12 {
        return Err(Error::Construction(format!(
            "noise {noise} is not a multiple of 1/{points}"
        )));
    }
    let mut order: Vec<usize> = (0..points).collect();
    order.shuffle(&mut rng);
    let mut noisy = vec![false; points];
    for &i in order.iter().take(k) {
        noisy[i] = true;
    }
    let mut sets = Vec::with_capacity(points);
    let mut oracle = Vec::with_capacity(points);
    for &is_noisy in &noisy {
        // proper nonempty subset of {0, 1, 2}
        let s = LabelSet::from_bits(rng.random_range(1..7));
        let pool: Vec<usize> = if is_noisy {
            s.complement(c).iter().collect()
        } else {
            s.iter().collect()
        };
        oracle.push(pool[rng.random_range(0..pool.len())]);
        sets.push(s);
    }
    let cmap = ConstraintMap::new(labels, sets.clone())?;
    let dist = FiniteDistribution::uniform(
        labels,
        oracle.iter().map(|&y| (vec![], y)).collect(),
        cmap,
    )?;

    let mut scorers = Vec::with_capacity(grid_size);
    for g in 0..grid_size {
        let table = table_with_outside_mass(&sets, c, &mut rng, |rng| {
            if g == 0 {
                min_violation
            } else {
                min_violation + (1.0 - min_violation) * rng.random_range(0.05..0.95)
            }
        })?;
        scorers.push(table);
    }
    let violations: Vec<f64> = scorers
        .iter()
        .map(|f| population_risk(&dist, f, LossKind::Ell1).map(|r| r.violation_l1))
        .collect::<Result<_>>()?;
    let min = violations.iter().copied().fold(f64::INFINITY, f64::min);
    if (min - min_violation).abs() > 1e-12 || (dist.noise_rate() - noise).abs() > 1e-12 {
        return Err(Error::Construction(format!(
            "self-check failed: min violation {min}, noise {}",
            dist.noise_rate()
        )));
    }
    Ok(Construction {
        dist,
        names: (0..grid_size).map(|g| format!("f_{g}")).collect(),
        scorers,
        designed_for: "V_ora >= V(f_inf); rho >= 1/(V_ora - V(f_inf)) leaves no room for CCM".into(),
    })
}

/// Table whose softmax puts mass `q` (drawn per instance) outside `C(x)`,
/// split at random inside and outside.
fn table_with_outside_mass(
    sets: &[LabelSet],
    c: usize,
    rng: &mut ChaCha8Rng,
    mut q: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<ScoreTable> {
    let split = |members: &[usize], mass: f64, probs: &mut [f64], rng: &mut ChaCha8Rng| {
        let raw: Vec<f64> = members.iter().map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (y, r) in members.iter().zip(raw) {
            probs[*y] = mass * r / total;
        }
    };
    let rows: Vec<Vec<f64>> = sets
        .iter()
        .map(|s| {
            let q = q(rng);
            let inside: Vec<usize> = s.iter().collect();
            let outside: Vec<usize> = s.complement(c).iter().collect();
            let mut probs = vec![0.0; c];
            split(&inside, 1.0 - q, &mut probs, rng);
            split(&outside, q, &mut probs, rng);
            probs
        })
        .collect();
    ScoreTable::from_probabilities(&rows)
}

/// A random table with `P_f(−C|x) = violation` at every instance, so
/// `V(f) = violation` under any weighting. Every admissible set must be a
/// proper subset.
pub fn scorer_with_violation(
    cmap: &ConstraintMap,
    violation: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ScoreTable> {
    let c = cmap.labels().count();
    if !(violation > 0.0 && violation < 1.0) {
        return Err(Error::Construction(format!(
            "violation must lie in (0, 1), got {violation}"
        )));
    }
    if cmap.sets().iter().any(|s| s.len() == c) {
        return Err(Error::Construction(
            "an admissible set covers every label; its violation is 0".into(),
        ));
    }
    table_with_outside_mass(cmap.sets(), c, rng, |_| violation)
}

#[derive(Debug, Clone)]
pub struct GaussianFeatures {
    /// Uniform over the sampled points; oracle labels from the planted
    /// scorer, constraint removing the last label.
    pub dist: FiniteDistribution,
    pub planted: LinearScorer,
    pub acceptance_rate: f64,
}

const ACCEPTANCE_FLOOR: f64 = 0.01;

/// Samples `m` instances from `N(α, σ²I)` restricted to `‖x‖ ≤ radius` by
/// rejection. Labels come from a random planted linear scorer with
/// Frobenius norm `separation`.
#[allow(clippy::too_many_arguments)]
pub fn make_gaussian_features(
    c: usize,
    p: usize,
    separation: f64,
    sphere_radius: f64,
    mean_alpha: &[f64],
    sigma2: f64,
    m: usize,
    seed: u64,
) -> Result<GaussianFeatures> {
    let labels = LabelSpace::new(c)?;
    if mean_alpha.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: mean_alpha.len(),
        });
    }
    if !(sigma2 >= 0.0) || !(sphere_radius > 0.0) || m == 0 || p == 0 {
        return Err(Error::Domain(
            "need sigma2 >= 0, radius > 0, m >= 1, p >= 1".into(),
        ));
    }
    if l2_norm(mean_alpha) > sphere_radius {
        return Err(Error::Feasibility("mean lies outside the sphere".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = sigma2.sqrt();
    let mut xs = Vec::with_capacity(m);
    let mut proposals = 0usize;
    while xs.len() < m {
        proposals += 1;
        let x: Vec<f64> = mean_alpha
            .iter()
            .map(|a| a + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if l2_norm(&x) <= sphere_radius {
            xs.push(x);
        }
        if proposals >= 1000 && (xs.len() as f64) < ACCEPTANCE_FLOOR * proposals as f64 {
            return Err(Error::Feasibility(format!(
                "rejection sampler accepted {} of {proposals} proposals",
                xs.len()
            )));
        }
    }
    let raw: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let norm = raw.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let planted = LinearScorer::new(
        raw.iter()
            .map(|r| r.iter().map(|v| separation * v / norm).collect())
            .collect(),
    )?;
    let rows: Vec<(Vec<f64>, usize)> = xs
        .into_iter()
        .map(|x| {
            let y = argmax(&planted.score_features(&x).expect("dimension checked"));
            (x, y)
        })
        .collect();
    let cmap = ConstraintMap::uniform(labels, m, LabelSet::full(c - 1))?;
    let dist = FiniteDistribution::uniform(labels, rows, cmap)?;
    Ok(GaussianFeatures {
        dist,
        planted,
        acceptance_rate: m as f64 / proposals as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Scorer;

    #[test]
    fn finite_noise_targets() {
        let s = make_finite(4, 20, 0.0, 1).unwrap();
        assert_eq!(s.dist.noise_rate(), 0.0);
        assert!(s.dist.is_noise_free());

        let s = make_finite(3, 10, 0.3, 2).unwrap();
        let count = s
            .dist
            .points()
            .iter()
            .filter(|p| !s.dist.constraint().sets()[p.instance.id].contains(p.oracle))
            .count();
        assert_eq!(count, 3);
        assert!((s.meta.achieved_noise - 0.3).abs() < 1e-12);
        assert!(s.meta.warning.is_none());
        assert_eq!(s.meta.achieved_noise, s.dist.noise_rate());
    }

    #[test]
    fn finite_random_weights() {
        let mut spec = FiniteSpec::new(5, 40, 0.25, 3);
        spec.weights = WeightScheme::Random;
        let s = make_finite_with(&spec).unwrap();
        assert!((s.meta.achieved_noise - 0.25).abs() < 0.01);
        assert_eq!(s.meta.achieved_noise, s.dist.noise_rate());
    }

    #[test]
    fn finite_is_deterministic_and_validates() {
        let a = make_finite(3, 15, 0.2, 9).unwrap();
        let b = make_finite(3, 15, 0.2, 9).unwrap();
        assert_eq!(a.dist, b.dist);
        assert!(make_finite(3, 15, 1.5, 9).is_err());
        assert!(make_finite(1, 15, 0.1, 9).is_err());
        let odd = make_finite(3, 7, 0.3, 9).unwrap();
        assert!(odd.meta.warning.is_some());
    }

    #[test]
    fn deviation_tightness_example() {
        let c = make_proof_construction(ProofConstruction::DeviationTightness {
            a: 0.6,
            b: 0.2,
            eps1: 0.05,
            eps2: 0.1,
            rho: 1.0,
        })
        .unwrap();
        let l0 = evaluate_regularized_objective(&c.scorers[0], &c.dist, 1.0, LossKind::Ell1).unwrap();
        let li = evaluate_regularized_objective(&c.scorers[1], &c.dist, 1.0, LossKind::Ell1).unwrap();
        assert!(li < l0);
        assert!(matches!(
            make_proof_construction(ProofConstruction::DeviationTightness {
                a: 0.6,
                b: 0.2,
                eps1: 0.1,
                eps2: 0.1,
                rho: 1.0,
            }),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn baseline_violation_example() {
        let c = make_proof_construction(ProofConstruction::BaselineViolation {
            t: 50.0,
            labels: 4,
            points: 12,
            seed: 1,
        })
        .unwrap();
        let v = population_risk(&c.dist, &c.scorers[0], LossKind::Ell1).unwrap().violation_l1;
        assert!(v < 1e-15);
    }

    #[test]
    fn futility_grid_example() {
        let c = make_proof_construction(ProofConstruction::FutilityGrid {
            noise: 0.3,
            min_violation: 0.1,
            points: 10,
            grid_size: 25,
            seed: 4,
        })
        .unwrap();
        assert!((c.dist.noise_rate() - 0.3).abs() < 1e-12);
        let (_, v) = crate::ccm::min_violation(&c.dist, &c.scorers).unwrap();
        assert!((v - 0.1).abs() < 1e-12);
    }

    #[test]
    fn gaussian_origin_is_uniform() {
        let g = make_gaussian_features(4, 2, 3.0, 1.0, &[0.0, 0.0], 0.0, 50, 1).unwrap();
        for p in g.dist.points() {
            assert_eq!(p.instance.features, vec![0.0, 0.0]);
            let probs = g.planted.predict(&p.instance).unwrap();
            assert!(probs.iter().all(|q| (q - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn gaussian_separation_and_moments() {
        let g = make_gaussian_features(3, 2, 200.0, 1.0, &[0.0, 0.0], 0.2, 2000, 2).unwrap();
        let r = population_risk(&g.dist, &g.planted, LossKind::Ell1).unwrap();
        assert!(r.risk < 0.05, "{}", r.risk);

        let alpha = [0.5, -0.3];
        let g = make_gaussian_features(3, 2, 1.0, 1.0, &alpha, 0.01, 10_000, 3).unwrap();
        let mean = crate::complexity::population_mean(&g.dist);
        for (m, a) in mean.iter().zip(alpha) {
            assert!((m - a).abs() <= 0.05 * a.abs());
        }
        let var = crate::complexity::directional_variance(&g.dist);
        assert!((var - 0.01).abs() <= 0.05 * 0.01);
    }

    #[test]
    fn gaussian_infeasible() {
        assert!(matches!(
            make_gaussian_features(3, 2, 1.0, 1.0, &[0.99, 0.0], 400.0, 100, 1),
            Err(Error::Feasibility(_))
        ));
    }
}
