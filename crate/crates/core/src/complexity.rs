//! Monte-Carlo Rademacher complexity of scorer families, the CCM shift
//! identity, violation-capped linear families, and generalization-gap terms.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::constraint::{sample_indices, ConstraintMap, FiniteDistribution, Instance};
use crate::error::{Error, Result};
use crate::losses::{fmt_real, violation_score_gradient, LossKind};
use crate::numeric::{dot, l2_norm, log_sum_exp};
use crate::scoring::{log_softmax, project_to_ball, Scorer};
use crate::training::{train, ModelSpace, Objective, TrainConfig, TrainData};

pub const DEFAULT_DRAWS: usize = 2000;
const RESTARTS: usize = 5;
const ASCENT_STEPS: usize = 40;
const MAX_HALVINGS: usize = 20;
const REPAIR_BISECTIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupSolver {
    Enumeration,
    ClosedForm,
    ProjectedGradient,
}

impl fmt::Display for SupSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SupSolver::Enumeration => "enumeration",
            SupSolver::ClosedForm => "closed_form",
            SupSolver::ProjectedGradient => "projected_gradient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorOptions {
    pub num_draws: usize,
    pub seed: u64,
    /// Each draw averages the sup at `ε` and at `−ε`.
    pub antithetic: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            num_draws: DEFAULT_DRAWS,
            seed: 0,
            antithetic: true,
        }
    }
}

impl EstimatorOptions {
    pub fn new(num_draws: usize, seed: u64) -> Self {
        Self {
            num_draws,
            seed,
            ..Self::default()
        }
    }

    pub fn without_antithetic(mut self) -> Self {
        self.antithetic = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub num_epsilon_draws: usize,
    pub sup_solver: SupSolver,
    pub per_draw_values: Vec<f64>,
    /// Per-draw weak-duality upper bounds (capped linear family only).
    pub dual_values: Option<Vec<f64>>,
}

impl ComplexityEstimate {
    fn from_values(values: Vec<f64>, solver: SupSolver, dual: Option<Vec<f64>>) -> Self {
        let (mean, std_error) = mean_and_se(&values);
        Self {
            mean,
            std_error,
            num_epsilon_draws: values.len(),
            sup_solver: solver,
            per_draw_values: values,
            dual_values: dual,
        }
    }

    /// Mean and standard error of the dual bound, when available.
    pub fn dual_summary(&self) -> Option<(f64, f64)> {
        self.dual_values.as_deref().map(mean_and_se)
    }

    pub const CSV_HEADER: &'static str = "draw,sup_value";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (i, v) in self.per_draw_values.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", fmt_real(*v)));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "mean = {}\nstd_error = {}\nnum_draws = {}\nsup_solver = {}\n",
            fmt_real(self.mean),
            fmt_real(self.std_error),
            self.num_epsilon_draws,
            self.sup_solver
        );
        if let Some((m, se)) = self.dual_summary() {
            out.push_str(&format!(
                "dual_bound = {}\ndual_std_error = {}\n",
                fmt_real(m),
                fmt_real(se)
            ));
        }
        out
    }
}

/// Sample mean and `std / √n` (with the `n − 1` variance).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = crate::numeric::compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// A scorer family whose Rademacher complexity can be estimated.
pub enum Family<'a> {
    /// A finite list of scorers; the sup is exact.
    Enumerated(Vec<&'a dyn Scorer>),
    /// `{x ↦ Wx : Σ_j ‖w_j‖² ≤ budget}`; the sup is `√budget·‖Ξ‖_F`.
    LinearBall { labels: usize, budget: f64 },
    /// The linear ball intersected with `{W : V(W) ≤ cap}`, violation taken
    /// over `population`.
    CappedLinearBall {
        budget: f64,
        cap: f64,
        population: &'a FiniteDistribution,
    },
}

struct Capped<'a> {
    budget: f64,
    cap: f64,
    population: &'a FiniteDistribution,
    labels: usize,
    dim: usize,
    anchor: Vec<f64>,
    /// `(excluded label, log(t(c+2)), α)` when the dual program applies.
    dual: Option<(usize, f64, Vec<f64>)>,
}

enum Prepared<'a> {
    Enumerated(&'a [&'a dyn Scorer], usize),
    LinearBall { labels: usize, budget: f64 },
    Capped(Capped<'a>),
}

impl Prepared<'_> {
    fn labels(&self) -> usize {
        match self {
            Prepared::Enumerated(_, c) => *c,
            Prepared::LinearBall { labels, .. } => *labels,
            Prepared::Capped(k) => k.labels,
        }
    }

    fn solver(&self) -> SupSolver {
        match self {
            Prepared::Enumerated(..) => SupSolver::Enumeration,
            Prepared::LinearBall { .. } => SupSolver::ClosedForm,
            Prepared::Capped(_) => SupSolver::ProjectedGradient,
        }
    }
}

fn prepare<'a>(family: &'a Family<'a>) -> Result<Prepared<'a>> {
    match family {
        Family::Enumerated(members) => {
            let c = members
                .first()
                .ok_or_else(|| Error::Descriptor("enumerated family is empty".into()))?
                .num_labels();
            if members.iter().any(|s| s.num_labels() != c) {
                return Err(Error::Descriptor(
                    "enumerated members disagree on the label count".into(),
                ));
            }
            Ok(Prepared::Enumerated(members, c))
        }
        Family::LinearBall { labels, budget } => {
            check_budget(*budget)?;
            if *labels < 2 {
                return Err(Error::Descriptor("linear family needs at least 2 labels".into()));
            }
            Ok(Prepared::LinearBall {
                labels: *labels,
                budget: *budget,
            })
        }
        Family::CappedLinearBall {
            budget,
            cap,
            population,
        } => {
            check_budget(*budget)?;
            Ok(Prepared::Capped(Capped::new(*budget, *cap, population)?))
        }
    }
}

fn check_budget(b: f64) -> Result<()> {
    if b >= 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Descriptor(format!("norm budget must be finite and >= 0, got {b}")))
    }
}

/// The label every admissible set omits when `C(x) ≡ Y ∖ {k}`.
fn single_exclusion(cmap: &ConstraintMap) -> Option<usize> {
    let c = cmap.labels().count();
    let first = *cmap.sets().first()?;
    let missing = first.complement(c);
    if missing.len() == 1 && cmap.sets().iter().all(|s| *s == first) {
        missing.iter().next()
    } else {
        None
    }
}

/// `E[x]` over the population.
pub fn population_mean(dist: &FiniteDistribution) -> Vec<f64> {
    let p = dist.feature_dim();
    (0..p)
        .map(|j| dist.expectation(|pt| pt.instance.features[j]))
        .collect()
}

/// `αᵀΣα / ‖α‖²`, the variance along the mean direction; equals `σ²` for an
/// isotropic covariance `σ²I`. Falls back to `tr(Σ)/p` when `α = 0`.
pub fn directional_variance(dist: &FiniteDistribution) -> f64 {
    let alpha = population_mean(dist);
    let a2 = dot(&alpha, &alpha);
    if a2 == 0.0 {
        let p = dist.feature_dim().max(1) as f64;
        return dist.expectation(|pt| dot(&pt.instance.features, &pt.instance.features)) / p;
    }
    dist.expectation(|pt| {
        let centered: Vec<f64> = pt
            .instance
            .features
            .iter()
            .zip(&alpha)
            .map(|(x, a)| x - a)
            .collect();
        dot(&centered, &alpha).powi(2)
    }) / a2
}

impl<'a> Capped<'a> {
    fn new(budget: f64, cap: f64, population: &'a FiniteDistribution) -> Result<Self> {
        let labels = population.num_labels();
        let dim = population.feature_dim();
        if dim == 0 {
            return Err(Error::Descriptor("capped linear family needs features".into()));
        }
        if !(cap >= 0.0) {
            return Err(Error::Descriptor(format!("violation cap must be >= 0, got {cap}")));
        }
        let mut cfg = TrainConfig::new(Objective::MinViolation);
        cfg.loss = LossKind::Ell1;
        cfg.max_iters = 1000;
        cfg.grad_tol = 1e-9;
        let anchor = train(
            &cfg,
            ModelSpace::Linear {
                budget: Some(budget),
            },
            TrainData::Population(population),
        )?;
        let anchor = match anchor.scorer {
            crate::scoring::AnyScorer::Linear(w) => w.flat(),
            crate::scoring::AnyScorer::Table(_) => unreachable!("linear model space"),
        };
        let mut k = Capped {
            budget,
            cap,
            population,
            labels,
            dim,
            anchor,
            dual: None,
        };
        let v = k.violation(&k.anchor);
        if v > cap {
            return Err(Error::Feasibility(format!(
                "violation cap {cap} is below the minimal violation {v} over the ball"
            )));
        }
        let log_term = (cap * (labels as f64 + 2.0)).ln();
        if let Some(excluded) = single_exclusion(population.constraint()) {
            if budget == 1.0 && log_term < 0.0 {
                k.dual = Some((excluded, log_term, population_mean(population)));
            }
        }
        Ok(k)
    }

    fn violation(&self, w: &[f64]) -> f64 {
        self.violation_and_grad(w, false).0
    }

    fn violation_and_grad(&self, w: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let (c, p) = (self.labels, self.dim);
        let cmap = self.population.constraint();
        let mut total = 0.0;
        let mut grad = if want_grad { vec![0.0; c * p] } else { Vec::new() };
        for pt in self.population.points() {
            let x = &pt.instance.features;
            let scores: Vec<f64> = (0..c).map(|y| dot(&w[y * p..(y + 1) * p], x)).collect();
            let lp = log_softmax(&scores).expect("finite scores");
            let adm = cmap.admissible(pt.instance.id).expect("covered instance");
            let outside = log_sum_exp((0..c).filter(|y| !adm.contains(*y)).map(|y| lp[y]));
            total += pt.weight * outside.exp();
            if want_grad {
                let g = violation_score_gradient(LossKind::Ell1, &lp, adm);
                for (y, gy) in g.iter().enumerate() {
                    for (j, xj) in x.iter().enumerate() {
                        grad[y * p + j] += pt.weight * gy * xj;
                    }
                }
            }
        }
        (total, grad)
    }

    fn project(&self, w: &mut [f64]) {
        project_to_ball(w.iter_mut(), self.budget);
    }

    /// Moves an infeasible point toward the anchor until the cap holds.
    fn repair(&self, w: &[f64]) -> Vec<f64> {
        if self.violation(w) <= self.cap {
            return w.to_vec();
        }
        let point = |lam: f64| -> Vec<f64> {
            self.anchor
                .iter()
                .zip(w)
                .map(|(a, b)| a + lam * (b - a))
                .collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..REPAIR_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if self.violation(&point(mid)) <= self.cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        point(lo)
    }

    /// Feasible lower bound on `sup ⟨W, Ξ⟩` by projected ascent with
    /// restarts.
    fn primal_sup(&self, xi: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        let radius = self.budget.sqrt();
        let xi_norm = l2_norm(xi);
        if xi_norm == 0.0 || radius == 0.0 {
            return dot(&self.anchor, xi);
        }
        let mut best = dot(&self.anchor, xi);
        for restart in 0..RESTARTS {
            let mut w = if restart == 0 {
                self.anchor.clone()
            } else {
                let noise: Vec<f64> = (0..xi.len()).map(|_| rng.sample(StandardNormal)).collect();
                let scale = 0.5 * radius / l2_norm(&noise).max(1e-300);
                let mut w: Vec<f64> = self
                    .anchor
                    .iter()
                    .zip(&noise)
                    .map(|(a, n)| a + scale * n)
                    .collect();
                self.project(&mut w);
                self.repair(&w)
            };
            let mut objective = dot(&w, xi);
            let mut eta = radius;
            for _ in 0..ASCENT_STEPS {
                let (v, gv) = self.violation_and_grad(&w, true);
                let mut d = xi.to_vec();
                let along = dot(xi, &gv);
                let gg = dot(&gv, &gv);
                if v > 0.9 * self.cap && along > 0.0 && gg > 0.0 {
                    // drop the component that raises the violation
                    for (di, gi) in d.iter_mut().zip(&gv) {
                        *di -= along / gg * gi;
                    }
                }
                let dn = l2_norm(&d);
                if dn == 0.0 {
                    break;
                }
                let mut step = (2.0 * eta).min(radius);
                let mut accepted = None;
                for _ in 0..MAX_HALVINGS {
                    let mut cand: Vec<f64> =
                        w.iter().zip(&d).map(|(a, b)| a + step / dn * b).collect();
                    self.project(&mut cand);
                    let val = dot(&cand, xi);
                    if val > objective + 1e-12 && self.violation(&cand) <= self.cap {
                        accepted = Some((cand, val));
                        break;
                    }
                    step *= 0.5;
                }
                match accepted {
                    Some((cand, val)) => {
                        w = cand;
                        objective = val;
                        eta = step;
                    }
                    None => break,
                }
            }
            best = best.max(objective);
        }
        best
    }

    /// `min_{ν≥0} ν·log(t(c+2)) + √(Σ_{j≠k}‖ξ_j‖² + ‖ξ_k − να‖²)`.
    fn dual_sup(&self, xi: &[f64]) -> Option<f64> {
        let (k, log_term, alpha) = self.dual.as_ref()?;
        let p = self.dim;
        let others: f64 = (0..self.labels)
            .filter(|y| y != k)
            .map(|y| dot(&xi[y * p..(y + 1) * p], &xi[y * p..(y + 1) * p]))
            .sum();
        let xk = &xi[k * p..(k + 1) * p];
        let a2 = dot(alpha, alpha);
        let xa = dot(xk, alpha);
        let xk2 = dot(xk, xk);
        let h = |nu: f64| -> f64 {
            let rest = (xk2 - 2.0 * nu * xa + nu * nu * a2).max(0.0);
            nu * log_term + (others + rest).sqrt()
        };
        let slope = |nu: f64| -> f64 {
            let rest = (xk2 - 2.0 * nu * xa + nu * nu * a2).max(0.0);
            let root = (others + rest).sqrt();
            if root == 0.0 {
                log_term + a2.sqrt()
            } else {
                log_term + (nu * a2 - xa) / root
            }
        };
        if log_term + a2.sqrt() <= 0.0 {
            // the dual is unbounded below: the capped family is empty
            return Some(f64::NEG_INFINITY);
        }
        if slope(0.0) >= 0.0 {
            return Some(h(0.0));
        }
        let mut hi = 1.0;
        while slope(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(h(0.5 * (lo + hi)))
    }
}

fn draw_rng(seed: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    rng
}

fn rademacher_matrix(rng: &mut ChaCha8Rng, m: usize, c: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            (0..c)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// `ξ_y = Σ_i ε_{iy} x_i`, flattened row-major by label.
fn xi_matrix(sample: &[Instance], eps: &[Vec<f64>], c: usize) -> Result<Vec<f64>> {
    let p = sample.first().map_or(0, |x| x.features.len());
    let mut xi = vec![0.0; c * p];
    for (x, e) in sample.iter().zip(eps) {
        if x.features.len() != p {
            return Err(Error::Descriptor(format!(
                "linear family needs equal feature dimensions, found {} and {p}",
                x.features.len()
            )));
        }
        for (y, ey) in e.iter().enumerate() {
            for (j, xj) in x.features.iter().enumerate() {
                xi[y * p + j] += ey * xj;
            }
        }
    }
    Ok(xi)
}

fn correlation(scores: &[Vec<f64>], eps: &[Vec<f64>]) -> f64 {
    scores
        .iter()
        .zip(eps)
        .map(|(s, e)| dot(s, e))
        .sum()
}

/// Per-draw sup (divided by `m`) and optional dual bound.
fn sup_value(
    prep: &Prepared<'_>,
    sample: &[Instance],
    member_scores: Option<&[Vec<Vec<f64>>]>,
    eps: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Option<f64>)> {
    let m = sample.len() as f64;
    match prep {
        Prepared::Enumerated(..) => {
            let table = member_scores.expect("scores precomputed for enumerated families");
            let best = table
                .iter()
                .map(|s| correlation(s, eps))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((best / m, None))
        }
        Prepared::LinearBall { labels, budget } => {
            let xi = xi_matrix(sample, eps, *labels)?;
            Ok((budget.sqrt() * l2_norm(&xi) / m, None))
        }
        Prepared::Capped(k) => {
            let xi = xi_matrix(sample, eps, k.labels)?;
            if xi.len() != k.labels * k.dim {
                return Err(Error::Descriptor(
                    "sample dimension differs from the population".into(),
                ));
            }
            let primal = k.primal_sup(&xi, rng) / m;
            Ok((primal, k.dual_sup(&xi).map(|d| d / m)))
        }
    }
}

fn member_table(members: &[&dyn Scorer], sample: &[Instance]) -> Result<Vec<Vec<Vec<f64>>>> {
    members
        .iter()
        .map(|f| sample.iter().map(|x| f.scores(x)).collect())
        .collect()
}

fn one_draw(
    prep: &Prepared<'_>,
    sample: &[Instance],
    opts: &EstimatorOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Option<f64>)> {
    let c = prep.labels();
    let table = match prep {
        Prepared::Enumerated(members, _) => Some(member_table(members, sample)?),
        _ => None,
    };
    let eps = rademacher_matrix(rng, sample.len(), c);
    let (a, da) = sup_value(prep, sample, table.as_deref(), &eps, rng)?;
    if !opts.antithetic {
        return Ok((a, da));
    }
    let neg: Vec<Vec<f64>> = eps.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let (b, db) = sup_value(prep, sample, table.as_deref(), &neg, rng)?;
    Ok((0.5 * (a + b), da.zip(db).map(|(x, y)| 0.5 * (x + y))))
}

fn collect(
    results: Vec<Result<(f64, Option<f64>)>>,
    solver: SupSolver,
) -> Result<ComplexityEstimate> {
    let mut values = Vec::with_capacity(results.len());
    let mut duals = Vec::with_capacity(results.len());
    for r in results {
        let (v, d) = r?;
        values.push(v);
        if let Some(d) = d {
            duals.push(d);
        }
    }
    let dual = (duals.len() == values.len() && !duals.is_empty()).then_some(duals);
    Ok(ComplexityEstimate::from_values(values, solver, dual))
}

fn check_opts(opts: &EstimatorOptions) -> Result<()> {
    if opts.num_draws == 0 {
        return Err(Error::Domain("num_draws must be positive".into()));
    }
    Ok(())
}

/// `R̂_m(F; S) = (1/m)·E_ε[sup_f Σ_i Σ_y ε_{iy} f(x_i, y)]` at a fixed sample.
pub fn empirical_rademacher(
    family: &Family<'_>,
    sample: &[Instance],
    opts: &EstimatorOptions,
) -> Result<ComplexityEstimate> {
    check_opts(opts)?;
    if sample.is_empty() {
        return Err(Error::EmptySplit("sample"));
    }
    let prep = prepare(family)?;
    let results: Vec<_> = (0..opts.num_draws)
        .into_par_iter()
        .map(|d| one_draw(&prep, sample, opts, &mut draw_rng(opts.seed, d)))
        .collect();
    collect(results, prep.solver())
}

/// `R_m(F) = E_S[R̂_m(F; S)]`: every draw samples a fresh `S` of size `m`
/// from `dist` along with its `ε`.
pub fn expected_rademacher(
    family: &Family<'_>,
    dist: &FiniteDistribution,
    m: usize,
    opts: &EstimatorOptions,
) -> Result<ComplexityEstimate> {
    check_opts(opts)?;
    if m == 0 {
        return Err(Error::EmptySplit("sample"));
    }
    let prep = prepare(family)?;
    let results: Vec<_> = (0..opts.num_draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(opts.seed, d);
            let sample: Vec<Instance> = sample_indices(dist, m, &mut rng)
                .into_iter()
                .map(|i| dist.points()[i].instance.clone())
                .collect();
            one_draw(&prep, &sample, opts, &mut rng)
        })
        .collect();
    collect(results, prep.solver())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftIdentityReport {
    pub mu: f64,
    /// `max_draw |sup_{F^μ} − (sup_F − μ·Σ ε v)|`, before dividing by `m`.
    pub max_discrepancy: f64,
    pub base: ComplexityEstimate,
    pub shifted: ComplexityEstimate,
    /// `sqrt(se_base² + se_shifted²)`.
    pub pooled_std_error: f64,
}

impl ShiftIdentityReport {
    pub fn mean_difference(&self) -> f64 {
        self.shifted.mean - self.base.mean
    }
}

/// Verifies per draw that the sup over `F^μ = {f − μ·v}` equals the sup over
/// `F` shifted by `−μ·Σ_{i,y} ε_{iy} v(x_i, y)`, and compares the two
/// estimates. For the linear ball the shifted sup is computed by projected
/// ascent on the shifted scores.
pub fn ccm_complexity_identity_check(
    family: &Family<'_>,
    cmap: &ConstraintMap,
    mu: f64,
    sample: &[Instance],
    opts: &EstimatorOptions,
) -> Result<ShiftIdentityReport> {
    check_opts(opts)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("identity check needs finite mu >= 0, got {mu}")));
    }
    if sample.is_empty() {
        return Err(Error::EmptySplit("sample"));
    }
    let prep = prepare(family)?;
    let c = prep.labels();
    let table = match &prep {
        Prepared::Enumerated(members, _) => Some(member_table(members, sample)?),
        Prepared::LinearBall { .. } => None,
        Prepared::Capped(_) => {
            return Err(Error::Descriptor(
                "identity check supports enumerated and linear-ball families".into(),
            ))
        }
    };
    let penalty: Vec<Vec<f64>> = sample
        .iter()
        .map(|x| {
            let adm = cmap.admissible(x.id)?;
            Ok((0..c).map(|y| if adm.contains(y) { 0.0 } else { 1.0 }).collect())
        })
        .collect::<Result<_>>()?;
    let m = sample.len() as f64;

    let per_draw: Vec<Result<(f64, f64, f64)>> = (0..opts.num_draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(opts.seed, d);
            let eps = rademacher_matrix(&mut rng, sample.len(), c);
            let shift = mu * correlation(&penalty, &eps);
            let (base, shifted) = match &table {
                Some(t) => {
                    let base = t.iter().map(|s| correlation(s, &eps)).fold(f64::NEG_INFINITY, f64::max);
                    let shifted = t
                        .iter()
                        .map(|s| {
                            let moved: Vec<Vec<f64>> = s
                                .iter()
                                .zip(&penalty)
                                .map(|(row, v)| row.iter().zip(v).map(|(a, b)| a - mu * b).collect())
                                .collect();
                            correlation(&moved, &eps)
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    (base, shifted)
                }
                None => {
                    let Prepared::LinearBall { budget, .. } = prep else {
                        unreachable!()
                    };
                    let xi = xi_matrix(sample, &eps, c)?;
                    let base = budget.sqrt() * l2_norm(&xi);
                    let shifted = shifted_ball_sup(sample, &eps, &penalty, mu, budget, c)?;
                    (base, shifted)
                }
            };
            Ok((base, shifted, (shifted - (base - shift)).abs()))
        })
        .collect();
    let mut base_vals = Vec::new();
    let mut shifted_vals = Vec::new();
    let mut worst: f64 = 0.0;
    for r in per_draw {
        let (b, s, e) = r?;
        base_vals.push(b / m);
        shifted_vals.push(s / m);
        worst = worst.max(e);
    }
    let base = ComplexityEstimate::from_values(base_vals, prep.solver(), None);
    let shifted = ComplexityEstimate::from_values(shifted_vals, prep.solver(), None);
    let pooled = (base.std_error.powi(2) + shifted.std_error.powi(2)).sqrt();
    Ok(ShiftIdentityReport {
        mu,
        max_discrepancy: worst,
        base,
        shifted,
        pooled_std_error: pooled,
    })
}

/// `sup_W Σ_{i,y} ε_{iy}(w_yᵀx_i − μ·v_{iy})` over the ball, by projected
/// gradient ascent evaluated on the shifted scores.
fn shifted_ball_sup(
    sample: &[Instance],
    eps: &[Vec<f64>],
    penalty: &[Vec<f64>],
    mu: f64,
    budget: f64,
    c: usize,
) -> Result<f64> {
    let p = sample[0].features.len();
    let objective = |w: &[f64]| -> f64 {
        sample
            .iter()
            .zip(eps)
            .zip(penalty)
            .map(|((x, e), v)| {
                (0..c)
                    .map(|y| e[y] * (dot(&w[y * p..(y + 1) * p], &x.features) - mu * v[y]))
                    .sum::<f64>()
            })
            .sum()
    };
    // the objective is linear in W; its gradient is Ξ
    let grad = xi_matrix(sample, eps, c)?;
    let mut w = vec![0.0; c * p];
    let mut best = objective(&w);
    let mut step = budget.sqrt().max(1e-12);
    for _ in 0..60 {
        let mut cand: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        project_to_ball(cand.iter_mut(), budget);
        let val = objective(&cand);
        if val > best {
            best = val;
            w = cand;
        } else {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// `(1/2)(√(c/m) + √((c − σ² − ‖α‖²)/m))`.
pub fn capped_family_bound(c: usize, m: usize, sigma2: f64, alpha_sq: f64) -> f64 {
    let (c, m) = (c as f64, m as f64);
    0.5 * ((c / m).sqrt() + ((c - sigma2 - alpha_sq).max(0.0) / m).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetComplexityReport {
    pub cap: f64,
    pub m: usize,
    pub alpha_sq: f64,
    pub sigma2: f64,
    /// Primal estimate of `R_m(F_t)`, with per-draw dual bounds attached.
    pub constrained: ComplexityEstimate,
    /// `R_m(F)` for the uncapped ball on the same draws.
    pub unconstrained: ComplexityEstimate,
    pub bound: f64,
    pub unconstrained_bound: f64,
    pub holds: bool,
}

/// Monte-Carlo `R_m(F_t)` for `F_t = {Σ‖w_j‖² ≤ 1, V ≤ t}` against the
/// closed-form bound; `dist` must have features in the unit ball.
pub fn constrained_subset_complexity_bound(
    dist: &FiniteDistribution,
    cap: f64,
    m: usize,
    opts: &EstimatorOptions,
) -> Result<SubsetComplexityReport> {
    let c = dist.num_labels();
    if !(cap < 1.0 / (c as f64 + 2.0)) {
        return Err(Error::Precondition(format!(
            "cap {cap} must be below 1/(c+2) = {}",
            1.0 / (c as f64 + 2.0)
        )));
    }
    if dist.points().iter().any(|p| l2_norm(&p.instance.features) > 1.0 + 1e-12) {
        return Err(Error::Precondition("instances must lie in the unit ball".into()));
    }
    let alpha = population_mean(dist);
    let alpha_sq = dot(&alpha, &alpha);
    let sigma2 = directional_variance(dist);
    let capped = Family::CappedLinearBall {
        budget: 1.0,
        cap,
        population: dist,
    };
    let ball = Family::LinearBall {
        labels: c,
        budget: 1.0,
    };
    let constrained = expected_rademacher(&capped, dist, m, opts)?;
    let unconstrained = expected_rademacher(&ball, dist, m, opts)?;
    let bound = capped_family_bound(c, m, sigma2, alpha_sq);
    Ok(SubsetComplexityReport {
        cap,
        m,
        alpha_sq,
        sigma2,
        holds: constrained.mean <= bound + 3.0 * constrained.std_error,
        constrained,
        unconstrained,
        bound,
        unconstrained_bound: (c as f64 / m as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapTerms {
    /// `√(log(1/δ)/(2 m_L))`.
    pub confidence_labeled: f64,
    /// `√(log(1/δ)/(2 m_U))`.
    pub confidence_unlabeled: f64,
    /// `R_{m_L}(F) + √(log(1/δ)/(2 m_L))`: the risk gap bound.
    pub risk_gap_bound: f64,
    /// `B(δ, m_U, F) = R_{m_U}(F) + 2√(log(1/δ)/(2 m_U))`.
    pub b_term: f64,
    /// `(√2/2)·√(1/(c − c₀) + 1/c₀)` when every admissible set has size `c₀`.
    pub improved_constant: Option<f64>,
}

/// Additive terms of the risk and violation generalization bounds.
pub fn generalization_gap_terms(
    m_labeled: usize,
    m_unlabeled: usize,
    delta: f64,
    complexity_labeled: f64,
    complexity_unlabeled: f64,
    labels_and_size: Option<(usize, usize)>,
) -> Result<GapTerms> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    let conf = |m: usize| ((1.0 / delta).ln() / (2.0 * m as f64)).sqrt();
    let improved_constant = match labels_and_size {
        Some((c, c0)) => {
            if c0 == 0 || c0 >= c {
                return Err(Error::Domain(format!("need 0 < c0 < c, got c0 = {c0}, c = {c}")));
            }
            Some(
                std::f64::consts::FRAC_1_SQRT_2
                    * (1.0 / (c - c0) as f64 + 1.0 / c0 as f64).sqrt(),
            )
        }
        None => None,
    };
    Ok(GapTerms {
        confidence_labeled: conf(m_labeled),
        confidence_unlabeled: conf(m_unlabeled),
        risk_gap_bound: complexity_labeled + conf(m_labeled),
        b_term: complexity_unlabeled + 2.0 * conf(m_unlabeled),
        improved_constant,
    })
}
