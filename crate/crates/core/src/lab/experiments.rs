use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ccm::{
    check_no_ccm_benefit, integrality_gap, margin_delta, marginal_benefit_sign, mu_grid,
    post_training_futility_rho, risk_delta, select_mu, zero_one_violation, BenefitSign,
    ccm_probability_derivative, combo_rho_threshold, RiskDelta,
};
use crate::complexity::{
    ccm_complexity_identity_check, constrained_subset_complexity_bound, empirical_rademacher,
    expected_rademacher, generalization_gap_terms, EstimatorOptions, Family,
};
use crate::constraint::{
    sample_dataset, ConstraintMap, FiniteDistribution, Instance, LabelSet, LabelSpace,
};
use crate::error::{Error, Result};
use crate::format::load_distribution;
use crate::lambert::{lambert_w0, BRANCH_POINT};
use crate::losses::{
    ccm_loss_gradient, cross_entropy_from_log, empirical_risk, fmt_real, loss_gradient,
    pointwise_loss, pointwise_violation, population_risk, violation_gradient, LossKind,
};
use crate::numeric::l2_norm;
use crate::scoring::{
    argmax, log_softmax, shift_scores, softmax, AnyScorer, CcmModel, LinearScorer, Mu,
    ScoreTable, Scorer, ViolationPenalty,
};
use crate::synth::{
    make_finite_with, make_gaussian_features, make_proof_construction, scorer_with_violation,
    FiniteSpec, ProofConstruction, WeightScheme,
};
use crate::training::{
    baseline_scorer, deviation_bound_check, evaluate_regularized_objective, train, train_with,
    ModelSpace, Objective, TrainConfig, TrainData,
};

use super::config::ExperimentConfig;
use super::plot::{Plot, Series};
use super::report::{CheckRecord, ExperimentReport};

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub tolerances: &'static [(&'static str, f64)],
    pub rng: ChaCha8Rng,
    pub report: ExperimentReport,
}

/// Ranges for the random distributions an experiment draws; the config's
/// `[distribution]` values override them.
#[derive(Clone, Copy)]
struct Draw {
    labels: (usize, usize),
    points: (usize, usize),
    noisy: bool,
    dim: usize,
}

impl Draw {
    fn new(labels: (usize, usize), points: (usize, usize), noisy: bool) -> Self {
        Self {
            labels,
            points,
            noisy,
            dim: 3,
        }
    }
}

impl Ctx<'_> {
    fn tol(&self, key: &str) -> f64 {
        self.cfg.tolerances.get(key).copied().unwrap_or_else(|| {
            self.tolerances
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .expect("tolerance declared in the catalog")
        })
    }

    fn instances(&self, default: usize) -> usize {
        self.cfg.instances.unwrap_or(default)
    }

    fn draws(&self, default: usize) -> usize {
        self.cfg.draws.unwrap_or(default)
    }

    fn push(&mut self, r: CheckRecord) {
        self.report.push(r);
    }

    fn note(&mut self, s: String) {
        self.report.notes.push(s);
    }

    fn seed(&mut self) -> u64 {
        self.rng.random()
    }

    fn distribution(&mut self, d: Draw) -> Result<FiniteDistribution> {
        let spec = &self.cfg.distribution;
        if let Some(path) = &spec.file {
            return load_distribution(path);
        }
        let labels = spec
            .labels
            .unwrap_or_else(|| self.rng.random_range(d.labels.0..=d.labels.1));
        let lo = if d.noisy { d.points.0.max(2) } else { d.points.0 };
        let n = spec
            .points
            .unwrap_or_else(|| self.rng.random_range(lo..=d.points.1.max(lo)));
        let noise = match spec.noise {
            Some(v) => v,
            None if d.noisy => {
                let k = self.rng.random_range(1..=(n / 3).max(1));
                k as f64 / n as f64
            }
            None => 0.0,
        };
        let fs = FiniteSpec {
            labels,
            num_points: n,
            target_noise: noise,
            seed: self.seed(),
            dim: spec.dim.unwrap_or(d.dim),
            weights: spec.weights.unwrap_or(WeightScheme::Uniform),
        };
        Ok(make_finite_with(&fs)?.dist)
    }

    fn table(&mut self, n: usize, c: usize, scale: f64) -> ScoreTable {
        let rows = (0..n)
            .map(|_| (0..c).map(|_| scale * self.rng.random_range(-1.0..1.0)).collect())
            .collect();
        ScoreTable::new(c, rows).expect("finite scores")
    }
}

/// Replaces every full admissible set by one missing a random non-oracle
/// label, so every instance can carry violation mass. Noise is unchanged.
fn proper_constraint(dist: &FiniteDistribution, rng: &mut ChaCha8Rng) -> Result<FiniteDistribution> {
    let c = dist.num_labels();
    let sets = dist
        .points()
        .iter()
        .zip(dist.constraint().sets())
        .map(|(p, s)| {
            if s.len() < c {
                return *s;
            }
            let others: Vec<usize> = (0..c).filter(|&y| y != p.oracle).collect();
            let mut t = *s;
            t.remove(others[rng.random_range(0..others.len())]);
            t
        })
        .collect();
    dist.with_constraint(ConstraintMap::new(dist.labels(), sets)?)
}

fn linear_space() -> ModelSpace {
    ModelSpace::Linear { budget: Some(4.0) }
}

fn ce_config(objective: Objective) -> TrainConfig {
    TrainConfig {
        loss: LossKind::CrossEntropy,
        ..TrainConfig::new(objective)
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn noise_free_identity(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("identity");
    for i in 0..ctx.instances(20) {
        let dist = ctx.distribution(Draw::new((2, 6), (1, 50), false))?;
        let f = ctx.table(dist.len(), dist.num_labels(), 3.0);
        let delta = risk_delta(&dist, &f, Mu::Infinite)?.delta_ce;
        let v_ce = population_risk(&dist, &f, LossKind::CrossEntropy)?.violation_ce;
        ctx.push(CheckRecord::at_most(
            format!("instance {i} (c={}, n={}, V_ora={})", dist.num_labels(), dist.len(), dist.noise_rate()),
            "|delta_ce_inf-V_ce|",
            (delta - v_ce).abs(),
            tol,
        ));
    }
    Ok(())
}

pub fn ccm_lower_bound(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("slack");
    let grid = ctx.cfg.mu_grid.clone().unwrap_or_else(mu_grid);
    for i in 0..ctx.instances(20) {
        let dist = ctx.distribution(Draw::new((2, 6), (2, 30), true))?;
        let f = ctx.table(dist.len(), dist.num_labels(), 3.0);
        let mut worst = (f64::INFINITY, f64::NAN);
        let mut rows: Vec<RiskDelta> = Vec::new();
        for &mu in &grid {
            let rd = risk_delta(&dist, &f, Mu::new(mu)?)?;
            let s = rd.delta_ce - rd.lower_bound_ce;
            if s < worst.0 {
                worst = (s, mu);
            }
            if i == 0 {
                rows.push(rd);
            }
        }
        ctx.push(CheckRecord::at_least(
            format!("instance {i} (V_ora={}, tightest mu={})", fmt_real(dist.noise_rate()), fmt_real(worst.1)),
            "min_mu[delta_ce-(V(1-exp(-mu))-mu*V_ora)]>=0",
            worst.0,
            -tol,
        ));
        if i == 0 {
            let mut table = format!("{}\n", RiskDelta::CSV_HEADER);
            for r in &rows {
                table.push_str(&r.to_csv_row("instance_0"));
                table.push('\n');
            }
            ctx.report.tables.push(("risk_delta.csv".into(), table));
            let plot = Plot::new("CCM cross-entropy risk change", "mu", "risk change")
                .log_x()
                .with(Series::new(
                    "delta_ce",
                    rows.iter().map(|r| (r.mu.value(), r.delta_ce)).collect(),
                ))
                .with(
                    Series::new(
                        "lower bound",
                        rows.iter().map(|r| (r.mu.value(), r.lower_bound_ce)).collect(),
                    )
                    .dashed(),
                );
            ctx.report.plots.push(("delta_vs_mu".into(), plot));
        }
    }
    Ok(())
}

pub fn benefit_sign(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("derivative");
    for i in 0..ctx.instances(5) {
        let dist = ctx.distribution(Draw::new((3, 6), (4, 30), true))?;
        let dist = proper_constraint(&dist, &mut ctx.rng)?;
        let v_ora = dist.noise_rate();
        let cases = [
            ("above", v_ora + 0.5 * (1.0 - v_ora), BenefitSign::Improves),
            ("equal", v_ora, BenefitSign::Neutral),
            ("below", 0.5 * v_ora, BenefitSign::Degrades),
        ];
        for (name, v, expect) in cases {
            let f = scorer_with_violation(dist.constraint(), v, &mut ctx.rng)?;
            let mb = marginal_benefit_sign(&dist, &f)?;
            let check = format!("instance {i} V {name} V_ora={}", fmt_real(v_ora));
            ctx.push(CheckRecord::holds(
                check.clone(),
                &format!("sign=={expect}"),
                mb.sign == expect,
            ));
            ctx.push(CheckRecord::at_most(
                check,
                "|d/dmu delta_ce(0)_fd-(V-V_ora)|",
                (mb.derivative_fd - (mb.violation - mb.noise_rate)).abs(),
                tol,
            ));
        }
    }
    Ok(())
}

/// Positive root of `(1 − e^{−μ})η − μ` by bisection.
fn bisect_mu(eta: f64) -> f64 {
    let g = |mu: f64| -(-mu).exp_m1() * eta - mu;
    let mut lo = (eta - 1.0) / eta;
    while g(lo) <= 0.0 && lo > 1e-300 {
        lo *= 0.5;
    }
    let mut hi = eta;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mu_selection_curve(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol_root = ctx.tol("root");
    let tol_risk = ctx.tol("risk");
    let etas = sorted(ctx.cfg.eta_grid.clone().unwrap_or(vec![1.0, 1.5, 2.0, 3.0, 5.0]));
    let mut prev: Option<(f64, f64)> = None;
    for &eta in &etas {
        let mu = select_mu(eta, 1.0)?.value();
        if eta == 1.0 {
            ctx.push(CheckRecord::at_most("eta 1", "mu(1)==0", mu.abs(), 0.0));
        } else {
            ctx.push(CheckRecord::at_most(
                format!("eta {eta}"),
                "|mu-bisection_root|",
                (mu - bisect_mu(eta)).abs(),
                tol_root,
            ));
        }
        if let Some((pe, pm)) = prev {
            ctx.push(CheckRecord::holds(
                format!("eta {pe} -> {eta}"),
                "mu(eta)_increasing",
                mu > pm,
            ));
        }
        prev = Some((eta, mu));
    }

    for i in 0..ctx.instances(20) {
        let n = ctx.rng.random_range(11..=30);
        let mut d = Draw::new((3, 6), (n, n), true);
        d.noisy = true;
        let dist = if ctx.cfg.distribution.noise.is_none() && ctx.cfg.distribution.file.is_none() {
            let labels = ctx.cfg.distribution.labels.unwrap_or_else(|| ctx.rng.random_range(3..=6));
            let fs = FiniteSpec {
                labels,
                num_points: n,
                target_noise: 1.0 / n as f64,
                seed: ctx.seed(),
                dim: 3,
                weights: ctx.cfg.distribution.weights.unwrap_or(WeightScheme::Uniform),
            };
            make_finite_with(&fs)?.dist
        } else {
            ctx.distribution(d)?
        };
        let dist = proper_constraint(&dist, &mut ctx.rng)?;
        let v_ora = dist.noise_rate();
        let eta_max = (0.95 / v_ora).min(10.0);
        if eta_max <= 1.1 {
            return Err(Error::Precondition(format!(
                "noise rate {v_ora} leaves no room for eta in [1.1, 10]"
            )));
        }
        let eta = ctx.rng.random_range(1.1..=eta_max);
        let f = scorer_with_violation(dist.constraint(), eta * v_ora, &mut ctx.rng)?;
        let v = population_risk(&dist, &f, LossKind::Ell1)?.violation_l1;
        let mu = select_mu(v, v_ora)?;
        let rd = risk_delta(&dist, &f, mu)?;
        let check = format!("instance {i} (eta={eta:.4}, mu*={})", fmt_real(mu.value()));
        ctx.push(CheckRecord::at_most(
            check.clone(),
            "R_ce(f^mu*)-R_ce(f)<=0",
            -rd.delta_ce,
            tol_risk,
        ));
        let m = mu.value();
        ctx.push(CheckRecord::at_most(
            check,
            "|(1-exp(-mu*))V-mu*V_ora|",
            (-(-m).exp_m1() * v - m * v_ora).abs(),
            tol_root,
        ));
    }

    let curve: Vec<(f64, f64)> = (0..=180)
        .map(|k| {
            let eta = 1.0 + 9.0 * k as f64 / 180.0;
            (eta, select_mu(eta, 1.0).map_or(f64::NAN, |m| m.value()))
        })
        .collect();
    let mut table = String::from("eta,mu\n");
    for (e, m) in &curve {
        table.push_str(&format!("{},{}\n", fmt_real(*e), fmt_real(*m)));
    }
    ctx.report.tables.push(("mu_curve.csv".into(), table));
    ctx.report.plots.push((
        "mu_vs_eta".into(),
        Plot::new("Largest safe mu", "eta = V(f)/V_ora", "mu").with(Series::new("mu(eta)", curve)),
    ));
    Ok(())
}

pub fn lambert_w(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("residual");
    let anchor = ctx.tol("anchor");
    let n = ctx.instances(10_000).max(2);
    let mut worst = (0.0f64, 0.0);
    let mut curve = Vec::new();
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        let t = BRANCH_POINT + (1000.0 - BRANCH_POINT) * s * s * s;
        let w = lambert_w0(t)?;
        let r = (w * w.exp() - t).abs() / t.abs().max(1.0);
        if r > worst.0 {
            worst = (r, t);
        }
        if t <= 10.0 && i % 4 == 0 {
            curve.push((t, w));
        }
    }
    ctx.push(CheckRecord::at_most(
        format!("{n} points in [-1/e, 1000] (worst t={})", fmt_real(worst.1)),
        "|W(t)exp(W(t))-t|/max(1,|t|)",
        worst.0,
        tol,
    ));
    ctx.push(CheckRecord::at_most("W(0)", "|W(0)-0|", lambert_w0(0.0)?.abs(), anchor));
    ctx.push(CheckRecord::at_most(
        "W(e)",
        "|W(e)-1|",
        (lambert_w0(std::f64::consts::E)? - 1.0).abs(),
        anchor,
    ));
    ctx.push(CheckRecord::at_most(
        "W(-1/e)",
        "|W(-1/e)+1|",
        (lambert_w0(BRANCH_POINT)? + 1.0).abs(),
        anchor,
    ));
    ctx.report.plots.push((
        "lambert_w".into(),
        Plot::new("Principal branch W(t)", "t", "W(t)").with(Series::new("W", curve)),
    ));
    Ok(())
}

pub fn deviation_bound(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("slack");
    let tight = ctx.tol("tightness");
    let rhos = ctx.cfg.rho_grid.clone().unwrap_or(vec![0.5, 1.0, 2.0, 5.0]);
    for i in 0..ctx.instances(50) {
        let dist = ctx.distribution(Draw::new((2, 5), (2, 10), true))?;
        let (n, c) = (dist.len(), dist.num_labels());
        let grid: Vec<ScoreTable> = (0..30)
            .map(|_| {
                let scale = ctx.rng.random_range(0.5..6.0);
                ctx.table(n, c, scale)
            })
            .collect();
        for kind in [LossKind::Ell1, LossKind::CrossEntropy] {
            let (mut lo, mut up) = (f64::INFINITY, f64::INFINITY);
            for &rho in &rhos {
                let rep = deviation_bound_check(&dist, rho, &grid, kind)?;
                lo = lo.min(rep.lower_slack);
                up = up.min(rep.upper_slack);
            }
            let check = format!("grid {i} {kind}");
            ctx.push(CheckRecord::at_least(check.clone(), "R(f_rho)-R(f_0)>=0", lo, -tol));
            ctx.push(CheckRecord::at_least(
                check,
                "R(f_0)+rho(V(f_0)-V(f_inf))-R(f_rho)>=0",
                up,
                -tol,
            ));
        }
    }

    let (a, b, eps2, rho) = (0.6, 0.2, 0.1, 1.0);
    let mut curve = Vec::new();
    for eps1 in [0.05, 0.09, 0.099, 0.0999, 0.09999] {
        let c = make_proof_construction(ProofConstruction::DeviationTightness {
            a,
            b,
            eps1,
            eps2,
            rho,
        })?;
        let rep = deviation_bound_check(&c.dist, rho, &c.scorers, LossKind::Ell1)?;
        let expected = rho * eps2 - eps1;
        ctx.push(CheckRecord::at_most(
            format!("tightness eps1={eps1}"),
            "|upper_slack-(rho*eps2-eps1)|",
            (rep.upper_slack - expected).abs(),
            tight,
        ));
        curve.push((eps1, rep.upper_slack));
    }
    ctx.report.plots.push((
        "tightness".into(),
        Plot::new("Upper deviation slack on the tightness construction", "eps1", "slack")
            .with(Series::new("R(f_0)+rho(V(f_0)-V(f_inf))-R(f_rho)", curve)),
    ));
    Ok(())
}

pub fn regularized_violation_bound(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("bound");
    let u_max = ctx.tol("baseline");
    let rhos = ctx.cfg.rho_grid.clone().unwrap_or(vec![0.5, 1.0, 2.0, 5.0, 10.0]);
    let t = 20.0;
    for i in 0..ctx.instances(5) {
        let dist = ctx.distribution(Draw::new((3, 6), (4, 20), true))?;
        let base = baseline_scorer(dist.constraint(), t)?;
        let u = population_risk(&dist, &base, LossKind::Ell1)?.violation_l1;
        ctx.push(CheckRecord::at_most(format!("instance {i}"), "u=V(f_t)", u, u_max));
        let mut curve = Vec::new();
        for &rho in &rhos {
            let cfg = TrainConfig {
                loss: LossKind::Ell1,
                rho,
                baseline_t: Some(t),
                baseline_u: u,
                seed: ctx.cfg.seed,
                ..TrainConfig::new(Objective::ErvmSurrogate)
            };
            let res = train(&cfg, ModelSpace::Tabular, TrainData::Population(&dist))?;
            let v = population_risk(&dist, &res.scorer, LossKind::Ell1)?.violation_l1;
            ctx.push(CheckRecord::at_most(
                format!("instance {i} rho={rho}"),
                "V(f_rho)<=1/rho+u",
                v,
                1.0 / rho + u + tol,
            ));
            curve.push((rho, v));
        }
        if i == 0 {
            let bound: Vec<(f64, f64)> = rhos.iter().map(|r| (*r, 1.0 / r + u)).collect();
            ctx.report.plots.push((
                "violation_vs_rho".into(),
                Plot::new("Violation of the regularized minimizer", "rho", "V")
                    .log_x()
                    .with(Series::new("V(f_rho)", curve))
                    .with(Series::new("1/rho + u", bound).dashed()),
            ));
        }
    }
    Ok(())
}

pub fn risk_violation_tradeoff(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("path");
    let rhos = sorted(
        ctx.cfg
            .rho_grid
            .clone()
            .unwrap_or(vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]),
    );
    let dist = ctx.distribution(Draw::new((3, 5), (10, 30), true))?;
    let data = TrainData::Population(&dist);
    let vmin = train(&ce_config(Objective::MinViolation), linear_space(), data)?;
    let v_inf = population_risk(&dist, &vmin.scorer, LossKind::CrossEntropy)?.violation_ce;
    let f0 = train(&ce_config(Objective::Erm), linear_space(), data)?;
    let r0 = population_risk(&dist, &f0.scorer, LossKind::CrossEntropy)?;

    let mut path: Vec<(f64, f64, f64)> = Vec::new();
    let mut warm: Option<AnyScorer> = Some(f0.scorer.clone());
    for &rho in &rhos {
        let cfg = TrainConfig {
            rho,
            ..ce_config(Objective::ErvmSurrogate)
        };
        let res = train_with(&cfg, linear_space(), data, warm.as_ref(), &mut |_, _, _| {})?;
        let r = population_risk(&dist, &res.scorer, LossKind::CrossEntropy)?;
        path.push((rho, r.risk, r.violation_ce));
        warm = Some(res.scorer);
    }
    for w in path.windows(2) {
        let ((r0_, ra, va), (r1_, rb, vb)) = ((w[0].0, w[0].1, w[0].2), (w[1].0, w[1].1, w[1].2));
        let check = format!("rho {r0_} -> {r1_}");
        ctx.push(CheckRecord::at_least(check.clone(), "R_ce(f_rho)_nondecreasing", rb - ra, -tol));
        ctx.push(CheckRecord::at_most(check, "V_ce(f_rho)_nonincreasing", vb - va, tol));
    }
    for &(rho, r, _) in &path {
        ctx.push(CheckRecord::at_most(
            format!("rho {rho}"),
            "R_ce(f_rho)<=R_ce(f_0)+rho(V_ce(f_0)-V_ce(f_inf))",
            r,
            r0.risk + rho * (r0.violation_ce - v_inf) + tol,
        ));
    }
    let mut table = String::from("rho,risk_ce,violation_ce\n");
    for (rho, r, v) in &path {
        table.push_str(&format!("{},{},{}\n", fmt_real(*rho), fmt_real(*r), fmt_real(*v)));
    }
    ctx.report.tables.push(("path.csv".into(), table));
    ctx.report.plots.push((
        "risk_violation_vs_rho".into(),
        Plot::new("Regularization path", "rho", "population value")
            .with(Series::new("R_ce(f_rho)", path.iter().map(|p| (p.0, p.1)).collect()))
            .with(Series::new("V_ce(f_rho)", path.iter().map(|p| (p.0, p.2)).collect())),
    ));
    Ok(())
}

pub fn generalization_gap(ctx: &mut Ctx<'_>) -> Result<()> {
    let max_rate = ctx.tol("fail_rate");
    let delta = 0.1;
    let (m_l, m_u) = (100, 100);
    let resamples = ctx.instances(200);
    let draws = ctx.draws(500);
    let mut d = Draw::new((5, 5), (50, 50), true);
    d.dim = 3;
    let dist = if ctx.cfg.distribution.noise.is_none() && ctx.cfg.distribution.file.is_none() {
        let fs = FiniteSpec {
            labels: ctx.cfg.distribution.labels.unwrap_or(5),
            num_points: ctx.cfg.distribution.points.unwrap_or(50),
            target_noise: 0.2,
            seed: ctx.seed(),
            dim: 3,
            weights: ctx.cfg.distribution.weights.unwrap_or(WeightScheme::Uniform),
        };
        make_finite_with(&fs)?.dist
    } else {
        ctx.distribution(d)?
    };
    let (n, c) = (dist.len(), dist.num_labels());
    let family: Vec<ScoreTable> = (0..20).map(|_| ctx.table(n, c, 2.0)).collect();
    let members: Vec<&dyn Scorer> = family.iter().map(|t| t as &dyn Scorer).collect();
    let fam = Family::Enumerated(members);
    let opts = EstimatorOptions::new(draws, ctx.cfg.seed);
    let est_l = expected_rademacher(&fam, &dist, m_l, &opts)?;
    let est_u = expected_rademacher(&fam, &dist, m_u, &opts)?;
    let terms = generalization_gap_terms(m_l, m_u, delta, est_l.mean, est_u.mean, None)?;
    let violation_bound = est_u.mean + terms.confidence_unlabeled;

    let pop: Vec<(f64, f64)> = family
        .iter()
        .map(|f| population_risk(&dist, f, LossKind::Ell1).map(|r| (r.risk, r.violation_l1)))
        .collect::<Result<_>>()?;
    let (mut risk_fail, mut viol_fail) = (0usize, 0usize);
    let mut table = String::from("resample,risk_gap,violation_gap\n");
    for r in 0..resamples {
        let ds = sample_dataset(&dist, m_l, m_u, ctx.seed());
        let (mut rg, mut vg) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (f, (pr, pv)) in family.iter().zip(&pop) {
            let e = empirical_risk(&ds, f, dist.constraint(), LossKind::Ell1)?;
            rg = rg.max(pr - e.risk);
            vg = vg.max(pv - e.violation_l1);
        }
        risk_fail += usize::from(rg > terms.risk_gap_bound);
        viol_fail += usize::from(vg > violation_bound);
        table.push_str(&format!("{r},{},{}\n", fmt_real(rg), fmt_real(vg)));
    }
    let k = resamples as f64;
    ctx.push(CheckRecord::below(
        format!("risk gap over {resamples} resamples (bound {})", fmt_real(terms.risk_gap_bound)),
        "P[sup_f R-R_hat>R_mL(F)+sqrt(log(1/delta)/2mL)]<0.1",
        risk_fail as f64 / k,
        max_rate,
    ));
    ctx.push(CheckRecord::below(
        format!("violation gap over {resamples} resamples (bound {})", fmt_real(violation_bound)),
        "P[sup_f V-V_hat>R_mU(F)+sqrt(log(1/delta)/2mU)]<0.1",
        viol_fail as f64 / k,
        max_rate,
    ));
    ctx.note(format!(
        "R_mL(F) = {} (se {}), R_mU(F) = {} (se {}), draws = {draws}",
        fmt_real(est_l.mean),
        fmt_real(est_l.std_error),
        fmt_real(est_u.mean),
        fmt_real(est_u.std_error)
    ));
    ctx.report.tables.push(("gaps.csv".into(), table));
    Ok(())
}

pub fn capped_complexity(ctx: &mut Ctx<'_>) -> Result<()> {
    let sigmas = ctx.tol("sigma");
    let draws = ctx.draws(200);
    let c = ctx.cfg.distribution.labels.unwrap_or(5);
    let population = ctx.cfg.distribution.points.unwrap_or(500);
    let (cap, m, sigma2) = (0.13, 100, 0.01);
    let alpha = [0.8, 0.0, 0.0];
    let seed = ctx.seed();
    let g = make_gaussian_features(c, 3, 1.0, 1.0, &alpha, sigma2, population, seed)?;
    let opts = EstimatorOptions::new(draws, ctx.cfg.seed);
    let rep = constrained_subset_complexity_bound(&g.dist, cap, m, &opts)?;
    let se = rep.constrained.std_error;
    ctx.push(CheckRecord::at_most(
        format!("capped ball, t={cap}, c={c}, m={m}, {draws} draws"),
        "R_m(F_t)<=(1/2)(sqrt(c/m)+sqrt((c-s2-|a|^2)/m))+3se",
        rep.constrained.mean,
        rep.bound + sigmas * se,
    ));
    if let Some(dual) = &rep.constrained.dual_values {
        let worst = dual
            .iter()
            .zip(&rep.constrained.per_draw_values)
            .map(|(d, p)| d - p)
            .fold(f64::INFINITY, f64::min);
        ctx.push(CheckRecord::at_least(
            "per-draw weak duality",
            "min_draw(dual-primal)>=0",
            worst,
            -1e-9,
        ));
        let (dm, dse) = rep.constrained.dual_summary().unwrap_or((f64::NAN, f64::NAN));
        ctx.note(format!("dual upper estimate = {} (se {})", fmt_real(dm), fmt_real(dse)));
    }
    ctx.push(CheckRecord::at_most(
        "uncapped ball",
        "R_m(F)<=sqrt(c/m)+3se",
        rep.unconstrained.mean,
        rep.unconstrained_bound + sigmas * rep.unconstrained.std_error,
    ));
    ctx.note(format!(
        "population: {population} points, |alpha|^2 = {}, directional variance = {}, acceptance = {}",
        fmt_real(rep.alpha_sq),
        fmt_real(rep.sigma2),
        fmt_real(g.acceptance_rate)
    ));
    ctx.note(format!(
        "primal estimate = {} (se {}), bound = {}",
        fmt_real(rep.constrained.mean),
        fmt_real(se),
        fmt_real(rep.bound)
    ));
    ctx.report.tables.push(("draws.csv".into(), rep.constrained.to_csv()));
    Ok(())
}

pub fn ccm_complexity_shift(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("identity");
    let sigmas = ctx.tol("sigma");
    let draws = ctx.draws(2000);
    let mus = ctx.cfg.mu_grid.clone().unwrap_or(vec![0.5, 2.0, 10.0]);
    let dist = ctx.distribution(Draw::new((3, 5), (12, 12), true))?;
    let (n, c) = (dist.len(), dist.num_labels());
    let sample: Vec<Instance> = dist.instances().cloned().collect();
    let tables: Vec<ScoreTable> = (0..20).map(|_| ctx.table(n, c, 1.0)).collect();
    let opts = EstimatorOptions::new(draws, ctx.cfg.seed);
    let enumerated = Family::Enumerated(tables.iter().map(|t| t as &dyn Scorer).collect());
    let ball = Family::LinearBall { labels: c, budget: 1.0 };
    for &mu in &mus {
        let r = ccm_complexity_identity_check(&enumerated, dist.constraint(), mu, &sample, &opts)?;
        ctx.push(CheckRecord::at_most(
            format!("enumerated, mu={mu}"),
            "max_draw|sup_F^mu-(sup_F-mu*sum(eps*v))|",
            r.max_discrepancy,
            tol,
        ));
        let r = ccm_complexity_identity_check(&ball, dist.constraint(), mu, &sample, &opts)?;
        ctx.push(CheckRecord::at_most(
            format!("linear ball, mu={mu}, {draws} draws"),
            "|R(F^mu)-R(F)|<=3*pooled_se",
            r.mean_difference().abs(),
            sigmas * r.pooled_std_error,
        ));
    }
    let pen = ViolationPenalty {
        mu: 1.0,
        cmap: dist.constraint().clone(),
    };
    let single = Family::Enumerated(vec![&pen]);
    let est = empirical_rademacher(&single, &sample, &opts)?;
    ctx.push(CheckRecord::at_most(
        "singleton {-mu v}",
        "|R(singleton)|==0",
        est.mean.abs(),
        0.0,
    ));
    Ok(())
}

pub fn on_training_identity(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("identity");
    let order = ctx.tol("order");
    for i in 0..ctx.instances(5) {
        let dist = ctx.distribution(Draw::new((3, 5), (8, 20), false))?;
        let data = TrainData::Population(&dist);
        let mut worst = 0.0f64;
        let mut failure: Option<Error> = None;
        let on = train_with(
            &ce_config(Objective::OnTrainingCcm),
            linear_space(),
            data,
            None,
            &mut |_, f, obj| match population_risk(&dist, f, LossKind::CrossEntropy) {
                Ok(r) => worst = worst.max((obj - (r.risk - r.violation_ce)).abs()),
                Err(e) => failure = Some(e),
            },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let check = format!("instance {i} (c={}, n={})", dist.num_labels(), dist.len());
        ctx.push(CheckRecord::at_most(
            check.clone(),
            "max_iterate|L_on(f)-(R_ce(f)-V_ce(f))|",
            worst,
            tol,
        ));
        let post = train(&ce_config(Objective::Erm), linear_space(), data)?;
        let vmin = train(&ce_config(Objective::MinViolation), linear_space(), data)?;
        let min_v = population_risk(&dist, &vmin.scorer, LossKind::CrossEntropy)?.violation_ce;
        let strict = |f: &AnyScorer| {
            population_risk(
                &dist,
                &CcmModel::new(f, Mu::Infinite, dist.constraint().clone()),
                LossKind::CrossEntropy,
            )
            .map(|r| r.risk)
        };
        let r_on_inf = strict(&on.scorer)?;
        let r_post_inf = strict(&post.scorer)?;
        let r_on = population_risk(&dist, &on.scorer, LossKind::CrossEntropy)?.risk;
        ctx.push(CheckRecord::at_most(
            check.clone(),
            "R_ce(f_on^inf)<=R_ce(f_post^inf)",
            r_on_inf,
            r_post_inf + order,
        ));
        ctx.push(CheckRecord::at_most(
            check,
            "R_ce(f_post^inf)<=R_ce(f_on)-min_f V_ce(f)",
            r_post_inf + order,
            r_on - min_v + 2.0 * order,
        ));
    }
    Ok(())
}

pub fn combined_threshold(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("risk");
    let mu = Mu::new(ctx.cfg.mu_grid.as_ref().map_or(1.0, |g| g[0]))?;
    let want = ctx.instances(10);
    let (mut found, mut attempts) = (0, 0);
    while found < want && attempts < 20 * want {
        attempts += 1;
        let dist = ctx.distribution(Draw::new((3, 5), (10, 20), true))?;
        let data = TrainData::Population(&dist);
        let post = train(&ce_config(Objective::Erm), linear_space(), data)?.scorer;
        if !(risk_delta(&dist, &post, mu)?.delta_ce > 0.0) {
            continue;
        }
        let threshold = combo_rho_threshold(&dist, &post, mu)?;
        if !(threshold > 0.0 && threshold.is_finite()) {
            continue;
        }
        let rho = 0.9 * threshold;
        let cfg = TrainConfig {
            rho,
            mu,
            ..ce_config(Objective::CombinedCcmRegularized)
        };
        let star = train_with(&cfg, linear_space(), data, Some(&post), &mut |_, _, _| {})?.scorer;
        let r_star = population_risk(
            &dist,
            &CcmModel::new(&star, mu, dist.constraint().clone()),
            LossKind::CrossEntropy,
        )?
        .risk;
        let r_post = population_risk(&dist, &post, LossKind::CrossEntropy)?.risk;
        ctx.push(CheckRecord::below(
            format!("instance {found} (V_ora={}, rho={})", fmt_real(dist.noise_rate()), fmt_real(rho)),
            "R_ce(f_star^mu)<R_ce(f_post)+tol",
            r_star,
            r_post + tol,
        ));
        found += 1;
    }
    if found < want {
        ctx.push(CheckRecord::holds(
            format!("found {found} of {want} instances with delta_ce(f_post) > 0"),
            "enough_qualifying_instances",
            false,
        ));
    }
    ctx.note(format!("mu = {mu}; {attempts} candidate distributions drawn"));
    Ok(())
}

pub fn futility_no_benefit(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("delta");
    let multipliers = ctx.cfg.rho_grid.clone().unwrap_or(vec![1.0, 2.0, 5.0]);
    let setups = [(0.3, 0.1, 10), (0.2, 0.05, 20), (0.5, 0.25, 4), (0.4, 0.15, 5), (0.1, 0.02, 10)];
    for i in 0..ctx.instances(5) {
        let (noise, min_violation, points) = setups[i % setups.len()];
        let c = make_proof_construction(ProofConstruction::FutilityGrid {
            noise,
            min_violation,
            points,
            grid_size: 40,
            seed: ctx.seed(),
        })?;
        let threshold = post_training_futility_rho(&c.dist, &c.scorers)?;
        for &k in &multipliers {
            let rho = k * threshold;
            let mut best = (f64::INFINITY, 0);
            for (j, f) in c.scorers.iter().enumerate() {
                let obj = evaluate_regularized_objective(f, &c.dist, rho, LossKind::Ell1)?;
                if obj < best.0 {
                    best = (obj, j);
                }
            }
            let f_rho = &c.scorers[best.1];
            let nb = check_no_ccm_benefit(&c.dist, f_rho, tol)?;
            let check = format!("construction {i} (V_ora={noise}, V(f_inf)={min_violation}) rho={}", fmt_real(rho));
            ctx.push(CheckRecord::at_most(check.clone(), "max_mu_grid delta_ce(f_rho)<=0", nb.max_delta_grid, tol));
            ctx.push(CheckRecord::at_most(check.clone(), "delta_ce^inf(f_rho)<=0", nb.delta_infinite, tol));
            ctx.push(CheckRecord::at_most(check, "V(f_rho)-V_ora<=0", nb.derivative_at_zero, 0.0));
            if i == 0 && k == multipliers[0] {
                let base = population_risk(&c.dist, f_rho, LossKind::CrossEntropy)?.risk;
                let curve: Vec<(f64, f64)> = mu_grid()
                    .into_iter()
                    .map(|mu| {
                        let d = crate::ccm::ccm_cross_entropy(&c.dist, f_rho, mu).map_or(f64::NAN, |r| base - r);
                        (mu, d)
                    })
                    .collect();
                ctx.report.plots.push((
                    "futility_delta".into(),
                    Plot::new("CCM risk change after strong regularization", "mu", "delta_ce")
                        .log_x()
                        .with(Series::new("delta_ce(f_rho)", curve)),
                ));
            }
        }
    }
    Ok(())
}

pub fn hinge_margin_relations(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("identity");
    let btol = ctx.tol("bound");
    let dtol = ctx.tol("derivative");
    let mus = ctx.cfg.mu_grid.clone().unwrap_or(vec![0.1, 1.0, 10.0]);
    let h = 1e-5;
    for i in 0..ctx.instances(20) {
        let clean = ctx.distribution(Draw::new((2, 6), (2, 30), false))?;
        let f = ctx.table(clean.len(), clean.num_labels(), 3.0);
        let md = margin_delta(&clean, &f, Mu::Infinite)?;
        let gap = integrality_gap(&clean, &f)?;
        ctx.push(CheckRecord::at_most(
            format!("noise-free instance {i}"),
            "|delta_margin^inf-E[max_y f-max_C f]|",
            (md - gap).abs(),
            tol,
        ));
        let rd = risk_delta(&clean, &f, Mu::Infinite)?;
        ctx.push(CheckRecord::at_least(
            format!("noise-free instance {i}"),
            "delta_l1^inf>=E[P(y_ora)P(-C)]",
            rd.delta_l1,
            2.0 * rd.lower_bound_l1 - btol,
        ));

        let noisy = ctx.distribution(Draw::new((2, 6), (2, 30), true))?;
        let g = ctx.table(noisy.len(), noisy.num_labels(), 3.0);
        for &mu in &mus {
            let rd = risk_delta(&noisy, &g, Mu::new(mu)?)?;
            ctx.push(CheckRecord::at_least(
                format!("noisy instance {i} mu={mu}"),
                "delta_l1>=((1-exp(-2mu))/2)E[P(y_ora)P(-C)]-mu*V_ora",
                rd.delta_l1,
                rd.lower_bound_l1 - btol,
            ));
        }
        // Necessity of V01 > V_ora, checked as its contrapositive: with
        // V01(f) <= V_ora no mu on the grid may reduce the margin.
        let v01 = zero_one_violation(&noisy, &g)?;
        if v01 <= noisy.noise_rate() {
            let mut best = f64::NEG_INFINITY;
            for mu in mu_grid() {
                best = best.max(margin_delta(&noisy, &g, Mu::new(mu)?)?);
            }
            ctx.push(CheckRecord::at_most(
                format!("noisy instance {i} (V01={}, V_ora={})", fmt_real(v01), fmt_real(noisy.noise_rate())),
                "V01(f)<=V_ora=>max_mu delta_margin<=0",
                best,
                btol,
            ));
        }

        let c = ctx.rng.random_range(2..=6);
        let scores: Vec<f64> = (0..c).map(|_| ctx.rng.random_range(-3.0..3.0)).collect();
        let adm = LabelSet::from_bits(ctx.rng.random_range(1..(1u64 << c)));
        let mu = ctx.rng.random_range(0.0..5.0);
        let analytic = ccm_probability_derivative(&scores, adm, mu)?;
        let up = softmax(&shift_scores(&scores, adm, mu + h))?;
        let down = softmax(&shift_scores(&scores, adm, mu - h))?;
        let err = (0..c)
            .map(|y| (analytic[y] - (up[y] - down[y]) / (2.0 * h)).abs())
            .fold(0.0, f64::max);
        ctx.push(CheckRecord::at_most(
            format!("scores {i} (c={c}, mu={mu:.3})"),
            "max_y|dP_f^mu(y)/dmu-central_difference|",
            err,
            dtol,
        ));
    }
    Ok(())
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e−3)`.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2_norm(&diff) / l2_norm(a).max(l2_norm(b)).max(1e-3)
}

fn central_difference(w: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(w.len());
    let mut p = w.to_vec();
    for k in 0..w.len() {
        p[k] = w[k] + h;
        let up = f(&p)?;
        p[k] = w[k] - h;
        let down = f(&p)?;
        p[k] = w[k];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

pub fn gradient_suite(ctx: &mut Ctx<'_>) -> Result<()> {
    let tol = ctx.tol("relative");
    let h = 1e-5;
    let names = ["grad L_ce", "grad v_ce", "grad L_ce(f^inf)", "grad L_l1", "grad v_l1"];
    let mut worst = [(0.0f64, 0usize); 5];
    for i in 0..ctx.instances(100) {
        let c = ctx.rng.random_range(2..=6);
        let p = ctx.rng.random_range(1..=4);
        let labels = LabelSpace::new(c)?;
        let w: Vec<f64> = (0..c * p).map(|_| ctx.rng.sample(StandardNormal)).collect();
        let x = Instance::new(0, (0..p).map(|_| ctx.rng.sample(StandardNormal)).collect());
        let adm = LabelSet::from_bits(ctx.rng.random_range(1..(1u64 << c)));
        let admissible: Vec<usize> = adm.iter().collect();
        let gold = admissible[ctx.rng.random_range(0..admissible.len())];
        let cmap = ConstraintMap::new(labels, vec![adm])?;
        let scorer = LinearScorer::from_flat(c, p, &w);
        let flat = |g: Vec<Vec<f64>>| g.into_iter().flatten().collect::<Vec<f64>>();
        let model = |v: &[f64]| LinearScorer::from_flat(c, p, v);

        let pairs: [(Vec<f64>, Vec<f64>); 5] = [
            (
                flat(loss_gradient(LossKind::CrossEntropy, &scorer, &x, gold)?),
                central_difference(&w, h, |v| pointwise_loss(LossKind::CrossEntropy, &model(v), &x, gold))?,
            ),
            (
                flat(violation_gradient(LossKind::CrossEntropy, &scorer, &cmap, &x)?),
                central_difference(&w, h, |v| {
                    pointwise_violation(LossKind::CrossEntropy, &model(v), &cmap, &x)
                })?,
            ),
            (
                flat(ccm_loss_gradient(LossKind::CrossEntropy, &scorer, &cmap, Mu::Infinite, &x, gold)?),
                central_difference(&w, h, |v| {
                    let m = CcmModel::new(model(v), Mu::Infinite, cmap.clone());
                    pointwise_loss(LossKind::CrossEntropy, &m, &x, gold)
                })?,
            ),
            (
                flat(loss_gradient(LossKind::Ell1, &scorer, &x, gold)?),
                central_difference(&w, h, |v| pointwise_loss(LossKind::Ell1, &model(v), &x, gold))?,
            ),
            (
                flat(violation_gradient(LossKind::Ell1, &scorer, &cmap, &x)?),
                central_difference(&w, h, |v| pointwise_violation(LossKind::Ell1, &model(v), &cmap, &x))?,
            ),
        ];
        for (k, (a, n)) in pairs.iter().enumerate() {
            let e = relative_error(a, n);
            if e > worst[k].0 {
                worst[k] = (e, i);
            }
        }
    }
    for (k, name) in names.iter().enumerate() {
        ctx.push(CheckRecord::at_most(
            format!("{name} (worst pair {})", worst[k].1),
            "max_pair rel_err(analytic,central_difference)",
            worst[k].0,
            tol,
        ));
    }
    Ok(())
}

pub fn loss_relations(ctx: &mut Ctx<'_>) -> Result<()> {
    let half_tol = ctx.tol("half_norm");
    let scale_tol = ctx.tol("scale");
    let n = ctx.instances(10_000);
    let t = 1e3;
    let (mut order, mut half, mut scale) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut scale_cases = 0;
    for _ in 0..n {
        let c = ctx.rng.random_range(2..=8);
        let s: Vec<f64> = (0..c).map(|_| ctx.rng.random_range(-5.0..5.0)).collect();
        let gold = ctx.rng.random_range(0..c);
        let lp = log_softmax(&s)?;
        let l1 = 1.0 - lp[gold].exp();
        let ce = cross_entropy_from_log(lp[gold]);
        order = order.max(l1 - ce);
        let norm: f64 = lp
            .iter()
            .enumerate()
            .map(|(y, v)| (v.exp() - if y == gold { 1.0 } else { 0.0 }).abs())
            .sum();
        half = half.max((0.5 * norm - l1).abs());

        let top = argmax(&s);
        let second = s
            .iter()
            .enumerate()
            .filter(|(y, _)| *y != top)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if s[top] - second >= 0.5 {
            scale_cases += 1;
            let scaled: Vec<f64> = s.iter().map(|v| t * v).collect();
            let l1_t = 1.0 - log_softmax(&scaled)?[gold].exp();
            let zero_one = if top == gold { 0.0 } else { 1.0 };
            scale = scale.max((l1_t - zero_one).abs());
        }
    }
    ctx.push(CheckRecord::at_most(format!("{n} evaluations"), "max(L_l1-L_ce)<=0", order, 0.0));
    ctx.push(CheckRecord::at_most(
        format!("{n} evaluations"),
        "max|L_l1-0.5*|P-onehot|_1|",
        half,
        half_tol,
    ));
    ctx.push(CheckRecord::at_most(
        format!("{scale_cases} evaluations with top-2 gap >= 0.5"),
        "max|L_l1(1000f)-1{argmax f!=y}|",
        scale,
        scale_tol,
    ));
    Ok(())
}
