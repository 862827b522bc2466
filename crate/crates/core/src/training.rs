//! Full-batch minimizers for the learning objectives: plain ERM, the
//! regularized risk-plus-violation objective, on-training CCM, and CCM
//! combined with violation regularization.

use std::fmt;
use std::str::FromStr;

use crate::constraint::{ConstraintMap, Dataset, FiniteDistribution, Instance};
use crate::error::{Error, Result};
use crate::losses::{
    cross_entropy_from_log, loss_score_gradient, population_risk, violation_from_log,
    violation_score_gradient, LossKind,
};
use crate::numeric::{dot, l2_norm, CompensatedSum};
use crate::scoring::{
    ccm_log_softmax, log_softmax, project_to_ball, shift_scores, AnyScorer, LinearScorer, Mu,
    ScoreTable, Scorer,
};

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// `R̂(f)` (or `R(f)` on a population).
    Erm,
    /// `R(f) + ρ·V(f)`.
    ErvmSurrogate,
    /// `R(f^μ)`; strict inference with the default `μ = ∞`.
    OnTrainingCcm,
    /// `R(f^μ) + ρ·V(f^μ)`.
    CombinedCcmRegularized,
    /// `V(f)` alone; finds the violation minimizer `f_∞` over the class.
    MinViolation,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Erm => "erm",
            Objective::ErvmSurrogate => "ervm_surrogate",
            Objective::OnTrainingCcm => "on_training_ccm",
            Objective::CombinedCcmRegularized => "combined_ccm_regularized",
            Objective::MinViolation => "min_violation",
        }
    }

    fn uses_ccm(self) -> bool {
        matches!(
            self,
            Objective::OnTrainingCcm | Objective::CombinedCcmRegularized
        )
    }

    fn has_risk(self) -> bool {
        !matches!(self, Objective::MinViolation)
    }

    fn violation_weight(self, rho: f64) -> f64 {
        match self {
            Objective::ErvmSurrogate | Objective::CombinedCcmRegularized => rho,
            Objective::MinViolation => 1.0,
            Objective::Erm | Objective::OnTrainingCcm => 0.0,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Objective::Erm,
            Objective::ErvmSurrogate,
            Objective::OnTrainingCcm,
            Objective::CombinedCcmRegularized,
            Objective::MinViolation,
        ]
        .into_iter()
        .find(|o| o.name() == s)
        .ok_or_else(|| Error::Domain(format!("unknown objective `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Loss used for both the risk and the violation terms; `ell1` or
    /// `cross_entropy`.
    pub loss: LossKind,
    pub rho: f64,
    pub mu: Mu,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Training is deterministic; the seed is carried for reporting.
    pub seed: u64,
    /// Known upper bound `u` on the minimal violation over the class.
    pub baseline_u: f64,
    /// When set, the baseline `f_t(x, y) = t·1{y ∈ C(x)}` joins the class and
    /// wins if its objective is lower.
    pub baseline_t: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Erm,
            loss: LossKind::CrossEntropy,
            rho: 0.0,
            mu: Mu::Infinite,
            learning_rate: 1.0,
            max_iters: 2000,
            grad_tol: 1e-8,
            seed: 0,
            baseline_u: 0.0,
            baseline_t: None,
        }
    }
}

impl TrainConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain("learning_rate must be > 0".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Domain("grad_tol must be > 0".into()));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Domain("rho must be finite and >= 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be positive".into()));
        }
        if !(self.baseline_u >= 0.0) {
            return Err(Error::Domain("baseline_u must be >= 0".into()));
        }
        if self.loss == LossKind::HingeMargin {
            return Err(Error::Domain(
                "training supports the ell1 and cross_entropy losses".into(),
            ));
        }
        Ok(())
    }
}

/// Parametric class being searched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpace {
    /// `f(x, j) = w_jᵀx`, optionally inside `Σ‖w_j‖² ≤ budget`.
    Linear { budget: Option<f64> },
    /// One free score per (instance id, label).
    Tabular,
}

/// Where the objective's expectations come from.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    /// Exact population objective over a finite support.
    Population(&'a FiniteDistribution),
    /// Risk over `S_L`, violation over `S_U`.
    Sample {
        dataset: &'a Dataset,
        cmap: &'a ConstraintMap,
    },
}

impl TrainData<'_> {
    fn cmap(&self) -> &ConstraintMap {
        match self {
            TrainData::Population(d) => d.constraint(),
            TrainData::Sample { cmap, .. } => cmap,
        }
    }

    fn num_labels(&self) -> usize {
        self.cmap().labels().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub scorer: AnyScorer,
    pub objective_trace: Vec<(usize, f64)>,
    pub grad_norms: Vec<f64>,
    pub converged: bool,
    pub final_grad_norm: f64,
    /// True when the appended baseline scorer beat the descent result.
    pub baseline_selected: bool,
}

impl TrainResult {
    pub const CSV_HEADER: &'static str = "iteration,objective,grad_norm";

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().map_or(f64::NAN, |t| t.1)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for ((it, obj), g) in self.objective_trace.iter().zip(&self.grad_norms) {
            out.push_str(&format!(
                "{it},{},{}\n",
                crate::losses::fmt_real(*obj),
                crate::losses::fmt_real(*g)
            ));
        }
        out
    }
}

struct Term<'a> {
    instance: &'a Instance,
    gold: Option<usize>,
    risk_weight: f64,
    violation_weight: f64,
}

fn build_terms<'a>(config: &TrainConfig, data: &TrainData<'a>) -> Result<Vec<Term<'a>>> {
    let obj = config.objective;
    let vw = obj.violation_weight(config.rho);
    let rw = if obj.has_risk() { 1.0 } else { 0.0 };
    match data {
        TrainData::Population(dist) => Ok(dist
            .points()
            .iter()
            .map(|p| Term {
                instance: &p.instance,
                gold: Some(p.oracle),
                risk_weight: rw * p.weight,
                violation_weight: vw * p.weight,
            })
            .collect()),
        TrainData::Sample { dataset, .. } => {
            if rw > 0.0 && dataset.labeled.is_empty() {
                return Err(Error::EmptySplit("labeled"));
            }
            if vw > 0.0 && dataset.unlabeled.is_empty() {
                return Err(Error::EmptySplit("unlabeled"));
            }
            let mut terms = Vec::new();
            if rw > 0.0 {
                let w = 1.0 / dataset.labeled.len() as f64;
                terms.extend(dataset.labeled.iter().map(|s| Term {
                    instance: &s.instance,
                    gold: Some(s.label),
                    risk_weight: w,
                    violation_weight: 0.0,
                }));
            }
            if vw > 0.0 {
                let w = vw / dataset.unlabeled.len() as f64;
                terms.extend(dataset.unlabeled.iter().map(|x| Term {
                    instance: x,
                    gold: None,
                    risk_weight: 0.0,
                    violation_weight: w,
                }));
            }
            Ok(terms)
        }
    }
}

/// Objective contribution of one term and, optionally, its score gradient.
fn term_eval(
    config: &TrainConfig,
    cmap: &ConstraintMap,
    term: &Term<'_>,
    scores: &[f64],
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let adm = cmap.admissible(term.instance.id)?;
    let (log_p, model_scores) = if config.objective.uses_ccm() {
        let lp = ccm_log_softmax(scores, adm, config.mu)?;
        let shifted = match config.mu {
            Mu::Finite(m) => shift_scores(scores, adm, m),
            Mu::Infinite => scores
                .iter()
                .enumerate()
                .map(|(y, s)| if adm.contains(y) { *s } else { f64::NEG_INFINITY })
                .collect(),
        };
        (lp, shifted)
    } else {
        (log_softmax(scores)?, scores.to_vec())
    };
    let kind = config.loss;
    let mut value = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; scores.len()]);
    if let (Some(gold), true) = (term.gold, term.risk_weight > 0.0) {
        if gold >= scores.len() {
            return Err(Error::LabelOutOfRange {
                label: gold,
                count: scores.len(),
            });
        }
        let loss = match kind {
            LossKind::Ell1 => 1.0 - log_p[gold].exp(),
            _ => cross_entropy_from_log(log_p[gold]),
        };
        value += term.risk_weight * loss;
        if let Some(g) = grad.as_mut() {
            let gs = loss_score_gradient(kind, &log_p, &model_scores, gold);
            for (a, b) in g.iter_mut().zip(gs) {
                *a += term.risk_weight * b;
            }
        }
    }
    if term.violation_weight > 0.0 {
        let (l1, ce) = violation_from_log(&log_p, adm);
        value += term.violation_weight * if kind == LossKind::Ell1 { l1 } else { ce };
        if let Some(g) = grad.as_mut() {
            let gs = violation_score_gradient(kind, &log_p, adm);
            for (a, b) in g.iter_mut().zip(gs) {
                *a += term.violation_weight * b;
            }
        }
    }
    Ok((value, grad))
}

/// Value of the configured objective at an arbitrary scorer (the scorer is
/// the base model; CCM objectives apply `μ` on top of it).
pub fn objective_value<S: Scorer + ?Sized>(
    config: &TrainConfig,
    data: TrainData<'_>,
    scorer: &S,
) -> Result<f64> {
    let terms = build_terms(config, &data)?;
    let mut acc = CompensatedSum::new();
    for t in &terms {
        let s = scorer.scores(t.instance)?;
        acc.add(term_eval(config, data.cmap(), t, &s, false)?.0);
    }
    Ok(acc.value())
}

/// Flat parameter layout of a model space.
#[derive(Debug, Clone, Copy)]
enum Layout {
    Linear {
        labels: usize,
        dim: usize,
        budget: Option<f64>,
    },
    Tabular {
        labels: usize,
        rows: usize,
    },
}

impl Layout {
    fn len(&self) -> usize {
        match *self {
            Layout::Linear { labels, dim, .. } => labels * dim,
            Layout::Tabular { labels, rows } => labels * rows,
        }
    }

    fn scorer(&self, params: &[f64]) -> Result<AnyScorer> {
        match *self {
            Layout::Linear {
                labels,
                dim,
                budget,
            } => {
                let s = LinearScorer::from_flat(labels, dim, params);
                Ok(match budget {
                    Some(b) => s.with_budget(b)?,
                    None => s,
                }
                .into())
            }
            Layout::Tabular { labels, rows } => Ok(ScoreTable::new(
                labels,
                params.chunks(labels).take(rows).map(<[f64]>::to_vec).collect(),
            )?
            .into()),
        }
    }

    fn project(&self, params: &mut [f64]) {
        if let Layout::Linear {
            budget: Some(b), ..
        } = *self
        {
            project_to_ball(params.iter_mut(), b);
        }
    }

    fn scores(&self, params: &[f64], x: &Instance) -> Result<Vec<f64>> {
        match *self {
            Layout::Linear { labels, dim, .. } => {
                if x.features.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: x.features.len(),
                    });
                }
                Ok((0..labels)
                    .map(|y| dot(&params[y * dim..(y + 1) * dim], &x.features))
                    .collect())
            }
            Layout::Tabular { labels, rows } => {
                if x.id >= rows {
                    return Err(Error::UnknownInstance { id: x.id, len: rows });
                }
                Ok(params[x.id * labels..(x.id + 1) * labels].to_vec())
            }
        }
    }

    fn accumulate(&self, grad: &mut [f64], x: &Instance, gs: &[f64]) {
        match *self {
            Layout::Linear { dim, .. } => {
                for (y, g) in gs.iter().enumerate() {
                    for (j, xj) in x.features.iter().enumerate() {
                        grad[y * dim + j] += g * xj;
                    }
                }
            }
            Layout::Tabular { labels, .. } => {
                for (y, g) in gs.iter().enumerate() {
                    grad[x.id * labels + y] += g;
                }
            }
        }
    }

    fn flatten(&self, scorer: &AnyScorer) -> Result<Vec<f64>> {
        let flat = match (self, scorer) {
            (Layout::Linear { .. }, AnyScorer::Linear(s)) => s.flat(),
            (Layout::Tabular { .. }, AnyScorer::Table(t)) => t.rows().concat(),
            _ => {
                return Err(Error::Domain(
                    "initial scorer does not belong to the model space".into(),
                ))
            }
        };
        if flat.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: flat.len(),
            });
        }
        Ok(flat)
    }
}

fn layout_for(space: ModelSpace, data: &TrainData<'_>) -> Result<Layout> {
    let labels = data.num_labels();
    Ok(match space {
        ModelSpace::Linear { budget } => {
            let dim = match data {
                TrainData::Population(d) => d.feature_dim(),
                TrainData::Sample { dataset, .. } => dataset
                    .labeled
                    .first()
                    .map(|s| s.instance.features.len())
                    .or_else(|| dataset.unlabeled.first().map(|x| x.features.len()))
                    .unwrap_or(0),
            };
            if dim == 0 {
                return Err(Error::Domain("linear model needs feature vectors".into()));
            }
            if let Some(b) = budget {
                if !(b >= 0.0 && b.is_finite()) {
                    return Err(Error::Domain(format!("norm budget must be >= 0, got {b}")));
                }
            }
            Layout::Linear {
                labels,
                dim,
                budget,
            }
        }
        ModelSpace::Tabular => Layout::Tabular {
            labels,
            rows: data.cmap().len(),
        },
    })
}

struct Problem<'a> {
    config: &'a TrainConfig,
    cmap: &'a ConstraintMap,
    terms: Vec<Term<'a>>,
    layout: Layout,
}

impl Problem<'_> {
    fn value(&self, params: &[f64]) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for t in &self.terms {
            let s = self.layout.scores(params, t.instance)?;
            acc.add(term_eval(self.config, self.cmap, t, &s, false)?.0);
        }
        Ok(acc.value())
    }

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut acc = CompensatedSum::new();
        let mut grad = vec![0.0; params.len()];
        for t in &self.terms {
            let s = self.layout.scores(params, t.instance)?;
            let (v, g) = term_eval(self.config, self.cmap, t, &s, true)?;
            acc.add(v);
            self.layout
                .accumulate(&mut grad, t.instance, &g.expect("gradient requested"));
        }
        Ok((acc.value(), grad))
    }

    /// Norm of the unit-step gradient mapping `x − P(x − ∇)`.
    fn stationarity(&self, params: &[f64], grad: &[f64]) -> f64 {
        let mut moved: Vec<f64> = params.iter().zip(grad).map(|(x, g)| x - g).collect();
        self.layout.project(&mut moved);
        let diff: Vec<f64> = params.iter().zip(&moved).map(|(a, b)| a - b).collect();
        l2_norm(&diff)
    }
}

fn diverged(message: &str, trace: &[(usize, f64)]) -> Error {
    Error::Optimization {
        message: message.into(),
        trace: trace.to_vec(),
    }
}

/// `t·1{y ∈ C(x)}` for every instance covered by `cmap`.
pub fn baseline_scorer(cmap: &ConstraintMap, t: f64) -> Result<ScoreTable> {
    let c = cmap.labels().count();
    ScoreTable::new(
        c,
        cmap.sets()
            .iter()
            .map(|s| (0..c).map(|y| if s.contains(y) { t } else { 0.0 }).collect())
            .collect(),
    )
}

pub fn train(config: &TrainConfig, space: ModelSpace, data: TrainData<'_>) -> Result<TrainResult> {
    train_with(config, space, data, None, &mut |_, _, _| {})
}

/// [`train`] with an optional warm start and an observer called with
/// `(iteration, iterate, objective)` for every accepted iterate.
pub fn train_with(
    config: &TrainConfig,
    space: ModelSpace,
    data: TrainData<'_>,
    init: Option<&AnyScorer>,
    observer: &mut dyn FnMut(usize, &AnyScorer, f64),
) -> Result<TrainResult> {
    config.validate()?;
    let layout = layout_for(space, &data)?;
    let problem = Problem {
        config,
        cmap: data.cmap(),
        terms: build_terms(config, &data)?,
        layout,
    };
    let mut params = match init {
        Some(s) => layout.flatten(s)?,
        None => vec![0.0; layout.len()],
    };
    layout.project(&mut params);

    let mut trace = Vec::new();
    let mut grad_norms = Vec::new();
    let (mut f, mut g) = problem
        .value_and_grad(&params)
        .map_err(|e| diverged(&e.to_string(), &trace))?;
    if !f.is_finite() {
        return Err(diverged("objective is not finite at the start", &trace));
    }
    let mut gnorm = problem.stationarity(&params, &g);
    trace.push((0, f));
    grad_norms.push(gnorm);
    observer(0, &layout.scorer(&params)?, f);

    let mut step = config.learning_rate;
    let mut converged = gnorm < config.grad_tol;
    let mut it = 0;
    while !converged && it < config.max_iters {
        it += 1;
        let mut t = (2.0 * step).min(config.learning_rate);
        let accepted = loop {
            let mut cand: Vec<f64> = params.iter().zip(&g).map(|(x, gi)| x - t * gi).collect();
            layout.project(&mut cand);
            let delta: Vec<f64> = cand.iter().zip(&params).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &delta);
            match problem.value(&cand) {
                Ok(fc) if fc.is_nan() => {
                    return Err(diverged("objective became NaN", &trace));
                }
                Ok(fc) if fc <= f + ARMIJO_C * decrease => break Some((cand, fc)),
                Ok(_) => {}
                Err(Error::InvalidScore { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= SHRINK;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((cand, _)) = accepted else {
            // no representable descent step left
            converged = gnorm < config.grad_tol.sqrt();
            break;
        };
        step = t;
        params = cand;
        let (fv, gv) = problem
            .value_and_grad(&params)
            .map_err(|e| diverged(&e.to_string(), &trace))?;
        if fv.is_nan() {
            return Err(diverged("objective became NaN", &trace));
        }
        f = fv;
        g = gv;
        gnorm = problem.stationarity(&params, &g);
        trace.push((it, f));
        grad_norms.push(gnorm);
        observer(it, &layout.scorer(&params)?, f);
        converged = gnorm < config.grad_tol;
    }

    let mut result = TrainResult {
        scorer: layout.scorer(&params)?,
        objective_trace: trace,
        grad_norms,
        converged,
        final_grad_norm: gnorm,
        baseline_selected: false,
    };
    if let Some(t) = config.baseline_t {
        let base = baseline_scorer(data.cmap(), t)?;
        let fb = objective_value(config, data, &base)?;
        if fb < f {
            result.scorer = base.into();
            result.baseline_selected = true;
            let last = result.objective_trace.len();
            result.objective_trace.push((last, fb));
            result.grad_norms.push(f64::NAN);
        }
    }
    Ok(result)
}

/// `R(f) + ρ·V(f)` (ℓ¹) or `R_ce(f) + ρ·V_ce(f)` over the exact population.
pub fn evaluate_regularized_objective<S: Scorer + ?Sized>(
    scorer: &S,
    dist: &FiniteDistribution,
    rho: f64,
    kind: LossKind,
) -> Result<f64> {
    let r = population_risk(dist, scorer, kind)?;
    let v = match kind {
        LossKind::Ell1 => r.violation_l1,
        LossKind::CrossEntropy => r.violation_ce,
        LossKind::HingeMargin => {
            return Err(Error::Domain(
                "regularized objective needs ell1 or cross_entropy".into(),
            ))
        }
    };
    Ok(r.risk + rho * v)
}

/// Outcome of checking `R(f_0) ≤ R(f_ρ) ≤ R(f_0) + ρ(V(f_0) − V(f_∞))` over
/// an enumerated class.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub rho: f64,
    /// Indices of the minimizers; ties within the tolerance are all kept.
    pub risk_minimizers: Vec<usize>,
    pub regularized_minimizers: Vec<usize>,
    pub violation_minimizers: Vec<usize>,
    pub risk_f0: f64,
    pub risk_f_rho: f64,
    pub risk_f_inf: f64,
    pub violation_f0: f64,
    pub violation_f_inf: f64,
    /// Smallest `R(f_ρ) − R(f_0)` over all tie combinations.
    pub lower_slack: f64,
    /// Smallest `R(f_0) + ρ(V(f_0) − V(f_∞)) − R(f_ρ)` over all tie combinations.
    pub upper_slack: f64,
    pub holds: bool,
}

pub const TIE_TOLERANCE: f64 = 1e-10;

fn argmin_ties(values: &[f64]) -> Vec<usize> {
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    (0..values.len())
        .filter(|&i| values[i] <= best + TIE_TOLERANCE)
        .collect()
}

/// Enumerates the exact minimizers `f_0`, `f_ρ`, `f_∞` over `grid` and checks
/// both deviation inequalities for every tie combination.
pub fn deviation_bound_check<S: Scorer>(
    dist: &FiniteDistribution,
    rho: f64,
    grid: &[S],
    kind: LossKind,
) -> Result<DeviationReport> {
    if grid.is_empty() {
        return Err(Error::Precondition("scorer grid is empty".into()));
    }
    if kind == LossKind::HingeMargin {
        return Err(Error::Domain("deviation check needs ell1 or cross_entropy".into()));
    }
    let mut risks = Vec::with_capacity(grid.len());
    let mut viols = Vec::with_capacity(grid.len());
    for f in grid {
        let r = population_risk(dist, f, kind)?;
        risks.push(r.risk);
        viols.push(if kind == LossKind::Ell1 {
            r.violation_l1
        } else {
            r.violation_ce
        });
    }
    let reg: Vec<f64> = risks.iter().zip(&viols).map(|(r, v)| r + rho * v).collect();
    let r0 = argmin_ties(&risks);
    let rr = argmin_ties(&reg);
    let ri = argmin_ties(&viols);

    let mut lower_slack = f64::INFINITY;
    let mut upper_slack = f64::INFINITY;
    for &a in &r0 {
        for &b in &rr {
            lower_slack = lower_slack.min(risks[b] - risks[a]);
            for &c in &ri {
                upper_slack = upper_slack.min(risks[a] + rho * (viols[a] - viols[c]) - risks[b]);
            }
        }
    }
    Ok(DeviationReport {
        rho,
        risk_f0: risks[r0[0]],
        risk_f_rho: risks[rr[0]],
        risk_f_inf: risks[ri[0]],
        violation_f0: viols[r0[0]],
        violation_f_inf: viols[ri[0]],
        holds: lower_slack >= -TIE_TOLERANCE && upper_slack >= -TIE_TOLERANCE,
        risk_minimizers: r0,
        regularized_minimizers: rr,
        violation_minimizers: ri,
        lower_slack,
        upper_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{LabelSet, LabelSpace, Point};
    use crate::scoring::CcmModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two Gaussian-ish clusters along the first axis, labels by sign.
    fn separable() -> FiniteDistribution {
        let labels = LabelSpace::new(2).unwrap();
        let xs = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
        let points: Vec<Point> = xs
            .iter()
            .map(|&x| Point::new(vec![x, 1.0], 1.0 / 8.0, usize::from(x > 0.0)))
            .collect();
        let cmap = ConstraintMap::uniform(labels, points.len(), LabelSet::full(2)).unwrap();
        FiniteDistribution::new(labels, points, cmap).unwrap()
    }

    #[test]
    fn erm_on_separable_population() {
        let d = separable();
        let mut cfg = TrainConfig::new(Objective::Erm);
        cfg.max_iters = 500;
        let res = train(&cfg, ModelSpace::Linear { budget: None }, TrainData::Population(&d)).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-10);
        }
        let r = population_risk(&d, &res.scorer, LossKind::Ell1).unwrap();
        assert!(r.risk < 0.05, "ell1 risk {}", r.risk);
        assert!(res.trace_csv().starts_with("iteration,objective,grad_norm\n0,"));
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            loss: LossKind::HingeMargin,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!("on_training_ccm".parse::<Objective>().unwrap(), Objective::OnTrainingCcm);
    }

    #[test]
    fn empty_splits_rejected() {
        let labels = LabelSpace::new(2).unwrap();
        let ds = Dataset::new(labels, vec![], vec![Instance::new(0, vec![1.0])]).unwrap();
        let cmap = ConstraintMap::uniform(labels, 1, LabelSet::full(2)).unwrap();
        let cfg = TrainConfig::new(Objective::Erm);
        let data = TrainData::Sample {
            dataset: &ds,
            cmap: &cmap,
        };
        assert!(matches!(
            train(&cfg, ModelSpace::Tabular, data),
            Err(Error::EmptySplit("labeled"))
        ));
    }

    #[test]
    fn regularized_objective_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let labels = LabelSpace::new(3).unwrap();
        let sets = vec![LabelSet::from_labels([0, 1]), LabelSet::from_labels([2])];
        let cmap = ConstraintMap::new(labels, sets).unwrap();
        let d = FiniteDistribution::new(
            labels,
            vec![Point::new(vec![], 0.4, 0), Point::new(vec![], 0.6, 1)],
            cmap.clone(),
        )
        .unwrap();
        let f = ScoreTable::new(
            3,
            (0..2)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        )
        .unwrap();
        for kind in [LossKind::Ell1, LossKind::CrossEntropy] {
            let r = population_risk(&d, &f, kind).unwrap();
            let v = if kind == LossKind::Ell1 {
                r.violation_l1
            } else {
                r.violation_ce
            };
            assert_eq!(evaluate_regularized_objective(&f, &d, 0.0, kind).unwrap(), r.risk);
            let two = evaluate_regularized_objective(&f, &d, 2.0, kind).unwrap();
            assert!((two - (r.risk + 2.0 * v)).abs() < 1e-15);
            let strict = CcmModel::new(f.clone(), Mu::Infinite, cmap.clone());
            let rs = population_risk(&d, &strict, kind).unwrap();
            assert_eq!(
                evaluate_regularized_objective(&strict, &d, 5.0, kind).unwrap(),
                rs.risk
            );
        }
    }

    #[test]
    fn tabular_ervm_reduces_violation() {
        let labels = LabelSpace::new(3).unwrap();
        let cmap = ConstraintMap::uniform(labels, 2, LabelSet::from_labels([0, 1])).unwrap();
        let d = FiniteDistribution::new(
            labels,
            vec![Point::new(vec![], 0.5, 0), Point::new(vec![], 0.5, 1)],
            cmap,
        )
        .unwrap();
        let mut cfg = TrainConfig::new(Objective::ErvmSurrogate);
        cfg.rho = 1.0;
        cfg.max_iters = 300;
        let res = train(&cfg, ModelSpace::Tabular, TrainData::Population(&d)).unwrap();
        let r = population_risk(&d, &res.scorer, LossKind::CrossEntropy).unwrap();
        assert!(r.violation_l1 < 0.01);
    }

    #[test]
    fn deviation_check_rejects_empty_grid() {
        let d = separable();
        let grid: Vec<ScoreTable> = vec![];
        assert!(deviation_bound_check(&d, 1.0, &grid, LossKind::Ell1).is_err());
    }

    #[test]
    fn baseline_scorer_has_tiny_violation() {
        let labels = LabelSpace::new(4).unwrap();
        let cmap = ConstraintMap::uniform(labels, 3, LabelSet::from_labels([1, 3])).unwrap();
        let f = baseline_scorer(&cmap, 50.0).unwrap();
        let x = Instance::new(2, vec![]);
        let v = crate::losses::pointwise_violation(LossKind::Ell1, &f, &cmap, &x).unwrap();
        assert!(v < 1e-15 && v > 0.0);
    }
}
