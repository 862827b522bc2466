//! Experiment runner behind the `lab` binary: a fixed catalog of checks,
//! each producing per-record pass/fail results, CSV tables and SVG plots.
//!
//! Output files, written to the experiment's output directory:
//!
//! * `report.csv`: `experiment,check,tag,value,bound,slack,pass`, one row per
//!   checked relation; byte-identical for the same config
//! * `summary.txt`: counts, status, wall time, failing records
//! * `*.svg`: plots (see [`plot`])
//! * other `*.csv`: experiment-specific tables
//!
//! The output directory is `$LAB_OUTPUT_DIR/<id>` when the variable is set,
//! else the config's `output_dir`, else `lab_output/<id>`.

pub mod config;
mod experiments;
pub mod gen;
pub mod plot;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::ExperimentConfig;
pub use report::{CheckRecord, ExperimentReport, REPORT_HEADER};

use crate::error::{Error, Result};

pub const OUTPUT_ENV: &str = "LAB_OUTPUT_DIR";

pub struct CatalogEntry {
    pub id: &'static str,
    /// The result the experiment checks, by name.
    pub anchor: &'static str,
    pub description: &'static str,
    /// Tolerance keys with their defaults.
    pub tolerances: &'static [(&'static str, f64)],
    run: fn(&mut experiments::Ctx<'_>) -> Result<()>,
}

static CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        id: "deviation_bound",
        anchor: "risk-violation deviation bound",
        description: "R(f_0) <= R(f_rho) <= R(f_0) + rho(V(f_0) - V(f_inf)) on random scorer grids; tightness construction",
        tolerances: &[("slack", 1e-10), ("tightness", 1e-12)],
        run: experiments::deviation_bound,
    },
    CatalogEntry {
        id: "regularized_violation_bound",
        anchor: "baseline violation bound",
        description: "ERVM with the appended baseline t*1{y in C}: V(f_rho) <= 1/rho + u",
        tolerances: &[("bound", 1e-6), ("baseline", 1e-6)],
        run: experiments::regularized_violation_bound,
    },
    CatalogEntry {
        id: "risk_violation_tradeoff",
        anchor: "regularization path",
        description: "trained linear ERVM across rho: risk rises, violation falls, deviation bound holds",
        tolerances: &[("path", 1e-6)],
        run: experiments::risk_violation_tradeoff,
    },
    CatalogEntry {
        id: "generalization_gap",
        anchor: "risk and violation generalization bounds",
        description: "resampled S_L, S_U: sup_f gap exceeds R_m(F) + sqrt(log(1/delta)/2m) in under 10% of draws",
        tolerances: &[("fail_rate", 0.1)],
        run: experiments::generalization_gap,
    },
    CatalogEntry {
        id: "capped_complexity",
        anchor: "violation-capped complexity bound",
        description: "MC R_m of the unit linear ball capped at V <= 0.13 against (1/2)(sqrt(c/m) + sqrt((c - s2 - |a|^2)/m))",
        tolerances: &[("sigma", 3.0)],
        run: experiments::capped_complexity,
    },
    CatalogEntry {
        id: "ccm_complexity_shift",
        anchor: "CCM complexity shift identity",
        description: "per-draw sup over F^mu equals the shifted sup over F; MC means agree; singleton family is 0",
        tolerances: &[("identity", 1e-10), ("sigma", 3.0)],
        run: experiments::ccm_complexity_shift,
    },
    CatalogEntry {
        id: "noise_free_identity",
        anchor: "CCM risk change, noise-free identity",
        description: "Delta_ce at mu = inf equals V_ce(f) on noise-free distributions",
        tolerances: &[("identity", 1e-9)],
        run: experiments::noise_free_identity,
    },
    CatalogEntry {
        id: "ccm_lower_bound",
        anchor: "CCM risk change, lower bound",
        description: "Delta_ce^mu >= V(f)(1 - e^-mu) - mu V_ora over the mu grid on noisy distributions",
        tolerances: &[("slack", 1e-10)],
        run: experiments::ccm_lower_bound,
    },
    CatalogEntry {
        id: "benefit_sign",
        anchor: "CCM risk change, marginal benefit",
        description: "small mu helps iff V(f) > V_ora; finite-difference derivative at 0 equals V(f) - V_ora",
        tolerances: &[("derivative", 1e-6)],
        run: experiments::benefit_sign,
    },
    CatalogEntry {
        id: "mu_selection_curve",
        anchor: "Lambert-W mu selection rule",
        description: "mu(eta) = W(-eta e^-eta) + eta: increasing, mu(1) = 0, matches bisection, never raises risk",
        tolerances: &[("root", 1e-8), ("risk", 1e-10)],
        run: experiments::mu_selection_curve,
    },
    CatalogEntry {
        id: "lambert_w",
        anchor: "principal Lambert W",
        description: "residual |W e^W - t| over [-1/e, 1000] and the closed-form anchors",
        tolerances: &[("residual", 1e-12), ("anchor", 1e-15)],
        run: experiments::lambert_w,
    },
    CatalogEntry {
        id: "on_training_identity",
        anchor: "on-training CCM objective",
        description: "noise-free: on-training objective equals R_ce - V_ce at every iterate; ordering of on/post-training risks",
        tolerances: &[("identity", 1e-9), ("order", 1e-4)],
        run: experiments::on_training_identity,
    },
    CatalogEntry {
        id: "combined_threshold",
        anchor: "combined CCM and regularization threshold",
        description: "rho below the combination threshold: trained f_star^mu beats f_post",
        tolerances: &[("risk", 1e-4)],
        run: experiments::combined_threshold,
    },
    CatalogEntry {
        id: "futility_no_benefit",
        anchor: "futility of CCM after strong regularization",
        description: "rho >= 1/(V_ora - V(f_inf)) on constructed grids: no mu in (0, inf] lowers R_ce (grid entries are multipliers of the threshold)",
        tolerances: &[("delta", 1e-10)],
        run: experiments::futility_no_benefit,
    },
    CatalogEntry {
        id: "hinge_margin_relations",
        anchor: "margin and l1 change under CCM",
        description: "noise-free margin identity, l1 lower bounds, probability derivative in mu, margin necessity condition",
        tolerances: &[("identity", 1e-9), ("bound", 1e-10), ("derivative", 1e-6)],
        run: experiments::hinge_margin_relations,
    },
    CatalogEntry {
        id: "gradient_suite",
        anchor: "analytic gradients",
        description: "gradients of L_ce, v_ce, strict-inference loss (and the l1 pair) against central differences",
        tolerances: &[("relative", 1e-5)],
        run: experiments::gradient_suite,
    },
    CatalogEntry {
        id: "loss_relations",
        anchor: "loss relations",
        description: "l1 <= cross-entropy, l1 = half the 1-norm to one-hot, scaled l1 tends to the 0/1 loss",
        tolerances: &[("half_norm", 1e-12), ("scale", 1e-6)],
        run: experiments::loss_relations,
    },
];

pub fn catalog() -> &'static [CatalogEntry] {
    CATALOG
}

pub fn find_experiment(id: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.id == id)
}

/// The text printed by `lab list`.
pub fn catalog_text() -> String {
    let width = CATALOG.iter().map(|e| e.id.len()).max().unwrap_or(0);
    let mut out = String::new();
    for e in CATALOG {
        let tols: Vec<String> = e.tolerances.iter().map(|(k, v)| format!("{k}={v:e}")).collect();
        out.push_str(&format!(
            "{:width$}  [{}] {}\n{:width$}  tolerances: {}\n",
            e.id,
            e.anchor,
            e.description,
            "",
            tols.join(", ")
        ));
    }
    out
}

/// Runs one experiment in-process. Errors mean the experiment could not be
/// carried out (bad inputs, failed preconditions); failed checks are
/// reported in the records.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let entry = find_experiment(&cfg.id)
        .ok_or_else(|| Error::Domain(format!("unknown experiment id `{}`", cfg.id)))?;
    if let Some(k) = cfg
        .tolerances
        .keys()
        .find(|k| !entry.tolerances.iter().any(|(t, _)| t == k))
    {
        return Err(Error::Domain(format!("experiment `{}` has no tolerance `{k}`", cfg.id)));
    }
    for (name, grid) in [("rho", &cfg.rho_grid), ("mu", &cfg.mu_grid), ("eta", &cfg.eta_grid)] {
        if grid.as_ref().is_some_and(|g| g.is_empty()) {
            return Err(Error::Domain(format!("{name} grid is empty")));
        }
    }
    let start = Instant::now();
    let mut ctx = experiments::Ctx {
        cfg,
        tolerances: entry.tolerances,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        report: ExperimentReport::new(entry.id, cfg.seed),
    };
    (entry.run)(&mut ctx)?;
    let mut report = ctx.report;
    report.wall_time = start.elapsed();
    Ok(report)
}

pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(base) if !base.is_empty() => PathBuf::from(base).join(&cfg.id),
        _ => cfg
            .output_dir
            .clone()
            .unwrap_or_else(|| Path::new("lab_output").join(&cfg.id)),
    }
}

/// Writes report.csv, summary.txt, plots and tables; returns the paths.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("report.csv", &report.to_csv())?;
    put("summary.txt", &report.summary())?;
    for (name, plot) in &report.plots {
        put(&format!("{name}.svg"), &plot.to_svg())?;
    }
    for (name, body) in &report.tables {
        put(name, body)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_stable_and_complete() {
        assert!(catalog().len() >= 12);
        assert_eq!(catalog_text(), catalog_text());
        let mut ids: Vec<_> = catalog().iter().map(|e| e.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), catalog().len());
        for e in catalog() {
            assert!(!e.anchor.is_empty() && !e.tolerances.is_empty());
            assert!(catalog_text().contains(e.anchor));
        }
    }

    #[test]
    fn rejects_unknown_tolerance_and_empty_grid() {
        let cfg = ExperimentConfig::new("lambert_w").with_tolerance("nope", 1.0);
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = ExperimentConfig::new("ccm_lower_bound");
        cfg.mu_grid = Some(vec![]);
        assert!(run_experiment(&cfg).is_err());
        assert!(run_experiment(&ExperimentConfig::new("missing")).is_err());
    }
}
