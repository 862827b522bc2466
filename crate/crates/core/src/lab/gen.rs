//! `lab gen`: synthetic distributions from a `[synth]` spec.
//!
//! ```text
//! [synth]
//! kind = finite
//! labels = 4
//! points = 20
//! noise = 0.1
//! seed = 3
//! ```
//!
//! Kinds and keys (defaults in parentheses):
//!
//! * `finite`: `labels` (3), `points` (10), `noise` (0), `seed` (0), `dim` (3),
//!   `weights` (uniform)
//! * `gaussian`: `labels` (5), `dim` (3), `separation` (1), `radius` (1),
//!   `mean` (zeros), `sigma2` (0.01), `points` (100), `seed` (0)
//! * `deviation_tightness`: `a` (0.6), `b` (0.2), `eps1` (0.05), `eps2` (0.1), `rho` (1)
//! * `baseline_violation`: `t` (20), `labels` (3), `points` (10), `seed` (0)
//! * `futility_grid`: `noise` (0.3), `min_violation` (0.1), `points` (10),
//!   `grid_size` (40), `seed` (0)
//!
//! Constructions also write each scorer as `<file>.<name>.scores`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::format::{save_distribution, write_scores};
use crate::synth::{
    make_finite_with, make_gaussian_features, make_proof_construction, FiniteSpec,
    ProofConstruction, WeightScheme,
};

use super::config::{parse_list, parse_real, parse_sections, parse_value, parse_weights, Entry};

#[derive(Debug, Clone, PartialEq)]
pub enum SynthSpec {
    Finite(FiniteSpec),
    Gaussian {
        labels: usize,
        dim: usize,
        separation: f64,
        radius: f64,
        mean: Vec<f64>,
        sigma2: f64,
        points: usize,
        seed: u64,
    },
    Construction(ProofConstruction),
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub files: Vec<PathBuf>,
    pub warning: Option<String>,
    pub noise_rate: f64,
}

struct Keys<'a> {
    entries: BTreeMap<&'a str, &'a Entry>,
}

impl<'a> Keys<'a> {
    fn take(&mut self, key: &str) -> Option<&'a Entry> {
        self.entries.remove(key)
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64> {
        self.take(key).map_or(Ok(default), parse_real)
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize> {
        self.take(key)
            .map_or(Ok(default), |e| parse_value(e, "a non-negative integer"))
    }

    fn seed(&mut self) -> Result<u64> {
        self.take("seed")
            .map_or(Ok(0), |e| parse_value(e, "an unsigned integer"))
    }

    fn finish(self) -> Result<()> {
        match self.entries.values().min_by_key(|e| e.line) {
            Some(e) => Err(Error::parse(e.line, format!("unknown key `{}` in [synth]", e.key))),
            None => Ok(()),
        }
    }
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        if let Some(s) = sections.iter().find(|s| s.name != "synth") {
            return Err(Error::parse(s.line, format!("unknown section [{}]", s.name)));
        }
        let section = sections
            .first()
            .ok_or_else(|| Error::parse(1, "missing [synth] section"))?;
        let mut keys = Keys {
            entries: section.entries.iter().map(|e| (e.key.as_str(), e)).collect(),
        };
        let kind = keys
            .take("kind")
            .ok_or_else(|| Error::parse(section.line, "missing `kind` in [synth]"))?;
        let spec = match kind.value.as_str() {
            "finite" => SynthSpec::Finite(FiniteSpec {
                labels: keys.count("labels", 3)?,
                num_points: keys.count("points", 10)?,
                target_noise: keys.real("noise", 0.0)?,
                seed: keys.seed()?,
                dim: keys.count("dim", 3)?,
                weights: keys
                    .take("weights")
                    .map_or(Ok(WeightScheme::Uniform), parse_weights)?,
            }),
            "gaussian" => {
                let dim = keys.count("dim", 3)?;
                let mean = match keys.take("mean") {
                    Some(e) => parse_list(e)?,
                    None => vec![0.0; dim],
                };
                SynthSpec::Gaussian {
                    labels: keys.count("labels", 5)?,
                    dim,
                    separation: keys.real("separation", 1.0)?,
                    radius: keys.real("radius", 1.0)?,
                    mean,
                    sigma2: keys.real("sigma2", 0.01)?,
                    points: keys.count("points", 100)?,
                    seed: keys.seed()?,
                }
            }
            "deviation_tightness" => SynthSpec::Construction(ProofConstruction::DeviationTightness {
                a: keys.real("a", 0.6)?,
                b: keys.real("b", 0.2)?,
                eps1: keys.real("eps1", 0.05)?,
                eps2: keys.real("eps2", 0.1)?,
                rho: keys.real("rho", 1.0)?,
            }),
            "baseline_violation" => SynthSpec::Construction(ProofConstruction::BaselineViolation {
                t: keys.real("t", 20.0)?,
                labels: keys.count("labels", 3)?,
                points: keys.count("points", 10)?,
                seed: keys.seed()?,
            }),
            "futility_grid" => SynthSpec::Construction(ProofConstruction::FutilityGrid {
                noise: keys.real("noise", 0.3)?,
                min_violation: keys.real("min_violation", 0.1)?,
                points: keys.count("points", 10)?,
                grid_size: keys.count("grid_size", 40)?,
                seed: keys.seed()?,
            }),
            other => {
                return Err(Error::parse(kind.line, format!("unknown synth kind `{other}`")));
            }
        };
        keys.finish()?;
        Ok(spec)
    }
}

/// Generates and writes the distribution (plus construction scorers).
pub fn generate(spec: &SynthSpec, out: &Path) -> Result<Generated> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut files = vec![out.to_path_buf()];
    let (dist, warning) = match spec {
        SynthSpec::Finite(fs) => {
            let s = make_finite_with(fs)?;
            (s.dist, s.meta.warning)
        }
        SynthSpec::Gaussian {
            labels,
            dim,
            separation,
            radius,
            mean,
            sigma2,
            points,
            seed,
        } => {
            let g = make_gaussian_features(*labels, *dim, *separation, *radius, mean, *sigma2, *points, *seed)?;
            (g.dist, None)
        }
        SynthSpec::Construction(kind) => {
            let c = make_proof_construction(*kind)?;
            for (name, table) in c.names.iter().zip(&c.scorers) {
                let mut p = out.as_os_str().to_owned();
                p.push(format!(".{name}.scores"));
                let p = PathBuf::from(p);
                std::fs::write(&p, write_scores(table))?;
                files.push(p);
            }
            (c.dist, None)
        }
    };
    save_distribution(out, &dist)?;
    Ok(Generated {
        files,
        warning,
        noise_rate: dist.noise_rate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{load_distribution, read_scores};

    #[test]
    fn parses_kinds_and_rejects_junk() {
        let s = SynthSpec::parse("[synth]\nkind = finite\nlabels = 4\nnoise = 0.25\n").unwrap();
        match s {
            SynthSpec::Finite(f) => assert_eq!((f.labels, f.target_noise), (4, 0.25)),
            other => panic!("{other:?}"),
        }
        assert!(SynthSpec::parse("[synth]\nkind = futility_grid\n").is_ok());
        let line = |t: &str| match SynthSpec::parse(t) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line("[synth]\nkind = nope\n"), 2);
        assert_eq!(line("[synth]\nkind = finite\nbogus = 1\n"), 3);
        assert_eq!(line("[synth]\nlabels = 3\n"), 1);
        assert_eq!(line("[other]\n"), 1);
    }

    #[test]
    fn writes_loadable_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d.dist");
        let spec = SynthSpec::parse("[synth]\nkind = deviation_tightness\n").unwrap();
        let g = generate(&spec, &out).unwrap();
        assert!(g.files.len() > 1);
        let d = load_distribution(&out).unwrap();
        assert_eq!(d.num_labels(), 3);
        for f in &g.files[1..] {
            read_scores(&std::fs::read_to_string(f).unwrap()).unwrap();
        }
        let spec = SynthSpec::parse("[synth]\nkind = finite\npoints = 10\nnoise = 0.3\nseed = 2\n").unwrap();
        let g = generate(&spec, &out).unwrap();
        assert!((g.noise_rate - 0.3).abs() < 1e-12);
    }
}
