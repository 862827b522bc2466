//! Flat key-value configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! [experiment]
//! id = noise_free_identity
//! seed = 7
//! instances = 20
//!
//! [distribution]
//! points = 5
//! noise = 0
//!
//! [grid]
//! mu = 0.5, 1, 2
//!
//! [tolerance]
//! identity = 1e-9
//! ```
//!
//! Sections and keys:
//!
//! * `experiment`: `id` (required), `seed`, `output_dir`, `instances`, `draws`
//! * `distribution`: `labels`, `points`, `noise`, `dim`, `weights`
//!   (`uniform` or `random`), `file` (relative to the config file)
//! * `grid`: `rho`, `mu`, `eta`, comma-separated reals
//! * `tolerance`: any tolerance the experiment declares (see `lab list`)

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::synth::WeightScheme;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// Splits text into sections. Keys must be unique within a section and
/// sections unique within the file.
pub fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(n, format!("unterminated section header `{line}`")))?
                .trim();
            if name.is_empty() {
                return Err(Error::parse(n, "empty section name"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::parse(n, format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name: name.to_string(),
                line: n,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(n, format!("expected `key = value`, found `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::parse(n, "empty key"));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::parse(n, format!("`{key}` appears before any [section]")))?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::parse(n, format!("duplicate key `{key}` in [{}]", section.name)));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: n,
        });
    }
    Ok(sections)
}

pub(crate) fn parse_value<T: std::str::FromStr>(e: &Entry, what: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| Error::parse(e.line, format!("`{}` needs {what}, found `{}`", e.key, e.value)))
}

pub(crate) fn parse_real(e: &Entry) -> Result<f64> {
    let v: f64 = parse_value(e, "a real number")?;
    if v.is_nan() {
        return Err(Error::parse(e.line, format!("`{}` is NaN", e.key)));
    }
    Ok(v)
}

pub(crate) fn parse_list(e: &Entry) -> Result<Vec<f64>> {
    let items: Vec<&str> = e.value.split(',').map(str::trim).collect();
    if items.iter().all(|s| s.is_empty()) {
        return Err(Error::parse(e.line, format!("grid `{}` is empty", e.key)));
    }
    items
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(e.line, format!("`{s}` in `{}` is not a finite real", e.key)))
        })
        .collect()
}

pub(crate) fn parse_weights(e: &Entry) -> Result<WeightScheme> {
    match e.value.as_str() {
        "uniform" => Ok(WeightScheme::Uniform),
        "random" => Ok(WeightScheme::Random),
        other => Err(Error::parse(
            e.line,
            format!("weights must be `uniform` or `random`, found `{other}`"),
        )),
    }
}

/// Overrides for the random distributions an experiment draws. Unset
/// fields use the experiment's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistributionSpec {
    pub labels: Option<usize>,
    pub points: Option<usize>,
    pub noise: Option<f64>,
    pub dim: Option<usize>,
    pub weights: Option<WeightScheme>,
    /// A distribution in the tabular text format, used for every instance.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub instances: Option<usize>,
    pub draws: Option<usize>,
    pub distribution: DistributionSpec,
    pub rho_grid: Option<Vec<f64>>,
    pub mu_grid: Option<Vec<f64>>,
    pub eta_grid: Option<Vec<f64>>,
    pub tolerances: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            seed: 0,
            output_dir: None,
            instances: None,
            draws: None,
            distribution: DistributionSpec::default(),
            rho_grid: None,
            mu_grid: None,
            eta_grid: None,
            tolerances: BTreeMap::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_instances(mut self, n: usize) -> Self {
        self.instances = Some(n);
        self
    }

    pub fn with_draws(mut self, n: usize) -> Self {
        self.draws = Some(n);
        self
    }

    pub fn with_tolerance(mut self, key: &str, value: f64) -> Self {
        self.tolerances.insert(key.to_string(), value);
        self
    }

    /// Parses a config; relative `file` paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let sections = parse_sections(text)?;
        let mut cfg = ExperimentConfig::new("");
        let mut id_seen = false;
        for s in &sections {
            match s.name.as_str() {
                "experiment" => {
                    for e in &s.entries {
                        match e.key.as_str() {
                            "id" => {
                                cfg.id = e.value.clone();
                                id_seen = true;
                            }
                            "seed" => cfg.seed = parse_value(e, "an unsigned integer")?,
                            "output_dir" => cfg.output_dir = Some(PathBuf::from(&e.value)),
                            "instances" => cfg.instances = Some(positive(e)?),
                            "draws" => cfg.draws = Some(positive(e)?),
                            _ => return Err(unknown_key(e, s)),
                        }
                    }
                }
                "distribution" => {
                    let d = &mut cfg.distribution;
                    for e in &s.entries {
                        match e.key.as_str() {
                            "labels" => d.labels = Some(parse_value(e, "a label count")?),
                            "points" => d.points = Some(positive(e)?),
                            "noise" => {
                                let v = parse_real(e)?;
                                if !(0.0..=1.0).contains(&v) {
                                    return Err(Error::parse(e.line, "noise must lie in [0, 1]"));
                                }
                                d.noise = Some(v);
                            }
                            "dim" => d.dim = Some(positive(e)?),
                            "weights" => d.weights = Some(parse_weights(e)?),
                            "file" => d.file = Some(base_dir.join(&e.value)),
                            _ => return Err(unknown_key(e, s)),
                        }
                    }
                }
                "grid" => {
                    for e in &s.entries {
                        let list = Some(parse_list(e)?);
                        match e.key.as_str() {
                            "rho" => cfg.rho_grid = list,
                            "mu" => cfg.mu_grid = list,
                            "eta" => cfg.eta_grid = list,
                            _ => return Err(unknown_key(e, s)),
                        }
                    }
                }
                "tolerance" => {
                    for e in &s.entries {
                        let v = parse_real(e)?;
                        if v < 0.0 {
                            return Err(Error::parse(e.line, format!("tolerance `{}` is negative", e.key)));
                        }
                        cfg.tolerances.insert(e.key.clone(), v);
                    }
                }
                other => {
                    return Err(Error::parse(s.line, format!("unknown section [{other}]")));
                }
            }
        }
        if !id_seen {
            return Err(Error::parse(1, "missing `id` in [experiment]"));
        }
        let entry = super::find_experiment(&cfg.id).ok_or_else(|| {
            let line = sections
                .iter()
                .flat_map(|s| &s.entries)
                .find(|e| e.key == "id")
                .map_or(1, |e| e.line);
            Error::parse(line, format!("unknown experiment id `{}` (see `lab list`)", cfg.id))
        })?;
        for s in sections.iter().filter(|s| s.name == "tolerance") {
            for e in &s.entries {
                if !entry.tolerances.iter().any(|(k, _)| *k == e.key) {
                    return Err(Error::parse(
                        e.line,
                        format!("experiment `{}` has no tolerance `{}`", cfg.id, e.key),
                    ));
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn positive(e: &Entry) -> Result<usize> {
    let v: usize = parse_value(e, "a positive integer")?;
    if v == 0 {
        return Err(Error::parse(e.line, format!("`{}` must be positive", e.key)));
    }
    Ok(v)
}

fn unknown_key(e: &Entry, s: &Section) -> Error {
    Error::parse(e.line, format!("unknown key `{}` in [{}]", e.key, s.name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "# demo\n[experiment]\nid = noise_free_identity\nseed = 7\ninstances = 3\n\n[distribution]\npoints = 5\nnoise = 0\nweights = random\n[grid]\nmu = 0.5, 1,2\n[tolerance]\nidentity = 1e-9\n";
        let cfg = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.id, "noise_free_identity");
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.instances, Some(3));
        assert_eq!(cfg.distribution.points, Some(5));
        assert_eq!(cfg.distribution.weights, Some(WeightScheme::Random));
        assert_eq!(cfg.mu_grid, Some(vec![0.5, 1.0, 2.0]));
        assert_eq!(cfg.tolerances["identity"], 1e-9);
    }

    #[test]
    fn errors_point_at_lines() {
        let line_of = |text: &str| match ExperimentConfig::parse(text, Path::new(".")) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("[experiment]\nid = nope\n"), 2);
        assert_eq!(line_of("[experiment]\nid = lambert_w\nseed = x\n"), 3);
        assert_eq!(line_of("id = lambert_w\n"), 1);
        assert_eq!(line_of("[experiment]\nid = lambert_w\n[grid]\nmu =\n"), 4);
        assert_eq!(line_of("[experiment]\nid = lambert_w\n[bogus]\n"), 3);
        assert_eq!(line_of("[experiment]\nid = lambert_w\n[tolerance]\nwhatever = 1\n"), 4);
        assert_eq!(line_of("[experiment]\nid = lambert_w\nid = lambert_w\n"), 3);
        assert_eq!(line_of("[experiment\n"), 1);
        assert_eq!(line_of("[experiment]\nseed = 1\n"), 1);
    }
}
