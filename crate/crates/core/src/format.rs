//! Plain-text tabular format for distributions, datasets and score tables.
//!
//! Every file starts with a header line naming the kind, followed by
//! `key value` lines and then one whitespace-separated row per record.
//! Reals are written with 17 significant digits so `parse` reproduces the
//! exact bits. Blank lines and lines starting with `#` are ignored.
//!
//! ```text
//! conlab-distribution v1
//! labels 3
//! dim 2
//! points 2
//! # weight oracle admissible_bitmask features...
//! 5.0000000000000000e-1 0 5 1.0000000000000000e-1 -2.0000000000000000e-1
//! 5.0000000000000000e-1 2 6 0.0000000000000000e0 1.0000000000000000e0
//! ```
//!
//! Datasets use `conlab-dataset v1` with `labels`, `dim`, then a
//! `labeled n` block of `label id features...` rows and an `unlabeled n`
//! block of `id features...` rows. Score tables use `conlab-scores v1` with
//! `labels`, `rows n` and one row of `c` scores per instance.

use std::fmt::Write as _;
use std::path::Path;

use crate::constraint::{
    ConstraintMap, Dataset, FiniteDistribution, Instance, LabelSet, LabelSpace, LabeledSample,
    Point,
};
use crate::error::{Error, Result};
use crate::scoring::ScoreTable;

pub const DISTRIBUTION_HEADER: &str = "conlab-distribution v1";
pub const DATASET_HEADER: &str = "conlab-dataset v1";
pub const SCORES_HEADER: &str = "conlab-scores v1";

fn real(out: &mut String, v: f64) {
    let _ = write!(out, " {v:.16e}");
}

pub fn write_distribution(dist: &FiniteDistribution) -> String {
    let mut out = format!(
        "{DISTRIBUTION_HEADER}\nlabels {}\ndim {}\npoints {}\n# weight oracle admissible_bitmask features...\n",
        dist.num_labels(),
        dist.feature_dim(),
        dist.len()
    );
    for (p, set) in dist.points().iter().zip(dist.constraint().sets()) {
        let _ = write!(out, "{:.16e} {} {}", p.weight, p.oracle, set.bits());
        for &v in &p.instance.features {
            real(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(data: &Dataset) -> String {
    let dim = data
        .labeled
        .first()
        .map(|s| s.instance.features.len())
        .or_else(|| data.unlabeled.first().map(|x| x.features.len()))
        .unwrap_or(0);
    let mut out = format!(
        "{DATASET_HEADER}\nlabels {}\ndim {dim}\nlabeled {}\n",
        data.labels().count(),
        data.labeled.len()
    );
    for s in &data.labeled {
        let _ = write!(out, "{} {}", s.label, s.instance.id);
        for &v in &s.instance.features {
            real(&mut out, v);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "unlabeled {}", data.unlabeled.len());
    for x in &data.unlabeled {
        let _ = write!(out, "{}", x.id);
        for &v in &x.features {
            real(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn write_scores(table: &ScoreTable) -> String {
    let labels = table.rows().first().map_or(0, Vec::len);
    let mut out = format!("{SCORES_HEADER}\nlabels {labels}\nrows {}\n", table.len());
    for row in table.rows() {
        let mut line = String::new();
        for &v in row {
            real(&mut line, v);
        }
        out.push_str(line.trim_start());
        out.push('\n');
    }
    out
}

/// Content lines with their 1-based line numbers.
struct Lines<'a> {
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: Box::new(
                text.lines()
                    .enumerate()
                    .map(|(i, l)| (i + 1, l.trim()))
                    .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
            ),
            last: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n;
                Ok((n, l))
            }
            None => Err(Error::parse(self.last + 1, format!("unexpected end of input, expected {what}"))),
        }
    }

    fn header(&mut self, expected: &str) -> Result<()> {
        let (n, l) = self.next("header")?;
        if l != expected {
            return Err(Error::parse(n, format!("expected header `{expected}`, found `{l}`")));
        }
        Ok(())
    }

    fn key(&mut self, key: &str) -> Result<usize> {
        let (n, l) = self.next(key)?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::parse(n, format!("expected `{key} <count>`, found `{l}`")));
        }
        let value = parts
            .next()
            .ok_or_else(|| Error::parse(n, format!("missing value for `{key}`")))?;
        if parts.next().is_some() {
            return Err(Error::parse(n, format!("trailing tokens after `{key}`")));
        }
        value
            .parse()
            .map_err(|_| Error::parse(n, format!("`{key}` needs a nonnegative integer, found `{value}`")))
    }

    fn finish(&mut self) -> Result<()> {
        match self.inner.next() {
            Some((n, _)) => Err(Error::parse(n, "unexpected extra row")),
            None => Ok(()),
        }
    }
}

fn fields(n: usize, line: &str, expected: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != expected {
        return Err(Error::parse(n, format!("expected {expected} fields, found {}", f.len())));
    }
    Ok(f)
}

fn parse_real(n: usize, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::parse(n, format!("`{s}` is not a real number")))
}

fn parse_int<T: std::str::FromStr>(n: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(n, format!("`{s}` is not a valid {what}")))
}

fn parse_reals(n: usize, tokens: &[&str]) -> Result<Vec<f64>> {
    tokens.iter().map(|t| parse_real(n, t)).collect()
}

fn with_line<T>(n: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => Error::parse(n, other.to_string()),
    })
}

pub fn read_distribution(text: &str) -> Result<FiniteDistribution> {
    let mut lines = Lines::new(text);
    lines.header(DISTRIBUTION_HEADER)?;
    let c = lines.key("labels")?;
    let labels = with_line(lines.last, LabelSpace::new(c))?;
    let dim = lines.key("dim")?;
    let count = lines.key("points")?;
    let mut points = Vec::with_capacity(count);
    let mut sets = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = lines.next("point row")?;
        let f = fields(n, l, 3 + dim)?;
        let weight = parse_real(n, f[0])?;
        let oracle: usize = parse_int(n, f[1], "label")?;
        with_line(n, labels.check(oracle))?;
        let bits: u64 = parse_int(n, f[2], "bitmask")?;
        let set = LabelSet::from_bits(bits);
        if set.is_empty() {
            return Err(Error::parse(n, "empty admissible set"));
        }
        if !set.is_subset_of(LabelSet::full(c)) {
            return Err(Error::parse(n, format!("bitmask {bits} names labels outside 0..{c}")));
        }
        points.push(Point::new(parse_reals(n, &f[3..])?, weight, oracle));
        sets.push(set);
    }
    lines.finish()?;
    let cmap = ConstraintMap::new(labels, sets)?;
    with_line(lines.last, FiniteDistribution::new(labels, points, cmap))
}

pub fn read_dataset(text: &str) -> Result<Dataset> {
    let mut lines = Lines::new(text);
    lines.header(DATASET_HEADER)?;
    let c = lines.key("labels")?;
    let labels = with_line(lines.last, LabelSpace::new(c))?;
    let dim = lines.key("dim")?;
    let m_l = lines.key("labeled")?;
    let mut labeled = Vec::with_capacity(m_l);
    for _ in 0..m_l {
        let (n, l) = lines.next("labeled row")?;
        let f = fields(n, l, 2 + dim)?;
        let label: usize = parse_int(n, f[0], "label")?;
        with_line(n, labels.check(label))?;
        let id = parse_int(n, f[1], "instance id")?;
        labeled.push(LabeledSample {
            instance: Instance::new(id, parse_reals(n, &f[2..])?),
            label,
        });
    }
    let m_u = lines.key("unlabeled")?;
    let mut unlabeled = Vec::with_capacity(m_u);
    for _ in 0..m_u {
        let (n, l) = lines.next("unlabeled row")?;
        let f = fields(n, l, 1 + dim)?;
        let id = parse_int(n, f[0], "instance id")?;
        unlabeled.push(Instance::new(id, parse_reals(n, &f[1..])?));
    }
    lines.finish()?;
    Dataset::new(labels, labeled, unlabeled)
}

pub fn read_scores(text: &str) -> Result<ScoreTable> {
    let mut lines = Lines::new(text);
    lines.header(SCORES_HEADER)?;
    let c = lines.key("labels")?;
    with_line(lines.last, LabelSpace::new(c))?;
    let count = lines.key("rows")?;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = lines.next("score row")?;
        let f = fields(n, l, c)?;
        let row = parse_reals(n, &f)?;
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(n, format!("non-finite score {v}")));
        }
        rows.push(row);
    }
    lines.finish()?;
    ScoreTable::new(c, rows)
}

pub fn load_distribution(path: &Path) -> Result<FiniteDistribution> {
    read_distribution(&std::fs::read_to_string(path)?)
}

pub fn save_distribution(path: &Path, dist: &FiniteDistribution) -> Result<()> {
    Ok(std::fs::write(path, write_distribution(dist))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::sample_dataset;
    use crate::synth::{make_finite_with, FiniteSpec, WeightScheme};

    fn random_dist() -> FiniteDistribution {
        let mut spec = FiniteSpec::new(5, 17, 0.2, 11);
        spec.weights = WeightScheme::Random;
        make_finite_with(&spec).unwrap().dist
    }

    #[test]
    fn distribution_round_trip_is_bit_exact() {
        let d = random_dist();
        let text = write_distribution(&d);
        let back = read_distribution(&text).unwrap();
        assert_eq!(d, back);
        for (a, b) in d.points().iter().zip(back.points()) {
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
        assert_eq!(write_distribution(&back), text);
    }

    #[test]
    fn dataset_and_scores_round_trip() {
        let d = random_dist();
        let ds = sample_dataset(&d, 6, 4, 3);
        assert_eq!(read_dataset(&write_dataset(&ds)).unwrap(), ds);

        let t = ScoreTable::new(3, vec![vec![0.1, -1e-300, 7.25], vec![1.0 / 3.0, 2.0, -0.0]]).unwrap();
        assert_eq!(read_scores(&write_scores(&t)).unwrap(), t);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "conlab-distribution v1\nlabels 3\ndim 1\npoints 2\n1.0 0 1 0.5\n0.0 1 0 0.5\n";
        match read_distribution(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        let bad = "conlab-distribution v1\nlabels 3\ndim 1\npoints 1\n# c\n1.0 0 1 zz\n";
        match read_distribution(bad) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("zz"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_scores("nope"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            read_distribution("conlab-distribution v1\nlabels 3\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
