//! Label spaces, constraint maps, samples, and enumerable distributions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Largest supported label count; admissible sets are stored as `u64` masks.
pub const MAX_LABELS: usize = 64;

/// Tolerance on `Σ weight = 1` for a [`FiniteDistribution`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// The output space `0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelSpace(usize);

impl LabelSpace {
    pub fn new(count: usize) -> Result<Self> {
        if (2..=MAX_LABELS).contains(&count) {
            Ok(Self(count))
        } else {
            Err(Error::InvalidLabelSpace(count))
        }
    }

    pub fn count(self) -> usize {
        self.0
    }

    pub fn check(self, label: usize) -> Result<()> {
        if label < self.0 {
            Ok(())
        } else {
            Err(Error::LabelOutOfRange {
                label,
                count: self.0,
            })
        }
    }
}

/// A set of labels stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet(u64);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub fn full(count: usize) -> Self {
        if count >= 64 {
            Self(u64::MAX)
        } else {
            Self((1u64 << count) - 1)
        }
    }

    pub fn from_labels<I: IntoIterator<Item = usize>>(labels: I) -> Self {
        let mut bits = 0u64;
        for l in labels {
            debug_assert!(l < MAX_LABELS);
            bits |= 1u64 << l;
        }
        Self(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, label: usize) -> bool {
        label < MAX_LABELS && (self.0 >> label) & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn insert(&mut self, label: usize) {
        self.0 |= 1u64 << label;
    }

    pub fn remove(&mut self, label: usize) {
        self.0 &= !(1u64 << label);
    }

    /// Labels of `0..count` not in this set.
    pub fn complement(self, count: usize) -> Self {
        Self(!self.0 & Self::full(count).0)
    }

    pub fn is_subset_of(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_LABELS).filter(move |&l| (bits >> l) & 1 == 1)
    }
}

/// Per-instance admissible label sets `C(x)`, keyed by instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMap {
    labels: LabelSpace,
    sets: Vec<LabelSet>,
}

impl ConstraintMap {
    /// Rejects empty sets and sets reaching outside the label space.
    pub fn new(labels: LabelSpace, sets: Vec<LabelSet>) -> Result<Self> {
        let full = LabelSet::full(labels.count());
        for (i, s) in sets.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::EmptyAdmissibleSet { instance: i });
            }
            if !s.is_subset_of(full) {
                let label = s.iter().find(|&l| l >= labels.count()).unwrap_or(0);
                return Err(Error::LabelOutOfRange {
                    label,
                    count: labels.count(),
                });
            }
        }
        Ok(Self { labels, sets })
    }

    /// The same admissible set for `len` instances.
    pub fn uniform(labels: LabelSpace, len: usize, set: LabelSet) -> Result<Self> {
        Self::new(labels, vec![set; len])
    }

    /// Evaluates a feature rule once per instance at construction time.
    pub fn from_features<'a, I, F>(labels: LabelSpace, instances: I, rule: F) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Instance>,
        F: Fn(&[f64]) -> LabelSet,
    {
        let mut sets = Vec::new();
        for (i, inst) in instances.into_iter().enumerate() {
            if inst.id != i {
                return Err(Error::UnknownInstance {
                    id: inst.id,
                    len: i,
                });
            }
            sets.push(rule(&inst.features));
        }
        Self::new(labels, sets)
    }

    pub fn labels(&self) -> LabelSpace {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn admissible(&self, id: usize) -> Result<LabelSet> {
        self.sets.get(id).copied().ok_or(Error::UnknownInstance {
            id,
            len: self.sets.len(),
        })
    }

    pub fn sets(&self) -> &[LabelSet] {
        &self.sets
    }

    /// `v_C(x, y) = 1{y ∉ C(x)}`.
    pub fn violation_indicator(&self, id: usize, label: usize) -> Result<u8> {
        self.labels.check(label)?;
        Ok(u8::from(!self.admissible(id)?.contains(label)))
    }
}

/// Free-function form of [`ConstraintMap::violation_indicator`].
pub fn violation_indicator(cmap: &ConstraintMap, id: usize, label: usize) -> Result<u8> {
    cmap.violation_indicator(id, label)
}

/// An instance: an identity (indexes constraint maps and score tables) and
/// an optional feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: usize,
    pub features: Vec<f64>,
}

impl Instance {
    pub fn new(id: usize, features: Vec<f64>) -> Self {
        Self { id, features }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub instance: Instance,
    pub label: usize,
}

/// Labeled part `S_L` and unlabeled part `S_U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    labels: LabelSpace,
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: Vec<Instance>,
}

impl Dataset {
    pub fn new(
        labels: LabelSpace,
        labeled: Vec<LabeledSample>,
        unlabeled: Vec<Instance>,
    ) -> Result<Self> {
        for s in &labeled {
            labels.check(s.label)?;
        }
        Ok(Self {
            labels,
            labeled,
            unlabeled,
        })
    }

    pub fn labels(&self) -> LabelSpace {
        self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.labeled.is_empty() && self.unlabeled.is_empty()
    }
}

/// One support point of a [`FiniteDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub instance: Instance,
    pub weight: f64,
    pub oracle: usize,
}

impl Point {
    /// The id is assigned by [`FiniteDistribution::new`].
    pub fn new(features: Vec<f64>, weight: f64, oracle: usize) -> Self {
        Self {
            instance: Instance::new(0, features),
            weight,
            oracle,
        }
    }
}

/// An enumerable joint distribution over instances with a deterministic
/// oracle labeling and a constraint over the same support. Population
/// expectations are exact weighted sums over the points.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    labels: LabelSpace,
    points: Vec<Point>,
    constraint: ConstraintMap,
}

impl FiniteDistribution {
    pub fn new(labels: LabelSpace, mut points: Vec<Point>, constraint: ConstraintMap) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidWeights("distribution has no points".into()));
        }
        if constraint.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: constraint.len(),
            });
        }
        if constraint.labels() != labels {
            return Err(Error::DimensionMismatch {
                expected: labels.count(),
                found: constraint.labels().count(),
            });
        }
        let dim = points[0].instance.features.len();
        for (i, p) in points.iter_mut().enumerate() {
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(Error::InvalidWeights(format!(
                    "point {i} has weight {}",
                    p.weight
                )));
            }
            labels.check(p.oracle)?;
            if p.instance.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.instance.features.len(),
                });
            }
            p.instance.id = i;
        }
        let total = compensated_sum(points.iter().map(|p| p.weight));
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total:.17}, not 1"
            )));
        }
        Ok(Self {
            labels,
            points,
            constraint,
        })
    }

    /// Uniform weights over the given `(features, oracle)` pairs.
    pub fn uniform(
        labels: LabelSpace,
        rows: Vec<(Vec<f64>, usize)>,
        constraint: ConstraintMap,
    ) -> Result<Self> {
        let n = rows.len().max(1) as f64;
        let points = rows
            .into_iter()
            .map(|(f, y)| Point::new(f, 1.0 / n, y))
            .collect();
        Self::new(labels, points, constraint)
    }

    pub fn labels(&self) -> LabelSpace {
        self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.count()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.points[0].instance.features.len()
    }

    pub fn constraint(&self) -> &ConstraintMap {
        &self.constraint
    }

    /// Same points and oracle, different constraint.
    pub fn with_constraint(&self, constraint: ConstraintMap) -> Result<Self> {
        Self::new(self.labels, self.points.clone(), constraint)
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.points.iter().map(|p| &p.instance)
    }

    /// Exact expectation `Σ_x weight(x) · g(point)`.
    pub fn expectation<F: FnMut(&Point) -> f64>(&self, mut g: F) -> f64 {
        compensated_sum(self.points.iter().map(|p| p.weight * g(p)))
    }

    /// `V_ora = P(y_ora(x) ∉ C(x))`.
    pub fn noise_rate(&self) -> f64 {
        self.expectation(|p| {
            let adm = self.constraint.sets[p.instance.id];
            if adm.contains(p.oracle) {
                0.0
            } else {
                1.0
            }
        })
    }

    pub fn is_noise_free(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.weight == 0.0 || self.constraint.sets[p.instance.id].contains(p.oracle))
    }
}

/// `V_ora` of a distribution.
pub fn oracle_noise_rate(dist: &FiniteDistribution) -> f64 {
    dist.noise_rate()
}

/// Draws `m_labeled` labeled and `m_unlabeled` unlabeled samples i.i.d. from
/// the distribution. Both parts share the marginal `P_X`; the unlabeled part
/// drops oracle labels. Instance ids refer to the distribution's points.
pub fn sample_dataset(
    dist: &FiniteDistribution,
    m_labeled: usize,
    m_unlabeled: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = WeightedIndex::new(dist.points.iter().map(|p| p.weight))
        .expect("distribution weights are validated at construction");
    let labeled = (0..m_labeled)
        .map(|_| {
            let p = &dist.points[index.sample(&mut rng)];
            LabeledSample {
                instance: p.instance.clone(),
                label: p.oracle,
            }
        })
        .collect();
    let unlabeled = (0..m_unlabeled)
        .map(|_| dist.points[index.sample(&mut rng)].instance.clone())
        .collect();
    Dataset {
        labels: dist.labels,
        labeled,
        unlabeled,
    }
}

/// Indices of `m` i.i.d. draws from the distribution's weights.
pub fn sample_indices(dist: &FiniteDistribution, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let index = WeightedIndex::new(dist.points.iter().map(|p| p.weight))
        .expect("distribution weights are validated at construction");
    (0..m).map(|_| index.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(weights: (f64, f64), sets: [LabelSet; 2]) -> FiniteDistribution {
        let labels = LabelSpace::new(3).unwrap();
        let cmap = ConstraintMap::new(labels, sets.to_vec()).unwrap();
        FiniteDistribution::new(
            labels,
            vec![
                Point::new(vec![0.0], weights.0, 2),
                Point::new(vec![1.0], weights.1, 0),
            ],
            cmap,
        )
        .unwrap()
    }

    #[test]
    fn label_space_bounds() {
        assert!(LabelSpace::new(1).is_err());
        assert!(LabelSpace::new(65).is_err());
        assert_eq!(LabelSpace::new(2).unwrap().count(), 2);
    }

    #[test]
    fn violation_indicator_examples() {
        let labels = LabelSpace::new(3).unwrap();
        let cmap = ConstraintMap::new(
            labels,
            vec![
                LabelSet::full(3),
                LabelSet::from_labels([0]),
                LabelSet::from_labels([0, 1]),
            ],
        )
        .unwrap();
        assert_eq!(violation_indicator(&cmap, 0, 1).unwrap(), 0);
        assert_eq!(violation_indicator(&cmap, 1, 2).unwrap(), 1);
        assert_eq!(violation_indicator(&cmap, 2, 1).unwrap(), 0);
        assert!(matches!(
            violation_indicator(&cmap, 3, 0),
            Err(Error::UnknownInstance { id: 3, .. })
        ));
        assert!(cmap.violation_indicator(0, 3).is_err());
    }

    #[test]
    fn empty_or_oversized_sets_are_rejected() {
        let labels = LabelSpace::new(3).unwrap();
        assert!(matches!(
            ConstraintMap::new(labels, vec![LabelSet::full(3), LabelSet::EMPTY]),
            Err(Error::EmptyAdmissibleSet { instance: 1 })
        ));
        assert!(matches!(
            ConstraintMap::new(labels, vec![LabelSet::from_labels([0, 5])]),
            Err(Error::LabelOutOfRange { label: 5, count: 3 })
        ));
    }

    #[test]
    fn noise_rate_examples() {
        let full = LabelSet::full(3);
        assert_eq!(oracle_noise_rate(&two_point((0.5, 0.5), [full, full])), 0.0);
        let excl = LabelSet::from_labels([0, 1]);
        assert_eq!(oracle_noise_rate(&two_point((0.5, 0.5), [excl, full])), 0.5);
        // weighted sum over the two points: 0.2·1 + 0.8·0
        let d = two_point((0.2, 0.8), [excl, full]);
        assert_eq!(oracle_noise_rate(&d), 0.2);
        assert!(!d.is_noise_free());
    }

    #[test]
    fn weights_must_sum_to_one() {
        let labels = LabelSpace::new(2).unwrap();
        let cmap = ConstraintMap::uniform(labels, 2, LabelSet::full(2)).unwrap();
        let bad = FiniteDistribution::new(
            labels,
            vec![Point::new(vec![], 0.5, 0), Point::new(vec![], 0.6, 1)],
            cmap.clone(),
        );
        assert!(matches!(bad, Err(Error::InvalidWeights(_))));
        let neg = FiniteDistribution::new(
            labels,
            vec![Point::new(vec![], 1.5, 0), Point::new(vec![], -0.5, 1)],
            cmap,
        );
        assert!(neg.is_err());
    }

    #[test]
    fn sampling_examples() {
        let full = LabelSet::full(3);
        let d = two_point((0.5, 0.5), [full, full]);
        let empty = sample_dataset(&d, 0, 0, 1);
        assert!(empty.is_empty());

        let labels = LabelSpace::new(3).unwrap();
        let single = FiniteDistribution::new(
            labels,
            vec![Point::new(vec![0.25, -1.0], 1.0, 1)],
            ConstraintMap::uniform(labels, 1, full).unwrap(),
        )
        .unwrap();
        let ds = sample_dataset(&single, 5, 0, 9);
        assert_eq!(ds.labeled.len(), 5);
        assert!(ds
            .labeled
            .iter()
            .all(|s| s.label == 1 && s.instance.features == vec![0.25, -1.0]));

        let big = sample_dataset(&d, 0, 100_000, 2024);
        let first = big.unlabeled.iter().filter(|x| x.id == 0).count() as f64 / 1e5;
        assert!((first - 0.5).abs() < 0.01, "frequency {first}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let full = LabelSet::full(3);
        let d = two_point((0.3, 0.7), [full, full]);
        assert_eq!(sample_dataset(&d, 50, 70, 5), sample_dataset(&d, 50, 70, 5));
        assert_ne!(sample_dataset(&d, 50, 70, 5), sample_dataset(&d, 50, 70, 6));
    }
}
