//! Domain types shared by every estimator: feature vectors, protected-attribute
//! groups, unlabeled collections and labeled control sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Value of the binary protected attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    Zero,
    One,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Zero, Group::One];

    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Zero => Group::One,
            Group::One => Group::Zero,
        }
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.index() as u8
    }
}

impl TryFrom<u8> for Group {
    type Error = AuditError;

    fn try_from(v: u8) -> Result<Group> {
        match v {
            0 => Ok(Group::Zero),
            1 => Ok(Group::One),
            other => Err(AuditError::InvalidLabel(other.to_string())),
        }
    }
}

/// Dense embedding of one element. The Euclidean norm is cached at
/// construction since every cosine evaluation needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    norm: f64,
}

impl FeatureVector {
    /// Rejects empty vectors and non-finite coordinates. Zero vectors are
    /// representable; the loader and the cosine metric reject them.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(AuditError::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(AuditError::NonFinite { index });
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(FeatureVector { values, norm })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<FeatureVector> {
        FeatureVector::new(self.values.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = AuditError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

/// Feature vector with a known protected attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: FeatureVector,
    pub z: Group,
}

impl LabeledExample {
    pub fn new(x: FeatureVector, z: Group) -> Self {
        LabeledExample { x, z }
    }
}

pub(crate) fn check_uniform_dim<'a, I>(vectors: I, mut dim: Option<usize>) -> Result<Option<usize>>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    for v in vectors {
        match dim {
            None => dim = Some(v.dim()),
            Some(d) if d != v.dim() => {
                return Err(AuditError::DimensionMismatch {
                    expected: d,
                    found: v.dim(),
                })
            }
            Some(_) => {}
        }
    }
    Ok(dim)
}

/// The collection under audit. Labels, when present, are only used by
/// evaluation oracles and by the proportional sampler.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Collection {
    elements: Vec<FeatureVector>,
    hidden_labels: Option<Vec<Group>>,
}

impl Collection {
    pub fn new(elements: Vec<FeatureVector>) -> Result<Self> {
        check_uniform_dim(&elements, None)?;
        Ok(Collection {
            elements,
            hidden_labels: None,
        })
    }

    pub fn with_labels(elements: Vec<FeatureVector>, labels: Vec<Group>) -> Result<Self> {
        check_uniform_dim(&elements, None)?;
        if labels.len() != elements.len() {
            return Err(AuditError::InvalidParameter(format!(
                "{} labels for {} elements",
                labels.len(),
                elements.len()
            )));
        }
        Ok(Collection {
            elements,
            hidden_labels: Some(labels),
        })
    }

    pub fn from_labeled(examples: Vec<LabeledExample>) -> Result<Self> {
        let (elements, labels) = examples.into_iter().map(|e| (e.x, e.z)).unzip();
        Collection::with_labels(elements, labels)
    }

    pub fn elements(&self) -> &[FeatureVector] {
        &self.elements
    }

    pub fn hidden_labels(&self) -> Option<&[Group]> {
        self.hidden_labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.elements.first().map(FeatureVector::dim)
    }

    /// Pairs each element with its hidden label, if labels are present.
    pub fn labeled_examples(&self) -> Option<Vec<LabeledExample>> {
        let labels = self.hidden_labels.as_ref()?;
        Some(
            self.elements
                .iter()
                .zip(labels)
                .map(|(x, &z)| LabeledExample::new(x.clone(), z))
                .collect(),
        )
    }

    /// Drops the elements at `removed` (indices into `self`), then appends
    /// `added`. Hidden labels are discarded, since the added vectors carry none.
    pub fn with_update(&self, added: &[FeatureVector], removed: &[usize]) -> Result<Collection> {
        let removed = validate_removals(removed, self.len())?;
        let mut elements: Vec<FeatureVector> = self
            .elements
            .iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, x)| x.clone())
            .collect();
        elements.extend(added.iter().cloned());
        Collection::new(elements)
    }
}

pub(crate) fn validate_removals(removed: &[usize], len: usize) -> Result<BTreeSet<usize>> {
    let mut set = BTreeSet::new();
    for &index in removed {
        if index >= len {
            return Err(AuditError::IndexOutOfRange { index, len });
        }
        if !set.insert(index) {
            return Err(AuditError::InvalidParameter(format!(
                "index {index} removed twice"
            )));
        }
    }
    Ok(set)
}

/// Normalization constants of a control set: the mean cross-group
/// similarity `l` and the mean within-group similarities `u0`, `u1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub l: f64,
    pub u0: f64,
    pub u1: f64,
}

impl NormStats {
    pub fn u(&self, group: Group) -> f64 {
        match group {
            Group::Zero => self.u0,
            Group::One => self.u1,
        }
    }
}

/// Labeled reference set partitioned by protected attribute.
///
/// Either partition may be empty (a proportional sample of a skewed
/// collection can miss a group entirely); estimators that need both
/// partitions report that as an error.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlSet {
    t0: Vec<FeatureVector>,
    t1: Vec<FeatureVector>,
    stats: Option<NormStats>,
}

impl ControlSet {
    pub fn new(t0: Vec<FeatureVector>, t1: Vec<FeatureVector>) -> Result<Self> {
        check_uniform_dim(t0.iter().chain(&t1), None)?;
        Ok(ControlSet {
            t0,
            t1,
            stats: None,
        })
    }

    pub fn from_labeled(examples: &[LabeledExample]) -> Result<Self> {
        let mut t0 = Vec::new();
        let mut t1 = Vec::new();
        for e in examples {
            match e.z {
                Group::Zero => t0.push(e.x.clone()),
                Group::One => t1.push(e.x.clone()),
            }
        }
        ControlSet::new(t0, t1)
    }

    pub fn group(&self, group: Group) -> &[FeatureVector] {
        match group {
            Group::Zero => &self.t0,
            Group::One => &self.t1,
        }
    }

    pub fn t0(&self) -> &[FeatureVector] {
        &self.t0
    }

    pub fn t1(&self) -> &[FeatureVector] {
        &self.t1
    }

    pub fn len(&self) -> usize {
        self.t0.len() + self.t1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        self.t0.first().or(self.t1.first()).map(FeatureVector::dim)
    }

    pub fn stats(&self) -> Option<NormStats> {
        self.stats
    }

    /// Attaches precomputed normalization statistics.
    pub fn with_stats(mut self, stats: NormStats) -> Self {
        self.stats = Some(stats);
        self
    }

    /// The same vectors with the group partitions exchanged.
    pub fn swapped(&self) -> ControlSet {
        ControlSet {
            t0: self.t1.clone(),
            t1: self.t0.clone(),
            stats: self.stats.map(|s| NormStats {
                l: s.l,
                u0: s.u1,
                u1: s.u0,
            }),
        }
    }

    pub fn to_labeled(&self) -> Vec<LabeledExample> {
        self.t0
            .iter()
            .map(|x| LabeledExample::new(x.clone(), Group::Zero))
            .chain(self.t1.iter().map(|x| LabeledExample::new(x.clone(), Group::One)))
            .collect()
    }
}
