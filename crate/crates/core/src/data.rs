//! Domain types shared by every stage: the binary risk-of-bias matrix, the
//! three-class association labels, datasets, and probability vectors on the
//! 3-class simplex.
//!
//! Label encoding: `0` = negative association, `1` = no association,
//! `2` = positive association. Bias encoding: `0` = low risk, `1` = high risk.
//!
//! The single-ignorability assumption is stated conditionally on observed
//! background covariates; no such covariates are available from extraction
//! output, so none are modelled here.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{McmaError, Result};
use crate::synthgen::SemiSynthParams;

pub const N_CLASSES: usize = 3;

/// The six Cochrane risk-of-bias domains, in the order extraction tools report them.
pub const COCHRANE_DOMAINS: [&str; 6] = [
    "rob_random_seq",
    "rob_allocation_concealment",
    "rob_blinding_participants",
    "rob_blinding_outcome",
    "rob_incomplete_data",
    "rob_selective_reporting",
];

pub fn default_domain_names(d: usize) -> Vec<String> {
    if d == COCHRANE_DOMAINS.len() {
        COCHRANE_DOMAINS.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=d).map(|j| format!("rob_{j:02}")).collect()
    }
}

/// N x D matrix of risk-of-bias indicators, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBias", into = "RawBias")]
pub struct BiasMatrix {
    n: usize,
    d: usize,
    values: Vec<u8>,
    domain_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawBias {
    domain_names: Vec<String>,
    rows: Vec<Vec<u8>>,
}

impl TryFrom<RawBias> for BiasMatrix {
    type Error = McmaError;
    fn try_from(raw: RawBias) -> Result<Self> {
        BiasMatrix::new(raw.rows, raw.domain_names)
    }
}

impl From<BiasMatrix> for RawBias {
    fn from(b: BiasMatrix) -> Self {
        RawBias {
            rows: b.rows().map(<[u8]>::to_vec).collect(),
            domain_names: b.domain_names,
        }
    }
}

impl BiasMatrix {
    pub fn new(rows: Vec<Vec<u8>>, domain_names: Vec<String>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(McmaError::DimensionMismatch(
                "bias matrix has no rows".into(),
            ));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(McmaError::DimensionMismatch(
                "bias matrix has no columns".into(),
            ));
        }
        if domain_names.len() != d {
            return Err(McmaError::DimensionMismatch(format!(
                "{} domain names for {d} columns",
                domain_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &domain_names {
            if !seen.insert(name.as_str()) {
                return Err(McmaError::DomainError(format!(
                    "duplicate domain name {name:?}"
                )));
            }
        }
        let mut values = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(McmaError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|&v| v > 1) {
                return Err(McmaError::DomainError(format!(
                    "bias entry ({i}, {j}) = {} is not 0 or 1",
                    row[j]
                )));
            }
            values.extend_from_slice(row);
        }
        Ok(BiasMatrix {
            n,
            d,
            values,
            domain_names,
        })
    }

    pub fn with_default_names(rows: Vec<Vec<u8>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::new(rows, default_domain_names(d))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.values[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.values.chunks_exact(self.d)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.d];
        for row in self.rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += f64::from(v);
            }
        }
        sums.iter().map(|s| s / self.n as f64).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.d, |i, j| f64::from(self.get(i, j)))
    }

    pub fn select_rows(&self, idx: &[usize]) -> BiasMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        BiasMatrix {
            n: idx.len(),
            d: self.d,
            values,
            domain_names: self.domain_names.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> BiasMatrix {
        let mut values = Vec::with_capacity(self.n * cols.len());
        for row in self.rows() {
            values.extend(cols.iter().map(|&j| row[j]));
        }
        BiasMatrix {
            n: self.n,
            d: cols.len(),
            values,
            domain_names: cols.iter().map(|&j| self.domain_names[j].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Association {
    Negative = 0,
    None = 1,
    Positive = 2,
}

impl Association {
    pub fn from_index(v: u8) -> Option<Self> {
        match v {
            0 => Some(Association::Negative),
            1 => Some(Association::None),
            2 => Some(Association::Positive),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Association::Negative => "negative",
            Association::None => "none",
            Association::Positive => "positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct AssociationLabels(Vec<u8>);

impl TryFrom<Vec<u8>> for AssociationLabels {
    type Error = McmaError;
    fn try_from(v: Vec<u8>) -> Result<Self> {
        AssociationLabels::new(v)
    }
}

impl From<AssociationLabels> for Vec<u8> {
    fn from(l: AssociationLabels) -> Self {
        l.0
    }
}

impl AssociationLabels {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| v as usize >= N_CLASSES) {
            return Err(McmaError::DomainError(format!(
                "label {i} = {} is not in {{0,1,2}}",
                values[i]
            )));
        }
        Ok(AssociationLabels(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for &y in &self.0 {
            counts[y as usize] += 1;
        }
        counts
    }

    pub fn distinct(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn select(&self, idx: &[usize]) -> AssociationLabels {
        AssociationLabels(idx.iter().map(|&i| self.0[i]).collect())
    }
}

/// A probability vector over the three association classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Simplex3([f64; N_CLASSES]);

pub const SIMPLEX_TOL: f64 = 1e-9;

impl TryFrom<[f64; 3]> for Simplex3 {
    type Error = McmaError;
    fn try_from(p: [f64; 3]) -> Result<Self> {
        Simplex3::new(p)
    }
}

impl From<Simplex3> for [f64; 3] {
    fn from(s: Simplex3) -> Self {
        s.0
    }
}

impl Simplex3 {
    pub fn new(p: [f64; N_CLASSES]) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(McmaError::DomainError(format!(
                "{p:?} is not a probability vector"
            )));
        }
        Ok(Simplex3(p))
    }

    /// Normalises non-negative weights. Panics if they are all zero or not finite;
    /// callers only pass strictly positive totals.
    pub fn from_weights(w: [f64; N_CLASSES]) -> Self {
        let total: f64 = w.iter().sum();
        assert!(
            total > 0.0 && total.is_finite(),
            "cannot normalise weights {w:?}"
        );
        Simplex3(w.map(|x| (x / total).clamp(0.0, 1.0)))
    }

    pub fn uniform() -> Self {
        Simplex3([1.0 / 3.0; 3])
    }

    pub fn one_hot(class: usize) -> Self {
        let mut p = [0.0; N_CLASSES];
        p[class] = 1.0;
        Simplex3(p)
    }

    /// Arithmetic mean of a non-empty collection of simplex points.
    pub fn mean<'a>(points: impl IntoIterator<Item = &'a Simplex3>) -> Option<Self> {
        let mut acc = [0.0; N_CLASSES];
        let mut n = 0usize;
        for p in points {
            for c in 0..N_CLASSES {
                acc[c] += p.0[c];
            }
            n += 1;
        }
        (n > 0).then(|| Simplex3::from_weights(acc.map(|x| x / n as f64)))
    }

    pub fn probs(&self) -> [f64; N_CLASSES] {
        self.0
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Index of the largest component; ties go to the lowest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for c in 1..N_CLASSES {
            if self.0[c] > self.0[best] {
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    pub d: usize,
    /// Strength of the hidden confounder's direct effect on the third class.
    pub w_u: f64,
    pub seed: u64,
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(McmaError::InvalidArgument(
                "n and d must be at least 1".into(),
            ));
        }
        if !(self.w_u >= 0.0 && self.w_u.is_finite()) {
            return Err(McmaError::InvalidArgument(format!(
                "w_u = {} must be >= 0",
                self.w_u
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Synthetic(SyntheticParams),
    SemiSynthetic(SemiSynthParams),
    Ingested { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub bias: BiasMatrix,
    pub labels: AssociationLabels,
    pub study_ids: Vec<String>,
    pub provenance: Provenance,
}

pub fn default_study_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("rct_{i:04}")).collect()
}

impl Dataset {
    pub fn new(
        bias: BiasMatrix,
        labels: AssociationLabels,
        study_ids: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if bias.n() != labels.len() {
            return Err(McmaError::DimensionMismatch(format!(
                "{} bias rows but {} labels",
                bias.n(),
                labels.len()
            )));
        }
        if study_ids.len() != labels.len() {
            return Err(McmaError::DimensionMismatch(format!(
                "{} study ids for {} rows",
                study_ids.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            bias,
            labels,
            study_ids,
            provenance,
        })
    }

    pub fn n(&self) -> usize {
        self.bias.n()
    }

    pub fn d(&self) -> usize {
        self.bias.d()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            bias: self.bias.select_rows(idx),
            labels: self.labels.select(idx),
            study_ids: idx.iter().map(|&i| self.study_ids[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Builds a [`Dataset`] from unchecked integers, enforcing every type invariant.
pub fn validate_dataset(raw_bias: &[Vec<i64>], raw_labels: &[i64]) -> Result<Dataset> {
    if raw_bias.len() != raw_labels.len() {
        return Err(McmaError::DimensionMismatch(format!(
            "{} bias rows but {} labels",
            raw_bias.len(),
            raw_labels.len()
        )));
    }
    let mut rows = Vec::with_capacity(raw_bias.len());
    for (i, row) in raw_bias.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (j, &v) in row.iter().enumerate() {
            match v {
                0 | 1 => out.push(v as u8),
                _ => {
                    return Err(McmaError::DomainError(format!(
                        "bias entry ({i}, {j}) = {v} is not 0 or 1"
                    )))
                }
            }
        }
        rows.push(out);
    }
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| match y {
            0..=2 => Ok(y as u8),
            _ => Err(McmaError::DomainError(format!(
                "label {i} = {y} is not in {{0,1,2}}"
            ))),
        })
        .collect::<Result<Vec<u8>>>()?;
    let bias = BiasMatrix::with_default_names(rows)?;
    let n = bias.n();
    Dataset::new(
        bias,
        AssociationLabels::new(labels)?,
        default_study_ids(n),
        Provenance::Raw,
    )
}
