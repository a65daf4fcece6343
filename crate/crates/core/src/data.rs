//! Bags, datasets, the MIL-CSV text format, feature scaling and fold splitting.
//!
//! A MIL-CSV document holds one instance per line:
//!
//! ```text
//! bag_id,bag_label,instance_label,f1,f2,...,fd
//! ```
//!
//! Labels are `+1`, `-1` or `?`. Lines starting with `#` are comments and an
//! optional header line starting with `bag_id,` is skipped. Rows sharing a
//! `bag_id` are grouped into one bag in first-appearance order.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ParseErrorKind, PmiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
    Unknown,
}

impl Label {
    pub fn token(self) -> &'static str {
        match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
            Label::Unknown => "?",
        }
    }

    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Label {
    type Err = ParseErrorKind;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "+1" => Ok(Label::Positive),
            "-1" => Ok(Label::Negative),
            "?" => Ok(Label::Unknown),
            other => Err(ParseErrorKind::UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Instance {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }

    pub fn unlabeled(features: Vec<f64>) -> Self {
        Self::new(features, Label::Unknown)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub id: String,
    pub label: Label,
    pub instances: Vec<Instance>,
}

impl Bag {
    pub fn new(id: impl Into<String>, label: Label, instances: Vec<Instance>) -> Self {
        Self {
            id: id.into(),
            label,
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// An ordered collection of non-empty bags sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    bags: Vec<Bag>,
    dimension: usize,
}

impl Dataset {
    /// Validates that every bag is non-empty and every instance has the same
    /// finite feature vector length.
    pub fn new(bags: Vec<Bag>) -> Result<Self> {
        let first = bags
            .iter()
            .flat_map(|b| b.instances.first())
            .next()
            .ok_or(PmiError::EmptyDataset)?;
        let dimension = first.features.len();
        if dimension == 0 {
            return Err(PmiError::InvalidConfig(
                "instances must have at least one feature".into(),
            ));
        }
        for bag in &bags {
            if bag.instances.is_empty() {
                return Err(PmiError::InvalidConfig(format!(
                    "bag `{}` has no instances",
                    bag.id
                )));
            }
            for inst in &bag.instances {
                if inst.features.len() != dimension {
                    return Err(PmiError::DimensionMismatch {
                        expected: dimension,
                        found: inst.features.len(),
                    });
                }
                if inst.features.iter().any(|v| !v.is_finite()) {
                    return Err(PmiError::InvalidConfig(format!(
                        "bag `{}` contains a non-finite feature",
                        bag.id
                    )));
                }
            }
        }
        Ok(Self { bags, dimension })
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn bag(&self, i: usize) -> &Bag {
        &self.bags[i]
    }

    pub fn into_bags(self) -> Vec<Bag> {
        self.bags
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of bags, N.
    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Total number of instances, n.
    pub fn total_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    pub fn bag_sizes(&self) -> Vec<usize> {
        self.bags.iter().map(Bag::len).collect()
    }

    /// Start offset of every bag in the flat instance order, plus a final
    /// entry equal to `total_instances()`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.bags.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for bag in &self.bags {
            acc += bag.len();
            offsets.push(acc);
        }
        offsets
    }

    /// Instances in flat order: bag order, then instance order.
    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.bags.iter().flat_map(|b| b.instances.iter())
    }

    /// Bags at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.bags[i].clone()).collect())
    }

    /// Bags whose label is `+1`.
    pub fn positive_bags(&self) -> Result<Dataset> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.bags[i].label == Label::Positive)
            .collect();
        self.subset(&idx)
    }
}

/// Parses a MIL-CSV document.
pub fn parse_mil_csv(text: &str) -> Result<Dataset> {
    let mut bags: Vec<Bag> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut dimension: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |kind| PmiError::Parse {
            line: line_no,
            kind,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("bag_id,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(err(ParseErrorKind::MissingFields));
        }
        let d = fields.len() - 3;
        match dimension {
            None => dimension = Some(d),
            Some(expected) if expected != d => {
                return Err(err(ParseErrorKind::RaggedRow { expected, found: d }))
            }
            _ => {}
        }
        let bag_label: Label = fields[1].parse().map_err(err)?;
        let inst_label: Label = fields[2].parse().map_err(err)?;
        let mut features = Vec::with_capacity(d);
        for tok in &fields[3..] {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(ParseErrorKind::BadNumber(tok.to_string())))?;
            if !v.is_finite() {
                return Err(err(ParseErrorKind::NonFinite(tok.to_string())));
            }
            features.push(v);
        }
        let id = fields[0];
        let slot = match index.get(id) {
            Some(&slot) => {
                if bags[slot].label != bag_label {
                    return Err(err(ParseErrorKind::InconsistentBagLabel {
                        bag: id.to_string(),
                        previous: bags[slot].label.to_string(),
                    }));
                }
                slot
            }
            None => {
                index.insert(id.to_string(), bags.len());
                bags.push(Bag::new(id, bag_label, Vec::new()));
                bags.len() - 1
            }
        };
        bags[slot].instances.push(Instance::new(features, inst_label));
    }

    if bags.is_empty() {
        return Err(PmiError::Parse {
            line: text.lines().count().max(1),
            kind: ParseErrorKind::Empty,
        });
    }
    Dataset::new(bags)
}

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a dataset as MIL-CSV with a header line.
pub fn to_mil_csv(dataset: &Dataset) -> String {
    let mut out = String::from("bag_id,bag_label,instance_label");
    for f in 1..=dataset.dimension() {
        let _ = write!(out, ",f{f}");
    }
    out.push('\n');
    for bag in dataset.bags() {
        for inst in &bag.instances {
            out.push_str(&bag.id);
            out.push(',');
            out.push_str(bag.label.token());
            out.push(',');
            out.push_str(inst.label.token());
            for v in &inst.features {
                out.push(',');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// Per-dimension min/max fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScaleParams {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        let d = dataset.dimension();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        let mut any = false;
        for inst in dataset.instances() {
            any = true;
            for (k, &v) in inst.features.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if !any {
            return Err(PmiError::EmptyDataset);
        }
        Ok(Self { min, max })
    }

    pub fn dimension(&self) -> usize {
        self.min.len()
    }

    /// Maps one feature vector. Values outside the fitted range land outside
    /// [0,1]; constant dimensions map to 0.
    pub fn apply_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.dimension() {
            return Err(PmiError::DimensionMismatch {
                expected: self.dimension(),
                found: features.len(),
            });
        }
        Ok(features
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let range = hi - lo;
                if range > 0.0 {
                    (v - lo) / range
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        let mut bags = Vec::with_capacity(dataset.len());
        for bag in dataset.bags() {
            let instances = bag
                .instances
                .iter()
                .map(|inst| Ok(Instance::new(self.apply_features(&inst.features)?, inst.label)))
                .collect::<Result<Vec<_>>>()?;
            bags.push(Bag::new(bag.id.clone(), bag.label, instances));
        }
        Dataset::new(bags)
    }
}

/// Min-max scales every dimension into [0,1] and returns the fitted parameters.
pub fn scale_features(dataset: &Dataset) -> Result<(Dataset, ScaleParams)> {
    let params = ScaleParams::fit(dataset)?;
    let scaled = params.apply(dataset)?;
    Ok((scaled, params))
}

/// One cross-validation split. `train` holds only positive bags from the
/// other folds; `test` holds every bag of the held-out fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split by bag label, deterministic for a given seed.
pub fn split_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(PmiError::InvalidConfig(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; dataset.len()];
    for class in [Label::Positive, Label::Negative, Label::Unknown] {
        let mut members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.bag(i).label == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(PmiError::InsufficientBags {
                label: class.to_string(),
                k,
                have: members.len(),
            });
        }
        members.shuffle(&mut rng);
        for (pos, &bag) in members.iter().enumerate() {
            assignment[bag] = pos % k;
        }
    }
    Ok((0..k)
        .map(|fold| {
            let test = (0..dataset.len())
                .filter(|&i| assignment[i] == fold)
                .collect();
            let train = (0..dataset.len())
                .filter(|&i| assignment[i] != fold && dataset.bag(i).label == Label::Positive)
                .collect();
            Fold { train, test }
        })
        .collect())
}
