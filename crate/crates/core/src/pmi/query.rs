//! Label oracles, query selection and removal of instances the model
//! already labels positive.

use crate::data::{Bag, Dataset, Label};
use crate::error::{PmiError, Result};
use crate::pmi::model::DecisionFunction;

/// Source of instance labels during the query step.
///
/// Indices refer to the dataset originally passed to the fit, not to the
/// shrunken dataset of later iterations.
pub trait LabelOracle {
    fn is_available(&self) -> bool {
        true
    }

    fn query(&mut self, bag: usize, instance: usize) -> Result<Label>;
}

/// No label information: the loop stops after the first training pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoOracle;

impl LabelOracle for NoOracle {
    fn is_available(&self) -> bool {
        false
    }

    fn query(&mut self, _bag: usize, _instance: usize) -> Result<Label> {
        Err(PmiError::InvalidConfig("no label oracle available".into()))
    }
}

/// Answers from the instance labels stored in a dataset.
#[derive(Debug, Clone)]
pub struct GroundTruthOracle {
    bags: Vec<Bag>,
}

impl GroundTruthOracle {
    pub fn new(dataset: &Dataset) -> Self {
        Self {
            bags: dataset.bags().to_vec(),
        }
    }
}

impl LabelOracle for GroundTruthOracle {
    fn query(&mut self, bag: usize, instance: usize) -> Result<Label> {
        let b = self
            .bags
            .get(bag)
            .ok_or_else(|| PmiError::InvalidConfig(format!("bag index {bag} out of range")))?;
        let inst = b
            .instances
            .get(instance)
            .ok_or_else(|| PmiError::InvalidConfig(format!("instance index {instance} out of range")))?;
        match inst.label {
            Label::Unknown => Err(PmiError::UnlabeledInstance {
                bag: b.id.clone(),
                instance,
            }),
            l => Ok(l),
        }
    }
}

/// Adversary that answers negative to every query.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysNegative;

impl LabelOracle for AlwaysNegative {
    fn query(&mut self, _bag: usize, _instance: usize) -> Result<Label> {
        Ok(Label::Negative)
    }
}

impl<O: LabelOracle + ?Sized> LabelOracle for &mut O {
    fn is_available(&self) -> bool {
        (**self).is_available()
    }

    fn query(&mut self, bag: usize, instance: usize) -> Result<Label> {
        (**self).query(bag, instance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub iteration: usize,
    /// Bag index in the original dataset.
    pub bag: usize,
    /// Instance index in the original bag.
    pub instance: usize,
    pub value: f64,
    pub answer: Label,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryLog {
    pub entries: Vec<QueryRecord>,
}

impl QueryLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_answer(&self) -> Option<Label> {
        self.entries.first().map(|e| e.answer)
    }
}

/// The instance with the largest decision value among those inside the
/// boundary, as (bag, instance, value) in the given dataset's indexing.
pub fn select_query(decision: &DecisionFunction, dataset: &Dataset) -> Result<Option<(usize, usize, f64)>> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, bag) in dataset.bags().iter().enumerate() {
        for (j, v) in decision.instance_values(bag)?.into_iter().enumerate() {
            if decision.is_inside(v) && best.is_none_or(|(_, _, b)| v > b) {
                best = Some((i, j, v));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    /// Remaining bags, with emptied bags dropped. `None` if nothing remains.
    pub dataset: Option<Dataset>,
    /// Number of removed instances.
    pub removed: usize,
    pub empty_bag: bool,
    /// For every bag of the input, the indices of the instances kept.
    pub kept: Vec<Vec<usize>>,
}

/// Drops every instance the model labels positive.
pub fn remove_positive_labeled(decision: &DecisionFunction, dataset: &Dataset) -> Result<Removal> {
    let mut kept = Vec::with_capacity(dataset.len());
    let mut bags = Vec::with_capacity(dataset.len());
    let mut removed = 0;
    let mut empty_bag = false;
    for bag in dataset.bags() {
        let values = decision.instance_values(bag)?;
        let keep: Vec<usize> = (0..bag.len()).filter(|&j| !decision.is_inside(values[j])).collect();
        removed += bag.len() - keep.len();
        if keep.is_empty() {
            empty_bag = true;
        } else {
            bags.push(Bag::new(
                bag.id.clone(),
                bag.label,
                keep.iter().map(|&j| bag.instances[j].clone()).collect(),
            ));
        }
        kept.push(keep);
    }
    let dataset = if bags.is_empty() { None } else { Some(Dataset::new(bags)?) };
    Ok(Removal {
        dataset,
        removed,
        empty_bag,
        kept,
    })
}
