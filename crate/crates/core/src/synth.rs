//! Seeded synthetic MIL datasets.
//!
//! Positive bags mix draws from a compact positive cluster with negatives;
//! negative bags hold negatives only. Negatives are either scattered
//! uniformly over the unit cube or drawn from their own Gaussian cluster,
//! which covers both the "compact positives, diffuse background" regime and
//! the harder "background tighter than the target" regime.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Bag, Dataset, Instance, Label};
use crate::error::{PmiError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub center: Vec<f64>,
    /// Per-coordinate standard deviation.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NegativeMode {
    /// Uniform on [0,1]^d.
    Scattered,
    Clustered(Cluster),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub positive_bags: usize,
    pub negative_bags: usize,
    pub instances_per_bag: usize,
    pub dimension: usize,
    pub positive_cluster: Cluster,
    pub negative_mode: NegativeMode,
    pub positives_per_bag: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Compact positive cluster centred in the unit cube, scattered negatives.
    pub fn scattered(dimension: usize, positive_bags: usize, negative_bags: usize, seed: u64) -> Self {
        Self {
            positive_bags,
            negative_bags,
            instances_per_bag: 8,
            dimension,
            positive_cluster: Cluster {
                center: vec![0.5; dimension],
                spread: 0.05,
            },
            negative_mode: NegativeMode::Scattered,
            positives_per_bag: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PmiError::InvalidConfig(msg));
        if self.dimension == 0 {
            return bad("dimension must be positive".into());
        }
        if self.instances_per_bag == 0 {
            return bad("instances_per_bag must be positive".into());
        }
        if self.positive_bags + self.negative_bags == 0 {
            return bad("at least one bag is required".into());
        }
        if self.positives_per_bag == 0 || self.positives_per_bag > self.instances_per_bag {
            return bad(format!(
                "positives_per_bag must lie in [1, {}], got {}",
                self.instances_per_bag, self.positives_per_bag
            ));
        }
        let mut clusters = vec![("positive", &self.positive_cluster)];
        if let NegativeMode::Clustered(c) = &self.negative_mode {
            clusters.push(("negative", c));
        }
        for (name, c) in clusters {
            if c.center.len() != self.dimension {
                return bad(format!(
                    "{name} center has {} coordinates, expected {}",
                    c.center.len(),
                    self.dimension
                ));
            }
            if !(c.spread >= 0.0 && c.spread.is_finite()) {
                return bad(format!("{name} spread must be finite and non-negative"));
            }
            if c.center.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} center must be finite"));
            }
        }
        Ok(())
    }
}

fn draw_cluster(rng: &mut ChaCha8Rng, cluster: &Cluster) -> Vec<f64> {
    cluster
        .center
        .iter()
        .map(|&c| {
            let z: f64 = rng.sample(StandardNormal);
            c + cluster.spread * z
        })
        .collect()
}

fn draw_negative(rng: &mut ChaCha8Rng, mode: &NegativeMode, d: usize) -> Vec<f64> {
    match mode {
        NegativeMode::Scattered => (0..d).map(|_| rng.random::<f64>()).collect(),
        NegativeMode::Clustered(c) => draw_cluster(rng, c),
    }
}

/// Generates positive bags `p0..`, then negative bags `n0..`, with
/// instance-level ground truth recorded.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.dimension;
    let mut bags = Vec::with_capacity(config.positive_bags + config.negative_bags);

    for i in 0..config.positive_bags {
        let mut instances = Vec::with_capacity(config.instances_per_bag);
        for _ in 0..config.positives_per_bag {
            instances.push(Instance::new(
                draw_cluster(&mut rng, &config.positive_cluster),
                Label::Positive,
            ));
        }
        for _ in config.positives_per_bag..config.instances_per_bag {
            instances.push(Instance::new(
                draw_negative(&mut rng, &config.negative_mode, d),
                Label::Negative,
            ));
        }
        instances.shuffle(&mut rng);
        bags.push(Bag::new(format!("p{i}"), Label::Positive, instances));
    }
    for i in 0..config.negative_bags {
        let instances = (0..config.instances_per_bag)
            .map(|_| Instance::new(draw_negative(&mut rng, &config.negative_mode, d), Label::Negative))
            .collect();
        bags.push(Bag::new(format!("n{i}"), Label::Negative, instances));
    }
    Dataset::new(bags)
}
