//! Planted-signal generator for desk-scale checks.
//!
//! Column layout: `n_informative` informative columns first, then one
//! near-copy per correlated group (copy of informative column `g` plus
//! small Gaussian noise), then pure-noise columns. Rows alternate
//! lawful/unlawful, so the classes are exactly balanced.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema, FeatureSpec, Label};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::rng_for;

/// Standard deviation of the noise added to duplicated columns.
pub const DUPLICATE_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub n_informative: usize,
    /// Distance between the class-conditional means of each informative column.
    pub class_separation: f64,
    #[serde(default)]
    pub correlated_groups: usize,
    pub seed: u64,
}

/// Where each kind of column lives in a generated table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticLayout {
    pub informative: Range<usize>,
    /// `(duplicate column, source informative column)`
    pub duplicates: Vec<(usize, usize)>,
    pub noise: Range<usize>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::InvalidSpec(format!("n must be even and >= 2, got {}", self.n)));
        }
        if self.n_informative > self.m {
            return Err(Error::InvalidSpec("n_informative exceeds m".into()));
        }
        if self.n_informative + self.correlated_groups > self.m {
            return Err(Error::InvalidSpec("not enough columns for the correlated groups".into()));
        }
        if self.correlated_groups > self.n_informative {
            return Err(Error::InvalidSpec(
                "each correlated group duplicates a distinct informative column".into(),
            ));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::InvalidSpec("class_separation must be finite and >= 0".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidSpec("m must be positive".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> SyntheticLayout {
        let dup_start = self.n_informative;
        let noise_start = dup_start + self.correlated_groups;
        SyntheticLayout {
            informative: 0..self.n_informative,
            duplicates: (0..self.correlated_groups).map(|g| (dup_start + g, g)).collect(),
            noise: noise_start..self.m,
        }
    }

    pub fn schema(&self) -> FeatureSchema {
        let layout = self.layout();
        let mut specs = Vec::with_capacity(self.m);
        for j in layout.informative.clone() {
            specs.push(FeatureSpec::numeric(format!("informative_{j}"), "informative"));
        }
        for &(_, src) in &layout.duplicates {
            specs.push(FeatureSpec::numeric(format!("duplicate_of_{src}"), "duplicate"));
        }
        for j in layout.noise.clone() {
            specs.push(FeatureSpec::numeric(format!("noise_{j}"), "noise"));
        }
        FeatureSchema::new(specs).expect("generated names are unique")
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let layout = spec.layout();
    let mut rng = rng_for(spec.seed);
    let half_shift = spec.class_separation / 2.0;
    let mut x = Matrix::zeros(spec.n, spec.m);
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let label = if i % 2 == 0 { Label::Lawful } else { Label::Unlawful };
        let shift = match label {
            Label::Lawful => -half_shift,
            Label::Unlawful => half_shift,
        };
        let row = x.row_mut(i);
        for j in layout.informative.clone() {
            row[j] = shift + rng.sample::<f64, _>(StandardNormal);
        }
        for &(dup, src) in &layout.duplicates {
            row[dup] = row[src] + DUPLICATE_NOISE * rng.sample::<f64, _>(StandardNormal);
        }
        for j in layout.noise.clone() {
            row[j] = rng.sample(StandardNormal);
        }
        y.push(label);
    }
    Dataset::new(x, y, spec.schema())
}
