use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FeatureSchema, FeatureSpec};
use crate::error::{Error, Result};

const CATALOG_JSON: &str = include_str!("../../data/feature_catalog.json");

/// The full catalog of financial, market and ownership indicators, in
/// catalog order. Entries with `dcz25` set form the 25-feature comparison
/// subset.
pub fn feature_catalog() -> FeatureSchema {
    let specs: Vec<FeatureSpec> =
        serde_json::from_str(CATALOG_JSON).expect("bundled feature catalog is valid JSON");
    FeatureSchema::new(specs).expect("bundled feature catalog has unique names")
}

/// Schema for the given column names, taking kind, group and label from the
/// catalog where a name is known and treating the rest as numeric.
pub fn schema_for_names<S: AsRef<str>>(names: &[S]) -> Result<FeatureSchema> {
    let catalog = feature_catalog();
    let specs = names
        .iter()
        .map(|n| {
            let n = n.as_ref();
            catalog
                .position(n)
                .map(|p| catalog.features()[p].clone())
                .unwrap_or_else(|| FeatureSpec::numeric(n, "other"))
        })
        .collect();
    FeatureSchema::new(specs)
}

/// Named feature subsets accepted on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Dcz25,
    Full110,
    /// Explicit column names.
    Custom(Vec<String>),
}

impl FeatureSet {
    /// Resolves the subset to column indices of `schema`, keeping schema order
    /// for named sets and the listed order for custom lists. Named sets keep
    /// only catalog columns that actually appear in `schema`.
    pub fn resolve(&self, schema: &FeatureSchema) -> Result<Vec<usize>> {
        match self {
            FeatureSet::Full110 => {
                let catalog = feature_catalog();
                let known: Vec<usize> = (0..schema.len())
                    .filter(|&j| catalog.position(&schema.features()[j].name).is_some())
                    .collect();
                // Tables that do not use catalog names are taken whole.
                Ok(if known.is_empty() { (0..schema.len()).collect() } else { known })
            }
            FeatureSet::Dcz25 => {
                let catalog = feature_catalog();
                let cols: Vec<usize> = (0..schema.len())
                    .filter(|&j| {
                        let f = &schema.features()[j];
                        f.dcz25
                            || catalog
                                .position(&f.name)
                                .is_some_and(|p| catalog.features()[p].dcz25)
                    })
                    .collect();
                if cols.is_empty() {
                    return Err(Error::Config(
                        "no column of the table belongs to the dcz25 subset".into(),
                    ));
                }
                Ok(cols)
            }
            FeatureSet::Custom(names) => names
                .iter()
                .map(|n| {
                    schema
                        .position(n)
                        .ok_or_else(|| Error::Config(format!("unknown feature `{n}`")))
                })
                .collect(),
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dcz25" => Ok(FeatureSet::Dcz25),
            "full110" | "full" => Ok(FeatureSet::Full110),
            other => Ok(FeatureSet::Custom(
                other.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect(),
            )),
        }
    }
}
