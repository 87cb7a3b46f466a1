//! Class id to traversal cost lookup.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{CostMap, LabelImage, Space, OUT_OF_VIEW_CLASS};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("cost for {what} must be finite and nonnegative, got {value}")]
    InvalidCost { what: String, value: f64 },
    #[error("class {0} is reserved for out-of-view pixels; set out_of_view_cost instead")]
    ReservedClass(u8),
    #[error("every listed class must have a positive cost (class {class} has {value})")]
    NonPositiveMinimum { class: u8, value: f64 },
    #[error("class key {0:?} is not an integer in 0..=254")]
    BadClassKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCost {
    pub name: String,
    pub cost: f64,
}

/// Lookup table from segmentation class to per-pixel traversal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    entries: BTreeMap<u8, ClassCost>,
    default_cost: f64,
    out_of_view_cost: f64,
}

pub const CARPET: u8 = 0;
pub const HARDWOOD: u8 = 1;
pub const OBSTACLE: u8 = 2;

impl Default for CostConfig {
    /// carpet < hardwood << obstacle, with unseen ground priced like an
    /// obstacle.
    fn default() -> Self {
        let entries = [
            (CARPET, "carpet", 1.0),
            (HARDWOOD, "hardwood", 4.0),
            (OBSTACLE, "obstacle", 64.0),
        ]
        .into_iter()
        .map(|(id, name, cost)| {
            (
                id,
                ClassCost {
                    name: name.to_string(),
                    cost,
                },
            )
        })
        .collect();
        Self {
            entries,
            default_cost: 16.0,
            out_of_view_cost: 64.0,
        }
    }
}

fn check_cost(what: impl Into<String>, value: f64) -> Result<(), CostError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(CostError::InvalidCost {
            what: what.into(),
            value,
        })
    }
}

impl CostConfig {
    pub fn new(
        entries: BTreeMap<u8, ClassCost>,
        default_cost: f64,
        out_of_view_cost: f64,
    ) -> Result<Self, CostError> {
        check_cost("default_cost", default_cost)?;
        check_cost("out_of_view_cost", out_of_view_cost)?;
        for (&id, entry) in &entries {
            if id == OUT_OF_VIEW_CLASS {
                return Err(CostError::ReservedClass(id));
            }
            check_cost(format!("class {id} ({})", entry.name), entry.cost)?;
            if entry.cost <= 0.0 {
                return Err(CostError::NonPositiveMinimum {
                    class: id,
                    value: entry.cost,
                });
            }
        }
        Ok(Self {
            entries,
            default_cost,
            out_of_view_cost,
        })
    }

    pub fn entries(&self) -> &BTreeMap<u8, ClassCost> {
        &self.entries
    }

    pub fn default_cost(&self) -> f64 {
        self.default_cost
    }

    pub fn out_of_view_cost(&self) -> f64 {
        self.out_of_view_cost
    }

    pub fn class_id(&self, name: &str) -> Option<u8> {
        self.entries
            .iter()
            .find(|(_, e)| e.name == name)
            .map(|(&id, _)| id)
    }

    /// Smallest listed class cost.
    pub fn min_cost(&self) -> Option<f64> {
        self.entries.values().map(|e| e.cost).reduce(f64::min)
    }

    /// Returns a copy with one class re-priced.
    pub fn with_class_cost(&self, class: u8, name: &str, cost: f64) -> Result<Self, CostError> {
        let mut entries = self.entries.clone();
        entries.insert(
            class,
            ClassCost {
                name: name.to_string(),
                cost,
            },
        );
        Self::new(entries, self.default_cost, self.out_of_view_cost)
    }

    pub fn cost_of(&self, class: u8) -> f64 {
        if class == OUT_OF_VIEW_CLASS {
            return self.out_of_view_cost;
        }
        self.entries
            .get(&class)
            .map_or(self.default_cost, |e| e.cost)
    }

    /// Full 256-entry lookup table.
    pub fn table(&self) -> [f64; 256] {
        let mut lut = [0.0; 256];
        for (class, slot) in lut.iter_mut().enumerate() {
            *slot = self.cost_of(class as u8);
        }
        lut
    }
}

pub fn apply_costs(labels: &LabelImage, cfg: &CostConfig, space: Space) -> CostMap {
    let lut = cfg.table();
    let data = labels.data().iter().map(|&c| lut[c as usize]).collect();
    CostMap::from_parts(labels.width(), labels.height(), data, space)
}

#[derive(Serialize, Deserialize)]
struct CostConfigFile {
    classes: BTreeMap<String, ClassCost>,
    default_cost: f64,
    out_of_view_cost: f64,
}

impl Serialize for CostConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CostConfigFile {
            classes: self
                .entries
                .iter()
                .map(|(id, e)| (id.to_string(), e.clone()))
                .collect(),
            default_cost: self.default_cost,
            out_of_view_cost: self.out_of_view_cost,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CostConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = CostConfigFile::deserialize(deserializer)?;
        let mut entries = BTreeMap::new();
        for (key, entry) in file.classes {
            let id: u8 = key
                .trim()
                .parse()
                .map_err(|_| serde::de::Error::custom(CostError::BadClassKey(key.clone())))?;
            entries.insert(id, entry);
        }
        CostConfig::new(entries, file.default_cost, file.out_of_view_cost)
            .map_err(serde::de::Error::custom)
    }
}
