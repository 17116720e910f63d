//! Per-class social costs for detected humans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CostmapError, INSCRIBED};

pub const ADULT: &str = "adult";
pub const VULNERABLE: &str = "vulnerable";
pub const STAFF: &str = "staff";

/// Base cost per social class. Every cost lies in [1, 253] so humans stay
/// permeable to the planner until they are escalated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, u8>", into = "BTreeMap<String, u8>")]
pub struct SocialCostTable {
    costs: BTreeMap<String, u8>,
}

impl Default for SocialCostTable {
    fn default() -> Self {
        let costs = [(ADULT, 120), (VULNERABLE, 200), (STAFF, 80)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Self { costs }
    }
}

impl SocialCostTable {
    pub fn new(costs: BTreeMap<String, u8>) -> Result<Self, CostmapError> {
        for (class, &c) in &costs {
            if c == 0 || c >= INSCRIBED {
                return Err(CostmapError::InvalidParams(format!("social cost for {class:?} must be in [1, 253], got {c}")));
            }
        }
        if let (Some(v), Some(a)) = (costs.get(VULNERABLE), costs.get(ADULT)) {
            if v <= a {
                return Err(CostmapError::InvalidParams(format!("vulnerable cost {v} must exceed adult cost {a}")));
            }
        }
        Ok(Self { costs })
    }

    pub fn get(&self, class: &str) -> Option<u8> {
        self.costs.get(class).copied()
    }

    /// Cost for `class`, or an error naming the class.
    pub fn cost_of(&self, class: &str) -> Result<u8, CostmapError> {
        self.get(class).ok_or_else(|| CostmapError::UnknownClass(class.to_string()))
    }

    pub fn contains(&self, class: &str) -> bool {
        self.costs.contains_key(class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.costs.keys().map(String::as_str)
    }
}

impl TryFrom<BTreeMap<String, u8>> for SocialCostTable {
    type Error = CostmapError;
    fn try_from(m: BTreeMap<String, u8>) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<SocialCostTable> for BTreeMap<String, u8> {
    fn from(t: SocialCostTable) -> Self {
        t.costs
    }
}
