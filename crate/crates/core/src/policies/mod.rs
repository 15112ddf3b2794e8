//! Dispatch policies: DRACE and the myopic ALNS baseline.

pub mod alns;
pub mod drace;
pub mod insertion;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use alns::{alns_decide, relatedness, shaw_select, Alns, AlnsConfig};
pub use drace::{argmin_cost, cfa_cost, drace_decide, Drace, Workspace};
pub use insertion::{best_insertion, reconstruct, DeltaResult, Insertion, Planner, Positions};

use crate::mdp::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Drace,
    Myopic,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Drace => "drace",
            PolicyKind::Myopic => "myopic",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drace" => Ok(PolicyKind::Drace),
            "myopic" | "alns" => Ok(PolicyKind::Myopic),
            other => Err(format!("unknown policy `{other}` (expected drace or myopic)")),
        }
    }
}

/// Everything needed to build a policy for one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Plan with average travel times instead of time-dependent ones.
    pub average_planning: bool,
    /// Cost candidate routes with strategic waits included.
    pub planned_waits: bool,
    pub alns: AlnsConfig,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            average_planning: false,
            planned_waits: false,
            alns: AlnsConfig::default(),
        }
    }

    pub fn build(&self, seed: u64) -> Box<dyn Policy> {
        match self.kind {
            PolicyKind::Drace => Box::new(Drace {
                average_planning: self.average_planning,
                planned_waits: self.planned_waits,
            }),
            PolicyKind::Myopic => {
                let mut alns = Alns::new(self.alns, seed);
                alns.average_planning = self.average_planning;
                alns.planned_waits = self.planned_waits;
                Box::new(alns)
            }
        }
    }
}
