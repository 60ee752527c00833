//! S-TEDS, GriTS_Top and cell-adjacency F1.

mod car;
mod grits;
mod report;
mod teds;

pub use car::{adjacency_set, car_f1, CarScore, Direction, Footprint, Relation};
pub use report::{evaluate, EvalReport, MetricSummary, SampleScore, ScoredPair, SplitScore, REPORT_SCHEMA};
pub use grits::{align, box_iou, grits_top, grits_top_exact, grits_top_factored, TopologyGrid};
pub use teds::{s_teds, tree_edit_distance};

use serde::{Deserialize, Serialize};

use crate::structure::{HtmlTree, TableStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Steds,
    Grits,
    Car,
}

impl std::str::FromStr for Metric {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "steds" | "s-teds" => Ok(Metric::Steds),
            "grits" => Ok(Metric::Grits),
            "car" => Ok(Metric::Car),
            other => Err(crate::Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Steds, Metric::Grits, Metric::Car];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Steds => "steds",
            Metric::Grits => "grits",
            Metric::Car => "car",
        }
    }

    /// Scores `pred` against `gt`. CAR reports its F1.
    pub fn score(self, pred: &TableStructure, gt: &TableStructure) -> f64 {
        match self {
            Metric::Steds => s_teds(&HtmlTree::from_structure(pred), &HtmlTree::from_structure(gt)),
            Metric::Grits => grits_top(&TopologyGrid::from_structure(pred), &TopologyGrid::from_structure(gt)),
            Metric::Car => car_f1(pred, gt).f1,
        }
    }
}
