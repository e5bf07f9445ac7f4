//! Canonical on-disk form of plans and run reports.
//!
//! JSON is the interchange format; CSV covers the transfer table only.
//! Documents contain no timestamps, so identical plans serialize to
//! identical bytes. A parsed document is checked against a fresh
//! re-derivation of the same problem, which both restores the parts a
//! document omits (the superblock tables) and rejects tampered files.

use crate::redistribute::HopReport;
use crate::schedule::{plan, RedistributionPlan, ShiftCase};
use crate::topology::{BlockDesc, GridShape, ParseGridError, TopologyError};
use crate::RedistProblem;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Tool version stamped into emitted documents.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub src: String,
    pub dst: String,
    /// Matrix side length in elements.
    pub n: usize,
    /// Block side length in elements.
    pub nb: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsDoc {
    /// Block rows per superblock.
    pub r: usize,
    /// Block columns per superblock.
    pub c: usize,
    /// Total superblocks.
    pub sup: usize,
}

/// Serializable form of a [`RedistributionPlan`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub version: String,
    pub problem: ProblemDoc,
    pub dims: DimsDoc,
    pub shift_case: ShiftCase,
    pub contentions_before: usize,
    pub contentions_after: usize,
    /// Destination pid per (step, source).
    pub transfer: Vec<Vec<usize>>,
    /// Superblock cell per (step, source).
    pub coords: Vec<Vec<[usize; 2]>>,
    /// Source pid per (step, destination); -1 marks an idle destination.
    /// Absent while the schedule has contention.
    pub recv: Option<Vec<Vec<i64>>>,
}

impl PlanDocument {
    pub fn from_plan(pl: &RedistributionPlan) -> PlanDocument {
        let steps = pl.steps();
        let sources = pl.transfer.sources();
        let transfer: Vec<Vec<usize>> = (0..steps)
            .map(|s| (0..sources).map(|p| pl.transfer.dest(s, p)).collect())
            .collect();
        let coords: Vec<Vec<[usize; 2]>> = (0..steps)
            .map(|s| {
                (0..sources)
                    .map(|p| {
                        let (i, j) = pl.transfer.coord(s, p);
                        [i, j]
                    })
                    .collect()
            })
            .collect();
        let recv = pl.recv.as_ref().map(|r| {
            (0..r.steps())
                .map(|s| {
                    (0..r.dests())
                        .map(|d| r.get(s, d).map_or(-1, |pid| pid as i64))
                        .collect()
                })
                .collect()
        });
        PlanDocument {
            version: TOOL_VERSION.to_string(),
            problem: ProblemDoc {
                src: pl.problem.src.to_string(),
                dst: pl.problem.dst.to_string(),
                n: pl.problem.blocks.n,
                nb: pl.problem.blocks.nb,
            },
            dims: DimsDoc {
                r: pl.dims.rows,
                c: pl.dims.cols,
                sup: pl.dims.count,
            },
            shift_case: pl.shift_case,
            contentions_before: pl.contentions_before,
            contentions_after: pl.contentions_after,
            transfer,
            coords,
            recv,
        }
    }

    /// Rebuilds the plan. The document's problem is re-planned and every
    /// stored field must agree with the re-derivation.
    pub fn to_plan(&self) -> Result<RedistributionPlan, PlanDocError> {
        let src: GridShape = self.problem.src.parse()?;
        let dst: GridShape = self.problem.dst.parse()?;
        let blocks = BlockDesc::from_elements(self.problem.n, self.problem.nb)?;
        let problem = RedistProblem::new(src, dst, blocks)?;
        let rebuilt = plan(&problem)?;
        let expected = PlanDocument {
            version: self.version.clone(),
            ..Self::from_plan(&rebuilt)
        };
        if expected != *self {
            return Err(PlanDocError::Inconsistent);
        }
        Ok(rebuilt)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<PlanDocument, PlanDocError> {
        serde_json::from_str(text).map_err(|e| PlanDocError::Json(e.to_string()))
    }

    /// The transfer table as CSV: one row per step, one column per source.
    pub fn transfer_csv(&self) -> String {
        let sources = self.transfer.first().map_or(0, |r| r.len());
        let mut out = String::from("step");
        for p in 0..sources {
            out.push_str(&format!(",src{p}"));
        }
        out.push('\n');
        for (step, row) in self.transfer.iter().enumerate() {
            out.push_str(&step.to_string());
            for dst in row {
                out.push_str(&format!(",{dst}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Serializable per-hop summary of a simulated run.
#[derive(Debug, Clone, Serialize)]
pub struct HopDoc {
    pub src: String,
    pub dst: String,
    pub steps: usize,
    pub shift_case: ShiftCase,
    pub contentions_before: usize,
    pub contentions_after: usize,
    pub sends: usize,
    pub copies: usize,
    pub max_fan_in: usize,
    pub blocks_delivered: usize,
    pub verified: bool,
    pub mismatches: Vec<String>,
}

/// Serializable report of a whole simulated session.
#[derive(Debug, Clone, Serialize)]
pub struct SessionDocument {
    pub version: String,
    pub hops: Vec<HopDoc>,
    pub all_verified: bool,
}

impl SessionDocument {
    pub fn from_hops(hops: &[HopReport]) -> SessionDocument {
        let docs: Vec<HopDoc> = hops
            .iter()
            .map(|h| HopDoc {
                src: h.src.to_string(),
                dst: h.dst.to_string(),
                steps: h.steps,
                shift_case: h.shift_case,
                contentions_before: h.contentions_before,
                contentions_after: h.contentions_after,
                sends: h.run.total_sends(),
                copies: h.run.total_copies(),
                max_fan_in: h.run.max_fan_in(),
                blocks_delivered: h.run.blocks_delivered,
                verified: h.verify.pass,
                mismatches: h.verify.mismatches.clone(),
            })
            .collect();
        let all_verified = hops.iter().all(|h| h.verify.pass);
        SessionDocument {
            version: TOOL_VERSION.to_string(),
            hops: docs,
            all_verified,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session documents serialize");
        s.push('\n');
        s
    }
}

/// Failures reading a plan document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanDocError {
    Json(String),
    Grid(ParseGridError),
    Topology(TopologyError),
    /// The document disagrees with a re-derivation of its own problem.
    Inconsistent,
}

impl From<ParseGridError> for PlanDocError {
    fn from(e: ParseGridError) -> Self {
        PlanDocError::Grid(e)
    }
}

impl From<TopologyError> for PlanDocError {
    fn from(e: TopologyError) -> Self {
        PlanDocError::Topology(e)
    }
}

impl fmt::Display for PlanDocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanDocError::Json(e) => write!(f, "malformed plan document: {e}"),
            PlanDocError::Grid(e) => e.fmt(f),
            PlanDocError::Topology(e) => e.fmt(f),
            PlanDocError::Inconsistent => {
                write!(
                    f,
                    "plan document does not match a re-derivation of its problem"
                )
            }
        }
    }
}

impl std::error::Error for PlanDocError {}
