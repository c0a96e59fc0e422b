//! Critical points of the population loss of a two-layer ReLU (or leaky ReLU)
//! student network trained against an orthonormal teacher.
//!
//! The loss over student rows `W` (k rows in R^k, teacher `V = I_k`) reduces,
//! on permutation-symmetric fixed spaces, to a handful of scalar coordinates.
//! This crate provides:
//!
//! - the closed-form pair kernel and its gradient ([`kernel_geometry`]),
//! - the symmetric charts, group action and isotypic split ([`symmetry_charts`]),
//! - full and reduced objective/gradient evaluation ([`objective_gradient`]),
//! - Newton solving of the leak-0 consistency equations plus tracking in the
//!   width parameter k ([`consistency_solver`]),
//! - continuation from leak 0 to leak 1 critical points ([`path_continuation`]),
//! - large-k series approximants, comparison tables, decay scans and the
//!   closed-form degenerate critical points ([`series_asymptotics`]).

// Dense k x k index loops are the house style here; iterator rewrites of
// matrix kernels hide the (i, j) structure.
#![allow(clippy::needless_range_loop)]

pub mod consistency_solver;
pub mod kernel_geometry;
pub mod objective_gradient;
pub mod path_continuation;
pub mod series_asymptotics;
pub mod symmetry_charts;

mod util;

use std::fmt;
use std::str::FromStr;

/// Critical-point family studied by the solvers and reports.
///
/// `A` lives in the diagonal chart (p = 0), `I` and `II` in the
/// one-distinguished-row chart (p = 1), `M` in the two-block chart (p = 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    A,
    I,
    II,
    M,
}

impl Family {
    /// Chart block size p of the family's fixed space.
    pub fn p(self) -> usize {
        match self {
            Family::A => 0,
            Family::I | Family::II => 1,
            Family::M => 2,
        }
    }

    /// Number of chart coordinates.
    pub fn m(self) -> usize {
        match self {
            Family::A => 2,
            Family::I | Family::II => 5,
            Family::M => 6,
        }
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Family::A),
            "i" => Ok(Family::I),
            "ii" => Ok(Family::II),
            "m" => Ok(Family::M),
            other => Err(format!("unknown family '{other}' (expected a, i, ii or m)")),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::A => "a",
            Family::I => "i",
            Family::II => "ii",
            Family::M => "m",
        };
        f.write_str(s)
    }
}
