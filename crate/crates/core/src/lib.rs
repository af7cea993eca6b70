#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod dynprog;
pub mod epistemic;
pub mod error;
pub mod feedback;
pub mod game;
pub mod gravity;
pub mod growth;
pub mod harness;
pub mod policy;
pub mod recombinant;
pub mod rng;
pub mod series;
