#![allow(clippy::needless_range_loop)] // indexed numeric loops read better here

//! Solver library for chance-constrained mixed-integer programs over finite
//! discrete scenario sets: deterministic-equivalent formulations and their
//! strengthenings, a scenario-aware Benders decomposition with enhancement
//! variants, aggregation (Jensen-type) lower bounds, an enumeration oracle,
//! a self-contained LP/MIP kernel, and seeded instance generators.
//!
//! ```
//! use ccmp_core::benders::{self, BendersConfig, Variant};
//! use ccmp_core::formulate::oracle_solve;
//! use ccmp_core::gen::fixtures;
//!
//! let instance = fixtures::tiny2(0.5);
//! let truth = oracle_solve(&instance, 12).unwrap().objective.unwrap();
//! let run = benders::run(&instance, &BendersConfig::oracle_grade(Variant::Bd1)).unwrap();
//! assert!((run.report.objective.unwrap() - truth).abs() < 1e-6);
//! ```

pub mod benders;
pub mod formulate;
pub mod gen;
pub mod jensen;
pub mod lpkit;
pub mod model;
