//! Verification toolkit for Dirac operators on homogeneous spaces built
//! from a declarative Lie-algebra model.

pub mod chart;
pub mod expr;
pub mod jet;
pub mod lie;
pub mod linalg;
pub mod sampling;
pub mod clifford;
pub mod geometry;
pub mod operator;
pub mod schema;
pub mod exec;
pub mod solutions;
pub mod lambda;
pub mod model;
pub mod verify;
