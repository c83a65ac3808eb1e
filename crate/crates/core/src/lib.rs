pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod regularizers;
pub mod simulator;
pub mod solver;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::ComplexTensor3;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/tensors.md")]
    pub struct Tensors;
    #[doc = include_str!("../../../book/src/operators.md")]
    pub struct Operators;
    #[doc = include_str!("../../../book/src/simulator.md")]
    pub struct Simulator;
    #[doc = include_str!("../../../book/src/cognitions.md")]
    pub struct Cognitions;
    #[doc = include_str!("../../../book/src/solver.md")]
    pub struct Solver;
    #[doc = include_str!("../../../book/src/tasks.md")]
    pub struct Tasks;
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub struct Metrics;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
