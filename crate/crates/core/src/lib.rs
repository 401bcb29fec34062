pub mod error;
pub mod rng;
pub mod linalg;
pub mod dataset;
pub mod model;
pub mod analysis;
pub mod training;
pub mod margin;
pub mod experiment;
pub mod cli;
