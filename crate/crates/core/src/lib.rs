pub mod chain;
pub mod cli;
pub mod config;
pub mod dimension;
pub mod group;
pub mod hyperbolic;
pub mod measure;
pub mod semigroup;
pub mod stats;
pub mod suites;
