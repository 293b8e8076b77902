pub mod ace;
pub mod emulator;
pub mod error;
pub mod exec;
pub mod kernel;
pub mod loss;
pub mod models;
pub mod rng;
pub mod solver;
pub mod stats;
