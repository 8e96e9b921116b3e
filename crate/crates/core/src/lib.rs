pub mod rng;
pub mod experiment;
pub mod cli;
pub mod stats;
pub mod synth;
pub mod classifier;
pub mod dataset;
pub mod featurizer;
pub mod nn;
pub mod telemetry;
