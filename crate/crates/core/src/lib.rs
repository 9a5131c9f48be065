pub mod cli;
pub mod clock;
pub mod config;
pub mod dedup;
pub mod embedding;
pub mod eval;
pub mod gateway;
pub mod http;
pub mod index;
pub mod model;
pub mod review;
pub mod suggest;
