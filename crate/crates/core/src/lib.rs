pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod embedding;
pub mod neural;
pub mod svae;
pub mod tasks;
