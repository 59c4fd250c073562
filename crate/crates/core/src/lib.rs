pub mod linalg;
pub mod ntk;
pub mod earlystop;
pub mod network;
pub mod data;
pub mod cli;
