pub mod casefile;
pub mod error;
pub mod hermitian;
pub mod relaxation;
pub mod solver;
pub mod certify;
pub mod sweep;
pub mod cli;
