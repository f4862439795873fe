pub mod bandwidth;
pub mod birkhoff;
pub mod cli;
pub mod enhancements;
pub mod error;
pub mod instance;
pub mod io;
pub mod localsearch;
pub mod matrix;
pub mod objective;
pub mod solver;
