//! Support library of the `pkggrid` command-line tool: run configuration,
//! the level-set artifact codec, VTK export, and the benchmark harness with
//! its dense and hash-map comparison backends.

pub mod artifact;
pub mod backends;
pub mod bench;
pub mod config;
pub mod vtk;
