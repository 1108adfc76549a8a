//! Numerical toolkit for the complex m-Hessian equation `S_m(dd^c u) = f`.

pub mod app;
pub mod cone;
pub mod exec;
pub mod grid;
pub mod io;
pub mod sampling;
pub mod solver;
pub mod glue;
pub mod validation;
