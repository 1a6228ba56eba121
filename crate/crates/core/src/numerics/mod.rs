//! Small scalar numerical kernels shared by the solvers.

pub mod grid;
pub mod interp;
pub mod ode;
pub mod root;
