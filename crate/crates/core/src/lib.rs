//! Lift Fortran model code and LaTeX equations into grounded function
//! networks (GrFN), ground them with comment descriptions and analyze them.

pub mod analysis;
pub mod equation;
pub mod fortran;
pub mod grfn;
pub mod grounding;
pub mod ir;
pub mod modgraph;
