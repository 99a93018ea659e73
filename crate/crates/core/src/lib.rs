//! Numerical toolkit for prescribed η-curvature graphs: cone algebra, graph
//! geometry, the ψ expression language, boundary-fitted grids, a radial
//! shooting oracle, a damped Newton solver and verification certificates.

pub mod cli;
pub mod config;
pub mod domaingrid;
pub mod graphgeom;
pub mod linalg;
pub mod output;
pub mod oracle;
pub mod psilang;
pub mod radial;
pub mod sampling;
pub mod solver;
pub mod sparse;
pub mod symcone;
pub mod verify;
