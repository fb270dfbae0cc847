//! Energy-consistent discretizations of boundary-coupled wave, heat and
//! oscillator systems, with tools to measure their spectra, resolvent growth
//! and energy decay.

pub mod cli;
pub mod discretize;
pub mod expr;
pub mod interconnect;
pub mod linalg;
pub mod lti;
pub mod spectral;
pub mod timestep;
