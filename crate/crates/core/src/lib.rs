//! Numerical laboratory for random Schrödinger operators on nested fractals.
//!
//! The crate builds finite pieces of an unbounded planar nested fractal
//! (Sierpiński gasket, Vicsek cross, ...), labels their vertex lattices so
//! that the folding projections `π_M` onto a reference complex exist,
//! assembles discrete Dirichlet/Neumann operators `φ(-L) + V` with
//! alloy-type disorder, and estimates the integrated density of states
//! together with its small-energy (Lifschitz) behaviour.  A continuous-time
//! random-walk Monte Carlo layer provides an independent Feynman–Kac check
//! of the spectral traces.

pub mod exact;
pub mod geometry;
pub mod harness;
pub mod ids;
pub mod labeling;
pub mod mc;
pub mod operator;
pub mod potential;
pub mod subordination;

pub use geometry::{CellAddress, FractalSpec, LatticeGraph, VertexId};
pub use labeling::{FoldingMap, GoodLabeling, LabelingOutcome};
pub use operator::{BoundaryCondition, DiscreteLaplacian, SpectrumBundle, VertexMeasure};
pub use potential::{DisorderLaw, DisorderSample, SingleSiteProfile};
pub use subordination::BernsteinFunction;
