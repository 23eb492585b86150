//! Elastic principal graphs.
//!
//! Grammar-driven construction of principal trees and elastic cubic complexes
//! for point clouds in R^m, with EM fitting of node positions and the accuracy
//! and complexity measures used to read the resulting trajectories.

pub mod builder;
pub mod complex;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod grammar;
pub mod graph;
pub mod optimizer;
pub mod report;

pub use builder::{grow, initialize, BuilderConfig, ComplexityRecord, Trace};
pub use complex::{cartesian_product, product_energy_check, CubicComplex};
pub use dataset::{generate, load_csv, standardize, DataSet, GeneratorSpec, Shape};
pub use energy::{fve, geometrical_complexity, total_energy};
pub use error::{Error, Result};
pub use grammar::{Grammar, GrammarOperation, RuleKind, StructuralPolicy};
pub use graph::{Barcode, ElasticGraph};
pub use optimizer::{fit, FitConfig};
