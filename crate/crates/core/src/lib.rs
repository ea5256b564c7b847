//! Polarimetry and radiomics feature fusion for per-pixel tissue classification.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod mueller;
pub mod pbp;
pub mod phantom;
pub mod planes;
pub mod radiomics;
pub mod raster;
pub mod registration;
pub mod nn;

pub use error::{Error, Result};
pub use config::{Manifest, RunConfig};
pub use dataset::{ClassTag, FeatureConfig, FeatureTable, FoldPlan, NormStats, PatchSource, Roi};
pub use evaluation::{CvResult, MetricsReport, SweepResult};
pub use mueller::{MuellerImage, MuellerMatrix, StokesVector};
pub use nn::{ModelKind, Network, TrainConfig};
pub use pbp::{PbpImage, PbpVector};
pub use phantom::PhantomSpec;
pub use radiomics::RadiomicsVector;
pub use raster::{LabelMask, Plane};
pub use registration::Affine2D;
