//! Guidance-weighted total-variation spectral unmixing.
//!
//! Abundances are estimated under the linear mixing model with nonnegativity and
//! sum-to-one constraints, regularized by an anisotropic TV penalty whose
//! per-edge weights come from a guidance map: the hyperspectral image, its first
//! principal component, the abundances themselves, a LiDAR digital surface
//! model, or a DSM combined with one of the others.
//!
//! Crate layout:
//!
//! * [`grid`]: pixel grid, 4-neighborhood and the weighted difference operator.
//! * [`data`]: cubes, endmember libraries, abundance images and surface models.
//! * [`guidance`]: per-edge weight construction for every guidance source.
//! * [`solver`]: the ADMM solver and the reweighted outer loop.
//! * [`simgen`]: synthetic piecewise-homogeneous scenes with a matching DSM.
//! * [`eval`]: RMSE metrics and parameter sweeps.
//! * [`io`]: binary raster/cube formats, CSV and key-value config files.
//! * [`cli`]: the `hsi-unmix` command-line front end.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod guidance;
pub mod io;
pub mod simgen;
pub mod solver;

pub use data::{AbundanceImage, EndmemberLibrary, SpectralCube, SurfaceModel};
pub use error::{Error, Result};
pub use grid::{Direction, EdgeWeights, GridDims, GuidanceOperator};
pub use guidance::{WeightConfig, WeightKind};
pub use solver::{SolverOptions, UnmixResult};
