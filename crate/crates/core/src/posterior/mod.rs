//! Priors, parameter transforms and the joint log posterior with its gradient.

mod model;
pub mod priors;
pub mod transform;

pub use model::{ModelContext, PosteriorModel, RegionData};
pub use priors::{BetaPrior, DispersionPrior, LogNormalPrior, PriorSpec};
pub use transform::{Coord, ParamLayout, ParamSet, RegionParams};
