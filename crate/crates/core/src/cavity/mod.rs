//! Population dynamics for the distributional cavity recursion.
//!
//! The laws of the cavity fields of non-members (`xi0`) and members (`xi1`)
//! are each represented by `M` samples. One step draws, for every new
//! sample, Poisson numbers of neighbours of each class and sums the message
//! function over uniformly resampled entries of the previous population.

mod curve;
mod free_energy;
mod population;

pub use curve::{pd_curve, CavityCurve, CavityCurvePoint, CurveConfig};
pub use free_energy::{bethe_free_energy, FreeEnergy};
pub use population::{NishimoriReport, Population, PopulationConfig, Reweighting};
