//! Simulation toolkit for a dark-fringe x-ray interferometer built from two
//! resonant ⁵⁷Fe foils between crossed polarizers.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acoustics;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod hyperfine;
pub mod polarimeter;
pub mod real;
pub mod stochastics;
pub mod timedomain;
pub mod units;

pub use acoustics::PlateSpec;
pub use error::{Error, Result};
pub use grid::{FrequencyGrid, TimeGrid};
pub use hyperfine::{NuclearConstants, NuclearModel, ResponsePair, TargetSpec};
pub use polarimeter::{JonesMatrix, PathwayLedger, PolarizedSample, PolarizedSpectrum};
pub use real::Real;
pub use stochastics::{EventStream, ResidualMotionModel};
pub use timedomain::{
    Channel, JonesTimeResponse, MotionProfile, PolarizedTimeField, TimeResponse, WindowedInterferometer,
};

pub type NuclearModelF64 = NuclearModel<f64>;
pub type NuclearModelF32 = NuclearModel<f32>;
pub type TargetSpecF64 = TargetSpec<f64>;
pub type TargetSpecF32 = TargetSpec<f32>;
pub type JonesMatrixF64 = JonesMatrix<f64>;
pub type JonesMatrixF32 = JonesMatrix<f32>;
pub type FrequencyGridF64 = FrequencyGrid<f64>;
pub type FrequencyGridF32 = FrequencyGrid<f32>;
pub type TimeResponseF64 = TimeResponse<f64>;
pub type TimeResponseF32 = TimeResponse<f32>;
pub type MotionProfileF64 = MotionProfile<f64>;
pub type MotionProfileF32 = MotionProfile<f32>;
pub type ResidualMotionModelF64 = ResidualMotionModel<f64>;
pub type ResidualMotionModelF32 = ResidualMotionModel<f32>;
pub type PlateSpecF64 = PlateSpec<f64>;
pub type PlateSpecF32 = PlateSpec<f32>;
