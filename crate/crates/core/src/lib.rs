//! Simulation and signal processing for low-power hybrid RF-acoustic ranging.
//!
//! A beacon broadcasts a linear chirp while an RF trigger wakes every receiver
//! for a short listening window. Each receiver pulse-compresses its snippet
//! against the known chirp and converts the selected correlation lag into a
//! distance. The numeric core is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision for everyday use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod power;
pub mod ranging;
pub mod room;
pub mod scalar;
pub mod signals;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{estimate_distance, Estimate, EstimatorSpec, Ranger, WindowSpec};
pub use ranging::{
    coverage, lag_to_distance, pulse_compress, CorrelationSeries, Detector, Template, TimingSpec,
    WakeScenario,
};
pub use room::{compute_rir, CleanReception, ImpulseResponse, Point3, ReceiveChain, RoomSpec};
pub use scalar::Scalar;
pub use signals::{generate_chirp, ChirpSpec, NoiseSpec, Waveform};
pub use stats::{DensityEstimate, ErrorStats};

pub type ChirpSpec64 = ChirpSpec<f64>;
pub type ChirpSpec32 = ChirpSpec<f32>;
pub type Waveform64 = Waveform<f64>;
pub type Waveform32 = Waveform<f32>;
pub type RoomSpec64 = RoomSpec<f64>;
pub type RoomSpec32 = RoomSpec<f32>;
pub type Point64 = Point3<f64>;
pub type Point32 = Point3<f32>;
pub type TimingSpec64 = TimingSpec<f64>;
pub type TimingSpec32 = TimingSpec<f32>;
pub type Estimator64 = EstimatorSpec<f64>;
pub type Estimator32 = EstimatorSpec<f32>;
pub type Ranger64 = Ranger<f64>;
pub type Ranger32 = Ranger<f32>;
