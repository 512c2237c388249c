//! Synthetic dispersive-readout simulator and readout estimators.
//!
//! The crate generates heterodyne IQ waveforms for a transmon read out through
//! a dispersively coupled resonator, reduces them to IQ points, and compares
//! three readout back-ends on those waveforms:
//!
//! * a raw IQ-plane linear discriminant ([`raw_readout`]),
//! * a feedforward network with a softmax head ([`discriminators::FnnModel`]),
//! * a per-qubit modular network whose output scores are turned into graded
//!   populations ([`discriminators::TrmnnModule`]).
//!
//! [`experiments`] holds the evaluation protocol: assignment fidelity, Rabi
//! curves averaged over `M` traces, sine fits and variance reports.
//!
//! Heavy loops (shot synthesis, demodulation, mini-batch gradients, batch
//! inference) run on rayon when the `parallel` feature is enabled and fall back
//! to plain iterators otherwise. Both paths produce bit-identical results.

pub mod dataset;
pub mod demod;
pub mod discriminators;
pub mod error;
pub mod experiments;
pub mod neural;
pub mod par;
pub mod raw_readout;
pub mod report;
pub mod seed;
pub mod signal;

pub use demod::{demodulate, demodulate_batch, IqPoint};
pub use discriminators::{
    infer_batch, probability_estimate, Backend, FnnModel, ModuleRegistry, PopulationEstimate,
    ShotEstimator, SimilarityPair, TrmnnModule,
};
pub use error::{Error, Result};
pub use raw_readout::{Discriminant, RawReadout};
pub use signal::{
    NoiseModel, QubitState, RabiConfig, ReadoutConfig, ShotRecord, SystemParams, Waveform,
};
