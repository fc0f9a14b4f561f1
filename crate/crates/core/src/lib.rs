//! Multiresolution mode decomposition of oscillatory time series.
//!
//! A signal sampled on `[0, 1]` is separated into components
//! `Σ_n a_n cos(2πnφ) s_cn(2πNφ) + b_n sin(2πnφ) s_sn(2πNφ)` given each
//! component's phase `p = N·φ` in cycles. Shapes are estimated by warping the
//! residual onto the phase, folding it into one period and averaging per bin.

pub mod diagnostics;
pub mod error;
pub mod fold_regress;
pub mod gmd;
pub mod io;
pub mod mmd;
pub mod signal_model;
pub mod synth;

pub use error::{Error, Result};
pub use gmd::{gmd_decompose, DecompositionReport, GmdConfig, GmdResult, Scheme, StopReason};
pub use mmd::{mmd_decompose, MmdConfig, MmdResult};
pub use signal_model::{Carrier, MimfEstimate, PhasePrior, SampledSignal, ShapeTable};
