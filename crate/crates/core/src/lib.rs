//! Twin neural network regression.
//!
//! A single network `F` is trained on pairs of inputs to predict the
//! difference of their targets, `F(a, b) ≈ y_a − y_b`. A query is then
//! predicted from every training point (the *anchors*) and the anchor-wise
//! estimates are averaged. The spread of those estimates and the violations
//! of the loop conditions `F(a,b) + F(b,a) = 0` serve as uncertainty signals.
//!
//! Everything numeric is generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! aliases below are what the experiment harness uses.

pub mod baseline;
pub mod container;
pub mod data;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod nn;
pub mod pairing;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod train;
pub mod twin;
pub mod uncertainty;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Network64 = nn::Network<f64>;
pub type Network32 = nn::Network<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type TwinModel64 = twin::TwinModel<f64>;
pub type TwinModel32 = twin::TwinModel<f32>;
pub type TnnEnsemble64 = twin::TnnEnsemble<f64>;
pub type AnnModel64 = baseline::AnnModel<f64>;
pub type PredictionBundle64 = twin::PredictionBundle<f64>;
