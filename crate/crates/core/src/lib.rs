// SPDX-License-Identifier: Apache-2.0

pub mod attack;
pub mod design;
pub mod eco;
pub mod error;
pub mod generate;
pub mod json;
pub mod library;
pub mod netlist;
pub mod power;
pub mod presets;
pub mod process;
pub mod scalar;
pub mod sct;
pub mod sim;
pub mod sta;

pub use error::{Error, Result};

pub type TimingReport32 = sta::TimingReport<f32>;
pub type TimingReport64 = sta::TimingReport<f64>;
pub type Quantized32 = attack::Quantized<f32>;
pub type Quantized64 = attack::Quantized<f64>;
