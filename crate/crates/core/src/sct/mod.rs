// SPDX-License-Identifier: Apache-2.0

//! Side-channel trojan blueprint: ring model, calibration, sizing and the
//! gate-level fragment.

pub mod calibrate;
pub mod design;
pub mod frozen;
pub mod netlist;
pub mod ro;

pub use design::SctConfig;
