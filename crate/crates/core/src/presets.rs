// SPDX-License-Identifier: Apache-2.0

//! The eight crypto-core targets: AES (128-bit key) and PRESENT (80-bit key),
//! low/high frequency, low/high density.

use serde::{Deserialize, Serialize};

use crate::design::PlacedDesign;
use crate::eco::{insert_sct, EcoPatch, RouteParams};
use crate::error::{Error, Result};
use crate::generate::{generate_target, GenParams, TargetProfile};
use crate::library::{CellLibrary, Flavor};
use crate::netlist::KeyFindMode;
use crate::power::{Activity, PowerReport};
use crate::sct::design::{design_sct, reference_config, SctRequest};
use crate::sct::SctConfig;
use crate::sim::Chip;

/// Figures expected once the trojan has been inserted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostEco {
    pub density: f64,
    pub leakage: f64,
    pub clock_tree_power: f64,
    pub total_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub profile: TargetProfile,
    pub post: PostEco,
    /// Core size in sites, fitted so the planned trojan lands on the post-ECO density.
    pub row_sites: u64,
    /// Default switching activity, fitted against total power.
    pub toggles_per_cycle: f64,
}

pub const NAMES: [&str; 8] = [
    "AES_LFLD", "AES_LFHD", "AES_HFLD", "AES_HFHD", "PST_LFLD", "PST_LFHD", "PST_HFLD", "PST_HFHD",
];

// name, MHz, density, leakage, clock tree, total, post (density, leakage, clock tree, total), row sites, toggles/cycle
#[rustfmt::skip]
const TABLE: [(&str, f64, f64, f64, f64, f64, [f64; 4], u64, f64); 8] = [
    ("AES_LFLD", 100.0, 0.61, 77.4, 115.2, 1670.0, [0.6345, 80.0, 115.8, 1720.0], 160_367, 0.18797),
    ("AES_LFHD", 100.0, 0.75, 75.8, 116.7, 1660.0, [0.7820, 79.0, 117.6, 1720.0], 122_781, 0.20119),
    ("AES_HFLD", 1000.0, 0.58, 1048.0, 1228.0, 22800.0, [0.5937, 1052.0, 1238.0, 23015.0], 282_847, 0.14909),
    ("AES_HFHD", 1000.0, 0.72, 1036.0, 1241.0, 22610.0, [0.7302, 1040.0, 1252.0, 22830.0], 379_902, 0.0856),
    ("PST_LFLD", 95.0, 0.53, 14.13, 32.05, 371.3, [0.6733, 20.71, 34.75, 483.4], 17_976, 0.50439),
    ("PST_LFHD", 95.0, 0.70, 14.09, 31.89, 371.2, [0.8205, 17.72, 32.85, 428.5], 21_378, 0.29556),
    ("PST_HFLD", 950.0, 0.52, 34.02, 325.30, 3744.0, [0.6089, 36.85, 338.1, 4022.0], 29_179, 0.28144),
    ("PST_HFHD", 950.0, 0.69, 34.13, 329.10, 3785.0, [0.8026, 36.96, 341.5, 4015.0], 23_037, 0.28513),
];

fn from_row(r: &(&str, f64, f64, f64, f64, f64, [f64; 4], u64, f64)) -> Preset {
    let (name, freq, density, leakage, clock, total, post, row_sites, toggles) = *r;
    Preset {
        profile: TargetProfile {
            name: name.to_string(),
            freq_mhz: freq,
            density,
            leakage,
            clock_tree_power: clock,
            total_power: total,
            n_key: if name.starts_with("AES") { 128 } else { 80 },
        },
        post: PostEco {
            density: post[0],
            leakage: post[1],
            clock_tree_power: post[2],
            total_power: post[3],
        },
        row_sites,
        toggles_per_cycle: toggles,
    }
}

pub fn all() -> Vec<Preset> {
    TABLE.iter().map(from_row).collect()
}

pub fn preset(name: &str) -> Result<Preset> {
    TABLE
        .iter()
        .find(|r| r.0.eq_ignore_ascii_case(name))
        .map(from_row)
        .ok_or_else(|| {
            Error::Invalid(format!(
                "unknown preset {name:?}; known presets: {}",
                NAMES.join(", ")
            ))
        })
}

impl Preset {
    pub fn name(&self) -> &str {
        &self.profile.name
    }

    pub fn params(&self) -> GenParams {
        GenParams::for_profile(&self.profile, self.row_sites)
    }

    pub fn activity(&self) -> Activity {
        Activity::Uniform {
            toggles_per_cycle: self.toggles_per_cycle,
            freq_mhz: self.profile.freq_mhz,
        }
    }

    /// Low-frequency variants; the trojan family is chosen by this and the cipher.
    pub fn is_high_frequency(&self) -> bool {
        self.profile.freq_mhz >= 500.0
    }

    /// Family name of the core-integration ring for this target, e.g. `AES_HF`.
    pub fn core_family(&self) -> String {
        self.name()[..6].to_string()
    }

    /// Power figures of the untouched target at its default activity.
    pub fn report(&self) -> PowerReport {
        let p = &self.profile;
        PowerReport::new(
            p.leakage,
            p.total_power - p.leakage - p.clock_tree_power,
            p.clock_tree_power,
        )
    }

    /// The trojan planned for this target: a ring designed under the 10 %
    /// budget, or the family's reference ring when no ring fits (returned
    /// with `false`).
    pub fn planned_sct(&self, lib: &CellLibrary) -> Result<(SctConfig, bool)> {
        let req = SctRequest::new(self.report(), self.profile.freq_mhz, self.profile.n_key);
        match design_sct(lib, &req) {
            Ok(cfg) => Ok((cfg, true)),
            Err(Error::NoFeasibleRo { .. }) => {
                let mut cfg = reference_config(lib, &self.core_family(), Flavor::Svt, req.margin)?;
                cfg.n_key = self.profile.n_key;
                cfg.validate()?;
                Ok((cfg, false))
            }
            Err(e) => Err(e),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<PlacedDesign> {
        generate_target(&self.profile, &self.params(), seed)
    }

    /// Generates the target and inserts its planned trojan.
    pub fn trojaned(&self, seed: u64) -> Result<Trojaned> {
        let clean = self.generate(seed)?;
        let (sct, _) = self.planned_sct(&clean.library)?;
        let (patch, design) =
            insert_sct(&clean, &sct, KeyFindMode::Oracle, &RouteParams::default())?;
        let chip = Chip::new(
            &design,
            &patch.sct,
            &patch.ring_cells,
            "sct_",
            &self.activity(),
        )?;
        Ok(Trojaned {
            clean,
            patch,
            design,
            chip,
        })
    }
}

/// A preset before and after insertion, with its simulation view.
#[derive(Debug, Clone)]
pub struct Trojaned {
    pub clean: PlacedDesign,
    pub patch: EcoPatch,
    pub design: PlacedDesign,
    pub chip: Chip,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_unknown_name() {
        assert_eq!(preset("pst_lfhd").unwrap().profile.n_key, 80);
        assert_eq!(all().len(), 8);
        let e = preset("DES_LF").unwrap_err().to_string();
        for n in NAMES {
            assert!(e.contains(n), "{e}");
        }
    }

    #[test]
    fn families() {
        assert_eq!(preset("AES_HFHD").unwrap().core_family(), "AES_HF");
        assert_eq!(preset("PST_LFLD").unwrap().core_family(), "PST_LF");
    }
}
