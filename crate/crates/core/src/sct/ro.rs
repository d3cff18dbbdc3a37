// SPDX-License-Identifier: Apache-2.0

//! Analytical ring-oscillator timing and power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{kind_name, CellLibrary, Flavor, RoFamily};
use crate::scalar::Scalar;

/// Branch selectors driven by one leaked symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selectors {
    pub s0: bool,
    pub s1: bool,
}

impl Selectors {
    pub const ALL: [Selectors; 4] = [
        Selectors {
            s0: false,
            s1: false,
        },
        Selectors {
            s0: true,
            s1: false,
        },
        Selectors {
            s0: false,
            s1: true,
        },
        Selectors { s0: true, s1: true },
    ];

    /// Symbol value `v = (S1 << 1) | S0`; frequency decreases with `v`.
    pub fn from_symbol(v: u8) -> Self {
        Selectors {
            s0: v & 1 == 1,
            s1: v & 2 == 2,
        }
    }

    pub fn symbol(self) -> u8 {
        (self.s1 as u8) << 1 | self.s0 as u8
    }

    /// Two-character label `S1 S0`, e.g. `"01"` for `S0 = 1, S1 = 0`.
    pub fn label(self) -> String {
        format!("{}{}", self.s1 as u8, self.s0 as u8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoDesign {
    /// Delay cells per branch, `N_D1..N_D4`.
    pub n_d: [u32; 4],
    pub n_i: u32,
    /// Ring family providing the fitted constants.
    pub family: String,
}

impl RoDesign {
    pub fn new(n_d: [u32; 4], n_i: u32, family: impl Into<String>) -> Result<Self> {
        let ro = RoDesign {
            n_d,
            n_i,
            family: family.into(),
        };
        ro.validate()?;
        Ok(ro)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_d[0] + self.n_i < 1 {
            return Err(Error::Invalid(
                "ring needs at least one delay or inverter cell".into(),
            ));
        }
        if self.n_i % 2 != 0 {
            return Err(Error::Invalid(format!(
                "N_i = {} leaves the loop non-inverting (NAND plus an even inverter count is required)",
                self.n_i
            )));
        }
        Ok(())
    }

    pub fn total_delay_cells(&self) -> u32 {
        self.n_d.iter().sum()
    }

    /// Short name in the `RO_DxIy` convention.
    pub fn name(&self) -> String {
        format!("RO_D{}I{}", self.total_delay_cells(), self.n_i)
    }

    /// Cells in the ring: NAND, inverters, delay cells, 7 AND + 3 OR muxing,
    /// two select inverters and the branch-4 select NAND.
    pub fn cell_count(&self) -> u32 {
        1 + self.n_i + self.total_delay_cells() + 10 + 2 + 1
    }

    pub fn family<'a>(&self, lib: &'a CellLibrary) -> Result<&'a RoFamily> {
        lib.ro_constants
            .get(&self.family)
            .ok_or_else(|| Error::Invalid(format!("unknown ring family {}", self.family)))
    }

    /// Static power of the ring cells in µW.
    pub fn leakage(&self, lib: &CellLibrary, flavor: Flavor) -> f64 {
        let l = |b: &str| {
            lib.kind(&kind_name(b, flavor))
                .map(|k| k.leakage)
                .unwrap_or(0.0)
        };
        l("NAND2_X1") * 2.0
            + l("INV_X1") * (self.n_i + 2) as f64
            + l("DLY_X1") * self.total_delay_cells() as f64
            + l("AND2_X1") * 7.0
            + l("OR2_X1") * 3.0
    }

    /// Area in µm².
    pub fn area(&self, lib: &CellLibrary, flavor: Flavor) -> f64 {
        let w = |b: &str| {
            lib.kind(&kind_name(b, flavor))
                .map(|k| k.width)
                .unwrap_or(0) as f64
        };
        let sites = w("NAND2_X1") * 2.0
            + w("INV_X1") * (self.n_i + 2) as f64
            + w("DLY_X1") * self.total_delay_cells() as f64
            + w("AND2_X1") * 7.0
            + w("OR2_X1") * 3.0;
        sites * lib.site_area()
    }
}

/// Delay cells on the active path for a selector setting.
pub fn active_delay_cells(ro: &RoDesign, sel: Selectors) -> u32 {
    let [d1, d2, d3, d4] = ro.n_d;
    match (sel.s0, sel.s1) {
        (false, false) => d1,
        (true, false) => d1 + d2,
        (false, true) => d1 + d3,
        (true, true) => d1 + d2 + d3 + d4,
    }
}

/// Loop delay `τ_chain` in ps, scaled by a delay multiplier.
pub fn chain_delay<S: Scalar>(fam: &RoFamily, ro: &RoDesign, sel: Selectors, delay_mult: S) -> S {
    let a = S::of(active_delay_cells(ro, sel) as f64);
    let tau = a * S::of(fam.tau_dcell)
        + S::of(ro.n_i as f64) * S::of(fam.tau_inv)
        + S::of(fam.tau_nand)
        + S::of(fam.tau_ctl);
    tau * delay_mult
}

/// Switching activity `F_sa = 1 / τ_chain` in MHz.
pub fn switching_activity<S: Scalar>(
    fam: &RoFamily,
    ro: &RoDesign,
    sel: Selectors,
    delay_mult: S,
) -> S {
    S::of(1e6) / chain_delay(fam, ro, sel, delay_mult)
}

/// Oscillation frequency `F_RO = F_sa / 2` in MHz.
pub fn ro_frequency<S: Scalar>(fam: &RoFamily, ro: &RoDesign, sel: Selectors, delay_mult: S) -> S {
    switching_activity(fam, ro, sel, delay_mult) / S::of(2.0)
}

/// Energy per `F_sa` event in fJ for the cells that toggle.
pub fn switched_energy<S: Scalar>(fam: &RoFamily, ro: &RoDesign, sel: Selectors) -> S {
    S::of(fam.e_fixed)
        + S::of(ro.n_i as f64) * S::of(fam.e_inv)
        + S::of(active_delay_cells(ro, sel) as f64) * S::of(fam.e_dcell)
}

/// Dynamic ring power in µW.
pub fn ro_dynamic_power<S: Scalar>(
    fam: &RoFamily,
    ro: &RoDesign,
    sel: Selectors,
    delay_mult: S,
) -> S {
    switching_activity(fam, ro, sel, delay_mult) * switched_energy(fam, ro, sel) * S::of(1e-3)
}

/// Process corner applied to a ring evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoCorner {
    pub delay: f64,
    pub leakage: f64,
}

impl RoCorner {
    pub const NOMINAL: RoCorner = RoCorner {
        delay: 1.0,
        leakage: 1.0,
    };
}

/// Dynamic plus static ring power in µW.
pub fn ro_power<S: Scalar>(
    lib: &CellLibrary,
    ro: &RoDesign,
    sel: Selectors,
    flavor: Flavor,
    corner: RoCorner,
) -> Result<S> {
    let fam = ro.family(lib)?;
    Ok(ro_dynamic_power(fam, ro, sel, S::of(corner.delay))
        + S::of(ro.leakage(lib, flavor) * corner.leakage))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_family() -> RoFamily {
        RoFamily {
            name: "unit".into(),
            group: "test".into(),
            reference_n_key: 8,
            reference_freq_mhz: 1.0,
            split: [1, 1, 2, 0],
            reference_n_i: 2,
            tau_dcell: 1.0,
            tau_inv: 1.0,
            tau_nand: 1.0,
            tau_ctl: 10.0,
            e_dcell: 1.0,
            e_inv: 1.0,
            e_fixed: 1.0,
        }
    }

    #[test]
    fn selector_rows() {
        let ro = RoDesign::new([3, 1, 2, 0], 2, "x").unwrap();
        assert_eq!(
            active_delay_cells(
                &ro,
                Selectors {
                    s0: false,
                    s1: false
                }
            ),
            3
        );
        assert_eq!(active_delay_cells(&ro, Selectors { s0: true, s1: true }), 6);
        assert_eq!(
            active_delay_cells(
                &ro,
                Selectors {
                    s0: false,
                    s1: true
                }
            ),
            5
        );
        assert_eq!(
            active_delay_cells(
                &ro,
                Selectors {
                    s0: true,
                    s1: false
                }
            ),
            4
        );
    }

    #[test]
    fn symbol_round_trip() {
        for v in 0..4u8 {
            assert_eq!(Selectors::from_symbol(v).symbol(), v);
        }
        assert_eq!(Selectors::from_symbol(1).label(), "01");
        assert_eq!(Selectors::from_symbol(2).label(), "10");
    }

    #[test]
    fn unit_constants_chain() {
        let fam = unit_family();
        let ro = RoDesign {
            n_d: [1, 0, 0, 0],
            n_i: 1,
            family: "unit".into(),
        };
        let sel = Selectors::from_symbol(0);
        assert_eq!(chain_delay(&fam, &ro, sel, 1.0f64), 13.0);
        assert_eq!(chain_delay(&fam, &ro, sel, 2.0f64), 26.0);
    }

    #[test]
    fn frequency_of_500ps_chain() {
        let mut fam = unit_family();
        fam.tau_ctl = 500.0 - 3.0;
        let ro = RoDesign {
            n_d: [1, 0, 0, 0],
            n_i: 1,
            family: "unit".into(),
        };
        let f: f64 = ro_frequency(&fam, &ro, Selectors::from_symbol(0), 1.0);
        assert!((f - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn odd_inverter_count_rejected() {
        assert!(RoDesign::new([2, 1, 2, 0], 3, "x").is_err());
        assert!(RoDesign::new([0, 1, 2, 0], 0, "x").is_err());
    }
}
