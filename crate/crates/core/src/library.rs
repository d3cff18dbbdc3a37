// SPDX-License-Identifier: Apache-2.0

//! Standard-cell library model and ring-oscillator constant families.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFunction {
    Inv,
    Buf,
    Nand2,
    Nor2,
    And2,
    Or2,
    Xor2,
    Aoi22,
    Mux2,
    Delay,
    Dff,
    ClkBuf,
    Filler,
}

impl CellFunction {
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            CellFunction::Inv | CellFunction::Buf | CellFunction::Delay | CellFunction::ClkBuf => {
                &["A"]
            }
            CellFunction::Nand2
            | CellFunction::Nor2
            | CellFunction::And2
            | CellFunction::Or2
            | CellFunction::Xor2 => &["A", "B"],
            CellFunction::Aoi22 => &["A1", "A2", "B1", "B2"],
            CellFunction::Mux2 => &["A", "B", "S"],
            CellFunction::Dff => &["D", "CK"],
            CellFunction::Filler => &[],
        }
    }

    pub fn output(self) -> Option<&'static str> {
        match self {
            CellFunction::Dff => Some("Q"),
            CellFunction::Filler => None,
            _ => Some("Y"),
        }
    }
}

/// Threshold-voltage flavor of a logic cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Hvt,
    Svt,
    Lvt,
}

impl Flavor {
    pub const ALL: [Flavor; 3] = [Flavor::Hvt, Flavor::Svt, Flavor::Lvt];

    pub fn delay_factor(self) -> f64 {
        match self {
            Flavor::Hvt => 1.3,
            Flavor::Svt => 1.0,
            Flavor::Lvt => 0.8,
        }
    }

    pub fn leakage_factor(self) -> f64 {
        match self {
            Flavor::Hvt => 0.12,
            Flavor::Svt => 1.0,
            Flavor::Lvt => 4.0,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Flavor::Hvt => "HVT",
            Flavor::Svt => "SVT",
            Flavor::Lvt => "LVT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKind {
    pub name: String,
    pub function: CellFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavor: Option<Flavor>,
    /// Footprint in placement sites.
    pub width: u32,
    /// µW at nominal conditions.
    pub leakage: f64,
    /// Input pin capacitance in fF.
    pub pin_caps: BTreeMap<String, f64>,
    /// ps; clock-to-Q for sequential cells.
    pub intrinsic: f64,
    /// ps per fF of output load.
    pub slope: f64,
    /// fJ per output transition.
    pub toggle_energy: f64,
    /// ps; zero for combinational cells.
    #[serde(default)]
    pub setup: f64,
    pub is_filler: bool,
    pub is_sequential: bool,
}

impl CellKind {
    pub fn output_pin(&self) -> Option<&'static str> {
        self.function.output()
    }

    pub fn pin_cap(&self, pin: &str) -> f64 {
        self.pin_caps.get(pin).copied().unwrap_or(0.0)
    }
}

/// Fitted timing and energy constants for one ring-oscillator implementation.
///
/// Delays in ps, energies in fJ per transition of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoFamily {
    pub name: String,
    pub group: String,
    pub reference_n_key: u32,
    pub reference_freq_mhz: f64,
    /// Delay-cell counts of the reference ring, branch by branch.
    pub split: [u32; 4],
    pub reference_n_i: u32,
    pub tau_dcell: f64,
    pub tau_inv: f64,
    pub tau_nand: f64,
    /// Lumped `7 AND + 3 OR` control delay.
    pub tau_ctl: f64,
    pub e_dcell: f64,
    pub e_inv: f64,
    /// NAND plus control gates.
    pub e_fixed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockTreeModel {
    pub buffer_kind: String,
    pub fanout: u32,
    /// Clock wiring capacitance attributed to each flip-flop clock pin, fF.
    pub wire_cap_per_ff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLibrary {
    pub name: String,
    pub vdd: f64,
    pub site_width_um: f64,
    pub row_height_um: f64,
    /// Signal wire capacitance, fF/µm.
    pub wire_cap_per_um: f64,
    pub clock_tree: ClockTreeModel,
    pub kinds: Vec<CellKind>,
    pub ro_constants: BTreeMap<String, RoFamily>,
}

struct Base {
    name: &'static str,
    function: CellFunction,
    width: u32,
    caps: &'static [(&'static str, f64)],
    intrinsic: f64,
    slope: f64,
    energy: f64,
    leakage: f64,
    setup: f64,
}

const BASES: &[Base] = &[
    Base {
        name: "INV_X1",
        function: CellFunction::Inv,
        width: 3,
        caps: &[("A", 1.4)],
        intrinsic: 10.0,
        slope: 5.0,
        energy: 0.6,
        leakage: 0.016,
        setup: 0.0,
    },
    Base {
        name: "INV_X2",
        function: CellFunction::Inv,
        width: 4,
        caps: &[("A", 2.6)],
        intrinsic: 9.0,
        slope: 2.6,
        energy: 1.0,
        leakage: 0.022,
        setup: 0.0,
    },
    Base {
        name: "BUF_X1",
        function: CellFunction::Buf,
        width: 4,
        caps: &[("A", 1.3)],
        intrinsic: 22.0,
        slope: 4.6,
        energy: 1.1,
        leakage: 0.020,
        setup: 0.0,
    },
    Base {
        name: "BUF_X4",
        function: CellFunction::Buf,
        width: 7,
        caps: &[("A", 3.2)],
        intrinsic: 24.0,
        slope: 1.3,
        energy: 2.8,
        leakage: 0.040,
        setup: 0.0,
    },
    Base {
        name: "NAND2_X1",
        function: CellFunction::Nand2,
        width: 4,
        caps: &[("A", 1.5), ("B", 1.5)],
        intrinsic: 13.0,
        slope: 6.0,
        energy: 0.9,
        leakage: 0.022,
        setup: 0.0,
    },
    Base {
        name: "NOR2_X1",
        function: CellFunction::Nor2,
        width: 4,
        caps: &[("A", 1.6), ("B", 1.6)],
        intrinsic: 17.0,
        slope: 7.5,
        energy: 1.0,
        leakage: 0.022,
        setup: 0.0,
    },
    Base {
        name: "AND2_X1",
        function: CellFunction::And2,
        width: 5,
        caps: &[("A", 1.4), ("B", 1.4)],
        intrinsic: 25.0,
        slope: 4.8,
        energy: 1.4,
        leakage: 0.028,
        setup: 0.0,
    },
    Base {
        name: "OR2_X1",
        function: CellFunction::Or2,
        width: 5,
        caps: &[("A", 1.4), ("B", 1.4)],
        intrinsic: 28.0,
        slope: 5.0,
        energy: 1.5,
        leakage: 0.028,
        setup: 0.0,
    },
    Base {
        name: "XOR2_X1",
        function: CellFunction::Xor2,
        width: 7,
        caps: &[("A", 2.5), ("B", 2.5)],
        intrinsic: 30.0,
        slope: 6.5,
        energy: 2.6,
        leakage: 0.040,
        setup: 0.0,
    },
    Base {
        name: "AOI22_X1",
        function: CellFunction::Aoi22,
        width: 6,
        caps: &[("A1", 1.7), ("A2", 1.7), ("B1", 1.7), ("B2", 1.7)],
        intrinsic: 22.0,
        slope: 8.0,
        energy: 1.5,
        leakage: 0.032,
        setup: 0.0,
    },
    Base {
        name: "MUX2_X1",
        function: CellFunction::Mux2,
        width: 7,
        caps: &[("A", 1.6), ("B", 1.6), ("S", 2.4)],
        intrinsic: 32.0,
        slope: 5.5,
        energy: 2.4,
        leakage: 0.040,
        setup: 0.0,
    },
    Base {
        name: "DLY_X1",
        function: CellFunction::Delay,
        width: 6,
        caps: &[("A", 1.2)],
        intrinsic: 110.0,
        slope: 6.0,
        energy: 1.8,
        leakage: 0.030,
        setup: 0.0,
    },
    Base {
        name: "DFF_X1",
        function: CellFunction::Dff,
        width: 16,
        caps: &[("D", 1.3), ("CK", 0.9)],
        intrinsic: 65.0,
        slope: 5.0,
        energy: 5.5,
        leakage: 0.100,
        setup: 28.0,
    },
];

const FILLER_WIDTHS: [u32; 7] = [64, 32, 16, 8, 4, 2, 1];

pub fn kind_name(base: &str, flavor: Flavor) -> String {
    format!("{base}_{}", flavor.suffix())
}

impl CellLibrary {
    /// The built-in 65 nm-class library with frozen ring-oscillator constants.
    pub fn default_65nm() -> Self {
        let mut kinds = Vec::new();
        for flavor in Flavor::ALL {
            for b in BASES {
                kinds.push(CellKind {
                    name: kind_name(b.name, flavor),
                    function: b.function,
                    flavor: Some(flavor),
                    width: b.width,
                    leakage: b.leakage * flavor.leakage_factor(),
                    pin_caps: b.caps.iter().map(|(p, c)| (p.to_string(), *c)).collect(),
                    intrinsic: b.intrinsic * flavor.delay_factor(),
                    slope: b.slope * flavor.delay_factor(),
                    toggle_energy: b.energy,
                    setup: b.setup * flavor.delay_factor(),
                    is_filler: false,
                    is_sequential: b.function == CellFunction::Dff,
                });
            }
        }
        kinds.push(CellKind {
            name: "CLKBUF_X4".into(),
            function: CellFunction::ClkBuf,
            flavor: None,
            width: 8,
            leakage: 0.06,
            pin_caps: [("A".to_string(), 2.5)].into_iter().collect(),
            intrinsic: 30.0,
            slope: 1.5,
            toggle_energy: 3.0,
            setup: 0.0,
            is_filler: false,
            is_sequential: false,
        });
        for w in FILLER_WIDTHS {
            kinds.push(CellKind {
                name: format!("FILL{w}"),
                function: CellFunction::Filler,
                flavor: None,
                width: w,
                leakage: 0.0,
                pin_caps: BTreeMap::new(),
                intrinsic: 0.0,
                slope: 0.0,
                toggle_energy: 0.0,
                setup: 0.0,
                is_filler: true,
                is_sequential: false,
            });
        }
        for k in &mut kinds {
            k.leakage = crate::json::q6(k.leakage);
            k.intrinsic = crate::json::q6(k.intrinsic);
            k.slope = crate::json::q6(k.slope);
            k.setup = crate::json::q6(k.setup);
        }
        CellLibrary {
            name: "generic65".into(),
            vdd: 1.0,
            site_width_um: 0.2,
            row_height_um: 1.8,
            wire_cap_per_um: 0.2,
            clock_tree: ClockTreeModel {
                buffer_kind: "CLKBUF_X4".into(),
                fanout: 20,
                wire_cap_per_ff: 0.65,
            },
            kinds,
            ro_constants: crate::sct::frozen::families()
                .into_iter()
                .map(|f| (f.name.clone(), f))
                .collect(),
        }
    }

    pub fn kind(&self, name: &str) -> Option<&CellKind> {
        self.kinds.iter().find(|k| k.name == name)
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.kinds
            .iter()
            .enumerate()
            .map(|(i, k)| (k.name.as_str(), i))
            .collect()
    }

    pub fn fillers_desc(&self) -> Vec<&CellKind> {
        let mut f: Vec<&CellKind> = self.kinds.iter().filter(|k| k.is_filler).collect();
        f.sort_by(|a, b| b.width.cmp(&a.width).then(a.name.cmp(&b.name)));
        f
    }

    pub fn site_area(&self) -> f64 {
        self.site_width_um * self.row_height_um
    }

    pub fn area(&self, kind: &CellKind) -> f64 {
        kind.width as f64 * self.site_area()
    }

    /// Ratio of the NAND delay to the inverter delay and of the lumped
    /// `7 AND + 3 OR` control delay to the inverter delay, taken from the
    /// SVT intrinsic delays.
    pub fn ro_delay_ratios(&self) -> (f64, f64) {
        let d = |n: &str| {
            self.kind(&kind_name(n, Flavor::Svt))
                .map(|k| k.intrinsic)
                .unwrap_or(1.0)
        };
        let inv = d("INV_X1");
        (
            d("NAND2_X1") / inv,
            (7.0 * d("AND2_X1") + 3.0 * d("OR2_X1")) / inv,
        )
    }

    /// Same split for toggle energies.
    pub fn ro_energy_ratio(&self) -> f64 {
        let e = |n: &str| {
            self.kind(&kind_name(n, Flavor::Svt))
                .map(|k| k.toggle_energy)
                .unwrap_or(1.0)
        };
        (e("NAND2_X1") + 7.0 * e("AND2_X1") + 3.0 * e("OR2_X1")) / e("INV_X1")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for k in &self.kinds {
            if !seen.insert(k.name.as_str()) {
                return Err(Error::InvalidDesign(format!(
                    "duplicate cell kind {}",
                    k.name
                )));
            }
            if k.width == 0 {
                return Err(Error::InvalidDesign(format!(
                    "cell kind {} has zero area",
                    k.name
                )));
            }
            if k.leakage < 0.0 {
                return Err(Error::InvalidDesign(format!(
                    "cell kind {} has negative leakage",
                    k.name
                )));
            }
            if k.is_filler && (!k.pin_caps.is_empty() || k.intrinsic != 0.0) {
                return Err(Error::InvalidDesign(format!(
                    "filler {} has pins or delay",
                    k.name
                )));
            }
        }
        for f in self.ro_constants.values() {
            let taus = [f.tau_dcell, f.tau_inv, f.tau_nand, f.tau_ctl];
            if taus.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::InvalidDesign(format!(
                    "ring family {} has non-positive delay",
                    f.name
                )));
            }
        }
        Ok(())
    }

    /// The ring family whose reference target is closest to (`n_key`, `freq_mhz`)
    /// within `group`.
    pub fn ro_family_for(&self, group: &str, n_key: u32, freq_mhz: f64) -> Option<&RoFamily> {
        self.ro_constants
            .values()
            .filter(|f| f.group == group)
            .min_by(|a, b| {
                let score = |f: &RoFamily| {
                    let key_mismatch = if f.reference_n_key == n_key {
                        0.0
                    } else {
                        100.0
                    };
                    key_mismatch + (f.reference_freq_mhz / freq_mhz.max(1e-9)).ln().abs()
                };
                score(a).total_cmp(&score(b)).then(a.name.cmp(&b.name))
            })
    }
}
