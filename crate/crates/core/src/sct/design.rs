// SPDX-License-Identifier: Apache-2.0

//! Ring sizing against power and area budgets, and controller clock division.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{CellLibrary, Flavor, RoFamily};
use crate::power::PowerReport;
use crate::sct::netlist::build_sct_netlist;
use crate::sct::ro::{self, RoCorner, RoDesign, Selectors};
use crate::sta::{analyze_timing, StaOptions};

/// Trojan blueprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SctConfig {
    pub ro: RoDesign,
    /// Bits leaked per step.
    pub n_leak: u32,
    pub n_key: u32,
    /// Power of two; 1 bypasses the divider.
    pub divider_ratio: u32,
    /// Threshold flavor of every trojan cell.
    pub flavor: Flavor,
    pub family_group: String,
    /// Design net used as trigger; resolved at insertion when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_net: Option<String>,
    /// Key register instance ids in leak order; resolved at insertion when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub key_register_order: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetCheck>,
}

impl SctConfig {
    pub fn validate(&self) -> Result<()> {
        self.ro.validate()?;
        if self.n_leak != 2 {
            return Err(Error::Invalid(format!(
                "n_leak = {} is unsupported; the four-branch ring encodes two bits per step",
                self.n_leak
            )));
        }
        if self.n_key == 0 || self.n_key % self.n_leak != 0 {
            return Err(Error::Invalid(format!(
                "n_key = {} is not a positive multiple of n_leak = {}",
                self.n_key, self.n_leak
            )));
        }
        if !self.divider_ratio.is_power_of_two() {
            return Err(Error::Invalid(format!(
                "divider ratio {} is not a power of two",
                self.divider_ratio
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> u32 {
        self.n_key / self.n_leak
    }

    /// Ring power per symbol 0..3 at a corner, µW.
    pub fn step_powers(&self, lib: &CellLibrary, corner: RoCorner) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for (v, o) in out.iter_mut().enumerate() {
            *o = ro::ro_power(
                lib,
                &self.ro,
                Selectors::from_symbol(v as u8),
                self.flavor,
                corner,
            )?;
        }
        Ok(out)
    }

    pub fn step_frequencies(&self, lib: &CellLibrary) -> Result<[f64; 4]> {
        let fam = self.ro.family(lib)?;
        let mut out = [0.0; 4];
        for (v, o) in out.iter_mut().enumerate() {
            *o = ro::ro_frequency(fam, &self.ro, Selectors::from_symbol(v as u8), 1.0);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// µW.
    pub power_cap: f64,
    /// µm²; unbounded is written as null.
    #[serde(with = "unbounded")]
    pub area_cap: f64,
    /// µA.
    pub step_separation_min: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// How a blueprint measures up against its budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub budget: Budget,
    pub max_step_power: f64,
    pub min_separation: f64,
    pub area: f64,
    pub cells: usize,
}

impl BudgetCheck {
    pub fn ok(&self) -> bool {
        self.max_step_power <= self.budget.power_cap
            && self.min_separation >= self.budget.step_separation_min
            && self.area <= self.budget.area_cap
    }
}

/// `fraction · (static + clock tree)`, µW.
pub fn power_budget(target: &PowerReport, fraction: f64) -> f64 {
    fraction * (target.static_ + target.clock_tree)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SctRequest {
    pub report: PowerReport,
    pub freq_mhz: f64,
    pub n_key: u32,
    pub n_leak: u32,
    pub fraction: f64,
    /// Other leakage on the same supply, µW; widens the budget.
    pub competing_leakage: f64,
    /// Ring family group to size from.
    pub group: String,
    pub flavor: Flavor,
    /// µm²; unbounded when absent.
    pub area_cap: Option<f64>,
    pub step_separation_min: f64,
    /// Timing margin for the controller check, ps.
    pub margin: f64,
}

impl SctRequest {
    pub fn new(report: PowerReport, freq_mhz: f64, n_key: u32) -> Self {
        SctRequest {
            report,
            freq_mhz,
            n_key,
            n_leak: 2,
            fraction: 0.10,
            competing_leakage: 0.0,
            group: crate::sct::calibrate::CORE_GROUP.into(),
            flavor: Flavor::Svt,
            area_cap: None,
            step_separation_min: 2.0,
            margin: 20.0,
        }
    }

    pub fn budget(&self, lib: &CellLibrary) -> Budget {
        let mut r = self.report;
        r.static_ += self.competing_leakage;
        Budget {
            power_cap: power_budget(&r, self.fraction),
            area_cap: self.area_cap.unwrap_or(f64::INFINITY),
            step_separation_min: self.step_separation_min * lib.vdd,
        }
    }
}

/// Branch split of `total` delay cells following the family's reference
/// proportions, adjusted so that every symbol has its own frequency.
pub fn split_like(fam: &RoFamily, total: u32) -> Option<[u32; 4]> {
    let d_ref: u32 = fam.split.iter().sum();
    if d_ref == 0 || total < 3 {
        return None;
    }
    let mut n = [0u32; 4];
    for i in 0..3 {
        n[i] = (fam.split[i] as f64 * total as f64 / d_ref as f64).round() as u32;
    }
    n[1] = n[1].max(1);
    n[2] = n[2].max(n[1] + 1);
    loop {
        let used = n[0] + n[1] + n[2];
        if used <= total {
            n[3] = total - used;
            return Some(n);
        }
        if n[0] > 0 {
            n[0] -= 1;
        } else if n[2] > n[1] + 1 {
            n[2] -= 1;
        } else {
            return None;
        }
    }
}

/// Every split of `total` with `N_D2 ≥ 1` and `N_D3 > N_D2`, in
/// lexicographic order.
pub fn ordered_splits(total: u32) -> Vec<[u32; 4]> {
    let mut out = Vec::new();
    for n1 in 0..=total {
        for n2 in 1..=total - n1 {
            for n3 in n2 + 1..=total - n1 - n2 {
                out.push([n1, n2, n3, total - n1 - n2 - n3]);
            }
        }
    }
    out
}

fn strictly_decreasing(v: &[f64; 4]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn min_gap(v: &[f64; 4]) -> f64 {
    v.windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min)
}

/// Smallest power-of-two division whose controller paths meet timing.
pub fn divider_ratio_for(
    lib: &CellLibrary,
    base: &SctConfig,
    freq_mhz: f64,
    margin: f64,
) -> Result<u32> {
    let period = 1e6 / freq_mhz;
    for k in 0..=10 {
        let mut cfg = base.clone();
        cfg.divider_ratio = 1 << k;
        if controller_meets_timing(lib, &cfg, period, margin)? {
            return Ok(cfg.divider_ratio);
        }
    }
    Err(Error::NoFeasibleRo {
        constraint: "timing",
        detail: format!("controller misses {period:.1} ps even with a 1024x divided clock"),
    })
}

/// Controller and divider slack at `period` with the ring disabled.
pub fn controller_meets_timing(
    lib: &CellLibrary,
    cfg: &SctConfig,
    period: f64,
    margin: f64,
) -> Result<bool> {
    let frag = build_sct_netlist(cfg, cfg.flavor);
    let nl = frag.to_netlist(lib);
    let ring = frag.ring_cells();
    let disabled: HashSet<usize> = nl
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| ring.contains(c.origin.as_str()))
        .map(|(i, _)| i)
        .collect();
    let mut opts = StaOptions::new(period, margin);
    opts.disabled = disabled;
    let rep = analyze_timing::<f64>(&nl, lib, &opts)?;
    Ok(rep.min_slack().map_or(true, |s| s >= 0.0))
}

/// Evaluates a blueprint against a budget.
pub fn check_budget(lib: &CellLibrary, cfg: &SctConfig, budget: Budget) -> Result<BudgetCheck> {
    let p = cfg.step_powers(lib, RoCorner::NOMINAL)?;
    let stats = build_sct_netlist(cfg, cfg.flavor).stats(lib);
    Ok(BudgetCheck {
        budget,
        max_step_power: p[0],
        min_separation: min_gap(&p) / lib.vdd,
        area: stats.area,
        cells: stats.cells,
    })
}

/// Exhaustive search for the smallest ring meeting the budget.
pub fn design_sct(lib: &CellLibrary, req: &SctRequest) -> Result<SctConfig> {
    if !(req.fraction > 0.0 && req.fraction <= 1.0) {
        return Err(Error::Invalid(format!(
            "budget fraction {} is outside (0, 1]",
            req.fraction
        )));
    }
    let fam = lib
        .ro_family_for(&req.group, req.n_key, req.freq_mhz)
        .ok_or_else(|| Error::Invalid(format!("no ring family in group {:?}", req.group)))?;
    let budget = req.budget(lib);
    let probe = SctConfig {
        ro: RoDesign::new([0, 1, 2, 0], 2, fam.name.clone())?,
        n_leak: req.n_leak,
        n_key: req.n_key,
        divider_ratio: 1,
        flavor: req.flavor,
        family_group: req.group.clone(),
        trigger_net: None,
        key_register_order: Vec::new(),
        budget: None,
    };
    probe.validate()?;
    // Everything but the ring's own cells.
    let base_area =
        build_sct_netlist(&probe, req.flavor).stats(lib).area - probe.ro.area(lib, req.flavor);

    // Stage reached by the best candidate and the closest miss at that stage.
    const STAGES: [&str; 4] = ["power", "step separation", "frequency ordering", "area"];
    let mut reached = 0usize;
    let mut closest = f64::INFINITY;
    let mut pairs: Vec<(u32, u32)> = (2..=64u32)
        .flat_map(|d| (2..=32u32).step_by(2).map(move |i| (d, i)))
        .collect();
    pairs.sort_by_key(|&(d, i)| (d + i, i, d));
    let mut best: Option<RoDesign> = None;
    // Reference proportions first, then any split that orders the symbols.
    'phases: for exhaustive in [false, true] {
        for &(total, n_i) in &pairs {
            let mut probe_ro = RoDesign::new([total, 0, 0, 0], n_i, fam.name.clone())?;
            let leak = probe_ro.leakage(lib, req.flavor);
            let area = base_area + probe_ro.area(lib, req.flavor);
            // Ring power and frequency by number of active delay cells.
            let mut p_of = Vec::with_capacity(total as usize + 1);
            let mut f_of = Vec::with_capacity(total as usize + 1);
            for a in 0..=total {
                probe_ro.n_d = [a, 0, 0, total - a];
                let s = Selectors::from_symbol(0);
                p_of.push(ro::ro_dynamic_power(fam, &probe_ro, s, 1.0) + leak);
                f_of.push(ro::ro_frequency(fam, &probe_ro, s, 1.0));
            }
            let splits: Vec<[u32; 4]> = if exhaustive {
                ordered_splits(total)
            } else {
                split_like(fam, total).into_iter().collect()
            };
            for split in splits {
                let act = [split[0], split[0] + split[1], split[0] + split[2], total];
                let p = act.map(|a| p_of[a as usize]);
                let f = act.map(|a| f_of[a as usize]);
                let misses = [
                    p[0] / budget.power_cap - 1.0,
                    budget.step_separation_min / (min_gap(&p) / lib.vdd).max(1e-12) - 1.0,
                    if strictly_decreasing(&f) { -1.0 } else { 1.0 },
                    area / budget.area_cap - 1.0,
                ];
                let stage = misses.iter().position(|&m| m > 0.0).unwrap_or(STAGES.len());
                if stage > reached {
                    reached = stage;
                    closest = f64::INFINITY;
                }
                if stage == reached && stage < STAGES.len() {
                    closest = closest.min(misses[stage]);
                }
                if stage == STAGES.len() {
                    best = Some(RoDesign::new(split, n_i, fam.name.clone())?);
                    break 'phases;
                }
            }
        }
    }
    let Some(ro) = best else {
        let constraint = STAGES[reached.min(STAGES.len() - 1)];
        return Err(Error::NoFeasibleRo {
            constraint,
            detail: format!(
                "family {}, power cap {:.3} µW, closest candidate misses by {:.1} %",
                fam.name,
                budget.power_cap,
                100.0 * closest
            ),
        });
    };
    let mut cfg = probe;
    cfg.ro = ro;
    cfg.divider_ratio = divider_ratio_for(lib, &cfg, req.freq_mhz, req.margin)?;
    cfg.budget = Some(check_budget(lib, &cfg, budget)?);
    Ok(cfg)
}

/// The family's own reference ring, used as is.
pub fn reference_config(
    lib: &CellLibrary,
    family: &str,
    flavor: Flavor,
    margin: f64,
) -> Result<SctConfig> {
    let fam = lib
        .ro_constants
        .get(family)
        .ok_or_else(|| Error::Invalid(format!("unknown ring family {family}")))?;
    let mut cfg = SctConfig {
        ro: RoDesign::new(fam.split, fam.reference_n_i, fam.name.clone())?,
        n_leak: 2,
        n_key: fam.reference_n_key,
        divider_ratio: 1,
        flavor,
        family_group: fam.group.clone(),
        trigger_net: None,
        key_register_order: Vec::new(),
        budget: None,
    };
    cfg.validate()?;
    cfg.divider_ratio = divider_ratio_for(lib, &cfg, fam.reference_freq_mhz, margin)?;
    Ok(cfg)
}
