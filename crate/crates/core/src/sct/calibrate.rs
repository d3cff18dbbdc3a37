// SPDX-License-Identifier: Apache-2.0

//! Least-squares fit of ring-oscillator constants and branch splits to
//! measured (power, frequency) anchors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{CellLibrary, Flavor, RoFamily};
use crate::sct::ro::{self, RoDesign, Selectors};

/// One measured operating point of a named ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    /// Target class, e.g. `AES_HF`.
    pub target: String,
    /// Ring name in the `RO_DxIy` convention.
    pub ro: String,
    /// Symbol label `00`..`11`.
    pub selector: String,
    pub power_uw: f64,
    /// Oscillation frequency `F_RO`.
    pub freq_mhz: f64,
}

const fn a(target: &'static str, ro: &'static str, s: &'static str, p: f64, f: f64) -> RawAnchor {
    RawAnchor(target, ro, s, p, f)
}

struct RawAnchor(&'static str, &'static str, &'static str, f64, f64);

const CORE: &[RawAnchor] = &[
    a("AES_LF", "RO_D6I10", "00", 19.0, 65.0),
    a("AES_LF", "RO_D6I10", "01", 17.0, 45.0),
    a("AES_LF", "RO_D6I10", "10", 15.0, 34.0),
    a("AES_LF", "RO_D6I10", "11", 13.0, 20.0),
    a("AES_HF", "RO_D10I10", "00", 198.0, 551.0),
    a("AES_HF", "RO_D10I10", "01", 182.0, 483.0),
    a("AES_HF", "RO_D10I10", "10", 161.0, 390.0),
    a("AES_HF", "RO_D10I10", "11", 140.0, 300.0),
    a("PST_LF", "RO_D6I4", "00", 16.0, 112.0),
    a("PST_LF", "RO_D6I4", "01", 11.0, 58.0),
    a("PST_LF", "RO_D6I4", "10", 10.0, 39.0),
    a("PST_LF", "RO_D6I4", "11", 8.0, 20.0),
    a("PST_HF", "RO_D8I10", "00", 42.0, 79.0),
    a("PST_HF", "RO_D8I10", "01", 36.0, 61.0),
    a("PST_HF", "RO_D8I10", "10", 31.0, 46.0),
    a("PST_HF", "RO_D8I10", "11", 26.0, 31.0),
];

const TESTCHIP: &[RawAnchor] = &[
    a("AES_LFHD", "RO_D8I14", "00", 32.0, 90.0),
    a("AES_LFHD", "RO_D8I14", "01", 27.0, 61.0),
    a("AES_LFHD", "RO_D8I14", "10", 23.0, 46.0),
    a("AES_LFHD", "RO_D8I14", "11", 20.0, 31.0),
    a("AES_HFHD", "RO_D12I14", "00", 249.0, 551.0),
    a("AES_HFHD", "RO_D12I14", "01", 227.0, 483.0),
    a("AES_HFHD", "RO_D12I14", "10", 198.0, 390.0),
    a("AES_HFHD", "RO_D12I14", "11", 169.0, 300.0),
    a("PST_LFHD", "RO_D8I6", "00", 22.0, 169.0),
    a("PST_LFHD", "RO_D8I6", "01", 19.0, 90.0),
    a("PST_LFHD", "RO_D8I6", "10", 16.0, 46.0),
    a("PST_LFHD", "RO_D8I6", "11", 13.0, 21.0),
    a("PST_HFHD", "RO_D10I10", "00", 30.0, 90.0),
    a("PST_HFHD", "RO_D10I10", "01", 24.0, 60.0),
    a("PST_HFHD", "RO_D10I10", "10", 20.0, 37.0),
    a("PST_HFHD", "RO_D10I10", "11", 17.0, 19.0),
];

fn to_anchors(raw: &[RawAnchor]) -> Vec<Anchor> {
    raw.iter()
        .map(|r| Anchor {
            target: r.0.into(),
            ro: r.1.into(),
            selector: r.2.into(),
            power_uw: r.3,
            freq_mhz: r.4,
        })
        .collect()
}

/// Measured points of the rings designed for the stand-alone cores.
pub fn core_anchors() -> Vec<Anchor> {
    to_anchors(CORE)
}

/// Measured points of the rings adjusted for the shared test chip.
pub fn testchip_anchors() -> Vec<Anchor> {
    to_anchors(TESTCHIP)
}

pub const CORE_GROUP: &str = "core";
pub const TESTCHIP_GROUP: &str = "testchip";

/// Key width and clock of a target class such as `AES_HF` or `PST_LFHD`.
pub fn class_reference(target: &str) -> (u32, f64) {
    let aes = target.starts_with("AES");
    let hf = target.contains("_HF");
    match (aes, hf) {
        (true, false) => (128, 100.0),
        (true, true) => (128, 1000.0),
        (false, false) => (80, 95.0),
        (false, true) => (80, 950.0),
    }
}

/// Parses `RO_D<total>I<inverters>`.
pub fn parse_ro_name(name: &str) -> Result<(u32, u32)> {
    let bad = || Error::Invalid(format!("ring name {name:?} is not of the form RO_D<n>I<m>"));
    let rest = name.strip_prefix("RO_D").ok_or_else(bad)?;
    let (d, i) = rest.split_once('I').ok_or_else(bad)?;
    Ok((d.parse().map_err(|_| bad())?, i.parse().map_err(|_| bad())?))
}

fn parse_selector(label: &str) -> Result<Selectors> {
    match label {
        "00" => Ok(Selectors::from_symbol(0)),
        "01" => Ok(Selectors::from_symbol(1)),
        "10" => Ok(Selectors::from_symbol(2)),
        "11" => Ok(Selectors::from_symbol(3)),
        _ => Err(Error::Invalid(format!(
            "selector {label:?} is not a two-bit label"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResidual {
    pub target: String,
    pub selector: String,
    pub power_uw: f64,
    pub model_power_uw: f64,
    pub freq_mhz: f64,
    pub model_freq_mhz: f64,
    /// Relative errors, model / measured − 1.
    pub power_residual: f64,
    pub freq_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub group: String,
    pub families: Vec<RoFamily>,
    pub residuals: Vec<AnchorResidual>,
    pub max_abs_residual: f64,
    pub tolerance: f64,
}

/// Weighted least squares of `c0 + a·c1 ≈ y` minimising relative error.
fn fit_line(a: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let (mut s00, mut s01, mut s11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ai, &yi) in a.iter().zip(y) {
        let w = 1.0 / (yi * yi);
        s00 += w;
        s01 += w * ai;
        s11 += w * ai * ai;
        r0 += w * yi;
        r1 += w * ai * yi;
    }
    let det = s00 * s11 - s01 * s01;
    if det.abs() < 1e-12 * s00 * s11 {
        return None;
    }
    Some(((r0 * s11 - r1 * s01) / det, (s00 * r1 - s01 * r0) / det))
}

/// All integer splits with `N_D2 ≥ 1`, `N_D3 > N_D2`, summing to `total`.
pub fn candidate_splits(total: u32) -> Vec<[u32; 4]> {
    let mut out = Vec::new();
    for n1 in 0..=total {
        for n2 in 1..=total {
            for n3 in (n2 + 1)..=total {
                if n1 + n2 + n3 <= total {
                    out.push([n1, n2, n3, total - n1 - n2 - n3]);
                }
            }
        }
    }
    out
}

struct Fit {
    family: RoFamily,
    residuals: Vec<AnchorResidual>,
    worst: f64,
}

fn fit_target(
    lib: &CellLibrary,
    group: &str,
    target: &str,
    rows: &[&Anchor],
    tolerance: f64,
) -> Result<Fit> {
    let ro_name = &rows[0].ro;
    if rows.iter().any(|r| &r.ro != ro_name) {
        return Err(Error::CalibrationInfeasible(format!(
            "{target}: anchors name more than one ring"
        )));
    }
    let (total, n_i) = parse_ro_name(ro_name)?;
    let sels: Vec<Selectors> = rows
        .iter()
        .map(|r| parse_selector(&r.selector))
        .collect::<Result<_>>()?;
    let mut distinct = sels.iter().map(|s| s.symbol()).collect::<Vec<_>>();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::CalibrationInfeasible(format!(
            "{target}: underdetermined, {} distinct selector settings (need 4)",
            distinct.len()
        )));
    }
    let (rho_nand, rho_ctl) = lib.ro_delay_ratios();
    let rho_e = lib.ro_energy_ratio();
    let (n_key, freq) = class_reference(target);
    let tau_obs: Vec<f64> = rows.iter().map(|r| 1e6 / (2.0 * r.freq_mhz)).collect();

    let mut best: Option<Fit> = None;
    for split in candidate_splits(total) {
        let probe = RoDesign {
            n_d: split,
            n_i,
            family: target.to_string(),
        };
        let act: Vec<f64> = sels
            .iter()
            .map(|&s| ro::active_delay_cells(&probe, s) as f64)
            .collect();
        let Some((t0, tau_d)) = fit_line(&act, &tau_obs) else {
            continue;
        };
        if !(t0 > 0.0 && tau_d > 0.0) {
            continue;
        }
        let leak = probe.leakage(lib, Flavor::Svt);
        let mut e_obs = Vec::with_capacity(rows.len());
        let mut usable = true;
        for r in rows {
            let dyn_p = r.power_uw - leak;
            if dyn_p <= 0.0 {
                usable = false;
                break;
            }
            e_obs.push(dyn_p / (2.0 * r.freq_mhz * 1e-3));
        }
        if !usable {
            continue;
        }
        let Some((e0, e_d)) = fit_line(&act, &e_obs) else {
            continue;
        };
        if !(e0 > 0.0 && e_d > 0.0) {
            continue;
        }
        let tau_inv = t0 / (n_i as f64 + rho_nand + rho_ctl);
        let e_inv = e0 / (n_i as f64 + rho_e);
        let family = RoFamily {
            name: target.to_string(),
            group: group.to_string(),
            reference_n_key: n_key,
            reference_freq_mhz: freq,
            split,
            reference_n_i: n_i,
            tau_dcell: tau_d,
            tau_inv,
            tau_nand: rho_nand * tau_inv,
            tau_ctl: rho_ctl * tau_inv,
            e_dcell: e_d,
            e_inv,
            e_fixed: rho_e * e_inv,
        };
        let mut residuals = Vec::with_capacity(rows.len());
        let mut worst: f64 = 0.0;
        for (r, &sel) in rows.iter().zip(&sels) {
            let mf: f64 = ro::ro_frequency(&family, &probe, sel, 1.0);
            let mp: f64 = ro::ro_dynamic_power(&family, &probe, sel, 1.0) + leak;
            let rf = mf / r.freq_mhz - 1.0;
            let rp = mp / r.power_uw - 1.0;
            worst = worst.max(rf.abs()).max(rp.abs());
            residuals.push(AnchorResidual {
                target: target.to_string(),
                selector: r.selector.clone(),
                power_uw: r.power_uw,
                model_power_uw: mp,
                freq_mhz: r.freq_mhz,
                model_freq_mhz: mf,
                power_residual: rp,
                freq_residual: rf,
            });
        }
        if best.as_ref().map_or(true, |b| worst < b.worst - 1e-12) {
            best = Some(Fit {
                family,
                residuals,
                worst,
            });
        }
    }
    let fit = best.ok_or_else(|| {
        Error::CalibrationInfeasible(format!(
            "{target}: no branch split admits positive constants"
        ))
    })?;
    if fit.worst > tolerance {
        let detail: Vec<String> = fit
            .residuals
            .iter()
            .map(|r| {
                format!(
                    "{}/S={}: power {:+.1}%, freq {:+.1}%",
                    r.target,
                    r.selector,
                    100.0 * r.power_residual,
                    100.0 * r.freq_residual
                )
            })
            .collect();
        return Err(Error::CalibrationInfeasible(format!(
            "residual above {:.0}%: {}",
            100.0 * tolerance,
            detail.join("; ")
        )));
    }
    Ok(fit)
}

/// Fits one ring family per target in `anchors`.
///
/// Delay splits into `T0 + a·τ_dcell`; the fixed part is divided among the
/// inverters, the NAND and the control gates in proportion to their library
/// intrinsic delays. Energies are split the same way from toggle energies.
pub fn calibrate_ro_constants(
    lib: &CellLibrary,
    group: &str,
    anchors: &[Anchor],
    tolerance: f64,
) -> Result<CalibrationReport> {
    if anchors.len() < 4 {
        return Err(Error::CalibrationInfeasible(format!(
            "underdetermined: {} anchor rows",
            anchors.len()
        )));
    }
    let mut by_target: BTreeMap<&str, Vec<&Anchor>> = BTreeMap::new();
    for a in anchors {
        by_target.entry(a.target.as_str()).or_default().push(a);
    }
    let mut families = Vec::new();
    let mut residuals = Vec::new();
    let mut worst: f64 = 0.0;
    for (target, rows) in by_target {
        let fit = fit_target(lib, group, target, &rows, tolerance)?;
        worst = worst.max(fit.worst);
        families.push(fit.family);
        residuals.extend(fit.residuals);
    }
    Ok(CalibrationReport {
        group: group.to_string(),
        families,
        residuals,
        max_abs_residual: worst,
        tolerance,
    })
}
