// SPDX-License-Identifier: Apache-2.0

//! Static, dynamic and clock-tree power, and Monte-Carlo static power.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::PlacedDesign;
use crate::netlist::{Driver, ExtractMode, Netlist, Sink};
use crate::process::{local_z_at, ProcessModel, ProcessSample, ProcessSampler};
use crate::scalar::Scalar;
use crate::sta::Histogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    /// µW.
    #[serde(rename = "static")]
    pub static_: f64,
    pub dynamic: f64,
    pub clock_tree: f64,
    pub total: f64,
}

impl PowerReport {
    pub fn new(static_: f64, dynamic: f64, clock_tree: f64) -> Self {
        PowerReport {
            static_,
            dynamic,
            clock_tree,
            total: static_ + dynamic + clock_tree,
        }
    }
}

/// Per-net switching activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    /// Every signal net toggles `toggles_per_cycle` times per clock at `freq_mhz`.
    Uniform {
        toggles_per_cycle: f64,
        freq_mhz: f64,
    },
    /// Transitions per second for each design net, in MHz, in design order.
    PerNet(Vec<f64>),
}

impl Activity {
    pub fn zero() -> Self {
        Activity::PerNet(Vec::new())
    }
}

/// Σ leakage · global · local multipliers, µW.
pub fn static_power(design: &PlacedDesign, process: &ProcessSample) -> f64 {
    let lib = design.library.index();
    let mut acc = 0.0;
    for g in &design.instances {
        let k = &design.library.kinds[lib[g.kind.as_str()]];
        if k.leakage == 0.0 {
            continue;
        }
        let (x, y) = design.center_um(g, k.width);
        acc += k.leakage * process.leakage_at(x, y);
    }
    acc
}

/// Nets that reach flip-flop clock pins, through buffers and inverters.
pub fn clock_nets(nl: &Netlist, lib: &crate::library::CellLibrary) -> HashSet<usize> {
    let mut out = HashSet::new();
    let mut stack: Vec<usize> = Vec::new();
    for (ni, n) in nl.nets.iter().enumerate() {
        if n.sinks
            .iter()
            .any(|s| matches!(s, Sink::Cell { pin, .. } if pin == "CK"))
        {
            stack.push(ni);
        }
    }
    while let Some(n) = stack.pop() {
        if !out.insert(n) {
            continue;
        }
        if let Driver::Cell(c) = nl.nets[n].driver {
            if !nl.is_sequential(lib, c) {
                for &(_, inp) in &nl.cells[c].inputs {
                    stack.push(inp);
                }
            }
        }
    }
    out
}

/// `½·V²·Σ F_sa·C_load + Σ F_sa·E` over signal nets, µW. Clock nets are
/// accounted for by [`clock_tree_power`].
pub fn dynamic_power(design: &PlacedDesign, activity: &Activity, _process: &ProcessSample) -> f64 {
    let nl = Netlist::extract(design, ExtractMode::Oracle);
    dynamic_power_netlist(&nl, design, activity)
}

pub fn dynamic_power_netlist(nl: &Netlist, design: &PlacedDesign, activity: &Activity) -> f64 {
    let lib = &design.library;
    let clocks = clock_nets(nl, lib);
    let v2 = lib.vdd * lib.vdd;
    let mut acc = 0.0;
    for (ni, n) in nl.nets.iter().enumerate() {
        if clocks.contains(&ni) {
            continue;
        }
        let f = match activity {
            Activity::Uniform {
                toggles_per_cycle,
                freq_mhz,
            } => toggles_per_cycle * freq_mhz,
            Activity::PerNet(v) => v.get(ni).copied().unwrap_or(0.0),
        };
        if f == 0.0 {
            continue;
        }
        let e = match n.driver {
            Driver::Cell(c) => lib.kinds[nl.cells[c].kind].toggle_energy,
            Driver::Port => 0.0,
        };
        acc += f * (0.5 * v2 * nl.net_load(lib, ni) + e) * 1e-3;
    }
    acc
}

/// Parametric clock tree: `ceil(#FF / fanout)` buffers per clock domain, each
/// flip-flop loading its domain with its clock-pin and wiring capacitance.
pub fn clock_tree_power(design: &PlacedDesign, freq_mhz: f64, _process: &ProcessSample) -> f64 {
    let nl = Netlist::extract(design, ExtractMode::Oracle);
    clock_tree_power_netlist(&nl, design, freq_mhz)
}

pub fn clock_tree_power_netlist(nl: &Netlist, design: &PlacedDesign, freq_mhz: f64) -> f64 {
    let lib = &design.library;
    let ct = &lib.clock_tree;
    let Some(buf) = lib.kind(&ct.buffer_kind) else {
        return 0.0;
    };
    let buf_cap = buf.pin_cap("A");
    let v2 = lib.vdd * lib.vdd;
    // Flip-flops grouped by the net on their clock pin, counted per division factor.
    let mut ck_nets: HashMap<usize, Vec<usize>> = HashMap::new();
    for c in 0..nl.cells.len() {
        if nl.is_sequential(lib, c) {
            if let Some(ck) = nl.input_net(c, "CK") {
                ck_nets.entry(ck).or_default().push(c);
            }
        }
    }
    let mut factor_memo: HashMap<usize, u32> = HashMap::new();
    let mut per_factor: HashMap<u32, (usize, f64)> = HashMap::new();
    for (ck, ffs) in &ck_nets {
        let f = clock_factor(nl, lib, *ck, &mut factor_memo, 0);
        let e = per_factor.entry(f).or_insert((0, 0.0));
        e.0 += ffs.len();
        e.1 += ffs
            .iter()
            .map(|&c| lib.kinds[nl.cells[c].kind].pin_cap("CK") + ct.wire_cap_per_ff)
            .sum::<f64>();
    }
    let mut acc = 0.0;
    let mut factors: Vec<_> = per_factor.into_iter().collect();
    factors.sort_by_key(|e| e.0);
    for (factor, (n_ff, cap)) in factors {
        let f = freq_mhz / factor as f64;
        let n_buf = n_ff.div_ceil(ct.fanout.max(1) as usize) as f64;
        // Two transitions per clock period.
        acc += 2.0 * f * (0.5 * v2 * (cap + n_buf * buf_cap) + n_buf * buf.toggle_energy) * 1e-3;
    }
    acc
}

fn clock_factor(
    nl: &Netlist,
    lib: &crate::library::CellLibrary,
    net: usize,
    memo: &mut HashMap<usize, u32>,
    depth: usize,
) -> u32 {
    if let Some(&f) = memo.get(&net) {
        return f;
    }
    let f = match nl.nets[net].driver {
        _ if depth > 64 => 1,
        Driver::Port => 1,
        Driver::Cell(c) if nl.is_sequential(lib, c) => nl
            .input_net(c, "CK")
            .map(|ck| 2 * clock_factor(nl, lib, ck, memo, depth + 1))
            .unwrap_or(1),
        Driver::Cell(c) => nl.cells[c]
            .inputs
            .first()
            .map(|&(_, i)| clock_factor(nl, lib, i, memo, depth + 1))
            .unwrap_or(1),
    };
    memo.insert(net, f);
    f
}

pub fn power_report(
    design: &PlacedDesign,
    activity: &Activity,
    freq_mhz: f64,
    process: &ProcessSample,
) -> PowerReport {
    let nl = Netlist::extract(design, ExtractMode::Oracle);
    PowerReport::new(
        static_power(design, process),
        dynamic_power_netlist(&nl, design, activity),
        clock_tree_power_netlist(&nl, design, freq_mhz),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n: usize,
    pub seed: u64,
    pub nominal: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub histogram: Histogram,
    pub samples: Vec<f64>,
}

/// Mean, variance and sample skewness.
pub fn moments<S: Scalar>(v: &[S]) -> (S, S, S) {
    let n = S::of(v.len() as f64);
    if v.is_empty() {
        return (S::zero(), S::zero(), S::zero());
    }
    let mean = v.iter().fold(S::zero(), |a, &b| a + b) / n;
    let m2 = v.iter().fold(S::zero(), |a, &b| a + (b - mean).powi(2)) / n;
    let m3 = v.iter().fold(S::zero(), |a, &b| a + (b - mean).powi(3)) / n;
    let skew = if m2 > S::zero() {
        m3 / m2.powf(S::of(1.5))
    } else {
        S::zero()
    };
    (mean, m2, skew)
}

/// Static power over `n` independent dies.
pub fn monte_carlo_static(
    design: &PlacedDesign,
    n: usize,
    seed: u64,
    model: ProcessModel,
    bins: usize,
) -> McSummary {
    let lib = design.library.index();
    let (w, h) = design.core_size_um();
    let sampler = ProcessSampler::new(model, w, h);
    let mut leak = Vec::new();
    let mut pts = Vec::new();
    for g in &design.instances {
        let k = &design.library.kinds[lib[g.kind.as_str()]];
        if k.leakage > 0.0 {
            leak.push(k.leakage);
            pts.push(design.center_um(g, k.width));
        }
    }
    let weights: Vec<_> = match sampler.grid() {
        Some(grid) => pts.iter().map(|&(x, y)| grid.weights(x, y)).collect(),
        None => vec![[(0, 0.0); 4]; pts.len()],
    };
    let nominal: f64 = leak.iter().sum();
    let samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = sampler.sample(seed, i);
            let z = local_z_at(&s, &weights);
            leak.iter()
                .zip(&z)
                .map(|(l, &zi)| l * s.leakage_for_z(zi))
                .sum()
        })
        .collect();
    let (mean, variance, skewness) = moments(&samples);
    McSummary {
        n,
        seed,
        nominal,
        mean,
        variance,
        skewness,
        histogram: Histogram::of(&samples, bins),
        samples,
    }
}
