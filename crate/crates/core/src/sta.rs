// SPDX-License-Identifier: Apache-2.0

//! Static timing analysis with a linear load-dependent delay model and an
//! ideal clock.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::CellLibrary;
use crate::netlist::{Driver, Netlist, Sink};
use crate::scalar::Scalar;

/// Delay scaling applied to every cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Derate {
    Uniform(f64),
    /// One multiplier per netlist cell.
    PerCell(Vec<f64>),
}

impl Derate {
    fn at(&self, cell: usize) -> f64 {
        match self {
            Derate::Uniform(m) => *m,
            Derate::PerCell(v) => v[cell],
        }
    }
}

#[derive(Debug, Clone)]
pub struct StaOptions {
    /// ps.
    pub clock_period: f64,
    /// ps.
    pub margin: f64,
    pub derate: Derate,
    /// Cells whose outputs are treated as constants, e.g. free-running loops.
    pub disabled: HashSet<usize>,
}

impl StaOptions {
    pub fn new(clock_period: f64, margin: f64) -> Self {
        StaOptions {
            clock_period,
            margin,
            derate: Derate::Uniform(1.0),
            disabled: HashSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointTiming<S> {
    pub arrival: S,
    /// Clock period available at this endpoint, ps.
    pub required_period: S,
    pub slack: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport<S> {
    pub critical_path: Vec<String>,
    /// Worst arrival referred to the base clock, ps.
    pub critical_delay: S,
    pub slack_per_endpoint: BTreeMap<String, S>,
    pub endpoints: BTreeMap<String, EndpointTiming<S>>,
    pub clock_period: S,
    pub margin: S,
}

impl<S: Scalar> TimingReport<S> {
    pub fn min_slack(&self) -> Option<S> {
        self.slack_per_endpoint
            .values()
            .copied()
            .reduce(|a, b| a.min(b))
    }

    pub fn worst_endpoint(&self) -> Option<(&String, S)> {
        self.slack_per_endpoint
            .iter()
            .map(|(k, v)| (k, *v))
            .reduce(|a, b| if b.1 < a.1 { b } else { a })
    }
}

/// Clock division factor of each sequential cell: 1 on the port clock, doubled
/// behind every flip-flop that drives a clock pin.
fn domain_factors(nl: &Netlist, lib: &CellLibrary) -> HashMap<usize, u32> {
    fn net_factor(
        nl: &Netlist,
        lib: &CellLibrary,
        net: usize,
        memo: &mut HashMap<usize, u32>,
        depth: usize,
    ) -> u32 {
        if let Some(&f) = memo.get(&net) {
            return f;
        }
        let f = if depth > 64 {
            1
        } else {
            match nl.nets[net].driver {
                Driver::Port => 1,
                Driver::Cell(c) => {
                    if nl.is_sequential(lib, c) {
                        match nl.input_net(c, "CK") {
                            Some(ck) => 2 * net_factor(nl, lib, ck, memo, depth + 1),
                            None => 1,
                        }
                    } else {
                        match nl.cells[c].inputs.first() {
                            Some(&(_, inp)) => net_factor(nl, lib, inp, memo, depth + 1),
                            None => 1,
                        }
                    }
                }
            }
        };
        memo.insert(net, f);
        f
    }
    let mut memo = HashMap::new();
    let mut out = HashMap::new();
    for c in 0..nl.cells.len() {
        if nl.is_sequential(lib, c) {
            let f = nl
                .input_net(c, "CK")
                .map(|ck| net_factor(nl, lib, ck, &mut memo, 0))
                .unwrap_or(1);
            out.insert(c, f);
        }
    }
    out
}

struct Propagation<S> {
    arrival: Vec<S>,
    /// Smallest launching clock factor in each net's fan-in; `u32::MAX` for constants.
    launch: Vec<u32>,
    /// Input net that set the arrival of each combinational output.
    from: Vec<Option<usize>>,
    domains: HashMap<usize, u32>,
}

fn propagate<S: Scalar>(
    nl: &Netlist,
    lib: &CellLibrary,
    opts: &StaOptions,
) -> Result<Propagation<S>> {
    let n_nets = nl.nets.len();
    let mut arrival = vec![S::zero(); n_nets];
    let mut launch = vec![u32::MAX; n_nets];
    let mut from = vec![None; n_nets];
    let domains = domain_factors(nl, lib);
    let delay = |c: usize, out: usize| -> S {
        let k = &lib.kinds[nl.cells[c].kind];
        S::of((k.intrinsic + k.slope * nl.net_load(lib, out)) * opts.derate.at(c))
    };

    let is_comb = |c: usize| !nl.is_sequential(lib, c) && !opts.disabled.contains(&c);
    for (ni, n) in nl.nets.iter().enumerate() {
        match n.driver {
            Driver::Port => launch[ni] = 1,
            Driver::Cell(c) if nl.is_sequential(lib, c) && !opts.disabled.contains(&c) => {
                arrival[ni] = delay(c, ni);
                launch[ni] = domains.get(&c).copied().unwrap_or(1);
            }
            _ => {}
        }
    }

    let mut indeg = vec![0usize; nl.cells.len()];
    for c in 0..nl.cells.len() {
        if !is_comb(c) {
            continue;
        }
        for &(_, inp) in &nl.cells[c].inputs {
            if let Driver::Cell(p) = nl.nets[inp].driver {
                if is_comb(p) {
                    indeg[c] += 1;
                }
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..nl.cells.len())
        .filter(|&c| is_comb(c) && indeg[c] == 0)
        .collect();
    let mut done = 0usize;
    let total = (0..nl.cells.len()).filter(|&c| is_comb(c)).count();
    while let Some(c) = queue.pop_front() {
        done += 1;
        let Some(out) = nl.cells[c].output else {
            continue;
        };
        let mut best: Option<usize> = None;
        let mut lmin = u32::MAX;
        for &(_, inp) in &nl.cells[c].inputs {
            lmin = lmin.min(launch[inp]);
            if best.map_or(true, |b| arrival[inp] > arrival[b]) {
                best = Some(inp);
            }
        }
        let base = best.map(|b| arrival[b]).unwrap_or_else(S::zero);
        arrival[out] = base + delay(c, out);
        launch[out] = lmin;
        from[out] = best;
        for s in &nl.nets[out].sinks {
            if let Sink::Cell { cell, .. } = s {
                if is_comb(*cell) {
                    indeg[*cell] -= 1;
                    if indeg[*cell] == 0 {
                        queue.push_back(*cell);
                    }
                }
            }
        }
    }
    if done < total {
        let stuck: HashSet<usize> = (0..nl.cells.len())
            .filter(|&c| is_comb(c) && indeg[c] > 0)
            .collect();
        let start = *stuck.iter().min().expect("stuck cells exist");
        let mut seen = Vec::new();
        let mut cur = start;
        loop {
            if let Some(pos) = seen.iter().position(|&x| x == cur) {
                let cycle: Vec<String> = seen[pos..]
                    .iter()
                    .map(|&c: &usize| nl.cells[c].origin.clone())
                    .collect();
                return Err(Error::CombinationalCycle(cycle));
            }
            seen.push(cur);
            cur = nl.cells[cur]
                .inputs
                .iter()
                .find_map(|&(_, inp)| match nl.nets[inp].driver {
                    Driver::Cell(p) if stuck.contains(&p) => Some(p),
                    _ => None,
                })
                .expect("stuck cell has a stuck predecessor");
        }
    }
    Ok(Propagation {
        arrival,
        launch,
        from,
        domains,
    })
}

pub fn analyze_timing<S: Scalar>(
    nl: &Netlist,
    lib: &CellLibrary,
    opts: &StaOptions,
) -> Result<TimingReport<S>> {
    let p = propagate::<S>(nl, lib, opts)?;
    let period = S::of(opts.clock_period);
    let margin = S::of(opts.margin);
    let mut endpoints = BTreeMap::new();
    let mut slack_per_endpoint = BTreeMap::new();
    let mut worst: Option<(S, usize, String)> = None;
    let mut crit = S::zero();
    let mut any = false;
    let mut record = |name: String, net: usize, arrival: S, factor: u32| {
        let f = S::of(factor as f64);
        let required = period * f;
        let slack = required - margin - arrival;
        let equiv = (arrival + margin) / f - margin;
        if !any || equiv > crit {
            crit = equiv;
        }
        any = true;
        if worst.as_ref().map_or(true, |w| slack < w.0) {
            worst = Some((slack, net, name.clone()));
        }
        slack_per_endpoint.insert(name.clone(), slack);
        endpoints.insert(
            name,
            EndpointTiming {
                arrival,
                required_period: required,
                slack,
            },
        );
    };
    for c in 0..nl.cells.len() {
        if !nl.is_sequential(lib, c) || opts.disabled.contains(&c) {
            continue;
        }
        let Some(d) = nl.input_net(c, "D") else {
            continue;
        };
        let k = &lib.kinds[nl.cells[c].kind];
        let arrival = p.arrival[d] + S::of(k.setup * opts.derate.at(c));
        let capture = p.domains.get(&c).copied().unwrap_or(1);
        record(
            format!("{}/D", nl.cells[c].origin),
            d,
            arrival,
            capture.min(p.launch[d]),
        );
    }
    for (ni, n) in nl.nets.iter().enumerate() {
        for s in &n.sinks {
            if let Sink::Port(name) = s {
                record(format!("port:{name}"), ni, p.arrival[ni], 1);
            }
        }
    }
    let mut critical_path = Vec::new();
    if let Some((_, net, _)) = &worst {
        let mut cur = Some(*net);
        let mut guard = 0;
        while let Some(n) = cur {
            if let Driver::Cell(c) = nl.nets[n].driver {
                critical_path.push(nl.cells[c].origin.clone());
            }
            cur = p.from[n];
            guard += 1;
            if guard > nl.nets.len() {
                break;
            }
        }
        critical_path.reverse();
    }
    Ok(TimingReport {
        critical_path,
        critical_delay: crit,
        slack_per_endpoint,
        endpoints,
        clock_period: period,
        margin,
    })
}

/// Highest clock in MHz with non-negative slack everywhere.
pub fn estimate_frequency(
    nl: &Netlist,
    lib: &CellLibrary,
    margin: f64,
    derate: Derate,
) -> Result<f64> {
    let opts = StaOptions {
        clock_period: 1.0,
        margin,
        derate,
        disabled: HashSet::new(),
    };
    let rep = analyze_timing::<f64>(nl, lib, &opts)?;
    if rep.slack_per_endpoint.is_empty() {
        return Err(Error::Invalid("netlist has no timing endpoints".into()));
    }
    Ok(1e6 / (rep.critical_delay + margin))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; a degenerate range gives one bin.
    pub fn with_range(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        if values.is_empty() {
            return Histogram { bins: Vec::new() };
        }
        let nb = if hi > lo { bins.max(1) } else { 1 };
        let w = if nb == 1 {
            (hi - lo).max(0.0)
        } else {
            (hi - lo) / nb as f64
        };
        let mut out: Vec<HistogramBin> = (0..nb)
            .map(|i| HistogramBin {
                lo: lo + w * i as f64,
                hi: if i + 1 == nb {
                    hi
                } else {
                    lo + w * (i + 1) as f64
                },
                count: 0,
            })
            .collect();
        for &v in values {
            let i = if w > 0.0 {
                (((v - lo) / w).floor() as isize).clamp(0, nb as isize - 1) as usize
            } else {
                0
            };
            out[i].count += 1;
        }
        Histogram { bins: out }
    }

    pub fn of(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::with_range(values, bins, lo, hi)
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// CSV with bin centres in the first column.
    pub fn to_csv(&self, value_header: &str) -> String {
        let mut s = format!("{value_header},count\n");
        for b in &self.bins {
            s.push_str(&format!("{:.6},{}\n", 0.5 * (b.lo + b.hi), b.count));
        }
        s
    }
}

pub fn slack_histogram<S: Scalar>(report: &TimingReport<S>, bins: usize) -> Histogram {
    let v: Vec<f64> = report
        .slack_per_endpoint
        .values()
        .map(|s| s.as_f64())
        .collect();
    Histogram::of(&v, bins)
}
