// SPDX-License-Identifier: Apache-2.0

//! Index-based connectivity view extracted from a placed design, and
//! key-register identification on top of it.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::design::{Direction, Endpoint, Net, PlacedDesign};
use crate::error::{Error, Result};
use crate::library::CellLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMode {
    /// Semantic tags stripped.
    Attacker,
    /// Tags kept as ground truth.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Cell(usize),
    Port,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sink {
    Cell { cell: usize, pin: String },
    Port(String),
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub id: String,
    /// Instance id in the source layout.
    pub origin: String,
    pub kind: usize,
    pub inputs: Vec<(String, usize)>,
    pub output: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct NetView {
    pub id: String,
    pub driver: Driver,
    pub sinks: Vec<Sink>,
    pub tag: Option<String>,
    /// Extracted wiring capacitance, fF.
    pub wire_cap: f64,
}

#[derive(Debug, Clone)]
pub struct Netlist {
    pub cells: Vec<Cell>,
    pub nets: Vec<NetView>,
    pub input_ports: Vec<String>,
    pub output_ports: Vec<String>,
}

impl Netlist {
    pub fn extract(design: &PlacedDesign, mode: ExtractMode) -> Netlist {
        let lib = &design.library;
        let kinds = lib.index();
        let inst_idx = design.instance_index();
        let empty = BTreeMap::new();
        let tags = match mode {
            ExtractMode::Oracle => &design.tags,
            ExtractMode::Attacker => &empty,
        };
        let mut nl = Netlist::from_parts(
            lib,
            design
                .instances
                .iter()
                .filter(|g| !lib.kinds[kinds[g.kind.as_str()]].is_filler)
                .map(|g| (g.id.as_str(), g.kind.as_str())),
            &design.nets,
            |n| design.net_hpwl_um(n, &inst_idx) * lib.wire_cap_per_um,
            tags,
        );
        let ports = |d: Direction| {
            design
                .ports
                .iter()
                .filter(|p| p.direction == d)
                .map(|p| p.name.clone())
                .collect()
        };
        nl.input_ports = ports(Direction::Input);
        nl.output_ports = ports(Direction::Output);
        nl
    }

    /// Builds a view from raw connectivity. Ports are inferred from the
    /// nets: port drivers are inputs, port sinks are outputs.
    pub fn from_parts<'a>(
        lib: &CellLibrary,
        instances: impl IntoIterator<Item = (&'a str, &'a str)>,
        design_nets: &[Net],
        wire_cap: impl Fn(&Net) -> f64,
        tags: &BTreeMap<String, String>,
    ) -> Netlist {
        let kinds = lib.index();
        let mut cell_of: HashMap<&str, usize> = HashMap::new();
        let mut cells = Vec::new();
        for (id, kind) in instances {
            cell_of.insert(id, cells.len());
            cells.push(Cell {
                id: format!("g{}", cells.len()),
                origin: id.to_string(),
                kind: kinds[kind],
                inputs: Vec::new(),
                output: None,
            });
        }
        let mut nets = Vec::with_capacity(design_nets.len());
        let mut input_ports = Vec::new();
        let mut output_ports = Vec::new();
        for (ni, n) in design_nets.iter().enumerate() {
            let driver = match &n.driver {
                Endpoint::Pin { inst, .. } => {
                    let c = cell_of[inst.as_str()];
                    cells[c].output = Some(ni);
                    Driver::Cell(c)
                }
                Endpoint::Port { port } => {
                    input_ports.push(port.clone());
                    Driver::Port
                }
            };
            let mut sinks = Vec::with_capacity(n.sinks.len());
            for s in &n.sinks {
                match s {
                    Endpoint::Pin { inst, pin } => {
                        let c = cell_of[inst.as_str()];
                        cells[c].inputs.push((pin.clone(), ni));
                        sinks.push(Sink::Cell {
                            cell: c,
                            pin: pin.clone(),
                        });
                    }
                    Endpoint::Port { port } => {
                        output_ports.push(port.clone());
                        sinks.push(Sink::Port(port.clone()));
                    }
                }
            }
            nets.push(NetView {
                id: format!("w{ni}"),
                driver,
                sinks,
                tag: tags.get(&n.id).cloned(),
                wire_cap: wire_cap(n),
            });
        }
        for c in &mut cells {
            c.inputs.sort();
        }
        Netlist {
            cells,
            nets,
            input_ports,
            output_ports,
        }
    }

    pub fn is_sequential(&self, lib: &CellLibrary, cell: usize) -> bool {
        lib.kinds[self.cells[cell].kind].is_sequential
    }

    pub fn input_net(&self, cell: usize, pin: &str) -> Option<usize> {
        self.cells[cell]
            .inputs
            .iter()
            .find(|(p, _)| p == pin)
            .map(|(_, n)| *n)
    }

    /// Pin plus wire capacitance on a net, fF.
    pub fn net_load(&self, lib: &CellLibrary, net: usize) -> f64 {
        let n = &self.nets[net];
        n.wire_cap
            + n.sinks
                .iter()
                .map(|s| match s {
                    Sink::Cell { cell, pin } => lib.kinds[self.cells[*cell].kind].pin_cap(pin),
                    Sink::Port(_) => 0.0,
                })
                .sum::<f64>()
    }

    pub fn tag_count(&self) -> usize {
        self.nets.iter().filter(|n| n.tag.is_some()).count()
    }

    /// Combinational cells reachable from `sources` without crossing a
    /// sequential cell.
    pub fn fanout_cone(&self, lib: &CellLibrary, sources: &[usize]) -> usize {
        let mut seen = HashSet::new();
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &c in sources {
            if let Some(o) = self.cells[c].output {
                queue.push_back(o);
            }
        }
        let mut visited_nets = HashSet::new();
        while let Some(n) = queue.pop_front() {
            if !visited_nets.insert(n) {
                continue;
            }
            for s in &self.nets[n].sinks {
                if let Sink::Cell { cell, .. } = s {
                    if !self.is_sequential(lib, *cell) && seen.insert(*cell) {
                        if let Some(o) = self.cells[*cell].output {
                            queue.push_back(o);
                        }
                    }
                }
            }
        }
        seen.len()
    }

    /// Shift chains: maximal sequences of flip-flops where each D input is
    /// driven directly by the previous flip-flop's Q.
    pub fn register_chains(&self, lib: &CellLibrary) -> Vec<Vec<usize>> {
        let seq: Vec<usize> = (0..self.cells.len())
            .filter(|&c| self.is_sequential(lib, c))
            .collect();
        let mut pred: HashMap<usize, usize> = HashMap::new();
        let mut succ: HashMap<usize, usize> = HashMap::new();
        for &r in &seq {
            if let Some(d) = self.input_net(r, "D") {
                if let Driver::Cell(p) = self.nets[d].driver {
                    if p != r && self.is_sequential(lib, p) && !succ.contains_key(&p) {
                        pred.insert(r, p);
                        succ.insert(p, r);
                    }
                }
            }
        }
        let mut chains = Vec::new();
        let mut used = HashSet::new();
        for &r in &seq {
            if pred.contains_key(&r) || used.contains(&r) {
                continue;
            }
            let mut chain = vec![r];
            used.insert(r);
            let mut cur = r;
            while let Some(&n) = succ.get(&cur) {
                if !used.insert(n) {
                    break;
                }
                chain.push(n);
                cur = n;
            }
            chains.push(chain);
        }
        chains
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyFindMode {
    Oracle,
    Heuristic,
}

/// Returns the key registers (netlist cell indices) in leak order.
pub fn find_key_registers(
    netlist: &Netlist,
    lib: &CellLibrary,
    n_key: usize,
    mode: KeyFindMode,
) -> Result<Vec<usize>> {
    match mode {
        KeyFindMode::Oracle => {
            let mut bits: Vec<(usize, usize)> = Vec::new();
            for n in &netlist.nets {
                let Some(tag) = &n.tag else { continue };
                let Some(i) = tag
                    .strip_prefix("key_bit[")
                    .and_then(|s| s.strip_suffix(']'))
                    .and_then(|s| s.parse::<usize>().ok())
                else {
                    continue;
                };
                if let Driver::Cell(c) = n.driver {
                    bits.push((i, c));
                }
            }
            bits.sort();
            if bits.len() != n_key || bits.iter().enumerate().any(|(k, (i, _))| *i != k) {
                return Err(Error::Invalid(format!(
                    "oracle tags name {} key bits, expected 0..{n_key}",
                    bits.len()
                )));
            }
            Ok(bits.into_iter().map(|(_, c)| c).collect())
        }
        KeyFindMode::Heuristic => {
            let chains = netlist.register_chains(lib);
            let total = netlist.cells.len().max(1) as f64;
            let mut exact: Vec<(usize, u64, Vec<usize>)> = Vec::new();
            let mut others: Vec<(Vec<usize>, f64, usize)> = Vec::new();
            for chain in chains {
                let cone = netlist.fanout_cone(lib, &chain);
                if chain.len() == n_key {
                    let agg: u64 = chain.iter().map(|&c| c as u64).sum();
                    exact.push((cone, agg, chain));
                } else if chain.len() > 1 {
                    let width_match = chain.len().min(n_key) as f64 / chain.len().max(n_key) as f64;
                    others.push((chain, width_match * cone as f64 / total, cone));
                }
            }
            exact.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            if let Some((_, _, chain)) = exact.into_iter().next() {
                return Ok(chain);
            }
            others.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)));
            Err(Error::KeyGroupNotFound {
                n_key,
                candidates: others
                    .into_iter()
                    .map(|(c, conf, _)| {
                        (
                            c.iter().map(|&i| netlist.cells[i].origin.clone()).collect(),
                            conf,
                        )
                    })
                    .collect(),
            })
        }
    }
}
