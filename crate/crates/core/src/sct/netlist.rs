// SPDX-License-Identifier: Apache-2.0

//! Gate-level trojan fragment: clock divider, controller and ring.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::design::{Endpoint, Net};
use crate::library::{kind_name, CellLibrary, Flavor};
use crate::netlist::Netlist;
use crate::sct::SctConfig;

pub const PORT_CLOCK: &str = "clock";
pub const PORT_RESET: &str = "reset";
pub const PORT_TRIGGER: &str = "trigger";

pub fn key_port(i: usize) -> String {
    format!("key_in[{i}]")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Buffers next to the key registers.
    Tap,
    Divider,
    Controller,
    Ring,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentCell {
    pub id: String,
    pub kind: String,
    pub block: Block,
    /// For tap buffers, the key bit they sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_bit: Option<usize>,
}

/// Unplaced trojan netlist. Nets may reference the external ports
/// `clock`, `reset`, `trigger` and `key_in[i]` as drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SctFragment {
    pub cells: Vec<FragmentCell>,
    pub nets: Vec<Net>,
    /// Net feeding the ring's S0 and S1 selects, and the ring enable.
    pub s0_net: String,
    pub s1_net: String,
    pub enable_net: String,
    /// Clock seen by the controller.
    pub controller_clock: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentStats {
    pub cells: usize,
    pub sites: u64,
    /// µm².
    pub area: f64,
    pub leakage: f64,
    pub flip_flops: usize,
}

struct Builder<'a> {
    prefix: &'a str,
    flavor: Flavor,
    cells: Vec<FragmentCell>,
    nets: BTreeMap<String, Net>,
    order: Vec<String>,
    block: Block,
}

impl<'a> Builder<'a> {
    fn kind(&self, base: &str) -> String {
        kind_name(base, self.flavor)
    }

    fn net(&mut self, id: &str, driver: Endpoint) {
        self.order.push(id.to_string());
        self.nets.insert(
            id.to_string(),
            Net {
                id: id.to_string(),
                driver,
                sinks: Vec::new(),
            },
        );
    }

    fn sink(&mut self, net: &str, inst: &str, pin: &str) {
        self.nets
            .get_mut(net)
            .unwrap_or_else(|| panic!("net {net} declared before use"))
            .sinks
            .push(Endpoint::pin(inst, pin));
    }

    fn port(&mut self, name: &str) -> String {
        let id = format!("{}{}", self.prefix, name);
        if !self.nets.contains_key(&id) {
            self.net(&id, Endpoint::port(name));
        }
        id
    }

    /// Adds a gate with the given input nets and returns its output net.
    fn gate(&mut self, name: &str, base: &str, inputs: &[(&str, &str)]) -> String {
        let id = format!("{}{}", self.prefix, name);
        let out = format!("{id}_o");
        self.cells.push(FragmentCell {
            id: id.clone(),
            kind: self.kind(base),
            block: self.block,
            key_bit: None,
        });
        let opin = if base.starts_with("DFF") { "Q" } else { "Y" };
        self.net(&out, Endpoint::pin(&id, opin));
        for (pin, net) in inputs {
            self.sink(net, &id, pin);
        }
        out
    }

    /// Flip-flop whose D input is connected later.
    fn dff(&mut self, name: &str, clock: &str) -> String {
        self.gate(name, "DFF_X1", &[("CK", clock)])
    }

    fn connect_d(&mut self, name: &str, net: &str) {
        let id = format!("{}{}", self.prefix, name);
        self.sink(net, &id, "D");
    }

    fn and_tree(&mut self, name: &str, mut xs: Vec<String>) -> String {
        let mut level = 0;
        while xs.len() > 1 {
            let mut next = Vec::new();
            for (i, pair) in xs.chunks(2).enumerate() {
                if pair.len() == 2 {
                    next.push(self.gate(
                        &format!("{name}_{level}_{i}"),
                        "AND2_X1",
                        &[("A", &pair[0]), ("B", &pair[1])],
                    ));
                } else {
                    next.push(pair[0].clone());
                }
            }
            xs = next;
            level += 1;
        }
        xs.pop().expect("non-empty tree")
    }
}

/// Builds divider, controller and ring for `config`, with cells of `flavor`.
pub fn build_sct_netlist(config: &SctConfig, flavor: Flavor) -> SctFragment {
    let mut b = Builder {
        prefix: "sct_",
        flavor,
        cells: Vec::new(),
        nets: BTreeMap::new(),
        order: Vec::new(),
        block: Block::Divider,
    };
    let clock = b.port(PORT_CLOCK);
    let reset = b.port(PORT_RESET);
    let trigger = b.port(PORT_TRIGGER);

    // Divider: one toggle flip-flop per factor of two.
    let stages = config.divider_ratio.max(1).trailing_zeros() as usize;
    let mut clk = clock.clone();
    for j in 0..stages {
        let q = b.dff(&format!("dv{j}"), &clk);
        let qn = b.gate(&format!("dv{j}_inv"), "INV_X1", &[("A", &q)]);
        b.connect_d(&format!("dv{j}"), &qn);
        clk = q;
    }
    let sct_clock = clk;

    // Key taps.
    b.block = Block::Tap;
    let n_key = config.n_key as usize;
    let mut taps = Vec::with_capacity(n_key);
    for i in 0..n_key {
        let port = b.port(&key_port(i));
        let out = b.gate(&format!("tap{i}"), "BUF_X1", &[("A", &port)]);
        b.cells.last_mut().expect("tap cell").key_bit = Some(i);
        taps.push(out);
    }

    // Controller.
    b.block = Block::Controller;
    let rstn = b.gate("tc_rstn", "INV_X1", &[("A", &reset)]);
    let run = b.dff("tc_run", &sct_clock);
    let run_n = b.gate("tc_run_n", "INV_X1", &[("A", &run)]);
    let load = b.gate("tc_load", "AND2_X1", &[("A", &trigger), ("B", &run_n)]);
    let n_sel_buf = n_key.div_ceil(16);
    let sel: Vec<String> = (0..n_sel_buf)
        .map(|j| b.gate(&format!("tc_selbuf{j}"), "BUF_X4", &[("A", &load)]))
        .collect();
    let chain: Vec<String> = (0..n_key)
        .map(|i| b.dff(&format!("tc_k{i}"), &sct_clock))
        .collect();
    let n_leak = config.n_leak as usize;
    for i in 0..n_key {
        let shifted = chain[(i + n_leak) % n_key].clone();
        let m = b.gate(
            &format!("tc_mux{i}"),
            "MUX2_X1",
            &[("A", &shifted), ("B", &taps[i]), ("S", &sel[i / 16])],
        );
        b.connect_d(&format!("tc_k{i}"), &m);
    }
    // Step counter, cleared by reset, advancing while running.
    let steps = (config.n_key / config.n_leak).max(1) as usize;
    let bits = (usize::BITS - (steps - 1).leading_zeros()).max(1) as usize;
    let cnt: Vec<String> = (0..bits)
        .map(|j| b.dff(&format!("tc_cnt{j}"), &sct_clock))
        .collect();
    let mut carry = run.clone();
    for j in 0..bits {
        let x = b.gate(
            &format!("tc_inc{j}"),
            "XOR2_X1",
            &[("A", &cnt[j]), ("B", &carry)],
        );
        let d = b.gate(&format!("tc_clr{j}"), "AND2_X1", &[("A", &x), ("B", &rstn)]);
        b.connect_d(&format!("tc_cnt{j}"), &d);
        if j + 1 < bits {
            carry = b.gate(
                &format!("tc_carry{j}"),
                "AND2_X1",
                &[("A", &carry), ("B", &cnt[j])],
            );
        }
    }
    // Last step detection: counter equals steps - 1.
    let target = steps - 1;
    let lits: Vec<String> = (0..bits)
        .map(|j| {
            if target >> j & 1 == 1 {
                cnt[j].clone()
            } else {
                b.gate(&format!("tc_cntn{j}"), "INV_X1", &[("A", &cnt[j])])
            }
        })
        .collect();
    let last = b.and_tree("tc_last", lits);
    let last_n = b.gate("tc_last_n", "INV_X1", &[("A", &last)]);
    let go = b.gate("tc_go", "OR2_X1", &[("A", &run), ("B", &load)]);
    let keep = b.gate("tc_keep", "AND2_X1", &[("A", &go), ("B", &last_n)]);
    let run_d = b.gate("tc_run_d", "AND2_X1", &[("A", &keep), ("B", &rstn)]);
    b.connect_d("tc_run", &run_d);

    // Ring: NAND(enable, feedback), inverters, branch 1, then three gated
    // bypass muxes (S0, S1, S0·S1) in front of branches 2, 3 and 4.
    b.block = Block::Ring;
    let s1 = chain[0].clone();
    let s0 = chain[1 % n_key].clone();
    let ro = &config.ro;
    let fb_name = format!("{}ro_fb", b.prefix);
    let s0n = b.gate("ro_s0n", "INV_X1", &[("A", &s0)]);
    let s1n = b.gate("ro_s1n", "INV_X1", &[("A", &s1)]);
    let sel4 = b.gate("ro_sel4", "AND2_X1", &[("A", &s0), ("B", &s1)]);
    let sel4n = b.gate("ro_sel4n", "NAND2_X1", &[("A", &s0), ("B", &s1)]);
    let nand_id = format!("{}ro_nand", b.prefix);
    b.cells.push(FragmentCell {
        id: nand_id.clone(),
        kind: b.kind("NAND2_X1"),
        block: Block::Ring,
        key_bit: None,
    });
    let nand_out = format!("{nand_id}_o");
    b.net(&nand_out, Endpoint::pin(&nand_id, "Y"));
    b.sink(&run, &nand_id, "A");
    let mut x = nand_out;
    for i in 0..ro.n_i {
        x = b.gate(&format!("ro_inv{i}"), "INV_X1", &[("A", &x)]);
    }
    let delay_chain = |b: &mut Builder, tag: &str, n: u32, from: &str| -> String {
        let mut y = from.to_string();
        for i in 0..n {
            y = b.gate(&format!("ro_{tag}_{i}"), "DLY_X1", &[("A", &y)]);
        }
        y
    };
    x = delay_chain(&mut b, "d1", ro.n_d[0], &x);
    let mux = |b: &mut Builder, tag: &str, n: u32, from: &str, on: &str, off: &str| -> String {
        let slow = delay_chain(b, tag, n, from);
        let pass = b.gate(
            &format!("ro_{tag}_pass"),
            "AND2_X1",
            &[("A", from), ("B", off)],
        );
        let take = b.gate(
            &format!("ro_{tag}_take"),
            "AND2_X1",
            &[("A", &slow), ("B", on)],
        );
        b.gate(
            &format!("ro_{tag}_or"),
            "OR2_X1",
            &[("A", &pass), ("B", &take)],
        )
    };
    x = mux(&mut b, "d2", ro.n_d[1], &x, &s0, &s0n);
    x = mux(&mut b, "d3", ro.n_d[2], &x, &s1, &s1n);
    x = mux(&mut b, "d4", ro.n_d[3], &x, &sel4, &sel4n);
    // Close the loop.
    let _ = fb_name;
    b.sink(&x, &nand_id, "B");

    let nets = b.order.iter().map(|id| b.nets[id].clone()).collect();
    SctFragment {
        cells: b.cells,
        nets,
        s0_net: s0,
        s1_net: s1,
        enable_net: run,
        controller_clock: sct_clock,
    }
}

impl SctFragment {
    pub fn stats(&self, lib: &CellLibrary) -> FragmentStats {
        let mut sites = 0u64;
        let mut leakage = 0.0;
        let mut ffs = 0;
        for c in &self.cells {
            let k = lib.kind(&c.kind).expect("fragment uses library kinds");
            sites += k.width as u64;
            leakage += k.leakage;
            ffs += k.is_sequential as usize;
        }
        FragmentStats {
            cells: self.cells.len(),
            sites,
            area: sites as f64 * lib.site_area(),
            leakage,
            flip_flops: ffs,
        }
    }

    pub fn block_cells(&self, block: Block) -> impl Iterator<Item = &FragmentCell> {
        self.cells.iter().filter(move |c| c.block == block)
    }

    /// Stand-alone connectivity view, without wiring capacitance.
    pub fn to_netlist(&self, lib: &CellLibrary) -> Netlist {
        Netlist::from_parts(
            lib,
            self.cells.iter().map(|c| (c.id.as_str(), c.kind.as_str())),
            &self.nets,
            |_| 0.0,
            &BTreeMap::new(),
        )
    }

    pub fn ring_cells(&self) -> HashSet<&str> {
        self.block_cells(Block::Ring)
            .map(|c| c.id.as_str())
            .collect()
    }
}
