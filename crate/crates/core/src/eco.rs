// SPDX-License-Identifier: Apache-2.0

//! Filler-replacement insertion of a trojan fragment into a finished layout,
//! routing estimate with layer assignment, and timing sign-off.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::design::{Endpoint, GateInstance, Net, PlacedDesign};
use crate::error::{Error, Result};
use crate::netlist::{find_key_registers, ExtractMode, KeyFindMode, Netlist};
use crate::sct::netlist::{
    build_sct_netlist, key_port, Block, SctFragment, PORT_CLOCK, PORT_RESET, PORT_TRIGGER,
};
use crate::sct::SctConfig;
use crate::sta::{analyze_timing, StaOptions};

pub const PATCH_SCHEMA: &str = "sctkit.patch/1";

/// Signal layers, bottom to top.
pub const LAYERS: [&str; 6] = ["M2", "M3", "M4", "M5", "M6", "M7"];

/// Where the trojan cells go, and which fillers make room for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub cells: Vec<GateInstance>,
    pub removed_fillers: Vec<RemovedInstance>,
    /// Fillers re-inserted into the unused parts of opened gaps.
    pub new_fillers: Vec<GateInstance>,
    /// RMS distance of the trojan cells from their centroid, µm.
    pub spread_um: f64,
    /// Same, for the ring cells alone.
    pub ring_spread_um: f64,
    pub key_centroid_um: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedInstance {
    /// Position in the original instance list.
    pub index: usize,
    pub instance: GateInstance,
}

/// An extra sink on an existing victim net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetTap {
    pub net: String,
    pub sink: Endpoint,
}

/// Congestion model for the routing estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteParams {
    /// Track pitch per layer, µm.
    pub pitch_um: [f64; 6],
    /// How the existing wiring is spread over the layers.
    pub existing_split: [f64; 6],
    /// Routed length over half-perimeter for existing nets.
    pub detour: f64,
    /// Share of each layer's tracks taken by cell pin access at full density.
    pub pin_blockage: [f64; 6],
    /// Cost added per layer; the top layer is usable but least preferred.
    pub preference: [f64; 6],
    /// Nets longer than this avoid the bottom layer, µm.
    pub local_net_um: f64,
}

impl Default for RouteParams {
    fn default() -> Self {
        RouteParams {
            pitch_um: [0.2, 0.2, 0.2, 0.4, 0.4, 0.8],
            existing_split: [0.245, 0.309, 0.201, 0.140, 0.111, 0.0],
            detour: 1.2,
            pin_blockage: [0.6, 0.35, 0.15, 0.0, 0.0, 0.0],
            preference: [0.0, 0.0, 0.02, 0.05, 0.08, 0.25],
            local_net_um: 20.0,
        }
    }
}

impl RouteParams {
    /// Scales the pin-access blockage of the lower layers.
    pub fn with_congestion(mut self, scale: f64) -> Self {
        for b in &mut self.pin_blockage {
            *b *= scale;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    /// Estimated wiring already present, µm per layer.
    pub existing_um: [f64; 6],
    pub added_um: [f64; 6],
    pub capacity_um: [f64; 6],
    /// Length beyond capacity; reported, not enforced.
    pub overflow_um: f64,
}

impl RouteReport {
    pub fn added_total(&self) -> f64 {
        self.added_um.iter().sum()
    }

    /// Share of the added length on M5..M7.
    pub fn upper_fraction(&self) -> f64 {
        let t = self.added_total();
        if t == 0.0 {
            0.0
        } else {
            self.added_um[3..].iter().sum::<f64>() / t
        }
    }

    pub fn lower_fraction(&self) -> f64 {
        let t = self.added_total();
        if t == 0.0 {
            0.0
        } else {
            self.added_um[..3].iter().sum::<f64>() / t
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,existing_um,added_um,capacity_um\n");
        for (i, l) in LAYERS.iter().enumerate() {
            s.push_str(&format!(
                "{l},{:.1},{:.1},{:.1}\n",
                self.existing_um[i], self.added_um[i], self.capacity_um[i]
            ));
        }
        s
    }
}

/// Auditable difference between a layout and its trojaned version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcoPatch {
    pub schema: String,
    pub design: String,
    pub sct: SctConfig,
    pub added_instances: Vec<GateInstance>,
    pub added_nets: Vec<Net>,
    pub taps: Vec<NetTap>,
    pub removed_fillers: Vec<RemovedInstance>,
    pub ring_cells: Vec<String>,
    pub spread_um: f64,
    pub ring_spread_um: f64,
    pub routing: RouteReport,
}

impl EcoPatch {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("patch serializes")
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let p: EcoPatch = serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        if p.schema != PATCH_SCHEMA {
            return Err(Error::PatchMismatch(format!(
                "unsupported schema {:?}",
                p.schema
            )));
        }
        Ok(p)
    }

    pub fn sct_sites(&self, design: &PlacedDesign) -> u64 {
        self.added_instances
            .iter()
            .filter_map(|g| design.library.kind(&g.kind))
            .filter(|k| !k.is_filler)
            .map(|k| k.width as u64)
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Gap {
    row: u32,
    x0: u32,
    len: u32,
}

/// Places the fragment into filler space, each cell in the free gap closest
/// to its target: the sampled key register for taps, the key-register
/// centroid for the rest. Ties go to the lowest site index.
pub fn plan_placement(
    design: &PlacedDesign,
    fragment: &SctFragment,
    key_registers: &[String],
) -> Result<Placement> {
    let lib = &design.library;
    let idx = design.instance_index();
    let fillers = design.find_fillers();
    let need: u64 = fragment
        .cells
        .iter()
        .map(|c| lib.kind(&c.kind).map(|k| k.width as u64).unwrap_or(0))
        .sum();
    if need > fillers.freed_sites {
        return Err(Error::InsufficientArea {
            shortfall_sites: need - fillers.freed_sites,
        });
    }
    let mut key_pos = Vec::with_capacity(key_registers.len());
    for id in key_registers {
        let i = *idx
            .get(id.as_str())
            .ok_or_else(|| Error::Invalid(format!("key register {id} not in design")))?;
        let g = &design.instances[i];
        key_pos.push(design.center_um(g, design.kind_of(g).width));
    }
    let n = key_pos.len().max(1) as f64;
    let centroid = (
        key_pos.iter().map(|p| p.0).sum::<f64>() / n,
        key_pos.iter().map(|p| p.1).sum::<f64>() / n,
    );

    // Contiguous filler runs.
    let mut spans: Vec<_> = fillers
        .fillers
        .iter()
        .map(|f| (f.row, f.site, f.width))
        .collect();
    spans.sort();
    let mut gaps: Vec<Gap> = Vec::new();
    for (row, x, w) in spans {
        match gaps.last_mut() {
            Some(g) if g.row == row && g.x0 + g.len == x => g.len += w,
            _ => gaps.push(Gap { row, x0: x, len: w }),
        }
    }

    let sw = lib.site_width_um;
    let rh = lib.row_height_um;
    let mut placed = Vec::with_capacity(fragment.cells.len());
    let mut used: Vec<(u32, u32, u32)> = Vec::new();
    let mut order: Vec<&crate::sct::netlist::FragmentCell> = fragment.cells.iter().collect();
    order.sort_by_key(|c| c.block);
    for c in order {
        let w = lib
            .kind(&c.kind)
            .ok_or_else(|| Error::Invalid(format!("unknown kind {}", c.kind)))?
            .width;
        let target = match (c.block, c.key_bit) {
            (Block::Tap, Some(b)) if b < key_pos.len() => key_pos[b],
            _ => centroid,
        };
        let mut best: Option<(f64, u64, usize, u32)> = None;
        for (gi, g) in gaps.iter().enumerate() {
            if g.len < w {
                continue;
            }
            let tx = (target.0 / sw - w as f64 / 2.0).round();
            let x = tx.clamp(g.x0 as f64, (g.x0 + g.len - w) as f64) as u32;
            let cx = (x as f64 + w as f64 / 2.0) * sw;
            let cy = (g.row as f64 + 0.5) * rh;
            let d = ((cx - target.0).powi(2) + (cy - target.1).powi(2)).sqrt();
            let site = g.row as u64 * design.rows.sites as u64 + x as u64;
            let better = match best {
                None => true,
                Some((bd, bs, _, _)) => d < bd - 1e-9 || ((d - bd).abs() <= 1e-9 && site < bs),
            };
            if better {
                best = Some((d, site, gi, x));
            }
        }
        let Some((_, _, gi, x)) = best else {
            let left: u64 = gaps.iter().map(|g| g.len as u64).sum();
            return Err(Error::InsufficientArea {
                shortfall_sites: need.saturating_sub(left).max(w as u64),
            });
        };
        let g = gaps[gi];
        let right = Gap {
            row: g.row,
            x0: x + w,
            len: g.x0 + g.len - (x + w),
        };
        gaps[gi].len = x - g.x0;
        if right.len > 0 {
            gaps.push(right);
        }
        used.push((g.row, x, w));
        placed.push(GateInstance {
            id: c.id.clone(),
            kind: c.kind.clone(),
            x,
            y: g.row,
            fixed: true,
        });
    }

    // Fillers overlapping any used span are removed; the rest of their span is refilled.
    let mut by_row: HashMap<u32, Vec<(u32, u32)>> = HashMap::new();
    for &(r, x, w) in &used {
        by_row.entry(r).or_default().push((x, w));
    }
    let mut removed = Vec::new();
    let mut refill: Vec<(u32, u32, u32)> = Vec::new();
    for (i, g) in design.instances.iter().enumerate() {
        let k = design.kind_of(g);
        if !k.is_filler {
            continue;
        }
        let Some(row) = by_row.get(&g.y) else {
            continue;
        };
        let (a, b) = (g.x, g.x + k.width);
        let mut hits: Vec<(u32, u32)> = row
            .iter()
            .filter(|(x, w)| *x < b && x + w > a)
            .map(|&(x, w)| (x.max(a), (x + w).min(b)))
            .collect();
        if hits.is_empty() {
            continue;
        }
        hits.sort();
        removed.push(RemovedInstance {
            index: i,
            instance: g.clone(),
        });
        let mut cur = a;
        for (s, e) in hits {
            if s > cur {
                refill.push((g.y, cur, s - cur));
            }
            cur = cur.max(e);
        }
        if cur < b {
            refill.push((g.y, cur, b - cur));
        }
    }
    let existing: HashSet<&str> = design.instances.iter().map(|g| g.id.as_str()).collect();
    let mut new_fillers = Vec::new();
    let mut k = 0usize;
    for (row, mut x, mut len) in refill {
        for f in lib.fillers_desc() {
            while len >= f.width {
                let mut id = format!("eco_fill_{k}");
                while existing.contains(id.as_str()) {
                    k += 1;
                    id = format!("eco_fill_{k}");
                }
                k += 1;
                new_fillers.push(GateInstance {
                    id,
                    kind: f.name.clone(),
                    x,
                    y: row,
                    fixed: false,
                });
                x += f.width;
                len -= f.width;
            }
        }
    }

    let ring: HashSet<&str> = fragment.ring_cells();
    let centers: Vec<((f64, f64), bool)> = placed
        .iter()
        .map(|g| {
            let w = lib.kind(&g.kind).map(|k| k.width).unwrap_or(1);
            (design.center_um(g, w), ring.contains(g.id.as_str()))
        })
        .collect();
    let rms = |pts: &[(f64, f64)]| {
        if pts.is_empty() {
            return 0.0;
        }
        let n = pts.len() as f64;
        let c = (
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1).sum::<f64>() / n,
        );
        (pts.iter()
            .map(|p| (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let all: Vec<(f64, f64)> = centers.iter().map(|c| c.0).collect();
    let ring_pts: Vec<(f64, f64)> = centers.iter().filter(|c| c.1).map(|c| c.0).collect();
    Ok(Placement {
        spread_um: rms(&all),
        ring_spread_um: rms(&ring_pts),
        cells: placed,
        removed_fillers: removed,
        new_fillers,
        key_centroid_um: centroid,
    })
}

/// Victim net carrying each external port of the fragment.
fn port_nets(
    design: &PlacedDesign,
    n_key: usize,
    key_registers: &[String],
    trigger_net: &str,
) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    let tagged = |tag: &str| {
        design
            .net_by_tag(tag)
            .map(|n| n.id.clone())
            .ok_or_else(|| Error::Invalid(format!("design has no net tagged {tag}")))
    };
    map.insert(PORT_CLOCK.to_string(), tagged("clock")?);
    map.insert(PORT_RESET.to_string(), tagged("reset")?);
    if !design.nets.iter().any(|n| n.id == trigger_net) {
        return Err(Error::Invalid(format!(
            "trigger net {trigger_net} not in design"
        )));
    }
    map.insert(PORT_TRIGGER.to_string(), trigger_net.to_string());
    if key_registers.len() != n_key {
        return Err(Error::Invalid(format!(
            "{} key registers given, trojan expects {n_key}",
            key_registers.len()
        )));
    }
    let q_net: HashMap<&str, &str> = design
        .nets
        .iter()
        .filter_map(|n| match &n.driver {
            Endpoint::Pin { inst, .. } => Some((inst.as_str(), n.id.as_str())),
            _ => None,
        })
        .collect();
    for (i, r) in key_registers.iter().enumerate() {
        let net = q_net
            .get(r.as_str())
            .ok_or_else(|| Error::Invalid(format!("key register {r} drives no net")))?;
        map.insert(key_port(i), net.to_string());
    }
    Ok(map)
}

/// The net carrying the core's completion pulse: the configured one, else
/// whatever drives the `done` output port.
pub fn resolve_trigger(design: &PlacedDesign, sct: &SctConfig) -> Result<String> {
    if let Some(t) = &sct.trigger_net {
        return if design.nets.iter().any(|n| &n.id == t) {
            Ok(t.clone())
        } else {
            Err(Error::Invalid(format!("trigger net {t} not in design")))
        };
    }
    design
        .nets
        .iter()
        .find(|n| {
            n.sinks
                .iter()
                .any(|s| matches!(s, Endpoint::Port { port } if port == "done"))
        })
        .map(|n| n.id.clone())
        .ok_or_else(|| {
            Error::Invalid("no trigger net configured and no net drives a done port".into())
        })
}

/// Key register instance ids in leak order: the configured order, else the
/// key finder's answer.
pub fn resolve_key_registers(
    design: &PlacedDesign,
    sct: &SctConfig,
    mode: KeyFindMode,
) -> Result<Vec<String>> {
    if !sct.key_register_order.is_empty() {
        return Ok(sct.key_register_order.clone());
    }
    let extract = match mode {
        KeyFindMode::Oracle => ExtractMode::Oracle,
        KeyFindMode::Heuristic => ExtractMode::Attacker,
    };
    let nl = Netlist::extract(design, extract);
    let regs = find_key_registers(&nl, &design.library, sct.n_key as usize, mode)?;
    Ok(regs
        .into_iter()
        .map(|c| nl.cells[c].origin.clone())
        .collect())
}

/// Resolves trigger and key registers, then builds and applies the patch.
pub fn insert_sct(
    design: &PlacedDesign,
    sct: &SctConfig,
    mode: KeyFindMode,
    route: &RouteParams,
) -> Result<(EcoPatch, PlacedDesign)> {
    let trigger = resolve_trigger(design, sct)?;
    let keys = resolve_key_registers(design, sct, mode)?;
    let mut cfg = sct.clone();
    cfg.trigger_net = Some(trigger.clone());
    cfg.key_register_order = keys.clone();
    let patch = build_patch(design, &cfg, &keys, &trigger, route)?;
    let after = apply_eco(design, &patch)?;
    Ok((patch, after))
}

/// Plans, wires and route-estimates the trojan for `design`.
pub fn build_patch(
    design: &PlacedDesign,
    sct: &SctConfig,
    key_registers: &[String],
    trigger_net: &str,
    route: &RouteParams,
) -> Result<EcoPatch> {
    sct.validate()?;
    let fragment = build_sct_netlist(sct, sct.flavor);
    let ports = port_nets(design, sct.n_key as usize, key_registers, trigger_net)?;
    let ids: HashSet<&str> = design.instances.iter().map(|g| g.id.as_str()).collect();
    let net_ids: HashSet<&str> = design.nets.iter().map(|n| n.id.as_str()).collect();
    if let Some(c) = fragment.cells.iter().find(|c| ids.contains(c.id.as_str())) {
        return Err(Error::PatchMismatch(format!(
            "instance id {} already used",
            c.id
        )));
    }
    let placement = plan_placement(design, &fragment, key_registers)?;
    let mut added_nets = Vec::new();
    let mut taps = Vec::new();
    for n in &fragment.nets {
        match &n.driver {
            Endpoint::Port { port } => {
                let victim = ports.get(port).ok_or_else(|| {
                    Error::PatchMismatch(format!("no victim net for port {port}"))
                })?;
                for s in &n.sinks {
                    taps.push(NetTap {
                        net: victim.clone(),
                        sink: s.clone(),
                    });
                }
            }
            Endpoint::Pin { .. } => {
                if net_ids.contains(n.id.as_str()) {
                    return Err(Error::PatchMismatch(format!(
                        "net id {} already used",
                        n.id
                    )));
                }
                added_nets.push(n.clone());
            }
        }
    }
    let mut added_instances = placement.cells.clone();
    added_instances.extend(placement.new_fillers.iter().cloned());
    let mut patch = EcoPatch {
        schema: PATCH_SCHEMA.into(),
        design: design.name.clone(),
        sct: sct.clone(),
        added_instances,
        added_nets,
        taps,
        removed_fillers: placement.removed_fillers,
        ring_cells: fragment
            .ring_cells()
            .into_iter()
            .map(String::from)
            .collect(),
        spread_um: placement.spread_um,
        ring_spread_um: placement.ring_spread_um,
        routing: RouteReport {
            existing_um: [0.0; 6],
            added_um: [0.0; 6],
            capacity_um: [0.0; 6],
            overflow_um: 0.0,
        },
    };
    patch.ring_cells.sort();
    patch.routing = route_estimate(design, &patch, route);
    Ok(patch)
}

/// Half-perimeter length of every added connection, assigned net by net to
/// the eligible layer with the lowest utilization plus preference cost.
pub fn route_estimate(
    design: &PlacedDesign,
    patch: &EcoPatch,
    params: &RouteParams,
) -> RouteReport {
    let lib = &design.library;
    let idx = design.instance_index();
    let (w, h) = design.core_size_um();
    let area = w * h;
    let existing_total: f64 = design
        .nets
        .iter()
        .map(|n| design.net_hpwl_um(n, &idx))
        .sum::<f64>()
        * params.detour;
    let density = design.density();
    let mut capacity = [0.0; 6];
    let mut usage = [0.0; 6];
    let mut existing = [0.0; 6];
    for l in 0..6 {
        capacity[l] = area / params.pitch_um[l];
        existing[l] = existing_total * params.existing_split[l];
        usage[l] = existing[l] + params.pin_blockage[l] * density * capacity[l];
    }

    // Positions of everything the patch touches.
    let mut pos: HashMap<&str, (f64, f64)> = HashMap::new();
    for g in &patch.added_instances {
        if let Some(k) = lib.kind(&g.kind) {
            pos.insert(g.id.as_str(), design.center_um(g, k.width));
        }
    }
    let at = |e: &Endpoint| -> Option<(f64, f64)> {
        let id = e.inst()?;
        pos.get(id).copied().or_else(|| {
            idx.get(id).map(|&i| {
                let g = &design.instances[i];
                design.center_um(g, design.kind_of(g).width)
            })
        })
    };
    let mut lengths: Vec<f64> = Vec::new();
    for n in &patch.added_nets {
        let pts: Vec<_> = std::iter::once(&n.driver)
            .chain(&n.sinks)
            .filter_map(at)
            .collect();
        lengths.push(crate::design::hpwl(&pts));
    }
    let nets: HashMap<&str, &Net> = design.nets.iter().map(|n| (n.id.as_str(), n)).collect();
    for t in &patch.taps {
        let Some(p) = at(&t.sink) else { continue };
        let Some(n) = nets.get(t.net.as_str()) else {
            continue;
        };
        // Branch from the closest existing pin of the net.
        let d = std::iter::once(&n.driver)
            .chain(&n.sinks)
            .filter_map(at)
            .map(|q| (q.0 - p.0).abs() + (q.1 - p.1).abs())
            .fold(f64::INFINITY, f64::min);
        if d.is_finite() {
            lengths.push(d);
        }
    }
    lengths.sort_by(|a, b| b.total_cmp(a));
    let mut added = [0.0; 6];
    for len in lengths {
        if len <= 0.0 {
            continue;
        }
        let mut best = (f64::INFINITY, 0usize);
        for l in 0..6 {
            if l == 0 && len > params.local_net_um {
                continue;
            }
            let cost = (usage[l] + len) / capacity[l] + params.preference[l];
            if cost < best.0 {
                best = (cost, l);
            }
        }
        added[best.1] += len;
        usage[best.1] += len;
    }
    let overflow = (0..6).map(|l| (usage[l] - capacity[l]).max(0.0)).sum();
    RouteReport {
        existing_um: existing,
        added_um: added,
        capacity_um: capacity,
        overflow_um: overflow,
    }
}

/// Applies `patch`. Victim instances keep their records; removed fillers
/// must match the design exactly.
pub fn apply_eco(design: &PlacedDesign, patch: &EcoPatch) -> Result<PlacedDesign> {
    if patch.design != design.name {
        return Err(Error::PatchMismatch(format!(
            "patch is for {}, design is {}",
            patch.design, design.name
        )));
    }
    let mut drop = HashSet::new();
    for r in &patch.removed_fillers {
        match design.instances.get(r.index) {
            Some(g) if *g == r.instance && design.kind_of(g).is_filler => {
                drop.insert(r.index);
            }
            _ => {
                return Err(Error::PatchMismatch(format!(
                    "filler {} not found at index {}",
                    r.instance.id, r.index
                )))
            }
        }
    }
    let mut out = design.clone();
    out.instances = design
        .instances
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, g)| g.clone())
        .collect();
    out.instances.extend(patch.added_instances.iter().cloned());
    out.nets.extend(patch.added_nets.iter().cloned());
    let pos: HashMap<String, usize> = out
        .nets
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();
    for t in &patch.taps {
        let i = *pos
            .get(&t.net)
            .ok_or_else(|| Error::PatchMismatch(format!("tapped net {} not in design", t.net)))?;
        out.nets[i].sinks.push(t.sink.clone());
    }
    out.validate()
        .map_err(|e| Error::PatchMismatch(e.to_string()))?;
    Ok(out)
}

/// Undoes [`apply_eco`].
pub fn revert_eco(trojaned: &PlacedDesign, patch: &EcoPatch) -> Result<PlacedDesign> {
    let added: HashSet<&str> = patch
        .added_instances
        .iter()
        .map(|g| g.id.as_str())
        .collect();
    let mut out = trojaned.clone();
    let before = out.instances.len();
    out.instances.retain(|g| !added.contains(g.id.as_str()));
    if before - out.instances.len() != added.len() {
        return Err(Error::PatchMismatch(
            "added instances missing from design".into(),
        ));
    }
    let mut removed = patch.removed_fillers.clone();
    removed.sort_by_key(|r| r.index);
    for r in removed {
        if r.index > out.instances.len() {
            return Err(Error::PatchMismatch(format!(
                "filler index {} out of range",
                r.index
            )));
        }
        out.instances.insert(r.index, r.instance);
    }
    let added_nets: HashSet<&str> = patch.added_nets.iter().map(|n| n.id.as_str()).collect();
    out.nets.retain(|n| !added_nets.contains(n.id.as_str()));
    let pos: HashMap<String, usize> = out
        .nets
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();
    for t in patch.taps.iter().rev() {
        let i = *pos
            .get(&t.net)
            .ok_or_else(|| Error::PatchMismatch(format!("tapped net {} not in design", t.net)))?;
        if out.nets[i].sinks.last() != Some(&t.sink) {
            return Err(Error::PatchMismatch(format!("tap on {} not found", t.net)));
        }
        out.nets[i].sinks.pop();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignoffReport {
    pub ok: bool,
    pub min_slack: f64,
    pub worst_endpoint: String,
    /// Worst slack over victim endpoints.
    pub victim_min_slack: f64,
    /// Worst slack over the trojan's own endpoints, if it has any.
    pub sct_min_slack: Option<f64>,
    pub violations: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remedy: Option<String>,
}

/// Static timing of the trojaned layout at its clock period and `margin`.
/// Ring cells free-run and are excluded; the controller is checked at its
/// divided clock.
pub fn signoff(
    trojaned: &PlacedDesign,
    ring_cells: &[String],
    sct_prefix: &str,
    margin: f64,
) -> Result<SignoffReport> {
    let nl = Netlist::extract(trojaned, ExtractMode::Oracle);
    let ring: HashSet<&str> = ring_cells.iter().map(String::as_str).collect();
    let mut opts = StaOptions::new(trojaned.clock_period, margin);
    opts.disabled = (0..nl.cells.len())
        .filter(|&c| ring.contains(nl.cells[c].origin.as_str()))
        .collect();
    let rep = analyze_timing::<f64>(&nl, &trojaned.library, &opts)?;
    let mut victim = f64::INFINITY;
    let mut sct: Option<f64> = None;
    let mut worst = (String::new(), f64::INFINITY);
    let mut violations = Vec::new();
    for (ep, &s) in &rep.slack_per_endpoint {
        if ep.starts_with(sct_prefix) {
            sct = Some(sct.map_or(s, |m: f64| m.min(s)));
        } else {
            victim = victim.min(s);
        }
        if s < worst.1 {
            worst = (ep.clone(), s);
        }
        if s < 0.0 {
            violations.push((ep.clone(), s));
        }
    }
    violations.sort_by(|a, b| a.1.total_cmp(&b.1));
    let ok = violations.is_empty();
    let remedy = (!ok).then(|| {
        if violations.iter().any(|(e, _)| e.starts_with(sct_prefix)) {
            "trojan paths miss the divided clock: raise the clock divider ratio, or choose another ring and leak fewer bits per clock cycle".to_string()
        } else {
            "victim paths lose slack to the taps: choose another ring or tap placement, raise the divider and leak fewer bits per clock cycle".to_string()
        }
    });
    Ok(SignoffReport {
        ok,
        min_slack: worst.1,
        worst_endpoint: worst.0,
        victim_min_slack: victim,
        sct_min_slack: sct,
        violations,
        remedy,
    })
}

/// Non-filler area share on a grid of `bin_um` squares, row-major from the
/// bottom-left corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    pub bin_um: f64,
    pub bins_x: usize,
    pub bins_y: usize,
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn of(design: &PlacedDesign, bin_um: f64) -> Self {
        let (w, h) = design.core_size_um();
        let bins_x = (w / bin_um).ceil().max(1.0) as usize;
        let bins_y = (h / bin_um).ceil().max(1.0) as usize;
        let mut acc = vec![0.0; bins_x * bins_y];
        let lib = &design.library;
        let rh = lib.row_height_um;
        let sw = lib.site_width_um;
        for g in &design.instances {
            let k = design.kind_of(g);
            if k.is_filler {
                continue;
            }
            let y = (g.y as f64 + 0.5) * rh;
            let by = ((y / bin_um) as usize).min(bins_y - 1);
            // Split the cell's width across the bins it spans.
            let (x0, x1) = (g.x as f64 * sw, (g.x + k.width) as f64 * sw);
            let mut x = x0;
            while x < x1 - 1e-12 {
                let bx = ((x / bin_um) as usize).min(bins_x - 1);
                let edge = ((bx + 1) as f64 * bin_um).min(x1);
                acc[by * bins_x + bx] += (edge - x) * rh;
                x = edge;
            }
        }
        let values = acc
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let (bx, by) = (i % bins_x, i / bins_x);
                let bw = (w - bx as f64 * bin_um).min(bin_um);
                let bh = (h - by as f64 * bin_um).min(bin_um);
                a / (bw * bh)
            })
            .collect();
        DensityMap {
            bin_um,
            bins_x,
            bins_y,
            values,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x_um,y_um,density\n");
        for (i, v) in self.values.iter().enumerate() {
            let (bx, by) = (i % self.bins_x, i / self.bins_x);
            s.push_str(&format!(
                "{:.2},{:.2},{:.4}\n",
                bx as f64 * self.bin_um,
                by as f64 * self.bin_um,
                v
            ));
        }
        s
    }
}

/// Density before and after, in percent of row area.
pub fn density_change(before: &PlacedDesign, after: &PlacedDesign) -> (f64, f64) {
    (100.0 * before.density(), 100.0 * after.density())
}

/// Per-layer added length keyed by layer name.
pub fn layer_table(r: &RouteReport) -> BTreeMap<String, f64> {
    LAYERS
        .iter()
        .enumerate()
        .map(|(i, l)| (l.to_string(), r.added_um[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::tests::tiny;
    use crate::design::Rows;
    use crate::sct::netlist::FragmentCell;

    fn fragment(kinds: &[&str]) -> SctFragment {
        SctFragment {
            cells: kinds
                .iter()
                .enumerate()
                .map(|(i, k)| FragmentCell {
                    id: format!("sct_c{i}"),
                    kind: k.to_string(),
                    block: Block::Controller,
                    key_bit: None,
                })
                .collect(),
            nets: Vec::new(),
            s0_net: String::new(),
            s1_net: String::new(),
            enable_net: String::new(),
            controller_clock: String::new(),
        }
    }

    #[test]
    fn one_cell_goes_into_the_only_gap() {
        let d = tiny();
        let p = plan_placement(&d, &fragment(&["INV_X1_SVT"]), &["u0".into()]).unwrap();
        assert_eq!((p.cells[0].x, p.cells[0].y), (3, 0));
        assert_eq!(p.removed_fillers.len(), 1);
        assert_eq!(p.removed_fillers[0].index, 1);
        assert_eq!(p.new_fillers.len(), 1);
        assert_eq!(
            (p.new_fillers[0].kind.as_str(), p.new_fillers[0].x),
            ("FILL1", 6)
        );
        assert_eq!(p.spread_um, 0.0);
    }

    #[test]
    fn oversized_fragment_reports_shortfall() {
        let d = tiny();
        match plan_placement(&d, &fragment(&["AND2_X1_SVT"]), &["u0".into()]) {
            Err(Error::InsufficientArea { shortfall_sites }) => assert_eq!(shortfall_sites, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn wide() -> PlacedDesign {
        let mut d = tiny();
        d.rows = Rows {
            count: 1,
            sites: 100,
        };
        d.instances[1].kind = "FILL64".into();
        d.instances.push(GateInstance {
            id: "f1".into(),
            kind: "FILL32".into(),
            x: 67,
            y: 0,
            fixed: true,
        });
        d.instances.push(GateInstance {
            id: "f2".into(),
            kind: "FILL1".into(),
            x: 99,
            y: 0,
            fixed: true,
        });
        d.validate().unwrap();
        d
    }

    fn patch_with(nets: Vec<Net>, cells: Vec<GateInstance>) -> EcoPatch {
        EcoPatch {
            schema: PATCH_SCHEMA.into(),
            design: "tiny".into(),
            sct: crate::sct::design::reference_config(
                &crate::library::CellLibrary::default_65nm(),
                "PST_HF",
                crate::library::Flavor::Svt,
                20.0,
            )
            .unwrap(),
            added_instances: cells,
            added_nets: nets,
            taps: Vec::new(),
            removed_fillers: Vec::new(),
            ring_cells: Vec::new(),
            spread_um: 0.0,
            ring_spread_um: 0.0,
            routing: RouteReport {
                existing_um: [0.0; 6],
                added_um: [0.0; 6],
                capacity_um: [0.0; 6],
                overflow_um: 0.0,
            },
        }
    }

    #[test]
    fn two_pin_net_routes_its_half_perimeter() {
        let d = wide();
        let g = |id: &str, x| GateInstance {
            id: id.into(),
            kind: "INV_X1_SVT".into(),
            x,
            y: 0,
            fixed: true,
        };
        let net = Net {
            id: "sct_n".into(),
            driver: Endpoint::pin("sct_a", "Y"),
            sinks: vec![Endpoint::pin("sct_b", "A")],
        };
        let p = patch_with(vec![net], vec![g("sct_a", 10), g("sct_b", 60)]);
        let r = route_estimate(&d, &p, &RouteParams::default());
        assert!((r.added_total() - 10.0).abs() < 1e-9, "{r:?}");
        let empty = route_estimate(
            &d,
            &patch_with(Vec::new(), Vec::new()),
            &RouteParams::default(),
        );
        assert_eq!(empty.added_total(), 0.0);
        assert_eq!(empty.upper_fraction(), 0.0);
    }

    #[test]
    fn density_map_covers_the_core() {
        let d = wide();
        let m = DensityMap::of(&d, 10.0);
        assert_eq!((m.bins_x, m.bins_y), (2, 1));
        let area = d.row_area();
        let cells: f64 = m.values.iter().map(|v| v * 10.0 * 1.8).sum();
        assert!((cells / area - d.density()).abs() < 1e-9);
        assert_eq!(m.to_csv().lines().count(), 3);
    }
}
