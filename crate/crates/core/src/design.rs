// SPDX-License-Identifier: Apache-2.0

//! Placed-design data model and the `design.json` exchange format.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{CellKind, CellLibrary};

pub const SCHEMA: &str = "sctkit.design/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rows {
    pub count: u32,
    /// Sites per row.
    pub sites: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateInstance {
    pub id: String,
    pub kind: String,
    /// Site index within the row.
    pub x: u32,
    /// Row index.
    pub y: u32,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Pin { inst: String, pin: String },
    Port { port: String },
}

impl Endpoint {
    pub fn pin(inst: impl Into<String>, pin: impl Into<String>) -> Self {
        Endpoint::Pin {
            inst: inst.into(),
            pin: pin.into(),
        }
    }

    pub fn port(name: impl Into<String>) -> Self {
        Endpoint::Port { port: name.into() }
    }

    pub fn inst(&self) -> Option<&str> {
        match self {
            Endpoint::Pin { inst, .. } => Some(inst),
            Endpoint::Port { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub id: String,
    pub driver: Endpoint,
    pub sinks: Vec<Endpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedDesign {
    pub schema: String,
    pub name: String,
    /// ps.
    pub clock_period: f64,
    pub library: CellLibrary,
    pub rows: Rows,
    pub ports: Vec<Port>,
    pub instances: Vec<GateInstance>,
    pub nets: Vec<Net>,
    /// Net id to semantic label (`key_bit[i]`, `done`, `clock`, `reset`).
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillerSpan {
    pub id: String,
    pub row: u32,
    pub site: u32,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillerReport {
    pub fillers: Vec<FillerSpan>,
    pub freed_sites: u64,
    /// µm².
    pub freed_area: f64,
    pub freed_fraction: f64,
}

impl PlacedDesign {
    pub fn parse_str(text: &str) -> Result<Self> {
        let d: PlacedDesign = crate::json::from_str(text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(self)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn kind_of(&self, inst: &GateInstance) -> &CellKind {
        self.library
            .kind(&inst.kind)
            .expect("validated design references known kinds")
    }

    pub fn instance_index(&self) -> HashMap<&str, usize> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, g)| (g.id.as_str(), i))
            .collect()
    }

    pub fn net_by_tag(&self, tag: &str) -> Option<&Net> {
        let id = self.tags.iter().find(|(_, t)| t.as_str() == tag)?.0;
        self.nets.iter().find(|n| &n.id == id)
    }

    pub fn row_sites(&self) -> u64 {
        self.rows.count as u64 * self.rows.sites as u64
    }

    pub fn row_area(&self) -> f64 {
        self.row_sites() as f64 * self.library.site_area()
    }

    pub fn cell_sites(&self) -> u64 {
        let lib = self.library.index();
        self.instances
            .iter()
            .map(|g| &self.library.kinds[lib[g.kind.as_str()]])
            .filter(|k| !k.is_filler)
            .map(|k| k.width as u64)
            .sum()
    }

    /// Non-filler area over row area.
    pub fn density(&self) -> f64 {
        if self.row_sites() == 0 {
            return 0.0;
        }
        self.cell_sites() as f64 / self.row_sites() as f64
    }

    /// Centre of an instance in µm.
    pub fn center_um(&self, inst: &GateInstance, width: u32) -> (f64, f64) {
        (
            (inst.x as f64 + width as f64 / 2.0) * self.library.site_width_um,
            (inst.y as f64 + 0.5) * self.library.row_height_um,
        )
    }

    pub fn core_size_um(&self) -> (f64, f64) {
        (
            self.rows.sites as f64 * self.library.site_width_um,
            self.rows.count as f64 * self.library.row_height_um,
        )
    }

    /// Instance-pin centres of a net in µm; ports carry no position.
    pub fn net_points(&self, net: &Net, idx: &HashMap<&str, usize>) -> Vec<(f64, f64)> {
        std::iter::once(&net.driver)
            .chain(&net.sinks)
            .filter_map(|e| e.inst())
            .map(|id| {
                let g = &self.instances[idx[id]];
                self.center_um(g, self.kind_of(g).width)
            })
            .collect()
    }

    /// Half-perimeter wirelength of a net in µm.
    pub fn net_hpwl_um(&self, net: &Net, idx: &HashMap<&str, usize>) -> f64 {
        hpwl(&self.net_points(net, idx))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::InvalidDesign(format!(
                "unsupported schema {:?}",
                self.schema
            )));
        }
        self.library.validate()?;
        if !(self.clock_period > 0.0) {
            return Err(Error::InvalidDesign("clock period must be positive".into()));
        }
        let lib = self.library.index();
        let mut ids = HashSet::new();
        let mut by_row: HashMap<u32, Vec<(u32, u32, &str)>> = HashMap::new();
        for g in &self.instances {
            if !ids.insert(g.id.as_str()) {
                return Err(Error::InvalidDesign(format!(
                    "duplicate instance id {}",
                    g.id
                )));
            }
            let k = lib
                .get(g.kind.as_str())
                .map(|&i| &self.library.kinds[i])
                .ok_or_else(|| {
                    Error::Dangling(format!("instance {} has unknown kind {}", g.id, g.kind))
                })?;
            if g.y >= self.rows.count || g.x + k.width > self.rows.sites {
                return Err(Error::InvalidDesign(format!(
                    "instance {} lies off the site grid",
                    g.id
                )));
            }
            by_row
                .entry(g.y)
                .or_default()
                .push((g.x, k.width, g.id.as_str()));
        }
        for (row, mut cells) in by_row {
            cells.sort();
            for w in cells.windows(2) {
                if w[0].0 + w[0].1 > w[1].0 {
                    return Err(Error::Overlap {
                        a: w[0].2.to_string(),
                        b: w[1].2.to_string(),
                        row,
                    });
                }
            }
        }
        let ports: HashMap<&str, Direction> = self
            .ports
            .iter()
            .map(|p| (p.name.as_str(), p.direction))
            .collect();
        let idx = self.instance_index();
        let mut net_ids = HashSet::new();
        for n in &self.nets {
            if !net_ids.insert(n.id.as_str()) {
                return Err(Error::InvalidDesign(format!("duplicate net id {}", n.id)));
            }
            let check = |e: &Endpoint, driver: bool| -> Result<()> {
                match e {
                    Endpoint::Pin { inst, pin } => {
                        let i = idx.get(inst.as_str()).ok_or_else(|| {
                            Error::Dangling(format!(
                                "net {} references missing instance {}",
                                n.id, inst
                            ))
                        })?;
                        let k = self.kind_of(&self.instances[*i]);
                        let ok = if driver {
                            k.output_pin() == Some(pin.as_str())
                        } else {
                            k.pin_caps.contains_key(pin)
                        };
                        if !ok {
                            return Err(Error::Dangling(format!(
                                "net {} references missing pin {}.{}",
                                n.id, inst, pin
                            )));
                        }
                    }
                    Endpoint::Port { port } => {
                        let want = if driver {
                            Direction::Input
                        } else {
                            Direction::Output
                        };
                        match ports.get(port.as_str()) {
                            Some(d) if *d == want => {}
                            _ => {
                                return Err(Error::Dangling(format!(
                                    "net {} references missing port {}",
                                    n.id, port
                                )))
                            }
                        }
                    }
                }
                Ok(())
            };
            check(&n.driver, true)?;
            for s in &n.sinks {
                check(s, false)?;
            }
        }
        for net in self.tags.keys() {
            if !net_ids.contains(net.as_str()) {
                return Err(Error::Dangling(format!("tag on missing net {net}")));
            }
        }
        Ok(())
    }

    pub fn find_fillers(&self) -> FillerReport {
        let lib = self.library.index();
        let fillers: Vec<FillerSpan> = self
            .instances
            .iter()
            .filter_map(|g| {
                let k = &self.library.kinds[lib[g.kind.as_str()]];
                k.is_filler.then(|| FillerSpan {
                    id: g.id.clone(),
                    row: g.y,
                    site: g.x,
                    width: k.width,
                })
            })
            .collect();
        let freed_sites: u64 = fillers.iter().map(|f| f.width as u64).sum();
        FillerReport {
            freed_area: freed_sites as f64 * self.library.site_area(),
            freed_fraction: if self.row_sites() == 0 {
                0.0
            } else {
                freed_sites as f64 / self.row_sites() as f64
            },
            fillers,
            freed_sites,
        }
    }

    pub fn remove_fillers(&self, selection: &[String]) -> Result<PlacedDesign> {
        let lib = self.library.index();
        let idx = self.instance_index();
        let mut drop = HashSet::new();
        for id in selection {
            let i = idx
                .get(id.as_str())
                .ok_or_else(|| Error::Invalid(format!("no instance {id}")))?;
            if !self.library.kinds[lib[self.instances[*i].kind.as_str()]].is_filler {
                return Err(Error::Invalid(format!("{id} is not a filler")));
            }
            drop.insert(id.as_str());
        }
        let mut out = self.clone();
        out.instances.retain(|g| !drop.contains(g.id.as_str()));
        Ok(out)
    }
}

/// Half-perimeter of the bounding box of `points`.
pub fn hpwl(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    (x1 - x0) + (y1 - y0)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn tiny() -> PlacedDesign {
        PlacedDesign {
            schema: SCHEMA.into(),
            name: "tiny".into(),
            clock_period: 100.0,
            library: CellLibrary::default_65nm(),
            rows: Rows {
                count: 1,
                sites: 10,
            },
            ports: vec![
                Port {
                    name: "a".into(),
                    direction: Direction::Input,
                },
                Port {
                    name: "y".into(),
                    direction: Direction::Output,
                },
            ],
            instances: vec![
                GateInstance {
                    id: "u0".into(),
                    kind: "INV_X1_SVT".into(),
                    x: 0,
                    y: 0,
                    fixed: true,
                },
                GateInstance {
                    id: "f0".into(),
                    kind: "FILL4".into(),
                    x: 3,
                    y: 0,
                    fixed: true,
                },
            ],
            nets: vec![
                Net {
                    id: "n0".into(),
                    driver: Endpoint::port("a"),
                    sinks: vec![Endpoint::pin("u0", "A")],
                },
                Net {
                    id: "n1".into(),
                    driver: Endpoint::pin("u0", "Y"),
                    sinks: vec![Endpoint::port("y")],
                },
            ],
            tags: BTreeMap::new(),
        }
    }

    #[test]
    fn minimal_design_round_trips() {
        let d = tiny();
        let text = d.to_json();
        let back = PlacedDesign::parse_str(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.instances.len(), 2);
        assert!((back.density() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn dangling_driver_rejected() {
        let mut d = tiny();
        d.nets[1].driver = Endpoint::pin("u9", "Y");
        let err = PlacedDesign::parse_str(&d.to_json()).unwrap_err();
        assert!(matches!(err, Error::Dangling(_)), "{err}");
    }

    #[test]
    fn overlap_rejected() {
        let mut d = tiny();
        d.instances[1].x = 2;
        let err = PlacedDesign::parse_str(&d.to_json()).unwrap_err();
        assert!(matches!(err, Error::Overlap { .. }), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = PlacedDesign::parse_str("{\n  \"schema\": }").unwrap_err();
        match err {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn filler_removal_keeps_other_instances() {
        let d = tiny();
        let rep = d.find_fillers();
        assert_eq!(rep.freed_sites, 4);
        let ids: Vec<String> = rep.fillers.iter().map(|f| f.id.clone()).collect();
        let r = d.remove_fillers(&ids).unwrap();
        assert!(r.find_fillers().fillers.is_empty());
        assert_eq!(r.instances[0], d.instances[0]);
        assert_eq!(d.remove_fillers(&[]).unwrap(), d);
        assert!(d.remove_fillers(&["u0".to_string()]).is_err());
    }
}
