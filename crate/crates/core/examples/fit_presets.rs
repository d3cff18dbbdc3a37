// SPDX-License-Identifier: Apache-2.0

//! Fits core sizes and default activity for the built-in presets.

use std::time::Instant;

use sctkit::generate::measure;
use sctkit::library::CellLibrary;
use sctkit::power::{dynamic_power, Activity};
use sctkit::presets;
use sctkit::process::ProcessSample;
use sctkit::sct::netlist::build_sct_netlist;

fn main() {
    let lib = CellLibrary::default_65nm();
    let only: Vec<String> = std::env::args().skip(1).collect();
    for mut p in presets::all() {
        if !only.is_empty() && !only.iter().any(|o| o == p.name()) {
            continue;
        }
        let (cfg, designed) = p.planned_sct(&lib).expect("planned trojan");
        let frag = build_sct_netlist(&cfg, cfg.flavor).stats(&lib);
        let row_sites = (frag.sites as f64 / (p.post.density - p.profile.density)).round() as u64;
        p.row_sites = row_sites;
        let t = Instant::now();
        match p.generate(1) {
            Ok(d) => {
                let m = measure(&d, p.profile.freq_mhz).unwrap();
                let unit = Activity::Uniform {
                    toggles_per_cycle: 1.0,
                    freq_mhz: p.profile.freq_mhz,
                };
                let dyn1 = dynamic_power(&d, &unit, &ProcessSample::nominal());
                let want = p.profile.total_power - p.profile.leakage - p.profile.clock_tree_power;
                println!(
                    "{} ring {} designed {designed} sct_sites {} row_sites {row_sites} toggles {:.5} | leak {:.2}/{} clk {:.2}/{} dens {:.4}/{} f {:.1}/{} cells {} ({:.1}s)",
                    p.name(), cfg.ro.name(), frag.sites, want / dyn1,
                    m.leakage, p.profile.leakage, m.clock_tree_power, p.profile.clock_tree_power,
                    m.density, p.profile.density, m.freq_mhz, p.profile.freq_mhz, m.cells,
                    t.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("{} row_sites {row_sites} ERR {e}", p.name()),
        }
    }
}
