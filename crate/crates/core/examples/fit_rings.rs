// SPDX-License-Identifier: Apache-2.0

//! Prints fitted ring families as Rust source for `sct/frozen.rs`.

use sctkit::library::CellLibrary;
use sctkit::sct::calibrate::*;

fn main() {
    let lib = CellLibrary::default_65nm();
    for (group, anchors) in [
        (CORE_GROUP, core_anchors()),
        (TESTCHIP_GROUP, testchip_anchors()),
    ] {
        let rep = calibrate_ro_constants(&lib, group, &anchors, 0.10).expect("fit");
        eprintln!(
            "{group}: worst residual {:.2}%",
            100.0 * rep.max_abs_residual
        );
        for r in &rep.residuals {
            eprintln!(
                "  {} {} P {:.2}/{} F {:.1}/{}",
                r.target, r.selector, r.model_power_uw, r.power_uw, r.model_freq_mhz, r.freq_mhz
            );
        }
        for f in rep.families {
            println!(
                "        fam(\"{}\", \"{}\", {}, {:?}, {:?}, {}, {:?}, {:?}, {:?}, {:?}, {:?}, {:?}, {:?}),",
                f.name, f.group, f.reference_n_key, f.reference_freq_mhz, f.split, f.reference_n_i,
                f.tau_dcell, f.tau_inv, f.tau_nand, f.tau_ctl, f.e_dcell, f.e_inv, f.e_fixed
            );
        }
    }
}
