// SPDX-License-Identifier: Apache-2.0

//! Ring families fitted by `calibrate_ro_constants` on the built-in anchor
//! sets and frozen into the default library. Regenerate with
//! `cargo run --example fit_rings`.

use crate::library::RoFamily;

#[allow(clippy::too_many_arguments)]
fn fam(
    name: &str,
    group: &str,
    reference_n_key: u32,
    reference_freq_mhz: f64,
    split: [u32; 4],
    reference_n_i: u32,
    tau_dcell: f64,
    tau_inv: f64,
    tau_nand: f64,
    tau_ctl: f64,
    e_dcell: f64,
    e_inv: f64,
    e_fixed: f64,
) -> RoFamily {
    RoFamily {
        name: name.into(),
        group: group.into(),
        reference_n_key,
        reference_freq_mhz,
        split,
        reference_n_i,
        tau_dcell,
        tau_inv,
        tau_nand,
        tau_ctl,
        e_dcell,
        e_inv,
        e_fixed,
    }
}

pub fn families() -> Vec<RoFamily> {
    vec![
        fam(
            "AES_HF",
            "core",
            128,
            1000.0,
            [4, 1, 3, 2],
            10,
            126.108147,
            10.835331,
            14.085931,
            280.635079,
            8.849539,
            4.059491,
            102.840438,
        ),
        fam(
            "AES_LF",
            "core",
            128,
            100.0,
            [1, 1, 2, 2],
            10,
            3470.927551,
            113.335316,
            147.335910,
            2935.384677,
            33.480490,
            3.102269,
            78.590819,
        ),
        fam(
            "PST_HF",
            "core",
            80,
            950.0,
            [2, 1, 3, 2],
            10,
            1592.794268,
            86.055345,
            111.871948,
            2228.833431,
            23.822686,
            6.061406,
            153.555630,
        ),
        fam(
            "PST_LF",
            "core",
            80,
            95.0,
            [1, 1, 2, 2],
            4,
            4134.110054,
            10.861055,
            14.119372,
            281.301331,
            23.741138,
            1.524196,
            38.612959,
        ),
        fam(
            "AES_HFHD",
            "testchip",
            128,
            1000.0,
            [0, 2, 6, 4],
            14,
            63.054074,
            22.026867,
            28.634927,
            570.495850,
            4.592434,
            5.720390,
            144.916547,
        ),
        fam(
            "AES_LFHD",
            "testchip",
            128,
            100.0,
            [0, 2, 4, 2],
            14,
            1323.551018,
            134.852494,
            175.308242,
            3492.679600,
            16.903168,
            4.458685,
            112.953365,
        ),
        fam(
            "PST_HFHD",
            "testchip",
            80,
            950.0,
            [2, 1, 3, 4],
            10,
            2616.621310,
            9.996975,
            12.996068,
            258.921659,
            32.897556,
            2.703507,
            68.488848,
        ),
        fam(
            "PST_LFHD",
            "testchip",
            80,
            95.0,
            [0, 1, 3, 4],
            6,
            2615.978761,
            89.072056,
            115.793673,
            2306.966246,
            30.474544,
            2.097569,
            53.138402,
        ),
    ]
}
