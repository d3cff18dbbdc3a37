// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use sctkit::library::{CellLibrary, Flavor};
use sctkit::presets;
use sctkit::sct::calibrate::{self, calibrate_ro_constants};
use sctkit::sct::design::{
    check_budget, controller_meets_timing, design_sct, divider_ratio_for, SctRequest,
};
use sctkit::sct::ro::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1e-9)
}

#[test]
fn frozen_families_match_a_fresh_fit() {
    let lib = CellLibrary::default_65nm();
    for (group, anchors) in [
        (calibrate::CORE_GROUP, calibrate::core_anchors()),
        (calibrate::TESTCHIP_GROUP, calibrate::testchip_anchors()),
    ] {
        let cal = calibrate_ro_constants(&lib, group, &anchors, 0.10).unwrap();
        assert_eq!(cal.families.len(), 4);
        for f in &cal.families {
            let frozen = &lib.ro_constants[&f.name];
            assert_eq!(frozen.split, f.split, "{}", f.name);
            assert_eq!(frozen.reference_n_i, f.reference_n_i);
            assert_eq!(frozen.group, group);
            for (a, b) in [
                (frozen.tau_dcell, f.tau_dcell),
                (frozen.tau_inv, f.tau_inv),
                (frozen.tau_nand, f.tau_nand),
                (frozen.tau_ctl, f.tau_ctl),
                (frozen.e_dcell, f.e_dcell),
                (frozen.e_inv, f.e_inv),
                (frozen.e_fixed, f.e_fixed),
            ] {
                assert!(close(a, b), "{}: frozen {a} vs fit {b}", f.name);
            }
        }
    }
}

#[test]
fn active_path_examples() {
    let ro = RoDesign::new([3, 1, 2, 0], 2, "AES_LF").unwrap();
    assert_eq!(
        active_delay_cells(
            &ro,
            Selectors {
                s0: false,
                s1: false
            }
        ),
        3
    );
    assert_eq!(active_delay_cells(&ro, Selectors { s0: true, s1: true }), 6);
    assert_eq!(
        active_delay_cells(
            &ro,
            Selectors {
                s0: false,
                s1: true
            }
        ),
        5
    );
}

#[test]
fn small_present_ring_runs_near_twenty_megahertz() {
    let lib = CellLibrary::default_65nm();
    let ro = RoDesign::new([1, 1, 2, 2], 4, "PST_LF").unwrap();
    let f: f64 = ro_frequency(
        &lib.ro_constants["PST_LF"],
        &ro,
        Selectors::from_symbol(3),
        1.0,
    );
    assert!((f / 20.0 - 1.0).abs() <= 0.10, "{f}");
}

#[test]
fn reference_rings_slow_down_symbol_by_symbol() {
    let lib = CellLibrary::default_65nm();
    for fam in lib.ro_constants.values() {
        let ro = RoDesign::new(fam.split, fam.reference_n_i, fam.name.clone()).unwrap();
        let f: Vec<f64> = (0..4)
            .map(|v| ro_frequency(fam, &ro, Selectors::from_symbol(v), 1.0))
            .collect();
        assert!(f.windows(2).all(|w| w[0] > w[1]), "{}: {f:?}", fam.name);
    }
}

#[test]
fn divider_is_the_smallest_that_meets_timing() {
    let lib = CellLibrary::default_65nm();
    let p = presets::preset("PST_HFHD").unwrap();
    let (base, _) = p.planned_sct(&lib).unwrap();
    for mhz in [95.0, 950.0, 1000.0, 2000.0] {
        let r = divider_ratio_for(&lib, &base, mhz, 20.0).unwrap();
        assert!(r.is_power_of_two());
        let mut cfg = base.clone();
        cfg.divider_ratio = r;
        assert!(controller_meets_timing(&lib, &cfg, 1e6 / mhz, 20.0).unwrap());
        if r > 1 {
            cfg.divider_ratio = r / 2;
            assert!(
                !controller_meets_timing(&lib, &cfg, 1e6 / mhz, 20.0).unwrap(),
                "{mhz} MHz"
            );
        }
    }
    match divider_ratio_for(&lib, &base, 4000.0, 20.0) {
        Err(sctkit::Error::NoFeasibleRo { constraint, .. }) => assert_eq!(constraint, "timing"),
        other => panic!("{other:?}"),
    }
}

fn ring() -> impl Strategy<Value = RoDesign> {
    ([0u32..16, 1u32..16, 0u32..16, 0u32..16], 1u32..12)
        .prop_filter_map("valid ring", |(n_d, half)| {
            RoDesign::new(n_d, 2 * half, "PST_HF").ok()
        })
}

proptest! {
    #[test]
    fn active_path_follows_the_selector_table(ro in ring()) {
        let [d1, d2, d3, d4] = ro.n_d;
        let rows = [
            (false, false, d1),
            (true, false, d1 + d2),
            (false, true, d1 + d3),
            (true, true, d1 + d2 + d3 + d4),
        ];
        for (s0, s1, want) in rows {
            prop_assert_eq!(active_delay_cells(&ro, Selectors { s0, s1 }), want);
        }
    }

    #[test]
    fn extra_active_delay_cell_lowers_frequency(ro in ring(), v in 0u8..4, branch in 0usize..4) {
        let lib = CellLibrary::default_65nm();
        let fam = &lib.ro_constants["PST_HF"];
        let sel = Selectors::from_symbol(v);
        let on = [true, sel.s0, sel.s1, sel.s0 && sel.s1];
        prop_assume!(on[branch]);
        let mut longer = ro.clone();
        longer.n_d[branch] += 1;
        let f0: f64 = ro_frequency(fam, &ro, sel, 1.0);
        let f1: f64 = ro_frequency(fam, &longer, sel, 1.0);
        prop_assert!(f1 < f0);
        let sa: f64 = switching_activity(fam, &ro, sel, 1.0);
        prop_assert_eq!(sa, 2.0 * f0);
    }

    #[test]
    fn designed_ring_passes_its_own_budget(idx in 0usize..8, fraction in 0.05f64..0.6, leak in 0.0f64..200.0) {
        let lib = CellLibrary::default_65nm();
        let p = presets::all().swap_remove(idx);
        let mut req = SctRequest::new(p.report(), p.profile.freq_mhz, p.profile.n_key);
        req.fraction = fraction;
        req.competing_leakage = leak;
        if let Ok(cfg) = design_sct(&lib, &req) {
            let check = check_budget(&lib, &cfg, req.budget(&lib)).unwrap();
            prop_assert!(check.ok(), "{:?}", check);
            prop_assert_eq!(cfg.flavor, Flavor::Svt);
        }
    }
}

#[test]
fn f32_and_f64_ring_models_agree() {
    let lib = CellLibrary::default_65nm();
    let fam = &lib.ro_constants["AES_HF"];
    let ro = RoDesign::new(fam.split, fam.reference_n_i, "AES_HF").unwrap();
    for sel in Selectors::ALL {
        let a: f64 = ro_dynamic_power(fam, &ro, sel, 1.0);
        let b: f32 = ro_dynamic_power(fam, &ro, sel, 1.0f32);
        assert!((a - b as f64).abs() <= 1e-4 * a);
    }
}
