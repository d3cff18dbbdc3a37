// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use rayon::prelude::*;
use sctkit::design::PlacedDesign;
use sctkit::eco::*;
use sctkit::netlist::KeyFindMode;
use sctkit::presets::{self, Preset};
use sctkit::sct::SctConfig;
use sctkit::Error;

fn inserted(name: &str, seed: u64) -> (Preset, PlacedDesign, EcoPatch, PlacedDesign) {
    let p = presets::preset(name).unwrap();
    let d = p.generate(seed).unwrap();
    let (cfg, _) = p.planned_sct(&d.library).unwrap();
    let (patch, after) =
        insert_sct(&d, &cfg, KeyFindMode::Oracle, &RouteParams::default()).unwrap();
    (p, d, patch, after)
}

#[test]
fn victim_cells_and_nets_are_untouched() {
    let (_, d, patch, after) = inserted("PST_LFHD", 1);
    let after_idx: HashMap<&str, _> = after.instances.iter().map(|g| (g.id.as_str(), g)).collect();
    let removed: Vec<&str> = patch
        .removed_fillers
        .iter()
        .map(|r| r.instance.id.as_str())
        .collect();
    for g in &d.instances {
        if removed.contains(&g.id.as_str()) {
            assert!(d.kind_of(g).is_filler);
            assert!(!after_idx.contains_key(g.id.as_str()));
        } else {
            assert_eq!(after_idx[g.id.as_str()], g, "{} moved or changed", g.id);
        }
    }
    let after_nets: HashMap<&str, _> = after.nets.iter().map(|n| (n.id.as_str(), n)).collect();
    for n in &d.nets {
        let a = after_nets[n.id.as_str()];
        assert_eq!(a.driver, n.driver);
        assert_eq!(&a.sinks[..n.sinks.len()], &n.sinks[..]);
        assert!(a.sinks[n.sinks.len()..]
            .iter()
            .all(|s| s.inst().unwrap().starts_with("sct_")));
    }
    assert_eq!(d.tags, after.tags);
    after.validate().unwrap();
}

#[test]
fn patch_reverts_exactly_and_survives_json() {
    let (_, d, patch, after) = inserted("PST_HFLD", 3);
    assert_eq!(revert_eco(&after, &patch).unwrap(), d);
    let back = EcoPatch::parse_str(&patch.to_json()).unwrap();
    assert_eq!(back, patch);
    assert_eq!(apply_eco(&d, &back).unwrap(), after);
}

#[test]
fn patch_for_another_design_is_rejected() {
    let (_, _, patch, _) = inserted("PST_HFLD", 3);
    let other = presets::preset("PST_HFLD").unwrap().generate(4).unwrap();
    assert!(matches!(
        apply_eco(&other, &patch),
        Err(Error::PatchMismatch(_))
    ));
}

#[test]
fn density_rises_to_the_post_insertion_figure() {
    presets::NAMES.par_iter().for_each(|name| {
        let (p, d, patch, after) = inserted(name, 1);
        let (pre, post) = density_change(&d, &after);
        assert!(
            (post - 100.0 * p.post.density).abs() <= 2.0,
            "{name}: {pre:.2} -> {post:.2}"
        );
        let expect = pre + 100.0 * patch.sct_sites(&d) as f64 / d.row_sites() as f64;
        assert!((post - expect).abs() < 1e-9, "{name}");
    });
}

#[test]
fn larger_die_spreads_the_trojan_further() {
    let (_, _, big, _) = inserted("AES_HFHD", 1);
    let (_, _, small, _) = inserted("PST_LFHD", 1);
    assert!(
        big.spread_um > small.spread_um,
        "{} vs {}",
        big.spread_um,
        small.spread_um
    );
}

#[test]
fn dense_fast_core_escalates_to_upper_layers() {
    let (_, _, patch, _) = inserted("PST_HFHD", 1);
    let r = &patch.routing;
    assert!(r.upper_fraction() > r.lower_fraction(), "{r:?}");
    assert!(r.added_total() > 0.0);
    assert_eq!(r.to_csv().lines().count(), 7);
}

#[test]
fn escalation_grows_with_lower_layer_congestion() {
    let p = presets::preset("PST_LFLD").unwrap();
    let d = p.generate(2).unwrap();
    let (cfg, _) = p.planned_sct(&d.library).unwrap();
    let (patch, _) = insert_sct(&d, &cfg, KeyFindMode::Oracle, &RouteParams::default()).unwrap();
    let mut last = 0.0;
    for step in 0..=12 {
        let route = RouteParams::default().with_congestion(step as f64 * 0.25);
        let r = route_estimate(&d, &patch, &route);
        assert!((r.added_total() - patch.routing.added_total()).abs() < 1e-6);
        assert!(
            r.upper_fraction() >= last - 1e-12,
            "step {step}: {} < {last}",
            r.upper_fraction()
        );
        last = r.upper_fraction();
    }
    assert!(last > 0.5);
}

#[test]
fn full_core_has_no_room() {
    let p = presets::preset("PST_HFHD").unwrap();
    let d = p.generate(1).unwrap();
    let ids: Vec<String> = d.find_fillers().fillers.into_iter().map(|f| f.id).collect();
    let full = d.remove_fillers(&ids).unwrap();
    let (cfg, _) = p.planned_sct(&d.library).unwrap();
    match insert_sct(&full, &cfg, KeyFindMode::Oracle, &RouteParams::default()) {
        Err(Error::InsufficientArea { shortfall_sites }) => assert!(shortfall_sites > 0),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

#[test]
fn heuristic_keys_match_oracle_keys() {
    let p = presets::preset("PST_LFLD").unwrap();
    let d = p.generate(5).unwrap();
    let (cfg, _) = p.planned_sct(&d.library).unwrap();
    let o = resolve_key_registers(&d, &cfg, KeyFindMode::Oracle).unwrap();
    let h = resolve_key_registers(&d, &cfg, KeyFindMode::Heuristic).unwrap();
    assert_eq!(o, h);
    let mut fixed = cfg.clone();
    fixed.key_register_order = o[..].iter().rev().cloned().collect();
    assert_eq!(
        resolve_key_registers(&d, &fixed, KeyFindMode::Heuristic).unwrap(),
        fixed.key_register_order
    );
}

#[test]
fn trigger_is_the_done_net() {
    let p = presets::preset("PST_LFLD").unwrap();
    let d = p.generate(1).unwrap();
    let (cfg, _) = p.planned_sct(&d.library).unwrap();
    assert_eq!(
        resolve_trigger(&d, &cfg).unwrap(),
        d.net_by_tag("done").unwrap().id
    );
    let bad = SctConfig {
        trigger_net: Some("nope".into()),
        ..cfg
    };
    assert!(resolve_trigger(&d, &bad).is_err());
}

#[test]
fn signoff_keeps_victim_slack_non_negative() {
    let (_, d, patch, after) = inserted("PST_HFHD", 1);
    let pre = signoff(&d, &[], "sct_", 20.0).unwrap();
    let post = signoff(&after, &patch.ring_cells, "sct_", 20.0).unwrap();
    assert!(pre.ok && post.ok, "{post:?}");
    assert!(post.min_slack >= 0.0);
    assert!(post.victim_min_slack < pre.victim_min_slack);
    assert!(post.sct_min_slack.unwrap() >= 0.0);
    assert!(post.remedy.is_none());
}

#[test]
fn slow_wiring_fails_signoff_with_a_remedy() {
    let (_, _, patch, mut after) = inserted("PST_HFHD", 1);
    after.library.wire_cap_per_um *= 50.0;
    let r = signoff(&after, &patch.ring_cells, "sct_", 20.0).unwrap();
    assert!(!r.ok);
    assert!(r.min_slack < 0.0);
    assert!(!r.violations.is_empty());
    assert!(r.violations.windows(2).all(|w| w[0].1 <= w[1].1));
    assert!(r.remedy.as_deref().unwrap().contains("divider"));
}

#[test]
fn density_map_rises_where_the_trojan_lands() {
    let (_, d, _, after) = inserted("PST_LFLD", 1);
    let a = DensityMap::of(&d, 20.0);
    let b = DensityMap::of(&after, 20.0);
    assert_eq!(a.values.len(), b.values.len());
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| y + 1e-12 >= *x));
    assert!(b.values.iter().sum::<f64>() > a.values.iter().sum::<f64>());
}
