// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use sctkit::design::PlacedDesign;
use sctkit::presets;

fn pst_lfld(seed: u64) -> PlacedDesign {
    presets::preset("PST_LFLD").unwrap().generate(seed).unwrap()
}

#[test]
fn malformed_json_is_rejected() {
    assert!(PlacedDesign::parse_str("{\"name\": 3}").is_err());
    assert!(PlacedDesign::parse_str("").is_err());
}

#[test]
fn removing_nothing_changes_nothing() {
    let d = &common::trojaned("PST_LFLD").clean;
    assert_eq!(d.remove_fillers(&[]).unwrap().to_json(), d.to_json());
}

#[test]
fn removing_every_filler_leaves_none() {
    let d = &common::trojaned("PST_LFLD").clean;
    let ids: Vec<String> = d.find_fillers().fillers.into_iter().map(|f| f.id).collect();
    let stripped = d.remove_fillers(&ids).unwrap();
    let r = stripped.find_fillers();
    assert!(r.fillers.is_empty());
    assert_eq!(r.freed_sites, 0);
    stripped.validate().unwrap();
}

#[test]
fn freed_fraction_is_the_complement_of_density() {
    let d = &common::trojaned("PST_LFHD").clean;
    let r = d.find_fillers();
    assert!(
        (r.freed_fraction - (1.0 - d.density())).abs() < 0.02,
        "{} vs {}",
        r.freed_fraction,
        d.density()
    );
    assert!((r.freed_area - r.freed_sites as f64 * d.library.site_area()).abs() < 1e-9);
}

#[test]
fn non_filler_removal_is_refused() {
    let d = &common::trojaned("PST_LFLD").clean;
    let fillers: HashSet<String> = d.find_fillers().fillers.into_iter().map(|f| f.id).collect();
    let logic = d
        .instances
        .iter()
        .find(|g| !fillers.contains(&g.id))
        .unwrap()
        .id
        .clone();
    assert!(d.remove_fillers(&[logic]).is_err());
    assert!(d.remove_fillers(&["no_such_cell".into()]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn generated_designs_round_trip(seed in 0u64..1000) {
        let d = pst_lfld(seed);
        d.validate().unwrap();
        let text = d.to_json();
        let back = PlacedDesign::parse_str(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filler_subset_removal(mask in prop::collection::vec(any::<bool>(), 64)) {
        let d = &common::trojaned("PST_LFLD").clean;
        let before = d.find_fillers();
        let chosen: Vec<String> = before
            .fillers
            .iter()
            .enumerate()
            .filter(|(i, _)| mask[i % mask.len()])
            .map(|(_, f)| f.id.clone())
            .collect();
        let gone: HashSet<&str> = chosen.iter().map(String::as_str).collect();
        let after = d.remove_fillers(&chosen).unwrap();
        let freed: u64 = before.fillers.iter().filter(|f| gone.contains(f.id.as_str())).map(|f| f.width as u64).sum();
        prop_assert_eq!(after.find_fillers().freed_sites + freed, before.freed_sites);
        prop_assert_eq!(after.instances.len() + chosen.len(), d.instances.len());
        prop_assert_eq!(&after.nets, &d.nets);
        prop_assert_eq!(after.cell_sites(), d.cell_sites());
        after.validate().unwrap();
    }
}
