// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::prelude::*;
use sctkit::process::{ProcessModel, ProcessSample};
use sctkit::sct::ro::{ro_power, RoCorner, Selectors};
use sctkit::sim::*;
use sctkit::Error;

fn quiet() -> TraceConfig {
    TraceConfig {
        noise_sigma: 0.0,
        mismatch_sigma: 0.0,
        wire: WirePenalty {
            sigma: 0.0,
            ..WirePenalty::default()
        },
        process: ProcessModel::nominal(),
        ..TraceConfig::default()
    }
}

fn key_with_prefix(n: usize, prefix: &[bool]) -> Vec<bool> {
    let mut k = vec![false; n];
    k[..prefix.len()].copy_from_slice(prefix);
    k
}

fn bits(s: &str) -> Vec<bool> {
    s.chars().map(|c| c == '1').collect()
}

#[test]
fn first_four_steps_climb_for_11_10_01_00() {
    let t = common::trojaned("PST_LFHD");
    let key = key_with_prefix(80, &bits("11100100"));
    let tr = simulate_chip(&t.chip, &key, &ProcessSample::nominal(), &quiet()).unwrap();
    let a = tr.annotations.as_ref().unwrap();
    let means: Vec<f64> = tr
        .step_windows()
        .unwrap()
        .iter()
        .take(4)
        .map(|&(s, e)| tr.samples[s..e].iter().sum::<f64>() / (e - s) as f64)
        .collect();
    assert_eq!(
        a.steps[..4].iter().map(|m| m.symbol).collect::<Vec<_>>(),
        [3, 2, 1, 0]
    );
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
}

#[test]
fn noiseless_gaps_match_ring_power_differences() {
    let t = common::trojaned("PST_LFHD");
    let cfg = quiet();
    let lib = &t.design.library;
    let sct = &t.chip.sct;
    // Independent evaluation: full ring power at the wire-slowed corner, minus its leakage.
    let f = 1.0 + cfg.wire.coeff * t.chip.wire_sq_um2;
    let expect: Vec<f64> = (0..4u8)
        .map(|v| {
            let corner = RoCorner {
                delay: f,
                leakage: 1.0,
            };
            ro_power::<f64>(lib, &sct.ro, Selectors::from_symbol(v), sct.flavor, corner).unwrap()
                - sct.ro.leakage(lib, sct.flavor)
        })
        .collect();
    let key = key_with_prefix(80, &bits("00011011"));
    let tr = simulate_chip(&t.chip, &key, &ProcessSample::nominal(), &cfg).unwrap();
    let idle = tr.annotations.as_ref().unwrap().idle_current;
    let w = tr.step_windows().unwrap();
    for v in 0..4 {
        let (s, e) = w[v];
        let m = tr.samples[s..e].iter().sum::<f64>() / (e - s) as f64;
        assert!(
            (m - idle - expect[v] / lib.vdd).abs() <= cfg.quantization,
            "symbol {v}: {} vs {}",
            m - idle,
            expect[v]
        );
    }
    for v in 0..3 {
        let gap = (w[v].0..w[v].1).map(|i| tr.samples[i]).sum::<f64>() / (w[v].1 - w[v].0) as f64
            - (w[v + 1].0..w[v + 1].1).map(|i| tr.samples[i]).sum::<f64>()
                / (w[v + 1].1 - w[v + 1].0) as f64;
        assert!((gap - (expect[v] - expect[v + 1]) / lib.vdd).abs() <= cfg.quantization + 1e-9);
    }
}

#[test]
fn no_encryption_gives_flat_idle_trace() {
    let t = common::trojaned("PST_LFLD");
    let cfg = TraceConfig {
        encryption_schedule: Vec::new(),
        ..quiet()
    };
    let p = ProcessSample::nominal();
    let tr = simulate_chip(&t.chip, &vec![true; 80], &p, &cfg).unwrap();
    let idle = t.chip.idle_power(&p) / t.chip.vdd();
    assert!(!tr.samples.is_empty());
    assert!(tr.samples.iter().all(|&v| v == tr.samples[0]));
    assert!((tr.samples[0] - idle).abs() <= cfg.quantization / 2.0 + 1e-9);
    assert!(tr.annotations.unwrap().steps.is_empty());
}

#[test]
fn encryption_windows_do_not_depend_on_the_key() {
    let t = common::trojaned("PST_HFLD");
    let cfg = quiet();
    let p = ProcessSample::nominal();
    let a = simulate_chip(&t.chip, &vec![false; 80], &p, &cfg).unwrap();
    let b = simulate_chip(&t.chip, &vec![true; 80], &p, &cfg).unwrap();
    let (s, d) = cfg.encryption_schedule[0];
    let (i, j) = (a.index_at(s), a.index_at(s + d));
    assert_eq!(&a.samples[i..j], &b.samples[i..j]);
    assert!(a.samples[i] > a.samples[0]);
    assert_ne!(a.samples, b.samples);
}

#[test]
fn symbol_amplitudes_are_distinct() {
    for name in ["AES_LFLD", "AES_HFHD", "PST_LFHD", "PST_HFHD"] {
        let s = common::trojaned(name).chip.steps_at(1.0);
        assert!(s.windows(2).all(|w| w[0] > w[1]), "{name}: {s:?}");
    }
}

#[test]
fn key_length_and_config_are_checked() {
    let t = common::trojaned("PST_LFLD");
    let p = ProcessSample::nominal();
    assert!(matches!(
        simulate_chip(&t.chip, &vec![true; 78], &p, &quiet()),
        Err(Error::Invalid(_))
    ));
    let slow = TraceConfig {
        sample_rate: 500.0,
        ..quiet()
    };
    assert!(slow.validate().is_err());
    let overlap = TraceConfig {
        encryption_schedule: vec![(1e-3, 1e-3), (3e-3, 1e-3)],
        ..quiet()
    };
    assert!(simulate_chip(&t.chip, &vec![true; 80], &p, &overlap).is_err());
}

#[test]
fn attacker_view_has_no_annotations_and_csv_round_trips() {
    let t = common::trojaned("PST_LFLD");
    let tr = simulate_chip(
        &t.chip,
        &vec![true; 80],
        &ProcessSample::nominal(),
        &TraceConfig::default(),
    )
    .unwrap();
    let s = tr.stripped();
    assert!(s.annotations.is_none());
    let back = PowerTrace::parse_csv(&s.to_csv("abc")).unwrap();
    assert_eq!(back.samples.len(), s.samples.len());
    assert!((back.dt - s.dt).abs() < 1e-15);
    assert!(back
        .samples
        .iter()
        .zip(&s.samples)
        .all(|(a, b)| (a - b).abs() < 1e-9));
    assert!(PowerTrace::parse_csv("t_s,current_uA\n").is_err());
}

#[test]
fn hex_keys() {
    let k = key_from_hex("e4", 8).unwrap();
    assert_eq!(k, bits("11100100"));
    assert_eq!(key_to_hex(&k), "e4");
    assert!(key_from_hex("e", 8).is_err());
    assert!(key_from_hex("e4f", 8).is_err());
    assert_eq!(key_from_hex("e40", 8).unwrap(), k);
    assert!(key_from_hex("zz", 8).is_err());
    assert_eq!(key_symbols(&k, 2), [3, 2, 1, 0]);
}

#[test]
fn dense_fast_aes_realizes_a_quarter_to_a_third_of_its_plan() {
    let t = common::trojaned("AES_HFHD");
    let key = sctkit::attack::random_key(128, 3);
    let b = batch_simulate(&t.chip, &key, 25, 1, &TraceConfig::default()).unwrap();
    let planned = t.chip.planned_steps();
    let realized: f64 = b.stats.iter().map(|s| s.mean).sum::<f64>();
    let plan: f64 = b
        .stats
        .iter()
        .map(|s| planned[s.symbol as usize] / t.chip.vdd())
        .sum();
    let r = realized / plan;
    assert!((0.25..=0.35).contains(&r), "{r}");
    assert!(b.separability.unwrap().almost_overlap);
}

#[test]
fn small_present_core_separates_cleanly_over_25_dies() {
    let t = common::trojaned("PST_LFHD");
    let key = key_with_prefix(80, &bits("11100100"));
    let b = batch_simulate(&t.chip, &key, 25, 1, &TraceConfig::default()).unwrap();
    assert_eq!(b.traces.len(), 25);
    assert_eq!(b.stats.len(), 4);
    let sep = b.separability.unwrap();
    assert!(!sep.overlap && sep.min_gap > 0.0, "{sep:?}");
    assert_eq!(stats_csv(&b.stats).lines().count(), 5);
}

#[test]
fn single_quiet_die_has_zero_width_intervals() {
    let t = common::trojaned("PST_LFLD");
    let cfg = TraceConfig {
        noise_sigma: 0.0,
        ..TraceConfig::default()
    };
    let b = batch_simulate(&t.chip, &key_with_prefix(80, &bits("11100100")), 1, 9, &cfg).unwrap();
    assert!(b.stats.iter().all(|s| s.ci_low == s.ci_high));
    assert!(batch_simulate(&t.chip, &[true; 80], 0, 9, &cfg).is_err());
}

#[test]
fn batch_is_independent_of_thread_count() {
    let t = common::trojaned("PST_LFLD");
    let key = vec![true; 80];
    let cfg = TraceConfig::default();
    let a = batch_simulate(&t.chip, &key, 6, 4, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let b = pool.install(|| batch_simulate(&t.chip, &key, 6, 4, &cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn relative_spread_of_steps_grows_with_placement_spread() {
    let t = common::trojaned("PST_HFHD");
    let cfg = TraceConfig::default();
    let sampler = t.chip.sampler(cfg.process);
    let mut last = 0.0;
    for f in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let chip = t.chip.with_spread_scale(f);
        let amp: Vec<f64> = (0..200)
            .map(|i| chip.steps_at(chip.die_delay(&sampler.sample(11, i), &cfg))[0])
            .collect();
        let m = amp.iter().sum::<f64>() / amp.len() as f64;
        let cv2 = amp.iter().map(|a| (a / m - 1.0).powi(2)).sum::<f64>() / (amp.len() - 1) as f64;
        assert!(cv2 >= last, "scale {f}: {cv2} < {last}");
        last = cv2;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_step_per_symbol(key in proptest::collection::vec(any::<bool>(), 80)) {
        let t = common::trojaned("PST_HFHD");
        let tr = simulate_chip(&t.chip, &key, &ProcessSample::nominal(), &quiet()).unwrap();
        let a = tr.annotations.unwrap();
        prop_assert_eq!(a.steps.len(), 40);
        prop_assert_eq!(a.triggers.len(), 1);
        prop_assert_eq!(a.steps.iter().map(|s| s.symbol).collect::<Vec<_>>(), key_symbols(&key, 2));
    }
}
