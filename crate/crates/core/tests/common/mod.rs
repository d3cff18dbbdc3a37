// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use sctkit::presets::{self, Trojaned};

/// Seed-1 trojaned preset, built once per test binary.
#[allow(dead_code)]
pub fn trojaned(name: &str) -> &'static Trojaned {
    static CACHE: OnceLock<Mutex<HashMap<String, &'static Trojaned>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(name) {
        return t;
    }
    let t: &'static Trojaned = Box::leak(Box::new(
        presets::preset(name).unwrap().trojaned(1).unwrap(),
    ));
    cache.lock().unwrap().entry(name.to_string()).or_insert(t)
}
