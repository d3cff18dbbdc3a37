// SPDX-License-Identifier: Apache-2.0

//! Supply-current traces of a trojaned chip: idle leakage and clock tree,
//! encryption bursts, then one ring-oscillator step per leaked symbol.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::PlacedDesign;
use crate::error::{Error, Result};
use crate::library::RoFamily;
use crate::power::{clock_tree_power, dynamic_power, static_power, Activity};
use crate::process::{rng_for, ProcessModel, ProcessSample, ProcessSampler};
use crate::sct::ro::{chain_delay, switched_energy, Selectors};
use crate::sct::SctConfig;

const MISMATCH_STREAM: u64 = 0x6d69_736d;
const NOISE_STREAM: u64 = 0x6e6f_6973;

/// Slowdown of the ring from long trojan wiring. The loop delay is scaled by
/// `1 + coeff · Σ HPWL²` over the trojan's nets, with a per-die lognormal
/// factor of width `sigma` on the added term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WirePenalty {
    /// Per µm².
    pub coeff: f64,
    pub sigma: f64,
}

impl Default for WirePenalty {
    fn default() -> Self {
        WirePenalty {
            coeff: 3.8e-7,
            sigma: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    /// Samples per second.
    pub sample_rate: f64,
    /// µA.
    pub noise_sigma: f64,
    /// Ammeter resolution, µA; 0 disables rounding.
    pub quantization: f64,
    /// `(start, duration)` of each encryption, s.
    pub encryption_schedule: Vec<(f64, f64)>,
    /// Length of one leak step, s. The bench clocks the shift register in
    /// bursts, so this is set by the bench, not the core clock.
    pub step_period: f64,
    /// Idle time recorded after the last event, s.
    pub tail: f64,
    /// Independent delay mismatch per ring cell.
    pub mismatch_sigma: f64,
    pub wire: WirePenalty,
    pub process: ProcessModel,
    /// Selects the measurement-noise stream; repeats on one die differ here.
    pub noise_seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            sample_rate: 20_000.0,
            noise_sigma: 0.5,
            quantization: 0.1,
            encryption_schedule: vec![(2e-3, 2e-3)],
            step_period: 10e-3,
            tail: 5e-3,
            mismatch_sigma: 0.02,
            wire: WirePenalty::default(),
            process: ProcessModel::default(),
            noise_seed: 0,
        }
    }
}

impl TraceConfig {
    pub fn samples_per_step(&self) -> f64 {
        self.sample_rate * self.step_period
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if !(self.sample_rate > 0.0 && self.step_period > 0.0) {
            return bad("sample rate and step period must be positive".into());
        }
        if self.samples_per_step() < 8.0 {
            return bad(format!(
                "{:.1} samples per leak step; at least 8 are needed",
                self.samples_per_step()
            ));
        }
        if self.noise_sigma < 0.0 || self.quantization < 0.0 || self.tail < 0.0 {
            return bad("noise, quantization and tail must be non-negative".into());
        }
        if self.mismatch_sigma < 0.0 || self.wire.sigma < 0.0 || self.wire.coeff < 0.0 {
            return bad("variation widths must be non-negative".into());
        }
        for &(s, d) in &self.encryption_schedule {
            if s < 0.0 || d <= 0.0 {
                return bad(format!(
                    "encryption at {s} s for {d} s is not a valid window"
                ));
            }
        }
        Ok(())
    }
}

/// One leak step in the oracle annotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMark {
    pub start: f64,
    pub end: f64,
    pub symbol: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    /// Trigger instants (end of each encryption that starts a leak), s.
    pub triggers: Vec<f64>,
    pub steps: Vec<StepMark>,
    /// Noise-free idle current, µA.
    pub idle_current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    /// µA.
    pub samples: Vec<f64>,
    /// s.
    pub dt: f64,
    pub vdd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Annotations>,
}

impl PowerTrace {
    /// Attacker view.
    pub fn stripped(&self) -> PowerTrace {
        PowerTrace {
            annotations: None,
            ..self.clone()
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// First sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.dt) - 1e-9).ceil().max(0.0) as usize
    }

    /// Sample ranges of the annotated steps.
    pub fn step_windows(&self) -> Option<Vec<(usize, usize)>> {
        let a = self.annotations.as_ref()?;
        Some(
            a.steps
                .iter()
                .map(|s| {
                    (
                        self.index_at(s.start),
                        self.index_at(s.end).min(self.samples.len()),
                    )
                })
                .collect(),
        )
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = format!(
            "# dt={:e} vdd={} config={config_hash}\nt_s,current_uA\n",
            self.dt, self.vdd
        );
        for (i, v) in self.samples.iter().enumerate() {
            s.push_str(&format!("{:e},{v}\n", self.time(i)));
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<PowerTrace> {
        let mut dt = None;
        let mut vdd = 1.0;
        let mut samples = Vec::new();
        let mut times = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(h) = line.strip_prefix('#') {
                for kv in h.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("dt", v)) => dt = v.parse().ok(),
                        Some(("vdd", v)) => vdd = v.parse().unwrap_or(1.0),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line.starts_with("t_s") {
                continue;
            }
            let err = |msg: &str| Error::Syntax {
                line: ln + 1,
                column: 1,
                msg: msg.to_string(),
            };
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| err("expected t_s,current_uA"))?;
            times.push(t.trim().parse::<f64>().map_err(|_| err("bad time"))?);
            samples.push(v.trim().parse::<f64>().map_err(|_| err("bad current"))?);
        }
        let dt = match dt {
            Some(d) => d,
            None if times.len() > 1 => times[1] - times[0],
            None => return Err(Error::Invalid("trace has no sample interval".into())),
        };
        if samples.is_empty() {
            return Err(Error::Invalid("trace has no samples".into()));
        }
        Ok(PowerTrace {
            samples,
            dt,
            vdd,
            annotations: None,
        })
    }
}

/// Parses a hex key, first digit first; the first key bit is the digit's
/// most significant bit. Short keys are rejected.
pub fn key_from_hex(hex: &str, n_key: usize) -> Result<Vec<bool>> {
    let hex = hex.trim().trim_start_matches("0x");
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for c in hex.chars() {
        let d = c
            .to_digit(16)
            .ok_or_else(|| Error::Invalid(format!("{c:?} is not a hex digit")))?;
        bits.extend((0..4).rev().map(|b| d >> b & 1 == 1));
    }
    if bits.len() < n_key {
        return Err(Error::Invalid(format!(
            "key has {} bits, the trojan leaks {n_key}",
            bits.len()
        )));
    }
    if bits[n_key..].iter().any(|&b| b) {
        return Err(Error::Invalid(format!("key is longer than {n_key} bits")));
    }
    bits.truncate(n_key);
    Ok(bits)
}

pub fn key_to_hex(bits: &[bool]) -> String {
    bits.chunks(4)
        .map(|c| {
            let v = c
                .iter()
                .enumerate()
                .fold(0u32, |a, (i, &b)| a | (b as u32) << (3 - i));
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

/// Symbols leaked in order: bits `2k, 2k+1` drive `S1, S0` of step `k`.
pub fn key_symbols(key: &[bool], n_leak: usize) -> Vec<u8> {
    key.chunks(n_leak)
        .map(|c| c.iter().fold(0u8, |a, &b| a << 1 | b as u8))
        .collect()
}

/// Per-chip quantities that do not depend on the die.
#[derive(Debug, Clone)]
pub struct Chip {
    pub design: PlacedDesign,
    pub sct: SctConfig,
    family: RoFamily,
    /// Ring cell centers, µm.
    pub ring_positions: Vec<(f64, f64)>,
    /// Σ HPWL² over trojan nets, µm².
    pub wire_sq_um2: f64,
    /// Clock-tree power at the core clock, µW.
    pub clock_tree: f64,
    /// Core switching power while encrypting, µW.
    pub encryption: f64,
}

impl Chip {
    /// `ring_cells` are instance ids; trojan nets are those driven by cells
    /// whose id starts with `prefix`.
    pub fn new(
        trojaned: &PlacedDesign,
        sct: &SctConfig,
        ring_cells: &[String],
        prefix: &str,
        activity: &Activity,
    ) -> Result<Chip> {
        sct.validate()?;
        let family = sct.ro.family(&trojaned.library)?.clone();
        let idx = trojaned.instance_index();
        let mut ring_positions = Vec::with_capacity(ring_cells.len());
        for id in ring_cells {
            let i = *idx.get(id.as_str()).ok_or_else(|| {
                Error::Invalid(format!(
                    "ring cell {id} not in design; was the trojan applied?"
                ))
            })?;
            let g = &trojaned.instances[i];
            ring_positions.push(trojaned.center_um(g, trojaned.kind_of(g).width));
        }
        let wire_sq_um2 = trojaned
            .nets
            .iter()
            .filter(|n| n.driver.inst().is_some_and(|i| i.starts_with(prefix)))
            .map(|n| trojaned.net_hpwl_um(n, &idx).powi(2))
            .sum();
        let nominal = ProcessSample::nominal();
        let freq = 1e6 / trojaned.clock_period;
        Ok(Chip {
            clock_tree: clock_tree_power(trojaned, freq, &nominal),
            encryption: dynamic_power(trojaned, activity, &nominal),
            design: trojaned.clone(),
            sct: sct.clone(),
            family,
            ring_positions,
            wire_sq_um2,
        })
    }

    /// Same chip with the ring spread `factor` times further about its
    /// centroid and trojan wires stretched accordingly.
    pub fn with_spread_scale(&self, factor: f64) -> Chip {
        let n = self.ring_positions.len().max(1) as f64;
        let cx = self.ring_positions.iter().map(|p| p.0).sum::<f64>() / n;
        let cy = self.ring_positions.iter().map(|p| p.1).sum::<f64>() / n;
        let (w, h) = self.design.core_size_um();
        let mut out = self.clone();
        out.ring_positions = self
            .ring_positions
            .iter()
            .map(|p| {
                (
                    (cx + (p.0 - cx) * factor).clamp(0.0, w),
                    (cy + (p.1 - cy) * factor).clamp(0.0, h),
                )
            })
            .collect();
        out.wire_sq_um2 = self.wire_sq_um2 * factor * factor;
        out
    }

    pub fn vdd(&self) -> f64 {
        self.design.library.vdd
    }

    pub fn sampler(&self, model: ProcessModel) -> ProcessSampler {
        let (w, h) = self.design.core_size_um();
        ProcessSampler::new(model, w, h)
    }

    /// Loop-delay multiplier from wiring at nominal.
    pub fn wire_factor(&self, wire: &WirePenalty) -> f64 {
        1.0 + wire.coeff * self.wire_sq_um2
    }

    /// Ring dynamic power per symbol as planned, with no wiring penalty, µW.
    pub fn planned_steps(&self) -> [f64; 4] {
        self.steps_at(1.0)
    }

    /// Ring dynamic power per symbol for a loop-delay multiplier, µW.
    pub fn steps_at(&self, delay_mult: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (v, o) in out.iter_mut().enumerate() {
            let sel = Selectors::from_symbol(v as u8);
            let tau: f64 = chain_delay(&self.family, &self.sct.ro, sel, delay_mult);
            *o = 1e6 / tau * switched_energy::<f64>(&self.family, &self.sct.ro, sel) * 1e-3;
        }
        out
    }

    /// Loop-delay multiplier of one die: cell variation averaged over the
    /// ring, times the wiring penalty.
    pub fn die_delay(&self, process: &ProcessSample, cfg: &TraceConfig) -> f64 {
        let mut rng = rng_for(process.seed ^ MISMATCH_STREAM, process.index);
        let s = cfg.mismatch_sigma;
        let cells = if self.ring_positions.is_empty() {
            process.global_delay()
        } else {
            self.ring_positions
                .iter()
                .map(|&(x, y)| {
                    let z: f64 = rng.sample(StandardNormal);
                    process.delay_at(x, y) * (s * z - 0.5 * s * s).exp()
                })
                .sum::<f64>()
                / self.ring_positions.len() as f64
        };
        let zw: f64 = rng.sample(StandardNormal);
        let w = (cfg.wire.sigma * zw - 0.5 * cfg.wire.sigma * cfg.wire.sigma).exp();
        cells * (1.0 + cfg.wire.coeff * self.wire_sq_um2 * w)
    }

    /// Idle power of one die: leakage plus clock tree, µW.
    pub fn idle_power(&self, process: &ProcessSample) -> f64 {
        static_power(&self.design, process) + self.clock_tree
    }
}

/// Trace of one die for `key`.
pub fn simulate_chip(
    chip: &Chip,
    key: &[bool],
    process: &ProcessSample,
    cfg: &TraceConfig,
) -> Result<PowerTrace> {
    cfg.validate()?;
    let n_key = chip.sct.n_key as usize;
    if key.len() != n_key {
        return Err(Error::Invalid(format!(
            "key has {} bits, the trojan leaks {n_key}",
            key.len()
        )));
    }
    let symbols = key_symbols(key, chip.sct.n_leak as usize);
    let vdd = chip.vdd();
    let idle = chip.idle_power(process);
    let steps = chip.steps_at(chip.die_delay(process, cfg));

    let mut windows = cfg.encryption_schedule.clone();
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let leak_len = symbols.len() as f64 * cfg.step_period;
    let mut triggers = Vec::new();
    let mut marks = Vec::new();
    let mut busy_until = f64::NEG_INFINITY;
    for &(s, d) in &windows {
        if s < busy_until {
            return Err(Error::Invalid(format!(
                "encryption at {s} s starts before the previous leak or encryption ends at {busy_until} s"
            )));
        }
        let done = s + d;
        triggers.push(done);
        for (k, &v) in symbols.iter().enumerate() {
            marks.push(StepMark {
                start: done + k as f64 * cfg.step_period,
                end: done + (k + 1) as f64 * cfg.step_period,
                symbol: v,
            });
        }
        busy_until = done + leak_len;
    }
    let end = busy_until.max(0.0) + cfg.tail;
    let dt = 1.0 / cfg.sample_rate;
    let n = ((end / dt).round() as usize).max(1);
    let mut rng = rng_for(
        process.seed ^ NOISE_STREAM ^ cfg.noise_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        process.index,
    );
    let mut samples = Vec::with_capacity(n);
    let (mut wi, mut mi) = (0usize, 0usize);
    for i in 0..n {
        let t = i as f64 * dt + 1e-12;
        while wi < windows.len() && windows[wi].0 + windows[wi].1 <= t {
            wi += 1;
        }
        while mi < marks.len() && marks[mi].end <= t {
            mi += 1;
        }
        let mut p = idle;
        if wi < windows.len() && windows[wi].0 <= t {
            p += chip.encryption;
        } else if mi < marks.len() && marks[mi].start <= t {
            p += steps[marks[mi].symbol as usize];
        }
        let mut v = p / vdd;
        if cfg.noise_sigma > 0.0 {
            v += cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        if cfg.quantization > 0.0 {
            v = (v / cfg.quantization).round() * cfg.quantization;
        }
        samples.push(v);
    }
    Ok(PowerTrace {
        samples,
        dt,
        vdd,
        annotations: Some(Annotations {
            triggers,
            steps: marks,
            idle_current: idle / vdd,
        }),
    })
}

/// Builds the chip view and simulates one die.
pub fn simulate_trace(
    trojaned: &PlacedDesign,
    sct: &SctConfig,
    ring_cells: &[String],
    activity: &Activity,
    key: &[bool],
    process: &ProcessSample,
    cfg: &TraceConfig,
) -> Result<PowerTrace> {
    let chip = Chip::new(trojaned, sct, ring_cells, "sct_", activity)?;
    simulate_chip(&chip, key, process, cfg)
}

/// Distribution of one symbol's step amplitude over dies, µA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolStats {
    pub symbol: u8,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Central 95 % of a normal fit.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    /// Smallest gap between intervals of adjacent symbols, µA; negative on overlap.
    pub min_gap: f64,
    pub overlap: bool,
    /// Gap below a quarter of the distance between the adjacent means.
    pub almost_overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub traces: Vec<PowerTrace>,
    /// Per die, mean step amplitude above idle for each symbol present, µA.
    pub amplitudes: Vec<[Option<f64>; 4]>,
    pub stats: Vec<SymbolStats>,
    pub separability: Option<Separability>,
}

/// Mean current above idle per symbol, from the annotations.
pub fn step_amplitudes(trace: &PowerTrace) -> [Option<f64>; 4] {
    let Some(a) = &trace.annotations else {
        return [None; 4];
    };
    let wins = trace.step_windows().unwrap_or_default();
    let mut acc = [(0.0, 0usize); 4];
    for (m, (s, e)) in a.steps.iter().zip(wins) {
        for v in &trace.samples[s.min(e)..e] {
            acc[m.symbol as usize].0 += v;
            acc[m.symbol as usize].1 += 1;
        }
    }
    acc.map(|(s, n)| (n > 0).then(|| s / n as f64 - a.idle_current))
}

pub fn symbol_stats(amplitudes: &[[Option<f64>; 4]]) -> Vec<SymbolStats> {
    (0..4u8)
        .filter_map(|v| {
            let xs: Vec<f64> = amplitudes.iter().filter_map(|a| a[v as usize]).collect();
            if xs.is_empty() {
                return None;
            }
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            Some(SymbolStats {
                symbol: v,
                n,
                mean,
                std,
                ci_low: mean - 1.96 * std,
                ci_high: mean + 1.96 * std,
            })
        })
        .collect()
}

pub fn separability(stats: &[SymbolStats]) -> Option<Separability> {
    let mut s: Vec<&SymbolStats> = stats.iter().collect();
    s.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    let mut out: Option<Separability> = None;
    for w in s.windows(2) {
        let gap = w[1].ci_low - w[0].ci_high;
        let almost = gap < 0.25 * (w[1].mean - w[0].mean);
        out = Some(match out {
            None => Separability {
                min_gap: gap,
                overlap: gap < 0.0,
                almost_overlap: almost,
            },
            Some(o) => Separability {
                min_gap: o.min_gap.min(gap),
                overlap: o.overlap || gap < 0.0,
                almost_overlap: o.almost_overlap || almost,
            },
        });
    }
    out
}

/// `n_dies` dies drawn from `cfg.process`, simulated in parallel; results
/// are in die order regardless of scheduling.
pub fn batch_simulate(
    chip: &Chip,
    key: &[bool],
    n_dies: usize,
    seed: u64,
    cfg: &TraceConfig,
) -> Result<BatchResult> {
    if n_dies == 0 {
        return Err(Error::Invalid("at least one die is needed".into()));
    }
    let sampler = chip.sampler(cfg.process);
    let traces = (0..n_dies)
        .into_par_iter()
        .map(|i| simulate_chip(chip, key, &sampler.sample(seed, i as u64), cfg))
        .collect::<Result<Vec<_>>>()?;
    let amplitudes: Vec<_> = traces.iter().map(step_amplitudes).collect();
    let stats = symbol_stats(&amplitudes);
    Ok(BatchResult {
        separability: separability(&stats),
        traces,
        amplitudes,
        stats,
    })
}

/// Amplitude-distribution table as CSV.
pub fn stats_csv(stats: &[SymbolStats]) -> String {
    let mut s = String::from("symbol,n,mean_uA,std_uA,ci_low_uA,ci_high_uA\n");
    for st in stats {
        s.push_str(&format!(
            "{:02b},{},{:.4},{:.4},{:.4},{:.4}\n",
            st.symbol, st.n, st.mean, st.std, st.ci_low, st.ci_high
        ));
    }
    s
}
