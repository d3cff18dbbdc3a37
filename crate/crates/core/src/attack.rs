// SPDX-License-Identifier: Apache-2.0

//! Key recovery from a supply-current trace: find the leak steps, cluster
//! their levels into symbols, and read the bits back out.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::rng_for;
use crate::scalar::Scalar;
use crate::sim::{
    batch_simulate, separability, simulate_chip, Chip, Separability, SymbolStats, TraceConfig,
};
use crate::sim::{step_amplitudes, symbol_stats, PowerTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerHint {
    /// Use the simulator's annotations.
    Oracle,
    /// Locate the first step from the trace alone.
    EdgeDetect,
}

/// Sample ranges `[start, end)` of the `n_steps` leak windows.
pub fn segment_trace(
    trace: &PowerTrace,
    step_period: f64,
    n_steps: usize,
    hint: TriggerHint,
) -> Result<Vec<(usize, usize)>> {
    match hint {
        TriggerHint::Oracle => {
            let w = trace
                .step_windows()
                .ok_or_else(|| Error::Invalid("trace carries no annotations".into()))?;
            if w.len() < n_steps {
                return Err(Error::TriggerNotFound);
            }
            Ok(w[..n_steps].to_vec())
        }
        TriggerHint::EdgeDetect => edge_detect(trace, step_period, n_steps),
    }
}

/// Robust noise estimate from first differences.
pub fn noise_estimate(samples: &[f64]) -> f64 {
    if samples.len() < 3 {
        return 0.0;
    }
    let mut d: Vec<f64> = samples.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m / (0.6745 * std::f64::consts::SQRT_2)
}

/// Piecewise-constant fit with fixed-length steps: every start index is
/// scored by the squared error of the steps plus one step-length segment on
/// either side, and the best start wins.
fn edge_detect(
    trace: &PowerTrace,
    step_period: f64,
    n_steps: usize,
) -> Result<Vec<(usize, usize)>> {
    let x = &trace.samples;
    let n = x.len();
    let spp = step_period / trace.dt;
    if n_steps == 0 || spp < 1.0 {
        return Err(Error::Invalid(
            "need at least one step of at least one sample".into(),
        ));
    }
    let span = (n_steps as f64 * spp).round() as usize;
    if span + 1 > n {
        return Err(Error::TriggerNotFound);
    }
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + x[i];
        s2[i + 1] = s2[i] + x[i] * x[i];
    }
    let sse = |a: usize, b: usize| {
        if b <= a {
            return 0.0;
        }
        let m = (b - a) as f64;
        let s = s1[b] - s1[a];
        (s2[b] - s2[a] - s * s / m).max(0.0)
    };
    let mean = |a: usize, b: usize| (s1[b] - s1[a]) / (b - a).max(1) as f64;
    let side = spp.round().max(1.0) as usize;
    let bounds = |t0: usize| -> Vec<usize> {
        (0..=n_steps)
            .map(|k| t0 + (k as f64 * spp).round() as usize)
            .collect()
    };
    let mut best: Option<(f64, usize)> = None;
    for t0 in 1..=(n - span) {
        let b = bounds(t0);
        let mut cost =
            sse(t0.saturating_sub(side), t0) + sse(b[n_steps], (b[n_steps] + side).min(n));
        for k in 0..n_steps {
            cost += sse(b[k], b[k + 1]);
        }
        if best.map_or(true, |(c, _)| cost < c - 1e-9 * c.abs().max(1e-12)) {
            best = Some((cost, t0));
        }
    }
    let (_, t0) = best.ok_or(Error::TriggerNotFound)?;
    let b = bounds(t0);
    let means: Vec<f64> = (0..n_steps).map(|k| mean(b[k], b[k + 1])).collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sigma = noise_estimate(x);
    let eps = 1e-9 * hi.abs().max(lo.abs()).max(1.0);
    let lead = t0 - t0.saturating_sub(side);
    let outside = mean(t0 - lead, t0);
    let gap = if outside < lo {
        lo - outside
    } else {
        (outside - hi).max(0.0)
    };
    let z = 2.0 * (2.0 * (n_steps.max(2) as f64).ln()).sqrt() + 3.0;
    let lead_floor = z * sigma * (1.0 / lead as f64 + 1.0 / spp).sqrt() + eps;
    if hi - lo <= z * sigma / spp.sqrt() + eps && gap <= lead_floor {
        return Err(Error::TriggerNotFound);
    }
    Ok((0..n_steps).map(|k| (b[k], b[k + 1])).collect())
}

pub fn window_means(trace: &PowerTrace, windows: &[(usize, usize)]) -> Vec<f64> {
    windows
        .iter()
        .map(|&(a, b)| {
            let b = b.min(trace.samples.len());
            let w = &trace.samples[a.min(b)..b];
            w.iter().sum::<f64>() / w.len().max(1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantized<S> {
    pub symbols: Vec<u8>,
    /// Level per symbol value, highest current first.
    pub levels: Vec<S>,
    /// 1 at a level, 0 on a decision boundary.
    pub confidences: Vec<S>,
    /// Fewer distinct levels than symbols; the decode is a guess.
    pub ambiguous: bool,
}

/// Clusters window means into `n_levels` levels by cutting the sorted means
/// at the widest gaps. Gaps not above `resolution` are only cut when nothing
/// better is left, and make the result ambiguous; zero gaps are never cut.
/// The highest level is symbol 0. With `calibration`, means go to the
/// nearest given level instead.
pub fn quantize_symbols<S: Scalar>(
    means: &[S],
    n_levels: usize,
    resolution: S,
    calibration: Option<&[S]>,
) -> Quantized<S> {
    if let Some(levels) = calibration {
        let mut levels = levels.to_vec();
        levels.sort_by(|a, b| b.partial_cmp(a).expect("finite level"));
        let symbols: Vec<u8> = means.iter().map(|m| nearest(&levels, *m) as u8).collect();
        let confidences = confidence(means, &symbols, &levels);
        return Quantized {
            symbols,
            levels,
            confidences,
            ambiguous: false,
        };
    }
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| {
        means[b]
            .partial_cmp(&means[a])
            .expect("finite mean")
            .then(a.cmp(&b))
    });
    // Gap i separates sorted positions i and i + 1 (descending).
    let mut gaps: Vec<(S, usize)> = order
        .windows(2)
        .enumerate()
        .map(|(i, w)| (means[w[0]] - means[w[1]], i))
        .collect();
    gaps.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite gap")
            .then(a.1.cmp(&b.1))
    });
    let chosen: Vec<&(S, usize)> = gaps
        .iter()
        .take(n_levels.saturating_sub(1))
        .filter(|g| g.0 > S::zero())
        .collect();
    let ambiguous = chosen.len() + 1 < n_levels || chosen.iter().any(|g| g.0 <= resolution);
    let mut cuts: Vec<usize> = chosen.iter().map(|g| g.1).collect();
    cuts.sort_unstable();
    let mut symbols = vec![0u8; means.len()];
    let mut sums = vec![(S::zero(), 0usize); cuts.len() + 1];
    let mut c = 0;
    for (pos, &i) in order.iter().enumerate() {
        symbols[i] = c as u8;
        sums[c].0 = sums[c].0 + means[i];
        sums[c].1 += 1;
        if c < cuts.len() && cuts[c] == pos {
            c += 1;
        }
    }
    let levels: Vec<S> = sums
        .iter()
        .map(|(s, n)| *s / S::of((*n).max(1) as f64))
        .collect();
    let confidences = confidence(means, &symbols, &levels);
    Quantized {
        symbols,
        levels,
        confidences,
        ambiguous,
    }
}

fn nearest<S: Scalar>(levels: &[S], m: S) -> usize {
    let mut best = 0;
    for (i, l) in levels.iter().enumerate() {
        if (*l - m).abs() < (levels[best] - m).abs() {
            best = i;
        }
    }
    best
}

fn confidence<S: Scalar>(means: &[S], symbols: &[u8], levels: &[S]) -> Vec<S> {
    means
        .iter()
        .zip(symbols)
        .map(|(&m, &s)| {
            let s = s as usize;
            let l = levels[s];
            let half = |o: usize| (levels[o] - l).abs() / S::of(2.0);
            let mut c = S::one();
            // Distance to each neighbouring decision boundary, relative to the half gap.
            for o in [s.wrapping_sub(1), s + 1] {
                if o < levels.len() {
                    let h = half(o);
                    if h > S::zero() {
                        let toward = if levels[o] > l { m - l } else { l - m };
                        c = c.min(S::one() - (toward.max(S::zero()) / h));
                    }
                }
            }
            if levels.len() < 2 {
                c = S::zero();
            }
            c.max(S::zero()).min(S::one())
        })
        .collect()
}

/// Concatenates `n_leak` bits per symbol, most significant first.
pub fn recover_key(symbols: &[u8], n_leak: usize) -> Vec<bool> {
    symbols
        .iter()
        .flat_map(|&s| (0..n_leak).rev().map(move |b| s >> b & 1 == 1))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRecoveryResult {
    pub recovered_bits: Vec<bool>,
    pub symbol_confidences: Vec<f64>,
    /// µA, highest first.
    pub levels: Vec<f64>,
    pub ambiguous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_errors: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub n_key: usize,
    pub n_leak: usize,
    /// s.
    pub step_period: f64,
    pub hint: TriggerHint,
    /// Minimum level spacing, µA; estimated from the trace when absent.
    pub resolution: Option<f64>,
}

/// Segments, quantizes and reads one trace; scores against `truth` if given.
pub fn decode_trace(
    trace: &PowerTrace,
    opts: &DecodeOptions,
    truth: Option<&[bool]>,
) -> Result<KeyRecoveryResult> {
    if opts.n_leak == 0 || opts.n_key % opts.n_leak != 0 {
        return Err(Error::Invalid(format!(
            "{} key bits do not split into {}-bit symbols",
            opts.n_key, opts.n_leak
        )));
    }
    let n_steps = opts.n_key / opts.n_leak;
    let windows = segment_trace(trace, opts.step_period, n_steps, opts.hint)?;
    let means = window_means(trace, &windows);
    let resolution = opts.resolution.unwrap_or_else(|| {
        let spp = (opts.step_period / trace.dt).max(1.0);
        4.0 * noise_estimate(&trace.samples) / spp.sqrt()
    });
    let q = quantize_symbols(&means, 1 << opts.n_leak, resolution, None);
    let bits = recover_key(&q.symbols, opts.n_leak);
    let errors = truth.map(|t| {
        t.iter().zip(&bits).filter(|(a, b)| a != b).count() + t.len().abs_diff(bits.len())
    });
    Ok(KeyRecoveryResult {
        success: errors.map(|e| e == 0),
        bit_errors: errors,
        recovered_bits: bits,
        symbol_confidences: q.confidences,
        levels: q.levels,
        ambiguous: q.ambiguous,
    })
}

pub fn random_key(n_key: usize, seed: u64) -> Vec<bool> {
    let mut rng = rng_for(seed, u64::MAX);
    (0..n_key).map(|_| rng.gen()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub die: usize,
    pub repeat: usize,
    pub success: bool,
    pub ber: f64,
    pub ambiguous: bool,
    /// Edge-detected windows equal to the annotated ones.
    pub windows_agree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub design: String,
    pub n_dies: usize,
    pub repeats: usize,
    pub seed: u64,
    pub hint: TriggerHint,
    pub rows: Vec<CampaignRow>,
    /// Absent for an empty campaign.
    pub success_rate: Option<f64>,
    pub bit_error_rate: Option<f64>,
    /// Share of edge-detected windows that match the annotations.
    pub segmentation_agreement: Option<f64>,
    pub stats: Vec<SymbolStats>,
    pub separability: Option<Separability>,
}

impl CampaignReport {
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("die,repeat,success,ber\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.die, r.repeat, r.success as u8, r.ber
            ));
        }
        s
    }
}

/// Simulates every (die, repeat), decodes it blind, and compares with `key`.
/// Repeats on a die share its process sample and differ in noise.
pub fn campaign(
    chip: &Chip,
    key: &[bool],
    n_dies: usize,
    repeats: usize,
    seed: u64,
    cfg: &TraceConfig,
    hint: TriggerHint,
) -> Result<CampaignReport> {
    let opts = DecodeOptions {
        n_key: chip.sct.n_key as usize,
        n_leak: chip.sct.n_leak as usize,
        step_period: cfg.step_period,
        hint,
        resolution: None,
    };
    let sampler = chip.sampler(cfg.process);
    let jobs: Vec<(usize, usize)> = (0..n_dies)
        .flat_map(|d| (0..repeats).map(move |r| (d, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(die, repeat)| {
            let mut c = cfg.clone();
            c.noise_seed = cfg.noise_seed.wrapping_add(repeat as u64);
            let trace = simulate_chip(chip, key, &sampler.sample(seed, die as u64), &c)?;
            let steps = opts.n_key / opts.n_leak;
            let agree = match (
                segment_trace(&trace, c.step_period, steps, TriggerHint::Oracle),
                hint,
            ) {
                (Ok(o), TriggerHint::EdgeDetect) => match edge_detect(&trace, c.step_period, steps)
                {
                    Ok(e) => o.iter().zip(&e).filter(|(a, b)| a == b).count() as f64 / steps as f64,
                    Err(_) => 0.0,
                },
                _ => 1.0,
            };
            let view = match hint {
                TriggerHint::Oracle => trace,
                TriggerHint::EdgeDetect => trace.stripped(),
            };
            let row = match decode_trace(&view, &opts, Some(key)) {
                Ok(r) => CampaignRow {
                    die,
                    repeat,
                    success: r.success == Some(true),
                    ber: r.bit_errors.unwrap_or(key.len()) as f64 / key.len() as f64,
                    ambiguous: r.ambiguous,
                    windows_agree: agree,
                },
                Err(Error::TriggerNotFound) => CampaignRow {
                    die,
                    repeat,
                    success: false,
                    ber: 0.5,
                    ambiguous: true,
                    windows_agree: agree,
                },
                Err(e) => return Err(e),
            };
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let (stats, sep) = if n_dies > 0 {
        let b = batch_simulate(chip, key, n_dies, seed, cfg)?;
        (b.stats, b.separability)
    } else {
        (Vec::new(), None)
    };
    Ok(CampaignReport {
        design: chip.design.name.clone(),
        n_dies,
        repeats,
        seed,
        hint,
        success_rate: (n > 0.0).then(|| rows.iter().filter(|r| r.success).count() as f64 / n),
        bit_error_rate: (n > 0.0).then(|| rows.iter().map(|r| r.ber).sum::<f64>() / n),
        segmentation_agreement: (n > 0.0)
            .then(|| rows.iter().map(|r| r.windows_agree).sum::<f64>() / n),
        rows,
        stats,
        separability: sep,
    })
}

/// Per-symbol amplitude table over a set of annotated traces.
pub fn trace_stats(traces: &[PowerTrace]) -> (Vec<SymbolStats>, Option<Separability>) {
    let amps: Vec<_> = traces.iter().map(step_amplitudes).collect();
    let stats = symbol_stats(&amps);
    let sep = separability(&stats);
    (stats, sep)
}
