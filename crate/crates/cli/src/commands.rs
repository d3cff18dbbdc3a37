// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sctkit::attack::{self, DecodeOptions, KeyRecoveryResult, TriggerHint};
use sctkit::design::PlacedDesign;
use sctkit::eco::{self, DensityMap, EcoPatch, RouteParams};
use sctkit::library::{CellLibrary, Flavor};
use sctkit::netlist::{ExtractMode, KeyFindMode, Netlist};
use sctkit::power::{self, Activity, PowerReport};
use sctkit::presets;
use sctkit::process::ProcessSample;
use sctkit::sct::calibrate::{self, Anchor, CalibrationReport};
use sctkit::sct::design::{design_sct as size_sct, reference_config, SctRequest};
use sctkit::sct::SctConfig;
use sctkit::sim::{self, Annotations, Chip, PowerTrace, TraceConfig};
use sctkit::sta::{self, Derate, StaOptions};

use crate::manifest::{self, Run};
use crate::{config, Common, Failure, KeyMode, EXIT_AMBIGUOUS, EXIT_INFEASIBLE};

pub const ANALYSIS_SCHEMA: &str = "sctkit.analysis/1";
pub const TRACES_SCHEMA: &str = "sctkit.traces/1";
pub const ATTACK_SCHEMA: &str = "sctkit.attack/1";
const SCT_PREFIX: &str = "sct_";
const STA_MARGIN_PS: f64 = 20.0;

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write(
        path,
        &(serde_json::to_string_pretty(value).expect("serializable") + "\n"),
    )
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn read_design(path: &Path) -> Result<PlacedDesign, Failure> {
    let d = PlacedDesign::parse_file(path)?;
    if d.instances.is_empty() {
        return Err(Failure::validation(format!(
            "{}: design has no instances",
            path.display()
        )));
    }
    Ok(d)
}

fn finish(run: Run, output: &Path, manifest: Option<PathBuf>) -> Result<(), Failure> {
    let path = manifest.unwrap_or_else(|| manifest::default_path(output));
    run.finish(&path)?;
    Ok(())
}

fn clock_mhz(d: &PlacedDesign) -> f64 {
    1e6 / d.clock_period
}

/// Activity from an explicit toggle rate, or the preset named like the design.
fn activity_for(d: &PlacedDesign, toggles: Option<f64>) -> Result<Activity, Failure> {
    let toggles_per_cycle = match toggles {
        Some(t) => t,
        None => {
            presets::preset(&d.name)
                .map_err(|_| {
                    Failure::validation(format!(
                        "design {:?} is not a preset; pass --toggles",
                        d.name
                    ))
                })?
                .toggles_per_cycle
        }
    };
    if !(toggles_per_cycle >= 0.0) {
        return Err(Failure::validation("--toggles must be non-negative"));
    }
    Ok(Activity::Uniform {
        toggles_per_cycle,
        freq_mhz: clock_mhz(d),
    })
}

pub fn presets(output: Option<&Path>) -> Result<(), Failure> {
    let all = presets::all();
    match output {
        Some(p) => write_json(p, &all),
        None => {
            for p in &all {
                let t = &p.profile;
                println!(
                    "{:<9} {:>6} MHz  density {:.2}  leakage {:>7.2} µW  clock tree {:>7.2} µW  key {} bits",
                    t.name, t.freq_mhz, t.density, t.leakage, t.clock_tree_power, t.n_key
                );
            }
            Ok(())
        }
    }
}

pub fn generate(
    preset: &str,
    seed: u64,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("generate");
    let p = presets::preset(preset)?;
    run.seed("generate", seed);
    run.config(&p);
    let d = run.stage("generate", || p.generate(seed))?;
    write(output, &(d.to_json() + "\n"))?;
    run.output(output);
    finish(run, output, manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub design: String,
    pub library: String,
    /// Clock the design is constrained to.
    pub clock_mhz: f64,
    /// Highest clock with non-negative slack at the default margin.
    pub estimated_mhz: f64,
    pub n_key: u32,
    pub toggles_per_cycle: f64,
    pub power: PowerReport,
    pub density: f64,
    pub core_area_um2: f64,
    pub cells: usize,
    pub flip_flops: usize,
    pub stage_seconds: BTreeMap<String, f64>,
}

pub fn analyze(
    design: &Path,
    toggles: Option<f64>,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("analyze");
    run.input(design);
    let mut times = BTreeMap::new();
    let timed = |times: &mut BTreeMap<String, f64>, name: &str, t: Instant| {
        times.insert(name.to_string(), t.elapsed().as_secs_f64());
    };
    let t = Instant::now();
    let d = read_design(design)?;
    let nl = Netlist::extract(&d, ExtractMode::Attacker);
    timed(&mut times, "netlist_extraction", t);
    let t = Instant::now();
    let estimated_mhz =
        sta::estimate_frequency(&nl, &d.library, STA_MARGIN_PS, Derate::Uniform(1.0))?;
    timed(&mut times, "frequency_estimation", t);
    let t = Instant::now();
    let activity = activity_for(&d, toggles)?;
    let Activity::Uniform {
        toggles_per_cycle, ..
    } = activity
    else {
        unreachable!()
    };
    let power = power::power_report(&d, &activity, clock_mhz(&d), &ProcessSample::nominal());
    timed(&mut times, "power_analysis", t);
    let n_key = d.tags.values().filter(|v| v.starts_with("key_bit")).count() as u32;
    let report = AnalysisReport {
        schema: ANALYSIS_SCHEMA.into(),
        design: d.name.clone(),
        library: d.library.name.clone(),
        clock_mhz: clock_mhz(&d),
        estimated_mhz,
        n_key,
        toggles_per_cycle,
        power,
        density: d.density(),
        core_area_um2: d.row_area(),
        cells: nl.cells.len(),
        flip_flops: (0..nl.cells.len())
            .filter(|&c| nl.is_sequential(&d.library, c))
            .count(),
        stage_seconds: times,
    };
    for (k, v) in &report.stage_seconds {
        run.record(k, *v);
    }
    write_json(output, &report)?;
    run.output(output);
    finish(run, output, manifest)
}

pub struct SctArgs {
    pub report: PathBuf,
    pub fraction: f64,
    pub n_leak: u32,
    pub competing_leakage: f64,
    pub area_cap: Option<f64>,
    pub area_cap_fraction: Option<f64>,
    pub flavor: Flavor,
    pub group: String,
    pub families: Option<PathBuf>,
    pub fallback_reference: bool,
    pub margin: f64,
}

pub fn design_sct(args: &SctArgs, output: &Path, manifest: Option<PathBuf>) -> Result<(), Failure> {
    let mut run = Run::new("design-sct");
    run.input(&args.report);
    let report: AnalysisReport = read_json(&args.report)?;
    if report.n_key == 0 {
        return Err(Failure::validation(format!(
            "{}: no key bits in the analysis",
            args.report.display()
        )));
    }
    let mut lib = CellLibrary::default_65nm();
    if let Some(f) = &args.families {
        run.input(f);
        let cal: CalibrationReport = read_json(f)?;
        for fam in cal.families {
            lib.ro_constants.insert(fam.name.clone(), fam);
        }
    }
    let mut req = SctRequest::new(report.power, report.clock_mhz, report.n_key);
    req.n_leak = args.n_leak;
    req.fraction = args.fraction;
    req.competing_leakage = args.competing_leakage;
    req.group = args.group.clone();
    req.flavor = args.flavor;
    req.margin = args.margin;
    req.area_cap = match (args.area_cap, args.area_cap_fraction) {
        (Some(a), _) => Some(a),
        (None, Some(f)) => Some(f * report.core_area_um2),
        (None, None) => None,
    };
    run.config(&req);
    let cfg = match run.stage("design_sct", || size_sct(&lib, &req)) {
        Ok(cfg) => cfg,
        Err(e @ sctkit::Error::NoFeasibleRo { .. }) if args.fallback_reference => {
            let family = report.design.get(..6).unwrap_or(&report.design).to_string();
            eprintln!("warning: {e}; using the reference ring of {family}");
            let mut cfg = reference_config(&lib, &family, args.flavor, args.margin)?;
            cfg.n_key = report.n_key;
            cfg.n_leak = args.n_leak;
            cfg.validate()?;
            cfg
        }
        Err(e) => return Err(e.into()),
    };
    write_json(output, &cfg)?;
    run.output(output);
    finish(run, output, manifest)
}

#[allow(clippy::too_many_arguments)]
pub fn insert(
    design: &Path,
    sct: &Path,
    output: &Path,
    patch_path: &Path,
    key_mode: KeyMode,
    margin: f64,
    congestion: f64,
    signoff_path: Option<&Path>,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("insert");
    run.input(design);
    run.input(sct);
    let d = read_design(design)?;
    let cfg: SctConfig = read_json(sct)?;
    cfg.validate()?;
    let mode = match key_mode {
        KeyMode::Oracle => KeyFindMode::Oracle,
        KeyMode::Heuristic => KeyFindMode::Heuristic,
    };
    let route = RouteParams::default().with_congestion(congestion);
    run.config(&route);
    let (patch, after) = run.stage("eco", || eco::insert_sct(&d, &cfg, mode, &route))?;
    let report = run.stage("signoff", || {
        eco::signoff(&after, &patch.ring_cells, SCT_PREFIX, margin)
    })?;
    if let Some(p) = signoff_path {
        write_json(p, &report)?;
        run.output(p);
    }
    let (pre, post) = eco::density_change(&d, &after);
    eprintln!(
        "density {pre:.2} % -> {post:.2} %, min slack {:.1} ps, upper-layer share {:.2}",
        report.min_slack,
        patch.routing.upper_fraction()
    );
    if !report.ok {
        let mut msg = format!(
            "signoff failed: worst slack {:.1} ps at {}",
            report.min_slack, report.worst_endpoint
        );
        if let Some(r) = &report.remedy {
            msg.push_str("; ");
            msg.push_str(r);
        }
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            msg,
        });
    }
    write(output, &(after.to_json() + "\n"))?;
    write(patch_path, &(patch.to_json() + "\n"))?;
    run.output(output);
    run.output(patch_path);
    finish(run, output, manifest)
}

/// One simulated capture on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub die: usize,
    pub repeat: usize,
    pub file: String,
    /// Ground truth kept apart from the samples the attack reads.
    pub annotations: Annotations,
}

/// Index of a trace directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub schema: String,
    pub design: String,
    pub n_key: usize,
    pub n_leak: usize,
    /// s.
    pub step_period: f64,
    /// Leaked key, for scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub seed: u64,
    pub config: TraceConfig,
    pub traces: Vec<TraceFile>,
}

fn trace_config(common: &Common) -> Result<TraceConfig, Failure> {
    let mut cfg = config::load(common.config.as_deref())?;
    if let Some(s) = common.noise_sigma {
        cfg.noise_sigma = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    trojaned: &Path,
    patch_path: &Path,
    key_hex: &str,
    dies: usize,
    repeats: usize,
    seed: u64,
    toggles: Option<f64>,
    common: &Common,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("simulate");
    run.input(trojaned);
    run.input(patch_path);
    if dies == 0 || repeats == 0 {
        return Err(Failure::validation(
            "--dies and --repeats must be at least 1",
        ));
    }
    let cfg = trace_config(common)?;
    if let Some(c) = &common.config {
        run.input(c);
    }
    run.config(&cfg);
    run.seed("process", seed);
    run.seed("noise", cfg.noise_seed);
    let d = read_design(trojaned)?;
    let patch = EcoPatch::parse_str(
        &std::fs::read_to_string(patch_path).map_err(|e| Failure::io(patch_path, e))?,
    )?;
    if patch.design != d.name {
        return Err(Failure::validation(format!(
            "patch is for {:?}, design is {:?}",
            patch.design, d.name
        )));
    }
    let key = sim::key_from_hex(key_hex, patch.sct.n_key as usize)?;
    let activity = activity_for(&d, toggles)?;
    let chip = Chip::new(&d, &patch.sct, &patch.ring_cells, SCT_PREFIX, &activity)?;
    let sampler = chip.sampler(cfg.process);
    let config_hash = manifest::sha256_bytes(
        serde_json::to_string(&cfg)
            .expect("config serializes")
            .as_bytes(),
    );
    let jobs: Vec<(usize, usize)> = (0..dies)
        .flat_map(|d| (0..repeats).map(move |r| (d, r)))
        .collect();
    let traces = run.stage("simulate", || {
        jobs.par_iter()
            .map(|&(die, repeat)| {
                let mut c = cfg.clone();
                c.noise_seed = cfg.noise_seed.wrapping_add(repeat as u64);
                sim::simulate_chip(&chip, &key, &sampler.sample(seed, die as u64), &c)
            })
            .collect::<sctkit::Result<Vec<PowerTrace>>>()
    })?;
    std::fs::create_dir_all(output).map_err(|e| Failure::io(output, e))?;
    let mut files = Vec::new();
    run.stage("write", || -> Result<(), Failure> {
        for (&(die, repeat), tr) in jobs.iter().zip(&traces) {
            let name = format!("die{die:03}_r{repeat}.csv");
            let path = output.join(&name);
            write(&path, &tr.stripped().to_csv(&config_hash))?;
            files.push(TraceFile {
                die,
                repeat,
                file: name,
                annotations: tr
                    .annotations
                    .clone()
                    .expect("simulated traces are annotated"),
            });
        }
        Ok(())
    })?;
    let first: Vec<PowerTrace> = jobs
        .iter()
        .zip(&traces)
        .filter(|((_, r), _)| *r == 0)
        .map(|(_, t)| t.clone())
        .collect();
    let (stats, sep) = attack::trace_stats(&first);
    let stats_path = output.join("stats.csv");
    write(&stats_path, &sim::stats_csv(&stats))?;
    if let Some(s) = sep {
        eprintln!(
            "closest symbol gap {:.3} µA{}",
            s.min_gap,
            if s.overlap {
                ", intervals overlap"
            } else if s.almost_overlap {
                ", intervals nearly overlap"
            } else {
                ""
            }
        );
    }
    let set = TraceSet {
        schema: TRACES_SCHEMA.into(),
        design: d.name.clone(),
        n_key: key.len(),
        n_leak: patch.sct.n_leak as usize,
        step_period: cfg.step_period,
        key: Some(sim::key_to_hex(&key)),
        seed,
        config: cfg,
        traces: files,
    };
    let index = output.join("traces.json");
    write_json(&index, &set)?;
    run.output(&index);
    run.output(&stats_path);
    for f in &set.traces {
        run.output(output.join(&f.file));
    }
    finish(run, output, manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub die: usize,
    pub repeat: usize,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<KeyRecoveryResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub schema: String,
    pub design: String,
    pub hint: TriggerHint,
    pub rows: Vec<AttackRow>,
    /// Bitwise majority over every decoded trace.
    pub consensus_key: Option<String>,
    pub success_rate: Option<f64>,
    pub bit_error_rate: Option<f64>,
    pub ambiguous: usize,
}

fn majority(results: &[&KeyRecoveryResult], n_key: usize) -> Option<Vec<bool>> {
    if results.is_empty() {
        return None;
    }
    Some(
        (0..n_key)
            .map(|i| {
                2 * results
                    .iter()
                    .filter(|r| r.recovered_bits.get(i) == Some(&true))
                    .count()
                    > results.len()
            })
            .collect(),
    )
}

pub fn attack(
    traces: &Path,
    hint: TriggerHint,
    resolution: Option<f64>,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("attack");
    let index = traces.join("traces.json");
    run.input(&index);
    let set: TraceSet = read_json(&index)?;
    let truth = set
        .key
        .as_deref()
        .map(|k| sim::key_from_hex(k, set.n_key))
        .transpose()?;
    let opts = DecodeOptions {
        n_key: set.n_key,
        n_leak: set.n_leak,
        step_period: set.step_period,
        hint,
        resolution,
    };
    run.config(&opts);
    let loaded = run.stage("read", || {
        set.traces
            .iter()
            .map(|f| {
                let path = traces.join(&f.file);
                let text = std::fs::read_to_string(&path).map_err(|e| Failure::io(&path, e))?;
                let mut tr = PowerTrace::parse_csv(&text)?;
                if matches!(hint, TriggerHint::Oracle) {
                    tr.annotations = Some(f.annotations.clone());
                }
                Ok((path, tr))
            })
            .collect::<Result<Vec<_>, Failure>>()
    })?;
    for (p, _) in &loaded {
        run.input(p);
    }
    let rows = run.stage("decode", || {
        set.traces
            .par_iter()
            .zip(&loaded)
            .map(|(f, (_, tr))| {
                let (result, error) = match attack::decode_trace(tr, &opts, truth.as_deref()) {
                    Ok(r) => (Some(r), None),
                    Err(e @ sctkit::Error::TriggerNotFound) => (None, Some(e.to_string())),
                    Err(e) => return Err(Failure::from(e)),
                };
                Ok(AttackRow {
                    die: f.die,
                    repeat: f.repeat,
                    file: f.file.clone(),
                    result,
                    error,
                })
            })
            .collect::<Result<Vec<_>, Failure>>()
    })?;
    let decoded: Vec<&KeyRecoveryResult> = rows.iter().filter_map(|r| r.result.as_ref()).collect();
    let ambiguous = rows.len() - decoded.len() + decoded.iter().filter(|r| r.ambiguous).count();
    let n = rows.len() as f64;
    let scored = truth.is_some() && n > 0.0;
    let report = AttackReport {
        schema: ATTACK_SCHEMA.into(),
        design: set.design.clone(),
        hint,
        consensus_key: majority(&decoded, set.n_key).map(|k| sim::key_to_hex(&k)),
        success_rate: scored
            .then(|| decoded.iter().filter(|r| r.success == Some(true)).count() as f64 / n),
        bit_error_rate: scored.then(|| {
            rows.iter()
                .map(|r| match &r.result {
                    Some(k) => k.bit_errors.unwrap_or(0) as f64 / set.n_key as f64,
                    None => 0.5,
                })
                .sum::<f64>()
                / n
        }),
        ambiguous,
        rows,
    };
    write_json(output, &report)?;
    run.output(output);
    if let Some(s) = report.success_rate {
        eprintln!(
            "recovered the full key in {:.1} % of {} traces",
            100.0 * s,
            report.rows.len()
        );
    }
    finish(run, output, manifest)?;
    if ambiguous > 0 {
        return Err(Failure {
            code: EXIT_AMBIGUOUS,
            msg: format!(
                "{ambiguous} of {} traces decoded ambiguously",
                report.rows.len()
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub design: String,
    pub density_before: f64,
    pub density_after: Option<f64>,
    pub min_slack_ps: f64,
    pub added_wire_um: Option<BTreeMap<String, f64>>,
    pub upper_fraction: Option<f64>,
    pub spread_um: Option<f64>,
    pub signoff: Option<eco::SignoffReport>,
}

pub fn report(
    design: &Path,
    trojaned: Option<&Path>,
    patch_path: Option<&Path>,
    bin_um: f64,
    bins: usize,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("report");
    run.input(design);
    if !(bin_um > 0.0) || bins == 0 {
        return Err(Failure::validation("--bin-um and --bins must be positive"));
    }
    let d = read_design(design)?;
    std::fs::create_dir_all(output).map_err(|e| Failure::io(output, e))?;
    let nl = Netlist::extract(&d, ExtractMode::Oracle);
    let timing = run.stage("sta", || {
        sta::analyze_timing::<f64>(
            &nl,
            &d.library,
            &StaOptions::new(d.clock_period, STA_MARGIN_PS),
        )
    })?;
    let mut out = Vec::new();
    let mut put = |name: &str, text: String| -> Result<(), Failure> {
        let p = output.join(name);
        write(&p, &text)?;
        out.push(p);
        Ok(())
    };
    put(
        "slack_histogram.csv",
        sta::slack_histogram(&timing, bins).to_csv("slack_ps"),
    )?;
    put("density_before.csv", DensityMap::of(&d, bin_um).to_csv())?;
    let mut summary = LayoutSummary {
        design: d.name.clone(),
        density_before: 100.0 * d.density(),
        density_after: None,
        min_slack_ps: timing.min_slack().unwrap_or(f64::INFINITY),
        added_wire_um: None,
        upper_fraction: None,
        spread_um: None,
        signoff: None,
    };
    if let (Some(t), Some(p)) = (trojaned, patch_path) {
        run.input(t);
        run.input(p);
        let after = read_design(t)?;
        let patch =
            EcoPatch::parse_str(&std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?)?;
        let (_, post) = eco::density_change(&d, &after);
        put("density_after.csv", DensityMap::of(&after, bin_um).to_csv())?;
        put("layers.csv", patch.routing.to_csv())?;
        summary.density_after = Some(post);
        summary.added_wire_um = Some(eco::layer_table(&patch.routing));
        summary.upper_fraction = Some(patch.routing.upper_fraction());
        summary.spread_um = Some(patch.spread_um);
        summary.signoff = Some(run.stage("signoff", || {
            eco::signoff(&after, &patch.ring_cells, SCT_PREFIX, STA_MARGIN_PS)
        })?);
    }
    put(
        "summary.json",
        serde_json::to_string_pretty(&summary).expect("serializable") + "\n",
    )?;
    for p in out {
        run.output(p);
    }
    finish(run, output, manifest)
}

pub fn calibrate(
    anchors: &str,
    tolerance: f64,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("calibrate");
    let (group, rows) = match anchors {
        "core" => (calibrate::CORE_GROUP, calibrate::core_anchors()),
        "testchip" => (calibrate::TESTCHIP_GROUP, calibrate::testchip_anchors()),
        file => {
            let path = Path::new(file);
            run.input(path);
            let rows: Vec<Anchor> = read_json(path)?;
            (calibrate::CORE_GROUP, rows)
        }
    };
    run.config(&rows);
    let lib = CellLibrary::default_65nm();
    let cal = run.stage("calibrate", || {
        calibrate::calibrate_ro_constants(&lib, group, &rows, tolerance)
    })?;
    eprintln!(
        "{} families, worst residual {:.1} %",
        cal.families.len(),
        100.0 * cal.max_abs_residual
    );
    write_json(output, &cal)?;
    run.output(output);
    finish(run, output, manifest)
}

#[allow(clippy::too_many_arguments)]
pub fn campaign(
    preset: &str,
    seed: u64,
    dies: usize,
    repeats: usize,
    key_hex: Option<&str>,
    key_seed: u64,
    hint: TriggerHint,
    common: &Common,
    rows: Option<&Path>,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("campaign");
    let p = presets::preset(preset)?;
    let cfg = trace_config(common)?;
    if let Some(c) = &common.config {
        run.input(c);
    }
    run.config(&cfg);
    run.seed("generate", seed);
    run.seed("process", seed);
    run.seed("noise", cfg.noise_seed);
    let t = run.stage("build", || p.trojaned(seed))?;
    let n_key = t.chip.sct.n_key as usize;
    let key = match key_hex {
        Some(h) => sim::key_from_hex(h, n_key)?,
        None => {
            run.seed("key", key_seed);
            attack::random_key(n_key, key_seed)
        }
    };
    let report = run.stage("campaign", || {
        attack::campaign(&t.chip, &key, dies, repeats, seed, &cfg, hint)
    })?;
    write_json(output, &report)?;
    run.output(output);
    if let Some(r) = rows {
        write(r, &report.rows_csv())?;
        run.output(r);
    }
    if let Some(s) = report.success_rate {
        eprintln!(
            "{}: full key in {:.1} % of {} runs, bit error rate {:.4}",
            report.design,
            100.0 * s,
            report.rows.len(),
            report.bit_error_rate.unwrap_or(0.0)
        );
    }
    finish(run, output, manifest)
}

#[allow(clippy::too_many_arguments)]
pub fn mc(
    design: &Path,
    samples: usize,
    seed: u64,
    bins: usize,
    common: &Common,
    csv: Option<&Path>,
    output: &Path,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut run = Run::new("mc");
    run.input(design);
    if samples == 0 || bins == 0 {
        return Err(Failure::validation(
            "--samples and --bins must be at least 1",
        ));
    }
    let cfg = trace_config(common)?;
    if let Some(c) = &common.config {
        run.input(c);
    }
    run.config(&cfg.process);
    run.seed("process", seed);
    let d = read_design(design)?;
    let s = run.stage("monte_carlo", || {
        power::monte_carlo_static(&d, samples, seed, cfg.process, bins)
    });
    eprintln!(
        "static power mean {:.3} µW (nominal {:.3}), skewness {:.3}",
        s.mean, s.nominal, s.skewness
    );
    write_json(output, &s)?;
    run.output(output);
    if let Some(p) = csv {
        write(p, &s.histogram.to_csv("static_uW"))?;
        run.output(p);
    }
    finish(run, output, manifest)
}
