//! `run`: measures → lattices → coefficient records (cached) → checks.

use crate::config::RunConfig;
use crate::error::{invalid, io, CliError};
use multiflat::lattice::max_admissible_depth;
use multiflat::measures::generate_measure;
use multiflat::{build_lattice, AlphaRecord, CheckId, CheckReport, DiscreteMeasure, VerifyError, Workbench};
use multiflat::coefficients::CubeBetas;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct RunFlags {
    pub no_compute: bool,
}

#[derive(Debug, Serialize)]
struct StageRecord {
    stage: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<String>,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct MeasureRecord {
    name: String,
    label: String,
    points: usize,
    resolution: f64,
    total_mass: f64,
    lattice_depth: u32,
    cubes: usize,
    stages: Vec<StageRecord>,
}

#[derive(Debug, Serialize)]
struct ReportRecord {
    measure: String,
    check: CheckId,
    depth: u32,
    file: PathBuf,
    c_star: f64,
    ceiling: f64,
    pass: bool,
    seconds: f64,
}

#[derive(Debug, Default, Serialize)]
struct Manifest {
    tool: String,
    seed: u64,
    config: Value,
    measures: Vec<MeasureRecord>,
    reports: Vec<ReportRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    exit_code: i32,
    seconds: f64,
}

/// Runs a validated config. Returns the exit code (0 all pass, 2 some check
/// failed); errors map to exit code 1. The manifest is written in all cases
/// once the output directory is known.
pub fn run(cfg: &RunConfig, flags: &RunFlags) -> Result<i32, CliError> {
    let ids = cfg.validate()?;
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(io(out))?;
    let started = Instant::now();
    let mut manifest = Manifest {
        tool: format!("multiflat {}", env!("CARGO_PKG_VERSION")),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        ..Default::default()
    };
    let result = execute(cfg, &ids, flags, &mut manifest);
    manifest.seconds = started.elapsed().as_secs_f64();
    manifest.exit_code = match &result {
        Ok(code) => *code,
        Err(e) => {
            manifest.error = Some(e.to_string());
            1
        }
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    write_summary(&out.join("summary.csv"), &manifest.reports)?;
    result
}

fn execute(cfg: &RunConfig, ids: &[CheckId], flags: &RunFlags, manifest: &mut Manifest) -> Result<i32, CliError> {
    let depth = cfg.max_depth();
    // generate everything first so the depth floor is validated before any
    // expensive stage
    let mut measures = Vec::new();
    for (i, entry) in cfg.measures.iter().enumerate() {
        let t = Instant::now();
        let m = generate_measure(&entry.spec).map_err(|e| invalid(format!("measures[{i}].spec"), e.to_string()))?;
        let max = max_admissible_depth(m.diameter(), m.resolution());
        if depth > max {
            return Err(invalid(
                "depths",
                format!("depth {depth} exceeds the maximum {max} admissible for measure {} (h = {})", entry.name, m.resolution()),
            ));
        }
        measures.push((entry, m, t.elapsed().as_secs_f64()));
    }
    let cache_dir = cfg.output.join("cache");
    let mut all_pass = true;
    for (entry, m, gen_secs) in measures {
        let mut stages = vec![StageRecord { stage: "measure", status: "computed", key: None, seconds: gen_secs }];
        let t = Instant::now();
        let lattice = build_lattice(&m, depth)?;
        stages.push(StageRecord { stage: "lattice", status: "computed", key: None, seconds: t.elapsed().as_secs_f64() });
        let mut wb = Workbench::new(lattice, cfg.verify.clone())
            .map_err(|e| pipeline(&entry.name, e))?
            .with_gradient_energy(entry.spec.gradient_energy());
        let content = measure_hash(&m);
        if ids.iter().any(|id| id.needs_alpha()) {
            let key = stage_key("alpha", &content, depth, &cfg.verify.alpha)?;
            let stage = cached_stage::<AlphaRecord>(
                CacheEntry { stage: "alpha", measure: &entry.name, path: cache_dir.join(format!("alpha-{key}.json")), key },
                flags,
                &mut wb,
                |wb, recs| wb.set_alpha(recs),
                |wb| wb.alpha().map(|r| r.to_vec()),
            )?;
            stages.push(stage);
        }
        if ids.iter().any(|id| id.needs_betas()) {
            let key = stage_key("betas", &content, depth, &())?;
            let stage = cached_stage::<CubeBetas>(
                CacheEntry { stage: "betas", measure: &entry.name, path: cache_dir.join(format!("betas-{key}.json")), key },
                flags,
                &mut wb,
                |wb, recs| wb.set_betas(recs),
                |wb| wb.betas().map(|r| r.to_vec()),
            )?;
            stages.push(stage);
        }
        manifest.measures.push(MeasureRecord {
            name: entry.name.clone(),
            label: m.label.clone(),
            points: m.len(),
            resolution: m.resolution(),
            total_mass: m.total_mass(),
            lattice_depth: depth,
            cubes: wb.lattice().len(),
            stages,
        });
        let dir = cfg.output.join("reports").join(&entry.name);
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        for &d in &cfg.depths {
            for &id in ids {
                let t = Instant::now();
                let report = wb.run(id, Some(d)).map_err(|e| pipeline(&format!("{id} on {} at depth {d}", entry.name), e))?;
                let file = dir.join(format!("{id}_d{d}.json"));
                write_json(&file, &report)?;
                log::info!("{id} {} d={d}: C* = {:.4} ({})", entry.name, report.c_star, if report.pass { "pass" } else { "FAIL" });
                all_pass &= report.pass;
                manifest.reports.push(record(&entry.name, &report, file, t.elapsed().as_secs_f64()));
            }
        }
    }
    Ok(if all_pass { 0 } else { 2 })
}

fn record(measure: &str, r: &CheckReport, file: PathBuf, seconds: f64) -> ReportRecord {
    ReportRecord {
        measure: measure.to_string(),
        check: r.check,
        depth: r.depth,
        file,
        c_star: r.c_star,
        ceiling: r.ceiling,
        pass: r.pass,
        seconds,
    }
}

fn pipeline(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline { context: context.to_string(), message: e.to_string() }
}

/// Loads a stage output from the cache, or computes and stores it.
/// Where a stage output lives in the cache.
struct CacheEntry<'a> {
    stage: &'static str,
    measure: &'a str,
    path: PathBuf,
    key: String,
}

fn cached_stage<T: Serialize + serde::de::DeserializeOwned>(
    entry: CacheEntry,
    flags: &RunFlags,
    wb: &mut Workbench,
    install: impl FnOnce(&mut Workbench, Vec<T>) -> Result<(), VerifyError>,
    compute: impl FnOnce(&mut Workbench) -> Result<Vec<T>, VerifyError>,
) -> Result<StageRecord, CliError> {
    let CacheEntry { stage, measure, path, key } = entry;
    let path = path.as_path();
    let t = Instant::now();
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        install(wb, serde_json::from_str(&text)?).map_err(|e| pipeline(measure, e))?;
        return Ok(StageRecord { stage, status: "cached", key: Some(key), seconds: t.elapsed().as_secs_f64() });
    }
    if flags.no_compute {
        return Err(CliError::MissingCache { stage: stage.into(), measure: measure.into(), key });
    }
    let recs = compute(wb).map_err(|e| pipeline(measure, e))?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    // write-then-rename so an interrupted run never leaves a truncated entry
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(&recs)?).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))?;
    Ok(StageRecord { stage, status: "computed", key: Some(key), seconds: t.elapsed().as_secs_f64() })
}

/// SHA-256 of the measure content (dimensions, coordinates, weights, h).
pub fn measure_hash(m: &DiscreteMeasure) -> String {
    let mut h = Sha256::new();
    h.update((m.ambient_dim() as u64).to_le_bytes());
    h.update((m.intrinsic_dim() as u64).to_le_bytes());
    h.update(m.resolution().to_le_bytes());
    for x in m.coords().iter().chain(m.weights()) {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn stage_key(stage: &str, measure: &str, depth: u32, opts: &impl Serialize) -> Result<String, CliError> {
    let input = json!({
        "stage": stage,
        "version": env!("CARGO_PKG_VERSION"),
        "measure": measure,
        "depth": depth,
        "options": opts,
    });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&input)?)))
}

pub fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).map_err(io(path))
}

fn write_summary(path: &Path, reports: &[ReportRecord]) -> Result<(), CliError> {
    let mut s = String::from("measure,check,depth,c_star,ceiling,pass\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.measure, r.check, r.depth, r.c_star, r.ceiling, r.pass);
    }
    std::fs::write(path, s).map_err(io(path))
}
