use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cezanne::analysis::{feasibility_report, reports_csv};
use cezanne::assembler::generate_set;
use cezanne::detpool::{checks, SegMask};
use cezanne::evalharness::{aggregate, group_outcomes, make_schedule, parse_outcomes, scaling_csv, scaling_grid, Protocol, ScalingRow};
use cezanne::meshio::{mesh_toy, obj_string, read_manifest, sha256_hex, stl_bytes, Manifest, ManifestConfig, MeshError};
use rayon::prelude::*;

use crate::config::{CliConfig, Precision};
use crate::error::{CliError, Result};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(bytes))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn mesh_error(e: MeshError) -> CliError {
    match e {
        MeshError::IoFailure { .. } => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Writes `manifest.json`, one STL and one OBJ per toy under `meshes/`, and
/// `SHA256SUMS` covering every written file.
pub fn generate(cfg: &CliConfig, out: &Path) -> Result<()> {
    let toys = generate_set(&cfg.generation).map_err(CliError::config)?;
    let manifest = Manifest::build(
        &toys,
        ManifestConfig {
            generation: cfg.generation.clone(),
            tessellation: cfg.tessellation,
            caliper_directions: cfg.caliper_directions,
        },
    )
    .map_err(mesh_error)?;
    let meshes = out.join("meshes");
    create_dir(&meshes)?;
    let mut sums = vec![("manifest.json".to_string(), write(&out.join("manifest.json"), &manifest.to_bytes())?)];
    let files: Vec<(String, Vec<u8>, String)> = toys
        .par_iter()
        .map(|t| {
            let mesh = mesh_toy(t, &cfg.tessellation);
            let stl = stl_bytes(&mesh, false).map_err(mesh_error)?;
            Ok((t.id.clone(), stl, obj_string(&mesh)))
        })
        .collect::<Result<_>>()?;
    let mut stl_concat = Vec::new();
    for (id, stl, obj) in &files {
        let stl_sum = write(&meshes.join(format!("{id}.stl")), stl)?;
        stl_concat.extend_from_slice(stl_sum.as_bytes());
        sums.push((format!("meshes/{id}.stl"), stl_sum));
        sums.push((format!("meshes/{id}.obj"), write(&meshes.join(format!("{id}.obj")), obj.as_bytes())?));
    }
    let listing: String = sums.iter().map(|(name, sum)| format!("{sum}  {name}\n")).collect();
    write(&out.join("SHA256SUMS"), listing.as_bytes())?;

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in &toys {
        *counts.entry(t.category.label()).or_default() += 1;
    }
    println!("generated {} toys into {}", toys.len(), out.display());
    for (label, n) in &counts {
        println!("  {label:<16} {n}");
    }
    println!("failures 0");
    println!("manifest sha256 {}", sums[0].1);
    println!("stl sha256 {}", sha256_hex(&stl_concat));
    Ok(())
}

pub fn analyze(cfg: &CliConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    let manifest = read_manifest(manifest_path).map_err(mesh_error)?;
    let tess = manifest.config.tessellation;
    let reports = manifest
        .toys
        .par_iter()
        .map(|r| {
            let toy = r.toy();
            let mesh = mesh_toy(&toy, &tess);
            feasibility_report(&toy, &mesh, &cfg.gripper, &cfg.print, cfg.caliper_directions).map_err(CliError::config)
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    let path = out.join("analysis.csv");
    let digest = write(&path, reports_csv(&reports).as_bytes())?;
    let graspable = reports.iter().filter(|r| r.graspable).count();
    let fits = reports.iter().filter(|r| r.fits_build_volume).count();
    let thin = reports.iter().filter(|r| r.thin_wall).count();
    println!("analyzed {} toys", reports.len());
    println!("  graspable        {graspable}");
    println!("  fits build       {fits}");
    println!("  thin wall        {thin}");
    println!("analysis.csv sha256 {digest}");
    Ok(())
}

pub fn detpool_check(cfg: &CliConfig, seed: u64, mask: Option<&Path>) -> Result<()> {
    if cfg.precision == Precision::F32 {
        eprintln!("warning: gradient checks need 64-bit precision; set \"precision\": \"f64\"");
        return Err(CliError::Config("precision f32 is not supported for gradient checks".into()));
    }
    let mask = match mask {
        None => None,
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            Some(SegMask::from_pgm(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
        }
    };
    let outcomes = checks::run_all(&cfg.encoder, &cfg.gradient_encoder, seed, mask.as_ref()).map_err(CliError::config)?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    for o in &outcomes {
        println!("{} {:<30} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    if failed.is_empty() {
        println!("all {} checks passed", outcomes.len());
        Ok(())
    } else {
        Err(CliError::Property(format!("failed checks: {}", failed.join(", "))))
    }
}

/// Object ids, one per line; blank lines and `#` comments are skipped.
pub fn read_objects(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn schedule(protocol: Protocol, objects: &Path, seed: u64, out: &Path) -> Result<()> {
    let ids = read_objects(objects)?;
    let schedule = make_schedule(protocol, &ids, seed).map_err(CliError::config)?;
    create_dir(out)?;
    let digest = write(&out.join("schedule.json"), schedule.to_json().as_bytes())?;
    println!("{} trials for {} objects ({protocol}, seed {seed})", schedule.trials.len(), ids.len());
    println!("schedule.json sha256 {digest}");
    Ok(())
}

pub fn aggregate_outcomes(outcomes: &Path, out: &Path) -> Result<()> {
    let rows = parse_outcomes(&read_text(outcomes)?).map_err(|e| CliError::Config(format!("{}: {e}", outcomes.display())))?;
    let table = aggregate(&group_outcomes(&rows)).map_err(CliError::config)?;
    create_dir(out)?;
    let digest = write(&out.join("success.csv"), table.to_csv().as_bytes())?;
    write(&out.join("success.txt"), table.to_grid().as_bytes())?;
    print!("{}", table.to_grid());
    println!("overall {}", table.overall_display);
    println!("success.csv sha256 {digest}");
    Ok(())
}

/// Reads `label,demos,success` rows.
pub fn read_scaling_rows(path: &Path) -> Result<Vec<ScalingRow>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.deserialize::<ScalingRow>() {
        let row = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if !(0.0..=100.0).contains(&row.success) {
            return Err(CliError::Config(format!("{}: success {} outside [0, 100]", path.display(), row.success)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn report(rows_path: &Path, out: &Path) -> Result<()> {
    let rows = read_scaling_rows(rows_path)?;
    create_dir(out)?;
    let csv_path: PathBuf = out.join("scaling.csv");
    let digest = write(&csv_path, scaling_csv(&rows).as_bytes())?;
    let grid = scaling_grid(&rows);
    write(&out.join("scaling.txt"), grid.as_bytes())?;
    print!("{grid}");
    println!("scaling.csv sha256 {digest}");
    Ok(())
}
