use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cezanne(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cezanne"))
        .args(args)
        .current_dir(dir)
        .env_remove("CEZANNE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn line_with<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no `{prefix}` line in:\n{text}"))
}

const SMALL: &str = r#"{"generation": {"composition": {
    "singles": {"cuboid": 2, "sphere": 1, "cylinder": 1, "ring": 1},
    "multi": {"2": 1, "3": 1, "4": 1, "5": 1}}}, "caliper_directions": 64}"#;

#[test]
fn generate_defaults_reproduce_the_standard_set() {
    let dir = tempfile::tempdir().unwrap();
    let a = cezanne(&["generate", "--out", "a"], dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let text = stdout(&a);
    assert!(text.contains("generated 250 toys"), "{text}");
    for (label, n) in [("single_cuboid", 46), ("single_ring", 19), ("multi_5", 47)] {
        assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == [label, &n.to_string()]), "{label}: {text}");
    }
    assert!(text.contains("failures 0"));
    let meshes = fs::read_dir(dir.path().join("a/meshes")).unwrap().count();
    assert_eq!(meshes, 500);
    let sums = fs::read_to_string(dir.path().join("a/SHA256SUMS")).unwrap();
    assert_eq!(sums.lines().count(), 501);

    let b = cezanne(&["generate", "--out", "b"], dir.path());
    assert!(b.status.success());
    assert_eq!(line_with(&text, "manifest sha256"), line_with(&stdout(&b), "manifest sha256"));
    assert_eq!(line_with(&text, "stl sha256"), line_with(&stdout(&b), "stl sha256"));
    assert_eq!(sums, fs::read_to_string(dir.path().join("b/SHA256SUMS")).unwrap());
}

#[test]
fn seed_changes_the_set() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    let run = |seed: &str, out: &str| {
        let o = cezanne(&["generate", "--config", "small.json", "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        line_with(&stdout(&o), "manifest sha256").to_string()
    };
    assert_eq!(run("5", "x"), run("5", "y"));
    assert_ne!(run("5", "x"), run("6", "z"));
}

#[test]
fn empty_composition_generates_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"generation": {"composition": {
        "singles": {"cuboid": 0, "sphere": 0, "cylinder": 0, "ring": 0},
        "multi": {"2": 0, "3": 0, "4": 0, "5": 0}}}}"#;
    fs::write(dir.path().join("empty.json"), cfg).unwrap();
    let o = cezanne(&["generate", "--config", "empty.json", "--out", "e"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("generated 0 toys"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("e/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["toys"].as_array().unwrap().len(), 0);

    fs::write(dir.path().join("partial.json"), r#"{"generation": {"composition": {"singles": {"cuboid": 1}}}}"#).unwrap();
    let o = cezanne(&["generate", "--config", "partial.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_and_io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"generaton": {}}"#).unwrap();
    let o = cezanne(&["generate", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]"));

    fs::write(dir.path().join("neg.json"), r#"{"generation": {"composition": {
        "singles": {"cuboid": -1, "sphere": 0, "cylinder": 0, "ring": 0},
        "multi": {"2": 0, "3": 0, "4": 0, "5": 0}}}}"#).unwrap();
    assert_eq!(cezanne(&["generate", "--config", "neg.json"], dir.path()).status.code(), Some(2));

    let o = cezanne(&["generate", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[io]"));

    let o = cezanne(&["schedule", "--protocol", "mars_rover", "--objects", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]"));
}

#[test]
fn analyze_reports_every_toy() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    let g = cezanne(&["generate", "--config", "small.json", "--out", "set"], dir.path());
    assert!(g.status.success(), "{}", stderr(&g));
    let a = cezanne(&["analyze", "--config", "small.json", "--manifest", "set/manifest.json", "--out", "set"], dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("analyzed 9 toys"));
    let csv = fs::read_to_string(dir.path().join("set/analysis.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert_eq!(cezanne(&["analyze", "--manifest", "nope.json"], dir.path()).status.code(), Some(3));
}

const SMALL_ENCODER: &str = r#""encoder": {"image_height": 16, "image_width": 16, "embed_dim": 16, "layers": 1, "heads": 2, "mlp_ratio": 2},
    "gradient_encoder": {"image_height": 8, "image_width": 8, "embed_dim": 8, "layers": 1, "heads": 2, "mlp_ratio": 2, "include_cls": true}"#;

#[test]
fn detpool_check_passes_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ok.json"), format!("{{{SMALL_ENCODER}}}")).unwrap();
    let o = cezanne(&["detpool-check", "--config", "ok.json"], dir.path());
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("checks passed"));

    let control = format!("{{{}}}", SMALL_ENCODER.replacen("\"mlp_ratio\": 2}", "\"mlp_ratio\": 2, \"mask_attention_in_det\": false}", 1));
    fs::write(dir.path().join("control.json"), control).unwrap();
    let o = cezanne(&["detpool-check", "--config", "control.json"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL")));
    assert!(stderr(&o).starts_with("error[property]"));

    fs::write(dir.path().join("f32.json"), format!("{{{SMALL_ENCODER}, \"precision\": \"f32\"}}")).unwrap();
    let o = cezanne(&["detpool-check", "--config", "f32.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn detpool_check_accepts_a_pgm_mask() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ok.json"), format!("{{{SMALL_ENCODER}}}")).unwrap();
    let mut pgm = b"P5\n# object\n16 16\n255\n".to_vec();
    for y in 0..16 {
        for x in 0..16 {
            pgm.push(if (3..9).contains(&y) && (5..12).contains(&x) { 255 } else { 0 });
        }
    }
    fs::write(dir.path().join("mask.pgm"), &pgm).unwrap();
    let o = cezanne(&["detpool-check", "--config", "ok.json", "--mask", "mask.pgm"], dir.path());
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    fs::write(dir.path().join("bad.pgm"), b"P2\n1 1\n255\n0\n").unwrap();
    assert_eq!(cezanne(&["detpool-check", "--config", "ok.json", "--mask", "bad.pgm"], dir.path()).status.code(), Some(2));
}

#[test]
fn schedule_covers_every_object() {
    let dir = tempfile::tempdir().unwrap();
    let ids: String = (0..65).map(|i| format!("ycb_{i:03}\n")).collect();
    fs::write(dir.path().join("objects.txt"), format!("# sim objects\n{ids}\n")).unwrap();
    let o = cezanne(&["schedule", "--protocol", "sim_maniskill", "--objects", "objects.txt", "--seed", "3", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("1040 trials for 65 objects"));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("s/schedule.json")).unwrap()).unwrap();
    assert_eq!(s["trials"].as_array().unwrap().len(), 1040);
    assert_eq!(s["protocol"], "sim_maniskill");
    assert_eq!(s["lift_threshold"], 0.3);

    let o = cezanne(&["schedule", "--protocol", "h12_humanoid", "--objects", "objects.txt", "--out", "h"], dir.path());
    assert!(stdout(&o).starts_with("325 trials"));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("h/schedule.json")).unwrap()).unwrap();
    assert!(s["lift_threshold"].is_null());
}

#[test]
fn aggregate_reproduces_table_average() {
    let dir = tempfile::tempdir().unwrap();
    let rates = [60, 40, 60, 40, 60, 60, 60, 60, 60, 20, 60, 60, 20];
    let mut csv = String::from("object,trial_index,success\n");
    for (i, r) in rates.iter().enumerate() {
        for t in 0..5 {
            csv.push_str(&format!("obj{i},{t},{}\n", u8::from(t < r / 20)));
        }
    }
    fs::write(dir.path().join("outcomes.csv"), &csv).unwrap();
    let o = cezanne(&["aggregate", "--outcomes", "outcomes.csv", "--out", "agg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("overall 50.77"));
    let table = fs::read_to_string(dir.path().join("agg/success.csv")).unwrap();
    assert_eq!(table.lines().count(), 15);

    fs::write(dir.path().join("bad.csv"), "object,trial_index,success\na,0,1\na,1,2\n").unwrap();
    let o = cezanne(&["aggregate", "--outcomes", "bad.csv", "--out", "agg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn report_sorts_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("rows.csv"), "label,demos,success\nours,400,70\nbase,100,40\nours,100,50\n").unwrap();
    let o = cezanne(&["report", "--rows", "rows.csv", "--out", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("r/scaling.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "label,demos,success");
    assert!(lines[1].starts_with("base,100"));
    assert!(lines[2].starts_with("ours,100"));
    assert!(dir.path().join("r/scaling.txt").exists());

    fs::write(dir.path().join("oob.csv"), "label,demos,success\nours,400,170\n").unwrap();
    assert_eq!(cezanne(&["report", "--rows", "oob.csv"], dir.path()).status.code(), Some(2));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("rows.csv"), "label,demos,success\nours,100,50\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cezanne"))
        .args(["report", "--rows", "rows.csv"])
        .current_dir(dir.path())
        .env("CEZANNE_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from_env/scaling.csv").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_cezanne"))
        .args(["report", "--rows", "rows.csv", "--out", "from_flag"])
        .current_dir(dir.path())
        .env("CEZANNE_OUT_DIR", "from_env2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from_flag/scaling.csv").exists());
    assert!(!dir.path().join("from_env2").exists());
}
