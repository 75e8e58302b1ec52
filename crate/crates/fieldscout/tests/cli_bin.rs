//! End-to-end tests of the `fieldscout` binary: exit codes, stdout/stderr
//! contracts, file outputs, and byte-level determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

use fieldscout::camera::{CameraModel, GsdLadder};
use fieldscout::field::read_raster;
use fieldscout::oracle::OracleParams;
use fieldscout::planner::{self, DecisionAction, DecisionState, InitParams};

const BIN: &str = env!("CARGO_BIN_EXE_fieldscout");

/// A throwaway directory holding one config file and one output directory.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(config: &str) -> Workspace {
        let dir = tempfile::tempdir().expect("tempdir");
        std::fs::write(dir.path().join("config.toml"), config).expect("write config");
        Workspace { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(BIN);
        cmd.arg("--config").arg(self.dir.path().join("config.toml"));
        cmd.env_remove("FIELDSCOUT_OUT");
        cmd
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = self.command();
        cmd.arg("--out").arg(self.out());
        cmd.args(args);
        cmd.output().expect("spawn fieldscout")
    }
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

#[track_caller]
fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        stdout(output),
        stderr(output)
    );
}

fn field_spec_toml(name: &str, seed: u64) -> String {
    format!(
        r#"
[[fields]]
name = "{name}"
[fields.spec]
extent_m = [6.0, 6.0]
base_resolution_m_per_px = 0.01
row_spacing_m = 0.8
crop_radius_m = 0.12
crop_jitter_m = 0.04
weed_cluster_count = 4
weed_cluster_radius_m = 0.6
weed_density = 0.9
seed = {seed}
"#
    )
}

/// Two 6 m x 6 m fields under a 100 px camera: 2 x 2 survey regions each,
/// small enough that every command finishes in well under a second.
fn base_config() -> String {
    format!(
        r#"
ladder = [0.03, 0.02, 0.01]

[camera]
sensor_width_mm = 6.17
focal_length_mm = 3.6
image_width_px = 100
image_height_px = 100

[oracle]
seed = 11
{}{}
[experiment]
strategies = ["fixed:3.0", "fixed:1.0", "non_adaptive", "linear", "adaptive"]
seeds = [1, 2]
"#,
        field_spec_toml("training", 5),
        field_spec_toml("testing", 6)
    )
}

/// The camera/ladder/oracle sections of [`base_config`], as library values.
fn base_setup() -> (CameraModel, GsdLadder, OracleParams) {
    let cam = CameraModel {
        sensor_width_mm: 6.17,
        focal_length_mm: 3.6,
        image_width_px: 100,
        image_height_px: 100,
    };
    let ladder = GsdLadder::new(vec![0.03, 0.02, 0.01]).expect("ladder");
    let oracle = OracleParams { seed: 11, ..OracleParams::default() };
    (cam, ladder, oracle)
}

fn generate(ws: &Workspace) {
    assert_ok(&ws.run(&["generate"]));
}

fn init(ws: &Workspace) {
    assert_ok(&ws.run(&["init"]));
}

#[test]
fn generate_writes_rasters_deterministically() {
    let ws = Workspace::new(&base_config());
    let output = ws.run(&["generate"]);
    assert_ok(&output);
    let text = stdout(&output);
    assert!(text.contains("wrote"), "stdout: {text}");

    let training = ws.out().join("training.pgm");
    let testing = ws.out().join("testing.pgm");
    assert!(training.exists() && testing.exists());
    let first = std::fs::read(&training).unwrap();

    assert_ok(&ws.run(&["generate"]));
    assert_eq!(std::fs::read(&training).unwrap(), first, "regenerate changed bytes");

    let grid = read_raster(&training).expect("readable raster");
    assert_eq!(grid.width(), 600);
    assert_eq!(grid.height(), 600);
}

#[test]
fn generate_without_fields_warns_and_exits_zero() {
    let ws = Workspace::new("");
    let output = ws.run(&["generate"]);
    assert_eq!(code(&output), 0);
    assert!(stderr(&output).contains("no field specs"), "stderr: {}", stderr(&output));
}

#[test]
fn init_saves_state_that_reloads_within_tolerance() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    let output = ws.run(&["init"]);
    assert_ok(&output);
    let text = stdout(&output);
    assert!(text.contains("|O| ="), "stdout: {text}");
    assert!(text.contains("v_lo"), "stdout: {text}");

    let state_path = ws.out().join("decision_state.toml");
    assert!(state_path.exists());
    let loaded = DecisionState::load(&state_path).expect("state loads");

    let gt = read_raster(&ws.out().join("training.pgm")).unwrap();
    let (cam, ladder, oracle) = base_setup();
    let fresh =
        planner::initialize(&gt, &cam, &ladder, &oracle, &InitParams::default()).unwrap();

    assert_eq!(loaded.set_o().len(), fresh.set_o().len());
    for k in 0..10 {
        let v = 0.05 + 0.09 * k as f64;
        let a = planner::decide(&fresh, v);
        let b = planner::decide(&loaded, v);
        assert!(
            (a.predicted_gain - b.predicted_gain).abs() <= 1e-9,
            "gain drifted at v={v}: {} vs {}",
            a.predicted_gain,
            b.predicted_gain
        );
        match (a.action, b.action) {
            (DecisionAction::Continue, DecisionAction::Continue) => {}
            (
                DecisionAction::Descend { target_gsd: ga },
                DecisionAction::Descend { target_gsd: gb },
            ) => assert_eq!(ga, gb, "descend target drifted at v={v}"),
            (a, b) => panic!("actions diverged at v={v}: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn init_rejects_all_soil_training_field() {
    let mut config = String::from(
        r#"
ladder = [0.03, 0.02, 0.01]

[camera]
sensor_width_mm = 6.17
focal_length_mm = 3.6
image_width_px = 100
image_height_px = 100

[[fields]]
name = "training"
[fields.spec]
extent_m = [6.0, 6.0]
base_resolution_m_per_px = 0.01
row_spacing_m = 50.0
crop_radius_m = 0.12
crop_jitter_m = 0.04
weed_cluster_count = 0
weed_cluster_radius_m = 0.6
weed_density = 0.9
seed = 5
"#,
    );
    config.push_str(&field_spec_toml("testing", 6));
    let ws = Workspace::new(&config);
    generate(&ws);

    let output = ws.run(&["init"]);
    assert_eq!(code(&output), 2, "stderr: {}", stderr(&output));
    assert!(
        stderr(&output).contains("degenerate training field"),
        "stderr: {}",
        stderr(&output)
    );
}

#[test]
fn init_before_generate_is_a_data_error() {
    let ws = Workspace::new(&base_config());
    let output = ws.run(&["init"]);
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("generate"), "stderr: {}", stderr(&output));
}

#[test]
fn run_fixed_prints_stats_and_reruns_identically() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    let field = ws.out().join("testing.pgm");
    let field = field.to_str().unwrap();

    let output = ws.run(&["run", "--strategy", "fixed:3.0", "--field", field, "--seed", "1"]);
    assert_ok(&output);
    let text = stdout(&output);
    let line = text.lines().last().expect("stats line");
    let tokens: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(tokens.len(), 4, "stats line: {line:?}");
    let miou: f64 = tokens[0].parse().expect("field_miou");
    let total: f64 = tokens[1].parse().expect("total_time_s");
    let n_images: usize = tokens[2].parse().expect("n_images");
    let n_descents: usize = tokens[3].parse().expect("n_descents");
    assert!(miou > 0.0 && miou <= 1.0, "mIoU out of range: {miou}");
    assert!(total > 0.0);
    assert_eq!(n_images, 4, "2 x 2 survey grid");
    assert_eq!(n_descents, 0, "fixed strategy never descends");

    let trace = ws.out().join("trace_fixed_3.0_1.jsonl");
    assert!(trace.exists(), "trace file missing");
    let first = std::fs::read(&trace).unwrap();
    assert_ok(&ws.run(&["run", "--strategy", "fixed:3.0", "--field", field, "--seed", "1"]));
    assert_eq!(std::fs::read(&trace).unwrap(), first, "rerun changed trace bytes");
}

#[test]
fn run_adaptive_uses_saved_state_and_writes_trace() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    init(&ws);
    let field = ws.out().join("testing.pgm");
    let state = ws.out().join("decision_state.toml");

    let output = ws.run(&[
        "run",
        "--strategy",
        "adaptive",
        "--field",
        field.to_str().unwrap(),
        "--state",
        state.to_str().unwrap(),
        "--seed",
        "2",
    ]);
    assert_ok(&output);
    let trace = ws.out().join("trace_adaptive_2.jsonl");
    assert!(trace.exists());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.lines().count() >= 3, "meta + events + summary");
    assert!(text.lines().next().unwrap().contains("\"adaptive\""));
}

#[test]
fn run_stateful_without_state_is_a_data_error() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    let field = ws.out().join("testing.pgm");
    let output =
        ws.run(&["run", "--strategy", "adaptive", "--field", field.to_str().unwrap()]);
    assert_eq!(code(&output), 2, "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("state"), "stderr: {}", stderr(&output));
}

#[test]
fn run_unknown_strategy_is_a_usage_error() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    let field = ws.out().join("testing.pgm");
    for bad in ["warp", "fixed:0", "fixed:-1", "fixed:x"] {
        let output = ws.run(&["run", "--strategy", bad, "--field", field.to_str().unwrap()]);
        assert_eq!(code(&output), 1, "strategy {bad:?}, stderr: {}", stderr(&output));
        assert!(stderr(&output).contains("strategy"), "stderr: {}", stderr(&output));
    }
}

#[test]
fn compare_writes_three_tables() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    init(&ws);
    let output = ws.run(&["compare"]);
    assert_ok(&output);

    let compare = std::fs::read_to_string(ws.out().join("compare.csv")).unwrap();
    let mut lines = compare.lines();
    assert_eq!(
        lines.next().unwrap(),
        "strategy,seed,field_miou,total_time_s,n_images,n_descents"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5 * 2, "strategies x seeds");
    assert!(rows[0].starts_with("fixed:3.0,1,"));
    assert!(rows[1].starts_with("fixed:3.0,2,"));
    assert!(rows[9].starts_with("adaptive,2,"));
    for row in &rows {
        assert_eq!(row.split(',').count(), 6, "row: {row:?}");
    }

    let scatter = std::fs::read_to_string(ws.out().join("scatter.csv")).unwrap();
    let mut lines = scatter.lines();
    assert_eq!(
        lines.next().unwrap(),
        "strategy,mean_total_time_s,std_total_time_s,mean_field_miou,std_field_miou,n_seeds"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5, "one row per strategy");
    for row in &rows {
        assert!(row.ends_with(",2"), "n_seeds column: {row:?}");
    }

    let per_image = std::fs::read_to_string(ws.out().join("per_image.csv")).unwrap();
    let mut lines = per_image.lines();
    assert_eq!(lines.next().unwrap(), "strategy,rung_gsd_m_per_px,mean_miou,std_miou,n");
    let labels = ["fixed:3.0", "fixed:1.0", "non_adaptive", "linear", "adaptive"];
    for row in lines {
        let strategy = row.split(',').next().unwrap();
        assert!(labels.contains(&strategy), "row: {row:?}");
    }
}

#[test]
fn compare_without_state_hints_at_init() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    let output = ws.run(&["compare"]);
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("init"), "stderr: {}", stderr(&output));
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let output = Command::new(BIN).arg(flag).output().expect("spawn");
        assert_eq!(code(&output), 0, "{flag}");
        assert!(stdout(&output).contains("fieldscout"), "{flag}: {}", stdout(&output));
    }
}

#[test]
fn unknown_flag_exits_one() {
    let output = Command::new(BIN).arg("--frobnicate").output().expect("spawn");
    assert_eq!(code(&output), 1);
}

#[test]
fn missing_config_is_a_data_error() {
    let ws = Workspace::new(&base_config());
    let mut cmd = Command::new(BIN);
    cmd.arg("--config").arg(ws.dir.path().join("absent.toml"));
    cmd.arg("--out").arg(ws.out());
    cmd.arg("generate");
    cmd.env_remove("FIELDSCOUT_OUT");
    let output = cmd.output().expect("spawn");
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("cannot read config"), "stderr: {}", stderr(&output));
}

#[test]
fn out_dir_honors_env_var_and_flag_precedence() {
    let ws = Workspace::new(&base_config());
    let env_out = ws.dir.path().join("env_out");
    let flag_out = ws.dir.path().join("flag_out");

    let mut cmd = ws.command();
    cmd.arg("generate");
    cmd.env("FIELDSCOUT_OUT", &env_out);
    assert_ok(&cmd.output().expect("spawn"));
    assert!(env_out.join("training.pgm").exists(), "env var ignored");

    let mut cmd = ws.command();
    cmd.arg("--out").arg(&flag_out);
    cmd.arg("generate");
    cmd.env("FIELDSCOUT_OUT", ws.dir.path().join("unused"));
    assert_ok(&cmd.output().expect("spawn"));
    assert!(flag_out.join("training.pgm").exists(), "flag ignored");
    assert!(!ws.dir.path().join("unused").exists(), "flag did not win over env");
}

/// The adaptive mission in `compare` must leave the saved state file
/// untouched: missions evolve a copy.
#[test]
fn compare_does_not_mutate_saved_state() {
    let ws = Workspace::new(&base_config());
    generate(&ws);
    init(&ws);
    let state_path = ws.out().join("decision_state.toml");
    let before = std::fs::read(&state_path).unwrap();
    assert_ok(&ws.run(&["compare"]));
    assert_eq!(std::fs::read(&state_path).unwrap(), before);
}
