//! Compiles a small C program against the generated header and the static
//! library, then runs it: proves the ABI from the consumer side.

use std::path::{Path, PathBuf};
use std::process::Command;

const C_SOURCE: &str = r#"
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <string.h>

#include "fieldscout.h"

static void expect(FsStatus status, FsStatus want, const char *what) {
    if (status != want) {
        fprintf(stderr, "%s: status %d, wanted %d: %s\n", what, (int)status,
                (int)want, fs_last_error_message());
        assert(0);
    }
}

int main(int argc, char **argv) {
    assert(argc == 3);
    const char *config_path = argv[1];
    const char *scratch = argv[2];
    char path[4096];

    assert(strlen(fs_version()) > 0);
    assert(strlen(fs_last_error_message()) == 0);

    FsConfig *config = NULL;
    expect(fs_config_load(NULL, &config), FS_STATUS_NULL_POINTER, "null path");
    assert(strlen(fs_last_error_message()) > 0);
    expect(fs_config_load("/nonexistent/config.toml", &config),
           FS_STATUS_IO_ERROR, "missing config");
    expect(fs_config_load(config_path, &config), FS_STATUS_OK, "config");

    FsField *training = NULL;
    expect(fs_field_generate(config, "training", &training), FS_STATUS_OK,
           "generate training");
    FsField *bogus = NULL;
    expect(fs_field_generate(config, "nope", &bogus), FS_STATUS_INVALID_ARGUMENT,
           "unknown field");
    assert(bogus == NULL);

    FsFieldInfo info;
    expect(fs_field_info(training, &info), FS_STATUS_OK, "info");
    assert(info.width == 600 && info.height == 600);
    assert(info.vegetation_ratio > 0.0 && info.vegetation_ratio < 1.0);

    snprintf(path, sizeof path, "%s/training.pgm", scratch);
    expect(fs_field_save(training, path), FS_STATUS_OK, "save raster");
    FsField *reloaded = NULL;
    expect(fs_field_load(path, &reloaded), FS_STATUS_OK, "load raster");
    double miou = 0.0;
    expect(fs_field_miou(reloaded, training, &miou), FS_STATUS_OK, "self miou");
    assert(miou == 1.0);

    FsState *state = NULL;
    expect(fs_state_init(config, training, &state), FS_STATUS_OK, "init");
    double v_lo = 0.0, v_hi = 0.0;
    expect(fs_state_thresholds(state, &v_lo, &v_hi), FS_STATUS_OK, "thresholds");
    assert(0.0 < v_lo && v_lo < v_hi);

    FsDecision quiet;
    expect(fs_state_decide(state, 0.0, &quiet), FS_STATUS_OK, "decide low");
    assert(!quiet.descend && quiet.predicted_gain == 0.0 && isnan(quiet.target_gsd));
    FsDecision busy;
    expect(fs_state_decide(state, v_hi, &busy), FS_STATUS_OK, "decide high");

    snprintf(path, sizeof path, "%s/state.toml", scratch);
    expect(fs_state_save(state, path), FS_STATUS_OK, "save state");
    FsState *restored = NULL;
    expect(fs_state_load(path, &restored), FS_STATUS_OK, "load state");
    FsDecision again;
    expect(fs_state_decide(restored, v_hi, &again), FS_STATUS_OK, "decide reload");
    assert(again.descend == busy.descend);
    assert(again.target_gsd == busy.target_gsd ||
           (isnan(again.target_gsd) && isnan(busy.target_gsd)));
    assert(fabs(again.predicted_gain - busy.predicted_gain) <= 1e-9);

    FsField *testing = NULL;
    expect(fs_field_generate(config, "testing", &testing), FS_STATUS_OK,
           "generate testing");
    FsRunStats stats;
    snprintf(path, sizeof path, "%s/trace.jsonl", scratch);
    expect(fs_mission_run(config, testing, testing, state, "fixed:3.0", 1, path,
                          &stats),
           FS_STATUS_OK, "fixed mission");
    assert(stats.n_images > 0 && stats.n_descents == 0);
    assert(stats.total_time_s > 0.0);
    assert(stats.field_miou > 0.0 && stats.field_miou <= 1.0);

    FsRunStats adaptive;
    expect(fs_mission_run(config, testing, testing, state, "adaptive", 1, NULL,
                          &adaptive),
           FS_STATUS_OK, "adaptive mission");
    FsRunStats rerun;
    expect(fs_mission_run(config, testing, testing, state, "adaptive", 1, NULL,
                          &rerun),
           FS_STATUS_OK, "adaptive rerun");
    assert(adaptive.field_miou == rerun.field_miou);
    assert(adaptive.total_time_s == rerun.total_time_s);
    assert(adaptive.n_images == rerun.n_images);
    assert(adaptive.n_descents == rerun.n_descents);

    expect(fs_mission_run(config, testing, testing, NULL, "adaptive", 1, NULL,
                          &stats),
           FS_STATUS_INVALID_ARGUMENT, "stateless adaptive");
    expect(fs_mission_run(config, testing, testing, state, "warp", 1, NULL,
                          &stats),
           FS_STATUS_INVALID_ARGUMENT, "unknown strategy");

    fs_field_free(reloaded);
    fs_field_free(testing);
    fs_field_free(training);
    fs_field_free(NULL);
    fs_state_free(restored);
    fs_state_free(state);
    fs_state_free(NULL);
    fs_config_free(config);
    fs_config_free(NULL);
    puts("c smoke ok");
    return 0;
}
"#;

const CONFIG: &str = r#"
ladder = [0.03, 0.02, 0.01]

[camera]
sensor_width_mm = 6.17
focal_length_mm = 3.6
image_width_px = 100
image_height_px = 100

[oracle]
seed = 11

[[fields]]
name = "training"
[fields.spec]
extent_m = [6.0, 6.0]
base_resolution_m_per_px = 0.01
row_spacing_m = 0.8
crop_radius_m = 0.12
crop_jitter_m = 0.04
weed_cluster_count = 4
weed_cluster_radius_m = 0.6
weed_density = 0.9
seed = 5

[[fields]]
name = "testing"
[fields.spec]
extent_m = [6.0, 6.0]
base_resolution_m_per_px = 0.01
row_spacing_m = 0.8
crop_radius_m = 0.12
crop_jitter_m = 0.04
weed_cluster_count = 4
weed_cluster_radius_m = 0.6
weed_density = 0.9
seed = 6

[experiment]
seeds = [1]
"#;

/// The static library sits next to the test binary's profile directory,
/// either uplifted (libfieldscout_ffi.a) or as a hashed artifact in deps/.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().expect("test binary path");
    let deps = exe.parent().expect("deps dir");
    let profile = deps.parent().expect("profile dir");
    let uplifted = profile.join("libfieldscout_ffi.a");
    if uplifted.exists() {
        return uplifted;
    }
    let mut candidates: Vec<PathBuf> = std::fs::read_dir(deps)
        .expect("read deps dir")
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|path| {
            path.file_name()
                .and_then(|name| name.to_str())
                .is_some_and(|name| {
                    name.starts_with("libfieldscout_ffi") && name.ends_with(".a")
                })
        })
        .collect();
    candidates.sort_by_key(|path| {
        std::fs::metadata(path).and_then(|meta| meta.modified()).ok()
    });
    candidates.pop().expect("static library built alongside the tests")
}

#[test]
fn c_program_drives_the_full_pipeline() {
    let include_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include_dir.join("fieldscout.h").exists(), "header not generated");

    let dir = tempfile::tempdir().expect("tempdir");
    let source = dir.path().join("smoke.c");
    std::fs::write(&source, C_SOURCE).expect("write C source");
    let config = dir.path().join("config.toml");
    std::fs::write(&config, CONFIG).expect("write config");
    let binary = dir.path().join("smoke");

    let compile = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Wextra", "-Werror"])
        .arg(&source)
        .arg(static_lib())
        .arg("-I")
        .arg(&include_dir)
        .args(["-lm", "-lpthread", "-ldl"])
        .arg("-o")
        .arg(&binary)
        .output()
        .expect("cc available");
    assert!(
        compile.status.success(),
        "compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&binary)
        .arg(&config)
        .arg(dir.path())
        .output()
        .expect("smoke binary runs");
    assert!(
        run.status.success(),
        "smoke binary failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c smoke ok"));
}
