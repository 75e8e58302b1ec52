//! The four subcommands. All outputs land under the resolved output
//! directory and are pure functions of the config bytes and seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::field::{generate_field, read_raster, write_raster, LabelGrid, RasterEncoding};
use crate::planner::{self, DecisionState};
use crate::sim::{self, per_rung_stats, CompareRow, Strategy};

use super::config::ExperimentConfig;
use super::CliError;

pub fn raster_path(out: &Path, name: &str) -> PathBuf {
    out.join(format!("{name}.pgm"))
}

pub fn state_path(out: &Path) -> PathBuf {
    out.join("decision_state.toml")
}

pub fn trace_path(out: &Path, label: &str, seed: u64) -> PathBuf {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    out.join(format!("trace_{safe}_{seed}.jsonl"))
}

fn ensure_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))
}

fn load_field(path: &Path) -> Result<LabelGrid, CliError> {
    read_raster(path)
        .map_err(|e| CliError::Data(format!("cannot read field raster {}: {e}", path.display())))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Rasterizes every configured field. Rerunning produces identical bytes.
pub fn cmd_generate(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if config.fields.is_empty() {
        eprintln!("warning: no field specs configured; nothing to generate");
        return Ok(());
    }
    ensure_out(out)?;
    for entry in &config.fields {
        let grid = generate_field(&entry.spec)
            .map_err(|e| CliError::Data(format!("field {:?}: {e}", entry.name)))?;
        let path = raster_path(out, &entry.name);
        write_raster(&grid, &path, RasterEncoding::Binary)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Trains the decision state on the training-field raster and writes it.
pub fn cmd_init(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    ensure_out(out)?;
    let name = &config.experiment.training_field;
    config.field_spec(name)?;
    let raster = raster_path(out, name);
    if !raster.exists() {
        return Err(CliError::Data(format!(
            "training raster {} not found; run `fieldscout generate` first",
            raster.display()
        )));
    }
    let gt = load_field(&raster)?;
    let state = planner::initialize(
        &gt,
        &config.camera,
        &config.ladder,
        &config.oracle,
        &config.decision.init_params(),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    let state = config
        .decision
        .apply_overrides(state)
        .map_err(|e| CliError::Data(format!("decision overrides: {e}")))?;

    let path = state_path(out);
    state.save(&path).map_err(|e| CliError::Data(e.to_string()))?;

    let data = state.data();
    println!("|O| = {}", data.set_o.len());
    println!("|I| = {}", data.set_i.len());
    let h = &data.gp_o_hyper;
    println!(
        "gp_O: length_scale={} signal_variance={} noise_variance={}",
        h.length_scale, h.signal_variance, h.noise_variance
    );
    let h = &data.gp_i_hyper;
    println!(
        "gp_I: length_scale={} signal_variance={} noise_variance={}",
        h.length_scale, h.signal_variance, h.noise_variance
    );
    println!("v_lo = {} v_hi = {}", data.v_lo, data.v_hi);
    println!("proxy_alpha = {}", data.proxy_alpha);
    println!("wrote {}", path.display());
    Ok(())
}

/// Flies one mission, writes its trace, prints the headline stats.
pub fn cmd_run(
    config: &ExperimentConfig,
    out: &Path,
    strategy: &str,
    field: &Path,
    state: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let strategy: Strategy =
        strategy.parse().map_err(|e: sim::SimError| CliError::Usage(e.to_string()))?;
    ensure_out(out)?;
    let grid = load_field(field)?;
    let state = match state {
        Some(path) => Some(
            DecisionState::load(path)
                .map_err(|e| CliError::Data(format!("state {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let seed = seed.unwrap_or(config.experiment.seeds[0]);
    let trace = sim::run_mission(
        &grid,
        Some(&grid),
        &config.camera,
        &config.ladder,
        &config.oracle,
        &config.time,
        &strategy,
        state.as_ref(),
        seed,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    let path = trace_path(out, &trace.strategy, seed);
    write_out(&path, trace.to_jsonl().as_bytes())?;

    let stats = trace.field_stats.as_ref().expect("ground truth was supplied");
    println!(
        "{} {} {} {}",
        stats.miou,
        trace.total_time_s,
        trace.n_images(),
        trace.n_descents()
    );
    Ok(())
}

/// Runs the full strategy x seed matrix over the test field and writes the
/// comparison, scatter, and per-image CSV tables.
pub fn cmd_compare(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    ensure_out(out)?;
    let name = &config.experiment.test_field;
    config.field_spec(name)?;
    let raster = raster_path(out, name);
    if !raster.exists() {
        return Err(CliError::Data(format!(
            "test raster {} not found; run `fieldscout generate` first",
            raster.display()
        )));
    }
    let field = load_field(&raster)?;
    let strategies = config.strategies();
    let state = if strategies.iter().any(|s| !matches!(s, Strategy::Fixed { .. })) {
        let path = state_path(out);
        if !path.exists() {
            return Err(CliError::Data(format!(
                "decision state {} not found; run `fieldscout init` first",
                path.display()
            )));
        }
        Some(
            DecisionState::load(&path)
                .map_err(|e| CliError::Data(format!("state {}: {e}", path.display())))?,
        )
    } else {
        None
    };

    let rows = sim::compare_strategies(
        &field,
        &field,
        &config.camera,
        &config.ladder,
        &config.oracle,
        &config.time,
        &strategies,
        state.as_ref(),
        &config.experiment.seeds,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    write_out(&out.join("compare.csv"), compare_csv(&rows).as_bytes())?;
    write_out(&out.join("scatter.csv"), scatter_csv(&rows, &strategies).as_bytes())?;
    write_out(
        &out.join("per_image.csv"),
        per_image_csv(&rows, &strategies, config).as_bytes(),
    )?;

    for strategy in &strategies {
        let label = strategy.label();
        let (miou, time) = strategy_means(&rows, &label);
        println!("{label} mean_field_miou={miou} mean_total_time_s={time}");
    }
    println!("wrote {}", out.join("compare.csv").display());
    println!("wrote {}", out.join("scatter.csv").display());
    println!("wrote {}", out.join("per_image.csv").display());
    Ok(())
}

fn strategy_rows<'a>(rows: &'a [CompareRow], label: &str) -> Vec<&'a CompareRow> {
    rows.iter().filter(|r| r.strategy == label).collect()
}

fn strategy_means(rows: &[CompareRow], label: &str) -> (f64, f64) {
    let mine = strategy_rows(rows, label);
    let n = mine.len() as f64;
    let miou = mine.iter().map(|r| r.field_miou).sum::<f64>() / n;
    let time = mine.iter().map(|r| r.total_time_s).sum::<f64>() / n;
    (miou, time)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row per (strategy, seed), in run order.
pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("strategy,seed,field_miou,total_time_s,n_images,n_descents\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.strategy, r.seed, r.field_miou, r.total_time_s, r.n_images, r.n_descents
        )
        .expect("string write");
    }
    out
}

/// Accuracy-vs-time scatter data: one row per strategy, aggregated over
/// seeds (population standard deviation).
pub fn scatter_csv(rows: &[CompareRow], strategies: &[Strategy]) -> String {
    let mut out = String::from(
        "strategy,mean_total_time_s,std_total_time_s,mean_field_miou,std_field_miou,n_seeds\n",
    );
    for strategy in strategies {
        let label = strategy.label();
        let mine = strategy_rows(rows, &label);
        let (t_mean, t_std) =
            mean_std(&mine.iter().map(|r| r.total_time_s).collect::<Vec<_>>());
        let (m_mean, m_std) =
            mean_std(&mine.iter().map(|r| r.field_miou).collect::<Vec<_>>());
        writeln!(out, "{label},{t_mean},{t_std},{m_mean},{m_std},{}", mine.len())
            .expect("string write");
    }
    out
}

/// Per-image mIoU grouped by GSD rung: one row per (strategy, rung) that
/// produced at least one image, coarse to fine.
pub fn per_image_csv(
    rows: &[CompareRow],
    strategies: &[Strategy],
    config: &ExperimentConfig,
) -> String {
    let mut out = String::from("strategy,rung_gsd_m_per_px,mean_miou,std_miou,n\n");
    for strategy in strategies {
        let label = strategy.label();
        let pooled: Vec<(f64, f64)> = strategy_rows(rows, &label)
            .iter()
            .flat_map(|r| r.per_image.iter().copied())
            .collect();
        for stat in per_rung_stats(&config.ladder, &pooled) {
            writeln!(
                out,
                "{label},{},{},{},{}",
                stat.gsd, stat.mean_miou, stat.std_miou, stat.n
            )
            .expect("string write");
        }
    }
    out
}
