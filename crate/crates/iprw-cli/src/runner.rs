//! Task orchestration: builds the worker pool, executes the scenario,
//! emits artifacts deterministically and writes the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use iprw_core::branching::{flt_path_sample, slln_trajectory, Centering, SimLimits};
use iprw_core::grid::{
    audit_convolution_lower, audit_lorden, audit_mean_lorden, centering_integral,
    convolution_powers, discretize_cdf, mean_function, renewal_function, shifted_renewal,
    variance_numeric, DriFunction, GridMeasure,
};
use iprw_core::seeds::replicate_rng;
use iprw_core::stats::{mc_mean, mc_variance};
use iprw_core::step_models::JointStepModel;
use iprw_core::verify::{
    verify_blackwell, verify_clt_flt, verify_elementary, verify_key_renewal, verify_rate,
    verify_slln, verify_support_lemmas, verify_variance, CenteringKind, TheoremReport, Verdict,
};

use crate::config::{ScenarioConfig, Task};
use crate::emit::{
    artifact_path, fmt_f64, grid_to_csv, paths_to_csv, rel_name, write_atomic, PLOT_SCRIPT,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("computation guard tripped: {0}")]
    Guard(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Guard(_) | RunError::Io { .. } => 3,
        }
    }
}

impl From<iprw_core::verify::VerifyError> for RunError {
    fn from(e: iprw_core::verify::VerifyError) -> Self {
        RunError::Guard(e.to_string())
    }
}

impl From<iprw_core::grid::GridError> for RunError {
    fn from(e: iprw_core::grid::GridError) -> Self {
        RunError::Guard(e.to_string())
    }
}

impl From<iprw_core::branching::SimError> for RunError {
    fn from(e: iprw_core::branching::SimError) -> Self {
        RunError::Guard(e.to_string())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub artifacts: Vec<String>,
    pub verdicts: BTreeMap<String, String>,
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub all_pass: bool,
}

/// Tracks written artifacts so a failed run leaves no partial outputs.
struct Sink {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), written: Vec::new() }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = artifact_path(&self.dir, name);
        write_atomic(&path, bytes).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        self.written.iter().map(|p| rel_name(&self.dir, p)).collect()
    }

    fn discard(self) {
        for p in self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(7 + 2 * digest.len());
    out.push_str("sha256:");
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// Execute a scenario. `seed`, `workers` and `out_dir` have already been
/// resolved from the config plus command-line overrides; `config_bytes`
/// are the raw input bytes (hashed into the manifest).
pub fn run(
    config: &ScenarioConfig,
    config_bytes: &[u8],
    seed: u64,
    workers: Option<usize>,
    out_dir: &Path,
) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| RunError::Guard(format!("worker pool: {e}")))?;

    let mut sink = Sink::new(out_dir);
    let result = pool.install(|| execute_task(config, seed, &mut sink));
    let verdicts = match result {
        Ok(v) => v,
        Err(e) => {
            sink.discard();
            return Err(e);
        }
    };

    let all_pass = verdicts
        .values()
        .all(|v| v == "pass" || v.starts_with("skipped"));
    let manifest = RunManifest {
        config_hash: sha256_hex(config_bytes),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts: sink.names(),
        verdicts,
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| RunError::Guard(e.to_string()))?;
    let path = artifact_path(out_dir, "manifest.json");
    write_atomic(&path, &manifest_bytes).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(RunOutcome { manifest, all_pass })
}

fn execute_task(
    config: &ScenarioConfig,
    seed: u64,
    sink: &mut Sink,
) -> Result<BTreeMap<String, String>, RunError> {
    match config.task {
        Task::Renewal => task_renewal(config, sink),
        Task::Simulate => task_simulate(config, seed, sink),
        Task::Variance => task_variance(config, seed, sink),
        Task::Slln => task_slln(config, seed, sink),
        Task::Clt => task_clt(config, seed, sink),
        Task::Flt => task_flt(config, seed, sink),
        Task::VerifyAll => task_verify_all(config, seed, sink, None),
    }
}

/// Run a single named verification from a `verify-all`-compatible config.
pub fn run_single_theorem(
    config: &ScenarioConfig,
    config_bytes: &[u8],
    theorem: &str,
    seed: u64,
    workers: Option<usize>,
    out_dir: &Path,
) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| RunError::Guard(format!("worker pool: {e}")))?;
    let mut sink = Sink::new(out_dir);
    let result = pool.install(|| task_verify_all(config, seed, &mut sink, Some(theorem)));
    let verdicts = match result {
        Ok(v) => v,
        Err(e) => {
            sink.discard();
            return Err(e);
        }
    };
    if verdicts.is_empty() {
        sink.discard();
        return Err(RunError::Config(format!("unknown theorem id: {theorem}")));
    }
    let all_pass = verdicts
        .values()
        .all(|v| v == "pass" || v.starts_with("skipped"));
    let manifest = RunManifest {
        config_hash: sha256_hex(config_bytes),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts: sink.names(),
        verdicts,
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| RunError::Guard(e.to_string()))?;
    let path = artifact_path(out_dir, "manifest.json");
    write_atomic(&path, &manifest_bytes).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(RunOutcome { manifest, all_pass })
}

fn grid_chain(
    model: &JointStepModel,
    h: f64,
    t_max: f64,
    j_max: u32,
) -> Result<(GridMeasure, Vec<GridMeasure>), RunError> {
    let f = discretize_cdf(model.xi_law(), h, t_max)?;
    let u = renewal_function(&f)?;
    let v = if model.is_equal_coupling() {
        shifted_renewal(&u)
    } else {
        let g = discretize_cdf(model.eta_law(), h, t_max)?;
        mean_function(&u, &g)?
    };
    let powers = convolution_powers(&v, j_max)?;
    Ok((u, powers))
}

fn task_renewal(
    config: &ScenarioConfig,
    sink: &mut Sink,
) -> Result<BTreeMap<String, String>, RunError> {
    let h = config.grid_step();
    let (u, v_powers) = grid_chain(&config.model, h, config.t, config.j_max)?;
    sink.write("U.csv", grid_to_csv(&u).as_bytes())?;
    sink.write(
        "U.json",
        serde_json::to_string_pretty(&u).unwrap().as_bytes(),
    )?;
    for (jm1, vj) in v_powers.iter().enumerate() {
        let name = if jm1 == 0 { "V".to_string() } else { format!("V{}", jm1 + 1) };
        sink.write(&format!("{name}.csv"), grid_to_csv(vj).as_bytes())?;
        sink.write(
            &format!("{name}.json"),
            serde_json::to_string_pretty(vj).unwrap().as_bytes(),
        )?;
    }

    // bound audits; violations are data, the verdict summarizes them
    let moments = config.model.moments();
    let budget = 2.0 * h;
    let mut audits = Vec::new();
    if moments.m2.is_finite() {
        audits.extend(audit_lorden(&u, &moments, budget)?);
    }
    let u_powers = convolution_powers(&u, config.j_max)?;
    for (jm1, uj) in u_powers.iter().enumerate() {
        audits.push(audit_convolution_lower(uj, jm1 as u32 + 1, moments.m, budget));
    }
    if moments.m2.is_finite() && moments.eta_mean.is_finite() {
        audits.extend(audit_mean_lorden(&v_powers[0], &moments, budget)?);
    }
    sink.write(
        "bounds.json",
        serde_json::to_string_pretty(&audits).unwrap().as_bytes(),
    )?;
    sink.write("plot.py", PLOT_SCRIPT.as_bytes())?;

    let mut verdicts = BTreeMap::new();
    verdicts.insert(
        "bounds".to_string(),
        if audits.iter().all(|a| a.pass) { "pass" } else { "fail" }.to_string(),
    );
    Ok(verdicts)
}

fn task_simulate(
    config: &ScenarioConfig,
    seed: u64,
    sink: &mut Sink,
) -> Result<BTreeMap<String, String>, RunError> {
    let limits = SimLimits::default();
    let model = &config.model;
    let t = config.t;
    let fractions = &config.u_points;
    use rayon::prelude::*;
    let counts: Result<Vec<Vec<Vec<u64>>>, iprw_core::branching::SimError> = (0..config
        .replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            Ok(iprw_core::branching::simulate_generations(
                model,
                t,
                config.j_max,
                fractions,
                &mut rng,
                &limits,
            )?
            .counts)
        })
        .collect();
    let counts = counts?;

    let rows = counts.iter().enumerate().flat_map(|(r, per_gen)| {
        per_gen.iter().enumerate().flat_map(move |(jm1, row)| {
            row.iter()
                .enumerate()
                .map(move |(i, &c)| (r, jm1 as u32 + 1, fractions[i], c as f64))
        })
    });
    sink.write(
        "paths.csv",
        paths_to_csv("replicate,j,u,count", rows).as_bytes(),
    )?;

    // summary: mean counts at the last fraction vs the grid means
    let h = config.grid_step();
    let (_, v_powers) = grid_chain(model, h, t, config.j_max)?;
    let last = fractions.len() - 1;
    let mut summary = Vec::new();
    let mut ok = true;
    for jm1 in 0..config.j_max as usize {
        let xs: Vec<f64> = counts.iter().map(|c| c[jm1][last] as f64).collect();
        let est = mc_mean(&xs);
        let grid = v_powers[jm1].eval(fractions[last] * t);
        let within = est.distance_in_se(grid) <= 4.0;
        ok &= within;
        summary.push(serde_json::json!({
            "j": jm1 + 1,
            "mc_mean": est.point,
            "mc_se": est.se,
            "grid_mean": grid,
            "within_4_se": within,
        }));
    }
    sink.write(
        "summary.json",
        serde_json::to_string_pretty(&summary).unwrap().as_bytes(),
    )?;
    sink.write("plot.py", PLOT_SCRIPT.as_bytes())?;

    let mut verdicts = BTreeMap::new();
    verdicts.insert(
        "mc-vs-grid".to_string(),
        if ok { "pass" } else { "fail" }.to_string(),
    );
    Ok(verdicts)
}

fn write_report(
    sink: &mut Sink,
    report: &TheoremReport,
) -> Result<(), RunError> {
    sink.write(
        &format!("report-{}.json", report.theorem),
        serde_json::to_string_pretty(report).unwrap().as_bytes(),
    )?;
    sink.write(
        &format!("report-{}.txt", report.theorem),
        report.to_text().as_bytes(),
    )
}

fn task_variance(
    config: &ScenarioConfig,
    seed: u64,
    sink: &mut Sink,
) -> Result<BTreeMap<String, String>, RunError> {
    let h = config.grid_step();
    let j = config.j_max;
    let report = verify_variance(
        &config.model,
        j,
        config.t,
        config.replicates,
        seed,
        h,
        1.0,
    )?;
    write_report(sink, &report)?;

    // plot data over the checkpoints inside the horizon: one tree set,
    // counted at every checkpoint
    let checkpoints: Vec<f64> = config
        .t_checkpoints
        .iter()
        .copied()
        .filter(|c| *c <= config.t)
        .collect();
    let checkpoints = if checkpoints.is_empty() {
        vec![config.t / 2.0, config.t]
    } else {
        checkpoints
    };
    let fractions: Vec<f64> = checkpoints.iter().map(|c| c / config.t).collect();
    use rayon::prelude::*;
    let limits = SimLimits::default();
    let counts: Result<Vec<Vec<u64>>, iprw_core::branching::SimError> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            Ok(iprw_core::branching::simulate_generations(
                &config.model,
                config.t,
                j,
                &fractions,
                &mut rng,
                &limits,
            )?
            .counts[(j - 1) as usize]
                .clone())
        })
        .collect();
    let counts = counts?;
    let curves = variance_numeric(&config.model, j, h, config.t)?;
    let constant = config
        .model
        .moments()
        .variance_constant(j)
        .map_err(|e| RunError::Guard(e.to_string()))?;
    let mut csv = String::from("t,mc_var,grid_var,theory\n");
    for (i, &c) in checkpoints.iter().enumerate() {
        let xs: Vec<f64> = counts.iter().map(|row| row[i] as f64).collect();
        let mc = mc_variance(&xs);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(c),
            fmt_f64(mc.point),
            fmt_f64(curves.d[(j - 1) as usize].eval(c)),
            fmt_f64(constant * c.powi(2 * j as i32 - 1)),
        ));
    }
    sink.write("variance.csv", csv.as_bytes())?;
    sink.write("plot.py", PLOT_SCRIPT.as_bytes())?;

    let mut verdicts = BTreeMap::new();
    verdicts.insert("variance".into(), verdict_str(report.verdict).into());
    Ok(verdicts)
}

fn task_slln(
    config: &ScenarioConfig,
    seed: u64,
    sink: &mut Sink,
) -> Result<BTreeMap<String, String>, RunError> {
    let report = verify_slln(
        &config.model,
        config.j_max,
        &config.t_checkpoints,
        config.slln_paths,
        seed,
        1.0,
    )?;
    write_report(sink, &report)?;

    // raw trajectories, same seeds as the report
    let limits = SimLimits::default();
    let mut csv = String::from("path,j,t,value\n");
    for p in 0..config.slln_paths {
        let mut rng = replicate_rng(seed, p as u64);
        let traj = slln_trajectory(
            &config.model,
            config.j_max,
            &config.t_checkpoints,
            &mut rng,
            &limits,
        )?;
        for (jm1, row) in traj.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                csv.push_str(&format!(
                    "{p},{},{},{}\n",
                    jm1 + 1,
                    fmt_f64(config.t_checkpoints[i]),
                    fmt_f64(*v)
                ));
            }
        }
    }
    sink.write("trajectories.csv", csv.as_bytes())?;
    sink.write("plot.py", PLOT_SCRIPT.as_bytes())?;

    let mut verdicts = BTreeMap::new();
    verdicts.insert("slln".into(), verdict_str(report.verdict).into());
    Ok(verdicts)
}

fn clt_report(config: &ScenarioConfig, seed: u64) -> Result<TheoremReport, RunError> {
    Ok(verify_clt_flt(
        &config.model,
        config.j_max,
        config.t,
        &config.u_points,
        config.replicates,
        seed,
        config.grid_step(),
        config.centering,
        1.0,
    )?)
}

fn task_clt(
    config: &ScenarioConfig,
    seed: u64,
    sink: &mut Sink,
) -> Result<BTreeMap<String, String>, RunError> {
    let report = clt_report(config, seed)?;
    write_report(sink, &report)?;
    let set = sample_paths(config, seed, &[1.0])?;
    let mut rows = Vec::new();
    for (r, per_gen) in set.values.iter().enumerate() {
        for (jm1, gen) in per_gen.iter().enumerate() {
            rows.push((r, jm1 as u32 + 1, 1.0, gen[0]));
        }
    }
    sink.write(
        "marginals.csv",
        paths_to_csv("replicate,j,u,value", rows.into_iter()).as_bytes(),
    )?;
    sink.write("plot.py", PLOT_SCRIPT.as_bytes())?;
    let mut verdicts = BTreeMap::new();
    verdicts.insert("clt".into(), verdict_str(report.verdict).into());
    Ok(verdicts)
}

fn sample_paths(
    config: &ScenarioConfig,
    seed: u64,
    fractions: &[f64],
) -> Result<iprw_core::branching::FltPathSet, RunError> {
    let model = &config.model;
    let h = config.grid_step();
    let moments = model.moments();
    let limits = SimLimits::default();
    match config.centering {
        CenteringKind::Polynomial => Ok(flt_path_sample(
            model,
            config.t,
            config.j_max,
            fractions,
            config.replicates,
            seed,
            Centering::Polynomial,
            &limits,
        )?),
        CenteringKind::GridMeans => {
            let (_, powers) = grid_chain(model, h, config.t, config.j_max)?;
            Ok(flt_path_sample(
                model,
                config.t,
                config.j_max,
                fractions,
                config.replicates,
                seed,
                Centering::GridMeans(&powers),
                &limits,
            )?)
        }
        CenteringKind::Integral => {
            let g = discretize_cdf(model.eta_law(), h, config.t)?;
            let grids = (1..=config.j_max)
                .map(|j| centering_integral(&g, j, moments.m))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(flt_path_sample(
                model,
                config.t,
                config.j_max,
                fractions,
                config.replicates,
                seed,
                Centering::Integral(&grids),
                &limits,
            )?)
        }
    }
}

fn task_flt(
    config: &ScenarioConfig,
    seed: u64,
    sink: &mut Sink,
) -> Result<BTreeMap<String, String>, RunError> {
    let report = clt_report(config, seed)?;
    write_report(sink, &report)?;
    let set = sample_paths(config, seed, &config.u_points)?;
    let mut rows = Vec::new();
    for (r, per_gen) in set.values.iter().enumerate() {
        for (jm1, gen) in per_gen.iter().enumerate() {
            for (i, &u) in config.u_points.iter().enumerate() {
                rows.push((r, jm1 as u32 + 1, u, gen[i]));
            }
        }
    }
    sink.write(
        "paths.csv",
        paths_to_csv("replicate,j,u,value", rows.into_iter()).as_bytes(),
    )?;
    sink.write("plot.py", PLOT_SCRIPT.as_bytes())?;
    let mut verdicts = BTreeMap::new();
    verdicts.insert("flt".into(), verdict_str(report.verdict).into());
    Ok(verdicts)
}

/// The full battery. `only` restricts to a single theorem id.
fn task_verify_all(
    config: &ScenarioConfig,
    seed: u64,
    sink: &mut Sink,
    only: Option<&str>,
) -> Result<BTreeMap<String, String>, RunError> {
    let model = &config.model;
    let moments = model.moments();
    let h = config.grid_step();
    let j = config.j_max;
    let mut verdicts = BTreeMap::new();
    let mut summary = String::new();
    let wants = |name: &str| only.is_none_or(|o| o == name);

    let record = |sink: &mut Sink,
                      verdicts: &mut BTreeMap<String, String>,
                      summary: &mut String,
                      report: TheoremReport|
     -> Result<(), RunError> {
        verdicts.insert(report.theorem.clone(), verdict_str(report.verdict).into());
        summary.push_str(&report.to_text());
        summary.push('\n');
        write_report(sink, &report)
    };

    if wants("elementary") {
        let report = verify_elementary(model, j, &config.t_checkpoints, h, 1.0)?;
        record(sink, &mut verdicts, &mut summary, report)?;
    }

    if wants("rate") {
        if moments.is_nonlattice() && moments.m2.is_finite() && moments.eta_mean.is_finite() {
            let report = verify_rate(model, j, &config.t_checkpoints, h, 1.0)?;
            record(sink, &mut verdicts, &mut summary, report)?;
        } else {
            verdicts.insert(
                "rate".into(),
                "skipped (needs nonlattice xi, finite E xi^2 and E eta)".into(),
            );
        }
    }

    if wants("blackwell") {
        if moments.is_nonlattice() {
            let report =
                verify_blackwell(model, j, config.h0, &config.t_checkpoints, h, 1.0)?;
            record(sink, &mut verdicts, &mut summary, report)?;
        } else {
            verdicts.insert("blackwell".into(), "skipped (lattice xi)".into());
        }
    }

    if wants("key-renewal") {
        if moments.is_nonlattice() {
            let f = DriFunction::ExpDecay { rate: 1.0 };
            let report =
                verify_key_renewal(model, j, &f, &config.t_checkpoints, h, 1.0)?;
            record(sink, &mut verdicts, &mut summary, report)?;
        } else {
            verdicts.insert("key-renewal".into(), "skipped (lattice xi)".into());
        }
    }

    if wants("variance") {
        if model.is_equal_coupling() && moments.is_nonlattice() && moments.s2 > 0.0 {
            let report =
                verify_variance(model, j, config.t, config.replicates, seed, h, 1.0)?;
            record(sink, &mut verdicts, &mut summary, report)?;
        } else {
            verdicts.insert(
                "variance".into(),
                "skipped (needs equal coupling, nonlattice xi, positive variance)".into(),
            );
        }
    }

    if wants("slln") {
        let report = verify_slln(
            model,
            j,
            &config.t_checkpoints,
            config.slln_paths,
            seed,
            1.0,
        )?;
        record(sink, &mut verdicts, &mut summary, report)?;
    }

    if wants("clt") {
        if moments.is_nonlattice() && moments.s2 > 0.0 && moments.s2.is_finite() {
            let report = clt_report(config, seed)?;
            record(sink, &mut verdicts, &mut summary, report)?;
        } else {
            verdicts.insert(
                "clt-flt".into(),
                "skipped (needs nonlattice xi and Var xi in (0, inf))".into(),
            );
        }
    }

    if wants("support") {
        let report = verify_support_lemmas(
            model,
            &config.t_checkpoints,
            h,
            config.replicates,
            seed,
            1.0,
        )?;
        record(sink, &mut verdicts, &mut summary, report)?;
    }

    if !summary.is_empty() {
        sink.write("summary.txt", summary.as_bytes())?;
    }
    Ok(verdicts)
}
