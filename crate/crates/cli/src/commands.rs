//! One function per subcommand.

use std::time::Instant;

use brwre::env::{check_regular_growth, EnvironmentField};
use brwre::kernels::{gaussian_moment, return_probability, return_probability_monte_carlo};
use brwre::oracle::{quenched_mean, two_walk_series_with_radius, verify_zeta_identity, DEFAULT_DP_CELL_CAP, DEFAULT_DP_RADIUS};
use brwre::prf::{derive_seed, domain};
use brwre::rational;
use brwre::sim::{
    run_ensemble, run_ensemble_until_alive, run_trajectory, EnsembleResult, KeyedParticles, RunStatus, Trajectory,
};
use brwre::stats::StatRecord;
use brwre::MultiIndex;
use serde_json::{json, Value};

use crate::config::{ConfigFile, Resolved};
use crate::output::{json as to_json, num, Artifacts, ManifestBody, Table};
use crate::{CliError, CltArgs, Command, ConditionArgs, EnsembleArgs, OracleCommand, PiArgs, RunArgs, VerifyCommand, ZetaArgs};

pub fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Ensemble(a) => ensemble(&a),
        Command::Oracle(OracleCommand::SecondMoment(a)) => second_moment(&a),
        Command::Oracle(OracleCommand::QuenchedMean(a)) => quenched(&a),
        Command::CheckCondition(a) => check_condition(&a),
        Command::PiD(a) => pi_d(&a),
        Command::Verify(VerifyCommand::Ze(a)) => verify_ze(&a),
        Command::CltMoments(a) => clt_moments(&a),
    }
}

fn config_value(r: &Resolved) -> Result<Value, CliError> {
    serde_json::to_value(r).map_err(|e| CliError::io(format!("serializing config: {e}")))
}

fn elapsed(timing: bool, start: Instant) -> Option<f64> {
    timing.then(|| start.elapsed().as_secs_f64())
}

/// Column names of a trajectory CSV.
pub fn trajectory_header(r: &Resolved) -> Vec<String> {
    let mut h: Vec<String> = ["t", "N_t", "Nbar_t", "rho_star", "R_t"].iter().map(|s| s.to_string()).collect();
    h.extend(r.y.iter().map(|n| format!("Y_{}", n.tag())));
    h.extend(r.moments.iter().map(|n| format!("M_{}", n.tag())));
    if r.cos.is_some() {
        h.push("cos".into());
    }
    h.push("status".into());
    h
}

fn trajectory_row(r: &Resolved, rec: &StatRecord) -> Vec<String> {
    let mut row = vec![rec.t.to_string(), rec.n_t.to_string(), num(rec.nbar), num(rec.rho_star), num(rec.r_t)];
    row.extend(r.y.iter().map(|n| num(rec.y_stats[n])));
    row.extend(r.moments.iter().map(|n| num(rec.moments[n])));
    if let Some(c) = rec.cos {
        row.push(num(c));
    }
    row.push(rec.status.as_str().to_string());
    row
}

pub fn trajectory_csv(r: &Resolved, traj: &Trajectory) -> String {
    let mut table = Table::new(&trajectory_header(r));
    for rec in &traj.records {
        table.row(&trajectory_row(r, rec));
    }
    table.render()
}

fn status_value(status: &RunStatus) -> Value {
    match status {
        RunStatus::Survived => json!({"status": "survived"}),
        RunStatus::Extinct { t } => json!({"status": "extinct", "extinct_t": t}),
    }
}

fn simulate(a: &RunArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let r = Resolved::from_file(a.merged(ConfigFile::default(), None)?)?;
    let traj = run_trajectory(&r.run_config()?)?;
    let mut out = Artifacts::new(r.out_dir());
    out.write("trajectory.csv", &trajectory_csv(&r, &traj))?;
    let mut statuses = status_value(&traj.status);
    statuses["final_total"] = Value::String(traj.final_total.to_string());
    let path = out.finish(ManifestBody {
        command: "simulate".into(),
        config: config_value(&r)?,
        seeds: json!({"env_seed": r.env_seed, "particle_seed": r.particle_seed}),
        approx_sampling: traj.approx_sampling,
        statuses: statuses.clone(),
        wall_clock_seconds: elapsed(a.timing, start),
    })?;
    statuses["manifest"] = Value::String(path.display().to_string());
    to_json(&statuses)
}

fn ensemble_statuses(res: &EnsembleResult) -> Value {
    let survived = res.replicas.iter().filter(|o| o.survived()).count();
    let extinct = res.replicas.iter().filter(|o| matches!(o.status, Ok(RunStatus::Extinct { .. }))).count();
    json!({"survived": survived, "extinct": extinct, "failed": res.summary.failed})
}

fn fail_on_aborts(res: &EnsembleResult) -> Result<(), CliError> {
    match res.summary.failed.first() {
        None => Ok(()),
        Some((i, msg)) => Err(CliError::io(format!("{} replicas aborted; replica {i}: {msg}", res.summary.failed.len()))),
    }
}

pub fn summary_csv(res: &EnsembleResult) -> String {
    let mut header = vec!["t".to_string(), "survival".into(), "alive".into()];
    for name in &res.names {
        for part in ["mean", "se", "median", "alive_mean", "alive_se", "alive_median"] {
            header.push(format!("{name}_{part}"));
        }
    }
    let mut table = Table::new(&header);
    let s = &res.summary;
    for (k, t) in s.times.iter().enumerate() {
        let mut row = vec![t.to_string(), num(s.survival[k]), s.alive[k].to_string()];
        for name in &res.names {
            let x = &s.series[name];
            for v in [x.mean[k], x.se[k], x.median[k], x.alive_mean[k], x.alive_se[k], x.alive_median[k]] {
                row.push(num(v));
            }
        }
        table.row(&row);
    }
    table.render()
}

pub fn replicas_csv(res: &EnsembleResult) -> String {
    let mut header = vec!["replica".to_string(), "env_seed".into(), "particle_seed".into(), "t".into(), "alive".into()];
    header.extend(res.names.iter().cloned());
    let mut table = Table::new(&header);
    for o in &res.replicas {
        for (k, t) in res.summary.times.iter().enumerate() {
            if o.values.is_empty() {
                continue;
            }
            let mut row = vec![
                o.index.to_string(),
                o.env_seed.to_string(),
                o.particle_seed.to_string(),
                t.to_string(),
                (o.alive[k] as u8).to_string(),
            ];
            row.extend(o.values[k].iter().map(|&v| num(v)));
            table.row(&row);
        }
    }
    table.render()
}

fn ensemble(a: &EnsembleArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let r = Resolved::from_file(a.run.merged(ConfigFile::default(), a.replicas)?)?;
    let res = run_ensemble(&r.run_config()?, r.replicas)?;
    let mut out = Artifacts::new(r.out_dir());
    out.write("summary.json", &to_json(&res.summary)?)?;
    out.write("summary.csv", &summary_csv(&res))?;
    if a.per_replica {
        out.write("replicas.csv", &replicas_csv(&res))?;
    }
    let statuses = ensemble_statuses(&res);
    out.finish(ManifestBody {
        command: "ensemble".into(),
        config: config_value(&r)?,
        seeds: json!({"env_seed": r.env_seed, "particle_seed": r.particle_seed, "replicas": r.replicas}),
        approx_sampling: res.summary.approx_sampling,
        statuses: statuses.clone(),
        wall_clock_seconds: elapsed(a.run.timing, start),
    })?;
    fail_on_aborts(&res)?;
    to_json(&statuses)
}

fn clt_moments(a: &CltArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let mut merged = a.run.merged(ConfigFile::default(), a.replicas)?;
    let d = merged.dimension.unwrap_or(crate::config::DEFAULT_DIMENSION);
    if merged.moments.is_none() {
        merged.moments = Some([2, 4, 1].iter().map(|&k| MultiIndex::axis(d, 0, k)).collect());
    }
    let horizon = merged.horizon.unwrap_or(crate::config::DEFAULT_HORIZON);
    merged.record_times = Some(vec![horizon.max(0) as u64]);
    let r = Resolved::from_file(merged)?;
    let cfg = r.run_config()?;
    let res = if a.min_survivors > 0 {
        run_ensemble_until_alive(&cfg, a.batch, a.min_survivors, r.replicas)?
    } else {
        run_ensemble(&cfg, r.replicas)?
    };
    let s = &res.summary;
    let mut moments = Vec::new();
    for n in &r.moments {
        let x = &s.series[&format!("C_{}", n.tag())];
        let limit = gaussian_moment(n, r.dimension);
        let (lnum, lden) = rational::parts(&limit);
        moments.push(json!({
            "index": n,
            "limit": rational::to_f64(&limit),
            "limit_exact": format!("{lnum}/{lden}"),
            "alive_mean": x.alive_mean[0],
            "alive_se": x.alive_se[0],
            "alive_median": x.alive_median[0],
            "mean": x.mean[0],
            "se": x.se[0],
        }));
    }
    let report = json!({
        "t": horizon,
        "replicas": res.replicas.len(),
        "survivors": s.alive[0],
        "survival": s.survival[0],
        "approx_sampling": s.approx_sampling,
        "moments": moments,
    });
    let text = to_json(&report)?;
    let mut out = Artifacts::new(r.out_dir());
    out.write("clt_moments.json", &text)?;
    out.finish(ManifestBody {
        command: "clt-moments".into(),
        config: config_value(&r)?,
        seeds: json!({"env_seed": r.env_seed, "particle_seed": r.particle_seed, "replicas": res.replicas.len()}),
        approx_sampling: s.approx_sampling,
        statuses: ensemble_statuses(&res),
        wall_clock_seconds: elapsed(a.run.timing, start),
    })?;
    fail_on_aborts(&res)?;
    Ok(text)
}

/// Writes `name` plus a manifest when `--out` is given; returns the text.
fn emit_table(
    a: &RunArgs,
    r: &Resolved,
    command: &str,
    name: &str,
    text: String,
    statuses: Value,
    start: Instant,
) -> Result<String, CliError> {
    if r.out_dir.is_some() {
        let mut out = Artifacts::new(r.out_dir());
        out.write(name, &text)?;
        out.finish(ManifestBody {
            command: command.into(),
            config: config_value(r)?,
            seeds: json!({"env_seed": r.env_seed}),
            approx_sampling: false,
            statuses,
            wall_clock_seconds: elapsed(a.timing, start),
        })?;
    }
    Ok(text)
}

fn second_moment(a: &RunArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let r = Resolved::from_file(a.merged(ConfigFile::default(), None)?)?;
    let horizon = r.horizon as usize;
    let radius = r.dp_radius.unwrap_or((2 * horizon).min(DEFAULT_DP_RADIUS));
    let s = two_walk_series_with_radius(&r.model, r.dimension, horizon, radius, DEFAULT_DP_CELL_CAP)?;
    let mut table = Table::new(&["t", "u", "second_moment", "overlap"]);
    for t in 0..=horizon {
        table.row(&[t.to_string(), num(s.u[t]), num(s.second_moment[t]), num(s.overlap[t])]);
    }
    let statuses = json!({"radius": s.radius, "truncated_mass": s.truncated_mass, "alpha": s.alpha, "c": s.c, "m": s.m});
    emit_table(a, &r, "oracle second-moment", "second_moment.csv", table.render(), statuses, start)
}

fn quenched(a: &RunArgs) -> Result<String, CliError> {
    let start = Instant::now();
    let r = Resolved::from_file(a.merged(ConfigFile::default(), None)?)?;
    let field = EnvironmentField::new(r.model.clone(), r.env_seed, r.dimension);
    let q = quenched_mean(&field, r.dimension, r.horizon as usize);
    let mut header = vec!["t".to_string()];
    header.extend((1..=r.dimension).map(|i| format!("x{i}")));
    header.push("mean".into());
    let mut table = Table::new(&header);
    for (t, map) in q.maps.iter().enumerate() {
        for (x, &w) in map {
            let mut row = vec![t.to_string()];
            row.extend(x.coords(r.dimension).iter().map(|c| c.to_string()));
            row.push(num(w));
            table.row(&row);
        }
    }
    let statuses = json!({"z": q.z});
    emit_table(a, &r, "oracle quenched-mean", "quenched_mean.csv", table.render(), statuses, start)
}

fn check_condition(a: &ConditionArgs) -> Result<String, CliError> {
    let r = Resolved::from_file(a.run.merged(ConfigFile::default(), None)?)?;
    let pi = return_probability(r.dimension, a.budget)?;
    let report = check_regular_growth(&r.model, r.dimension, pi.value);
    let mut v = serde_json::to_value(&report).map_err(|e| CliError::io(e.to_string()))?;
    v["dimension"] = json!(r.dimension);
    v["env"] = json!(r.env);
    v["pi_half_width"] = json!(pi.half_width);
    to_json(&v)
}

fn pi_d(a: &PiArgs) -> Result<String, CliError> {
    let est = match a.method.as_str() {
        "truncated-green" | "green" => return_probability(a.dim, a.budget)?,
        "monte-carlo" => return_probability_monte_carlo(a.dim, a.walks, a.budget, a.seed)?,
        other => return Err(CliError::config(format!("unknown method {other:?}, expected truncated-green or monte-carlo"))),
    };
    to_json(&est)
}

fn verify_ze(a: &ZetaArgs) -> Result<String, CliError> {
    let defaults = ConfigFile { horizon: Some(3), ..Default::default() };
    let r = Resolved::from_file(a.run.merged(defaults, None)?)?;
    let mut max_error = 0.0f64;
    let mut aggregated = 0.0f64;
    let mut failed = Vec::new();
    for i in 0..a.seeds {
        let field = EnvironmentField::new(r.model.clone(), derive_seed(r.env_seed, domain::REPLICA_ENV, i), r.dimension);
        let particles = KeyedParticles::new(derive_seed(r.particle_seed, domain::REPLICA_PARTICLE, i));
        let report = verify_zeta_identity(&field, &particles, r.dimension, r.horizon as usize)?;
        if report.max_error.is_nan() || report.max_error >= a.tolerance {
            failed.push(i);
        }
        max_error = max_error.max(report.max_error);
        aggregated = aggregated.max(report.aggregated_max_error);
    }
    to_json(&json!({
        "max_error": max_error,
        "aggregated_max_error": aggregated,
        "seeds": a.seeds,
        "seeds_failed": failed,
        "tolerance": a.tolerance,
        "dimension": r.dimension,
        "horizon": r.horizon,
        "env": r.env,
    }))
}
