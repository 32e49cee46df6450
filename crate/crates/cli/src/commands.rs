use std::fmt::Write as _;

use serde_json::{json, Value};

use ltv_es_core::delays::{integrate_input_delay, DelayKind, PredictorRun, MAX_DELAY_STEPS};
use ltv_es_core::scenario::{DelaySpec, Scenario, Signal};
use ltv_es_core::simulate::{
    integrate_closed_loop, integrate_measurement_delay, Bound, Envelope, SimConfig, Trajectory,
};
use ltv_es_core::tables::{
    reproduce_table_with, DelayedReading, Table, TableId, TABLE_TOLERANCE,
};

use crate::analysis::{analyse, analyse_delay, Analysis, DelayAnalysis, InputAnalysis};
use crate::args::{DelayKindArg, ReadingArg, RunArgs, ScenarioArgs};
use crate::document::{load_builtin, load_file, LoadError};
use crate::output::{computed, num, tag, trajectory_csv, Artifact, Provenance};

/// Process exit status; a function of the report content only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Infeasible,
    Schema,
    BlowUp,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Infeasible => 1,
            Status::Schema => 2,
            Status::BlowUp => 3,
        }
    }

    fn worst(self, other: Status) -> Status {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Core(#[from] ltv_es_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn status(&self) -> Status {
        use ltv_es_core::Error as E;
        match self {
            CliError::Load(LoadError::Model(e)) | CliError::Core(e) => match e {
                E::PeFails { .. }
                | E::Infeasible { .. }
                | E::CertificateRejected { .. }
                | E::EmptyBracket { .. } => Status::Infeasible,
                E::NonFinite(_) => Status::BlowUp,
                _ => Status::Schema,
            },
            CliError::Load(_) | CliError::Usage(_) | CliError::Io(_) => Status::Schema,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub artifact: Artifact,
}

/// Loads the scenario and applies command-line overrides.
pub fn resolve_scenario(args: &ScenarioArgs) -> CliResult<Scenario> {
    let mut s = match (&args.builtin, &args.scenario) {
        (Some(name), None) => load_builtin(name)?,
        (None, Some(path)) => load_file(path)?,
        (None, None) => {
            return Err(CliError::Usage(
                "one of --builtin or --scenario is required".into(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--builtin and --scenario are mutually exclusive".into(),
            ))
        }
    };
    if let Some(eps) = args.epsilon {
        s.es.epsilon = eps;
    }
    if let Some(sigma0) = args.sigma0 {
        s.es.sigma0 = sigma0;
    }
    if let Some((a, b)) = args.weights {
        s.es.weight_a = a;
        s.es.weight_b = b;
    }
    let kind = args.delay_kind.map(|k| match k {
        DelayKindArg::Measurement => DelayKind::Measurement,
        DelayKindArg::Input => DelayKind::Input,
    });
    match (kind, args.tau, s.delay) {
        (Some(kind), Some(tau), _) => s.delay = Some(DelaySpec { kind, tau }),
        (Some(kind), None, Some(d)) => s.delay = Some(DelaySpec { kind, tau: d.tau }),
        (None, Some(tau), Some(d)) => s.delay = Some(DelaySpec { kind: d.kind, tau }),
        (Some(_), None, None) => return Err(CliError::Usage("--delay-kind needs --tau".into())),
        (None, Some(_), None) => return Err(CliError::Usage("--tau needs --delay-kind".into())),
        (None, None, _) => {}
    }
    s.validate()?;
    Ok(s)
}

fn scenario_summary(s: &Scenario) -> Value {
    computed(&json!({
        "n": s.model.n,
        "epsilon": s.es.epsilon,
        "sigma0": s.es.sigma0,
        "a": s.es.weight_a,
        "b": s.es.weight_b,
        "delay": s.delay,
    }))
}

fn condition_lines(out: &mut String, a: &Analysis) {
    let c = &a.constants.conditions;
    for (name, cond) in [
        ("dither rate", c.dither_rate),
        ("decay", c.decay),
        ("discriminant", c.discriminant),
        ("initial state", c.initial_state),
    ] {
        let mark = if cond.holds { "ok" } else { "FAILS" };
        let _ = writeln!(out, "  {name:<14} {mark:<6} slack {:.6e}", cond.slack);
    }
}

fn analysis_text(out: &mut String, a: &Analysis) {
    let c = &a.certificate;
    let _ = writeln!(
        out,
        "certificate ({:?}): q = {:.6e}, p_lo = {:.6e}, p_hi = {:.6e}, pdot_bar = {:.6e}",
        c.source, c.q, c.p_lo, c.p_hi, c.pdot_bar
    );
    let _ = writeln!(
        out,
        "  sampled Lyapunov inequality: max eigenvalue {:.6e} over {} points ({})",
        c.verification.max_lmi_eig,
        c.verification.grid,
        if c.accepted { "accepted" } else { "REJECTED" }
    );
    if let Some(note) = &c.note {
        let _ = writeln!(out, "  note: {note}");
    }
    let r = &a.constants;
    let _ = writeln!(
        out,
        "constants: c1 = {:.6e}, c2 = {:.6e}, c3 = {:.6e}, c4 = {:.6e}, lambda = {:.9}",
        r.c1, r.c2, r.c3, r.c4, r.lambda
    );
    let _ = writeln!(out, "conditions:");
    condition_lines(out, a);
    match a.ultimate_bound {
        Some(b) => {
            let _ = writeln!(out, "ultimate bound B_* = {b:.6e}");
        }
        None => {
            let _ = writeln!(out, "ultimate bound: not certified");
        }
    }
}

fn delay_text(out: &mut String, d: &DelayAnalysis) {
    match d {
        DelayAnalysis::Measurement(m) => {
            let _ = writeln!(
                out,
                "measurement delay tau <= {:.6e}: phase error bound {:.6e} (gain {:.6e} per unit delay)",
                m.tau, m.delta_bar_added, m.budget.gain
            );
            let _ = writeln!(out, "with the delay included:");
            condition_lines(out, &m.delayed);
            if let Some(b) = m.delayed.ultimate_bound {
                let _ = writeln!(out, "ultimate bound with delay B_* = {b:.6e}");
            }
        }
        DelayAnalysis::Input(i) => {
            let _ = writeln!(out, "input delay tau = {:.6e}", i.tau);
            if let Some(p) = &i.predictor {
                let _ = writeln!(
                    out,
                    "  conditioning L_* = {:.6e}, predictor excitation margin {:.6e} ({})",
                    p.conditioning.l_star,
                    p.margin,
                    if p.feasible { "ok" } else { "FAILS" }
                );
            }
            let _ = writeln!(out, "predictor-state loop:");
            analysis_text(out, &i.zeta);
            if let Some(b) = &i.bound {
                let _ = writeln!(
                    out,
                    "bound on |zeta| {:.6e}, transfer term {:.6e}, bound on |x| {:.6e}",
                    b.zeta_bound, b.transfer_bound, b.x_bound
                );
            }
        }
    }
}

fn summary_csv(rows: &[(&str, f64)]) -> String {
    let mut out = String::from("quantity,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{}", num(*v));
    }
    out
}

fn analysis_rows(a: &Analysis) -> Vec<(&'static str, f64)> {
    let r = &a.constants;
    let c = &r.conditions;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    vec![
        ("epsilon", r.epsilon),
        ("q", r.q),
        ("p_lo", r.p_lo),
        ("p_hi", r.p_hi),
        ("c1", r.c1),
        ("c2", r.c2),
        ("c3", r.c3),
        ("c4", r.c4),
        ("lambda", r.lambda),
        ("xi_s", r.xi_s.unwrap_or(f64::NAN)),
        ("xi_l", r.xi_l.unwrap_or(f64::NAN)),
        ("r0", r.r0.unwrap_or(f64::NAN)),
        ("dither_rate_slack", c.dither_rate.slack),
        ("decay_slack", c.decay.slack),
        ("discriminant_slack", c.discriminant.slack),
        ("initial_state_slack", c.initial_state.slack),
        ("max_lmi_eig", a.certificate.verification.max_lmi_eig),
        ("feasible", flag(a.feasible)),
        ("ultimate_bound", a.ultimate_bound.unwrap_or(f64::NAN)),
    ]
}

fn feasibility_status(feasible: bool) -> Status {
    if feasible {
        Status::Ok
    } else {
        Status::Infeasible
    }
}

pub fn check(args: &ScenarioArgs) -> CliResult<Outcome> {
    let s = resolve_scenario(args)?;
    let a = analyse(&s)?;
    let delay = match s.delay {
        Some(d) => Some(analyse_delay(&s, &a, d.kind, d.tau)?),
        None => None,
    };
    let feasible = a.feasible && delay.as_ref().is_none_or(|d| d.feasible());
    let mut text = String::new();
    analysis_text(&mut text, &a);
    if let Some(d) = &delay {
        delay_text(&mut text, d);
    }
    let _ = writeln!(text, "feasible: {feasible}");
    let json = json!({
        "command": "check",
        "scenario": scenario_summary(&s),
        "analysis": computed(&a),
        "delay": delay.as_ref().map(computed),
        "feasible": feasible,
    });
    Ok(Outcome {
        status: feasibility_status(feasible),
        artifact: Artifact {
            json,
            text,
            csv: summary_csv(&analysis_rows(&a)),
        },
    })
}

pub fn bound(args: &ScenarioArgs, horizon: Option<f64>, points: usize) -> CliResult<Outcome> {
    let s = resolve_scenario(args)?;
    let a = analyse(&s)?;
    let Some(env) = a.envelope else {
        let mut text = String::new();
        analysis_text(&mut text, &a);
        return Ok(Outcome {
            status: Status::Infeasible,
            artifact: Artifact {
                json: json!({"command": "bound", "analysis": computed(&a), "feasible": false}),
                text,
                csv: summary_csv(&analysis_rows(&a)),
            },
        });
    };
    let r = &a.constants;
    let r0 = r.r0.unwrap_or(1.0);
    let horizon = horizon.unwrap_or(5.0 / r0);
    if !(horizon.is_finite() && horizon > 0.0) || points < 2 {
        return Err(CliError::Usage(
            "--horizon must be positive and --points at least 2".into(),
        ));
    }
    let mut samples = Vec::with_capacity(points);
    let mut csv = String::from("t,envelope,envelope_simplified\n");
    let mut text = String::new();
    let b_star = a.ultimate_bound.unwrap_or(f64::NAN);
    let _ = writeln!(
        text,
        "ultimate bound B_* = {b_star:.6e}; rate r0 = {r0:.6e}; xi0 = {:.6e} in ({:.6e}, {:.6e})",
        env.xi0, env.xi0_lo, env.xi0_hi
    );
    let _ = writeln!(text, "{:>14} {:>14} {:>14}", "t", "envelope", "simplified");
    for i in 0..points {
        let t = horizon * i as f64 / (points - 1) as f64;
        let exact = r.envelope(&env, t)?;
        let simple = r.envelope_simplified(&env, t)?;
        samples.push(json!({"t": t, "envelope": exact, "envelope_simplified": simple}));
        let _ = writeln!(csv, "{},{},{}", num(t), num(exact), num(simple));
        let _ = writeln!(text, "{t:>14.6e} {exact:>14.6e} {simple:>14.6e}");
    }
    let json = json!({
        "command": "bound",
        "scenario": scenario_summary(&s),
        "ultimate_bound": computed(&b_star),
        "r0": computed(&r0),
        "xi0": computed(&env),
        "samples": tag(Value::Array(samples), Provenance::Computed),
        "feasible": true,
    });
    Ok(Outcome {
        status: Status::Ok,
        artifact: Artifact { json, text, csv },
    })
}

fn default_x0(s: &Scenario) -> Vec<f64> {
    let n = s.model.n;
    let scale = s.es.sigma0 / (n as f64).sqrt();
    (0..n)
        .map(|i| if i % 2 == 0 { scale } else { -scale })
        .collect()
}

fn sim_config(s: &Scenario, run: &RunArgs) -> SimConfig {
    let mut cfg = SimConfig::new(run.horizon);
    if let Some(spd) = run.steps_per_dither {
        cfg.steps_per_dither = spd;
    }
    let _ = s;
    cfg
}

fn initial_state(s: &Scenario, run: &RunArgs) -> CliResult<Vec<f64>> {
    let x0 = run.x0.clone().unwrap_or_else(|| default_x0(s));
    if x0.len() != s.model.n {
        return Err(CliError::Usage(format!(
            "--x0 has {} entries, the state has {}",
            x0.len(),
            s.model.n
        )));
    }
    Ok(x0)
}

fn trajectory_summary(traj: &Trajectory) -> Value {
    let last = traj.len().saturating_sub(1);
    let worst = traj
        .violations
        .iter()
        .map(|v| v.norm - v.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    json!({
        "steps": traj.steps,
        "dt": traj.dt,
        "samples": traj.len(),
        "blew_up": traj.blew_up,
        "violations": traj.violations.len(),
        "first_violation": traj.violations.first(),
        "worst_excess": worst.is_finite().then_some(worst),
        "final_state": traj.final_state(),
        "final_norm": (!traj.is_empty()).then(|| traj.norm(last)),
        "max_norm": traj.max_norm_after(0.0),
    })
}

fn run_status(feasible: bool, trajs: &[&Trajectory]) -> Status {
    if trajs.iter().any(|t| t.blew_up) {
        Status::BlowUp
    } else if !feasible || trajs.iter().any(|t| !t.violations.is_empty()) {
        Status::Infeasible
    } else {
        Status::Ok
    }
}

fn trajectory_text(out: &mut String, label: &str, traj: &Trajectory) {
    let _ = writeln!(
        out,
        "{label}: {} steps of {:.3e} s, {} retained samples, {} envelope violations{}",
        traj.steps,
        traj.dt,
        traj.len(),
        traj.violations.len(),
        if traj.blew_up { ", BLEW UP" } else { "" }
    );
    if let Some(v) = traj.violations.first() {
        let _ = writeln!(
            out,
            "  first violation at t = {:.6e}: |x| = {:.6e} > {:.6e}",
            v.t, v.norm, v.bound
        );
    }
    if !traj.is_empty() {
        let _ = writeln!(
            out,
            "  final norm {:.6e}",
            traj.norm(traj.len() - 1)
        );
    }
}

fn predictor_run(
    s: &Scenario,
    input: &InputAnalysis,
    run: &RunArgs,
) -> CliResult<Result<PredictorRun, String>> {
    let cfg = sim_config(s, run);
    let dt = cfg.dt(s.es.epsilon);
    if !s.model.a.is_constant() {
        return Ok(Err("predictor simulation needs constant A".into()));
    }
    if input.tau / dt > MAX_DELAY_STEPS as f64 {
        return Ok(Err(format!(
            "delay spans {:.3e} steps, more than the {MAX_DELAY_STEPS} the simulator keeps",
            input.tau / dt
        )));
    }
    let x0 = initial_state(s, run)?;
    let envelope = match (&input.zeta.envelope, input.feasible) {
        (Some(env), true) => Some(Envelope::new(&input.zeta.constants, env)?),
        _ => None,
    };
    let bound = envelope.as_ref().map(|e| e as &dyn Bound);
    Ok(Ok(integrate_input_delay(&s.model, &s.es, input.tau, &x0, &cfg, bound)?))
}

fn predictor_outcome(
    s: &Scenario,
    base: &Analysis,
    input: &InputAnalysis,
    run: &RunArgs,
    command: &str,
) -> CliResult<Outcome> {
    let mut text = String::new();
    delay_text(&mut text, &DelayAnalysis::Input(input.clone()));
    let sim = predictor_run(s, input, run)?;
    let (status, csv, sim_json) = match &sim {
        Ok(r) => {
            trajectory_text(&mut text, "plant state x", &r.x);
            trajectory_text(&mut text, "predictor state zeta", &r.zeta);
            let _ = writeln!(
                text,
                "identity residual {:.3e}, dynamics residual {:.3e}",
                r.identity_residual, r.dynamics_residual
            );
            let sim = json!({
                "tau_simulated": r.tau,
                "delay_steps": r.delay_steps,
                "x": trajectory_summary(&r.x),
                "zeta": trajectory_summary(&r.zeta),
                "identity_residual": r.identity_residual,
                "dynamics_residual": r.dynamics_residual,
            });
            (
                run_status(input.feasible, &[&r.x, &r.zeta]),
                trajectory_csv(&r.x, Some(&r.zeta)),
                sim,
            )
        }
        Err(why) => {
            let _ = writeln!(text, "simulation skipped: {why}");
            (
                feasibility_status(input.feasible),
                summary_csv(&analysis_rows(&input.zeta)),
                json!({"skipped": why}),
            )
        }
    };
    let json = json!({
        "command": command,
        "scenario": scenario_summary(s),
        "undelayed": computed(base),
        "delay": computed(&DelayAnalysis::Input(input.clone())),
        "simulation": tag(sim_json, Provenance::Computed),
        "feasible": input.feasible,
    });
    Ok(Outcome {
        status,
        artifact: Artifact { json, text, csv },
    })
}

pub fn simulate(args: &ScenarioArgs, run: &RunArgs) -> CliResult<Outcome> {
    let s = resolve_scenario(args)?;
    let a = analyse(&s)?;
    let cfg = sim_config(&s, run);
    let x0 = initial_state(&s, run)?;
    match s.delay {
        Some(DelaySpec {
            kind: DelayKind::Input,
            tau,
        }) => {
            let input = crate::analysis::analyse_input_delay(&s, tau)?;
            predictor_outcome(&s, &a, &input, run, "simulate")
        }
        delay => {
            // A measurement delay is checked against the envelope that includes its
            // phase-error budget.
            let (certified, tau, delay_json) = match delay {
                Some(d) if a.feasible => {
                    let m = crate::analysis::analyse_measurement_delay(&s, &a, d.tau)?;
                    (m.delayed.clone(), Some(d.tau), Some(computed(&m)))
                }
                Some(d) => (a.clone(), Some(d.tau), None),
                None => (a.clone(), None, None),
            };
            let envelope = match (&certified.envelope, certified.feasible) {
                (Some(env), true) => Some(Envelope::new(&certified.constants, env)?),
                _ => None,
            };
            let bound = envelope.as_ref().map(|e| e as &dyn Bound);
            let traj = match tau {
                Some(t) => integrate_measurement_delay(
                    &s.model,
                    &s.noise,
                    &s.es,
                    &Signal::Constant { value: t },
                    &x0,
                    &cfg,
                    bound,
                )?,
                None => integrate_closed_loop(&s.model, &s.noise, &s.es, &x0, &cfg, bound)?,
            };
            let mut text = String::new();
            if !certified.feasible {
                let _ = writeln!(text, "scenario is not certified; no envelope is checked");
            }
            trajectory_text(&mut text, "state x", &traj);
            if let Some(b) = certified.ultimate_bound {
                let _ = writeln!(text, "ultimate bound B_* = {b:.6e}");
            }
            let json = json!({
                "command": "simulate",
                "scenario": scenario_summary(&s),
                "feasible": certified.feasible,
                "ultimate_bound": computed(&certified.ultimate_bound),
                "measurement_delay": delay_json,
                "trajectory": tag(trajectory_summary(&traj), Provenance::Computed),
            });
            Ok(Outcome {
                status: run_status(certified.feasible, &[&traj]),
                artifact: Artifact {
                    json,
                    text,
                    csv: trajectory_csv(&traj, None),
                },
            })
        }
    }
}

pub fn delay(args: &ScenarioArgs, run: &RunArgs) -> CliResult<Outcome> {
    let s = resolve_scenario(args)?;
    let Some(d) = s.delay else {
        return Err(CliError::Usage(
            "no delay: give --delay-kind and --tau or a \"delay\" entry in the scenario".into(),
        ));
    };
    let a = analyse(&s)?;
    match d.kind {
        DelayKind::Input => {
            let input = crate::analysis::analyse_input_delay(&s, d.tau)?;
            predictor_outcome(&s, &a, &input, run, "delay")
        }
        DelayKind::Measurement => {
            if !a.feasible {
                let mut text = String::new();
                analysis_text(&mut text, &a);
                let _ = writeln!(text, "the undelayed scenario is not feasible; no delay budget");
                return Ok(Outcome {
                    status: Status::Infeasible,
                    artifact: Artifact {
                        json: json!({"command": "delay", "undelayed": computed(&a), "feasible": false}),
                        text,
                        csv: summary_csv(&analysis_rows(&a)),
                    },
                });
            }
            let analysis = analyse_delay(&s, &a, d.kind, d.tau)?;
            let DelayAnalysis::Measurement(m) = &analysis else {
                unreachable!("measurement kind yields a measurement analysis")
            };
            let mut text = String::new();
            delay_text(&mut text, &analysis);
            let mut rows = vec![
                ("tau", m.tau),
                ("gain", m.budget.gain),
                ("delta_bar_added", m.delta_bar_added),
            ];
            rows.extend(analysis_rows(&m.delayed));
            let feasible = analysis.feasible();
            let json = json!({
                "command": "delay",
                "scenario": scenario_summary(&s),
                "undelayed": computed(&a),
                "delay": computed(&analysis),
                "feasible": feasible,
            });
            Ok(Outcome {
                status: feasibility_status(feasible),
                artifact: Artifact {
                    json,
                    text,
                    csv: summary_csv(&rows),
                },
            })
        }
    }
}

fn table_json(t: &Table) -> Value {
    let rows: Vec<Value> = t
        .rows
        .iter()
        .map(|r| {
            let mut row = computed(&json!({
                "epsilon": r.epsilon,
                "tau": r.tau,
                "computed": r.computed,
                "rel_error": r.rel_error,
                "feasible": r.feasible,
                "pass": r.passes(TABLE_TOLERANCE),
                "note": r.note,
                "report": r.report,
            }));
            row["expected"] = tag(json!(r.expected), Provenance::PaperExpected);
            row
        })
        .collect();
    json!({
        "id": t.id.name(),
        "title": t.title,
        "optional": t.optional,
        "pass": t.passes(TABLE_TOLERANCE),
        "tolerance": tag(json!(TABLE_TOLERANCE), Provenance::Computed),
        "rows": rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

pub fn tables(ids: &[String], reading: ReadingArg) -> CliResult<Outcome> {
    let ids: Vec<TableId> = if ids.is_empty() {
        TableId::ALL.to_vec()
    } else {
        ids.iter()
            .map(|name| {
                TableId::parse(name).ok_or_else(|| {
                    let known: Vec<&str> = TableId::ALL.iter().map(|t| t.name()).collect();
                    CliError::Usage(format!("unknown table {name:?}; known: {}", known.join(", ")))
                })
            })
            .collect::<CliResult<_>>()?
    };
    let reading = match reading {
        ReadingArg::Hybrid => DelayedReading::Hybrid,
        ReadingArg::Transformed => DelayedReading::Transformed,
    };
    let mut status = Status::Ok;
    let mut text = String::new();
    let mut csv =
        String::from("table,epsilon,tau,expected,computed,rel_error,pass,feasible,note\n");
    let mut json_tables = Vec::new();
    for id in ids {
        let t = reproduce_table_with(id, reading)?;
        if !t.optional && !t.passes(TABLE_TOLERANCE) {
            status = status.worst(Status::Infeasible);
        }
        let _ = writeln!(
            text,
            "{} ({}){}",
            t.id.name(),
            t.title,
            if t.optional { " [optional]" } else { "" }
        );
        let _ = writeln!(
            text,
            "  {:>8} {:>6} {:>14} {:>14} {:>9} {:>5} {:>9}",
            "epsilon", "tau", "expected", "computed", "rel err", "pass", "feasible"
        );
        for r in &t.rows {
            let tau = r.tau.map_or_else(|| "-".into(), |v| format!("{v}"));
            let rel = r
                .rel_error
                .map_or_else(|| "-".into(), |v| format!("{:+.3}%", 100.0 * v));
            let _ = writeln!(
                text,
                "  {:>8.0e} {:>6} {:>14.6e} {:>14} {:>9} {:>5} {:>9}",
                r.epsilon,
                tau,
                r.expected,
                opt(r.computed),
                rel,
                if r.passes(TABLE_TOLERANCE) { "yes" } else { "NO" },
                r.feasible
            );
            if let Some(note) = &r.note {
                let _ = writeln!(text, "    note: {note}");
            }
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},\"{}\"",
                t.id.name(),
                num(r.epsilon),
                r.tau.map_or_else(String::new, num),
                num(r.expected),
                r.computed.map_or_else(String::new, num),
                r.rel_error.map_or_else(String::new, num),
                r.passes(TABLE_TOLERANCE),
                r.feasible,
                r.note.as_deref().unwrap_or("").replace('"', "'")
            );
        }
        json_tables.push(table_json(&t));
    }
    let json = json!({
        "command": "tables",
        "tables": json_tables,
        "pass": status == Status::Ok,
    });
    Ok(Outcome {
        status,
        artifact: Artifact { json, text, csv },
    })
}
