use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use plap_core::diagnostics::asymptotic_ratio_si;
use plap_core::io::{profile_csv, quotient_csv, solution_csv, traces_csv};
use plap_core::sobolev::DEFAULT_FIXED_RADIUS;
use plap_core::{
    asymptotic_ratio_sc, classify_completeness, concentration_sweep, construct, decay_envelope_check,
    energy_divergence_probe, functional_traces, integrate, lemma_limit_checks, make_model, verify_certificate,
    Completeness, CompletenessVerdict, GeometryProfile, ModelFunction, ModelKind, OscillatorConfig, Problem,
    RadialSolution, SolverConfig, Truncation,
};

use crate::args::*;
use crate::manifest::{self, Failure, Run, RunManifest};

type Outcome = Result<(), Failure>;

fn parse_model(descriptor: &str) -> Result<ModelFunction, Failure> {
    let kind: ModelKind = descriptor.parse()?;
    Ok(make_model(&kind)?)
}

fn descriptor(model: &ModelFunction) -> Value {
    serde_json::from_str(&model.descriptor_json()).expect("descriptor is json")
}

fn solver_config(rmax: f64, tol: &TolArgs) -> SolverConfig {
    SolverConfig {
        startup_radius: tol.startup_radius,
        ..SolverConfig::new(rmax).with_tol(tol.solver_tol)
    }
}

fn solve_problem(
    args: &ProblemArgs,
    rmax: f64,
    tol: &TolArgs,
    run: &mut Run,
) -> Result<(ModelFunction, RadialSolution), Failure> {
    let model = parse_model(&args.model)?;
    let prob = Problem::new(args.n, args.p, args.q, args.alpha)?;
    let cfg = solver_config(rmax, tol);
    run.resolve("model", descriptor(&model));
    run.resolve("problem", prob);
    run.resolve("solver", cfg);
    run.resolve("geometry_tol", tol.geometry_tol);
    let sol = integrate(&prob, &model, &cfg)?;
    run.note("termination", sol.meta.termination);
    run.note("r_end", sol.r_end());
    run.note("steps", sol.meta.steps);
    Ok((model, sol))
}

fn solve(a: &SolveArgs, run: &mut Run) -> Outcome {
    let (_, sol) = solve_problem(&a.problem, a.rmax, &a.tol, run)?;
    run.emit("solution.csv", solution_csv(&sol)?);
    let (u_end, _) = sol.state(sol.r_end())?;
    run.note("u_end", u_end);
    let mut evals = Vec::new();
    for &r in &a.at {
        let (u, du, w) = sol.evaluate(r)?;
        evals.push(json!({ "r": r, "u": u, "du": du, "w": w }));
    }
    run.note("at", evals);
    Ok(())
}

fn classify(a: &ClassifyArgs, run: &mut Run) -> Outcome {
    let model = parse_model(&a.model)?;
    run.resolve("model", descriptor(&model));
    run.resolve("n", a.n);
    run.resolve("p", a.p);
    run.resolve("horizon", a.rmax);
    run.resolve("geometry_tol", a.geometry_tol);
    let profile = GeometryProfile::build(&model, a.n, a.p, a.rmax, a.geometry_tol)?;
    let verdict = classify_completeness(&profile)?;
    run.note("verdict", verdict.verdict);
    run.note("regime", verdict.regime.to_string());
    run.emit_json("verdict.json", &verdict);
    // raw ψ overflows on fast exponential models; the verdict stands without the table
    match profile_csv(&profile) {
        Ok(text) => run.emit("profile.csv", text),
        Err(e) => run.note("profile_csv", e.to_string()),
    }
    Ok(())
}

/// Checks whose preconditions hold for this run; used when none are named.
fn applicable_checks(model: &ModelFunction, sol: &RadialSolution, verdict: &CompletenessVerdict) -> Vec<CheckName> {
    let mut out = vec![CheckName::Energy, CheckName::Pohozaev, CheckName::Envelope];
    match verdict.verdict {
        Completeness::PSC if verdict.regime.admits_sharp_asymptotics() => {
            out.extend([CheckName::RatioSc, CheckName::LemmaLimits]);
        }
        Completeness::PSI => out.push(CheckName::RatioSi),
        _ => {}
    }
    if verdict.verdict != Completeness::Inconclusive && !(model.is_euclidean() && sol.problem().is_critical()) {
        out.push(CheckName::EnergyDivergence);
    }
    out
}

fn diagnose(a: &DiagnoseArgs, run: &mut Run) -> Outcome {
    let (model, sol) = solve_problem(&a.problem, a.rmax, &a.tol, run)?;
    let horizon = sol.r_end();
    let profile = GeometryProfile::build(&model, a.problem.n, a.problem.p, horizon, a.tol.geometry_tol)?;
    let verdict = classify_completeness(&profile)?;
    run.note("verdict", verdict.verdict);
    run.note("regime", verdict.regime.to_string());
    let traces = functional_traces(&sol, &profile)?;
    run.emit("traces.csv", traces_csv(&traces)?);
    let selected = if a.checks.is_empty() {
        applicable_checks(&model, &sol, &verdict)
    } else {
        a.checks.clone()
    };
    run.resolve("checks", &selected);
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    for c in selected {
        let detail = match c {
            CheckName::Energy => {
                checks.push(traces.energy_check());
                json!({ "log_energy_end": traces.log_e.last() })
            }
            CheckName::Pohozaev => {
                for name in ["pohozaev-nonpositive", "pohozaev-nonincreasing", "pohozaev-identity"] {
                    checks.extend(traces.check(name).cloned());
                }
                json!(traces.fd)
            }
            CheckName::Envelope => {
                let e = decay_envelope_check(&sol, &profile)?;
                checks.push(e.check.clone());
                json!(e)
            }
            CheckName::RatioSc => {
                let l = asymptotic_ratio_sc(&sol, &profile, &verdict)?;
                checks.push(l.check.clone());
                json!(l)
            }
            CheckName::RatioSi => {
                let s = asymptotic_ratio_si(&sol, &profile, &verdict, None)?;
                checks.extend(s.checks.iter().cloned());
                json!(s)
            }
            CheckName::EnergyDivergence => {
                let e = energy_divergence_probe(&sol, &profile, &verdict)?;
                checks.push(e.check.clone());
                json!(e)
            }
            CheckName::LemmaLimits => {
                let l = lemma_limit_checks(&sol, &profile, &verdict)?;
                checks.push(l.log_ratio.check.clone());
                checks.push(l.flux_ratio.check.clone());
                json!(l)
            }
        };
        details.insert(c.as_str().into(), detail);
    }
    let passed = checks.iter().all(|c| c.passed);
    run.note("passed", passed);
    run.note(
        "checks",
        checks
            .iter()
            .map(|c| json!({ "name": c.name, "passed": c.passed, "margin": c.margin }))
            .collect::<Vec<_>>(),
    );
    run.emit_json(
        "report.json",
        &json!({ "verdict": verdict, "checks": checks, "details": details, "passed": passed }),
    );
    Ok(())
}

fn parse_truncation(a: &QuotientArgs, model: &ModelFunction) -> Result<Truncation, Failure> {
    match a.truncation.as_deref() {
        None if model.is_euclidean() => Ok(Truncation::Auto { tail_tol: a.tail_tol }),
        None => Ok(Truncation::Fixed(DEFAULT_FIXED_RADIUS)),
        Some("auto") => Ok(Truncation::Auto { tail_tol: a.tail_tol }),
        Some(s) => match s.parse::<f64>() {
            Ok(r) if r > 0.0 && r.is_finite() => Ok(Truncation::Fixed(r)),
            _ => Err(Failure::args(format!(
                "truncation must be auto or a positive radius, got {s:?}"
            ))),
        },
    }
}

fn quotient(a: &QuotientArgs, run: &mut Run) -> Outcome {
    let model = parse_model(&a.model)?;
    let truncation = parse_truncation(a, &model)?;
    let mut bs = a.b.clone();
    if bs.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Failure::args("every b must be a positive number"));
    }
    bs.sort_by(|x, y| y.total_cmp(x));
    bs.dedup();
    run.resolve("model", descriptor(&model));
    run.resolve("n", a.n);
    run.resolve("p", a.p);
    run.resolve("b", &bs);
    run.resolve("truncation", truncation);
    let sweep = concentration_sweep(&model, a.n, a.p, &bs, truncation)?;
    run.emit("quotients.csv", quotient_csv(&sweep.rows)?);
    run.note("reference", sweep.reference);
    run.note("reference_error", sweep.reference_error);
    run.note("gap_decreasing", sweep.gap_decreasing);
    run.note("flagged", &sweep.flagged);
    let min_gap = sweep
        .rows
        .iter()
        .map(|r| r.quotient - sweep.reference)
        .fold(f64::INFINITY, f64::min);
    run.note("min_gap", min_gap);
    Ok(())
}

fn oscillate(a: &OscillateArgs, run: &mut Run) -> Outcome {
    let cfg = OscillatorConfig {
        cap_factor: a.cap_factor,
        max_doublings: a.max_doublings,
        solver_tol: a.solver_tol,
        geometry_tol: a.geometry_tol,
        ..OscillatorConfig::default()
    };
    run.resolve("problem", Problem::new(a.n, a.p, a.q, a.alpha)?);
    run.resolve("stages", a.stages);
    run.resolve("config", &cfg);
    let c = construct(a.n, a.p, a.q, a.alpha, a.stages, &cfg)?;
    let verdict = verify_certificate(&c.certificate, &c.solution, &c.profile)?;
    run.emit_json("certificate.json", &c.certificate);
    run.emit_json("verification.json", &verdict);
    run.emit_json("model.json", &ModelKind::Glued(c.certificate.model.clone()));
    run.note("band_low", c.certificate.band_low);
    run.note("band_high", c.certificate.band_high);
    run.note(
        "triggers",
        c.certificate.stages.iter().map(|s| s.r_trigger).collect::<Vec<_>>(),
    );
    run.note("verified", verdict.passed);
    Ok(())
}

fn sweep(a: &SweepArgs, root: &Path, run: &mut Run) -> Outcome {
    if a.p.is_empty() || a.q.is_empty() || a.alpha.is_empty() {
        return Err(Failure::args("sweep needs at least one value of p, q and alpha"));
    }
    parse_model(&a.model)?;
    let mut jobs = Vec::new();
    for &p in &a.p {
        for &q in &a.q {
            for &alpha in &a.alpha {
                jobs.push(Command::Solve(SolveArgs {
                    problem: ProblemArgs {
                        model: a.model.clone(),
                        n: a.n,
                        p,
                        q,
                        alpha,
                    },
                    rmax: a.rmax,
                    tol: a.tol.clone(),
                    at: Vec::new(),
                }));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .map_err(|e| Failure::args(format!("worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| jobs.par_iter().map(|cmd| execute(cmd, root)).collect());
    run.resolve("jobs", jobs.len());
    let mut first_error = None;
    let mut rows = Vec::new();
    for r in results {
        let (m, _) = r?;
        if let (None, Some(e)) = (&first_error, &m.error) {
            first_error = Some(e.clone());
        }
        rows.push(json!({
            "run": m.run_id,
            "status": m.status,
            "problem": m.resolved.get("problem"),
            "u_end": m.summary.get("u_end"),
            "outputs": m.outputs,
        }));
        run.children.push(m.run_id);
    }
    // the index carries the children's hashes, so the sweep's own hash covers them
    run.emit_json("runs.json", &rows);
    match first_error {
        Some(e) => Err(Failure::new(
            &e.code,
            e.exit,
            format!("child run failed: {}", e.message),
        )),
        None => Ok(()),
    }
}

fn replay(a: &ReplayArgs, root: &Path, run: &mut Run) -> Outcome {
    let old = manifest::read_manifest(&a.manifest)?;
    if matches!(old.params, Command::Replay(_)) {
        return Err(Failure::args("cannot replay a replay"));
    }
    let (new, _) = execute(&old.params, root)?;
    let same = old.outputs == new.outputs && old.status == new.status;
    run.note("original", &old.run_id);
    run.note("reproduced", same);
    run.children.push(new.run_id);
    if same {
        Ok(())
    } else {
        Err(Failure::new(
            "NotReproduced",
            manifest::EXIT_SOLVER,
            "output hashes differ from the manifest",
        ))
    }
}

/// Run one command to completion, writing its outputs and manifest even
/// when it fails. The outer `Err` is reserved for I/O failures.
pub fn execute(cmd: &Command, root: &Path) -> Result<(RunManifest, std::path::PathBuf), Failure> {
    let t = Instant::now();
    let mut run = Run::default();
    let result = match cmd {
        Command::Solve(a) => solve(a, &mut run),
        Command::Classify(a) => classify(a, &mut run),
        Command::Diagnose(a) => diagnose(a, &mut run),
        Command::Quotient(a) => quotient(a, &mut run),
        Command::Oscillate(a) => oscillate(a, &mut run),
        Command::Sweep(a) => sweep(a, root, &mut run),
        Command::Replay(a) => replay(a, root, &mut run),
    };
    manifest::finish(root, cmd, run, &result, t.elapsed().as_secs_f64())
}
