use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use skillchain::dsl::{serialize_canonical, SkillProgram, SkillType};
use skillchain::kb::{explain as explain_query, parse_atom, synthesize_program, Explanation, KnowledgeBase, ProofTree};
use skillchain::lifecycle::{
    collect_episodes, detect_drift, run_operation, train_library, Event, LifecycleConfig, LifecycleError,
};
use skillchain::optim::{optimize as optimize_program, LossSpec, OptimConfig};
use skillchain::sim::{execute_program, monte_carlo_eval, write_steps_jsonl, read_steps_jsonl, SkillStep, WorldConfig};
use skillchain::surrogate::{build_surrogate_program, load_library, save_library, TrainConfig};

use crate::error::CliError;
use crate::manifest::{write_report, Recorder, RunManifest};
use crate::{
    CollectArgs, EvaluateArgs, ExecArgs, ExplainArgs, LifecycleArgs, OptimizeArgs, SynthArgs, TrainArgs,
};

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_program(rec: &mut Recorder, path: &Path) -> Result<SkillProgram, CliError> {
    rec.read_input("program", path)?.parse().map_err(CliError::domain)
}

fn read_world(rec: &mut Recorder, path: &Path) -> Result<WorldConfig, CliError> {
    let text = rec.read_input("world", path)?;
    let w: WorldConfig = serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    w.validate().map_err(CliError::domain)?;
    Ok(w)
}

fn read_loss(rec: &mut Recorder, path: Option<&Path>) -> Result<LossSpec, CliError> {
    let spec = match path {
        None => LossSpec::default(),
        Some(p) => {
            let text = rec.read_input("loss", p)?;
            serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?
        }
    };
    spec.validate().map_err(CliError::domain)?;
    rec.flag("loss_spec", &spec);
    Ok(spec)
}

fn write_steps(path: &Path, steps: impl IntoIterator<Item = SkillStep>) -> Result<usize, CliError> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let steps: Vec<SkillStep> = steps.into_iter().collect();
    write_steps_jsonl(BufWriter::new(f), &steps).map_err(|e| CliError::io(path, e))?;
    Ok(steps.len())
}

fn finish<T: Serialize>(rec: Recorder, report: Option<&Path>, result: &T) -> Result<RunManifest, CliError> {
    let manifest = rec.finish();
    if let Some(path) = report {
        write_report(path, &manifest, result)?;
    }
    Ok(manifest)
}

fn records_per_type(steps: &[SkillStep]) -> BTreeMap<SkillType, usize> {
    let mut out = BTreeMap::new();
    for s in steps {
        *out.entry(s.skill_type).or_insert(0) += 1;
    }
    out
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("synth", None);
    let kb: KnowledgeBase = rec.read_input("kb", &a.kb)?.parse().map_err(CliError::domain)?;
    rec.flag("task", &a.task);
    rec.flag("out", a.out.display().to_string());
    rec.flag("explain", a.explain);
    let (program, trace) = synthesize_program(&kb, &a.task).map_err(CliError::domain)?;
    write_text(&a.out, &serialize_canonical(&program))?;
    let result = json!({
        "program": program.name(),
        "structure_hash": format!("{:016x}", program.structure_hash()),
        "skills": program.skills().iter().map(|s| s.label()).collect::<Vec<_>>(),
        "trace": if a.explain { Some(&trace) } else { None },
    });
    if a.explain && a.report.is_none() {
        println!("{}", serde_json::to_string_pretty(&trace).expect("trace serializes"));
    }
    finish(rec, a.report.as_deref(), &result)?;
    eprintln!("synthesized {} ({} skills) -> {}", program.name(), program.len(), a.out.display());
    Ok(())
}

pub fn exec(a: ExecArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("exec", Some(a.seed));
    let program = read_program(&mut rec, &a.program)?;
    let world = read_world(&mut rec, &a.world)?;
    rec.flag("episodes", a.episodes);
    let traces: Vec<_> = (0..a.episodes).map(|e| execute_program(&program, &world, a.seed, e)).collect();
    let successes = traces.iter().filter(|t| t.success).count();
    if let Some(out) = &a.out {
        rec.flag("out", out.display().to_string());
        write_steps(out, traces.iter().flat_map(|t| t.steps.clone()))?;
    }
    let result = json!({
        "success_rate": successes as f64 / a.episodes.max(1) as f64,
        "episodes": traces,
    });
    finish(rec, a.report.as_deref(), &result)?;
    eprintln!("{} episodes, {successes} successful", a.episodes);
    Ok(())
}

pub fn collect(a: CollectArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("collect", Some(a.seed));
    let program = read_program(&mut rec, &a.program)?;
    let world = read_world(&mut rec, &a.world)?;
    rec.flag("episodes", a.episodes);
    rec.flag("randomize_params", a.randomize_params);
    rec.flag("out", a.out.display().to_string());
    let traces = collect_episodes(&program, &world, a.episodes, a.seed, a.randomize_params).map_err(CliError::domain)?;
    let successes = traces.iter().filter(|t| t.success).count();
    let steps: Vec<SkillStep> = traces.into_iter().flat_map(|t| t.steps).collect();
    let per_type = records_per_type(&steps);
    let n = write_steps(&a.out, steps)?;
    let result = json!({
        "episodes": a.episodes,
        "success_rate": successes as f64 / a.episodes.max(1) as f64,
        "records": n,
        "records_per_skill_type": per_type,
    });
    finish(rec, a.report.as_deref(), &result)?;
    eprintln!("{n} records from {} episodes -> {}", a.episodes, a.out.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("train", Some(a.seed));
    let text = rec.read_input("data", &a.data)?;
    let steps = read_steps_jsonl(text.as_bytes()).map_err(|e| CliError::io(&a.data, e))?;
    rec.flag("epochs", a.epochs);
    rec.flag("out", a.out.display().to_string());
    let cfg = TrainConfig::new(a.epochs, a.seed);
    let (library, reports) = train_library(&steps, &cfg).map_err(CliError::domain)?;
    save_library(&library, &a.out).map_err(CliError::domain)?;
    let result = json!({ "config": cfg, "models": reports });
    finish(rec, a.report.as_deref(), &result)?;
    for r in &reports {
        eprintln!(
            "{}: {} records, holdout duration R² {:.3}, Brier {:.3}",
            r.skill_type, r.train_records, r.holdout.duration_r2, r.holdout.brier
        );
    }
    Ok(())
}

pub fn optimize(a: OptimizeArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("optimize", Some(a.seed));
    let program = read_program(&mut rec, &a.program)?;
    rec.record_dir("models", &a.models)?;
    let library = load_library(&a.models).map_err(CliError::domain)?;
    let spec = read_loss(&mut rec, a.loss.as_deref())?;
    rec.flag("restarts", a.restarts);
    rec.flag("iterations", a.iterations);
    rec.flag("out", a.out.display().to_string());
    let sp = build_surrogate_program(&program, &library).map_err(CliError::domain)?;
    let cfg = OptimConfig { restarts: a.restarts, iterations: a.iterations, ..OptimConfig::new(a.seed) };
    let (optimized, report) = optimize_program(&sp, &program, &spec, &cfg).map_err(CliError::domain)?;
    write_text(&a.out, &serialize_canonical(&optimized))?;
    finish(rec, a.report.as_deref(), &report)?;
    eprintln!(
        "surrogate loss {:.4} -> {:.4} (restart {}) -> {}",
        report.loss_before,
        report.loss_after,
        report.chosen_restart,
        a.out.display()
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    if a.episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let mut rec = Recorder::new("evaluate", Some(a.seed));
    let program = read_program(&mut rec, &a.program)?;
    let world = read_world(&mut rec, &a.world)?;
    let spec = read_loss(&mut rec, a.loss.as_deref())?;
    rec.flag("episodes", a.episodes);
    let report = monte_carlo_eval(&program, &world, a.episodes, a.seed, &spec);
    finish(rec, a.report.as_deref(), &report)?;
    eprintln!(
        "success rate {:.4}, mean duration {:.4} s, mean loss {:.4}",
        report.success_rate, report.mean_duration, report.mean_loss
    );
    Ok(())
}

fn lifecycle_config(rec: &mut Recorder, a: &LifecycleArgs) -> Result<LifecycleConfig, CliError> {
    let mut lc = match &a.lifecycle_config {
        Some(p) => {
            let text = rec.read_input("lifecycle_config", p)?;
            serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?
        }
        None => match a.episodes {
            Some(n) => LifecycleConfig::new(n),
            None => return Err(CliError::Usage("lifecycle needs --episodes or --lifecycle-config".into())),
        },
    };
    if let Some(n) = a.episodes {
        lc.episodes_total = n;
    }
    if let Some(n) = a.finetune_every {
        lc.finetune_every = n;
    }
    if a.no_reoptimize {
        lc.reoptimize_after_finetune = false;
    }
    if a.no_finetune {
        lc.finetune_enabled = false;
    }
    lc.validate().map_err(CliError::domain)?;
    rec.flag("lifecycle", &lc);
    Ok(lc)
}

pub fn lifecycle(a: LifecycleArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("lifecycle", Some(a.seed));
    let lc = lifecycle_config(&mut rec, &a)?;
    let program = read_program(&mut rec, &a.program)?;
    let world = read_world(&mut rec, &a.world)?;
    rec.record_dir("models", &a.models)?;
    let library = load_library(&a.models).map_err(CliError::domain)?;
    let spec = read_loss(&mut rec, a.loss.as_deref())?;
    rec.flag("out", a.out.display().to_string());

    let op = run_operation(&program, &library, &world, &spec, &lc, a.seed).map_err(CliError::domain)?;
    let f = fs::File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    op.log.write_csv(BufWriter::new(f)).map_err(|e| CliError::Domain(format!("{}: {e}", a.out.display())))?;
    if let Some(dir) = &a.models_out {
        rec.flag("models_out", dir.display().to_string());
        save_library(&op.models, dir).map_err(CliError::domain)?;
    }

    let window = lc.drift_alarm_window as usize;
    let drift = match detect_drift(&op.log.successes(), window, lc.drift_alarm_threshold) {
        Ok(s) => Some(s),
        Err(LifecycleError::ShortWindow { .. }) => None,
        Err(e) => return Err(CliError::domain(e)),
    };
    let alarms: Vec<u64> =
        op.log.records().iter().filter(|r| r.events.contains(&Event::Alarm)).map(|r| r.episode).collect();
    let result = json!({
        "episodes": op.log.len(),
        "success_rate": (!op.log.is_empty()).then(|| op.log.success_rate(0, op.log.len())),
        "final_window": drift,
        "alarm_episodes": alarms,
        "finetune_cycles": op.log.count(Event::Finetune),
        "reoptimizations": op.log.count(Event::Reoptimize),
        "parameter_names": op.log.parameter_names,
        "final_theta": op.program.get_free_parameters().0,
        "cycles": op.cycles,
    });
    finish(rec, a.report.as_deref(), &result)?;
    eprintln!(
        "{} episodes, {} fine-tune cycles, {} alarms -> {}",
        op.log.len(),
        op.log.count(Event::Finetune),
        alarms.len(),
        a.out.display()
    );
    Ok(())
}

fn print_tree(t: &ProofTree, depth: usize) {
    let via = t.rule.as_deref().map(|r| format!("  [{r}]")).unwrap_or_else(|| "  [fact]".into());
    println!("{}{}{via}", "  ".repeat(depth), t.fact);
    for p in &t.premises {
        print_tree(p, depth + 1);
    }
}

pub fn explain(a: ExplainArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("explain", None);
    let kb: KnowledgeBase = rec.read_input("kb", &a.kb)?.parse().map_err(CliError::domain)?;
    rec.flag("query", &a.query);
    let query = parse_atom(&a.query).map_err(CliError::domain)?;
    let result = explain_query(&kb, &query);
    match &result {
        Explanation::Proven { proof } => print_tree(proof, 0),
        Explanation::Refused { refusal } => {
            println!("not derivable: {}", refusal.query);
            for c in &refusal.candidates {
                let missing: Vec<String> = c.missing().map(|m| m.to_string()).collect();
                println!("  {} would derive {} but lacks {}", c.rule, c.head, missing.join(", "));
            }
        }
    }
    finish(rec, a.report.as_deref(), &result)?;
    Ok(())
}
