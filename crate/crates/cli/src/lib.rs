//! Entry points behind the `partreg` binary: argument parsing, the three
//! batch workflows and the session service.

pub mod args;
pub mod service;

use std::fs;

use anyhow::Context;
use partreg_core::io::{save_json, RunArtifacts, ScenarioBundle, METRICS_FILE};
use partreg_core::runner;

use args::{Cli, CommandLine, EvaluateArgs, GenerateArgs, RegisterArgs, ServeArgs};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        CommandLine::Generate(a) => generate(a),
        CommandLine::Register(a) => register(a),
        CommandLine::Evaluate(a) => evaluate(a),
        CommandLine::Serve(a) => serve(a),
    }
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let bundle = runner::generate_to(a.preset, a.model, a.seed, &a.out)?;
    println!(
        "{}: {} source points, {} target points -> {}",
        bundle.name,
        bundle.source.len(),
        bundle.target.len(),
        a.out.display()
    );
    Ok(())
}

fn register(a: RegisterArgs) -> anyhow::Result<()> {
    let bundle = a.scenario.load()?;
    let cfg = a.config.resolve(&bundle)?;
    let run = runner::register(&bundle, &cfg, a.tolerance).context("registration failed")?;
    run.write(&a.out)?;
    let r = &run.report;
    println!("{}: {} parts -> {}", r.scenario, r.outcomes.len(), a.out.display());
    for o in &r.outcomes {
        println!("  {:>3} {:<16} {:?}", o.part, o.name, o.stage);
    }
    if let Some(m) = &r.metrics {
        println!(
            "  IR {:.3}  NFMR {:.3}  C2C median {:.4}",
            m.inlier_ratio.ratio, m.nfmr, m.c2c.summary.median
        );
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let bundle = ScenarioBundle::read(&a.scenario)?;
    let run = RunArtifacts::read(&a.run)?;
    let metrics = runner::evaluate(&bundle, &run, a.tolerance)?;
    let out = a.out.unwrap_or_else(|| a.run.join(METRICS_FILE));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_json(&out, &metrics)?;
    println!(
        "IR {:.3} ({} / {})  NFMR {:.3}  C2C median {:.4} -> {}",
        metrics.inlier_ratio.ratio,
        metrics.inlier_ratio.correct,
        metrics.inlier_ratio.total,
        metrics.nfmr,
        metrics.c2c.summary.median,
        out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let bundle = a.scenario.load()?;
    let mut cfg = a.config.resolve(&bundle)?;
    cfg.interactive = a.interactive;
    let app = service::spawn_session(
        bundle,
        cfg,
        service::ServiceOptions {
            tolerance: a.tolerance,
            ui_dir: a.ui_dir,
        },
    )?;
    tokio::runtime::Runtime::new()?.block_on(service::serve(app, a.listen))
}
