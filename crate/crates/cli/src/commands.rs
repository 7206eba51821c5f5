use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use respgate_core::eval::{correlate_with_reference, EvaluationReport, TABLE_HEADER};
use respgate_core::heartbeat::{classify_beats, ScoreMethod, SliceBeats};
use respgate_core::io::{load_signals, load_stack, read_json, save_signals, save_stack, write_json};
use respgate_core::pca::ExtractOptions;
use respgate_core::phantom::{generate, split_series};
use respgate_core::{design_lowpass, resolve, CineStack, Error, PhantomTruth, Resolution, ResolveOptions};

use crate::report::render_report;
use crate::{EvalArgs, ExtractArgs, PhantomArgs, PipelineArgs};

pub const TRUTH_FILE: &str = "truth.json";
pub const RUN_FILE: &str = "run.json";
pub const LEDGER_FILE: &str = "ledger.json";
pub const BEATS_FILE: &str = "beats.json";
pub const REPORT_FILE: &str = "report.svg";

fn run_record(command: &str, params: Value) -> Value {
    json!({
        "tool": "respgate",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "parameters": params,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn phantom(args: &PhantomArgs) -> Result<()> {
    let cfg = args.config();
    let (stack, truth) = generate(&cfg)?;
    create_dir(&args.out)?;
    save_stack(&args.out, &stack)?;
    write_json(&args.out.join(TRUTH_FILE), &truth)?;
    write_json(&args.out.join(RUN_FILE), &run_record("phantom", json!(cfg)))?;
    log::info!("wrote {} slices to {}", stack.len(), args.out.display());
    Ok(())
}

impl PipelineArgs {
    fn options(&self) -> ResolveOptions {
        ResolveOptions {
            tau: self.tau,
            zmc_filtered: !self.zmc_unfiltered,
            extract: ExtractOptions::default(),
        }
    }

    fn run(&self, stack: &CineStack) -> Result<Resolution, Error> {
        let kernel = design_lowpass(1.0 / stack.frame_period_s(), self.cutoff_hz)?;
        resolve(stack, &kernel, &self.options())
    }

    fn echo(&self, stack: &CineStack) -> Value {
        let fs = 1.0 / stack.frame_period_s();
        json!({
            "cutoff_hz": self.cutoff_hz,
            "sampling_hz": fs,
            "taps": design_lowpass(fs, self.cutoff_hz).map(|k| k.len()).ok(),
            "tau": self.tau,
            "zmc_filtered": !self.zmc_unfiltered,
        })
    }
}

fn stack_path(path: &Path) -> String {
    path.display().to_string()
}

pub fn extract(args: &ExtractArgs, threads: Option<usize>) -> Result<()> {
    let stack = load_stack(&args.stack)?;
    create_dir(&args.out)?;
    let mut params = args.pipeline.echo(&stack);
    params["stack"] = json!(stack_path(&args.stack));
    params["score"] = json!(ScoreMethod::from(args.score));
    params["rr_tolerance"] = json!(args.rr_tolerance);
    params["threads"] = json!(threads);

    let resolution = match args.pipeline.run(&stack) {
        Ok(r) => r,
        Err(e) => {
            if let Error::DirectionalityUndetermined { ledger } = e.root() {
                write_json(&args.out.join(LEDGER_FILE), ledger)?;
                eprintln!("{}", serde_json::to_string_pretty(ledger)?);
            }
            write_json(&args.out.join(RUN_FILE), &run_record("extract", params))?;
            return Err(e.into());
        }
    };

    save_signals::<()>(&args.out, &resolution.signals, resolution.zmc(), None)?;
    write_json(&args.out.join(LEDGER_FILE), &resolution.ledger)?;

    let beats = stack
        .slices()
        .iter()
        .zip(&resolution.signals)
        .map(|(slice, signal)| {
            classify_beats(
                slice.rwave_times_s(),
                slice.frame_period_s(),
                signal,
                args.rr_tolerance,
                args.score.into(),
            )
        })
        .collect::<Result<Vec<SliceBeats>, Error>>()?;
    for b in &beats {
        if let Some(note) = &b.note {
            log::warn!("slice {}: {note}", b.slice);
        }
    }
    write_json(&args.out.join(BEATS_FILE), &beats)?;

    let svg = render_report(&resolution.signals, &beats, stack.frame_period_s());
    let report = args.out.join(REPORT_FILE);
    fs::write(&report, svg).with_context(|| format!("writing {}", report.display()))?;

    params["slices"] = resolution
        .analysis
        .extractions
        .iter()
        .zip(&resolution.analysis.reorientations)
        .map(|(e, r)| {
            json!({
                "eigenvalue": e.eigenvalue,
                "energy_fraction": e.energy_fraction(),
                "transposed": r.transposed,
                "flipped_vertical": r.flipped_vertical,
                "orientation_tie": r.tie,
            })
        })
        .collect();
    write_json(&args.out.join(RUN_FILE), &run_record("extract", params))?;
    Ok(())
}

/// Result for one evaluated series; `report` is absent when the sign could
/// not be resolved.
#[derive(Debug, Serialize)]
struct Outcome {
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EvaluationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl Outcome {
    fn row(&self) -> String {
        match (&self.report, &self.error) {
            (Some(r), _) => r.table_row(),
            (None, Some(e)) => format!("{:<12} {e}", self.label),
            (None, None) => format!("{:<12} -", self.label),
        }
    }
}

fn evaluate_parts(args: &EvalArgs, parts: usize, truth: &PhantomTruth) -> Result<Vec<Outcome>> {
    let Some(stack_path) = &args.stack else {
        bail!("--split needs --stack");
    };
    let stack = load_stack(stack_path)?;
    let stacks = split_series(&stack, parts)?;
    let truths = truth.split(parts)?;
    let mut outcomes = Vec::with_capacity(parts);
    for (k, (stack, truth)) in stacks.iter().zip(&truths).enumerate() {
        let label = format!("part {}/{parts}", k + 1);
        let outcome = match args.pipeline.run(stack) {
            Ok(res) => {
                let r = correlate_with_reference(&res.signals, &truth.resp_signal)?;
                Outcome {
                    report: Some(EvaluationReport::new(label.clone(), r)?),
                    label,
                    error: None,
                }
            }
            Err(e) if e.is_undetermined() => Outcome {
                label,
                report: None,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e.into()),
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

pub fn eval(args: &EvalArgs, threads: Option<usize>) -> Result<()> {
    let signals = load_signals(&args.extract_dir)?;
    let truth: PhantomTruth = read_json(&args.truth)?;
    let correlations = correlate_with_reference(&signals, &truth.resp_signal)?;
    let mut outcomes = vec![Outcome {
        label: "full".into(),
        report: Some(EvaluationReport::new("full", correlations)?),
        error: None,
    }];
    let mut params = json!({
        "extract_dir": stack_path(&args.extract_dir),
        "truth": stack_path(&args.truth),
        "split": args.split,
        "threads": threads,
    });
    if let Some(parts) = args.split {
        outcomes.extend(evaluate_parts(args, parts, &truth)?);
        params["stack"] = json!(args.stack.as_deref().map(stack_path));
        params["cutoff_hz"] = json!(args.pipeline.cutoff_hz);
        params["tau"] = json!(args.pipeline.tau);
        params["zmc_filtered"] = json!(!args.pipeline.zmc_unfiltered);
    }

    println!("{TABLE_HEADER}");
    for o in &outcomes {
        println!("{}", o.row());
    }

    let out: PathBuf = args.out.clone().unwrap_or_else(|| args.extract_dir.join("eval"));
    create_dir(&out)?;
    let summary = json!({ "series": outcomes, "config": params });
    write_json(&out.join(respgate_core::io::SUMMARY_FILE), &summary)?;
    write_json(&out.join(RUN_FILE), &run_record("eval", params))?;
    Ok(())
}
