use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use synthseg_core::pipeline::{BundleDir, Stage};
use synthseg_core::trainer::{
    load_checkpoint, train_denoiser, train_regressor, train_segmenter, TrainConfig, TrainOptions, TrainState, Upstream,
};

use crate::error::{CliError, ErrorClass, Result};
use crate::files::{load_schema, read_corpus, read_json, read_label_maps, write_json};
use crate::{Preset, Role, TrainArgs};

fn stage_of(role: Role) -> Stage {
    match role {
        Role::S1 => Stage::S1,
        Role::D => Stage::D,
        Role::S2 => Stage::S2,
        Role::S3 => Stage::S3,
        Role::R => Stage::R,
    }
}

/// Preset, then the config file's keys, then explicit flags.
pub fn resolve_config(stage: Stage, args: &TrainArgs) -> Result<TrainConfig> {
    let base = match args.preset {
        Preset::Full => TrainConfig::for_stage(stage),
        Preset::Toy => TrainConfig::toy(),
    };
    let mut merged = serde_json::to_value(&base)?;
    if let Some(path) = &args.config {
        let Value::Object(file) = read_json::<Value>(path)? else {
            return Err(CliError::new(ErrorClass::Format, format!("{}: expected a JSON object", path.display())));
        };
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in file {
            if !target.contains_key(&k) {
                return Err(CliError::new(ErrorClass::Validation, format!("{}: unknown config key {k:?}", path.display())));
            }
            target.insert(k, v);
        }
    }
    let mut config: TrainConfig = serde_json::from_value(merged)
        .map_err(|e| CliError::new(ErrorClass::Validation, format!("training config: {e}")))?;
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.checkpoint_every {
        config.checkpoint_every = v;
    }
    config.validate()?;
    Ok(config)
}

fn write_lines(path: &Path, lines: impl Iterator<Item = Value>) -> Result<()> {
    let mut out = Vec::new();
    for line in lines {
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let stage = stage_of(args.role);
    let existing = if args.out.join("bundle.json").exists() { Some(BundleDir::open(&args.out)?) } else { None };
    for dep in stage.dependencies() {
        if !existing.as_ref().is_some_and(|b| b.has(*dep)) {
            return Err(CliError::new(
                ErrorClass::Dependency,
                format!("training {stage} needs trained {dep} weights in {}; train --role {dep} first", args.out.display()),
            ));
        }
    }
    let config = resolve_config(stage, args)?;
    let mut bundle = match existing {
        Some(b) => b,
        None => BundleDir::open_or_create(&args.out, &load_schema(args.schema.as_deref())?)?,
    };
    let schema = bundle.schema()?;
    let checkpoints = args.out.join("checkpoints").join(stage.name());
    let resume = if args.resume {
        if !checkpoints.join("checkpoint.json").exists() {
            return Err(CliError::new(ErrorClass::Dependency, format!("no {stage} checkpoint in {}", checkpoints.display())));
        }
        Some(load_checkpoint(&checkpoints)?)
    } else {
        None
    };
    let options = TrainOptions { checkpoint_dir: Some(checkpoints), resume, stop_at: None };
    write_json(&args.out.join(format!("{stage}.config.json")), &config)?;

    let state: TrainState = match stage {
        Stage::S1 | Stage::S2 | Stage::S3 => {
            let dir = args.maps.as_deref().ok_or_else(|| CliError::usage(format!("--maps is required for {stage}")))?;
            let (_, maps) = read_label_maps(dir, &schema)?;
            train_segmenter(stage, &maps, &schema, &config, &options)?
        }
        Stage::D | Stage::R => {
            let dir = args.corpus.as_deref().ok_or_else(|| CliError::usage(format!("--corpus is required for {stage}")))?;
            let corpus = read_corpus(dir, &schema)?;
            let s1 = bundle.load_stage(Stage::S1)?;
            if stage == Stage::D {
                train_denoiser(&s1, &corpus, &schema, &config, &options)?
            } else {
                let (d, s2) = (bundle.load_stage(Stage::D)?, bundle.load_stage(Stage::S2)?);
                train_regressor(&Upstream { s1: &s1, d: &d, s2: &s2 }, &corpus, &schema, &config, &options)?
            }
        }
    };

    bundle.save_stage(stage, &state.network)?;
    let losses = state.losses.iter().enumerate().map(|(i, l)| json!({ "step": i as u64 + 1, "loss": l }));
    write_lines(&args.out.join(format!("{stage}.losses.jsonl")), losses)?;
    let validation = state.validation.iter().map(|v| json!({ "step": v.step, "loss": v.loss }));
    write_lines(&args.out.join(format!("{stage}.validation.jsonl")), validation)?;
    let audit = state.audit.iter().map(|a| json!(a));
    write_lines(&args.out.join(format!("{stage}.audit.jsonl")), audit)?;
    let first = state.step - state.wall_seconds.len() as u64;
    let timing = state.wall_seconds.iter().enumerate().map(|(i, s)| json!({ "step": first + i as u64 + 1, "seconds": s }));
    write_lines(&args.out.join(format!("{stage}.timing.jsonl")), timing)?;

    let last = state.losses.last().copied().unwrap_or(f64::NAN);
    println!("trained {stage} for {} steps, final loss {last:.6}", state.step);
    Ok(())
}
