use std::collections::BTreeSet;

use serde::Serialize;
use synthseg_core::pipeline::{qc_filter, QcMode};
use synthseg_core::stats::{ageing_fit, ageing_predict, cohens_d, covariate_correct, AgeingModel, CohortTable};

use crate::error::{CliError, ErrorClass, Result};
use crate::files::{create_dir, write_json};
use crate::table::{read_cohort_csv, write_cohort_csv};
use crate::{CohortArgs, CohortMode, QcModeArg};

/// Covariates at which ageing trajectories are tabulated.
const REFERENCE_GENDER: u8 = 0;
const REFERENCE_SPACING: [f64; 3] = [1.0; 3];

#[derive(Serialize)]
struct Skipped {
    structure: String,
    reason: String,
}

#[derive(Serialize)]
struct TrajectoryPoint {
    age: f64,
    volume: f64,
}

#[derive(Serialize)]
struct AgeingEntry {
    model: AgeingModel,
    trajectory: Vec<TrajectoryPoint>,
}

#[derive(Serialize)]
struct AgeingDocument {
    reference_gender: u8,
    reference_spacing: [f64; 3],
    models: Vec<AgeingEntry>,
    skipped: Vec<Skipped>,
}

#[derive(Serialize)]
struct EffectSize {
    structure: String,
    group_a: String,
    group_b: String,
    n_a: usize,
    n_b: usize,
    mean_a: f64,
    mean_b: f64,
    cohens_d: f64,
}

#[derive(Serialize)]
struct EffectDocument {
    covariate_correction: bool,
    effects: Vec<EffectSize>,
    skipped: Vec<Skipped>,
}

fn selected(table: &CohortTable, args: &CohortArgs) -> Result<Vec<String>> {
    match &args.structures {
        None => Ok(table.structures.clone()),
        Some(list) => {
            for s in list {
                if table.column(s).is_none() {
                    return Err(CliError::new(ErrorClass::Validation, format!("structure {s:?} is not a column of the table")));
                }
            }
            Ok(list.clone())
        }
    }
}

fn ageing(table: &CohortTable, args: &CohortArgs) -> Result<()> {
    if args.grid_points < 2 {
        return Err(CliError::usage("--grid-points must be at least 2"));
    }
    let mut doc =
        AgeingDocument { reference_gender: REFERENCE_GENDER, reference_spacing: REFERENCE_SPACING, models: Vec::new(), skipped: Vec::new() };
    for structure in selected(table, args)? {
        match ageing_fit(table, &structure) {
            Ok(model) => {
                let (lo, hi) = model.age_range();
                let trajectory = (0..args.grid_points)
                    .map(|i| {
                        let age = lo + (hi - lo) * i as f64 / (args.grid_points - 1) as f64;
                        TrajectoryPoint { age, volume: ageing_predict(&model, age, REFERENCE_GENDER, REFERENCE_SPACING) }
                    })
                    .collect();
                doc.models.push(AgeingEntry { model, trajectory });
            }
            Err(e) => {
                eprintln!("warning: ageing fit for {structure}: {e}");
                doc.skipped.push(Skipped { structure, reason: e.to_string() });
            }
        }
    }
    if doc.models.is_empty() {
        return Err(CliError::new(ErrorClass::Statistics, "no structure could be fitted"));
    }
    write_json(&args.out.join("ageing.json"), &doc)
}

fn effect_sizes(table: &CohortTable, args: &CohortArgs) -> Result<()> {
    let groups: BTreeSet<&str> = table.records.iter().filter_map(|r| r.group.as_deref()).collect();
    if groups.len() != 2 {
        return Err(CliError::new(
            ErrorClass::Validation,
            format!("effect sizes need exactly two groups in the group column, found {}", groups.len()),
        ));
    }
    let [a, b]: [&str; 2] = groups.into_iter().collect::<Vec<_>>().try_into().unwrap();
    let correct = !args.no_correction;
    let mut doc = EffectDocument { covariate_correction: correct, effects: Vec::new(), skipped: Vec::new() };
    for structure in selected(table, args)? {
        let column = table.column(&structure).unwrap();
        let rows: Vec<_> =
            table.records.iter().filter(|r| r.group.is_some()).filter_map(|r| r.volumes[column].map(|v| (r, v))).collect();
        let outcome = (|| -> std::result::Result<EffectSize, String> {
            let values: Vec<f64> = if correct {
                let mut covariates = Vec::with_capacity(rows.len());
                for (r, _) in &rows {
                    let icv = r.icv.ok_or_else(|| format!("subject {} has no icv", r.subject))?;
                    covariates.push([r.age, r.gender as f64, icv]);
                }
                let volumes: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
                covariate_correct(&volumes, &covariates).map_err(|e| e.to_string())?.corrected
            } else {
                rows.iter().map(|(_, v)| *v).collect()
            };
            let pick = |g: &str| -> Vec<f64> {
                rows.iter().zip(&values).filter(|((r, _), _)| r.group.as_deref() == Some(g)).map(|(_, v)| *v).collect()
            };
            let (va, vb) = (pick(a), pick(b));
            let d = cohens_d(&va, &vb).map_err(|e| e.to_string())?;
            let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
            Ok(EffectSize {
                structure: structure.clone(),
                group_a: a.into(),
                group_b: b.into(),
                n_a: va.len(),
                n_b: vb.len(),
                mean_a: mean(&va),
                mean_b: mean(&vb),
                cohens_d: d,
            })
        })();
        match outcome {
            Ok(e) => doc.effects.push(e),
            Err(reason) => {
                eprintln!("warning: effect size for {structure}: {reason}");
                doc.skipped.push(Skipped { structure, reason });
            }
        }
    }
    if doc.effects.is_empty() {
        return Err(CliError::new(ErrorClass::Statistics, "no effect size could be computed"));
    }
    let path = args.out.join("effectsize.csv");
    let io = |e: csv::Error| CliError::new(ErrorClass::Io, format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    for e in &doc.effects {
        w.serialize(e).map_err(io)?;
    }
    w.flush()?;
    write_json(&args.out.join("effectsize.json"), &doc)
}

#[derive(Serialize)]
struct DropRow<'a> {
    subject: &'a str,
    structure: &'a str,
    score: f64,
}

fn filter(table: &CohortTable, args: &CohortArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::usage("--threshold must lie in [0, 1]"));
    }
    let mode = match args.qc_mode {
        QcModeArg::Whole => QcMode::Whole,
        QcModeArg::PerStructure => QcMode::PerStructure,
    };
    let (kept, log) = qc_filter(table, mode, args.threshold);
    write_cohort_csv(&kept, &args.out.join("filtered.csv"))?;
    let path = args.out.join("drop_log.csv");
    let io = |e: csv::Error| CliError::new(ErrorClass::Io, format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(io)?;
    w.write_record(["subject", "structure", "score"]).map_err(io)?;
    for e in &log {
        let row = DropRow { subject: &e.subject, structure: e.structure.as_deref().unwrap_or(""), score: e.score };
        w.serialize(row).map_err(io)?;
    }
    w.flush()?;
    println!("kept {} of {} subjects, {} drop events", kept.records.len(), table.records.len(), log.len());
    Ok(())
}

pub fn run(args: &CohortArgs) -> Result<()> {
    let table = read_cohort_csv(&args.volumes)?;
    if table.records.is_empty() {
        return Err(CliError::new(ErrorClass::Validation, format!("{}: no rows", args.volumes.display())));
    }
    create_dir(&args.out)?;
    match args.mode {
        CohortMode::Ageing => ageing(&table, args),
        CohortMode::Effectsize => effect_sizes(&table, args),
        CohortMode::Qcfilter => filter(&table, args),
    }
}
