use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use synthseg_core::pipeline::{segment_with, volume_table, ModelBundle, PipelineOptions, SegmentationResult};
use synthseg_core::schema::{CoarseClass, LabelSchema};
use synthseg_core::stats::VolumeReport;
use synthseg_core::tensor::Tensor;
use synthseg_core::volume::nifti::{read_intensity, write_intensity, write_labels};
use synthseg_core::volume::LabelVolume;

use crate::error::{CliError, Result};
use crate::files::{create_dir, nifti_files, nifti_stem, write_json};
use crate::table::write_cohort_csv;
use crate::SegmentArgs;

#[derive(Serialize)]
struct RegionScore<'a> {
    region: &'a str,
    score: f64,
    pass: bool,
}

#[derive(Serialize)]
struct QcDocument<'a> {
    threshold: f64,
    overall_pass: bool,
    regions: Vec<RegionScore<'a>>,
}

#[derive(Serialize)]
struct StructureVolume<'a> {
    id: u32,
    name: &'a str,
    volume_mm3: f64,
    qc_score: Option<f64>,
}

#[derive(Serialize)]
struct VolumeDocument<'a> {
    icv_mm3: f64,
    structures: Vec<StructureVolume<'a>>,
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(nifti_files(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn write_channel(soft: &Tensor<f32>, c: usize, like: &LabelVolume, path: PathBuf) -> Result<()> {
    let vol = like.with_data(soft.channel(c).to_vec()).expect("soft maps share the label grid");
    write_intensity(&vol, &path).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_outputs(
    result: &SegmentationResult,
    report: &VolumeReport,
    schema: &LabelSchema,
    dir: &Path,
    save_soft: bool,
) -> Result<()> {
    create_dir(dir)?;
    write_labels(&result.final_labels, dir.join("labels.nii.gz"))?;
    let qc = QcDocument {
        threshold: result.qc.threshold,
        overall_pass: result.qc.overall_pass,
        regions: (0..result.qc.regions.len())
            .map(|i| RegionScore {
                region: result.qc.regions[i].name(),
                score: result.qc.scores[i],
                pass: result.qc.per_region_pass[i],
            })
            .collect(),
    };
    write_json(&dir.join("qc.json"), &qc)?;
    let volumes = VolumeDocument {
        icv_mm3: report.icv,
        structures: schema
            .structures()
            .iter()
            .filter(|s| s.id != 0)
            .map(|s| StructureVolume {
                id: s.id,
                name: &s.name,
                volume_mm3: report.volumes[&s.id],
                qc_score: report.qc.get(&s.id).copied(),
            })
            .collect(),
    };
    write_json(&dir.join("volumes.json"), &volumes)?;
    if save_soft {
        let soft = dir.join("soft");
        create_dir(&soft)?;
        for class in CoarseClass::ALL {
            write_channel(&result.denoised_soft, class.index(), &result.final_labels, soft.join(format!("coarse_{}.nii.gz", class.name())))?;
        }
        for (c, s) in schema.structures().iter().enumerate() {
            write_channel(&result.fine_soft, c, &result.final_labels, soft.join(format!("fine_{}.nii.gz", s.id)))?;
        }
    }
    Ok(())
}

pub fn run(args: &SegmentArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.robust_threshold) {
        return Err(CliError::usage("--robust-threshold must lie in [0, 1]"));
    }
    let bundle = ModelBundle::load(&args.bundle).map_err(|e| CliError::from(e).context(args.bundle.display()))?;
    let inputs = expand_inputs(&args.inputs)?;
    let batch = inputs.len() > 1;
    let options = PipelineOptions { qc_threshold: args.robust_threshold, use_denoiser: !args.no_denoiser };
    create_dir(&args.out)?;

    let names: Vec<String> = inputs
        .iter()
        .map(|p| nifti_stem(p).unwrap_or_else(|| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()))
        .collect();
    let unique: std::collections::BTreeSet<_> = names.iter().collect();
    if unique.len() != names.len() {
        return Err(CliError::usage("input scans must have distinct file names"));
    }
    let reports: Vec<(String, VolumeReport)> = inputs
        .par_iter()
        .zip(&names)
        .map(|(path, name)| -> Result<(String, VolumeReport)> {
            let scan = read_intensity(path).map_err(|e| CliError::from(e).context(path.display()))?;
            let result = segment_with(&scan, &bundle, options).map_err(|e| CliError::from(e).context(path.display()))?;
            let report = result.volume_report(&bundle.schema)?;
            let dir = if batch { args.out.join(name) } else { args.out.clone() };
            write_outputs(&result, &report, &bundle.schema, &dir, args.save_soft)?;
            if !result.qc.overall_pass {
                eprintln!("warning: {}: at least one region scored below {}", path.display(), args.robust_threshold);
            }
            Ok((name.clone(), report))
        })
        .collect::<Result<_>>()?;

    write_cohort_csv(&volume_table(&reports, &bundle.schema), &args.out.join("volumes.csv"))?;
    println!("segmented {} scan(s) into {}", reports.len(), args.out.display());
    Ok(())
}
