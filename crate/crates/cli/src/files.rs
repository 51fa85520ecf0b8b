use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use synthseg_core::schema::LabelSchema;
use synthseg_core::trainer::PairedCorpus;
use synthseg_core::volume::nifti::{read_intensity, read_labels};
use synthseg_core::volume::LabelVolume;

use crate::error::{CliError, ErrorClass, Result};

/// File name without its `.nii` / `.nii.gz` suffix, or `None` for other files.
pub fn nifti_stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii")).map(str::to_owned)
}

/// NIfTI files directly inside `dir`, sorted by name.
pub fn nifti_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && nifti_stem(&path).is_some() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::new(ErrorClass::Validation, format!("{}: no .nii or .nii.gz files", dir.display())));
    }
    Ok(files)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| CliError::from(e).context(path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
    serde_json::from_str(&text).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn load_schema(path: Option<&Path>) -> Result<LabelSchema> {
    match path {
        Some(p) => LabelSchema::load(p).map_err(|e| CliError::from(e).context(p.display())),
        None => Ok(LabelSchema::default_schema()),
    }
}

fn check_labels(map: &LabelVolume, schema: &LabelSchema, path: &Path) -> Result<()> {
    for l in map.label_set() {
        schema.structure(l).map_err(|e| CliError::from(e).context(path.display()))?;
    }
    Ok(())
}

/// Every label map in `dir`, with each label checked against `schema`.
pub fn read_label_maps(dir: &Path, schema: &LabelSchema) -> Result<(Vec<String>, Vec<LabelVolume>)> {
    let mut names = Vec::new();
    let mut maps = Vec::new();
    for path in nifti_files(dir)? {
        let map = read_labels(&path).map_err(|e| CliError::from(e).context(path.display()))?;
        check_labels(&map, schema, &path)?;
        names.push(path.file_name().unwrap().to_string_lossy().into_owned());
        maps.push(map);
    }
    Ok((names, maps))
}

/// Pairs `<name>_image.nii[.gz]` with `<name>_labels.nii[.gz]`.
pub fn read_corpus(dir: &Path, schema: &LabelSchema) -> Result<PairedCorpus> {
    let files = nifti_files(dir)?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in &files {
        let stem = nifti_stem(path).unwrap();
        let Some(name) = stem.strip_suffix("_image") else { continue };
        let partner = files
            .iter()
            .find(|p| nifti_stem(p).as_deref() == Some(&format!("{name}_labels")))
            .ok_or_else(|| CliError::new(ErrorClass::Validation, format!("{}: no matching {name}_labels file", path.display())))?;
        let map = read_labels(partner).map_err(|e| CliError::from(e).context(partner.display()))?;
        check_labels(&map, schema, partner)?;
        images.push(read_intensity(path).map_err(|e| CliError::from(e).context(path.display()))?);
        labels.push(map);
    }
    if images.is_empty() {
        return Err(CliError::new(ErrorClass::Validation, format!("{}: no <name>_image files", dir.display())));
    }
    Ok(PairedCorpus::new(images, labels, schema)?)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))
}
