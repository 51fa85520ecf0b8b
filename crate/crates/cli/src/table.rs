//! Cohort tables as CSV.
//!
//! Recognized columns are `subject` (required), `age`, `gender` (0 or 1),
//! `spacing_x`, `spacing_y`, `spacing_z`, `icv` and `group`. A column named
//! `qc_<structure>` holds the QC score of `<structure>`; every other column is
//! a structure volume. Blank cells are missing values.

use std::path::Path;

use synthseg_core::stats::{CohortRecord, CohortTable};

use crate::error::{CliError, ErrorClass, Result};

#[derive(Clone, Copy)]
enum Column {
    Subject,
    Age,
    Gender,
    Spacing(usize),
    Icv,
    Group,
    Volume(usize),
    Qc(usize),
}

const SPACING: [&str; 3] = ["spacing_x", "spacing_y", "spacing_z"];

fn malformed(path: &Path, line: u64, message: String) -> CliError {
    CliError::new(ErrorClass::Format, format!("{}: line {line}: {message}", path.display()))
}

fn layout(path: &Path, headers: &csv::StringRecord) -> Result<(Vec<Column>, Vec<String>)> {
    let mut structures: Vec<String> = Vec::new();
    let mut columns = Vec::with_capacity(headers.len());
    let mut seen = std::collections::BTreeSet::new();
    for (i, name) in headers.iter().enumerate() {
        if !seen.insert(name) {
            return Err(malformed(path, 1, format!("column {} ({name:?}) is a duplicate", i + 1)));
        }
        if name.is_empty() {
            return Err(malformed(path, 1, format!("column {} has no name", i + 1)));
        }
        columns.push(match name {
            "subject" => Column::Subject,
            "age" => Column::Age,
            "gender" => Column::Gender,
            "icv" => Column::Icv,
            "group" => Column::Group,
            n if SPACING.contains(&n) => Column::Spacing(SPACING.iter().position(|s| *s == n).unwrap()),
            n if n.starts_with("qc_") => Column::Qc(usize::MAX),
            n => {
                structures.push(n.to_owned());
                Column::Volume(structures.len() - 1)
            }
        });
    }
    for (i, name) in headers.iter().enumerate() {
        if let Column::Qc(_) = columns[i] {
            let target = &name[3..];
            let s = structures.iter().position(|s| s == target).ok_or_else(|| {
                malformed(path, 1, format!("column {} ({name:?}) has no matching volume column {target:?}", i + 1))
            })?;
            columns[i] = Column::Qc(s);
        }
    }
    if !columns.iter().any(|c| matches!(c, Column::Subject)) {
        return Err(malformed(path, 1, "missing the subject column".into()));
    }
    Ok((columns, structures))
}

pub fn read_cohort_csv(path: &Path) -> Result<CohortTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::new(ErrorClass::Io, format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| malformed(path, 1, e.to_string()))?.clone();
    let (columns, structures) = layout(path, &headers)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let mut rec = CohortRecord {
            subject: String::new(),
            age: f64::NAN,
            gender: 0,
            spacing: [1.0; 3],
            volumes: vec![None; structures.len()],
            icv: None,
            qc: vec![None; structures.len()],
            group: None,
        };
        for (i, cell) in row.iter().enumerate() {
            let number = || -> Result<Option<f64>> {
                if cell.is_empty() {
                    return Ok(None);
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(malformed(path, line, format!("column {} ({}): {cell:?} is not a finite number", i + 1, &headers[i]))),
                }
            };
            match columns[i] {
                Column::Subject => rec.subject = cell.to_owned(),
                Column::Age => rec.age = number()?.unwrap_or(f64::NAN),
                Column::Gender => {
                    rec.gender = match cell {
                        "0" | "" => 0,
                        "1" => 1,
                        _ => return Err(malformed(path, line, format!("column {} (gender): {cell:?} is not 0 or 1", i + 1))),
                    }
                }
                Column::Spacing(a) => rec.spacing[a] = number()?.unwrap_or(1.0),
                Column::Icv => rec.icv = number()?,
                Column::Group => rec.group = (!cell.is_empty()).then(|| cell.to_owned()),
                Column::Volume(s) => rec.volumes[s] = number()?,
                Column::Qc(s) => rec.qc[s] = number()?,
            }
        }
        if rec.subject.is_empty() {
            return Err(malformed(path, line, "empty subject".into()));
        }
        records.push(rec);
    }
    Ok(CohortTable { structures, records })
}

fn cell(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_cohort_csv(table: &CohortTable, path: &Path) -> Result<()> {
    let io = |e: csv::Error| CliError::new(ErrorClass::Io, format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header: Vec<String> = ["subject", "age", "gender"].iter().map(|s| s.to_string()).collect();
    header.extend(SPACING.iter().map(|s| s.to_string()));
    header.extend(["icv".to_string(), "group".to_string()]);
    header.extend(table.structures.iter().cloned());
    header.extend(table.structures.iter().map(|s| format!("qc_{s}")));
    w.write_record(&header).map_err(io)?;
    for r in &table.records {
        let mut row = vec![r.subject.clone(), cell(Some(r.age)), r.gender.to_string()];
        row.extend(r.spacing.iter().map(|&s| cell(Some(s))));
        row.push(cell(r.icv));
        row.push(r.group.clone().unwrap_or_default());
        row.extend(r.volumes.iter().map(|&v| cell(v)));
        row.extend(r.qc.iter().map(|&v| cell(v)));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::from(e).context(path.display()))
}
