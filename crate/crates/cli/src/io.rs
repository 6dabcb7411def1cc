//! File formats: dataset and prediction CSVs, histogram CSV, group-name
//! sidecar, and JSON in and out.

use std::fs;
use std::path::{Path, PathBuf};

use fin_equity::jsonfmt::{self, FloatStyle};
use fin_equity::metrics::Histogram;
use fin_equity::{Attribute, AttributeSet, Dataset, LabeledSample, PredictionRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Floats in CSV files are written with 17 significant digits.
fn float(v: f64) -> String {
    FloatStyle::RoundTrip.format(v)
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: display(path),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: display(parent),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: display(path),
        source,
    })
}

/// Parses a JSON file; syntax and schema errors carry line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|source| CliError::Json {
        path: display(path),
        source,
    })
}

/// Pretty JSON with floats at `decimals` places.
pub fn write_json<T: Serialize>(path: &Path, value: &T, decimals: usize) -> Result<(), CliError> {
    let text = jsonfmt::to_string(value, FloatStyle::Decimals(decimals), true).map_err(|source| {
        CliError::Json {
            path: display(path),
            source,
        }
    })?;
    write_text(path, &(text + "\n"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupsFile {
    groups: Vec<String>,
}

pub fn read_groups(path: &Path) -> Result<AttributeSet, CliError> {
    let file: GroupsFile = read_json(path)?;
    AttributeSet::new(file.groups).map_err(|e| CliError::input(path, e.to_string()))
}

pub fn write_groups(path: &Path, set: &AttributeSet) -> Result<(), CliError> {
    let file = GroupsFile {
        groups: set.names().to_vec(),
    };
    write_json(path, &file, 6)
}

/// Group names from the sidecar if given, else `group0..groupK` for the
/// largest id seen.
fn attribute_set(groups: Option<&Path>, max_id: Option<usize>) -> Result<AttributeSet, CliError> {
    match groups {
        Some(path) => read_groups(path),
        None => Ok(AttributeSet::anonymous(max_id.map_or(1, |m| m + 1))?),
    }
}

struct CsvRows {
    path: PathBuf,
    reader: csv::Reader<fs::File>,
}

impl CsvRows {
    fn open(path: &Path) -> Result<Self, CliError> {
        let file = fs::File::open(path).map_err(|source| CliError::Io {
            path: display(path),
            source,
        })?;
        let reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        Ok(Self {
            path: path.to_path_buf(),
            reader,
        })
    }

    fn header(&mut self) -> Result<Vec<String>, CliError> {
        let header = self
            .reader
            .headers()
            .map_err(|e| CliError::input(&self.path, format!("line 1: {e}")))?;
        Ok(header.iter().map(str::to_string).collect())
    }

    /// Every data row with its 1-based line number.
    fn rows(&mut self) -> Result<Vec<(u64, csv::StringRecord)>, CliError> {
        let mut out = Vec::new();
        for row in self.reader.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                CliError::input(&self.path, format!("line {line}: {e}"))
            })?;
            let line = row.position().map_or(0, |p| p.line());
            out.push((line, row));
        }
        Ok(out)
    }
}

struct Field<'a> {
    path: &'a Path,
    line: u64,
}

impl Field<'_> {
    fn err(&self, msg: String) -> CliError {
        CliError::input(self.path, format!("line {}: {msg}", self.line))
    }

    fn float(&self, name: &str, text: &str) -> Result<f64, CliError> {
        match text.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(format!("`{name}` = `{text}` is not a finite number"))),
        }
    }

    fn label(&self, text: &str) -> Result<u8, CliError> {
        match text.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(self.err(format!("label `{other}` is not 0 or 1"))),
        }
    }

    fn attr(&self, text: &str) -> Result<usize, CliError> {
        text.trim()
            .parse::<usize>()
            .map_err(|_| self.err(format!("attr `{text}` is not a non-negative integer")))
    }
}

fn check_attrs(path: &Path, set: &AttributeSet, rows: &[(u64, usize)]) -> Result<(), CliError> {
    for &(line, a) in rows {
        if a >= set.group_count() {
            return Err(CliError::input(
                path,
                format!(
                    "line {line}: attr {a} has no name in the groups file ({} groups)",
                    set.group_count()
                ),
            ));
        }
    }
    Ok(())
}

/// Reads `id,attr,label,f0,...,f{d-1}`.
pub fn read_dataset(path: &Path, groups: Option<&Path>) -> Result<Dataset, CliError> {
    let mut csv = CsvRows::open(path)?;
    let header = csv.header()?;
    let d = header.len().saturating_sub(3);
    let expected: Vec<String> = ["id", "attr", "label"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|j| format!("f{j}")))
        .collect();
    if d == 0 || header != expected {
        return Err(CliError::input(
            path,
            format!("line 1: header must be `id,attr,label,f0,...`, found `{}`", header.join(",")),
        ));
    }
    let mut samples = Vec::new();
    let mut attrs = Vec::new();
    for (line, row) in csv.rows()? {
        let field = Field { path, line };
        if row.len() != header.len() {
            return Err(field.err(format!("{} fields, expected {}", row.len(), header.len())));
        }
        let features = (0..d)
            .map(|j| field.float(&format!("f{j}"), &row[3 + j]))
            .collect::<Result<Vec<_>, _>>()?;
        let attribute = field.attr(&row[1])?;
        attrs.push((line, attribute));
        samples.push(LabeledSample {
            id: row[0].to_string(),
            features,
            label: field.label(&row[2])?,
            attribute: Attribute(attribute),
        });
    }
    if samples.is_empty() {
        return Err(CliError::input(path, "no data rows".into()));
    }
    let set = attribute_set(groups, attrs.iter().map(|a| a.1).max())?;
    check_attrs(path, &set, &attrs)?;
    Dataset::new(d, set, samples).map_err(|e| CliError::input(path, e.to_string()))
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), CliError> {
    let mut out = String::from("id,attr,label");
    for j in 0..dataset.d {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for s in &dataset.samples {
        out.push_str(&format!("{},{},{}", s.id, s.attribute.0, s.label));
        for &v in &s.features {
            out.push(',');
            out.push_str(&float(v));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads `id,score,label,attr` and the attribute set the records refer to.
pub fn read_predictions(
    path: &Path,
    groups: Option<&Path>,
) -> Result<(Vec<PredictionRecord>, AttributeSet), CliError> {
    let mut csv = CsvRows::open(path)?;
    let header = csv.header()?;
    if header != ["id", "score", "label", "attr"] {
        return Err(CliError::input(
            path,
            format!("line 1: header must be `id,score,label,attr`, found `{}`", header.join(",")),
        ));
    }
    let mut records = Vec::new();
    let mut attrs = Vec::new();
    for (line, row) in csv.rows()? {
        let field = Field { path, line };
        if row.len() != 4 {
            return Err(field.err(format!("{} fields, expected 4", row.len())));
        }
        let score = field.float("score", &row[1])?;
        let label = field.label(&row[2])?;
        let attribute = field.attr(&row[3])?;
        attrs.push((line, attribute));
        let record = PredictionRecord::new(row[0].to_string(), score, label, Attribute(attribute))
            .map_err(|e| field.err(e.to_string()))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::input(path, "no data rows".into()));
    }
    let set = attribute_set(groups, attrs.iter().map(|a| a.1).max())?;
    check_attrs(path, &set, &attrs)?;
    Ok((records, set))
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), CliError> {
    let mut out = String::from("id,score,label,attr\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.id, float(r.score), r.label, r.attribute.0));
    }
    write_text(path, &out)
}

pub fn write_histogram(path: &Path, hist: &Histogram) -> Result<(), CliError> {
    let mut out = String::from("bin_lo,bin_hi,tp,fp,tn,fn\n");
    for b in &hist.bins {
        let c = &b.counts;
        out.push_str(&format!("{},{},{},{},{},{}\n", b.lo, b.hi, c.tp, c.fp, c.tn, c.fn_));
    }
    write_text(path, &out)
}
