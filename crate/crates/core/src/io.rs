//! CSV formats for datasets, predictions and scores.
//!
//! Dataset files have a header `id,f1,..,fD,l_<label1>,..,l_<labelm>` with one
//! instance per row and labels as `0`/`1`. Prediction and score files use the
//! same layout without feature columns. Lines starting with `#` are comments.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, ZsmlError};
use crate::regression::FeatureMatrix;

const LABEL_PREFIX: &str = "l_";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub features: FeatureMatrix,
    /// `n x m` in `{0, 1}`, columns ordered as `vocabulary`.
    pub labels: DMatrix<u8>,
    pub vocabulary: Vec<String>,
}

impl Dataset {
    pub fn new(
        ids: Vec<String>,
        features: FeatureMatrix,
        labels: DMatrix<u8>,
        vocabulary: Vec<String>,
    ) -> Result<Self> {
        if ids.len() != features.rows() || ids.len() != labels.nrows() {
            return Err(ZsmlError::Shape(format!(
                "{} ids, {} feature rows, {} label rows",
                ids.len(),
                features.rows(),
                labels.nrows()
            )));
        }
        if labels.ncols() != vocabulary.len() {
            return Err(ZsmlError::Shape(format!(
                "{} label columns for a vocabulary of {}",
                labels.ncols(),
                vocabulary.len()
            )));
        }
        if labels.iter().any(|&v| v > 1) {
            return Err(ZsmlError::Validation("labels must be 0 or 1".into()));
        }
        check_unique("instance id", &ids)?;
        check_unique("label", &vocabulary)?;
        for id in &ids {
            check_cell_text("instance id", id)?;
        }
        for label in &vocabulary {
            check_cell_text("label", label)?;
        }
        Ok(Self {
            ids,
            features,
            labels,
            vocabulary,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let d = self.features.cols();
        let mut header = vec!["id".to_string()];
        header.extend((1..=d).map(|j| format!("f{j}")));
        header.extend(self.vocabulary.iter().map(|l| format!("{LABEL_PREFIX}{l}")));
        let mut w = csv_writer(out);
        w.write_record(&header).map_err(csv_error)?;
        let x = self.features.as_matrix();
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend((0..d).map(|j| x[(i, j)].to_string()));
            rec.extend((0..self.labels.ncols()).map(|j| self.labels[(i, j)].to_string()));
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush().map_err(|e| ZsmlError::Validation(format!("write failed: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| ZsmlError::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }
}

fn check_unique(what: &str, items: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item.as_str()) {
            return Err(ZsmlError::Validation(format!("duplicate {what} `{item}`")));
        }
    }
    Ok(())
}

fn check_cell_text(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.starts_with('#') || s.contains([',', '"', '\n', '\r']) {
        return Err(ZsmlError::Validation(format!(
            "{what} `{s}` must be nonempty, not start with `#`, and contain no commas, quotes or newlines"
        )));
    }
    Ok(())
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_error(e: csv::Error) -> ZsmlError {
    ZsmlError::Validation(format!("csv: {e}"))
}

struct Table {
    header: Vec<String>,
    /// `(line, cells)`
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table<R: Read>(reader: R, source_name: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            ZsmlError::parse(source_name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cells: Vec<String> = rec.iter().map(|c| c.trim().to_string()).collect();
        if header.is_none() {
            header = Some((line, cells));
        } else {
            rows.push((line, cells));
        }
    }
    let (hline, header) =
        header.ok_or_else(|| ZsmlError::parse(source_name, 1, "missing header row"))?;
    if header.first().map(String::as_str) != Some("id") {
        return Err(ZsmlError::parse(source_name, hline, "first column must be `id`"));
    }
    for (line, cells) in &rows {
        if cells.len() != header.len() {
            return Err(ZsmlError::parse(
                source_name,
                *line,
                format!("{} fields, header has {}", cells.len(), header.len()),
            ));
        }
    }
    Ok(Table { header, rows })
}

/// Splits header columns into feature and label indices, checking the
/// `f1..fD` then `l_*` layout.
fn column_layout(header: &[String], source_name: &str) -> Result<(usize, Vec<String>)> {
    let mut d = 0;
    let mut vocabulary = Vec::new();
    for (c, name) in header.iter().enumerate().skip(1) {
        if let Some(label) = name.strip_prefix(LABEL_PREFIX) {
            vocabulary.push(label.to_string());
        } else if vocabulary.is_empty() && *name == format!("f{}", d + 1) {
            d += 1;
        } else {
            return Err(ZsmlError::parse(
                source_name,
                1,
                format!("unexpected column `{name}` at position {}", c + 1),
            ));
        }
    }
    if vocabulary.is_empty() {
        return Err(ZsmlError::parse(source_name, 1, "no label columns (`l_<label>`)"));
    }
    check_unique("label", &vocabulary).map_err(|e| ZsmlError::parse(source_name, 1, e.to_string()))?;
    Ok((d, vocabulary))
}

fn parse_f64(cell: &str, source_name: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        ZsmlError::parse(source_name, line, format!("column `{column}`: `{cell}` is not a number"))
    })?;
    if !v.is_finite() {
        return Err(ZsmlError::parse(
            source_name,
            line,
            format!("column `{column}`: non-finite value `{cell}`"),
        ));
    }
    Ok(v)
}

fn parse_bit(cell: &str, source_name: &str, line: usize, column: &str) -> Result<u8> {
    match cell {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(ZsmlError::parse(
            source_name,
            line,
            format!("column `{column}`: label must be 0 or 1, got `{cell}`"),
        )),
    }
}

fn collect_ids(table: &Table, source_name: &str) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut ids = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        let id = cells[0].clone();
        if id.is_empty() {
            return Err(ZsmlError::parse(source_name, *line, "empty instance id"));
        }
        if !seen.insert(id.clone()) {
            return Err(ZsmlError::parse(source_name, *line, format!("duplicate instance id `{id}`")));
        }
        ids.push(id);
    }
    Ok(ids)
}

pub fn parse_dataset<R: Read>(reader: R, source_name: &str) -> Result<Dataset> {
    let table = read_table(reader, source_name)?;
    let (d, vocabulary) = column_layout(&table.header, source_name)?;
    if d == 0 {
        return Err(ZsmlError::parse(source_name, 1, "no feature columns (`f1..fD`)"));
    }
    if table.rows.is_empty() {
        return Err(ZsmlError::parse(source_name, 1, "no instances"));
    }
    let ids = collect_ids(&table, source_name)?;
    let (n, m) = (table.rows.len(), vocabulary.len());
    let mut x = DMatrix::zeros(n, d);
    let mut labels = DMatrix::zeros(n, m);
    for (i, (line, cells)) in table.rows.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = parse_f64(&cells[1 + j], source_name, *line, &table.header[1 + j])?;
        }
        for j in 0..m {
            labels[(i, j)] = parse_bit(&cells[1 + d + j], source_name, *line, &table.header[1 + d + j])?;
        }
    }
    Dataset::new(ids, FeatureMatrix::new(x)?, labels, vocabulary)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ZsmlError::io(path, e))?;
    parse_dataset(file, &path.display().to_string())
}

/// Per-instance label columns read from a dataset, prediction or score file.
/// Feature columns, if any, are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelColumns {
    pub ids: Vec<String>,
    pub vocabulary: Vec<String>,
    pub values: DMatrix<f64>,
}

impl LabelColumns {
    pub fn binary(&self) -> Result<DMatrix<u8>> {
        if let Some(v) = self.values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(ZsmlError::Validation(format!("expected 0/1 labels, found {v}")));
        }
        Ok(self.values.map(|v| v as u8))
    }

    /// Reorders rows to follow `ids`; both files must list the same instances.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        if ids.len() != self.ids.len() {
            return Err(ZsmlError::Shape(format!(
                "{} instances vs {}",
                ids.len(),
                self.ids.len()
            )));
        }
        let order: Vec<usize> = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| ZsmlError::Validation(format!("instance `{id}` missing")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            ids: ids.to_vec(),
            vocabulary: self.vocabulary.clone(),
            values: self.values.select_rows(order.iter()),
        })
    }
}

pub fn parse_label_columns<R: Read>(reader: R, source_name: &str) -> Result<LabelColumns> {
    let table = read_table(reader, source_name)?;
    let (d, vocabulary) = column_layout(&table.header, source_name)?;
    let ids = collect_ids(&table, source_name)?;
    let m = vocabulary.len();
    let mut values = DMatrix::zeros(table.rows.len(), m);
    for (i, (line, cells)) in table.rows.iter().enumerate() {
        for j in 0..m {
            values[(i, j)] = parse_f64(&cells[1 + d + j], source_name, *line, &table.header[1 + d + j])?;
        }
    }
    Ok(LabelColumns {
        ids,
        vocabulary,
        values,
    })
}

pub fn load_label_columns(path: impl AsRef<Path>) -> Result<LabelColumns> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ZsmlError::io(path, e))?;
    parse_label_columns(file, &path.display().to_string())
}

/// Writes `id,l_<label>..` rows, preceded by an optional `# comment` line.
pub fn write_label_columns<W: Write>(
    mut out: W,
    comment: Option<&str>,
    ids: &[String],
    vocabulary: &[String],
    cell: impl Fn(usize, usize) -> String,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(|e| ZsmlError::Validation(format!("write failed: {e}")))?;
    }
    let mut w = csv_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(vocabulary.iter().map(|l| format!("{LABEL_PREFIX}{l}")));
    w.write_record(&header).map_err(csv_error)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..vocabulary.len()).map(|j| cell(i, j)));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(|e| ZsmlError::Validation(format!("write failed: {e}")))
}

pub fn save_label_columns(
    path: impl AsRef<Path>,
    comment: Option<&str>,
    ids: &[String],
    vocabulary: &[String],
    cell: impl Fn(usize, usize) -> String,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ZsmlError::io(path, e))?;
    write_label_columns(BufWriter::new(file), comment, ids, vocabulary, cell)
}
