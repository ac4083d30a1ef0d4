//! The semantic word space: label embeddings, distances, and compositional
//! synthesis of label-combination prototypes.
//!
//! A label combination is represented in the word space by the sum of its
//! members' vectors. Enumerating every nonempty subset of a target vocabulary
//! gives the prototype set used by the nearest-prototype and propagation
//! predictors.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsmlError};

/// Default word-vector dimensionality.
pub const DEFAULT_DIM: usize = 100;

/// Largest target vocabulary for which the full power set is materialized.
pub const DEFAULT_POWER_SET_CAP: usize = 20;

/// Distance used for neighbor search in the word space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Cosine,
    Euclidean,
}

impl Distance {
    /// Distance between two vectors. Cosine rejects zero vectors.
    pub fn between(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Distance::Cosine => cosine_distance(a, b),
            Distance::Euclidean => euclidean_distance(a, b),
        }
    }
}

/// `1 - a.b / (|a| |b|)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ZsmlError::Shape(format!(
            "cosine distance between vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa == 0.0 || bb == 0.0 {
        return Err(ZsmlError::Domain(
            "cosine distance is undefined for a zero vector".into(),
        ));
    }
    Ok(cosine_from_parts(dot(a, b), aa, bb))
}

/// Cosine distance from a dot product and the two squared norms.
#[inline]
pub(crate) fn cosine_from_parts(ab: f64, aa: f64, bb: f64) -> f64 {
    let d = 1.0 - ab / (aa * bb).sqrt();
    d.clamp(0.0, 2.0)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ZsmlError::Shape(format!(
            "euclidean distance between vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Copies the rows of a column-major matrix into contiguous vectors.
pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Label vectors keyed by label string, in a fixed label order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    /// Row-major, `labels.len() * dim`.
    values: Vec<f64>,
}

impl EmbeddingTable {
    /// Validates and builds a table. Every vector must have `dim` finite,
    /// not-all-zero components and labels must be unique.
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(ZsmlError::Validation(
                "embedding dimension must be positive".into(),
            ));
        }
        let mut labels = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len() * dim);
        for (label, vector) in entries {
            if vector.len() != dim {
                return Err(ZsmlError::Shape(format!(
                    "embedding for `{label}` has {} components, expected {dim}",
                    vector.len()
                )));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(ZsmlError::Validation(format!(
                    "embedding for `{label}` has a non-finite component"
                )));
            }
            if vector.iter().all(|&v| v == 0.0) {
                return Err(ZsmlError::Validation(format!(
                    "embedding for `{label}` is the zero vector"
                )));
            }
            if index.insert(label.clone(), labels.len()).is_some() {
                return Err(ZsmlError::Validation(format!(
                    "duplicate embedding label `{label}`"
                )));
            }
            labels.push(label);
            values.extend_from_slice(&vector);
        }
        Ok(Self {
            dim,
            labels,
            index,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.index
            .get(label)
            .map(|&i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    /// Returns the table restricted to `vocabulary`, in vocabulary order.
    pub fn restrict(&self, vocabulary: &[String]) -> Result<Self> {
        let entries = vocabulary
            .iter()
            .map(|l| {
                self.get(l)
                    .map(|v| (l.clone(), v.to_vec()))
                    .ok_or_else(|| ZsmlError::MissingLabel(l.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.dim, entries)
    }

    /// Stacks the embeddings of `vocabulary` as rows of an `m x dim` matrix.
    pub fn matrix(&self, vocabulary: &[String]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(vocabulary.len(), self.dim);
        for (i, label) in vocabulary.iter().enumerate() {
            let v = self
                .get(label)
                .ok_or_else(|| ZsmlError::MissingLabel(label.clone()))?;
            for (j, x) in v.iter().enumerate() {
                m[(i, j)] = *x;
            }
        }
        Ok(m)
    }

    /// Writes the table in the `<count> <dim>` text layout.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, label) in self.labels.iter().enumerate() {
            write!(out, "{label}")?;
            for x in &self.values[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| ZsmlError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| ZsmlError::io(path, e))?;
        w.flush().map_err(|e| ZsmlError::io(path, e))
    }
}

/// Reads an embedding file and keeps only the labels in `vocabulary`.
pub fn load_embeddings(path: impl AsRef<Path>, vocabulary: &[String]) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ZsmlError::io(path, e))?;
    parse_embeddings(
        BufReader::new(file),
        vocabulary,
        &path.display().to_string(),
    )
}

/// Parses the `<count> <dim>` header followed by `<label> <f1> .. <fdim>` lines.
pub fn parse_embeddings<R: BufRead>(
    reader: R,
    vocabulary: &[String],
    source_name: &str,
) -> Result<EmbeddingTable> {
    let all = parse_all_embeddings(reader, source_name)?;
    all.restrict(vocabulary)
}

/// Parses every entry; zero vectors are only rejected if they are requested.
fn parse_all_embeddings<R: BufRead>(reader: R, source_name: &str) -> Result<RawTable> {
    let mut lines = reader.lines().enumerate();
    let (count, dim) = loop {
        let Some((no, line)) = lines.next() else {
            return Err(ZsmlError::parse(source_name, 1, "missing `<count> <dim>` header"));
        };
        let line = line.map_err(|e| ZsmlError::parse(source_name, no + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let count = parts.next().and_then(|s| s.parse::<usize>().ok());
        let dim = parts.next().and_then(|s| s.parse::<usize>().ok());
        match (count, dim, parts.next()) {
            (Some(c), Some(d), None) if d > 0 => break (c, d),
            _ => {
                return Err(ZsmlError::parse(
                    source_name,
                    no + 1,
                    format!("expected `<count> <dim>` header, found `{line}`"),
                ))
            }
        }
    };

    let mut raw = RawTable {
        dim,
        labels: Vec::with_capacity(count),
        index: HashMap::with_capacity(count),
        values: Vec::with_capacity(count * dim),
    };
    for (no, line) in lines {
        let line_no = no + 1;
        let line = line.map_err(|e| ZsmlError::parse(source_name, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let label = parts.next().unwrap_or_default().to_string();
        let start = raw.values.len();
        for tok in parts {
            let v: f64 = tok.parse().map_err(|_| {
                ZsmlError::parse(source_name, line_no, format!("invalid number `{tok}`"))
            })?;
            if !v.is_finite() {
                return Err(ZsmlError::parse(source_name, line_no, "non-finite component"));
            }
            raw.values.push(v);
        }
        let got = raw.values.len() - start;
        if got != dim {
            return Err(ZsmlError::parse(
                source_name,
                line_no,
                format!("label `{label}` has {got} components, header declares {dim}"),
            ));
        }
        if raw.index.insert(label.clone(), raw.labels.len()).is_some() {
            return Err(ZsmlError::parse(
                source_name,
                line_no,
                format!("duplicate label `{label}`"),
            ));
        }
        raw.labels.push(label);
    }
    if raw.labels.len() != count {
        return Err(ZsmlError::parse(
            source_name,
            1,
            format!("header declares {count} entries, file has {}", raw.labels.len()),
        ));
    }
    Ok(raw)
}

struct RawTable {
    dim: usize,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

impl RawTable {
    fn restrict(&self, vocabulary: &[String]) -> Result<EmbeddingTable> {
        let entries = vocabulary
            .iter()
            .map(|l| match self.index.get(l) {
                Some(&i) => Ok((l.clone(), self.values[i * self.dim..(i + 1) * self.dim].to_vec())),
                None => Err(ZsmlError::MissingLabel(l.clone())),
            })
            .collect::<Result<Vec<_>>>()?;
        EmbeddingTable::new(self.dim, entries)
    }
}

/// A set of label indices into a fixed vocabulary, kept strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet {
    members: Vec<usize>,
}

impl LabelSet {
    /// Accepts strictly increasing indices below `vocab_size`.
    pub fn new(members: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ZsmlError::Validation(format!(
                "label set {members:?} is not strictly increasing"
            )));
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= vocab_size) {
            return Err(ZsmlError::Validation(format!(
                "label index {bad} out of range for a vocabulary of {vocab_size}"
            )));
        }
        Ok(Self { members })
    }

    /// Sorts and validates an arbitrary ordering; duplicates are rejected.
    pub fn from_unordered(mut members: Vec<usize>, vocab_size: usize) -> Result<Self> {
        members.sort_unstable();
        Self::new(members, vocab_size)
    }

    pub fn from_mask(mask: u64) -> Self {
        let members = (0..64).filter(|b| mask >> b & 1 == 1).collect();
        Self { members }
    }

    pub fn mask(&self) -> u64 {
        self.members.iter().fold(0u64, |m, &i| m | 1 << i)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Sum of the embeddings of the labels in `subset`.
pub fn synthesize_prototype(
    table: &EmbeddingTable,
    vocabulary: &[String],
    subset: &LabelSet,
) -> Result<Vec<f64>> {
    if subset.is_empty() {
        return Err(ZsmlError::Domain(
            "the empty label set has no prototype".into(),
        ));
    }
    let mut out = vec![0.0; table.dim()];
    for &i in subset.members() {
        let label = vocabulary.get(i).ok_or_else(|| {
            ZsmlError::Validation(format!(
                "label index {i} out of range for a vocabulary of {}",
                vocabulary.len()
            ))
        })?;
        let v = table
            .get(label)
            .ok_or_else(|| ZsmlError::MissingLabel(label.clone()))?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    Ok(out)
}

/// One synthesized vector per nonempty subset of a target vocabulary.
///
/// Rows are ordered by ascending label bitmask: row `j` holds subset `j + 1`,
/// where bit `b` of the mask selects `vocabulary[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    vocabulary: Vec<String>,
    masks: Vec<u64>,
    prototypes: DMatrix<f64>,
    label_matrix: DMatrix<u8>,
    refined: bool,
}

impl PrototypeSet {
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.ncols()
    }

    /// `len() x dim` prototype vectors.
    pub fn prototypes(&self) -> &DMatrix<f64> {
        &self.prototypes
    }

    /// `len() x m_T` binary label matrix.
    pub fn label_matrix(&self) -> &DMatrix<u8> {
        &self.label_matrix
    }

    pub fn mask(&self, row: usize) -> u64 {
        self.masks[row]
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    pub fn label_set(&self, row: usize) -> LabelSet {
        LabelSet::from_mask(self.masks[row])
    }

    pub fn cardinality(&self, row: usize) -> u32 {
        self.masks[row].count_ones()
    }

    /// True once the rows have been moved by self-training and no longer
    /// equal the plain label sums.
    pub fn is_refined(&self) -> bool {
        self.refined
    }

    pub(crate) fn with_refined_rows(&self, prototypes: DMatrix<f64>) -> Self {
        Self {
            vocabulary: self.vocabulary.clone(),
            masks: self.masks.clone(),
            prototypes,
            label_matrix: self.label_matrix.clone(),
            refined: true,
        }
    }
}

/// Builds the full power-set prototype matrix with the default cap.
pub fn build_power_set(table: &EmbeddingTable, vocabulary: &[String]) -> Result<PrototypeSet> {
    build_power_set_with_cap(table, vocabulary, DEFAULT_POWER_SET_CAP)
}

pub fn build_power_set_with_cap(
    table: &EmbeddingTable,
    vocabulary: &[String],
    cap: usize,
) -> Result<PrototypeSet> {
    let m = vocabulary.len();
    if m == 0 {
        return Err(ZsmlError::Validation(
            "power set needs at least one label".into(),
        ));
    }
    if m > cap || m >= 64 {
        return Err(ZsmlError::PowerSetCap {
            labels: m,
            cap: cap.min(63),
        });
    }
    let dim = table.dim();
    let embeddings = vocabulary
        .iter()
        .map(|l| table.get(l).ok_or_else(|| ZsmlError::MissingLabel(l.clone())))
        .collect::<Result<Vec<_>>>()?;
    let max_norm = embeddings
        .iter()
        .map(|v| dot(v, v).sqrt())
        .fold(0.0f64, f64::max);

    let rows = (1usize << m) - 1;
    // sums[mask] for mask in 0..2^m, built from mask with its lowest bit cleared.
    let mut sums = vec![0.0f64; (rows + 1) * dim];
    let mut prototypes = DMatrix::<f64>::zeros(rows, dim);
    let mut label_matrix = DMatrix::<u8>::zeros(rows, m);
    let mut masks = Vec::with_capacity(rows);
    for mask in 1..=rows {
        let low = mask.trailing_zeros() as usize;
        let prev = mask & (mask - 1);
        let (head, tail) = sums.split_at_mut(mask * dim);
        let dst = &mut tail[..dim];
        dst.copy_from_slice(&head[prev * dim..prev * dim + dim]);
        for (d, x) in dst.iter_mut().zip(embeddings[low]) {
            *d += x;
        }
        let norm = dot(dst, dst).sqrt();
        if norm <= 1e-12 * max_norm {
            let names: Vec<&str> = LabelSet::from_mask(mask as u64)
                .members()
                .iter()
                .map(|&i| vocabulary[i].as_str())
                .collect();
            return Err(ZsmlError::Domain(format!(
                "prototype for label subset {names:?} is the zero vector"
            )));
        }
        let row = mask - 1;
        for (j, x) in dst.iter().enumerate() {
            prototypes[(row, j)] = *x;
        }
        for b in 0..m {
            label_matrix[(row, b)] = (mask >> b & 1) as u8;
        }
        masks.push(mask as u64);
    }
    Ok(PrototypeSet {
        vocabulary: vocabulary.to_vec(),
        masks,
        prototypes,
        label_matrix,
        refined: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        let dim = entries[0].1.len();
        EmbeddingTable::new(
            dim,
            entries
                .iter()
                .map(|(l, v)| (l.to_string(), v.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_restricts_to_vocabulary() {
        let text = "3 4\na 1 0 0 0\nb 0 1 0 0\nc 0 0 1 0.5\n";
        let t = parse_embeddings(text.as_bytes(), &names(&["c", "a"]), "mem").unwrap();
        assert_eq!(t.dim(), 4);
        assert_eq!(t.len(), 2);
        assert_eq!(t.labels(), &names(&["c", "a"])[..]);
        assert_eq!(t.get("c").unwrap(), &[0.0, 0.0, 1.0, 0.5]);
        assert!(t.get("b").is_none());
    }

    #[test]
    fn load_reports_missing_label() {
        let text = "1 2\na 1 0\n";
        let err = parse_embeddings(text.as_bytes(), &names(&["a", "zebra"]), "mem").unwrap_err();
        assert!(matches!(&err, ZsmlError::MissingLabel(l) if l == "zebra"));
        assert!(err.to_string().contains("zebra"));
    }

    #[test]
    fn load_reports_short_line_number() {
        let mut text = String::from("2 100\n");
        text.push('a');
        for _ in 0..100 {
            text.push_str(" 1");
        }
        text.push_str("\nb");
        for _ in 0..99 {
            text.push_str(" 1");
        }
        text.push('\n');
        let err = parse_embeddings(text.as_bytes(), &names(&["a"]), "emb.txt").unwrap_err();
        match err {
            ZsmlError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("99"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_zero_vector_and_bad_numbers() {
        let err = parse_embeddings("1 2\na 0 0\n".as_bytes(), &names(&["a"]), "m").unwrap_err();
        assert!(matches!(err, ZsmlError::Validation(_)));
        let err = parse_embeddings("1 2\na 0 x\n".as_bytes(), &names(&["a"]), "m").unwrap_err();
        assert!(matches!(err, ZsmlError::Parse { line: 2, .. }));
        let err = parse_embeddings("2 2\na 0 1\n".as_bytes(), &names(&["a"]), "m").unwrap_err();
        assert!(matches!(err, ZsmlError::Parse { .. }));
        let err = parse_embeddings("2 2\na 0 1\na 1 1\n".as_bytes(), &names(&["a"]), "m")
            .unwrap_err();
        assert!(matches!(err, ZsmlError::Parse { line: 3, .. }));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let t = table(&[("x", &[0.1, -2.5e-7, 3.0]), ("y", &[1.0 / 3.0, 2.0, -1.0])]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = parse_embeddings(&buf[..], t.labels(), "mem").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[2.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let d = cosine_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!((d - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
            Err(ZsmlError::Domain(_))
        ));
        assert!(matches!(
            cosine_distance(&[1.0], &[1.0, 0.0]),
            Err(ZsmlError::Shape(_))
        ));
    }

    #[test]
    fn synthesize_examples() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let vocab = names(&["a", "b"]);
        let both = LabelSet::new(vec![0, 1], 2).unwrap();
        assert_eq!(synthesize_prototype(&t, &vocab, &both).unwrap(), vec![1.0, 1.0]);
        let single = LabelSet::new(vec![0], 2).unwrap();
        assert_eq!(synthesize_prototype(&t, &vocab, &single).unwrap(), vec![1.0, 0.0]);

        let t = table(&[("a", &[1.0, 2.0]), ("b", &[3.0, -1.0]), ("c", &[0.0, 1.0])]);
        let vocab = names(&["a", "b", "c"]);
        let all = LabelSet::new(vec![0, 1, 2], 3).unwrap();
        assert_eq!(synthesize_prototype(&t, &vocab, &all).unwrap(), vec![4.0, 2.0]);
    }

    #[test]
    fn synthesize_rejects_empty_and_unknown() {
        let t = table(&[("a", &[1.0, 0.0])]);
        let empty = LabelSet::new(vec![], 1).unwrap();
        assert!(matches!(
            synthesize_prototype(&t, &names(&["a"]), &empty),
            Err(ZsmlError::Domain(_))
        ));
        let s = LabelSet::new(vec![0], 1).unwrap();
        assert!(matches!(
            synthesize_prototype(&t, &names(&["nope"]), &s),
            Err(ZsmlError::MissingLabel(_))
        ));
    }

    #[test]
    fn label_set_validation() {
        assert!(LabelSet::new(vec![1, 1], 3).is_err());
        assert!(LabelSet::new(vec![2, 1], 3).is_err());
        assert!(LabelSet::new(vec![0, 3], 3).is_err());
        assert!(LabelSet::from_unordered(vec![2, 0, 2], 3).is_err());
        let s = LabelSet::from_unordered(vec![2, 0], 3).unwrap();
        assert_eq!(s.members(), &[0, 2]);
        assert_eq!(s.mask(), 0b101);
        assert_eq!(LabelSet::from_mask(0b101), s);
    }

    #[test]
    fn power_set_counts_and_order() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])]);
        let p = build_power_set(&t, &names(&["a", "b", "c"])).unwrap();
        assert_eq!(p.len(), 7);
        assert_eq!(p.masks(), &[1, 2, 3, 4, 5, 6, 7]);

        let p = build_power_set(&t, &names(&["a", "b"])).unwrap();
        let rows = rows_of(p.prototypes());
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(p.label_matrix().row(2).iter().copied().collect::<Vec<_>>(), vec![1, 1]);
        assert!(!p.is_refined());
    }

    #[test]
    fn natural_scene_vocabulary_has_31_prototypes() {
        let labels = ["desert", "mountains", "sea", "sunset", "trees"];
        let entries: Vec<(String, Vec<f64>)> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut v = vec![0.0; 5];
                v[i] = 1.0;
                (l.to_string(), v)
            })
            .collect();
        let t = EmbeddingTable::new(5, entries).unwrap();
        let p = build_power_set(&t, &names(&labels)).unwrap();
        assert_eq!(p.len(), 31);
    }

    #[test]
    fn power_set_rejects_cap_and_cancellation() {
        let entries: Vec<(String, Vec<f64>)> =
            (0..21).map(|i| (format!("l{i}"), vec![1.0, i as f64])).collect();
        let vocab: Vec<String> = entries.iter().map(|e| e.0.clone()).collect();
        let t = EmbeddingTable::new(2, entries).unwrap();
        let err = build_power_set(&t, &vocab).unwrap_err();
        assert!(matches!(err, ZsmlError::PowerSetCap { labels: 21, cap: 20 }));

        let t = table(&[("a", &[1.0, 2.0]), ("b", &[-1.0, -2.0])]);
        let err = build_power_set(&t, &names(&["a", "b"])).unwrap_err();
        assert!(err.to_string().contains("\"a\", \"b\""), "{err}");
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_scale_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 4),
            b in prop::collection::vec(-5.0f64..5.0, 4),
            s in 0.01f64..100.0,
        ) {
            prop_assume!(dot(&a, &a) > 1e-6 && dot(&b, &b) > 1e-6);
            let d = cosine_distance(&a, &b).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
            prop_assert!((d - cosine_distance(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((d - cosine_distance(&scaled, &b).unwrap()).abs() < 1e-12);
            prop_assert!(cosine_distance(&a, &scaled).unwrap() < 1e-12);
        }

        #[test]
        fn power_set_rows_are_label_sums(
            m in 1usize..7,
            seed_vals in prop::collection::vec(0.1f64..3.0, 7 * 3),
        ) {
            let entries: Vec<(String, Vec<f64>)> = (0..m)
                .map(|i| (format!("l{i}"), seed_vals[i * 3..i * 3 + 3].to_vec()))
                .collect();
            let vocab: Vec<String> = entries.iter().map(|e| e.0.clone()).collect();
            let t = EmbeddingTable::new(3, entries).unwrap();
            let p = build_power_set(&t, &vocab).unwrap();
            prop_assert_eq!(p.len(), (1 << m) - 1);
            for j in 0..p.len() {
                let members: Vec<usize> = (0..m).filter(|&b| p.label_matrix()[(j, b)] == 1).collect();
                let set = LabelSet::new(members, m).unwrap();
                prop_assert_eq!(set.mask(), p.mask(j));
                let direct = synthesize_prototype(&t, &vocab, &set).unwrap();
                for (c, x) in direct.iter().enumerate() {
                    prop_assert!((p.prototypes()[(j, c)] - x).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn synthesis_is_order_independent(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
            let t = table(&[("a", &[0.1, 0.7]), ("b", &[0.3, -0.2]), ("c", &[1e-3, 5.0]), ("d", &[-2.0, 0.25])]);
            let vocab = names(&["a", "b", "c", "d"]);
            let canonical = synthesize_prototype(&t, &vocab, &LabelSet::new(vec![0, 1, 2, 3], 4).unwrap()).unwrap();
            let shuffled = synthesize_prototype(&t, &vocab, &LabelSet::from_unordered(perm, 4).unwrap()).unwrap();
            prop_assert_eq!(canonical, shuffled);
        }
    }
}
