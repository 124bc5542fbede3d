//! Pre-trained embedding tables: loading, unit normalization, and
//! composite-symbol embedding lookup.
//!
//! The text format is one `name v1 v2 ... vk` line per vector, with an
//! optional leading `count dim` header line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    normalized: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl EmbeddingTable {
    pub fn from_vectors(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = match vectors.values().next() {
            Some(v) => v.len(),
            None => return Err(Error::Format("no vectors".into())),
        };
        if vectors.values().any(|v| v.len() != dim) {
            return Err(Error::Format("inconsistent vector dimensions".into()));
        }
        Ok(EmbeddingTable {
            dim,
            vectors,
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.vectors.get(name).map(Vec::as_slice)
    }

    /// Scales every vector to unit Euclidean norm. On the unit sphere the
    /// maximum pairwise distance is 2, which the fidelity score relies on.
    pub fn normalize(mut self) -> Result<Self> {
        let mut names: Vec<&String> = self.vectors.keys().collect();
        names.sort();
        for name in &names {
            let n = norm(&self.vectors[*name]);
            if n == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "zero vector for concept `{name}` cannot be normalized"
                )));
            }
        }
        for v in self.vectors.values_mut() {
            let n = norm(v);
            for x in v.iter_mut() {
                *x /= n;
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Embedding for a symbol name. A name missing from the table falls back
    /// to the mean of its `joiner`-separated constituent tokens that are
    /// present; `None` if nothing resolves.
    pub fn symbol_embedding(&self, name: &str, joiner: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.vectors.get(name) {
            return Some(v.clone());
        }
        if joiner.is_empty() {
            return None;
        }
        let mut sum = vec![0.0; self.dim];
        let mut count = 0usize;
        for tok in name.split(joiner) {
            if let Some(v) = self.vectors.get(tok) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        for s in sum.iter_mut() {
            *s /= count as f64;
        }
        Some(sum)
    }
}

/// Loads a table from the text format. Duplicate names keep the last
/// occurrence; the number of overwritten duplicates is returned alongside.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(EmbeddingTable, usize)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_embeddings(&text, &path.display().to_string())
}

pub fn parse_embeddings(text: &str, origin: &str) -> Result<(EmbeddingTable, usize)> {
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut duplicates = 0usize;
    let mut first_data_line = true;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let name = toks.next().expect("non-empty line");
        let rest: Vec<&str> = toks.collect();
        // optional `count dim` header: exactly two integer tokens on the
        // first data line
        if first_data_line && rest.len() == 1 {
            if let (Ok(_), Ok(_)) = (name.parse::<usize>(), rest[0].parse::<usize>()) {
                first_data_line = false;
                continue;
            }
        }
        first_data_line = false;
        if rest.is_empty() {
            return Err(Error::parse(origin, lineno, "vector has no components"));
        }
        let mut v = Vec::with_capacity(rest.len());
        for tok in &rest {
            let x: f64 = tok.parse().map_err(|_| {
                Error::parse(origin, lineno, format!("non-numeric component `{tok}`"))
            })?;
            v.push(x);
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("dimension {} differs from {}", v.len(), d),
                ));
            }
            _ => {}
        }
        if vectors.insert(name.to_string(), v).is_some() {
            duplicates += 1;
        }
    }
    let table = EmbeddingTable::from_vectors(vectors)?;
    Ok((table, duplicates))
}
