//! Conditional probability tables p(b|x,y) and their CSV/JSON serialization.

use crate::scenario::PamScenario;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io;
use thiserror::Error;

/// Tolerance for the per-setting normalization sum of analytically built
/// tables. Empirically estimated tables are count ratios and sit far inside
/// this bound by construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("table shape ({n_x}, {n_y}) does not match scenario ({want_x}, {want_y})")]
    Shape {
        n_x: usize,
        n_y: usize,
        want_x: usize,
        want_y: usize,
    },
    #[error("entries must cover b in {{0,1}}, x in 0..{n_x}, y in 0..{n_y}: got {got} values")]
    EntryCount { n_x: usize, n_y: usize, got: usize },
    #[error("p({b}|{x},{y}) = {value} outside [0,1]")]
    Range { b: usize, x: usize, y: usize, value: f64 },
    #[error("column (x={x}, y={y}) sums to {sum}, not 1 within {NORMALIZATION_TOL:e}")]
    Normalization { x: usize, y: usize, sum: f64 },
    #[error("mixture weights and table shapes must agree: {0}")]
    BadMixture(String),
    #[error("duplicate entry for (x={x}, y={y})")]
    DuplicateEntry { x: usize, y: usize },
    #[error("missing entry for (x={x}, y={y})")]
    MissingEntry { x: usize, y: usize },
    #[error("malformed key {0:?}, expected \"x,y\"")]
    BadKey(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    x: usize,
    y: usize,
    p0: f64,
    p1: f64,
}

/// Conditional distribution p(b|x,y) with binary outcome b.
///
/// Entries are stored exactly as provided; `validate` only reads them, so a
/// validated table is bit-identical to its input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    n_x: usize,
    n_y: usize,
    /// Flattened as ((b * n_x) + x) * n_y + y.
    p: Vec<f64>,
}

impl ProbabilityTable {
    /// Build from the b=0 entries; p(1|x,y) is the exact complement.
    pub fn from_p0(n_x: usize, n_y: usize, mut p0: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = vec![0.0; 2 * n_x * n_y];
        for x in 0..n_x {
            for y in 0..n_y {
                let v = p0(x, y);
                p[(x * n_y) + y] = v;
                p[(n_x + x) * n_y + y] = 1.0 - v;
            }
        }
        Self { n_x, n_y, p }
    }

    /// Build from raw entries laid out as ((b * n_x) + x) * n_y + y.
    pub fn from_entries(n_x: usize, n_y: usize, entries: Vec<f64>) -> Result<Self, TableError> {
        if entries.len() != 2 * n_x * n_y {
            return Err(TableError::EntryCount { n_x, n_y, got: entries.len() });
        }
        Ok(Self { n_x, n_y, p: entries })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    fn index(&self, b: usize, x: usize, y: usize) -> usize {
        assert!(b < 2 && x < self.n_x && y < self.n_y, "index (b={b}, x={x}, y={y}) out of range");
        (b * self.n_x + x) * self.n_y + y
    }

    /// p(b|x,y). Panics if an index is out of range.
    pub fn get(&self, b: usize, x: usize, y: usize) -> f64 {
        self.p[self.index(b, x, y)]
    }

    /// p(0|x,y). Panics if an index is out of range.
    pub fn p0(&self, x: usize, y: usize) -> f64 {
        self.get(0, x, y)
    }

    /// Expectation <B_xy> = p(0|x,y) - p(1|x,y), in [-1, 1] for a valid table.
    ///
    /// Panics if an index is out of range.
    pub fn expectation(&self, x: usize, y: usize) -> f64 {
        self.get(0, x, y) - self.get(1, x, y)
    }

    /// Check shape, entry range, and per-setting normalization.
    pub fn validate(&self, scenario: &PamScenario) -> Result<(), TableError> {
        if self.n_x != scenario.n_x() || self.n_y != scenario.n_y() {
            return Err(TableError::Shape {
                n_x: self.n_x,
                n_y: self.n_y,
                want_x: scenario.n_x(),
                want_y: scenario.n_y(),
            });
        }
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                for b in 0..2 {
                    let value = self.get(b, x, y);
                    if !(0.0..=1.0).contains(&value) {
                        return Err(TableError::Range { b, x, y, value });
                    }
                }
                let sum = self.get(0, x, y) + self.get(1, x, y);
                if (sum - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(TableError::Normalization { x, y, sum });
                }
            }
        }
        Ok(())
    }

    /// Convex mixture of tables of identical shape.
    pub fn mix(components: &[(f64, &ProbabilityTable)]) -> Result<ProbabilityTable, TableError> {
        let (_, first) = components
            .first()
            .ok_or_else(|| TableError::BadMixture("empty mixture".into()))?;
        let (n_x, n_y) = (first.n_x, first.n_y);
        let mut p = vec![0.0; 2 * n_x * n_y];
        for (weight, table) in components {
            if table.n_x != n_x || table.n_y != n_y {
                return Err(TableError::BadMixture(format!(
                    "component shape ({}, {}) != ({n_x}, {n_y})",
                    table.n_x, table.n_y
                )));
            }
            if !(0.0..=1.0).contains(weight) {
                return Err(TableError::BadMixture(format!("weight {weight} outside [0,1]")));
            }
            for (acc, value) in p.iter_mut().zip(table.p.iter()) {
                *acc += weight * value;
            }
        }
        Ok(ProbabilityTable { n_x, n_y, p })
    }

    /// CSV with header `x,y,p0,p1`, rows in (x, y) lexicographic order.
    /// Floats use the shortest round-trip form, so re-reading is lossless.
    pub fn to_csv_string(&self) -> Result<String, TableError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                writer.serialize(TableRow {
                    x,
                    y,
                    p0: self.get(0, x, y),
                    p1: self.get(1, x, y),
                })?;
            }
        }
        let bytes = writer.into_inner().map_err(|e| TableError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parse the CSV form. Rows may come in any order but must cover every
    /// setting exactly once.
    pub fn from_csv_str(text: &str) -> Result<Self, TableError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut cells: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for row in reader.deserialize() {
            let row: TableRow = row?;
            if cells.insert((row.x, row.y), (row.p0, row.p1)).is_some() {
                return Err(TableError::DuplicateEntry { x: row.x, y: row.y });
            }
        }
        Self::from_cells(cells)
    }

    /// JSON object keyed `"x,y"` mapping to `[p0, p1]`.
    pub fn to_json_string(&self) -> Result<String, TableError> {
        let mut map = BTreeMap::new();
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                map.insert(format!("{x},{y}"), [self.get(0, x, y), self.get(1, x, y)]);
            }
        }
        Ok(serde_json::to_string(&map)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self, TableError> {
        let map: BTreeMap<String, [f64; 2]> = serde_json::from_str(text)?;
        let mut cells: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for (key, [p0, p1]) in map {
            let (x, y) = key
                .split_once(',')
                .and_then(|(x, y)| Some((x.trim().parse().ok()?, y.trim().parse().ok()?)))
                .ok_or_else(|| TableError::BadKey(key.clone()))?;
            if cells.insert((x, y), (p0, p1)).is_some() {
                return Err(TableError::DuplicateEntry { x, y });
            }
        }
        Self::from_cells(cells)
    }

    fn from_cells(cells: BTreeMap<(usize, usize), (f64, f64)>) -> Result<Self, TableError> {
        let n_x = cells.keys().map(|&(x, _)| x + 1).max().unwrap_or(0);
        let n_y = cells.keys().map(|&(_, y)| y + 1).max().unwrap_or(0);
        if n_x == 0 || n_y == 0 {
            return Err(TableError::EntryCount { n_x, n_y, got: 0 });
        }
        let mut p = vec![0.0; 2 * n_x * n_y];
        for x in 0..n_x {
            for y in 0..n_y {
                let &(p0, p1) = cells
                    .get(&(x, y))
                    .ok_or(TableError::MissingEntry { x, y })?;
                p[(x * n_y) + y] = p0;
                p[(n_x + x) * n_y + y] = p1;
            }
        }
        Ok(Self { n_x, n_y, p })
    }
}
