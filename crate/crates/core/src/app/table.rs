use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Str,
    Int,
    Float,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Cell {
    fn fits(&self, kind: ColumnKind) -> bool {
        match (self, kind) {
            (Cell::Str(_), ColumnKind::Str) | (Cell::Int(_), ColumnKind::Int) => true,
            (Cell::Float(f), ColumnKind::Float) => f.is_finite(),
            _ => false,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => format!("{f:.6}"),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(f: f64) -> Self {
        Cell::Float(f)
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(i: $t) -> Self {
                Cell::Int(i as i64)
            }
        }
    )*};
}
int_cell!(i64, u64, usize, u32);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("table {table}: row {row} has {got} cells, expected {expected}")]
    Width {
        table: String,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("table {table}: row {row}, column {column} is not a valid {kind:?}")]
    Type {
        table: String,
        row: usize,
        column: String,
        kind: ColumnKind,
    },
    #[error("table {0}: duplicate or empty column name")]
    Columns(String),
    #[error("table {table}: {message}")]
    Parse { table: String, message: String },
}

/// A named table with typed columns. Rows are checked on insertion, so a
/// built table is always schema-valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, ColumnKind)]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns
                .iter()
                .map(|(n, k)| Column {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<(), SchemaError> {
        self.check_row(self.rows.len(), &row)?;
        self.rows.push(row);
        Ok(())
    }

    /// Like [`push`](Self::push) for rows built by the pipeline itself,
    /// where a mismatch is a programming error.
    pub(crate) fn row(&mut self, row: Vec<Cell>) {
        if let Err(e) = self.push(row) {
            panic!("{e}");
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn header(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    fn check_row(&self, index: usize, row: &[Cell]) -> Result<(), SchemaError> {
        if row.len() != self.columns.len() {
            return Err(SchemaError::Width {
                table: self.name.clone(),
                row: index,
                got: row.len(),
                expected: self.columns.len(),
            });
        }
        for (cell, column) in row.iter().zip(&self.columns) {
            if !cell.fits(column.kind) {
                return Err(SchemaError::Type {
                    table: self.name.clone(),
                    row: index,
                    column: column.name.clone(),
                    kind: column.kind,
                });
            }
        }
        Ok(())
    }

    /// Checks column names and every row against the declared types.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = std::collections::BTreeSet::new();
        if self.columns.is_empty() || !self.columns.iter().all(|c| !c.name.is_empty() && seen.insert(&c.name)) {
            return Err(SchemaError::Columns(self.name.clone()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            self.check_row(i, row)?;
        }
        Ok(())
    }

    /// Header plus rows, LF line endings, floats with six decimals.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(self.header()).expect("in-memory write");
        for row in &self.rows {
            writer
                .write_record(row.iter().map(Cell::render))
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("table serialises");
        out.push('\n');
        out
    }

    /// Loads a table written by [`to_json`](Self::to_json) and validates it.
    /// Integral values in float columns are accepted as floats.
    pub fn from_json(raw: &str) -> Result<Self, SchemaError> {
        let mut table: Table = serde_json::from_str(raw).map_err(|e| SchemaError::Parse {
            table: "?".into(),
            message: e.to_string(),
        })?;
        let kinds: Vec<ColumnKind> = table.columns.iter().map(|c| c.kind).collect();
        for row in &mut table.rows {
            for (cell, kind) in row.iter_mut().zip(&kinds) {
                if let (Cell::Int(i), ColumnKind::Float) = (&*cell, kind) {
                    *cell = Cell::Float(*i as f64);
                }
            }
        }
        table.validate()?;
        Ok(table)
    }

    /// Parses a CSV written by [`to_csv`](Self::to_csv) against an expected
    /// schema.
    pub fn from_csv(name: &str, columns: &[(&str, ColumnKind)], raw: &str) -> Result<Self, SchemaError> {
        let mut table = Table::new(name, columns);
        let parse_err = |message: String| SchemaError::Parse {
            table: name.to_string(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new().from_reader(raw.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != table.header() {
            return Err(parse_err(format!("header {header:?} does not match {:?}", table.header())));
        }
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let mut row = Vec::with_capacity(columns.len());
            for (value, (column, kind)) in record.iter().zip(columns) {
                let cell = match kind {
                    ColumnKind::Str => Cell::Str(value.to_string()),
                    ColumnKind::Int => Cell::Int(
                        value
                            .parse()
                            .map_err(|_| parse_err(format!("row {i}: {column} is not an integer")))?,
                    ),
                    ColumnKind::Float => Cell::Float(
                        value
                            .parse()
                            .map_err(|_| parse_err(format!("row {i}: {column} is not a number")))?,
                    ),
                };
                row.push(cell);
            }
            table.push(row)?;
        }
        Ok(table)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} rows)", self.name, self.rows.len())
    }
}
