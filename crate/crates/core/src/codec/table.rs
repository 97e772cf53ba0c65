use std::io::Write;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Continuous,
    Discrete,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Discrete => "discrete",
        }
    }
}

/// Column storage. Missing continuous cells are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Discrete(Vec<String>),
}

impl Column {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Continuous(_) => ColumnKind::Continuous,
            Column::Discrete(_) => ColumnKind::Discrete,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Discrete(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(idx.iter().map(|&i| v[i]).collect()),
            Column::Discrete(v) => Column::Discrete(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Column::Continuous(v) if v[row].is_nan() => String::new(),
            Column::Continuous(v) => v[row].to_string(),
            Column::Discrete(v) => v[row].clone(),
        }
    }
}

/// A column-major mixed-type table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Column>,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::data("column name count differs from column count"));
        }
        let n = columns.first().map_or(0, Column::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::data("columns have different lengths"));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::data(format!("duplicate column {name}")));
            }
        }
        Ok(Self { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.index_of(name).map(|i| &self.columns[i])
    }

    pub fn discrete(&self, name: &str) -> Result<&[String]> {
        match self.column(name) {
            Some(Column::Discrete(v)) => Ok(v),
            Some(_) => Err(Error::data(format!("column {name} is not discrete"))),
            None => Err(Error::data(format!("no column named {name}"))),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Table {
        Table {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(idx)).collect(),
        }
    }

    /// Appends the rows of `other`, which must have the same layout.
    pub fn append(&mut self, other: &Table) -> Result<()> {
        if self.names != other.names {
            return Err(Error::data("cannot append tables with different columns"));
        }
        for (a, b) in self.columns.iter_mut().zip(&other.columns) {
            match (a, b) {
                (Column::Continuous(a), Column::Continuous(b)) => a.extend_from_slice(b),
                (Column::Discrete(a), Column::Discrete(b)) => a.extend(b.iter().cloned()),
                _ => return Err(Error::data("column kinds differ")),
            }
        }
        Ok(())
    }

    /// An empty table with the same layout.
    pub fn empty_like(&self) -> Table {
        self.select_rows(&[])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.names)?;
        for r in 0..self.n_rows() {
            wr.write_record(self.columns.iter().map(|c| c.cell(r)))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::data(e.to_string()))
    }
}
