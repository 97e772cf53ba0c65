use std::fmt::Write as _;

use super::gmm::{fit_modes, GmmConfig, Mode};
use super::table::{Column, ColumnKind, Table};
use crate::error::{Error, Result};

/// Clip range of the scalar offset is `[-1, 1]`, i.e. four standard
/// deviations on either side of the mode mean.
pub const ALPHA_SCALE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnMeta {
    Continuous {
        name: String,
        modes: Vec<Mode>,
        /// Imputation value for missing cells.
        median: f64,
    },
    Discrete {
        name: String,
        categories: Vec<String>,
        counts: Vec<u64>,
    },
}

impl ColumnMeta {
    pub fn name(&self) -> &str {
        match self {
            ColumnMeta::Continuous { name, .. } | ColumnMeta::Discrete { name, .. } => name,
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnMeta::Continuous { .. } => ColumnKind::Continuous,
            ColumnMeta::Discrete { .. } => ColumnKind::Discrete,
        }
    }

    /// 1 + mode count for continuous columns, category count otherwise.
    pub fn encoded_width(&self) -> usize {
        match self {
            ColumnMeta::Continuous { modes, .. } => 1 + modes.len(),
            ColumnMeta::Discrete { categories, .. } => categories.len(),
        }
    }

    /// Category frequencies in the fitted table.
    pub fn frequencies(&self) -> Option<Vec<f64>> {
        match self {
            ColumnMeta::Discrete { counts, .. } => {
                let total: u64 = counts.iter().sum();
                Some(counts.iter().map(|&c| c as f64 / total as f64).collect())
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanRole {
    Alpha,
    ModeOneHot,
    CategoryOneHot,
}

/// A contiguous slice of an encoded row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Span {
    pub column: usize,
    pub offset: usize,
    pub width: usize,
    pub role: SpanRole,
}

/// Where a discrete column's one-hot block sits inside the conditional vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CondSlot {
    pub column: usize,
    pub offset: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableSchema {
    columns: Vec<ColumnMeta>,
    target: usize,
}

/// Non-fatal findings while fitting a schema.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub fallback_columns: Vec<String>,
    pub imputed_cells: usize,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fits per-column encoders: a BIC-selected Gaussian mixture for every
/// continuous column (after median imputation of missing cells) and
/// sorted category counts for every discrete column.
pub fn fit_schema(table: &Table, target: &str, cfg: &GmmConfig) -> Result<(TableSchema, FitReport)> {
    if table.n_rows() < 2 {
        return Err(Error::data(format!(
            "need at least 2 rows to fit a schema, got {}",
            table.n_rows()
        )));
    }
    let target_idx = table
        .index_of(target)
        .ok_or_else(|| Error::data(format!("target column {target} not found")))?;
    let mut report = FitReport::default();
    let mut columns = Vec::with_capacity(table.n_cols());
    for (name, col) in table.names().iter().zip(table.columns()) {
        let meta = match col {
            Column::Continuous(values) => {
                let mut present: Vec<f64> = values.iter().cloned().filter(|v| !v.is_nan()).collect();
                if present.is_empty() {
                    return Err(Error::data(format!("continuous column {name} has no values")));
                }
                if present.iter().any(|v| !v.is_finite()) {
                    return Err(Error::data(format!("continuous column {name} has infinite values")));
                }
                report.imputed_cells += values.len() - present.len();
                let med = median(&mut present.clone());
                let filled: Vec<f64> = values
                    .iter()
                    .map(|&v| if v.is_nan() { med } else { v })
                    .collect();
                present.clear();
                let sel = fit_modes(&filled, cfg);
                if sel.fell_back {
                    report.fallback_columns.push(name.clone());
                }
                ColumnMeta::Continuous {
                    name: name.clone(),
                    modes: sel.modes,
                    median: med,
                }
            }
            Column::Discrete(values) => {
                let mut categories: Vec<String> = values.to_vec();
                categories.sort();
                categories.dedup();
                let mut counts = vec![0u64; categories.len()];
                for v in values {
                    let i = categories.binary_search(v).expect("category present");
                    counts[i] += 1;
                }
                ColumnMeta::Discrete {
                    name: name.clone(),
                    categories,
                    counts,
                }
            }
        };
        columns.push(meta);
    }
    match &columns[target_idx] {
        ColumnMeta::Discrete { categories, .. } if categories.len() >= 2 => {}
        ColumnMeta::Discrete { .. } => {
            return Err(Error::data(format!("target column {target} is constant")))
        }
        ColumnMeta::Continuous { .. } => {
            return Err(Error::data(format!("target column {target} must be discrete")))
        }
    }
    Ok((
        TableSchema {
            columns,
            target: target_idx,
        },
        report,
    ))
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnMeta>, target: &str) -> Result<Self> {
        let target = columns
            .iter()
            .position(|c| c.name() == target)
            .ok_or_else(|| Error::data(format!("target column {target} not found")))?;
        let schema = Self { columns, target };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name() == c.name()) {
                return Err(Error::data(format!("duplicate column {}", c.name())));
            }
            match c {
                ColumnMeta::Continuous { name, modes, .. } => {
                    if modes.is_empty() {
                        return Err(Error::data(format!("{name}: no modes")));
                    }
                    if modes.iter().any(|m| !(m.std > 0.0) || !m.mean.is_finite()) {
                        return Err(Error::data(format!("{name}: invalid mode parameters")));
                    }
                    let w: f64 = modes.iter().map(|m| m.weight).sum();
                    if (w - 1.0).abs() > 1e-9 {
                        return Err(Error::data(format!("{name}: mode weights sum to {w}")));
                    }
                }
                ColumnMeta::Discrete {
                    name,
                    categories,
                    counts,
                } => {
                    if categories.is_empty() || categories.len() != counts.len() {
                        return Err(Error::data(format!("{name}: bad category list")));
                    }
                    let mut sorted = categories.clone();
                    sorted.sort();
                    sorted.dedup();
                    if sorted.len() != categories.len() {
                        return Err(Error::data(format!("{name}: duplicate categories")));
                    }
                }
            }
        }
        match &self.columns[self.target] {
            ColumnMeta::Discrete { categories, .. } if categories.len() >= 2 => Ok(()),
            _ => Err(Error::data("target column must be discrete with at least 2 categories")),
        }
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target_name(&self) -> &str {
        self.columns[self.target].name()
    }

    pub fn target_categories(&self) -> &[String] {
        match &self.columns[self.target] {
            ColumnMeta::Discrete { categories, .. } => categories,
            ColumnMeta::Continuous { .. } => unreachable!("validated discrete"),
        }
    }

    pub fn class_id(&self, category: &str) -> Option<usize> {
        self.target_categories().iter().position(|c| c == category)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn encoded_width(&self) -> usize {
        self.columns.iter().map(ColumnMeta::encoded_width).sum()
    }

    pub fn spans(&self) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut offset = 0;
        for (i, c) in self.columns.iter().enumerate() {
            match c {
                ColumnMeta::Continuous { modes, .. } => {
                    spans.push(Span {
                        column: i,
                        offset,
                        width: 1,
                        role: SpanRole::Alpha,
                    });
                    spans.push(Span {
                        column: i,
                        offset: offset + 1,
                        width: modes.len(),
                        role: SpanRole::ModeOneHot,
                    });
                }
                ColumnMeta::Discrete { categories, .. } => spans.push(Span {
                    column: i,
                    offset,
                    width: categories.len(),
                    role: SpanRole::CategoryOneHot,
                }),
            }
            offset += c.encoded_width();
        }
        spans
    }

    /// Offset of a column's first encoded value.
    pub fn column_offset(&self, column: usize) -> usize {
        self.columns[..column].iter().map(ColumnMeta::encoded_width).sum()
    }

    pub fn cond_slots(&self) -> Vec<CondSlot> {
        let mut slots = Vec::new();
        let mut offset = 0;
        for (i, c) in self.columns.iter().enumerate() {
            if let ColumnMeta::Discrete { categories, .. } = c {
                slots.push(CondSlot {
                    column: i,
                    offset,
                    width: categories.len(),
                });
                offset += categories.len();
            }
        }
        slots
    }

    pub fn cond_width(&self) -> usize {
        self.cond_slots().iter().map(|s| s.width).sum()
    }

    /// UTF-8 key=value descriptor; see [`TableSchema::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::from("# rctgan table schema\nversion=1\n");
        let _ = writeln!(s, "target={}", escape(self.target_name()));
        for c in &self.columns {
            let _ = writeln!(s, "column={}", escape(c.name()));
            let _ = writeln!(s, "kind={}", c.kind().as_str());
            match c {
                ColumnMeta::Continuous { modes, median, .. } => {
                    let _ = writeln!(s, "median={median}");
                    for m in modes {
                        let _ = writeln!(s, "mode={},{},{}", m.weight, m.mean, m.std);
                    }
                }
                ColumnMeta::Discrete {
                    categories, counts, ..
                } => {
                    for (cat, n) in categories.iter().zip(counts) {
                        let _ = writeln!(s, "category={n} {}", escape(cat));
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::data(format!("schema line {line}: {msg}"));
        let mut target = None;
        let mut columns: Vec<ColumnMeta> = Vec::new();
        let mut pending: Option<String> = None;
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad(ln, "expected key=value"))?;
            match key {
                "version" if value == "1" => {}
                "version" => return Err(bad(ln, "unsupported version")),
                "target" => target = Some(unescape(value)),
                "column" => pending = Some(unescape(value)),
                "kind" => {
                    let name = pending.take().ok_or_else(|| bad(ln, "kind before column"))?;
                    columns.push(match value {
                        "continuous" => ColumnMeta::Continuous {
                            name,
                            modes: Vec::new(),
                            median: 0.0,
                        },
                        "discrete" => ColumnMeta::Discrete {
                            name,
                            categories: Vec::new(),
                            counts: Vec::new(),
                        },
                        _ => return Err(bad(ln, "unknown kind")),
                    });
                }
                "median" => match columns.last_mut() {
                    Some(ColumnMeta::Continuous { median, .. }) => {
                        *median = value.parse().map_err(|_| bad(ln, "bad median"))?
                    }
                    _ => return Err(bad(ln, "median outside continuous column")),
                },
                "mode" => match columns.last_mut() {
                    Some(ColumnMeta::Continuous { modes, .. }) => {
                        let parts: Vec<f64> = value
                            .split(',')
                            .map(str::parse)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad(ln, "bad mode"))?;
                        if parts.len() != 3 {
                            return Err(bad(ln, "mode needs weight,mean,std"));
                        }
                        modes.push(Mode {
                            weight: parts[0],
                            mean: parts[1],
                            std: parts[2],
                        });
                    }
                    _ => return Err(bad(ln, "mode outside continuous column")),
                },
                "category" => match columns.last_mut() {
                    Some(ColumnMeta::Discrete {
                        categories, counts, ..
                    }) => {
                        let (n, cat) = value.split_once(' ').ok_or_else(|| bad(ln, "bad category"))?;
                        counts.push(n.parse().map_err(|_| bad(ln, "bad category count"))?);
                        categories.push(unescape(cat));
                    }
                    _ => return Err(bad(ln, "category outside discrete column")),
                },
                _ => return Err(bad(ln, "unknown key")),
            }
        }
        let target = target.ok_or_else(|| Error::data("schema has no target"))?;
        TableSchema::new(columns, &target)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}
