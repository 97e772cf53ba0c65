//! CSV ingestion for generic tables and Backblaze daily SMART snapshots.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::table::{Column, ColumnKind, Table};
use crate::error::{Error, Result};

pub const BACKBLAZE_TARGET: &str = "failure";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Header names map to columns; kinds are inferred unless overridden.
    Generic,
    /// `failure` is the target; `smart_*_raw` / `smart_*_normalized`
    /// columns are the continuous features; rows optionally filtered by model.
    Backblaze { model: Option<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadOptions {
    pub layout: Layout,
    /// Required to exist; always loaded as discrete.
    pub target: Option<String>,
    pub kinds: HashMap<String, ColumnKind>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            layout: Layout::Generic,
            target: None,
            kinds: HashMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Loaded {
    pub table: Table,
    pub target: Option<String>,
    /// Rows dropped because a continuous cell failed to parse.
    pub skipped_rows: usize,
}

fn parse_number(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if t.is_empty() {
        return Some(f64::NAN);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_nan() || v.is_finite() => Some(v),
        _ => None,
    }
}

fn is_smart_feature(name: &str) -> bool {
    name.starts_with("smart_") && (name.ends_with("_raw") || name.ends_with("_normalized"))
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Loaded> {
    read_csv(File::open(path)?, opts)
}

pub fn read_csv<R: Read>(reader: R, opts: &LoadOptions) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::data("CSV has no header"));
    }
    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        records.push(rec?);
    }

    let col = |name: &str| header.iter().position(|h| h == name);
    let (target, selected, kinds): (Option<String>, Vec<usize>, Vec<ColumnKind>) = match &opts.layout {
        Layout::Generic => {
            if let Some(t) = &opts.target {
                col(t).ok_or_else(|| Error::data(format!("target column {t} missing from header")))?;
            }
            let kinds = header
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    if opts.target.as_deref() == Some(name.as_str()) {
                        return ColumnKind::Discrete;
                    }
                    if let Some(k) = opts.kinds.get(name) {
                        return *k;
                    }
                    let numeric = records.iter().all(|r| parse_number(&r[i]).is_some());
                    let any_value = records.iter().any(|r| !r[i].trim().is_empty());
                    if numeric && any_value {
                        ColumnKind::Continuous
                    } else {
                        ColumnKind::Discrete
                    }
                })
                .collect();
            (opts.target.clone(), (0..header.len()).collect(), kinds)
        }
        Layout::Backblaze { model } => {
            let t = col(BACKBLAZE_TARGET)
                .ok_or_else(|| Error::data("backblaze layout needs a failure column"))?;
            if let Some(m) = model {
                let mi = col("model").ok_or_else(|| Error::data("backblaze layout needs a model column"))?;
                records.retain(|r| r[mi].trim() == m);
            }
            let mut selected = Vec::new();
            let mut kinds = Vec::new();
            for (i, name) in header.iter().enumerate() {
                if is_smart_feature(name) && records.iter().any(|r| !r[i].trim().is_empty()) {
                    selected.push(i);
                    kinds.push(ColumnKind::Continuous);
                }
            }
            selected.push(t);
            kinds.push(ColumnKind::Discrete);
            (Some(BACKBLAZE_TARGET.to_string()), selected, kinds)
        }
    };

    let mut cont: Vec<Vec<f64>> = vec![Vec::new(); selected.len()];
    let mut disc: Vec<Vec<String>> = vec![Vec::new(); selected.len()];
    let mut skipped = 0;
    let mut parsed = vec![0.0; selected.len()];
    'rows: for rec in &records {
        for (j, (&i, kind)) in selected.iter().zip(&kinds).enumerate() {
            if *kind == ColumnKind::Continuous {
                match parse_number(&rec[i]) {
                    Some(v) => parsed[j] = v,
                    None => {
                        skipped += 1;
                        continue 'rows;
                    }
                }
            }
        }
        for (j, (&i, kind)) in selected.iter().zip(&kinds).enumerate() {
            match kind {
                ColumnKind::Continuous => cont[j].push(parsed[j]),
                ColumnKind::Discrete => disc[j].push(rec[i].trim().to_string()),
            }
        }
    }

    let names = selected.iter().map(|&i| header[i].clone()).collect();
    let columns = kinds
        .iter()
        .zip(cont.into_iter().zip(disc))
        .map(|(k, (c, d))| match k {
            ColumnKind::Continuous => Column::Continuous(c),
            ColumnKind::Discrete => Column::Discrete(d),
        })
        .collect();
    Ok(Loaded {
        table: Table::new(names, columns)?,
        target,
        skipped_rows: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_infers_kinds() {
        let csv = "temp,state\n1.5,ok\n2,fail\n-3e2,ok\n";
        let l = read_csv(csv.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(l.table.n_cols(), 2);
        assert_eq!(l.table.n_rows(), 3);
        assert_eq!(l.table.columns()[0], Column::Continuous(vec![1.5, 2.0, -300.0]));
        assert_eq!(l.table.columns()[1].kind(), ColumnKind::Discrete);
        assert_eq!(l.skipped_rows, 0);
    }

    #[test]
    fn unparsable_row_dropped() {
        let csv = "temp,state\n1.5,ok\nabc,fail\n3,ok\n";
        let mut opts = LoadOptions::default();
        opts.kinds.insert("temp".into(), ColumnKind::Continuous);
        let l = read_csv(csv.as_bytes(), &opts).unwrap();
        assert_eq!(l.table.n_rows(), 2);
        assert_eq!(l.skipped_rows, 1);
    }

    #[test]
    fn missing_target_column() {
        let opts = LoadOptions {
            target: Some("failure".into()),
            ..LoadOptions::default()
        };
        assert!(read_csv("a,b\n1,2\n".as_bytes(), &opts).is_err());
    }

    #[test]
    fn numeric_target_is_discrete() {
        let opts = LoadOptions {
            target: Some("y".into()),
            ..LoadOptions::default()
        };
        let l = read_csv("x,y\n1,0\n2,1\n".as_bytes(), &opts).unwrap();
        assert_eq!(l.table.discrete("y").unwrap(), &["0", "1"]);
    }

    #[test]
    fn backblaze_filters_model_and_empty_smart() {
        let csv = "date,serial_number,model,capacity_bytes,failure,smart_1_normalized,smart_1_raw,smart_2_raw,smart_5_raw\n\
2020-01-01,Z1,ST4000DM000,4000787030016,0,117,148579464,,0\n\
2020-01-01,Z2,ST12000NM0007,12000138625024,0,80,1,7,8\n\
2020-01-01,Z3,ST4000DM000,4000787030016,1,100,,,24\n";
        let opts = LoadOptions {
            layout: Layout::Backblaze {
                model: Some("ST4000DM000".into()),
            },
            ..LoadOptions::default()
        };
        let l = read_csv(csv.as_bytes(), &opts).unwrap();
        assert_eq!(l.table.n_rows(), 2);
        assert_eq!(
            l.table.names(),
            &["smart_1_normalized", "smart_1_raw", "smart_5_raw", "failure"]
        );
        assert_eq!(l.table.discrete("failure").unwrap(), &["0", "1"]);
        let Column::Continuous(raw) = l.table.column("smart_1_raw").unwrap() else { panic!() };
        assert!(raw[1].is_nan());
        assert_eq!(l.target.as_deref(), Some("failure"));
    }

    #[test]
    fn headerless_input() {
        assert!(read_csv("".as_bytes(), &LoadOptions::default()).is_err());
    }
}
