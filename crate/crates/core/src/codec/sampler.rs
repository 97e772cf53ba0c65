//! Training-by-sampling: conditions drawn with log-frequency weights and
//! real rows drawn to match them.

use rand::Rng;

use super::schema::{ColumnMeta, CondSlot, TableSchema};
use super::table::Table;
use crate::error::{Error, Result};

/// A sampled `(discrete column, category)` condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CondVector {
    /// Index into the schema's discrete columns (not the table columns).
    pub slot: usize,
    pub category: usize,
    /// Position of the single 1 inside the full conditional vector.
    pub hot: usize,
    pub width: usize,
}

impl CondVector {
    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        v[self.hot] = 1.0;
        v
    }
}

#[derive(Clone, Debug)]
pub struct ConditionSampler {
    slots: Vec<CondSlot>,
    /// Per slot, cumulative normalized `ln(1 + count)` weights.
    cumulative: Vec<Vec<f64>>,
    width: usize,
}

/// Normalized `ln(1 + count)` category weights.
pub fn log_frequency_weights(counts: &[u64]) -> Vec<f64> {
    let w: Vec<f64> = counts.iter().map(|&c| (1.0 + c as f64).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

impl ConditionSampler {
    pub fn new(schema: &TableSchema) -> Result<Self> {
        let slots = schema.cond_slots();
        if slots.is_empty() {
            return Err(Error::data("no discrete columns to condition on"));
        }
        let cumulative = slots
            .iter()
            .map(|s| {
                let ColumnMeta::Discrete { counts, .. } = &schema.columns()[s.column] else {
                    unreachable!("cond slots are discrete")
                };
                let mut acc = 0.0;
                log_frequency_weights(counts)
                    .into_iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            width: schema.cond_width(),
            slots,
            cumulative,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn slots(&self) -> &[CondSlot] {
        &self.slots
    }

    /// Uniform discrete column, then a category with probability
    /// proportional to `ln(1 + count)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CondVector {
        let slot = rng.random_range(0..self.slots.len());
        let cum = &self.cumulative[slot];
        let u = rng.random::<f64>() * cum[cum.len() - 1];
        let category = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
        self.fixed(slot, category)
    }

    /// The condition selecting `category` of discrete slot `slot`.
    pub fn fixed(&self, slot: usize, category: usize) -> CondVector {
        CondVector {
            slot,
            category,
            hot: self.slots[slot].offset + category,
            width: self.width,
        }
    }

    /// Slot index of a table column, if it is discrete.
    pub fn slot_of_column(&self, column: usize) -> Option<usize> {
        self.slots.iter().position(|s| s.column == column)
    }
}

/// Draws one condition from a schema's log-frequency weights.
pub fn sample_condition<R: Rng + ?Sized>(schema: &TableSchema, rng: &mut R) -> Result<CondVector> {
    Ok(ConditionSampler::new(schema)?.sample(rng))
}

/// Row ids grouped by `(discrete slot, category)`.
#[derive(Clone, Debug)]
pub struct MatchIndex {
    rows: Vec<Vec<Vec<usize>>>,
}

impl MatchIndex {
    pub fn build(table: &Table, schema: &TableSchema) -> Result<Self> {
        let mut rows = Vec::new();
        for slot in schema.cond_slots() {
            let meta = &schema.columns()[slot.column];
            let ColumnMeta::Discrete { categories, .. } = meta else {
                unreachable!("cond slots are discrete")
            };
            let values = table.discrete(meta.name())?;
            let mut by_cat = vec![Vec::new(); categories.len()];
            for (r, v) in values.iter().enumerate() {
                let k = categories.iter().position(|c| c == v).ok_or_else(|| {
                    Error::UnknownCategory {
                        column: meta.name().to_string(),
                        value: v.clone(),
                    }
                })?;
                by_cat[k].push(r);
            }
            rows.push(by_cat);
        }
        Ok(Self { rows })
    }

    pub fn count(&self, cond: &CondVector) -> usize {
        self.rows[cond.slot][cond.category].len()
    }

    /// Uniform draw with replacement among rows matching `cond`.
    pub fn draw<R: Rng + ?Sized>(&self, cond: &CondVector, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        let pool = &self.rows[cond.slot][cond.category];
        if pool.is_empty() {
            return Err(Error::data(format!(
                "no rows match condition (slot {}, category {})",
                cond.slot, cond.category
            )));
        }
        Ok((0..batch).map(|_| pool[rng.random_range(0..pool.len())]).collect())
    }

    pub fn draw_one<R: Rng + ?Sized>(&self, cond: &CondVector, rng: &mut R) -> Result<usize> {
        Ok(self.draw(cond, 1, rng)?[0])
    }
}
