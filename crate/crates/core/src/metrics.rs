//! Accuracy matrix and the ACC / BWT summaries.
//!
//! Indices are 0-based: `get(i, j)` is the test accuracy on task `j` after
//! training finished on task `i`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    tasks: usize,
    entries: Vec<Option<f64>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        AccuracyMatrix {
            tasks,
            entries: vec![None; tasks * tasks],
        }
    }

    /// Builds a matrix from rows; `NaN` marks an absent entry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let mut m = AccuracyMatrix::new(t);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(Error::dim("AccuracyMatrix::from_rows", t, row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_nan() {
                    m.record(i, j, v)?;
                }
            }
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn record(&mut self, i: usize, j: usize, acc: f64) -> Result<()> {
        if i >= self.tasks || j >= self.tasks {
            return Err(Error::Input(format!(
                "entry ({i}, {j}) outside a {}-task matrix",
                self.tasks
            )));
        }
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Input(format!("accuracy {acc} outside [0, 1]")));
        }
        self.entries[i * self.tasks + j] = Some(acc);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries.get(i * self.tasks + j).copied().flatten()
    }

    fn require(&self, i: usize, j: usize) -> Result<f64> {
        self.get(i, j)
            .ok_or_else(|| Error::Input(format!("accuracy matrix entry ({i}, {j}) not recorded")))
    }

    /// Accuracies on every task after the final one.
    pub fn final_row(&self) -> Result<Vec<f64>> {
        let last = self.tasks.checked_sub(1).ok_or(Error::Empty("accuracy matrix"))?;
        (0..self.tasks).map(|j| self.require(last, j)).collect()
    }

    /// Rows as text, one line per training stage; absent entries left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("after_task");
        for j in 0..self.tasks {
            out.push_str(&format!(",task_{j}"));
        }
        out.push('\n');
        for i in 0..self.tasks {
            out.push_str(&i.to_string());
            for j in 0..self.tasks {
                out.push(',');
                if let Some(v) = self.get(i, j) {
                    // full precision so dumps compare bit-for-bit
                    out.push_str(&format!("{v:?}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Mean final-row accuracy.
pub fn acc_metric(m: &AccuracyMatrix) -> Result<f64> {
    let row = m.final_row()?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// `(1/(T−1)) Σ_{j<T} max_{l<T} (a[l][j] − a[T][j])` over recorded entries.
///
/// Larger means more forgetting. Entries with `l ≥ j` must be present;
/// entries with `l < j` enter the max only if they were recorded.
pub fn bwt_metric(m: &AccuracyMatrix) -> Result<f64> {
    let t = m.tasks();
    if t < 2 {
        return Err(Error::Input(format!("backward transfer needs at least 2 tasks, got {t}")));
    }
    let last = t - 1;
    let mut total = 0.0;
    for j in 0..last {
        let final_acc = m.require(last, j)?;
        let mut best = f64::NEG_INFINITY;
        for l in 0..last {
            let entry = if l >= j { Some(m.require(l, j)?) } else { m.get(l, j) };
            if let Some(a) = entry {
                best = best.max(a - final_acc);
            }
        }
        total += best;
    }
    Ok(total / last as f64)
}

/// Conventional backward transfer `(1/(T−1)) Σ_{j<T} (a[T][j] − a[j][j])`;
/// negative means forgetting.
pub fn gem_bwt(m: &AccuracyMatrix) -> Result<f64> {
    let t = m.tasks();
    if t < 2 {
        return Err(Error::Input(format!("backward transfer needs at least 2 tasks, got {t}")));
    }
    let last = t - 1;
    let mut total = 0.0;
    for j in 0..last {
        total += m.require(last, j)? - m.require(j, j)?;
    }
    Ok(total / last as f64)
}
