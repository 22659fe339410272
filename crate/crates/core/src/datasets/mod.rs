//! Labelled datasets and task streams.
//!
//! Every generator is a pure function of its base data, parameters and seed,
//! and applies the same transformation to the train and test split of a task.

mod idx;
mod streams;

use std::io::Write;
use std::path::Path;

pub use idx::{load_mnist_dir, load_mnist_idx, mnist_paths, read_idx_images, read_idx_labels};
pub use streams::{
    permuted_stream, rotate_image, rotated_stream, split_stream, synthetic_gaussian_stream,
    PerTask, SyntheticConfig,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inputs in `[0, 1]` with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
            return Err(Error::dim(
                "LabeledDataset",
                format!("{} input rows", labels.len()),
                format!("{:?}", inputs.shape()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Input(format!(
                "label {bad} not below class count {num_classes}"
            )));
        }
        if let Some(bad) = inputs.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("input value {bad} outside [0, 1]")));
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Concatenates datasets of equal input width; the class count is the max.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a LabeledDataset>) -> Result<LabeledDataset> {
        let parts: Vec<_> = parts.into_iter().collect();
        let first = parts.first().ok_or(Error::Empty("LabeledDataset::concat"))?;
        let d = first.input_width();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut classes = 0;
        for p in &parts {
            if p.input_width() != d {
                return Err(Error::dim("LabeledDataset::concat", d, p.input_width()));
            }
            data.extend_from_slice(p.inputs.data());
            labels.extend_from_slice(&p.labels);
            classes = classes.max(p.num_classes);
        }
        Ok(LabeledDataset {
            inputs: Tensor::from_vec(&[labels.len(), d], data)?,
            labels,
            num_classes: classes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Permuted,
    Rotated,
    Split,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: usize,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub kind: StreamKind,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.input_width())
    }

    pub fn num_classes(&self) -> usize {
        self.tasks
            .iter()
            .map(|t| t.train.num_classes().max(t.test.num_classes()))
            .max()
            .unwrap_or(0)
    }

    /// Distinct labels present in a task's training split, ascending.
    pub fn task_classes(&self, task: usize) -> Vec<usize> {
        let mut seen = vec![false; self.num_classes()];
        for &y in self.tasks[task].train.labels() {
            seen[y] = true;
        }
        (0..seen.len()).filter(|&c| seen[c]).collect()
    }

    /// Writes `train.csv` and `test.csv`: flattened inputs, then `label`, `task_id`.
    pub fn export_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, pick) in [("train.csv", true), ("test.csv", false)] {
            let path = dir.join(name);
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = std::io::BufWriter::new(file);
            let d = self.input_width();
            let header: Vec<String> = (0..d)
                .map(|i| format!("x{i}"))
                .chain(["label".into(), "task_id".into()])
                .collect();
            writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(&path, e))?;
            for task in &self.tasks {
                let ds = if pick { &task.train } else { &task.test };
                for i in 0..ds.len() {
                    let mut line: Vec<String> =
                        ds.inputs.row(i).iter().map(|v| format!("{v}")).collect();
                    line.push(ds.labels[i].to_string());
                    line.push(task.id.to_string());
                    writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(&path, e))?;
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
