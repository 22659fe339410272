//! Episodic memory and its update policies.
//!
//! Three policies share one buffer type:
//!
//! - **manifold expansion** ([`EpisodicMemory::mes_update`]): once the buffer is
//!   full, a sample whose feature lies farther from the buffer centroid than
//!   the current diameter always replaces a uniformly random slot; any other
//!   sample falls back to reservoir sampling.
//! - **reservoir** ([`EpisodicMemory::reservoir_update`]): classical
//!   Algorithm R over the global stream.
//! - **ring** ([`EpisodicMemory::ring_update`]): FIFO inside fixed per-task
//!   segments.
//!
//! The stream counter `seen` is global across tasks and never resets.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::Batch;
use crate::nn::{MlpModel, TeacherSnapshot};
use crate::tensor::Tensor;

/// Anything that maps a batch of inputs to a batch of feature vectors.
pub trait FeatureMap {
    fn features(&self, batch: &Tensor) -> Result<Tensor>;
}

impl FeatureMap for MlpModel {
    fn features(&self, batch: &Tensor) -> Result<Tensor> {
        MlpModel::features(self, batch)
    }
}

impl FeatureMap for TeacherSnapshot {
    fn features(&self, batch: &Tensor) -> Result<Tensor> {
        TeacherSnapshot::features(self, batch)
    }
}

impl<F> FeatureMap for F
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self(batch)
    }
}

/// Uses the raw inputs as features.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFeatures;

impl FeatureMap for IdentityFeatures {
    fn features(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(batch.clone())
    }
}

/// Arithmetic mean of the rows: the Fréchet mean under the Euclidean metric.
pub fn centroid(features: &Tensor) -> Result<Vec<f64>> {
    let m = features.rows();
    if m == 0 {
        return Err(Error::Empty("centroid of zero points"));
    }
    let mut c = features.sum_rows().into_data();
    c.iter_mut().for_each(|v| *v /= m as f64);
    Ok(c)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Largest Euclidean distance from `c` to any row.
pub fn diameter(features: &Tensor, c: &[f64]) -> Result<f64> {
    if features.rows() == 0 {
        return Err(Error::Empty("diameter of zero points"));
    }
    if features.cols() != c.len() {
        return Err(Error::dim("diameter", features.cols(), c.len()));
    }
    Ok((0..features.rows())
        .map(|i| euclidean(features.row(i), c))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSummary {
    pub centroid: Vec<f64>,
    pub diameter: f64,
}

impl ManifoldSummary {
    pub fn of(features: &Tensor) -> Result<Self> {
        let c = centroid(features)?;
        let diameter = diameter(features, &c)?;
        Ok(ManifoldSummary {
            centroid: c,
            diameter,
        })
    }

    /// Strictly outside the current manifold ball.
    pub fn expands(&self, feature: &[f64]) -> bool {
        euclidean(&self.centroid, feature) > self.diameter
    }
}

/// How buffer features are obtained during a manifold-expansion update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MesMode {
    /// Recompute the features of the whole buffer for every stream element.
    Exact,
    /// Cache buffer features, patch the replaced row on insertion, and
    /// recompute everything every `refresh` stream elements.
    Fast { refresh: usize },
}

impl MesMode {
    pub const DEFAULT_REFRESH: usize = 64;

    pub fn fast() -> Self {
        MesMode::Fast {
            refresh: Self::DEFAULT_REFRESH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    pub input: Vec<f64>,
    pub label: usize,
    pub task_id: usize,
}

/// Outcome counts of one update call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    pub appended: usize,
    pub expansion_inserts: usize,
    pub reservoir_inserts: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory {
    capacity: usize,
    items: Vec<MemoryItem>,
    seen: u64,
}

/// Uniformly sampled replay mini-batch (owned copy of buffer rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBatch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub slots: Vec<usize>,
}

impl ReplayBatch {
    pub fn as_batch(&self) -> Batch<'_> {
        Batch {
            inputs: &self.inputs,
            labels: &self.labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl EpisodicMemory {
    pub fn new(capacity: usize) -> Self {
        EpisodicMemory {
            capacity,
            items: Vec::with_capacity(capacity),
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    /// Stream elements observed so far, across all update calls.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Buffer inputs stacked into an `|items| × d` matrix.
    pub fn inputs(&self) -> Tensor {
        if self.items.is_empty() {
            return Tensor::zeros(&[0, 0]);
        }
        Tensor::from_rows(&self.items.iter().map(|it| &it.input[..]).collect::<Vec<_>>())
            .expect("buffer rows share a width")
    }

    fn item(data: &LabeledDataset, i: usize, task_id: usize) -> MemoryItem {
        MemoryItem {
            input: data.inputs().row(i).to_vec(),
            label: data.labels()[i],
            task_id,
        }
    }

    /// Manifold expansion sampling over one task's data, in order.
    ///
    /// `phi` is the feature extractor of the current (post-training) model.
    pub fn mes_update<F, R>(
        &mut self,
        data: &LabeledDataset,
        task_id: usize,
        phi: &F,
        rng: &mut R,
        mode: MesMode,
    ) -> Result<UpdateStats>
    where
        F: FeatureMap + ?Sized,
        R: Rng + ?Sized,
    {
        let mut stats = UpdateStats::default();
        if data.is_empty() {
            return Ok(stats);
        }
        if let MesMode::Fast { refresh: 0 } = mode {
            return Err(Error::Config("fast MES refresh interval must be positive".into()));
        }
        // Fast mode evaluates every candidate in one batch; the feature map
        // does not change during an update call.
        let candidate_feats = match mode {
            MesMode::Fast { .. } => Some(phi.features(data.inputs())?),
            MesMode::Exact => None,
        };
        let mut cache: Option<Tensor> = None;
        let mut since_refresh = 0usize;

        for j in 0..data.len() {
            if self.items.len() < self.capacity {
                self.items.push(Self::item(data, j, task_id));
                stats.appended += 1;
                continue;
            }
            if self.capacity == 0 {
                stats.rejected += 1;
                continue;
            }
            let buffer_feats = match mode {
                MesMode::Exact => phi.features(&self.inputs())?,
                MesMode::Fast { refresh } => {
                    if cache.is_none() || since_refresh >= refresh {
                        cache = Some(phi.features(&self.inputs())?);
                        since_refresh = 0;
                    }
                    since_refresh += 1;
                    cache.clone().expect("filled above")
                }
            };
            let summary = ManifoldSummary::of(&buffer_feats)?;
            let feat_x: Vec<f64> = match &candidate_feats {
                Some(all) => all.row(j).to_vec(),
                None => phi.features(&data.inputs().select_rows(&[j]))?.into_data(),
            };
            if feat_x.len() != summary.centroid.len() {
                return Err(Error::dim("mes_update feature width", summary.centroid.len(), feat_x.len()));
            }

            let slot = if summary.expands(&feat_x) {
                stats.expansion_inserts += 1;
                Some(rng.gen_range(0..self.items.len()))
            } else {
                // randint(0, n + j), half-open
                let i = rng.gen_range(0..self.seen + j as u64);
                if i < self.capacity as u64 {
                    stats.reservoir_inserts += 1;
                    Some(i as usize)
                } else {
                    stats.rejected += 1;
                    None
                }
            };
            if let Some(slot) = slot {
                self.items[slot] = Self::item(data, j, task_id);
                if let Some(c) = cache.as_mut() {
                    c.row_mut(slot).copy_from_slice(&feat_x);
                }
            }
        }
        self.seen += data.len() as u64;
        Ok(stats)
    }

    /// Algorithm R over the global stream: after `N` stream elements each one
    /// is retained with probability `capacity / N`.
    pub fn reservoir_update<R: Rng + ?Sized>(
        &mut self,
        data: &LabeledDataset,
        task_id: usize,
        rng: &mut R,
    ) -> UpdateStats {
        let mut stats = UpdateStats::default();
        for j in 0..data.len() {
            if self.items.len() < self.capacity {
                self.items.push(Self::item(data, j, task_id));
                stats.appended += 1;
                continue;
            }
            let i = rng.gen_range(0..=self.seen + j as u64);
            if i < self.capacity as u64 {
                self.items[i as usize] = Self::item(data, j, task_id);
                stats.reservoir_inserts += 1;
            } else {
                stats.rejected += 1;
            }
        }
        self.seen += data.len() as u64;
        stats
    }

    /// Keeps the latest `quota` samples of `task_id`, FIFO.
    ///
    /// Segments of other tasks are untouched; the caller picks
    /// `quota = capacity / num_tasks` so that all segments fit.
    pub fn ring_update(&mut self, data: &LabeledDataset, task_id: usize, quota: usize) -> Result<UpdateStats> {
        if quota == 0 {
            return Err(Error::Config("ring buffer per-task quota must be at least 1".into()));
        }
        let existing = self.items.iter().filter(|it| it.task_id == task_id).count();
        let others = self.items.len() - existing;
        let kept_new = data.len().min(quota);
        let segment_len = (existing + data.len()).min(quota);
        if others + segment_len > self.capacity {
            return Err(Error::Config(format!(
                "ring segment for task {task_id} needs {} slots, capacity is {}",
                others + segment_len,
                self.capacity
            )));
        }
        let mut segment: Vec<MemoryItem> = Vec::with_capacity(existing + data.len());
        let mut rest: Vec<MemoryItem> = Vec::with_capacity(others + segment_len);
        for it in self.items.drain(..) {
            if it.task_id == task_id {
                segment.push(it);
            } else {
                rest.push(it);
            }
        }
        // only the newest `quota` samples can survive
        let skip = data.len() - kept_new;
        segment.extend((skip..data.len()).map(|j| Self::item(data, j, task_id)));
        let drop = segment.len() - segment_len;
        segment.drain(..drop);
        rest.extend(segment);
        self.items = rest;
        self.seen += data.len() as u64;
        let stats = UpdateStats {
            appended: kept_new,
            rejected: data.len() - kept_new,
            ..Default::default()
        };
        Ok(stats)
    }

    /// Up to `k` distinct slots drawn uniformly, in random order.
    ///
    /// Returns `None` for an empty buffer or `k = 0`; no randomness is
    /// consumed in that case.
    pub fn sample_batch<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Option<ReplayBatch> {
        if self.items.is_empty() || k == 0 {
            return None;
        }
        let amount = k.min(self.items.len());
        let slots = index::sample(rng, self.items.len(), amount).into_vec();
        let rows: Vec<&[f64]> = slots.iter().map(|&s| &self.items[s].input[..]).collect();
        Some(ReplayBatch {
            inputs: Tensor::from_rows(&rows).expect("buffer rows share a width"),
            labels: slots.iter().map(|&s| self.items[s].label).collect(),
            slots,
        })
    }

    /// Writes `task_id,label,slot_index` for every occupied slot.
    pub fn dump_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut body = String::from("task_id,label,slot_index\n");
        for (slot, it) in self.items.iter().enumerate() {
            body.push_str(&format!("{},{},{}\n", it.task_id, it.label, slot));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn points(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    /// Item `i` has input `[value_i]` and label `i`, so labels identify items.
    fn stream(values: &[f64]) -> LabeledDataset {
        let n = values.len();
        LabeledDataset::new(
            Tensor::from_vec(&[n, 1], values.to_vec()).unwrap(),
            (0..n).collect(),
            n.max(1),
        )
        .unwrap()
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&points(&[&[2.0, 5.0]])).unwrap(), vec![2.0, 5.0]);
        assert_eq!(centroid(&points(&[&[-1.0], &[1.0]])).unwrap(), vec![0.0]);
        assert_eq!(
            centroid(&points(&[&[0.0, 0.0], &[3.0, 0.0], &[0.0, 3.0]])).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(matches!(centroid(&Tensor::zeros(&[0, 2])), Err(Error::Empty(_))));
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(diameter(&points(&[&[4.0, 4.0]]), &[4.0, 4.0]).unwrap(), 0.0);
        assert_eq!(diameter(&points(&[&[-1.0], &[1.0]]), &[0.0]).unwrap(), 1.0);
        assert_eq!(diameter(&points(&[&[0.0, 0.0], &[3.0, 4.0]]), &[1.5, 2.0]).unwrap(), 2.5);
        assert!(matches!(diameter(&Tensor::zeros(&[0, 1]), &[0.0]), Err(Error::Empty(_))));
    }

    #[test]
    fn fill_phase_appends_in_order() {
        let mut mem = EpisodicMemory::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = mem
            .mes_update(&stream(&[0.1, 0.2, 0.3]), 0, &IdentityFeatures, &mut rng, MesMode::Exact)
            .unwrap();
        assert_eq!(s.appended, 3);
        assert_eq!(mem.seen(), 3);
        let labels: Vec<_> = mem.items().iter().map(|it| it.label).collect();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn empty_task_is_a_no_op() {
        let mut mem = EpisodicMemory::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty = LabeledDataset::new(Tensor::zeros(&[0, 1]), vec![], 1).unwrap();
        mem.mes_update(&empty, 0, &IdentityFeatures, &mut rng, MesMode::Exact)
            .unwrap();
        assert_eq!(mem.seen(), 0);
        assert!(mem.is_empty());
    }

    #[test]
    fn coincident_features_take_the_reservoir_branch() {
        let mut mem = EpisodicMemory::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = mem
            .mes_update(&stream(&[0.5; 50]), 0, &IdentityFeatures, &mut rng, MesMode::Exact)
            .unwrap();
        assert_eq!(s.expansion_inserts, 0);
        assert_eq!(s.reservoir_inserts + s.rejected, 47);
    }

    #[test]
    fn far_candidate_is_always_inserted() {
        // buffer on the unit circle around the origin, candidate at distance 2
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..200 {
            let k = 8;
            let mut rows: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / k as f64;
                    vec![0.5 + 0.25 * a.cos(), 0.5 + 0.25 * a.sin()]
                })
                .collect();
            // scale 0.25 keeps inputs in [0, 1]; the candidate sits at 2× the radius
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            rows.push(vec![0.5 + 0.5 * angle.cos(), 0.5 + 0.5 * angle.sin()]);
            let n = rows.len();
            let ds = LabeledDataset::new(Tensor::from_rows(&rows).unwrap(), (0..n).collect(), n)
                .unwrap();
            let mut mem = EpisodicMemory::new(k);
            let s = mem
                .mes_update(&ds, 0, &IdentityFeatures, &mut rng, MesMode::Exact)
                .unwrap();
            assert_eq!(s.expansion_inserts, 1, "trial {trial}");
            let labels: Vec<_> = mem.items().iter().map(|it| it.label).collect();
            assert!(labels.contains(&k));
            assert_eq!(labels.len(), k);
            assert_eq!((0..k).filter(|l| labels.contains(l)).count(), k - 1);
        }
    }

    #[test]
    fn exact_and_fast_modes_agree_with_identity_features() {
        let mut data_rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..400).map(|_| data_rng.gen_range(0.0..1.0)).collect();
        let ds = stream(&values);
        let run = |mode| {
            let mut mem = EpisodicMemory::new(20);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            mem.mes_update(&ds, 0, &IdentityFeatures, &mut rng, mode).unwrap();
            mem
        };
        assert_eq!(run(MesMode::Exact), run(MesMode::Fast { refresh: 7 }));
        assert_eq!(run(MesMode::Exact), run(MesMode::fast()));
    }

    #[test]
    fn counter_is_global_across_calls() {
        let mut mem = EpisodicMemory::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        mem.reservoir_update(&stream(&[0.1; 10]), 0, &mut rng);
        mem.mes_update(&stream(&[0.2; 7]), 1, &IdentityFeatures, &mut rng, MesMode::Exact)
            .unwrap();
        mem.ring_update(&stream(&[0.3; 2]), 2, 1).unwrap_err();
        assert_eq!(mem.seen(), 17);
    }

    #[test]
    fn reservoir_keeps_short_streams() {
        let mut mem = EpisodicMemory::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        mem.reservoir_update(&stream(&[0.1, 0.2, 0.3]), 0, &mut rng);
        assert_eq!(mem.len(), 3);
    }

    #[test]
    fn reservoir_single_slot_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 10_000;
        let mut first = 0;
        for _ in 0..trials {
            let mut mem = EpisodicMemory::new(1);
            mem.reservoir_update(&stream(&[0.1, 0.2]), 0, &mut rng);
            if mem.items()[0].label == 0 {
                first += 1;
            }
        }
        let p = first as f64 / trials as f64;
        assert!((p - 0.5).abs() < 0.02, "{p}");
    }

    #[test]
    fn ring_examples() {
        let mut mem = EpisodicMemory::new(4);
        mem.ring_update(&stream(&[0.1; 5]), 0, 2).unwrap();
        mem.ring_update(&stream(&[0.2; 5]), 1, 2).unwrap();
        let got: Vec<_> = mem.items().iter().map(|it| (it.task_id, it.label)).collect();
        assert_eq!(got, vec![(0, 3), (0, 4), (1, 3), (1, 4)]);

        let mut mem = EpisodicMemory::new(3);
        let values: Vec<f64> = (1..=10).map(|v| v as f64 / 10.0).collect();
        mem.ring_update(&stream(&values), 0, 3).unwrap();
        let got: Vec<_> = mem.items().iter().map(|it| it.label + 1).collect();
        assert_eq!(got, vec![8, 9, 10]);

        assert!(matches!(mem.ring_update(&stream(&[0.1]), 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn ring_single_task_is_fifo() {
        let mut mem = EpisodicMemory::new(3);
        mem.ring_update(&stream(&[0.1, 0.2]), 0, 3).unwrap();
        mem.ring_update(&stream(&[0.3, 0.4]), 0, 3).unwrap();
        let got: Vec<_> = mem.items().iter().map(|it| it.input[0]).collect();
        assert_eq!(got, vec![0.2, 0.3, 0.4]);
    }

    #[test]
    fn sample_batch_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let empty = EpisodicMemory::new(3);
        assert!(empty.sample_batch(2, &mut rng).is_none());

        let mut mem = EpisodicMemory::new(5);
        mem.reservoir_update(&stream(&[0.1, 0.2, 0.3, 0.4]), 0, &mut rng);
        assert!(mem.sample_batch(0, &mut rng).is_none());
        let b = mem.sample_batch(10, &mut rng).unwrap();
        let mut labels = b.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sample_batch_marginals_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mem = EpisodicMemory::new(10);
        let values: Vec<f64> = (0..10).map(|v| v as f64 / 10.0).collect();
        mem.reservoir_update(&stream(&values), 0, &mut rng);
        let (k, draws) = (3, 10_000);
        let mut hits = [0usize; 10];
        for _ in 0..draws {
            for s in mem.sample_batch(k, &mut rng).unwrap().slots {
                hits[s] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / draws as f64 - 0.3).abs() < 0.02);
        }
    }

    #[test]
    fn buffer_dump_lists_slots() {
        let dir = tempfile::tempdir().unwrap();
        let mut mem = EpisodicMemory::new(2);
        mem.ring_update(&stream(&[0.1, 0.2]), 3, 2).unwrap();
        let p = dir.path().join("buf.csv");
        mem.dump_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "task_id,label,slot_index\n3,0,0\n3,1,1\n");
    }
}
