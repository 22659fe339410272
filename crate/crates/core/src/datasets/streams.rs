use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LabeledDataset, StreamKind, Task, TaskStream};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-task subsample sizes; `None` keeps the whole split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PerTask {
    pub train: Option<usize>,
    pub test: Option<usize>,
}

impl PerTask {
    pub const ALL: PerTask = PerTask {
        train: None,
        test: None,
    };

    pub fn new(train: usize, test: usize) -> Self {
        PerTask {
            train: Some(train),
            test: Some(test),
        }
    }
}

fn check_tasks(tasks: usize) -> Result<()> {
    if tasks < 2 {
        return Err(Error::Config(format!("a task stream needs at least 2 tasks, got {tasks}")));
    }
    Ok(())
}

fn subsample<R: Rng>(ds: &LabeledDataset, n: Option<usize>, rng: &mut R) -> LabeledDataset {
    match n {
        Some(n) if n < ds.len() => {
            let mut idx = index::sample(rng, ds.len(), n).into_vec();
            idx.sort_unstable();
            ds.subset(&idx)
        }
        _ => ds.clone(),
    }
}

fn map_inputs(ds: &LabeledDataset, f: impl Fn(&[f64]) -> Vec<f64>) -> LabeledDataset {
    let rows: Vec<Vec<f64>> = (0..ds.len()).map(|i| f(ds.inputs().row(i))).collect();
    let inputs = if rows.is_empty() {
        Tensor::zeros(&[0, ds.input_width()])
    } else {
        Tensor::from_rows(&rows).expect("rows share the input width")
    };
    LabeledDataset::new(inputs, ds.labels().to_vec(), ds.num_classes())
        .expect("transformations keep inputs in [0, 1]")
}

/// Task 0 is the unpermuted data; every later task applies its own fixed
/// pixel permutation to both splits.
///
/// Draw order per task: permutation (tasks ≥ 1), train subset, test subset.
pub fn permuted_stream(
    base_train: &LabeledDataset,
    base_test: &LabeledDataset,
    tasks: usize,
    per_task: PerTask,
    seed: u64,
) -> Result<TaskStream> {
    check_tasks(tasks)?;
    let d = base_train.input_width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(tasks);
    for id in 0..tasks {
        let mut perm: Vec<usize> = (0..d).collect();
        if id > 0 {
            perm.shuffle(&mut rng);
        }
        let apply = |row: &[f64]| perm.iter().map(|&p| row[p]).collect();
        let train = subsample(base_train, per_task.train, &mut rng);
        let test = subsample(base_test, per_task.test, &mut rng);
        out.push(Task {
            id,
            train: map_inputs(&train, apply),
            test: map_inputs(&test, apply),
        });
    }
    Ok(TaskStream {
        kind: StreamKind::Permuted,
        tasks: out,
    })
}

/// Rotates a square image about its centre with bilinear interpolation;
/// samples falling outside the image read as zero.
pub fn rotate_image(pixels: &[f64], side: usize, degrees: f64) -> Vec<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    let centre = (side as f64 - 1.0) / 2.0;
    let at = |r: isize, q: isize| -> f64 {
        if r < 0 || q < 0 || r >= side as isize || q >= side as isize {
            0.0
        } else {
            pixels[r as usize * side + q as usize]
        }
    };
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for q in 0..side {
            let dx = q as f64 - centre;
            let dy = r as f64 - centre;
            // inverse rotation: where does this output pixel come from
            let sx = c * dx + s * dy + centre;
            let sy = -s * dx + c * dy + centre;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = at(y0, x0) * (1.0 - fx) * (1.0 - fy)
                + at(y0, x0 + 1) * fx * (1.0 - fy)
                + at(y0 + 1, x0) * (1.0 - fx) * fy
                + at(y0 + 1, x0 + 1) * fx * fy;
            out[r * side + q] = v.clamp(0.0, 1.0);
        }
    }
    out
}

/// Task 0 is unrotated; task `t ≥ 1` rotates by an angle drawn uniformly
/// from `[0°, 180°)`. Returns the stream and the per-task angles.
///
/// Draw order per task: angle (tasks ≥ 1), train subset, test subset.
pub fn rotated_stream(
    base_train: &LabeledDataset,
    base_test: &LabeledDataset,
    tasks: usize,
    per_task: PerTask,
    seed: u64,
) -> Result<(TaskStream, Vec<f64>)> {
    check_tasks(tasks)?;
    let d = base_train.input_width();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::Config(format!("rotation needs square images, input width is {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(tasks);
    let mut angles = Vec::with_capacity(tasks);
    for id in 0..tasks {
        let angle = if id == 0 { 0.0 } else { rng.gen_range(0.0..180.0) };
        let train = subsample(base_train, per_task.train, &mut rng);
        let test = subsample(base_test, per_task.test, &mut rng);
        let apply = |row: &[f64]| {
            if angle == 0.0 {
                row.to_vec()
            } else {
                rotate_image(row, side, angle)
            }
        };
        out.push(Task {
            id,
            train: map_inputs(&train, apply),
            test: map_inputs(&test, apply),
        });
        angles.push(angle);
    }
    Ok((
        TaskStream {
            kind: StreamKind::Rotated,
            tasks: out,
        },
        angles,
    ))
}

/// Task `t` holds classes `[t·C/T, (t+1)·C/T)`; the class head stays shared.
pub fn split_stream(base_train: &LabeledDataset, base_test: &LabeledDataset, tasks: usize) -> Result<TaskStream> {
    check_tasks(tasks)?;
    let classes = base_train.num_classes();
    if !classes.is_multiple_of(tasks) {
        return Err(Error::Config(format!(
            "{classes} classes cannot be split evenly into {tasks} tasks"
        )));
    }
    let per = classes / tasks;
    let pick = |ds: &LabeledDataset, t: usize| {
        let idx: Vec<usize> = (0..ds.len())
            .filter(|&i| (t * per..(t + 1) * per).contains(&ds.labels()[i]))
            .collect();
        ds.subset(&idx)
    };
    let out = (0..tasks)
        .map(|id| Task {
            id,
            train: pick(base_train, id),
            test: pick(base_test, id),
        })
        .collect();
    Ok(TaskStream {
        kind: StreamKind::Split,
        tasks: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub classes_per_task: usize,
    pub tasks: usize,
    pub train_per_task: usize,
    pub test_per_task: usize,
    /// Per-coordinate standard deviation around each class mean.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 20,
            classes_per_task: 2,
            tasks: 5,
            train_per_task: 200,
            test_per_task: 100,
            noise: 0.05,
        }
    }
}

pub const SYNTHETIC_LOW: f64 = 0.25;
pub const SYNTHETIC_SCALE: f64 = 0.5;

/// Isotropic Gaussian classes with disjoint label sets per task.
///
/// Class `k` is centred on `0.25 + 0.5·e_k`, i.e. the vertices of a scaled
/// simplex, so any two means are `0.5·√2` apart. Samples are clamped to
/// `[0, 1]`. Draw order: task by task, train then test, sample by sample.
pub fn synthetic_gaussian_stream(cfg: &SyntheticConfig, seed: u64) -> Result<TaskStream> {
    check_tasks(cfg.tasks)?;
    let total = cfg.classes_per_task * cfg.tasks;
    if cfg.classes_per_task == 0 || cfg.train_per_task == 0 || cfg.test_per_task == 0 {
        return Err(Error::Config("synthetic counts must be at least 1".into()));
    }
    if cfg.dim < total {
        return Err(Error::Config(format!(
            "dimension {} too small for {total} simplex-vertex class means",
            cfg.dim
        )));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::Config(format!("noise must be a finite non-negative value, got {}", cfg.noise)));
    }
    let normal = Normal::new(0.0, cfg.noise).expect("validated noise");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make = |task: usize, n: usize, rng: &mut ChaCha8Rng| -> Result<LabeledDataset> {
        let mut data = Vec::with_capacity(n * cfg.dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = task * cfg.classes_per_task + i % cfg.classes_per_task;
            for j in 0..cfg.dim {
                let mean = SYNTHETIC_LOW + if j == class { SYNTHETIC_SCALE } else { 0.0 };
                data.push((mean + normal.sample(rng)).clamp(0.0, 1.0));
            }
            labels.push(class);
        }
        LabeledDataset::new(Tensor::from_vec(&[n, cfg.dim], data)?, labels, total)
    };
    let mut out = Vec::with_capacity(cfg.tasks);
    for id in 0..cfg.tasks {
        let train = make(id, cfg.train_per_task, &mut rng)?;
        let test = make(id, cfg.test_per_task, &mut rng)?;
        out.push(Task { id, train, test });
    }
    Ok(TaskStream {
        kind: StreamKind::Synthetic,
        tasks: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_base(n: usize, side: usize, classes: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = side * side;
        let data = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels = (0..n).map(|i| i % classes).collect();
        LabeledDataset::new(Tensor::from_vec(&[n, d], data).unwrap(), labels, classes).unwrap()
    }

    fn sorted(v: &[f64]) -> Vec<f64> {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn permuted_first_task_is_identity_and_pixels_are_preserved() {
        let base = toy_base(30, 4, 10, 1);
        let s = permuted_stream(&base, &base, 3, PerTask::ALL, 42).unwrap();
        assert_eq!(s.tasks[0].train, base);
        for t in &s.tasks {
            for i in 0..base.len() {
                assert_eq!(sorted(t.train.inputs().row(i)), sorted(base.inputs().row(i)));
            }
            assert_eq!(t.train.labels(), base.labels());
        }
        assert_ne!(s.tasks[1].train, s.tasks[2].train);
    }

    #[test]
    fn permutation_applies_identically_to_train_and_test() {
        let base = toy_base(10, 3, 10, 2);
        let s = permuted_stream(&base, &base, 2, PerTask::ALL, 5).unwrap();
        assert_eq!(s.tasks[1].train.inputs(), s.tasks[1].test.inputs());
    }

    #[test]
    fn streams_are_seed_deterministic() {
        let base = toy_base(40, 4, 10, 3);
        let a = permuted_stream(&base, &base, 3, PerTask::new(10, 5), 9).unwrap();
        let b = permuted_stream(&base, &base, 3, PerTask::new(10, 5), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tasks[2].train.len(), 10);
        assert_eq!(a.tasks[2].test.len(), 5);
        let c = permuted_stream(&base, &base, 3, PerTask::new(10, 5), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_task_stream_rejected() {
        let base = toy_base(4, 2, 2, 0);
        assert!(matches!(
            permuted_stream(&base, &base, 1, PerTask::ALL, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rotation_by_zero_is_identity() {
        let base = toy_base(1, 6, 1, 4);
        let img = base.inputs().row(0);
        assert_eq!(rotate_image(img, 6, 0.0), img);
    }

    #[test]
    fn half_turn_preserves_centrally_symmetric_pattern() {
        let side = 8;
        let mut img = vec![0.0; side * side];
        for r in 0..side {
            for q in 0..side {
                let v = ((r * 7 + q * 3) % 5) as f64 / 4.0;
                img[r * side + q] = v;
                img[(side - 1 - r) * side + (side - 1 - q)] = v;
            }
        }
        let out = rotate_image(&img, side, 180.0);
        for (a, b) in out.iter().zip(&img) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_round_trip_recovers_interior() {
        // smooth blob: bilinear interpolation error stays small
        let side = 28;
        let c = 13.5;
        let img: Vec<f64> = (0..side * side)
            .map(|k| {
                let (r, q) = ((k / side) as f64, (k % side) as f64);
                (-((r - c).powi(2) + (q - c - 2.0).powi(2)) / 30.0).exp()
            })
            .collect();
        let back = rotate_image(&rotate_image(&img, side, 37.0), side, -37.0);
        let mut err = 0.0;
        let mut count = 0;
        for r in 7..21 {
            for q in 7..21 {
                err += (back[r * side + q] - img[r * side + q]).abs();
                count += 1;
            }
        }
        assert!(err / (count as f64) < 0.1);
    }

    #[test]
    fn rotated_stream_angles_in_range_and_pixels_bounded() {
        let base = toy_base(5, 5, 2, 6);
        let (s, angles) = rotated_stream(&base, &base, 4, PerTask::ALL, 1).unwrap();
        assert_eq!(angles[0], 0.0);
        assert!(angles.iter().all(|a| (0.0..180.0).contains(a)));
        assert_eq!(s.tasks[0].train, base);
        for t in &s.tasks {
            assert!(t.train.inputs().data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn split_partitions_classes() {
        let base = toy_base(100, 2, 10, 7);
        let s = split_stream(&base, &base, 5).unwrap();
        let mut total = 0;
        for (t, task) in s.tasks.iter().enumerate() {
            assert_eq!(s.task_classes(t), vec![2 * t, 2 * t + 1]);
            total += task.train.len();
        }
        assert_eq!(total, base.len());
        assert!(matches!(split_stream(&base, &base, 3), Err(Error::Config(_))));
    }

    #[test]
    fn zero_noise_synthetic_samples_sit_on_means() {
        let cfg = SyntheticConfig {
            noise: 0.0,
            ..Default::default()
        };
        let s = synthetic_gaussian_stream(&cfg, 3).unwrap();
        let ds = &s.tasks[1].train;
        for i in 0..ds.len() {
            let y = ds.labels()[i];
            for (j, &v) in ds.inputs().row(i).iter().enumerate() {
                let want = SYNTHETIC_LOW + if j == y { SYNTHETIC_SCALE } else { 0.0 };
                assert_eq!(v, want);
            }
        }
        assert_eq!(s.task_classes(1), vec![2, 3]);
        assert_eq!(synthetic_gaussian_stream(&cfg, 3).unwrap(), s);
    }

    #[test]
    fn nearest_mean_classifier_separates_synthetic_classes() {
        // means are 0.5·√2 apart; noise 0.0707 makes that 10σ
        let cfg = SyntheticConfig {
            noise: 0.5 * 2f64.sqrt() / 10.0,
            ..Default::default()
        };
        let s = synthetic_gaussian_stream(&cfg, 11).unwrap();
        let train = LabeledDataset::concat(s.tasks.iter().map(|t| &t.train)).unwrap();
        let test = LabeledDataset::concat(s.tasks.iter().map(|t| &t.test)).unwrap();
        let k = train.num_classes();
        let d = train.input_width();
        let mut means = vec![vec![0.0; d]; k];
        let mut counts = vec![0.0; k];
        for i in 0..train.len() {
            let y = train.labels()[i];
            counts[y] += 1.0;
            for (m, v) in means[y].iter_mut().zip(train.inputs().row(i)) {
                *m += v;
            }
        }
        for (m, c) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= c);
        }
        let correct = (0..test.len())
            .filter(|&i| {
                let x = test.inputs().row(i);
                let best = (0..k)
                    .min_by(|&a, &b| {
                        let da: f64 = means[a].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                        let db: f64 = means[b].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                best == test.labels()[i]
            })
            .count();
        assert!(correct as f64 / test.len() as f64 > 0.95);
    }
}
