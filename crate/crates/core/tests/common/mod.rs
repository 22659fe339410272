#![allow(dead_code)]

use std::path::PathBuf;

use maer::datasets::LabeledDataset;
use maer::losses::{cross_entropy, maer_loss, w2_distill, Batch, ReplayTerms};
use maer::memory::{EpisodicMemory, MesMode};
use maer::nn::{ForwardPass, MlpModel, TeacherSnapshot};
use maer::tensor::Tensor;
use maer::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;

pub fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

pub fn random_labels<R: Rng>(n: usize, classes: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..classes)).collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` over the flattened vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` around `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn ce_instance_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..6);
    let c = r.gen_range(2..8);
    let logits = random_tensor(n, c, -4.0, 4.0, &mut r);
    let labels = random_labels(n, c, &mut r);
    let analytic = cross_entropy(&logits, &labels).unwrap().logit_grad.unwrap();
    let numeric = numeric_gradient(logits.data(), |z| {
        let t = Tensor::from_vec(&[n, c], z.to_vec()).unwrap();
        cross_entropy(&t, &labels).unwrap().value
    });
    relative_error(analytic.data(), &numeric)
}

pub fn w2_instance_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..6);
    let d = r.gen_range(1..8);
    let s = random_tensor(n, d, -2.0, 2.0, &mut r);
    let t = random_tensor(n, d, -2.0, 2.0, &mut r);
    let analytic = w2_distill(&s, &t).unwrap().feature_grad.unwrap();
    let numeric = numeric_gradient(s.data(), |z| {
        let sp = Tensor::from_vec(&[n, d], z.to_vec()).unwrap();
        w2_distill(&sp, &t).unwrap().value
    });
    relative_error(analytic.data(), &numeric)
}

/// True when some ReLU pre-activation sits close enough to zero that a
/// finite-difference probe could cross the kink.
fn near_kink(pass: &ForwardPass) -> bool {
    pass.pre1.data().iter().chain(pass.pre2.data()).any(|v| v.abs() < 1e-3)
}

fn flat_params(model: &MlpModel) -> Vec<f64> {
    model.params().flat_map(|p| p.data().iter().copied()).collect()
}

fn load_params(model: &mut MlpModel, flat: &[f64]) {
    let mut offset = 0;
    for p in model.params_mut() {
        let len = p.len();
        p.data_mut().copy_from_slice(&flat[offset..offset + len]);
        offset += len;
    }
}

pub struct CompositeInstance {
    pub model: MlpModel,
    pub teacher: TeacherSnapshot,
    pub x_cur: Tensor,
    pub y_cur: Vec<usize>,
    pub x_rep: Tensor,
    pub y_rep: Vec<usize>,
}

/// A random tiny student/teacher pair with current and replay batches,
/// redrawn until no ReLU is within reach of its kink.
pub fn composite_instance(seed: u64) -> CompositeInstance {
    let mut r = rng(seed);
    loop {
        let d = r.gen_range(2..6);
        let h = r.gen_range(3..8);
        let c = r.gen_range(2..5);
        let model = MlpModel::new(d, h, c, &mut r).unwrap();
        let teacher = MlpModel::new(d, h, c, &mut r).unwrap().snapshot();
        let n_cur = r.gen_range(1..4);
        let n_rep = r.gen_range(1..4);
        let inst = CompositeInstance {
            x_cur: random_tensor(n_cur, d, 0.0, 1.0, &mut r),
            y_cur: random_labels(n_cur, c, &mut r),
            x_rep: random_tensor(n_rep, d, 0.0, 1.0, &mut r),
            y_rep: random_labels(n_rep, c, &mut r),
            model,
            teacher,
        };
        let kinked = near_kink(&inst.model.forward(&inst.x_cur).unwrap())
            || near_kink(&inst.model.forward(&inst.x_rep).unwrap());
        if !kinked {
            return inst;
        }
    }
}

pub fn composite_total(inst: &CompositeInstance, model: &MlpModel, terms: ReplayTerms) -> f64 {
    maer_loss(
        model,
        Some(&inst.teacher),
        Batch { inputs: &inst.x_cur, labels: &inst.y_cur },
        Some(Batch { inputs: &inst.x_rep, labels: &inst.y_rep }),
        terms,
    )
    .unwrap()
    .total
}

pub fn composite_instance_error(seed: u64, terms: ReplayTerms) -> f64 {
    let inst = composite_instance(seed);
    let out = maer_loss(
        &inst.model,
        Some(&inst.teacher),
        Batch { inputs: &inst.x_cur, labels: &inst.y_cur },
        Some(Batch { inputs: &inst.x_rep, labels: &inst.y_rep }),
        terms,
    )
    .unwrap();
    let analytic: Vec<f64> = out.grads.params().flat_map(|p| p.data().iter().copied()).collect();
    let mut probe = inst.model.clone();
    let numeric = numeric_gradient(&flat_params(&inst.model), |w| {
        load_params(&mut probe, w);
        composite_total(&inst, &probe, terms)
    });
    relative_error(&analytic, &numeric)
}

/// Features that are the same point for every input.
pub fn constant_features(x: &Tensor) -> Result<Tensor> {
    Ok(Tensor::zeros(&[x.rows(), 1]))
}

/// Dataset whose label is the item's stream index.
pub fn indexed_stream(n: usize) -> LabeledDataset {
    let inputs = Tensor::from_vec(&[n, 1], (0..n).map(|i| i as f64 / n as f64).collect()).unwrap();
    LabeledDataset::new(inputs, (0..n).collect(), n).unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Reservoir,
    MesConstant,
}

/// Per-item retention counts after streaming `items` elements into a buffer
/// of `capacity`, repeated `trials` times. `chunks` splits the stream into
/// consecutive update calls (tasks).
pub fn retention_counts(policy: Policy, items: usize, capacity: usize, trials: usize, chunks: usize, seed: u64) -> Vec<u64> {
    let data = indexed_stream(items);
    let per = items / chunks;
    let parts: Vec<LabeledDataset> = (0..chunks)
        .map(|c| {
            let end = if c + 1 == chunks { items } else { (c + 1) * per };
            data.subset(&(c * per..end).collect::<Vec<_>>())
        })
        .collect();
    let phi = constant_features;
    let mut r = rng(seed);
    let mut counts = vec![0u64; items];
    for _ in 0..trials {
        let mut mem = EpisodicMemory::new(capacity);
        for (t, part) in parts.iter().enumerate() {
            match policy {
                Policy::Reservoir => {
                    mem.reservoir_update(part, t, &mut r);
                }
                Policy::MesConstant => {
                    mem.mes_update(part, t, &phi, &mut r, MesMode::Exact).unwrap();
                }
            }
        }
        for item in mem.items() {
            counts[item.label] += 1;
        }
    }
    counts
}

/// Pearson chi-square homogeneity test of two count vectors; returns
/// `(statistic, p_value)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let ta: f64 = a.iter().sum::<u64>() as f64;
    let tb: f64 = b.iter().sum::<u64>() as f64;
    let total = ta + tb;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = ta * col / total;
        let eb = tb * col / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    let dof = (cells - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    (stat, p)
}

/// Independent centroid/diameter oracle on raw rows.
pub fn oracle_expands(buffer: &[Vec<f64>], candidate: &[f64]) -> bool {
    let d = candidate.len();
    let n = buffer.len() as f64;
    let mut c = vec![0.0; d];
    for row in buffer {
        for k in 0..d {
            c[k] += row[k] / n;
        }
    }
    let dist = |p: &[f64]| p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let diam = buffer.iter().map(|r| dist(r)).fold(0.0, f64::max);
    dist(candidate) > diam
}

pub struct ExpansionReport {
    pub cases: usize,
    pub expanding: usize,
    pub violations: usize,
}

/// Streams random points one at a time through a full MES buffer with
/// identity features and checks every expanding candidate is retained.
pub fn expansion_acceptance(cases: usize, seed: u64, mode: MesMode) -> ExpansionReport {
    let mut r = rng(seed);
    let mut report = ExpansionReport { cases: 0, expanding: 0, violations: 0 };
    let phi = maer::memory::IdentityFeatures;
    let mut step = 0usize;
    while report.cases < cases {
        let d = r.gen_range(1..5);
        let cap = r.gen_range(1..12);
        let mut mem = EpisodicMemory::new(cap);
        // buffer points sit in a shrunken box so outside candidates exist
        let fill = random_tensor(cap, d, 0.3, 0.7, &mut r);
        let fill = LabeledDataset::new(fill, vec![0; cap], 1).unwrap();
        mem.mes_update(&fill, usize::MAX, &phi, &mut r, mode).unwrap();
        for _ in 0..r.gen_range(1..30) {
            let cand = random_tensor(1, d, 0.0, 1.0, &mut r);
            let rows: Vec<Vec<f64>> = mem.items().iter().map(|i| i.input.clone()).collect();
            let expands = oracle_expands(&rows, cand.row(0));
            let ds = LabeledDataset::new(cand.clone(), vec![0], 1).unwrap();
            step += 1;
            mem.mes_update(&ds, step, &phi, &mut r, mode).unwrap();
            report.cases += 1;
            if expands {
                report.expanding += 1;
                if !mem.items().iter().any(|i| i.task_id == step) {
                    report.violations += 1;
                }
            }
            if report.cases == cases {
                break;
            }
        }
    }
    report
}

/// Counts of W2 axiom failures over `cases` random paired matrices.
#[derive(Debug, Default)]
pub struct AxiomReport {
    pub symmetry: usize,
    pub non_negativity: usize,
    pub identity: usize,
    pub homogeneity: usize,
    pub triangle: usize,
}

impl AxiomReport {
    pub fn total(&self) -> usize {
        self.symmetry + self.non_negativity + self.identity + self.homogeneity + self.triangle
    }
}

pub fn w2_axioms(cases: usize, seed: u64) -> AxiomReport {
    let tol = 1e-12;
    let mut r = rng(seed);
    let mut rep = AxiomReport::default();
    let w = |a: &Tensor, b: &Tensor| w2_distill(a, b).unwrap().value;
    for _ in 0..cases {
        let n = r.gen_range(1..10);
        let d = r.gen_range(1..20);
        let a = random_tensor(n, d, -3.0, 3.0, &mut r);
        let b = random_tensor(n, d, -3.0, 3.0, &mut r);
        let c = random_tensor(n, d, -3.0, 3.0, &mut r);
        let ab = w(&a, &b);
        if (ab - w(&b, &a)).abs() > tol * ab.max(1.0) {
            rep.symmetry += 1;
        }
        if ab < 0.0 {
            rep.non_negativity += 1;
        }
        if w(&a, &a).abs() > tol || ab <= tol {
            rep.identity += 1;
        }
        let k: f64 = r.gen_range(-5.0..5.0);
        let scaled = w(&a.map(|v| k * v), &b.map(|v| k * v));
        if (scaled - k.abs() * ab).abs() > tol * (k.abs() * ab).max(1.0) {
            rep.homogeneity += 1;
        }
        if w(&a, &c) > ab + w(&b, &c) + tol {
            rep.triangle += 1;
        }
    }
    rep
}
