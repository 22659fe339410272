//! Manifold expansion sampling against plain reservoir sampling on a 2-D
//! stream: the expansion rule keeps outlying points, so the buffer's
//! diameter (max distance to its centroid) stays larger.

use maer::datasets::LabeledDataset;
use maer::memory::{EpisodicMemory, IdentityFeatures, ManifoldSummary, MesMode};
use maer::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn spread(mem: &EpisodicMemory) -> maer::Result<f64> {
    Ok(ManifoldSummary::of(&mem.inputs())?.diameter)
}

fn main() -> maer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::<f64>::new(0.5, 0.1).unwrap();
    let n = 2000;
    let pts: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng).clamp(0.0, 1.0)).collect();
    let data = LabeledDataset::new(Tensor::from_vec(&[n, 2], pts)?, vec![0; n], 1)?;

    let mut mes = EpisodicMemory::new(50);
    let mut res = EpisodicMemory::new(50);
    let stats = mes.mes_update(&data, 0, &IdentityFeatures, &mut rng, MesMode::Exact)?;
    res.reservoir_update(&data, 0, &mut rng);

    println!("{stats:?}");
    println!("diameter  expansion {:.4}   reservoir {:.4}", spread(&mes)?, spread(&res)?);
    Ok(())
}
