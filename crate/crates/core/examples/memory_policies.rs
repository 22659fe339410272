//! Buffer contents per task under the three memory policies after a
//! five-task stream.

use maer::datasets::{synthetic_gaussian_stream, SyntheticConfig};
use maer::memory::{EpisodicMemory, MesMode};
use maer::nn::MlpModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn per_task(mem: &EpisodicMemory, tasks: usize) -> Vec<usize> {
    let mut c = vec![0; tasks];
    mem.items().iter().for_each(|i| c[i.task_id] += 1);
    c
}

fn main() -> maer::Result<()> {
    let stream = synthetic_gaussian_stream(&SyntheticConfig::default(), 0)?;
    let tasks = stream.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let phi = MlpModel::new(stream.input_width(), 64, stream.num_classes(), &mut rng)?;

    let cap = 50;
    let mut mes = EpisodicMemory::new(cap);
    let mut res = EpisodicMemory::new(cap);
    let mut ring = EpisodicMemory::new(cap);
    for (t, task) in stream.tasks.iter().enumerate() {
        let s = mes.mes_update(&task.train, t, &phi, &mut rng, MesMode::Exact)?;
        res.reservoir_update(&task.train, t, &mut rng);
        ring.ring_update(&task.train, t, cap / tasks)?;
        println!("task {t}: expansion inserts {}, reservoir inserts {}", s.expansion_inserts, s.reservoir_inserts);
    }
    println!("manifold expansion {:?}", per_task(&mes, tasks));
    println!("reservoir          {:?}", per_task(&res, tasks));
    println!("ring               {:?}", per_task(&ring, tasks));
    Ok(())
}
