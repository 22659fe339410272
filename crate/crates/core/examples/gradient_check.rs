//! Compares the analytic gradient of the replay objective with central
//! finite differences on a tiny network.

use maer::losses::{maer_loss, Batch, ReplayTerms};
use maer::nn::MlpModel;
use maer::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> maer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model = MlpModel::new(4, 6, 3, &mut rng)?;
    let teacher = MlpModel::new(4, 6, 3, &mut rng)?.snapshot();
    let mut rand_batch = |n: usize| {
        let x = Tensor::from_vec(&[n, 4], (0..n * 4).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        (x, y)
    };
    let (xc, yc) = rand_batch(3);
    let (xr, yr) = rand_batch(2);

    let objective = |m: &MlpModel| {
        maer_loss(
            m,
            Some(&teacher),
            Batch { inputs: &xc, labels: &yc },
            Some(Batch { inputs: &xr, labels: &yr }),
            ReplayTerms::FULL,
        )
    };
    let out = objective(&model)?;
    println!(
        "loss {:.6} = CE {:.6} + CE(replay) {:.6} + W2 {:.6}",
        out.total,
        out.ce_current,
        out.ce_replay.unwrap_or(0.0),
        out.distill.unwrap_or(0.0)
    );

    let analytic: Vec<f64> = out.grads.params().flat_map(|p| p.data().to_vec()).collect();
    let h = 1e-5;
    let mut numeric = Vec::with_capacity(analytic.len());
    let n_tensors = model.params().count();
    for t in 0..n_tensors {
        let len = model.params().nth(t).unwrap().len();
        for i in 0..len {
            let orig = model.params().nth(t).unwrap().data()[i];
            model.params_mut().nth(t).unwrap().data_mut()[i] = orig + h;
            let up = objective(&model)?.total;
            model.params_mut().nth(t).unwrap().data_mut()[i] = orig - h;
            let down = objective(&model)?.total;
            model.params_mut().nth(t).unwrap().data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    println!("{} parameters", analytic.len());
    println!("relative error {:.3e}", norm(&diff) / norm(&analytic).max(norm(&numeric)));
    Ok(())
}
