//! Feature distillation: pulls a student's hidden features toward a frozen
//! teacher's by gradient descent on the W2 matching loss alone.

use maer::losses::w2_distill;
use maer::nn::MlpModel;
use maer::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> maer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let teacher = MlpModel::new(10, 32, 4, &mut rng)?.snapshot();
    let mut student = MlpModel::new(10, 32, 4, &mut rng)?;
    let x = Tensor::from_vec(&[64, 10], (0..640).map(|_| rng.gen::<f64>()).collect())?;
    let target = teacher.features(&x)?;
    let classifier = student.layers()[2].clone();

    for step in 0..=400 {
        let pass = student.forward(&x)?;
        let loss = w2_distill(&pass.features, &target)?;
        if step % 50 == 0 {
            println!("step {step:>3}  W2 {:.5}", loss.value);
        }
        let grads = student.backward_from(&pass, None, loss.feature_grad.as_ref())?;
        student.sgd_step(&grads, 0.05)?;
    }
    // the classifier layer never receives a gradient from this loss
    println!("classifier unchanged: {}", student.layers()[2] == classifier);
    Ok(())
}
