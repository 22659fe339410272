//! One continual-learning run per method on Permuted MNIST, printing the
//! accuracy matrix of each.
//!
//! `cargo run --release --example permuted_mnist -- [EPOCHS]`

use maer::datasets::{load_mnist_dir, permuted_stream, PerTask};
use maer::harness::{run_continual, Method, MethodConfig};
use maer::memory::MesMode;
use maer::metrics::{acc_metric, bwt_metric};

fn main() -> maer::Result<()> {
    let epochs = std::env::args().nth(1).map(|e| e.parse().expect("epochs")).unwrap_or(2);
    let (train, test) = load_mnist_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist"))?;
    let stream = permuted_stream(&train, &test, 5, PerTask::new(2000, 1000), 0)?;

    for method in [Method::Finetune, Method::ErReservoir, Method::Maer, Method::Joint] {
        let cfg = MethodConfig {
            method,
            mem_size: 100,
            epochs,
            mes_mode: MesMode::fast(),
            ..Default::default()
        };
        let out = run_continual(&stream, &cfg)?;
        let bwt = bwt_metric(&out.matrix).map(|b| format!("{b:.4}")).unwrap_or_else(|_| "-".into());
        println!("{method}: ACC {:.4}  BWT {bwt}", acc_metric(&out.matrix)?);
        print!("{}", out.matrix.to_csv());
    }
    Ok(())
}
