//! CE replay vs CE + W2 replay vs full MaER through the experiment runner,
//! on the synthetic Gaussian stream (no dataset files needed).

use maer::experiment::{run_grid, summarize, DatasetKind, ExperimentGrid};
use maer::harness::Method;

fn main() -> maer::Result<()> {
    let out = std::env::temp_dir().join("maer_ablation");
    let mut grid = ExperimentGrid {
        dataset: DatasetKind::Synthetic,
        tasks: 5,
        train_per_task: 200,
        test_per_task: 100,
        methods: vec![Method::CeOnly, Method::CeWd, Method::Maer],
        mem_sizes: vec![10, 30],
        seeds: vec![0, 1, 2],
        out_dir: out.clone(),
        ..Default::default()
    };
    grid.base.epochs = 3;
    grid.base.lr = 0.05;
    grid.base.hidden_width = 64;
    run_grid(&grid)?;
    print!("{}", summarize(&out)?);
    println!("files in {}", out.display());
    Ok(())
}
