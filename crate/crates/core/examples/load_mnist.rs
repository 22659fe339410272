//! Loads MNIST from IDX files and builds the three MNIST task streams.
//!
//! `cargo run --example load_mnist -- [MNIST_DIR] [EXPORT_DIR]`

use maer::datasets::{load_mnist_dir, permuted_stream, rotated_stream, split_stream, PerTask};

fn main() -> maer::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist").into());
    let (train, test) = load_mnist_dir(&dir)?;
    println!("{dir}: {} train, {} test, {} pixels", train.len(), test.len(), train.input_width());

    let mut counts = [0usize; 10];
    train.labels().iter().for_each(|&l| counts[l] += 1);
    println!("train label counts {counts:?}");

    let per_task = PerTask::new(2000, 1000);
    let p = permuted_stream(&train, &test, 5, per_task, 0)?;
    let (r, angles) = rotated_stream(&train, &test, 5, per_task, 0)?;
    let s = split_stream(&train, &test, 5)?;
    println!("permuted: {} tasks of {} train", p.len(), p.tasks[0].train.len());
    println!("rotated angles: {}", angles.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(", "));
    println!("rotated: {} tasks", r.len());
    for t in 0..s.len() {
        println!("split task {t}: classes {:?}, {} train", s.task_classes(t), s.tasks[t].train.len());
    }
    if let Some(out) = args.next() {
        p.export_csv(&out)?;
        println!("wrote {out}/train.csv and {out}/test.csv");
    }
    Ok(())
}
