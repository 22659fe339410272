//! Accuracy matrix bookkeeping and the summary metrics.

use maer::metrics::{acc_metric, bwt_metric, gem_bwt, AccuracyMatrix};

fn main() -> maer::Result<()> {
    let mut m = AccuracyMatrix::new(3);
    let rows = [[0.9, 0.0, 0.0], [0.8, 0.9, 0.0], [0.7, 0.85, 0.9]];
    for (i, row) in rows.iter().enumerate() {
        for (j, &a) in row.iter().enumerate().take(i + 1) {
            m.record(i, j, a)?;
        }
    }
    print!("{}", m.to_csv());
    println!("ACC      {:.4}", acc_metric(&m)?);
    // max-drop form: positive means forgetting
    println!("BWT      {:.4}", bwt_metric(&m)?);
    // final minus just-learned: negative means forgetting
    println!("GEM BWT  {:.4}", gem_bwt(&m)?);
    Ok(())
}
