//! Statistics pooling: a variable-length embedding sequence becomes one
//! fixed vector of six statistics per dimension.
//!
//!     cargo run --example pooling

use fedspeech::pool::{pool_statistics, EmbeddingSequence, STATISTICS};
use ndarray::array;

fn main() -> fedspeech::Result<()> {
    // Five frames of a 3-dimensional embedding.
    let frames = array![
        [0.1, 1.0, -2.0],
        [0.4, 1.0, -1.0],
        [0.2, 1.0, 0.0],
        [0.9, 1.0, 1.0],
        [0.3, 1.0, 2.0],
    ];
    let seq = EmbeddingSequence::new("demo", frames)?;
    let pooled = pool_statistics(&seq)?;
    assert_eq!(pooled.len(), STATISTICS * seq.dim());

    // Statistic-major layout: all means, then all stds, ...
    let names = ["mean", "std", "skewness", "kurtosis", "min", "max"];
    for (s, name) in names.iter().enumerate() {
        let row = &pooled[s * seq.dim()..(s + 1) * seq.dim()];
        println!("{name:>9}: {row:?}");
    }
    // The constant column has zero spread, so its higher moments are 0 by
    // convention instead of NaN.
    Ok(())
}
