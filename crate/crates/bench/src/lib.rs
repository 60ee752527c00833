//! Fixtures shared by the benchmarks.

use fasttab_core::data::{random_table_spec, render_synthetic, RenderStyle, Sample};
use fasttab_core::Rng;

/// `n` ruled tables of up to 6×6 with spans of at most 2.
pub fn tables(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let spec = random_table_spec(&mut rng, 6, 6, 2);
            render_synthetic(&format!("b{i}"), &spec, &RenderStyle::default(), &mut rng).expect("valid layout")
        })
        .collect()
}
