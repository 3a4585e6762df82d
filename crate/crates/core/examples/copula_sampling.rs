//! Estimate a Gaussian copula from normal scores and draw correlated samples.

use nalgebra::DMatrix;
use windscen::copula::{draw_block, estimate_correlation, IndexMap};
use windscen::synth::gaussian_copula_sample;

fn main() -> windscen::Result<()> {
    let (farms, horizons) = (2, 3);
    let d = farms * horizons;
    let truth = DMatrix::from_fn(d, d, |i, j| 0.7f64.powi((i as i32 - j as i32).abs()));
    let g = gaussian_copula_sample(&truth, 5000, 3)?;
    let model = estimate_correlation(&g, IndexMap::new(farms, horizons))?;
    println!("estimated correlation:\n{:.3}", model.sigma_n);
    println!("repair: {:?}", model.diagnostics.repair);

    let block = draw_block(&model, 4, 11);
    for s in 0..block.rows {
        println!("sample {s}: {:.3?}", block.row(s));
    }
    Ok(())
}
