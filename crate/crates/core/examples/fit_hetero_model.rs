//! Fit the point and scale regressions on a known heteroscedastic sample.

use windscen::features::{Dataset, FeatureLayout, FeatureSpec};
use windscen::hetero::{standardize, HeteroModel};
use windscen::stats::{mean, std_dev};
use windscen::synth::{regression_sample, NoiseFamily};

fn main() -> windscen::Result<()> {
    let alpha = [2.0, 0.6];
    let beta = [0.3, 0.2];
    let s = regression_sample(&alpha, &beta, NoiseFamily::ScaledT { nu: 5.0 }, 10_000, 10.0, 1);
    let n = s.y.len();
    let ds = Dataset {
        x: s.x,
        y: s.y,
        slots: (0..n).collect(),
        row_times: vec![chrono::DateTime::UNIX_EPOCH; n],
        layout: FeatureLayout::from_parts(&FeatureSpec::nwp_only(), &[], 0, 1, 1)?,
        dropped: 0,
    };
    let model = HeteroModel::fit(&ds, &ds, 100.0);
    println!("alpha true {alpha:?} fitted {:.3?}", model.alpha);
    println!("beta  true {beta:?} fitted {:.3?} (identified up to scale)", model.beta);

    let u = standardize(&ds, &model.alpha, &model.beta, model.h_floor);
    println!("standardized residuals: mean {:.4}, sd {:.4}", mean(&u), std_dev(&u));
    for q in [0.05, 0.5, 0.95] {
        println!("  ECDF quantile {q}: {:.3}", model.ecdf.inverse_clamped(q));
    }
    let (y, h) = model.predict(&[1.0, 5.0])?;
    println!("at x = 5: point {y:.3}, scale {h:.3}");
    Ok(())
}
