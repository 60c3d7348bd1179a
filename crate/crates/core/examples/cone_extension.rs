//! Cone sampling in frequency space and the polynomial extension to the ball.

use calderon_lab::boundary::DirectionFrame;
use calderon_lab::grid::{gaussian_bump_transform, Bump, FrequencyVector};
use calderon_lab::probe::{cone_measure, eta_of_epsilon, extend_lowpass, sample_cone};

fn main() -> calderon_lab::Result<()> {
    let eps = 0.45;
    println!("eta = {:.4}, cone measure = {:.4}", eta_of_epsilon(eps)?, cone_measure(eps)?);
    let bump = Bump {
        center: [0.0; 3],
        width: 0.4,
        amplitude: 1.0,
    };
    let r = 3.0;
    let cone = sample_cone(eps, r, 24, 3, DirectionFrame::new([1.0, 0.0, 0.0])?)?;
    let samples: Vec<_> = cone.kappas.iter().map(|k| (*k, gaussian_bump_transform(&bump, k))).collect();
    let ext = extend_lowpass(&samples, r, 4, 1e-6)?;
    println!("{} samples, condition {:.2e}, fit residual {:.2e}", samples.len(), ext.condition, ext.fit_residual);
    for k in [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 2.5]] {
        let kappa = FrequencyVector(k);
        println!("kappa {k:?}: extension {:.5}  exact {:.5}", ext.eval(&kappa), gaussian_bump_transform(&bump, &kappa));
    }
    Ok(())
}
