//! Fourier coefficients of q2 - q1 from boundary measurements, against the grid transform.

use calderon_lab::boundary::face_partition;
use calderon_lab::dn::PartialDnOperator;
use calderon_lab::grid::{fourier_coefficient, FrequencyVector, Grid, PotentialSpec, ScalarField};
use calderon_lab::probe::{alessandrini_estimate, ProbeOptions};

fn main() -> calderon_lab::Result<()> {
    let grid = Grid::new(15)?;
    let q1 = ScalarField::zeros(grid);
    let q2 = PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, 3.0).build(grid, 5.0)?;
    let op = PartialDnOperator::new(&q1, &q2, face_partition([1.0, 0.0, 0.0], 0.45)?)?;
    let kappa = FrequencyVector::new(0.0, 0.5, 0.2);
    let exact = fourier_coefficient(&q2, &kappa);
    println!("grid transform {exact:.6}");
    for (tau, noise) in [(2.0, 0.0), (4.0, 0.0), (8.0, 0.0), (8.0, 1e-4)] {
        let opts = ProbeOptions {
            noise,
            seed: 3,
            ..ProbeOptions::default()
        };
        let e = alessandrini_estimate(&op, &kappa, tau, 0.45, &opts)?;
        println!("tau {tau:4.1} noise {noise:.0e}: {:.6}  error {:.2e}", e.value, (e.value - exact).norm());
    }
    Ok(())
}
