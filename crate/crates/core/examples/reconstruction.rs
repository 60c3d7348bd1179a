//! Low-pass reconstruction of q2 - q1 from the partial difference map.

use calderon_lab::boundary::face_partition;
use calderon_lab::dn::PartialDnOperator;
use calderon_lab::grid::{Grid, PotentialSpec, ScalarField};
use calderon_lab::reconstruct::{reconstruct, reconstruct_exact, truncate_fourier, RadiusRule, SamplingConfig, StabilityParams};

fn main() -> calderon_lab::Result<()> {
    let grid = Grid::new(11)?;
    let q1 = ScalarField::zeros(grid);
    let diff = PotentialSpec::single_bump([0.0, 0.0, 0.0], 0.4, 1.0).build(grid, 5.0)?;
    let params = StabilityParams::default();
    let cfg = SamplingConfig {
        radius: RadiusRule::Fixed { r: 3.0 },
        n_dir: 16,
        ..SamplingConfig::default()
    };
    let op = PartialDnOperator::new(&q1, &diff, face_partition([1.0, 0.0, 0.0], cfg.epsilon)?)?;
    let rec = reconstruct(&op, &params, &cfg, Some(&diff))?;
    let rep = &rec.report;
    println!("norm {:.4e}, tau {:.3}, r {:.2}, {} samples, {} skipped", rep.dn_norm, rep.tau, rep.r, rep.samples, rep.skipped);
    println!("relative L2 error {:.4}, H^-1 error {:.3e}", rep.relative_l2_error.unwrap(), rep.hm1_error.unwrap());

    let exact = reconstruct_exact(&diff, [1.0, 0.0, 0.0], rep.dn_norm, &params, &cfg)?;
    let trunc = truncate_fourier(&diff, 3.0);
    println!(
        "exact samples vs truncated transform: {:.3e} relative",
        exact.q_rec.sub(&trunc).l2_norm() / trunc.l2_norm()
    );
    Ok(())
}
