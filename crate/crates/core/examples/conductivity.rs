//! Conductivity to potential, the DN relation, and recovery of sigma2.

use calderon_lab::conductivity::{
    dn_relation_defect, gauge_defect, liouville_potential, recover_sigma, CompactBump, ConductivitySpec,
};
use calderon_lab::grid::Grid;

fn main() -> calderon_lab::Result<()> {
    for n in [7, 15, 31] {
        let s = ConductivitySpec::Exponential { a: [1.0, 0.0, 0.0] }.build(Grid::new(n)?)?;
        let q = liouville_potential(&s);
        let dev = q.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        println!("exp(2 x1), n = {n:2}: max |q - 1| = {dev:.2e}, relation defect {:.2e}", dn_relation_defect(&s)?);
    }

    let grid = Grid::new(15)?;
    let spec = |c: [f64; 3], a: f64| ConductivitySpec::CompactBumps {
        background: 1.0,
        bumps: vec![CompactBump {
            center: c,
            radius: 0.5,
            amplitude: a,
        }],
    };
    let s1 = spec([0.1, 0.0, 0.0], 0.4).build(grid)?;
    let s2 = spec([-0.1, 0.1, 0.0], 0.6).build(grid)?;
    println!("gauge defect {:.3e}", gauge_defect(&s1, &s2)?);
    let (q1, q2) = (liouville_potential(&s1), liouville_potential(&s2));
    let rec = recover_sigma(&s1, &q2.sub(&q1), &q1)?;
    println!(
        "recovery: {} iterations, max error {:.2e}, contraction {:.3?}",
        rec.report.iterations,
        rec.sigma2.interior().sub(s2.interior()).sup_norm(),
        rec.report.contraction_ratios
    );
    Ok(())
}
