//! Partial Dirichlet-to-Neumann difference map and its H^-1/2 -> H^1/2 norm.

use calderon_lab::boundary::face_partition;
use calderon_lab::dn::{dn_symmetry_defect, operator_norm, operator_norm_dense, PartialDnOperator};
use calderon_lab::grid::{Grid, PotentialSpec, ScalarField};

fn main() -> calderon_lab::Result<()> {
    let grid = Grid::new(9)?;
    let q1 = ScalarField::zeros(grid);
    let bump = PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, 1.0).build(grid, 5.0)?;
    let part = face_partition([1.0, 0.0, 0.0], 0.45)?;

    for s in [0.4, 0.2, 0.1] {
        let op = PartialDnOperator::new(&q1, &q1.add(&bump.scale(s)), part)?;
        let rep = operator_norm(&op)?;
        println!("scale {s}: norm {:.5e} after {} Lanczos steps", rep.norm, rep.iterations);
    }

    let op = PartialDnOperator::new(&q1, &bump, part)?;
    println!("dense SVD check: {:.5e} vs {:.5e}", operator_norm_dense(&op)?, operator_norm(&op)?.norm);
    let zero = PartialDnOperator::new(&bump, &bump, part)?;
    println!("identical potentials: {:.1e}", operator_norm(&zero)?.norm);
    println!("symmetry defect of the full map: {:.3e}", dn_symmetry_defect(&bump)?);
    Ok(())
}
