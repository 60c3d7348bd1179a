//! Dirichlet solves for the Schrodinger operator and second-order convergence.

use calderon_lab::boundary::BoundaryTrace;
use calderon_lab::experiment::{green_pair_defect, manufactured_error};
use calderon_lab::forward::{check_invertible, solve_dirichlet};
use calderon_lab::grid::{Grid, PotentialSpec, ScalarField};

fn main() -> calderon_lab::Result<()> {
    let spec = PotentialSpec::single_bump([0.0, 0.2, 0.0], 0.5, 3.0);
    let mut prev: Option<(f64, f64)> = None;
    for n in [7, 15, 31] {
        let grid = Grid::new(n)?;
        let q = spec.build(grid, 5.0)?;
        let err = manufactured_error(&q)?;
        let green = green_pair_defect(&q);
        let order = prev.map_or("-".to_string(), |(e, _)| format!("{:.2}", (e / err).log2()));
        println!("n = {n:2}: L2 error {err:.3e}  order {order}  Green defect {green:.3e}");
        prev = Some((err, green));
    }

    let grid = Grid::new(15)?;
    let q = spec.build(grid, 5.0)?;
    println!("smallest |eigenvalue| of -Delta_h + q: {:.4}", check_invertible(&q)?);
    let g = BoundaryTrace::from_fn(grid, |x, _| x[0] * x[1] + x[2]);
    let rep = solve_dirichlet(&q, &ScalarField::zeros(grid), &g)?;
    let s = rep.summary();
    println!("boundary-value solve: {:?} in {} iterations, residual {:.1e}", s.method, s.iterations, s.residual_norm);
    Ok(())
}
