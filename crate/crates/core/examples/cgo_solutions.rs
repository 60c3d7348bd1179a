//! Phase pairs and complex geometrical optics solutions vanishing on the shadowed faces.

use calderon_lab::cgo::{cgo_verify, make_cgo_pair, solve_cgo};
use calderon_lab::grid::{FrequencyVector, Grid, PotentialSpec};

fn main() -> calderon_lab::Result<()> {
    let xi = [1.0, 0.0, 0.0];
    let eps = 0.45;
    let pair = make_cgo_pair(&FrequencyVector::new(0.0, 1.0, 0.0), 2.0, xi, eps, 1.0)?;
    println!("zeta {:?}  ell {:.4?}  invariant defect {:.1e}", pair.zeta, pair.ell, pair.invariant_defect());

    let grid = Grid::new(15)?;
    let q = PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, 5.0).build(grid, 5.0)?;
    let kappa = FrequencyVector::new(0.0, 0.5, 0.2);
    for tau in [2.0, 4.0, 8.0] {
        let pair = make_cgo_pair(&kappa, tau, xi, eps, 1.0)?;
        let (rho1, _) = pair.discrete_phases(grid.spacing())?;
        let sol = solve_cgo(&q, rho1, eps)?;
        let diag = cgo_verify(&sol, &q);
        println!(
            "tau {tau:4.1}: |psi| = {:.4}  residual {:.1e}  max |1 + psi| on cutoff faces {:.1e}",
            sol.psi_l2, diag.pde_residual, diag.boundary_max
        );
    }
    Ok(())
}
