//! Face sets of a direction, the smooth cutoff, and facewise Sobolev norms.

use calderon_lab::boundary::{boundary_cutoff, boundary_sobolev_norm, face_mode, face_partition, Face, Region};
use calderon_lab::grid::Grid;

fn main() -> calderon_lab::Result<()> {
    let grid = Grid::new(15)?;
    for eps in [0.3, 0.45, 0.6] {
        let p = face_partition([1.0, 0.0, 0.0], eps)?;
        let names = |s: &calderon_lab::boundary::FaceSet| s.faces().map(|f| f.index()).collect::<Vec<_>>();
        println!("eps {eps}: F = {:?}  G = {:?}  cutoff faces = {:?}", names(&p.f), names(&p.g), names(&p.gamma_minus_eps));
    }

    let p = face_partition([1.0, 0.0, 0.0], 0.45)?;
    let phi = boundary_cutoff(grid, &p, 0.45)?;
    println!("cutoff range on the boundary: [{:.3}, {:.3}]",
        phi.values().iter().cloned().fold(f64::INFINITY, f64::min),
        phi.max_abs());

    let g = face_mode(grid, Face::ALL[2], 1, 1);
    for s in [-0.5, 0.0, 0.5] {
        println!("H^{s:+} norm of a face mode: {:.4}", boundary_sobolev_norm(&g, s, Region::Gamma, &p)?);
    }
    Ok(())
}
