//! Sample a potential, take grid Fourier transforms, and round-trip a binary dump.

use calderon_lab::grid::{
    fourier_coefficient, gaussian_bump_transform, read_field_dump, write_field_dump, Bump, FrequencyVector, Grid,
    PotentialSpec,
};

fn main() -> calderon_lab::Result<()> {
    let grid = Grid::new(23)?;
    let bump = Bump {
        center: [0.1, 0.0, -0.1],
        width: 0.4,
        amplitude: 2.0,
    };
    let q = PotentialSpec::GaussianBumps {
        bumps: vec![bump],
        random_count: 0,
        seed: 0,
    }
    .build(grid, 5.0)?;
    println!("n = {}, h = {:.4}, |q|_inf = {:.4}", grid.n_axis(), grid.spacing(), q.sup_norm());

    for k in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, -1.0, 2.0]] {
        let kappa = FrequencyVector(k);
        let grid_value = fourier_coefficient(&q, &kappa);
        let exact = gaussian_bump_transform(&bump, &kappa);
        println!("kappa {k:?}: grid {grid_value:.6}  closed form {exact:.6}");
    }

    let mut buf = Vec::new();
    write_field_dump(&mut buf, "q", &q)?;
    let (header, back) = read_field_dump::<f64>(&mut buf.as_slice())?;
    println!("dump '{}' of {} bytes, identical: {}", header.name, buf.len(), back == q);
    Ok(())
}
