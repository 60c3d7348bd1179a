//! Uniform grid on the cube `(-1,1)^3`, interior-node fields, Fourier
//! coefficients and volume Sobolev norms.
//!
//! Interior node `(i,j,k)` sits at `(-1 + (i+1)h, ...)` with `h = 2/(n+1)` and
//! is stored at flat index `i + n(j + n k)`.  Volume integrals use the
//! interior-node rule with end weights `3h/2` on the two outermost nodes of each
//! axis, so the weights of a line sum to exactly 2.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{FieldKind, Scalar};
use crate::spectral::FourierLattice;

pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(n_axis: usize) -> Result<Self> {
        if n_axis < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "n_axis must be at least {MIN_NODES}, got {n_axis}"
            )));
        }
        Ok(Self {
            n: n_axis,
            h: 2.0 / (n_axis + 1) as f64,
        })
    }

    pub fn n_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// `max |x|` over the closed cube.
    pub fn diameter(&self) -> f64 {
        3f64.sqrt()
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + (i + 1) as f64 * self.h
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        (idx % self.n, (idx / self.n) % self.n, idx / (self.n * self.n))
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unindex(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// One-dimensional quadrature weight of node `i`.
    pub fn axis_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            1.5 * self.h
        } else {
            self.h
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j, k) = self.unindex(idx);
        self.axis_weight(i) * self.axis_weight(j) * self.axis_weight(k)
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|idx| self.weight(idx)).collect()
    }

    pub fn lattice(&self) -> FourierLattice {
        FourierLattice::new(self.n, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector(pub [f64; 3]);

impl FrequencyVector {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Self {
        Self([k1, k2, k3])
    }

    pub fn norm(&self) -> f64 {
        dot3(&self.0, &self.0).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Samples at the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T = f64> {
    grid: Grid,
    values: Vec<T>,
}

pub type ComplexField = ScalarField<Complex64>;

impl<T: Scalar> ScalarField<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite field value at node {pos}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> T) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> FieldKind {
        T::KIND
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> ScalarField<U> {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<U: Scalar, V: Scalar>(&self, other: &ScalarField<U>, f: impl Fn(T, U) -> V) -> ScalarField<V> {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| v.to_complex())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// `L^2(Omega)` norm by the grid quadrature.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(idx, v)| self.grid.weight(idx) * v.abs_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `int conj(self) other dx` by the grid quadrature.
    pub fn inner(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .fold(T::zero(), |acc, (idx, (&a, &b))| acc + a.conj() * b * self.grid.weight(idx))
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }
}

impl ScalarField<Complex64> {
    pub fn real_part(&self) -> ScalarField<f64> {
        self.map(|v| v.re)
    }
}

/// `int_Omega q(x) exp(-i kappa.x) dx` with `q` extended by zero outside the cube.
pub fn fourier_coefficient<T: Scalar>(q: &ScalarField<T>, kappa: &FrequencyVector) -> Complex64 {
    let grid = q.grid();
    let n = grid.n_axis();
    let phases: Vec<Vec<Complex64>> = (0..3)
        .map(|axis| {
            (0..n)
                .map(|i| Complex64::from_polar(grid.axis_weight(i), -kappa.0[axis] * grid.coord(i)))
                .collect()
        })
        .collect();
    let vals = q.values();
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let mut plane = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let row = &vals[grid.index(0, j, k)..grid.index(0, j, k) + n];
            let line: Complex64 = row
                .iter()
                .zip(&phases[0])
                .map(|(&v, &p)| v.to_complex() * p)
                .sum();
            plane += line * phases[1][j];
        }
        total += plane * phases[2][k];
    }
    total
}

/// Fourier transform of the zero-extended field on the padded lattice
/// (FFT bin order), consistent with [`fourier_coefficient`] at lattice points.
pub fn lattice_transform<T: Scalar>(q: &ScalarField<T>, lattice: &FourierLattice) -> Vec<Complex64> {
    let grid = q.grid();
    let weighted: Vec<Complex64> = q
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| v.to_complex() * grid.weight(idx))
        .collect();
    lattice.transform(&weighted)
}

/// Whole-space `H^s` norm `((2 pi)^-3 int (1+|k|^2)^s |q^(k)|^2 dk)^{1/2}` of the
/// zero-extended field, summed over the padded DFT lattice.
pub fn volume_sobolev_norm<T: Scalar>(q: &ScalarField<T>, s: f64) -> Result<f64> {
    if !(-2.0..=2.0).contains(&s) {
        return Err(Error::InvalidInput(format!("Sobolev index {s} outside [-2, 2]")));
    }
    let grid = q.grid();
    let h3 = grid.spacing().powi(3);
    let lattice = grid.lattice();
    // sqrt(w/h^3) scaling makes the lattice Parseval sum equal the weighted quadrature.
    let weighted: Vec<Complex64> = q
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| v.to_complex() * (grid.weight(idx) / h3).sqrt() * h3)
        .collect();
    let spectrum = lattice.transform(&weighted);
    let total: f64 = spectrum
        .iter()
        .enumerate()
        .map(|(idx, f)| {
            let k = lattice.wavevector(idx);
            (1.0 + dot3(&k, &k)).powf(s) * f.norm_sqr()
        })
        .sum();
    Ok((total / lattice.period().powi(3)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: [f64; 3],
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    /// `amplitude * exp(-|x - center|^2 / width^2)`
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        self.amplitude * (-dot3(&d, &d) / (self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Explicit bumps plus `random_count` extra bumps drawn from `seed`.
    GaussianBumps {
        #[serde(default)]
        bumps: Vec<Bump>,
        #[serde(default)]
        random_count: usize,
        #[serde(default)]
        seed: u64,
    },
    Constant {
        value: f64,
    },
    File {
        path: String,
    },
}

impl PotentialSpec {
    pub fn single_bump(center: [f64; 3], width: f64, amplitude: f64) -> Self {
        PotentialSpec::GaussianBumps {
            bumps: vec![Bump {
                center,
                width,
                amplitude,
            }],
            random_count: 0,
            seed: 0,
        }
    }

    /// Sample on `grid`, rejecting potentials with sup-norm above `delta`.
    pub fn build(&self, grid: Grid, delta: f64) -> Result<ScalarField> {
        let field = match self {
            PotentialSpec::Constant { value } => ScalarField::constant(grid, *value),
            PotentialSpec::GaussianBumps {
                bumps,
                random_count,
                seed,
            } => {
                let mut all = bumps.clone();
                all.extend(random_bumps(*random_count, *seed, delta));
                ScalarField::from_fn(grid, |x| all.iter().map(|b| b.eval(x)).sum())
            }
            PotentialSpec::File { path } => {
                let file = std::fs::File::open(path)?;
                let (header, field) = read_field_dump::<f64>(&mut std::io::BufReader::new(file))?;
                if header.n_axis != grid.n_axis() {
                    return Err(Error::InvalidInput(format!(
                        "potential file {path} has n_axis {} but grid has {}",
                        header.n_axis,
                        grid.n_axis()
                    )));
                }
                field
            }
        };
        let sup = field.sup_norm();
        if sup > delta * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "potential sup-norm {sup:.4} exceeds the declared bound delta = {delta}"
            )));
        }
        Ok(field)
    }
}

/// Bumps with centers in `[-0.5,0.5]^3`, widths in `[0.25,0.5]`, and
/// amplitudes whose absolute values sum to at most `delta / 2`.
fn random_bumps(count: usize, seed: u64, delta: f64) -> Vec<Bump> {
    if count == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 0.5 * delta / count as f64;
    (0..count)
        .map(|_| Bump {
            center: [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ],
            width: rng.gen_range(0.25..0.5),
            amplitude: rng.gen_range(-budget..budget),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub n_axis: usize,
    pub kind: FieldKind,
    pub name: String,
}

/// Write the one-line JSON header followed by little-endian `f64` samples
/// (complex values as interleaved re/im pairs).
pub fn write_dump<T: Scalar>(out: &mut impl Write, n_axis: usize, name: &str, values: &[T]) -> Result<()> {
    let header = DumpHeader {
        n_axis,
        kind: T::KIND,
        name: name.to_string(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(values.len() * 16);
    for v in values {
        bytes.extend_from_slice(&v.re().to_le_bytes());
        if T::KIND == FieldKind::Complex {
            bytes.extend_from_slice(&v.im().to_le_bytes());
        }
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_dump<T: Scalar>(input: &mut impl BufRead) -> Result<(DumpHeader, Vec<T>)> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end())?;
    if header.kind != T::KIND {
        return Err(Error::InvalidInput(format!(
            "dump holds {:?} data, expected {:?}",
            header.kind,
            T::KIND
        )));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let width = if T::KIND == FieldKind::Complex { 16 } else { 8 };
    if bytes.len() % width != 0 {
        return Err(Error::InvalidInput("truncated dump payload".into()));
    }
    let read_f64 = |chunk: &[u8]| f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    let values = bytes
        .chunks_exact(width)
        .map(|c| {
            if width == 16 {
                T::from_complex(Complex64::new(read_f64(&c[..8]), read_f64(&c[8..])))
            } else {
                T::from_real(read_f64(c))
            }
        })
        .collect();
    Ok((header, values))
}

pub fn write_field_dump<T: Scalar>(out: &mut impl Write, name: &str, field: &ScalarField<T>) -> Result<()> {
    write_dump(out, field.grid().n_axis(), name, field.values())
}

pub fn read_field_dump<T: Scalar>(input: &mut impl BufRead) -> Result<(DumpHeader, ScalarField<T>)> {
    let (header, values) = read_dump::<T>(input)?;
    let grid = Grid::new(header.n_axis)?;
    let field = ScalarField::from_values(grid, values)?;
    Ok((header, field))
}

/// Closed form of `int_{(-1,1)^3} exp(-i kappa.x) dx`.
pub fn cube_indicator_transform(kappa: &FrequencyVector) -> f64 {
    kappa
        .0
        .iter()
        .map(|&k| if k.abs() < 1e-14 { 2.0 } else { 2.0 * k.sin() / k })
        .product()
}

/// Continuum transform of a Gaussian bump `a exp(-|x-c|^2/w^2)` over all of
/// space: `a (pi w^2)^{3/2} exp(-w^2|k|^2/4) exp(-i k.c)`.
pub fn gaussian_bump_transform(bump: &Bump, kappa: &FrequencyVector) -> Complex64 {
    let w2 = bump.width * bump.width;
    let mag = bump.amplitude * (PI * w2).powf(1.5) * (-w2 * kappa.norm().powi(2) / 4.0).exp();
    Complex64::from_polar(mag, -dot3(&kappa.0, &bump.center))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spacing_examples() {
        assert_relative_eq!(Grid::new(8).unwrap().spacing(), 2.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(Grid::new(31).unwrap().spacing(), 1.0 / 16.0, epsilon = 1e-15);
        assert!(matches!(Grid::new(2), Err(Error::InvalidGrid(_))));
        let g = Grid::new(13).unwrap();
        assert!((g.spacing() * 14.0 - 2.0).abs() < 1e-15);
        assert_relative_eq!(g.diameter(), (1.0f64 + 1.0 + 1.0).sqrt());
    }

    #[test]
    fn constant_field_has_cube_volume() {
        let grid = Grid::new(9).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        let c = fourier_coefficient(&one, &FrequencyVector::new(0.0, 0.0, 0.0));
        assert_relative_eq!(c.re, 8.0, epsilon = 1e-12);
        assert!(c.im.abs() < 1e-12);
    }

    #[test]
    fn constant_field_at_pi_vanishes_to_second_order() {
        let kappa = FrequencyVector::new(PI, 0.0, 0.0);
        assert!(cube_indicator_transform(&kappa).abs() < 1e-15);
        let mut errs = Vec::new();
        for n in [15, 31] {
            let grid = Grid::new(n).unwrap();
            let c = fourier_coefficient(&ScalarField::constant(grid, 1.0), &kappa);
            errs.push(c.norm());
        }
        assert!(errs[1] < 0.3 * errs[0], "errors {errs:?}");
        assert!(errs[1] < 0.05);
    }

    #[test]
    fn gaussian_bump_coefficient_matches_refined_quadrature() {
        let bump = Bump {
            center: [0.1, -0.2, 0.05],
            width: 0.3,
            amplitude: 1.0,
        };
        let kappa = FrequencyVector::new(1.3, -0.4, 2.0);
        let coarse = Grid::new(15).unwrap();
        let fine = Grid::new(31).unwrap();
        let c_coarse = fourier_coefficient(&ScalarField::from_fn(coarse, |x| bump.eval(x)), &kappa);
        let c_fine = fourier_coefficient(&ScalarField::from_fn(fine, |x| bump.eval(x)), &kappa);
        let exact = gaussian_bump_transform(&bump, &kappa);
        let e_coarse = (c_coarse - exact).norm();
        let e_fine = (c_fine - exact).norm();
        assert!(e_fine < 1e-3 * exact.norm());
        assert!(e_fine <= e_coarse);
    }

    #[test]
    fn sobolev_norm_of_zero_is_zero() {
        let grid = Grid::new(7).unwrap();
        let z = ScalarField::<f64>::zeros(grid);
        for s in [-1.0, 0.0, 0.5, 1.0] {
            assert_eq!(volume_sobolev_norm(&z, s).unwrap(), 0.0);
        }
        assert!(volume_sobolev_norm(&z, 3.0).is_err());
    }

    #[test]
    fn sobolev_norm_s0_is_quadrature_l2() {
        let grid = Grid::new(11).unwrap();
        let q = ScalarField::from_fn(grid, |x| (3.0 * x[0]).sin() + x[1] * x[2] + 0.3);
        let spectral = volume_sobolev_norm(&q, 0.0).unwrap();
        assert_relative_eq!(spectral, q.l2_norm(), max_relative = 1e-10);
    }

    #[test]
    fn sobolev_norm_increases_with_index() {
        let grid = Grid::new(15).unwrap();
        let bump = Bump {
            center: [0.0; 3],
            width: 0.4,
            amplitude: 1.0,
        };
        let q = ScalarField::from_fn(grid, |x| bump.eval(x));
        let lattice = grid.lattice();
        let h3 = grid.spacing().powi(3);
        // Reweight so fourier_coefficient reproduces the sqrt(w h^3) Parseval weights.
        let reweighted = ScalarField::from_fn(grid, |x| bump.eval(x));
        let reweighted = ScalarField::from_values(
            grid,
            reweighted
                .values()
                .iter()
                .enumerate()
                .map(|(idx, v)| v * (h3 / grid.weight(idx)).sqrt())
                .collect(),
        )
        .unwrap();
        // Direct lattice summation from fourier_coefficient at every lattice point.
        let oracle = |s: f64| -> f64 {
            let size = lattice.size();
            let mut total = 0.0;
            for idx in 0..size * size * size {
                let k = lattice.wavevector(idx);
                let c = fourier_coefficient(&reweighted, &FrequencyVector(k));
                total += (1.0 + dot3(&k, &k)).powf(s) * c.norm_sqr();
            }
            (total / lattice.period().powi(3)).sqrt()
        };
        let norms: Vec<f64> = [-1.0, 0.0, 1.0]
            .iter()
            .map(|&s| volume_sobolev_norm(&q, s).unwrap())
            .collect();
        assert!(norms[0] < norms[1] && norms[1] < norms[2]);
        for (s, n) in [-1.0, 0.0, 1.0].iter().zip(&norms) {
            assert_relative_eq!(*n, oracle(*s), max_relative = 1e-9);
        }
    }

    #[test]
    fn dump_round_trip() {
        let grid = Grid::new(5).unwrap();
        let q = ScalarField::from_fn(grid, |x| Complex64::new(x[0], x[1] * x[2]));
        let mut buf = Vec::new();
        write_field_dump(&mut buf, "psi", &q).unwrap();
        let first_line = buf.split(|&b| b == b'\n').next().unwrap();
        let header: serde_json::Value = serde_json::from_slice(first_line).unwrap();
        assert_eq!(header["n_axis"], 5);
        assert_eq!(header["kind"], "complex");
        assert_eq!(header["name"], "psi");
        assert_eq!(buf.len(), first_line.len() + 1 + 125 * 16);
        let (h, back) = read_field_dump::<Complex64>(&mut &buf[..]).unwrap();
        assert_eq!(h.name, "psi");
        assert_eq!(back, q);
        assert!(read_field_dump::<f64>(&mut &buf[..]).is_err());
    }

    #[test]
    fn potential_spec_respects_delta() {
        let grid = Grid::new(9).unwrap();
        let spec = PotentialSpec::single_bump([0.0; 3], 0.4, 3.0);
        assert!(spec.build(grid, 5.0).is_ok());
        assert!(spec.build(grid, 2.0).is_err());
        let random = PotentialSpec::GaussianBumps {
            bumps: vec![],
            random_count: 4,
            seed: 7,
        };
        let a = random.build(grid, 5.0).unwrap();
        let b = random.build(grid, 5.0).unwrap();
        assert_eq!(a, b);
        assert!(a.sup_norm() <= 5.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn fourier_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0,
                                 k1 in -4.0f64..4.0, k2 in -4.0f64..4.0, k3 in -4.0f64..4.0) {
                let grid = Grid::new(6).unwrap();
                let q1 = ScalarField::from_fn(grid, |x| x[0] * x[1] + 0.2);
                let q2 = ScalarField::from_fn(grid, |x| (x[2] * 2.0).cos());
                let kappa = FrequencyVector::new(k1, k2, k3);
                let combo = q1.scale(a).add(&q2.scale(b));
                let lhs = fourier_coefficient(&combo, &kappa);
                let rhs = fourier_coefficient(&q1, &kappa) * a + fourier_coefficient(&q2, &kappa) * b;
                prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
            }

            #[test]
            fn real_fields_are_conjugate_symmetric(k1 in -4.0f64..4.0, k2 in -4.0f64..4.0, k3 in -4.0f64..4.0) {
                let grid = Grid::new(6).unwrap();
                let q = ScalarField::from_fn(grid, |x| (x[0] + 2.0 * x[1]).sin() + x[2]);
                let kappa = FrequencyVector::new(k1, k2, k3);
                let plus = fourier_coefficient(&q, &kappa);
                let minus = fourier_coefficient(&q, &kappa.scaled(-1.0));
                prop_assert!((plus - minus.conj()).norm() <= 1e-12 * (1.0 + plus.norm()));
            }

            #[test]
            fn parseval_holds_for_arbitrary_fields(vals in proptest::collection::vec(-3.0f64..3.0, 125)) {
                let grid = Grid::new(5).unwrap();
                let q = ScalarField::from_values(grid, vals).unwrap();
                let l2 = q.l2_norm();
                let spectral = volume_sobolev_norm(&q, 0.0).unwrap();
                prop_assert!((spectral - l2).abs() <= 1e-8 * l2.max(1e-300));
            }
        }
    }
}
