//! Dirichlet-to-Neumann maps: full, difference and partial operators, and an
//! estimate of the partial difference operator's norm from `H^-1/2(F)` to `H^1/2(G)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{conormal_difference, face_mode, trace1, BoundaryTrace, Face, FacePartition, FaceSet, FaceSpectral};
use crate::error::{Error, Result};
use crate::forward::DiscreteOperator;
use crate::grid::{Grid, ScalarField};
use crate::krylov::{pcg, KrylovConfig};
use crate::scalar::{dot, Scalar};

/// Discrete outward normal derivative used as the Neumann trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxRule {
    /// `(3 u_b - 4 u_1 + u_2) / 2h`, second order.
    #[default]
    OneSided,
    /// `(u_b - u_1) / h`, for which the discrete Green identity is exact.
    Conormal,
}

impl FluxRule {
    /// Flux of an interior field with zero Dirichlet data.
    pub(crate) fn of_interior<T: Scalar>(self, grid: &Grid, w: &[T]) -> BoundaryTrace<T> {
        let n = grid.n_axis();
        let h = grid.spacing();
        let mut out = BoundaryTrace::zeros(*grid);
        for face in Face::ALL {
            let dst = out.face_mut(face);
            for b in 0..n {
                for a in 0..n {
                    let w1 = w[face.interior_index(grid, a, b, 0)];
                    dst[a + n * b] = match self {
                        FluxRule::OneSided => (w[face.interior_index(grid, a, b, 1)] - w1 * 4.0) * (0.5 / h),
                        FluxRule::Conormal => -w1 * (1.0 / h),
                    };
                }
            }
        }
        out
    }

    /// Transpose of [`Self::of_interior`].
    pub(crate) fn transpose<T: Scalar>(self, y: &BoundaryTrace<T>) -> Vec<T> {
        let grid = *y.grid();
        let n = grid.n_axis();
        let h = grid.spacing();
        let mut out = vec![T::zero(); grid.len()];
        for face in Face::ALL {
            let vals = y.face(face);
            for b in 0..n {
                for a in 0..n {
                    let v = vals[a + n * b];
                    match self {
                        FluxRule::OneSided => {
                            out[face.interior_index(&grid, a, b, 0)] += v * (-2.0 / h);
                            out[face.interior_index(&grid, a, b, 1)] += v * (0.5 / h);
                        }
                        FluxRule::Conormal => out[face.interior_index(&grid, a, b, 0)] += v * (-1.0 / h),
                    }
                }
            }
        }
        out
    }
}

/// `Lambda_q g`: Neumann trace of the solution of `(-Delta_h + q) u = 0`, `u = g` on the boundary.
/// The caller is responsible for `q` being admissible (see [`crate::forward::check_invertible`]).
pub fn dn_apply(q: &ScalarField, g: &BoundaryTrace) -> Result<BoundaryTrace> {
    dn_apply_with(&DiscreteOperator::new(q), g, FluxRule::OneSided)
}

pub fn dn_apply_with<T: Scalar>(op: &DiscreteOperator, g: &BoundaryTrace<T>, flux: FluxRule) -> Result<BoundaryTrace<T>> {
    let rep = op.solve(&ScalarField::zeros(*op.grid()), g)?;
    Ok(match flux {
        FluxRule::OneSided => trace1(&rep.grid_function()),
        FluxRule::Conormal => conormal_difference(&rep.grid_function()),
    })
}

/// Partial difference map `g in F -> (Lambda_q1 - Lambda_q2) g on G`.
#[derive(Debug, Clone)]
pub struct PartialDnOperator {
    op1: DiscreteOperator,
    op2: DiscreteOperator,
    dq: Vec<f64>,
    partition: FacePartition,
    pub flux: FluxRule,
}

impl PartialDnOperator {
    pub fn new(q1: &ScalarField, q2: &ScalarField, partition: FacePartition) -> Result<Self> {
        if q1.grid() != q2.grid() {
            return Err(Error::InvalidInput("potentials live on different grids".into()));
        }
        let dq = q2.values().iter().zip(q1.values()).map(|(a, b)| a - b).collect();
        Ok(Self {
            op1: DiscreteOperator::new(q1),
            op2: DiscreteOperator::new(q2),
            dq,
            partition,
            flux: FluxRule::default(),
        })
    }

    /// As [`Self::new`], rejecting potentials whose operators are (nearly) singular.
    pub fn checked(q1: &ScalarField, q2: &ScalarField, partition: FacePartition, gap_tol: f64) -> Result<Self> {
        let mut out = Self::new(q1, q2, partition)?;
        out.op1 = DiscreteOperator::checked(q1, gap_tol)?;
        out.op2 = DiscreteOperator::checked(q2, gap_tol)?;
        Ok(out)
    }

    pub fn with_krylov(mut self, cfg: KrylovConfig) -> Self {
        self.op1 = self.op1.with_krylov(cfg);
        self.op2 = self.op2.with_krylov(cfg);
        self
    }

    pub fn grid(&self) -> &Grid {
        self.op1.grid()
    }

    pub fn partition(&self) -> &FacePartition {
        &self.partition
    }

    pub fn q1(&self) -> &ScalarField {
        self.op1.potential()
    }

    pub fn q2(&self) -> &ScalarField {
        self.op2.potential()
    }

    pub fn operator1(&self) -> &DiscreteOperator {
        &self.op1
    }

    pub fn operator2(&self) -> &DiscreteOperator {
        &self.op2
    }

    /// `q2 - q1` at interior nodes.
    pub fn potential_difference(&self) -> &[f64] {
        &self.dq
    }

    /// Same operator with the roles of `q1` and `q2` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            op1: self.op2.clone(),
            op2: self.op1.clone(),
            dq: self.dq.iter().map(|v| -v).collect(),
            partition: self.partition,
            flux: self.flux,
        }
    }

    pub fn with_partition(&self, partition: FacePartition) -> Self {
        Self {
            partition,
            ..self.clone()
        }
    }

    /// Difference field `w = u1 - u2` for Dirichlet data `g` supported in `F`;
    /// it solves `A_q1 w = (q2 - q1) u2` with zero boundary values.
    pub fn difference_field<T: Scalar>(&self, g: &BoundaryTrace<T>) -> Result<Vec<T>> {
        if !g.supported_in(&self.partition.f) {
            return Err(Error::Support("input trace must be supported in F".into()));
        }
        let grid = *self.grid();
        let u2 = self.op2.solve(&ScalarField::zeros(grid), g)?;
        let src: Vec<T> = u2.solution.values().iter().zip(&self.dq).map(|(&u, &d)| u * d).collect();
        let w = self.op1.solve(&ScalarField::from_values(grid, src)?, &BoundaryTrace::zeros(grid))?;
        Ok(w.solution.into_values())
    }

    /// `(Lambda_q1 - Lambda_q2) g` restricted to `G`.
    pub fn apply<T: Scalar>(&self, g: &BoundaryTrace<T>) -> Result<BoundaryTrace<T>> {
        let w = self.difference_field(g)?;
        Ok(self.flux.of_interior(self.grid(), &w).restrict(&self.partition.g))
    }

    /// Transpose of [`Self::apply`] with respect to the Euclidean node pairing:
    /// maps traces on `G` to traces on `F`.
    pub fn apply_transpose<T: Scalar>(&self, y: &BoundaryTrace<T>) -> Result<BoundaryTrace<T>> {
        let grid = *self.grid();
        let n = grid.n_axis();
        let src = self.flux.transpose(&y.restrict(&self.partition.g));
        let z = self.op1.solve(&ScalarField::from_values(grid, src)?, &BoundaryTrace::zeros(grid))?;
        let src: Vec<T> = z.solution.values().iter().zip(&self.dq).map(|(&v, &d)| v * d).collect();
        let s = self.op2.solve(&ScalarField::from_values(grid, src)?, &BoundaryTrace::zeros(grid))?;
        let inv_h2 = 1.0 / grid.spacing().powi(2);
        let mut out = BoundaryTrace::zeros(grid);
        for face in self.partition.f.faces() {
            let dst = out.face_mut(face);
            for b in 0..n {
                for a in 0..n {
                    dst[a + n * b] = s.solution.values()[face.interior_index(&grid, a, b, 0)] * inv_h2;
                }
            }
        }
        Ok(out)
    }
}

/// Real linear map from traces on `F` to traces on `G`, with its transpose in
/// the Euclidean node pairing.
pub trait PartialMap {
    fn grid(&self) -> &Grid;
    fn partition(&self) -> &FacePartition;
    fn map(&self, g: &BoundaryTrace) -> Result<BoundaryTrace>;
    fn map_transpose(&self, y: &BoundaryTrace) -> Result<BoundaryTrace>;
}

impl PartialMap for PartialDnOperator {
    fn grid(&self) -> &Grid {
        self.op1.grid()
    }

    fn partition(&self) -> &FacePartition {
        &self.partition
    }

    fn map(&self, g: &BoundaryTrace) -> Result<BoundaryTrace> {
        self.apply(g)
    }

    fn map_transpose(&self, y: &BoundaryTrace) -> Result<BoundaryTrace> {
        self.apply_transpose(y)
    }
}

/// `(Lambda_q1 - Lambda_q2) g` restricted to `G`; `g` must be supported in `F`.
pub fn dn_diff_apply(op: &PartialDnOperator, g: &BoundaryTrace) -> Result<BoundaryTrace> {
    op.apply(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub max_iter: usize,
    /// Relative tolerance on the Ritz residual of the top eigenpair.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormReport {
    pub norm: f64,
    pub iterations: usize,
    /// Norm estimate after each Krylov step.
    pub rayleigh_history: Vec<f64>,
    pub converged: bool,
}

/// Admissible inputs: traces on `F` vanishing in the edge margin.
fn project_admissible(g: &BoundaryTrace, f: &FaceSet) -> BoundaryTrace {
    g.restrict(f).with_edge_margin()
}

struct Pencil<'a> {
    op: &'a dyn PartialMap,
    spectral: FaceSpectral,
}

impl Pencil<'_> {
    fn f(&self) -> &FaceSet {
        &self.op.partition().f
    }

    /// `K g = Lt R_{+1/2} L g`
    fn stiffness(&self, g: &BoundaryTrace) -> Result<BoundaryTrace> {
        let y = self.op.map(g)?;
        let r = self.spectral.riesz(&y, 0.5, &self.op.partition().g, false);
        Ok(project_admissible(&self.op.map_transpose(&r)?, self.f()))
    }

    /// `B g = P R_{-1/2} P g`
    fn mass(&self, g: &BoundaryTrace) -> BoundaryTrace {
        project_admissible(&self.spectral.riesz(g, -0.5, self.f(), false), self.f())
    }

    fn mass_solve(&self, y: &BoundaryTrace) -> Result<BoundaryTrace> {
        let grid = *y.grid();
        let wrap = |x: &[f64]| BoundaryTrace::from_values(grid, x.to_vec()).expect("trace length");
        let out = pcg(
            |x: &[f64], out: &mut [f64]| out.copy_from_slice(self.mass(&wrap(x)).values()),
            |r: &[f64], z: &mut [f64]| {
                let p = project_admissible(&wrap(r), self.f());
                let s = self.spectral.riesz(&p, -0.5, self.f(), true);
                z.copy_from_slice(project_admissible(&s, self.f()).values());
            },
            y.values(),
            &KrylovConfig {
                tol: 1e-13,
                max_iter: 2000,
                restart: 0,
            },
        )?
        .map_err(|_| Error::InvalidInput("boundary mass matrix lost positivity".into()))?;
        BoundaryTrace::from_values(grid, out.solution)
    }
}

fn largest_eigenpair(t: &DMatrix<f64>) -> (f64, nalgebra::DVector<f64>) {
    let eig = SymmetricEigen::new(t.clone());
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Norm of the partial difference operator from `H^-1/2` traces on `F`
/// (vanishing in the edge margin) to `H^1/2(G)`: Lanczos on the pencil
/// `(Lt R_{+1/2} L, R_{-1/2})` in the `R_{-1/2}` inner product, started from a
/// seeded random combination of low face modes.
pub fn operator_norm(op: &dyn PartialMap) -> Result<OperatorNormReport> {
    operator_norm_with(op, &NormConfig::default())
}

pub fn operator_norm_with(op: &dyn PartialMap, cfg: &NormConfig) -> Result<OperatorNormReport> {
    let grid = *op.grid();
    let pencil = Pencil {
        op,
        spectral: FaceSpectral::new(grid),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = BoundaryTrace::zeros(grid);
    for face in op.partition().f.faces() {
        for a in 1..=3 {
            for b in 1..=3 {
                let c: f64 = rng.gen_range(-1.0..1.0) / (a * b) as f64;
                v = v.add(&face_mode(grid, face, a, b).scale(c));
            }
        }
    }
    let v = project_admissible(&v, pencil.f());
    let bv = pencil.mass(&v);
    let nrm = dot(v.values(), bv.values()).sqrt();
    if !(nrm > 0.0) {
        return Err(Error::Support("no admissible traces: F is empty or smaller than the edge margin".into()));
    }
    let mut basis = vec![v.scale(1.0 / nrm)];
    let mut mass_basis = vec![bv.scale(1.0 / nrm)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let steps = cfg.max_iter.max(1);
    for j in 0..steps {
        let y = pencil.stiffness(&basis[j])?;
        alphas.push(dot(y.values(), basis[j].values()));
        let mut w = pencil.mass_solve(&y)?;
        for _ in 0..2 {
            for (vi, bvi) in basis.iter().zip(&mass_basis) {
                let c = dot(bvi.values(), w.values());
                w = w.sub(&vi.scale(c));
            }
        }
        let bw = pencil.mass(&w);
        let beta = dot(w.values(), bw.values()).max(0.0).sqrt();
        let k = alphas.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (theta, s) = largest_eigenpair(&t);
        let theta = theta.max(0.0);
        history.push(theta.sqrt());
        let ritz_residual = beta * s[k - 1].abs();
        if ritz_residual <= cfg.tol * theta || beta <= 1e-14 * alphas.iter().fold(0.0f64, |m, a| m.max(a.abs())) || theta == 0.0 {
            converged = true;
            break;
        }
        if j + 1 == steps {
            break;
        }
        betas.push(beta);
        basis.push(w.scale(1.0 / beta));
        mass_basis.push(bw.scale(1.0 / beta));
    }
    Ok(OperatorNormReport {
        norm: *history.last().unwrap_or(&0.0),
        iterations: history.len(),
        rayleigh_history: history,
        converged,
    })
}

/// Dense reference for small grids: assemble the operator over the nodal basis
/// of admissible traces and solve the generalized eigenproblem directly.
pub fn operator_norm_dense(op: &dyn PartialMap) -> Result<f64> {
    let grid = *op.grid();
    let spectral = FaceSpectral::new(grid);
    let f = op.partition().f;
    let probe = project_admissible(&BoundaryTrace::from_fn(grid, |_, _| 1.0), &f);
    let nodes: Vec<usize> = (0..probe.values().len()).filter(|&i| probe.values()[i] != 0.0).collect();
    if nodes.is_empty() {
        return Err(Error::Support("no admissible traces".into()));
    }
    let m = nodes.len();
    let unit = |i: usize| {
        let mut e = BoundaryTrace::zeros(grid);
        e.values_mut()[i] = 1.0;
        e
    };
    let mut bmat = DMatrix::zeros(m, m);
    let mut applied = Vec::with_capacity(m);
    let mut images = Vec::with_capacity(m);
    for (c, &i) in nodes.iter().enumerate() {
        let e = unit(i);
        let be = spectral.riesz(&e, -0.5, &f, false);
        for (r, &j) in nodes.iter().enumerate() {
            bmat[(r, c)] = be.values()[j];
        }
        let y = op.map(&e)?;
        images.push(spectral.riesz(&y, 0.5, &op.partition().g, false));
        applied.push(y);
    }
    let k = DMatrix::from_fn(m, m, |r, c| dot(applied[r].values(), images[c].values()));
    let k = (&k + k.transpose()) * 0.5;
    let bmat = (&bmat + bmat.transpose()) * 0.5;
    let chol = bmat
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("boundary mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular Cholesky factor".into()))?;
    let c = &linv * k * linv.transpose();
    let (top, _) = largest_eigenpair(&((&c + c.transpose()) * 0.5));
    Ok(top.max(0.0).sqrt())
}

/// Low face modes, four per face; they vanish on every edge of the cube.
pub fn symmetry_probe_family(grid: Grid) -> Vec<BoundaryTrace> {
    let mut out = Vec::new();
    for face in Face::ALL {
        for (a, b) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
            out.push(face_mode(grid, face, a, b));
        }
    }
    out
}

/// `max |<Lambda_q g, h> - <g, Lambda_q h>| / (|g| |h|)` over [`symmetry_probe_family`],
/// with the `L^2(Gamma)` pairing.
pub fn dn_symmetry_defect(q: &ScalarField) -> Result<f64> {
    let grid = *q.grid();
    let op = DiscreteOperator::new(q);
    let family = symmetry_probe_family(grid);
    let images: Vec<BoundaryTrace> = family
        .iter()
        .map(|g| dn_apply_with(&op, g, FluxRule::OneSided))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = family.iter().map(|g| g.l2_norm(&FaceSet::ALL)).collect();
    let mut worst = 0.0f64;
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            let a = images[i].pairing(&family[j], &FaceSet::ALL);
            let b = family[i].pairing(&images[j], &FaceSet::ALL);
            worst = worst.max((a - b).abs() / (norms[i] * norms[j]));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::face_partition;
    use crate::grid::PotentialSpec;

    const E1: [f64; 3] = [1.0, 0.0, 0.0];

    fn front_mode(grid: Grid) -> BoundaryTrace {
        face_mode(grid, Face::ALL[0], 1, 1).with_edge_margin()
    }

    fn bump(grid: Grid, s: f64) -> ScalarField {
        PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, s).build(grid, 5.0).unwrap()
    }

    #[test]
    fn linear_data_gives_normal_component() {
        let g = Grid::new(9).unwrap();
        let out = dn_apply(&ScalarField::zeros(g), &BoundaryTrace::from_fn(g, |x, _| x[0])).unwrap();
        for face in Face::ALL {
            let nu = face.normal()[0];
            assert!(out.face(face).iter().all(|v| (v - nu).abs() < 1e-8));
        }
    }

    #[test]
    fn harmonic_quadratic_converges_at_second_order() {
        let err = |n: usize| {
            let g = Grid::new(n).unwrap();
            let data = BoundaryTrace::from_fn(g, |x, _| x[0] * x[0] - x[1] * x[1]);
            let exact = BoundaryTrace::from_fn(g, |x, f| {
                let nu = f.normal();
                2.0 * x[0] * nu[0] - 2.0 * x[1] * nu[1]
            });
            dn_apply(&ScalarField::zeros(g), &data).unwrap().sub(&exact).l2_norm(&FaceSet::ALL)
        };
        let (e1, e2) = (err(11), err(23));
        assert!(e1 < 1e-8 || (e1 / e2).log2() >= 1.8, "{e1} {e2}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = Grid::new(7).unwrap();
        let out = dn_apply(&ScalarField::constant(g, 1.0), &BoundaryTrace::zeros(g)).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn identical_potentials_give_zero_difference() {
        let g = Grid::new(11).unwrap();
        let q = bump(g, 2.0);
        let op = PartialDnOperator::new(&q, &q, face_partition(E1, 0.3).unwrap()).unwrap();
        assert_eq!(dn_diff_apply(&op, &front_mode(g)).unwrap().max_abs(), 0.0);
        assert_eq!(operator_norm(&op).unwrap().norm, 0.0);
    }

    #[test]
    fn rejects_traces_outside_f() {
        let g = Grid::new(9).unwrap();
        let q = ScalarField::zeros(g);
        let part = face_partition(E1, 0.3).unwrap();
        let outside = Face::ALL.into_iter().find(|f| !part.f.contains(*f)).unwrap();
        let op = PartialDnOperator::new(&q, &q, part).unwrap();
        let err = op.apply(&face_mode(g, outside, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::Support(_)));
    }

    #[test]
    fn first_order_in_constant_perturbation() {
        let g = Grid::new(11).unwrap();
        let part = face_partition(E1, 0.3).unwrap();
        let data = front_mode(g);
        let slopes: Vec<f64> = [0.025, 0.05, 0.1]
            .iter()
            .map(|&c| {
                let op = PartialDnOperator::new(&ScalarField::zeros(g), &ScalarField::constant(g, c), part).unwrap();
                op.apply(&data).unwrap().l2_norm(&FaceSet::ALL) / c
            })
            .collect();
        for s in &slopes {
            assert!((s / slopes[0] - 1.0).abs() < 0.05, "{slopes:?}");
        }
    }

    #[test]
    fn linear_in_data_and_antisymmetric_in_potentials() {
        let g = Grid::new(9).unwrap();
        let op = PartialDnOperator::new(&ScalarField::zeros(g), &bump(g, 3.0), face_partition(E1, 0.3).unwrap()).unwrap();
        let a = front_mode(g);
        let b = face_mode(g, Face::ALL[2], 2, 1).with_edge_margin();
        let lhs = op.apply(&a.scale(2.0).add(&b)).unwrap();
        let rhs = op.apply(&a).unwrap().scale(2.0).add(&op.apply(&b).unwrap());
        assert!(lhs.sub(&rhs).max_abs() <= 1e-8 * rhs.max_abs());
        let swapped = op.swapped().apply(&a).unwrap();
        let direct = op.apply(&a).unwrap();
        assert!(swapped.add(&direct).max_abs() <= 1e-7 * direct.max_abs());
    }

    #[test]
    fn transpose_matches_pairing() {
        let g = Grid::new(9).unwrap();
        for flux in [FluxRule::OneSided, FluxRule::Conormal] {
            let mut op =
                PartialDnOperator::new(&bump(g, -2.0), &bump(g, 3.0), face_partition(E1, 0.3).unwrap()).unwrap();
            op.flux = flux;
            let x = front_mode(g).add(&face_mode(g, Face::ALL[4], 1, 2));
            let y = BoundaryTrace::from_fn(g, |p, _| (p[1] + 2.0 * p[2]).sin()).restrict(&op.partition().g);
            let lhs = dot(op.apply(&x).unwrap().values(), y.values());
            let rhs = dot(x.values(), op.apply_transpose(&y).unwrap().values());
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()), "{flux:?}: {lhs} {rhs}");
        }
    }

    #[test]
    fn lanczos_matches_dense_oracle() {
        let g = Grid::new(9).unwrap();
        let op = PartialDnOperator::new(&ScalarField::zeros(g), &bump(g, 4.0), face_partition(E1, 0.3).unwrap()).unwrap();
        let rep = operator_norm(&op).unwrap();
        let dense = operator_norm_dense(&op).unwrap();
        assert!(rep.converged);
        assert!((rep.norm / dense - 1.0).abs() < 0.01, "{} vs {dense}", rep.norm);
        for w in rep.rayleigh_history.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
    }

    #[test]
    fn norm_is_nearly_linear_in_perturbation_scale() {
        let g = Grid::new(11).unwrap();
        let part = face_partition(E1, 0.3).unwrap();
        let q1 = ScalarField::zeros(g);
        let n1 = operator_norm(&PartialDnOperator::new(&q1, &bump(g, 0.1), part).unwrap()).unwrap();
        let n2 = operator_norm(&PartialDnOperator::new(&q1, &bump(g, 0.2), part).unwrap()).unwrap();
        let ratio = n2.norm / n1.norm;
        assert!((1.6..=2.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn norm_grows_with_face_sets() {
        let g = Grid::new(9).unwrap();
        let part = face_partition(E1, 0.3).unwrap();
        let op = PartialDnOperator::new(&ScalarField::zeros(g), &bump(g, 3.0), part).unwrap();
        let large = op.with_partition(part.with_faces(FaceSet::ALL, FaceSet::ALL).unwrap());
        let a = operator_norm(&op).unwrap().norm;
        let b = operator_norm(&large).unwrap().norm;
        assert!(a <= b * (1.0 + 1e-6), "{a} > {b}");
    }

    #[test]
    fn norm_is_deterministic_for_a_seed() {
        let g = Grid::new(9).unwrap();
        let op = PartialDnOperator::new(&ScalarField::zeros(g), &bump(g, 3.0), face_partition(E1, 0.3).unwrap()).unwrap();
        let cfg = NormConfig { seed: 7, ..NormConfig::default() };
        assert_eq!(operator_norm_with(&op, &cfg).unwrap(), operator_norm_with(&op, &cfg).unwrap());
    }

    #[test]
    fn symmetry_defect_shrinks_under_refinement() {
        let d = |n: usize| dn_symmetry_defect(&ScalarField::zeros(Grid::new(n).unwrap())).unwrap();
        let (a, b) = (d(7), d(15));
        assert!(b < a, "{a} {b}");
    }
}
