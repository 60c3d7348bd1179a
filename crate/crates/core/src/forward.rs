//! Seven-point finite-difference discretization of `-Delta + q` on the cube
//! with Dirichlet data, and the diagnostics built on it.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::boundary::{trace1, BoundaryTrace, Face, GridFunction};
use crate::error::{Error, Result};
use crate::grid::{dot3, Grid, ScalarField};
use crate::krylov::{gmres, pcg, KrylovConfig};
use crate::scalar::{dot, norm2, Scalar};
use crate::spectral::FastPoisson;

pub const DEFAULT_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ConjugateGradient,
    Gmres,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T = f64> {
    pub solution: ScalarField<T>,
    pub boundary: BoundaryTrace<T>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    pub seconds: f64,
}

/// JSON-friendly part of a [`SolveReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    pub seconds: f64,
}

impl<T: Scalar> SolveReport<T> {
    pub fn grid_function(&self) -> GridFunction<T> {
        GridFunction::new(self.solution.clone(), self.boundary.clone())
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            residual_norm: self.residual_norm,
            iterations: self.iterations,
            method: self.method,
            seconds: self.seconds,
        }
    }
}

/// `y = (-Delta_h + diag) x` with zero Dirichlet data.
pub(crate) fn apply_stencil<T: Scalar>(grid: &Grid, diag: &[f64], x: &[T], y: &mut [T]) {
    let n = grid.n_axis();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let (sx, sy, sz) = (1, n, n * n);
    for k in 0..n {
        for j in 0..n {
            let row = n * (j + n * k);
            for i in 0..n {
                let idx = row + i;
                let mut nb = T::zero();
                if i > 0 {
                    nb += x[idx - sx];
                }
                if i + 1 < n {
                    nb += x[idx + sx];
                }
                if j > 0 {
                    nb += x[idx - sy];
                }
                if j + 1 < n {
                    nb += x[idx + sy];
                }
                if k > 0 {
                    nb += x[idx - sz];
                }
                if k + 1 < n {
                    nb += x[idx + sz];
                }
                y[idx] = (x[idx] * 6.0 - nb) * inv_h2 + x[idx] * diag[idx];
            }
        }
    }
}

/// Adds `coef * g_b` at every node adjacent to boundary node `b`.
pub(crate) fn add_boundary_coupling<T: Scalar>(g: &BoundaryTrace<T>, coef: f64, out: &mut [T]) {
    let grid = *g.grid();
    let n = grid.n_axis();
    for face in Face::ALL {
        let vals = g.face(face);
        for b in 0..n {
            for a in 0..n {
                out[face.interior_index(&grid, a, b, 0)] += vals[a + n * b] * coef;
            }
        }
    }
}

/// Discrete Laplacian at interior nodes, using the boundary samples of `u`.
pub fn discrete_laplacian<T: Scalar>(u: &GridFunction<T>) -> ScalarField<T> {
    let grid = *u.grid();
    let zero = vec![0.0; grid.len()];
    let mut out = vec![T::zero(); grid.len()];
    apply_stencil(&grid, &zero, u.interior.values(), &mut out);
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    add_boundary_coupling(&u.boundary, -inv_h2, &mut out);
    for v in &mut out {
        *v = -*v;
    }
    ScalarField::from_values(grid, out).expect("finite laplacian")
}

/// Applies a preconditioner defined on complex buffers to any scalar type.
pub(crate) fn precondition<T: Scalar>(poisson: &FastPoisson, r: &[T], z: &mut [T]) {
    let mut buf: Vec<Complex64> = r.iter().map(|v| v.to_complex()).collect();
    poisson.apply_inplace(&mut buf);
    for (zi, b) in z.iter_mut().zip(buf) {
        *zi = T::from_complex(b);
    }
}

/// `A_q = -Delta_h + q` with homogeneous Dirichlet closure.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    q: ScalarField,
    poisson: FastPoisson,
    pub krylov: KrylovConfig,
}

impl DiscreteOperator {
    pub fn new(q: &ScalarField) -> Self {
        let grid = *q.grid();
        let mean = q.values().iter().sum::<f64>() / grid.len() as f64;
        Self {
            grid,
            q: q.clone(),
            poisson: FastPoisson::new(grid.n_axis(), grid.spacing(), mean.max(0.0)),
            krylov: KrylovConfig::default(),
        }
    }

    /// Builds the operator only if [`check_invertible_with`] accepts `q`.
    pub fn checked(q: &ScalarField, gap_tol: f64) -> Result<Self> {
        check_invertible_with(q, gap_tol)?;
        Ok(Self::new(q))
    }

    pub fn with_krylov(mut self, cfg: KrylovConfig) -> Self {
        self.krylov = cfg;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &ScalarField {
        &self.q
    }

    pub fn apply<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        apply_stencil(&self.grid, self.q.values(), x, y);
    }

    pub fn solve<T: Scalar>(&self, f: &ScalarField<T>, g: &BoundaryTrace<T>) -> Result<SolveReport<T>> {
        if f.grid() != &self.grid || g.grid() != &self.grid {
            return Err(Error::InvalidInput("grid mismatch in solve".into()));
        }
        if g.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite Dirichlet data".into()));
        }
        let start = Instant::now();
        let h = self.grid.spacing();
        let mut rhs = f.values().to_vec();
        add_boundary_coupling(g, 1.0 / (h * h), &mut rhs);
        let apply = |x: &[T], y: &mut [T]| self.apply(x, y);
        let pre = |r: &[T], z: &mut [T]| precondition(&self.poisson, r, z);
        let (outcome, method) = match pcg(apply, pre, &rhs, &self.krylov)? {
            Ok(out) => (out, SolveMethod::ConjugateGradient),
            Err(_) => (gmres(apply, pre, &rhs, None, &self.krylov)?, SolveMethod::Gmres),
        };
        let mut ax = vec![T::zero(); rhs.len()];
        self.apply(&outcome.solution, &mut ax);
        let bn = norm2(&rhs);
        let res: Vec<T> = rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        let residual_norm = if bn > 0.0 { norm2(&res) / bn } else { 0.0 };
        Ok(SolveReport {
            solution: ScalarField::from_values(self.grid, outcome.solution)?,
            boundary: g.clone(),
            residual_norm,
            iterations: outcome.iterations,
            method,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Solves `(-Delta_h + q) u = f` in the interior with `u = g` on the boundary.
pub fn solve_dirichlet<T: Scalar>(q: &ScalarField, f: &ScalarField<T>, g: &BoundaryTrace<T>) -> Result<SolveReport<T>> {
    DiscreteOperator::new(q).solve(f, g)
}

pub fn check_invertible(q: &ScalarField) -> Result<f64> {
    check_invertible_with(q, DEFAULT_GAP_TOL)
}

/// Estimates `min |spec(A_q)|` by a locally optimal block preconditioned
/// iteration on `A_q^2` with preconditioner `(-Delta_h)^{-2}`.
pub fn check_invertible_with(q: &ScalarField, gap_tol: f64) -> Result<f64> {
    let estimate = min_abs_eigenvalue(q)?;
    if estimate <= gap_tol {
        return Err(Error::SingularOperator {
            estimate,
            tolerance: gap_tol,
        });
    }
    Ok(estimate)
}

pub fn min_abs_eigenvalue(q: &ScalarField) -> Result<f64> {
    const MAX_ITER: usize = 400;
    let grid = *q.grid();
    let len = grid.len();
    let h = grid.spacing();
    let a_op = DiscreteOperator::new(q);
    let poisson = FastPoisson::new(grid.n_axis(), h, 0.0);
    let amax = 12.0 / (h * h) + q.sup_norm();
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; len];
        a_op.apply(x, &mut y);
        y
    };

    // Lowest sine mode with a smooth deterministic perturbation.
    let mut x: Vec<f64> = (0..len)
        .map(|idx| {
            let p = grid.point(idx);
            let base: f64 = p.iter().map(|c| (std::f64::consts::FRAC_PI_2 * c).cos()).product();
            base * (1.0 + 0.05 * (3.1 * p[0] + 1.7 * p[1] - 2.3 * p[2]).sin())
        })
        .collect();
    let xn = norm2(&x);
    x.iter_mut().for_each(|v| *v /= xn);
    let mut p: Option<Vec<f64>> = None;
    let mut estimate = f64::INFINITY;
    let mut history = Vec::new();
    for _ in 0..MAX_ITER {
        let ax = apply(&x);
        let mu = dot(&ax, &ax);
        let aax = apply(&ax);
        let r: Vec<f64> = aax.iter().zip(&x).map(|(a, b)| a - mu * b).collect();
        let rn = norm2(&r);
        estimate = mu.sqrt();
        history.push(estimate);
        if rn <= 1e-13 * amax * amax {
            return Ok(estimate);
        }
        let mut w = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        poisson.apply_real(&r, &mut tmp);
        poisson.apply_real(&tmp, &mut w);

        let mut basis = vec![x.clone()];
        for mut cand in std::iter::once(w).chain(p.take()) {
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &cand);
                    cand.iter_mut().zip(b).for_each(|(v, bi)| *v -= c * bi);
                }
            }
            let cn = norm2(&cand);
            if cn > 1e-12 {
                cand.iter_mut().for_each(|v| *v /= cn);
                basis.push(cand);
            }
        }
        let images: Vec<Vec<f64>> = basis.iter().map(|b| apply(b)).collect();
        let k = basis.len();
        let gram = DMatrix::from_fn(k, k, |i, j| dot(&images[i], &images[j]));
        let eig = SymmetricEigen::new(gram);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty basis");
        let c = eig.eigenvectors.column(imin);
        let mut xn = vec![0.0; len];
        let mut pn = vec![0.0; len];
        for (j, b) in basis.iter().enumerate() {
            xn.iter_mut().zip(b).for_each(|(t, bi)| *t += c[j] * bi);
            if j > 0 {
                pn.iter_mut().zip(b).for_each(|(t, bi)| *t += c[j] * bi);
            }
        }
        let nrm = norm2(&xn);
        x = xn.into_iter().map(|v| v / nrm).collect();
        p = Some(pn);
        let len_h = history.len();
        if len_h > 5 {
            let prev = history[len_h - 6];
            if (prev - estimate).abs() <= 1e-13 * amax {
                return Ok(estimate);
            }
        }
    }
    Err(Error::NonConvergence {
        method: "min-eigenvalue iteration",
        iterations: MAX_ITER,
        residual: estimate,
        history,
        hint: " (estimate did not settle)".into(),
    })
}

/// Facewise product quadrature weight of face node `(a, b)`.
pub(crate) fn face_weight(grid: &Grid, a: usize, b: usize) -> f64 {
    grid.axis_weight(a) * grid.axis_weight(b)
}

/// Absolute defect of the Green identity
/// `int (Delta - q) u conj(v) = int u conj((Delta - q) v) + <t1 u, t0 v> - <t0 u, t1 v>`,
/// volume terms by grid quadrature and boundary pairings by facewise quadrature.
pub fn green_defect<T: Scalar>(u: &GridFunction<T>, v: &GridFunction<T>, q: &ScalarField) -> f64 {
    let grid = *u.grid();
    let n = grid.n_axis();
    let lu = discrete_laplacian(u);
    let lv = discrete_laplacian(v);
    let w = grid.weights();
    let mut vol = Complex64::new(0.0, 0.0);
    for idx in 0..grid.len() {
        let qi = q.values()[idx];
        let ui = u.interior.values()[idx].to_complex();
        let vi = v.interior.values()[idx].to_complex();
        let au = lu.values()[idx].to_complex() - ui * qi;
        let av = lv.values()[idx].to_complex() - vi * qi;
        vol += (au * vi.conj() - ui * av.conj()) * w[idx];
    }
    let t1u = trace1(u);
    let t1v = trace1(v);
    let mut bdy = Complex64::new(0.0, 0.0);
    for face in Face::ALL {
        let (du, gu) = (t1u.face(face), u.boundary.face(face));
        let (dv, gv) = (t1v.face(face), v.boundary.face(face));
        for b in 0..n {
            for a in 0..n {
                let i = a + n * b;
                let term = du[i].to_complex() * gv[i].to_complex().conj()
                    - gu[i].to_complex() * dv[i].to_complex().conj();
                bdy += term * face_weight(&grid, a, b);
            }
        }
    }
    (vol - bdy).norm()
}

/// Ratio of the two sides of the weighted Carleman inequality with `C = 1`:
/// `(tau^2 |v|_tau^2 + tau |dv|_{-}^2) / (|(Delta - q) v|_tau^2 + tau |dv|_{+}^2)`.
pub fn carleman_ratio<T: Scalar>(v: &GridFunction<T>, q: &ScalarField, tau: f64, zeta: [f64; 3]) -> Result<f64> {
    let grid = *v.grid();
    let n = grid.n_axis();
    if v.boundary.max_abs() > 0.0 {
        return Err(Error::InvalidInput("Carleman test function must vanish on the boundary".into()));
    }
    let zn = dot3(&zeta, &zeta).sqrt();
    if !(zn - 1.0).abs().lt(&1e-9) {
        return Err(Error::InvalidInput("zeta must be a unit vector".into()));
    }
    if v.interior.values().iter().all(|x| x.abs_sqr() == 0.0) {
        return Ok(0.0);
    }
    let lv = discrete_laplacian(v);
    let w = grid.weights();
    let (mut vol_v, mut vol_pv) = (0.0, 0.0);
    for idx in 0..grid.len() {
        let x = grid.point(idx);
        let wt = w[idx] * (2.0 * tau * dot3(&x, &zeta)).exp();
        let vi = v.interior.values()[idx];
        vol_v += wt * vi.abs_sqr();
        vol_pv += wt * (lv.values()[idx] - vi * q.values()[idx]).abs_sqr();
    }
    let dv = trace1(v);
    let (mut minus, mut plus) = (0.0, 0.0);
    for face in Face::ALL {
        let s = dot3(&zeta, &face.normal());
        let vals = dv.face(face);
        for b in 0..n {
            for a in 0..n {
                let x = face.point(&grid, a, b);
                let term = s.abs() * (2.0 * tau * dot3(&x, &zeta)).exp() * vals[a + n * b].abs_sqr() * face_weight(&grid, a, b);
                if s > 0.0 {
                    plus += term;
                } else if s < 0.0 {
                    minus += term;
                }
            }
        }
    }
    let lhs = tau * tau * vol_v + tau * minus;
    let rhs = vol_pv + tau * plus;
    Ok(lhs / rhs)
}

/// Lowest discrete Dirichlet eigenvalue of `-Delta_h` on the grid.
pub fn discrete_laplacian_ground_state(grid: &Grid) -> f64 {
    3.0 * crate::spectral::laplacian_eigenvalue_1d(1, grid.n_axis(), grid.spacing())
}
