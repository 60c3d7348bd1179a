//! Complex geometrical optics solutions `u = exp(rho . x) (1 + psi)` that
//! vanish on the shadowed face set, built from the discrete conjugated operator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::boundary::{boundary_cutoff, face_partition, BoundaryTrace, ComplexTrace, Face, FacePartition, FaceSet};
use crate::error::{Error, Result};
use crate::forward::{SolveMethod, SolveReport};
use crate::grid::{dot3, ComplexField, FrequencyVector, Grid, ScalarField};
use crate::krylov::{gmres, pcg, KrylovConfig};
use crate::scalar::norm2;
use crate::spectral::FastPoisson;

pub type CVec3 = [Complex64; 3];

/// Largest `tau` for which exponential factors stay far from overflow.
pub const DEFAULT_TAU_MAX: f64 = 12.0;

fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot3(&v, &v).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Non-conjugated complex dot product.
pub fn cdot(a: &CVec3, b: &CVec3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Phase `rho . x` at a real point.
pub fn phase(rho: &CVec3, x: [f64; 3]) -> Complex64 {
    rho[0] * x[0] + rho[1] * x[1] + rho[2] * x[2]
}

/// Projection of `xi` onto the plane orthogonal to `kappa`, normalized.
pub fn pick_zeta(kappa: &FrequencyVector, xi: [f64; 3], epsilon: f64) -> Result<[f64; 3]> {
    let k = kappa.0;
    let khat = unit(k).ok_or_else(|| Error::InvalidInput("kappa must be non-zero".into()))?;
    let s = dot3(&xi, &khat);
    let proj = [xi[0] - s * khat[0], xi[1] - s * khat[1], xi[2] - s * khat[2]];
    let pn = dot3(&proj, &proj).sqrt();
    if pn <= 1e-12 {
        return Err(Error::Geometry(format!("xi is parallel to kappa = {k:?}")));
    }
    let zeta = [proj[0] / pn, proj[1] / pn, proj[2] / pn];
    let d = [zeta[0] - xi[0], zeta[1] - xi[1], zeta[2] - xi[2]];
    let distance = dot3(&d, &d).sqrt();
    if distance >= epsilon {
        return Err(Error::ConeViolation {
            kappa: k,
            distance,
            epsilon,
        });
    }
    Ok(zeta)
}

/// Phase data of a pair of CGO solutions probing frequency `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgoPair {
    pub kappa: [f64; 3],
    pub tau: f64,
    pub xi: [f64; 3],
    pub zeta: [f64; 3],
    pub ell: [f64; 3],
    pub rho1: CVec3,
    pub rho2: CVec3,
    pub epsilon: f64,
}

pub fn make_cgo_pair(kappa: &FrequencyVector, tau: f64, xi: [f64; 3], epsilon: f64, tau0: f64) -> Result<CgoPair> {
    let r = kappa.norm();
    if tau < tau0 {
        return Err(Error::OutOfRegime(format!("tau = {tau} below tau0 = {tau0}")));
    }
    if 2.0 * tau < r {
        return Err(Error::OutOfRegime(format!("tau = {tau} < |kappa|/2 = {}", r / 2.0)));
    }
    let zeta = pick_zeta(kappa, xi, epsilon)?;
    let khat = unit(kappa.0).expect("checked in pick_zeta");
    let dir = unit(cross(khat, zeta)).ok_or_else(|| Error::Geometry("degenerate frame".into()))?;
    let len = (4.0 * tau * tau - r * r).max(0.0).sqrt();
    let ell = [len * dir[0], len * dir[1], len * dir[2]];
    let k = kappa.0;
    let rho = |sign: f64| -> CVec3 {
        std::array::from_fn(|j| Complex64::new(sign * tau * zeta[j], -(k[j] + sign * ell[j]) / 2.0))
    };
    Ok(CgoPair {
        kappa: k,
        tau,
        xi,
        zeta,
        ell,
        rho1: rho(-1.0),
        rho2: rho(1.0),
        epsilon,
    })
}

/// Discrete dispersion `sum_j 2 (cosh(rho_j h) - 1) / h^2`; zero for phases
/// whose exponential is annihilated by the 7-point Laplacian.
pub fn discrete_dispersion(rho: &CVec3, h: f64) -> Complex64 {
    (0..3).map(|j| (rho[j] * h).cosh() - 1.0).sum::<Complex64>() * (2.0 / (h * h))
}

impl CgoPair {
    /// Phases near `(rho1, rho2)` that are exactly null for the discrete Laplacian of
    /// spacing `h`, keeping `rho1' + rho2' = -i kappa`. Minimum-norm Newton steps in
    /// `rho2' = a + i b`, with `rho1' = -a - i (kappa + b)`.
    pub fn discrete_phases(&self, h: f64) -> Result<(CVec3, CVec3)> {
        use nalgebra::{SMatrix, SVector};
        let k = self.kappa;
        let build = |x: &SVector<f64, 6>| -> (CVec3, CVec3) {
            let r2: CVec3 = std::array::from_fn(|j| Complex64::new(x[j], x[j + 3]));
            let r1: CVec3 = std::array::from_fn(|j| Complex64::new(-x[j], -k[j] - x[j + 3]));
            (r1, r2)
        };
        let mut x = SVector::<f64, 6>::from_fn(|i, _| if i < 3 { self.rho2[i].re } else { self.rho2[i - 3].im });
        let scale = (self.tau * self.tau).max(1.0);
        let mut residual = f64::INFINITY;
        for _ in 0..50 {
            let (r1, r2) = build(&x);
            let (d1, d2) = (discrete_dispersion(&r1, h), discrete_dispersion(&r2, h));
            residual = d1.norm().max(d2.norm());
            if residual <= 1e-13 * scale {
                return Ok((r1, r2));
            }
            let f = SVector::<f64, 4>::new(d2.re, d2.im, d1.re, d1.im);
            let mut jac = SMatrix::<f64, 4, 6>::zeros();
            for j in 0..3 {
                let g2 = (r2[j] * h).sinh() * (2.0 / h);
                let g1 = -(r1[j] * h).sinh() * (2.0 / h);
                for (row, g) in [(0, g2), (2, g1)] {
                    // d/da_j = g, d/db_j = i g
                    jac[(row, j)] = g.re;
                    jac[(row + 1, j)] = g.im;
                    jac[(row, j + 3)] = -g.im;
                    jac[(row + 1, j + 3)] = g.re;
                }
            }
            let svd = jac.svd(true, true);
            let tol = 1e-12 * svd.singular_values.max();
            let step = svd
                .solve(&f, tol)
                .map_err(|e| Error::Geometry(format!("discrete phase correction failed: {e}")))?;
            x -= step;
        }
        Err(Error::NonConvergence {
            method: "discrete phase correction",
            iterations: 50,
            residual,
            history: Vec::new(),
            hint: format!(" (tau h = {:.2} too large)", self.tau * h),
        })
    }

    /// Largest relative violation among the algebraic identities of the pair.
    pub fn invariant_defect(&self) -> f64 {
        let (k, z, l) = (self.kappa, self.zeta, self.ell);
        let scale = (4.0 * self.tau * self.tau).max(1.0);
        let kn = dot3(&k, &k).sqrt().max(1.0);
        let ln = dot3(&l, &l).sqrt().max(1.0);
        let sum: CVec3 = std::array::from_fn(|j| self.rho1[j] + self.rho2[j] + Complex64::new(0.0, k[j]));
        [
            dot3(&z, &k).abs() / kn,
            dot3(&l, &k).abs() / (kn * ln),
            dot3(&l, &z).abs() / ln,
            (dot3(&k, &k) + dot3(&l, &l) - 4.0 * self.tau * self.tau).abs() / scale,
            cdot(&self.rho1, &self.rho1).norm() / scale,
            cdot(&self.rho2, &self.rho2).norm() / scale,
            sum.iter().map(|c| c.norm()).fold(0.0, f64::max) / kn,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Discrete conjugated operator `L_rho v = exp(-rho.x) (-Delta_h + q) (exp(rho.x) v)`.
#[derive(Debug, Clone)]
pub struct ConjugatedOperator {
    grid: Grid,
    rho: CVec3,
    q: ScalarField,
    plus: [Complex64; 3],
    minus: [Complex64; 3],
    weight: Vec<Complex64>,
    poisson: FastPoisson,
    pub krylov: KrylovConfig,
}

impl ConjugatedOperator {
    pub fn new(q: &ScalarField, rho: CVec3) -> Self {
        let grid = *q.grid();
        let h = grid.spacing();
        let mean = q.values().iter().sum::<f64>() / grid.len() as f64;
        Self {
            grid,
            rho,
            q: q.clone(),
            plus: std::array::from_fn(|j| (rho[j] * h).exp()),
            minus: std::array::from_fn(|j| (-rho[j] * h).exp()),
            weight: (0..grid.len()).map(|i| phase(&rho, grid.point(i)).exp()).collect(),
            poisson: FastPoisson::new(grid.n_axis(), h, mean.max(0.0)),
            krylov: KrylovConfig::default(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self) -> CVec3 {
        self.rho
    }

    /// `L_rho 1 = -lambda_h` in the interior; zero when `rho . rho = 0` in the continuum.
    pub fn lambda_h(&self) -> Complex64 {
        discrete_dispersion(&self.rho, self.grid.spacing())
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.stencil(&self.plus, &self.minus, x, y);
    }

    /// Hermitian adjoint on interior nodes: the same stencil with `rho -> -conj(rho)`.
    pub fn apply_adjoint(&self, x: &[Complex64], y: &mut [Complex64]) {
        let plus = self.minus.map(|c| c.conj());
        let minus = self.plus.map(|c| c.conj());
        self.stencil(&plus, &minus, x, y);
    }

    fn stencil(&self, plus: &[Complex64; 3], minus: &[Complex64; 3], x: &[Complex64], y: &mut [Complex64]) {
        let n = self.grid.n_axis();
        let inv_h2 = 1.0 / self.grid.spacing().powi(2);
        let strides = [1, n, n * n];
        let q = self.q.values();
        for idx in 0..self.grid.len() {
            let c = [idx % n, (idx / n) % n, idx / (n * n)];
            let mut nb = Complex64::new(0.0, 0.0);
            for j in 0..3 {
                if c[j] + 1 < n {
                    nb += plus[j] * x[idx + strides[j]];
                }
                if c[j] > 0 {
                    nb += minus[j] * x[idx - strides[j]];
                }
            }
            y[idx] = (x[idx] * 6.0 - nb) * inv_h2 + x[idx] * q[idx];
        }
    }

    /// Adds the boundary coupling of Dirichlet data `v_b` scaled by `coef`.
    fn add_boundary(&self, g: &ComplexTrace, coef: f64, out: &mut [Complex64]) {
        let n = self.grid.n_axis();
        for face in Face::ALL {
            let c = self.face_coef(face) * coef;
            let vals = g.face(face);
            for b in 0..n {
                for a in 0..n {
                    out[face.interior_index(&self.grid, a, b, 0)] += c * vals[a + n * b];
                }
            }
        }
    }

    /// Interior residual `L_rho v - f` with `v` carrying boundary data.
    pub fn residual(&self, v: &ComplexField, g: &ComplexTrace, f: &ComplexField) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        self.apply(v.values(), &mut out);
        self.add_boundary(g, -1.0 / self.grid.spacing().powi(2), &mut out);
        for (o, &fi) in out.iter_mut().zip(f.values()) {
            *o -= fi;
        }
        out
    }

    fn precondition(&self, r: &[Complex64], z: &mut [Complex64]) {
        for ((zi, &ri), &w) in z.iter_mut().zip(r).zip(&self.weight) {
            *zi = ri * w;
        }
        self.poisson.apply_inplace(z);
        for (zi, &w) in z.iter_mut().zip(&self.weight) {
            *zi /= w;
        }
    }

    pub fn solve(&self, f: &ComplexField, g: &ComplexTrace) -> Result<SolveReport<Complex64>> {
        let start = std::time::Instant::now();
        let mut rhs = f.values().to_vec();
        self.add_boundary(g, 1.0 / self.grid.spacing().powi(2), &mut rhs);
        let out = gmres(
            |x: &[Complex64], y: &mut [Complex64]| self.apply(x, y),
            |r: &[Complex64], z: &mut [Complex64]| self.precondition(r, z),
            &rhs,
            None,
            &self.krylov,
        )
        .map_err(|e| match e {
            Error::NonConvergence {
                method,
                iterations,
                residual,
                history,
                ..
            } => Error::NonConvergence {
                method,
                iterations,
                residual,
                history,
                hint: format!(" (|Re rho| = {:.2}; consider lowering tau_max)", self.re_norm()),
            },
            other => other,
        })?;
        Ok(SolveReport {
            solution: ScalarField::from_values(self.grid, out.solution)?,
            boundary: g.clone(),
            residual_norm: out.residual,
            iterations: out.iterations,
            method: SolveMethod::Gmres,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Minimum-norm solution of `L_rho v = f`: boundary values are fixed to `g` on
    /// faces whose `penalty` is `None` and are otherwise unknowns charged
    /// `penalty * |v_b|^2` per unit area on top of `|v|^2` in the interior.
    /// Solved through the normal equations `(L W^-1 L^* + C D^-1 C^*) lambda = r`.
    pub fn solve_minimum_norm(
        &self,
        f: &ComplexField,
        g: &ComplexTrace,
        penalty: &[Option<f64>; 6],
    ) -> Result<SolveReport<Complex64>> {
        let start = std::time::Instant::now();
        let grid = self.grid;
        let n = grid.n_axis();
        let h2 = grid.spacing().powi(2);
        let fixed = FaceSet(penalty.map(|p| p.is_none()));
        let mut rhs = f.values().to_vec();
        self.add_boundary(&g.restrict(&fixed), 1.0 / h2, &mut rhs);
        let w = grid.weights();
        let mut diag = vec![0.0; grid.len()];
        for face in Face::ALL {
            if let Some(c) = penalty[face.index()] {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidInput(format!("boundary penalty must be positive, got {c}")));
                }
                let e = self.face_coef(face).norm_sqr() / (h2 * h2 * c * h2);
                for b in 0..n {
                    for a in 0..n {
                        diag[face.interior_index(&grid, a, b, 0)] += e;
                    }
                }
            }
        }
        let mut tmp = vec![Complex64::new(0.0, 0.0); grid.len()];
        let tmp = std::cell::RefCell::new(&mut tmp);
        let normal = |x: &[Complex64], y: &mut [Complex64]| {
            let mut t = tmp.borrow_mut();
            self.apply_adjoint(x, &mut t);
            for (ti, &wi) in t.iter_mut().zip(&w) {
                *ti /= wi;
            }
            self.apply(&t, y);
            for ((yi, &xi), &di) in y.iter_mut().zip(x).zip(&diag) {
                *yi += xi * di;
            }
        };
        let precond = |r: &[Complex64], z: &mut [Complex64]| {
            z.copy_from_slice(r);
            self.poisson.apply_inplace(z);
            for (zi, &wi) in z.iter_mut().zip(&w) {
                *zi *= wi;
            }
            self.poisson.apply_inplace(z);
        };
        let out = match pcg(normal, precond, &rhs, &self.krylov)? {
            Ok(out) => out,
            Err(b) => {
                return Err(Error::NonConvergence {
                    method: "conjugate gradients",
                    iterations: b.iterations,
                    residual: f64::NAN,
                    history: Vec::new(),
                    hint: " (loss of positivity in the normal equations)".into(),
                })
            }
        };
        let lambda = out.solution;
        let mut psi = vec![Complex64::new(0.0, 0.0); grid.len()];
        self.apply_adjoint(&lambda, &mut psi);
        for (p, &wi) in psi.iter_mut().zip(&w) {
            *p /= wi;
        }
        let mut boundary = g.restrict(&fixed);
        for face in Face::ALL {
            if let Some(c) = penalty[face.index()] {
                let k = -self.face_coef(face).conj() / (h2 * c * h2);
                let vals = boundary.face_mut(face);
                for b in 0..n {
                    for a in 0..n {
                        vals[a + n * b] = k * lambda[face.interior_index(&grid, a, b, 0)];
                    }
                }
            }
        }
        Ok(SolveReport {
            solution: ScalarField::from_values(grid, psi)?,
            boundary,
            residual_norm: out.residual,
            iterations: out.iterations,
            method: SolveMethod::ConjugateGradient,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn face_coef(&self, face: Face) -> Complex64 {
        if face.positive {
            self.plus[face.axis]
        } else {
            self.minus[face.axis]
        }
    }

    fn re_norm(&self) -> f64 {
        self.rho.iter().map(|c| c.re * c.re).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub rho: CVec3,
    pub psi: ComplexField,
    /// Boundary values of `psi`; `-phi` wherever they are prescribed.
    pub psi_boundary: ComplexTrace,
    /// Trace of `1 + psi`; exactly zero on the cutoff faces.
    pub amplitude_trace: ComplexTrace,
    pub partition: FacePartition,
    pub pde_residual: f64,
    pub psi_l2: f64,
    pub iterations: usize,
}

impl CgoSolution {
    /// Trace `t0 u = exp(rho . x)(1 + psi)` on the boundary.
    pub fn trace(&self) -> ComplexTrace {
        let grid = *self.psi.grid();
        let mut out = self.amplitude_trace.clone();
        let n = grid.n_axis();
        for face in Face::ALL {
            let vals = out.face_mut(face);
            for b in 0..n {
                for a in 0..n {
                    vals[a + n * b] *= phase(&self.rho, face.point(&grid, a, b)).exp();
                }
            }
        }
        out
    }

    /// Interior values of `u`; only sensible for moderate `tau`.
    pub fn materialize(&self) -> ComplexField {
        let grid = *self.psi.grid();
        let vals = (0..grid.len())
            .map(|i| phase(&self.rho, grid.point(i)).exp() * (self.psi.values()[i] + 1.0))
            .collect();
        ScalarField::from_values(grid, vals).expect("finite amplitude")
    }
}

/// Direction of `Re rho`, the sign convention that places the cutoff on `Gamma_-^eps`.
pub fn real_direction(rho: &CVec3) -> Result<[f64; 3]> {
    unit([rho[0].re, rho[1].re, rho[2].re]).ok_or_else(|| Error::InvalidInput("Re rho must be non-zero".into()))
}

/// How `psi` is closed on the faces outside the cutoff set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CgoClosure {
    /// `psi = -phi` on the shadowed faces, free elsewhere, smallest weighted norm.
    #[default]
    MinimumNorm,
    /// `psi = -phi` on every face.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgoOptions {
    pub krylov: KrylovConfig,
    pub closure: CgoClosure,
    /// `false` prescribes `psi = 0` instead of `-phi` (test mode).
    pub use_cutoff: bool,
}

impl Default for CgoOptions {
    fn default() -> Self {
        Self {
            krylov: KrylovConfig::default(),
            closure: CgoClosure::default(),
            use_cutoff: true,
        }
    }
}

pub fn solve_cgo(q: &ScalarField, rho: CVec3, epsilon: f64) -> Result<CgoSolution> {
    solve_cgo_with(q, rho, epsilon, &CgoOptions::default())
}

pub fn solve_cgo_with(q: &ScalarField, rho: CVec3, epsilon: f64, opts: &CgoOptions) -> Result<CgoSolution> {
    let grid = *q.grid();
    let rr = cdot(&rho, &rho).norm();
    let dd = discrete_dispersion(&rho, grid.spacing()).norm();
    let scale = rho.iter().map(|c| c.norm_sqr()).sum::<f64>().max(1.0);
    if rr.min(dd) > 1e-10 * scale {
        return Err(Error::InvalidInput(format!("rho is not null: rho . rho = {rr:.3e}")));
    }
    let dir = real_direction(&rho)?;
    let partition = face_partition(dir, epsilon)?;
    let phi = if opts.use_cutoff {
        boundary_cutoff(grid, &partition, epsilon)?
    } else {
        BoundaryTrace::zeros(grid)
    };
    let mut op = ConjugatedOperator::new(q, rho);
    op.krylov = opts.krylov;
    let lam = op.lambda_h();
    let f = ComplexField::from_fn(grid, |_| lam).zip_with(q, |a, b| a - b);
    let g = phi.map(|p| Complex64::new(-p, 0.0));
    let rep = match opts.closure {
        CgoClosure::Dirichlet => op.solve(&f, &g)?,
        CgoClosure::MinimumNorm => {
            let tau = op.re_norm();
            let penalty = Face::ALL.map(|face| {
                let mu = dot3(&dir, &face.normal());
                (mu > 0.0).then(|| 1.0 / (tau * mu))
            });
            op.solve_minimum_norm(&f, &g, &penalty)?
        }
    };
    let amplitude_trace = rep.boundary.map(|v| v + 1.0);
    let psi_l2 = rep.solution.l2_norm();
    Ok(CgoSolution {
        rho,
        psi: rep.solution,
        psi_boundary: rep.boundary,
        amplitude_trace,
        partition,
        pde_residual: rep.residual_norm,
        psi_l2,
        iterations: rep.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgoDiagnostics {
    /// `|L_rho (1 + psi)|` relative to the assembled right-hand side.
    pub pde_residual: f64,
    /// Weighted `L^2` norm of `L_rho (1 + psi)`.
    pub absolute_residual: f64,
    /// `max |1 + psi|` on the cutoff faces.
    pub boundary_max: f64,
    pub psi_l2_sqrt_tau: f64,
}

impl CgoDiagnostics {
    pub fn passes(&self, tol: f64) -> bool {
        self.pde_residual <= tol && self.boundary_max <= 1e-12
    }
}

pub fn cgo_verify(sol: &CgoSolution, q: &ScalarField) -> CgoDiagnostics {
    let grid = *q.grid();
    let op = ConjugatedOperator::new(q, sol.rho);
    let lam = op.lambda_h();
    let f = ComplexField::from_fn(grid, |_| lam).zip_with(q, |a, b| a - b);
    let res = op.residual(&sol.psi, &sol.psi_boundary, &f);
    let mut rhs = f.values().to_vec();
    op.add_boundary(&sol.psi_boundary, 1.0 / grid.spacing().powi(2), &mut rhs);
    let bn = norm2(&rhs);
    let pde_residual = if bn > 0.0 { norm2(&res) / bn } else { norm2(&res) };
    let absolute_residual = ScalarField::from_values(grid, res).map(|r| r.l2_norm()).unwrap_or(f64::INFINITY);
    let boundary_max = sol
        .partition
        .gamma_minus_eps
        .faces()
        .flat_map(|face| sol.amplitude_trace.face(face).iter().map(|v| v.norm()))
        .fold(0.0, f64::max);
    let tau = sol.rho.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
    CgoDiagnostics {
        pde_residual,
        absolute_residual,
        boundary_max,
        psi_l2_sqrt_tau: sol.psi_l2 * tau.sqrt(),
    }
}

/// `u1 u2 = exp(-i kappa . x)(1 + psi1)(1 + psi2)` evaluated without the
/// exponential growth factors.
pub fn product_factored(s1: &CgoSolution, s2: &CgoSolution) -> ComplexField {
    let grid = *s1.psi.grid();
    let sum: CVec3 = std::array::from_fn(|j| s1.rho[j] + s2.rho[j]);
    let vals = (0..grid.len())
        .map(|i| phase(&sum, grid.point(i)).exp() * (s1.psi.values()[i] + 1.0) * (s2.psi.values()[i] + 1.0))
        .collect();
    ScalarField::from_values(grid, vals).expect("finite product")
}
