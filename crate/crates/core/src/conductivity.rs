//! Conductivity equation `-div(sigma grad u) = 0`: Liouville potentials, the
//! flux map `Lambda_sigma`, its relation to `Lambda_q`, and recovery of `sigma2`
//! from a potential difference.

use serde::{Deserialize, Serialize};

use crate::boundary::{trace1, BoundaryTrace, Face, FacePartition, GridFunction};
use crate::dn::{dn_apply, symmetry_probe_family, FluxRule, PartialMap};
use crate::error::{Error, Result};
use crate::forward::solve_dirichlet;
use crate::grid::{Grid, ScalarField};
use crate::krylov::{pcg, KrylovConfig};
use crate::spectral::FastPoisson;

/// Neighbor of an interior node in one of the six stencil directions.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Neighbor {
    Interior(usize),
    /// Face and position `a + n b` of a boundary node.
    Boundary(Face, usize),
}

fn neighbors(grid: &Grid, idx: usize) -> [Neighbor; 6] {
    let n = grid.n_axis();
    let (i, j, k) = grid.unindex(idx);
    let ijk = [i, j, k];
    std::array::from_fn(|d| {
        let face = Face::ALL[d];
        let mut m = ijk;
        let at_edge = if face.positive { m[face.axis] + 1 == n } else { m[face.axis] == 0 };
        if at_edge {
            let (t0, t1) = face.tangential_axes();
            Neighbor::Boundary(face, ijk[t0] + n * ijk[t1])
        } else {
            if face.positive {
                m[face.axis] += 1;
            } else {
                m[face.axis] -= 1;
            }
            Neighbor::Interior(grid.index(m[0], m[1], m[2]))
        }
    })
}

fn sample(u: &GridFunction, nb: Neighbor) -> f64 {
    match nb {
        Neighbor::Interior(j) => u.interior.values()[j],
        Neighbor::Boundary(face, pos) => u.boundary.face(face)[pos],
    }
}

/// Positive conductivity sampled at interior and boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    sigma: GridFunction,
    /// `min sigma`
    pub sigma0: f64,
    /// Largest second difference along a grid axis.
    pub delta: f64,
}

impl ConductivityField {
    pub fn new(sigma: GridFunction) -> Result<Self> {
        let all = sigma.interior.values().iter().chain(sigma.boundary.values());
        let sigma0 = all.clone().cloned().fold(f64::INFINITY, f64::min);
        if !(sigma0 > 0.0) || all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("conductivity must be finite and positive (min = {sigma0})")));
        }
        let grid = *sigma.grid();
        let h2 = grid.spacing().powi(2);
        let mut delta = 0.0f64;
        for idx in 0..grid.len() {
            let nb = neighbors(&grid, idx);
            let c = sigma.interior.values()[idx];
            for axis in 0..3 {
                let second = (sample(&sigma, nb[2 * axis]) - 2.0 * c + sample(&sigma, nb[2 * axis + 1])) / h2;
                delta = delta.max(second.abs());
            }
        }
        Ok(Self { sigma, sigma0, delta })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        Self::new(GridFunction::from_fn(grid, f))
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::from_fn(grid, |_| value)
    }

    pub fn grid(&self) -> &Grid {
        self.sigma.grid()
    }

    pub fn samples(&self) -> &GridFunction {
        &self.sigma
    }

    pub fn interior(&self) -> &ScalarField {
        &self.sigma.interior
    }

    pub fn boundary(&self) -> &BoundaryTrace {
        &self.sigma.boundary
    }

    /// `d sigma / d nu` on the boundary (one-sided, second order).
    pub fn normal_derivative(&self) -> BoundaryTrace {
        trace1(&self.sigma)
    }

    fn sqrt(&self) -> GridFunction {
        GridFunction::new(self.sigma.interior.map(f64::sqrt), self.sigma.boundary.map(f64::sqrt))
    }
}

/// Compactly supported `amplitude (1 - |x - c|^2 / R^2)^4_+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactBump {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
}

impl CompactBump {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let r2: f64 = (0..3).map(|i| (x[i] - self.center[i]).powi(2)).sum::<f64>() / (self.radius * self.radius);
        if r2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - r2).powi(4)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConductivitySpec {
    Constant { value: f64 },
    /// `exp(2 a . x)`
    Exponential { a: [f64; 3] },
    /// `background (1 + sum of bumps)`, each bump supported strictly inside the cube.
    CompactBumps { background: f64, bumps: Vec<CompactBump> },
}

impl ConductivitySpec {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            ConductivitySpec::Constant { value } => *value,
            ConductivitySpec::Exponential { a } => (2.0 * (a[0] * x[0] + a[1] * x[1] + a[2] * x[2])).exp(),
            ConductivitySpec::CompactBumps { background, bumps } => {
                background * (1.0 + bumps.iter().map(|b| b.eval(x)).sum::<f64>())
            }
        }
    }

    pub fn build(&self, grid: Grid) -> Result<ConductivityField> {
        if let ConductivitySpec::CompactBumps { background, bumps } = self {
            if !(*background > 0.0) {
                return Err(Error::InvalidInput(format!("background conductivity {background} must be positive")));
            }
            for b in bumps {
                if !(b.radius > 0.0) || b.center.iter().any(|c| c.abs() + b.radius >= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "bump at {:?} with radius {} must lie strictly inside the cube",
                        b.center, b.radius
                    )));
                }
            }
            let negative: f64 = bumps.iter().map(|b| b.amplitude.min(0.0)).sum();
            if negative <= -1.0 {
                return Err(Error::InvalidInput(format!("negative bump amplitudes sum to {negative} <= -1")));
            }
        }
        ConductivityField::from_fn(grid, |x| self.eval(x))
    }
}

/// `sigma^{-1/2} Delta_h sigma^{1/2}` at interior nodes.
pub fn liouville_potential(sigma: &ConductivityField) -> ScalarField {
    let grid = *sigma.grid();
    let s = sigma.sqrt();
    let inv_h2 = 1.0 / grid.spacing().powi(2);
    let values = (0..grid.len())
        .map(|idx| {
            let c = s.interior.values()[idx];
            let lap: f64 = neighbors(&grid, idx).iter().map(|&nb| sample(&s, nb) - c).sum();
            lap * inv_h2 / c
        })
        .collect();
    ScalarField::from_values(grid, values).expect("one value per node")
}

fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Flux-form `-div(sigma grad)` with harmonic-mean face coefficients and
/// homogeneous Dirichlet closure.
#[derive(Debug, Clone)]
pub struct ConductivityOperator {
    sigma: ConductivityField,
    neighbors: Vec<[Neighbor; 6]>,
    /// Face coefficients divided by `h^2`.
    coef: Vec<[f64; 6]>,
    poisson: FastPoisson,
    inv_sqrt: Vec<f64>,
    pub krylov: KrylovConfig,
}

impl ConductivityOperator {
    pub fn new(sigma: &ConductivityField) -> Self {
        let grid = *sigma.grid();
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let neighbors: Vec<[Neighbor; 6]> = (0..grid.len()).map(|idx| neighbors(&grid, idx)).collect();
        let coef = neighbors
            .iter()
            .enumerate()
            .map(|(idx, nb)| {
                let c = sigma.interior().values()[idx];
                std::array::from_fn(|d| harmonic_mean(c, sample(sigma.samples(), nb[d])) * inv_h2)
            })
            .collect();
        Self {
            sigma: sigma.clone(),
            neighbors,
            coef,
            poisson: FastPoisson::new(grid.n_axis(), h, 0.0),
            inv_sqrt: sigma.interior().values().iter().map(|s| 1.0 / s.sqrt()).collect(),
            krylov: KrylovConfig::default(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.sigma.grid()
    }

    pub fn sigma(&self) -> &ConductivityField {
        &self.sigma
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (idx, out) in y.iter_mut().enumerate() {
            let xi = x[idx];
            *out = self.neighbors[idx]
                .iter()
                .zip(&self.coef[idx])
                .map(|(nb, c)| match *nb {
                    Neighbor::Interior(j) => c * (xi - x[j]),
                    Neighbor::Boundary(..) => c * xi,
                })
                .sum();
        }
    }

    /// Right-hand side contribution of Dirichlet data.
    fn boundary_source(&self, g: &BoundaryTrace) -> Vec<f64> {
        self.neighbors
            .iter()
            .zip(&self.coef)
            .map(|(nb, c)| {
                nb.iter()
                    .zip(c)
                    .map(|(n, c)| match *n {
                        Neighbor::Boundary(face, pos) => c * g.face(face)[pos],
                        Neighbor::Interior(_) => 0.0,
                    })
                    .sum()
            })
            .collect()
    }

    /// Transpose of [`Self::boundary_source`].
    fn boundary_source_transpose(&self, z: &[f64]) -> BoundaryTrace {
        let mut out = BoundaryTrace::zeros(*self.grid());
        for (idx, (nb, c)) in self.neighbors.iter().zip(&self.coef).enumerate() {
            for (n, c) in nb.iter().zip(c) {
                if let Neighbor::Boundary(face, pos) = *n {
                    out.face_mut(face)[pos] += c * z[idx];
                }
            }
        }
        out
    }

    /// Interior solve `A x = b`.
    pub fn solve_interior(&self, b: &[f64]) -> Result<Vec<f64>> {
        let out = pcg(
            |x: &[f64], y: &mut [f64]| self.apply(x, y),
            |r: &[f64], z: &mut [f64]| {
                let scaled: Vec<f64> = r.iter().zip(&self.inv_sqrt).map(|(v, s)| v * s).collect();
                self.poisson.apply_real(&scaled, z);
                for (zi, s) in z.iter_mut().zip(&self.inv_sqrt) {
                    *zi *= s;
                }
            },
            b,
            &self.krylov,
        )?
        .map_err(|_| Error::InvalidInput("conductivity operator lost positivity".into()))?;
        Ok(out.solution)
    }

    /// Solution of `-div(sigma grad u) = 0` with `u = g` on the boundary.
    pub fn solve(&self, g: &BoundaryTrace) -> Result<GridFunction> {
        let x = self.solve_interior(&self.boundary_source(g))?;
        Ok(GridFunction::new(ScalarField::from_values(*self.grid(), x)?, g.clone()))
    }

    /// `Lambda_sigma g = sigma d_nu u`.
    pub fn flux(&self, g: &BoundaryTrace) -> Result<BoundaryTrace> {
        let u = self.solve(g)?;
        Ok(trace1(&u).zip_with(self.sigma.boundary(), |d, s| d * s))
    }

    /// Transpose of [`Self::flux`] in the Euclidean node pairing.
    pub fn flux_transpose(&self, y: &BoundaryTrace) -> Result<BoundaryTrace> {
        let grid = *self.grid();
        let sy = y.zip_with(self.sigma.boundary(), |v, s| v * s);
        let z = self.solve_interior(&FluxRule::OneSided.transpose(&sy))?;
        let direct = sy.scale(1.5 / grid.spacing());
        Ok(direct.add(&self.boundary_source_transpose(&z)))
    }
}

/// `Lambda_sigma g`
pub fn dn_sigma(sigma: &ConductivityField, g: &BoundaryTrace) -> Result<BoundaryTrace> {
    ConductivityOperator::new(sigma).flux(g)
}

/// `Lambda_{q_sigma} g - (sigma^-1 d_nu sigma / 2) g - sigma^-1/2 Lambda_sigma (sigma^-1/2 g)`
pub fn dn_relation_residual(sigma: &ConductivityField, op: &ConductivityOperator, q: &ScalarField, g: &BoundaryTrace) -> Result<BoundaryTrace> {
    let sb = sigma.boundary();
    let lhs = dn_apply(q, g)?;
    let half = sigma.normal_derivative().zip_with(sb, |d, s| 0.5 * d / s);
    let scaled = g.zip_with(sb, |v, s| v / s.sqrt());
    let inner = op.flux(&scaled)?.zip_with(sb, |v, s| v / s.sqrt());
    let rhs = g.zip_with(&half, |v, c| v * c).add(&inner);
    Ok(lhs.sub(&rhs))
}

/// Largest `L2(Gamma)` residual of the DN relation over smooth traces, relative to `|g|`.
pub fn dn_relation_defect(sigma: &ConductivityField) -> Result<f64> {
    let grid = *sigma.grid();
    let q = liouville_potential(sigma);
    let op = ConductivityOperator::new(sigma);
    let all = crate::boundary::FaceSet::ALL;
    symmetry_probe_family(grid).iter().try_fold(0.0f64, |worst, g| {
        let r = dn_relation_residual(sigma, &op, &q, g)?;
        Ok(worst.max(r.l2_norm(&all) / g.l2_norm(&all)))
    })
}

/// Largest relative residual of
/// `(Lambda_q1 - Lambda_q2) g = sigma1^-1/2 (Lambda_sigma1 - Lambda_sigma2)(sigma1^-1/2 g)`
/// over smooth traces, for conductivities agreeing to first order on the boundary.
pub fn gauge_defect(sigma1: &ConductivityField, sigma2: &ConductivityField) -> Result<f64> {
    let grid = *sigma1.grid();
    let (q1, q2) = (liouville_potential(sigma1), liouville_potential(sigma2));
    let (op1, op2) = (ConductivityOperator::new(sigma1), ConductivityOperator::new(sigma2));
    let sb = sigma1.boundary();
    let all = crate::boundary::FaceSet::ALL;
    symmetry_probe_family(grid).iter().try_fold(0.0f64, |worst, g| {
        let lhs = dn_apply(&q1, g)?.sub(&dn_apply(&q2, g)?);
        let scaled = g.zip_with(sb, |v, s| v / s.sqrt());
        let rhs = op1.flux(&scaled)?.sub(&op2.flux(&scaled)?).zip_with(sb, |v, s| v / s.sqrt());
        let scale = lhs.l2_norm(&all).max(rhs.l2_norm(&all));
        Ok(if scale > 0.0 {
            worst.max(lhs.sub(&rhs).l2_norm(&all) / scale)
        } else {
            worst
        })
    })
}

/// Partial difference `g in F -> (Lambda_sigma1 - Lambda_sigma2) g on G`.
#[derive(Debug, Clone)]
pub struct ConductivityDifference {
    op1: ConductivityOperator,
    op2: ConductivityOperator,
    partition: FacePartition,
}

impl ConductivityDifference {
    pub fn new(sigma1: &ConductivityField, sigma2: &ConductivityField, partition: FacePartition) -> Result<Self> {
        if sigma1.grid() != sigma2.grid() {
            return Err(Error::InvalidInput("conductivities live on different grids".into()));
        }
        Ok(Self {
            op1: ConductivityOperator::new(sigma1),
            op2: ConductivityOperator::new(sigma2),
            partition,
        })
    }
}

impl PartialMap for ConductivityDifference {
    fn grid(&self) -> &Grid {
        self.op1.grid()
    }

    fn partition(&self) -> &FacePartition {
        &self.partition
    }

    fn map(&self, g: &BoundaryTrace) -> Result<BoundaryTrace> {
        if !g.supported_in(&self.partition.f) {
            return Err(Error::Support("input trace must be supported in F".into()));
        }
        Ok(self.op1.flux(g)?.sub(&self.op2.flux(g)?).restrict(&self.partition.g))
    }

    fn map_transpose(&self, y: &BoundaryTrace) -> Result<BoundaryTrace> {
        let y = y.restrict(&self.partition.g);
        Ok(self
            .op1
            .flux_transpose(&y)?
            .sub(&self.op2.flux_transpose(&y)?)
            .restrict(&self.partition.f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub iterations: usize,
    pub converged: bool,
    /// `|phi^k - phi^{k-1}|` for each step.
    pub increments: Vec<f64>,
    /// Successive increment ratios.
    pub contraction_ratios: Vec<f64>,
    /// Nodes where `sigma1^{1/2} - phi` was not positive.
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub sigma2: ConductivityField,
    pub phi: ScalarField,
    pub report: RecoveryReport,
}

const RECOVERY_TOL: f64 = 1e-8;
const RECOVERY_MAX_ITER: usize = 25;

/// Fixed point for `phi = sigma1^{1/2} - sigma2^{1/2}`:
/// `(-Delta_h + q1) phi^k = (sigma1^{1/2} - phi^{k-1}) qdiff`, `phi^k = 0` on the boundary.
pub fn recover_sigma(sigma1: &ConductivityField, qdiff: &ScalarField, q1: &ScalarField) -> Result<Recovery> {
    let grid = *sigma1.grid();
    if qdiff.grid() != &grid || q1.grid() != &grid {
        return Err(Error::InvalidInput("fields live on different grids".into()));
    }
    let s1 = sigma1.interior().map(f64::sqrt);
    let zero = BoundaryTrace::zeros(grid);
    let mut phi = ScalarField::zeros(grid);
    let mut increments: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..RECOVERY_MAX_ITER {
        let src = s1.sub(&phi).zip_with(qdiff, |a, b| a * b);
        let next = solve_dirichlet(q1, &src, &zero)?.solution;
        let inc = next.sub(&phi).l2_norm();
        phi = next;
        increments.push(inc);
        let k = increments.len();
        if k >= 4 && (k - 3..k).all(|i| increments[i] > increments[i - 1]) {
            return Err(Error::NonConvergence {
                method: "sigma fixed point",
                iterations: k,
                residual: inc,
                history: increments,
                hint: " (increments grew three steps in a row)".into(),
            });
        }
        if inc <= RECOVERY_TOL {
            converged = true;
            break;
        }
    }
    let floor = 0.5 * sigma1.sigma0;
    let root = s1.sub(&phi);
    let clamped = root.values().iter().filter(|&&v| v <= 0.0).count();
    // phi = 0 leaves sigma1 untouched bit for bit
    let mut interior = root.map(|v| if v > 0.0 { v * v } else { floor });
    for ((out, &p), &s) in interior.values_mut().iter_mut().zip(phi.values()).zip(sigma1.interior().values()) {
        if p == 0.0 {
            *out = s;
        }
    }
    let contraction_ratios = increments.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
    let sigma2 = ConductivityField::new(GridFunction::new(interior, sigma1.boundary().clone()))?;
    Ok(Recovery {
        sigma2,
        phi,
        report: RecoveryReport {
            iterations: increments.len(),
            converged,
            increments,
            contraction_ratios,
            clamped,
        },
    })
}
