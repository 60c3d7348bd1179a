//! Fourier probing from partial data: cone sampling around `xi`, the
//! Alessandrini estimator for `(q2 - q1)^(kappa)`, and polynomial extension of
//! cone samples to the low-frequency ball.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boundary::{DirectionFrame, Face};
use crate::cgo::{make_cgo_pair, phase, solve_cgo_with, CgoOptions, CgoPair, CgoSolution, CVec3};
use crate::dn::PartialDnOperator;
use crate::error::{Error, Result};
use crate::grid::{FrequencyVector, ScalarField};
use crate::krylov::KrylovConfig;

/// `((1 - sin t)^2 + 4 cos^2 t)` at `t = pi/2 + delta`.
fn cone_condition(delta: f64) -> f64 {
    (1.0 - delta.cos()).powi(2) + 4.0 * delta.sin().powi(2)
}

/// Largest half-width `eta` (bisection to 1e-6) such that the cone condition
/// stays below `epsilon^2` for every polar angle within `eta` of `pi/2`.
pub fn eta_of_epsilon(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidInput(format!("epsilon = {epsilon} outside (0, 1]")));
    }
    let target = epsilon * epsilon;
    let (mut lo, mut hi) = (0.0, PI / 2.0);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if cone_condition(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Lebesgue measure of the unit-radius cone slab, `(4 pi / 3) sin eta`.
pub fn cone_measure(epsilon: f64) -> Result<f64> {
    Ok(4.0 * PI / 3.0 * eta_of_epsilon(epsilon)?.sin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSampling {
    pub epsilon: f64,
    pub eta: f64,
    pub r: f64,
    pub frame: DirectionFrame,
    /// Unit directions in the frame where `xi = e1`.
    pub directions: Vec<[f64; 3]>,
    pub radii: Vec<f64>,
    /// `r T^* (s beta)` for every radius and direction, radius-major.
    pub kappas: Vec<FrequencyVector>,
}

/// Deterministic lattice over the cone: a Fibonacci spiral in `(cos theta1, phi)`
/// restricted to `|cos theta1| < sin eta`, times volume-uniform radii.
pub fn sample_cone(epsilon: f64, r: f64, n_dir: usize, n_rad: usize, frame: DirectionFrame) -> Result<ConeSampling> {
    if !(r > 0.0 && r.is_finite()) || n_dir == 0 || n_rad == 0 {
        return Err(Error::InvalidInput(format!(
            "cone sampling needs r > 0 and positive counts (r = {r}, n_dir = {n_dir}, n_rad = {n_rad})"
        )));
    }
    let eta = eta_of_epsilon(epsilon)?;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let directions: Vec<[f64; 3]> = (0..n_dir)
        .map(|i| {
            let c = eta.sin() * (2.0 * (i as f64 + 0.5) / n_dir as f64 - 1.0);
            let s = (1.0 - c * c).sqrt();
            let phi = 2.0 * PI * ((i as f64 + 0.5) * golden).fract();
            [c, s * phi.sin(), s * phi.cos()]
        })
        .collect();
    let radii: Vec<f64> = (0..n_rad).map(|k| ((k as f64 + 0.5) / n_rad as f64).cbrt()).collect();
    let kappas = radii
        .iter()
        .flat_map(|&s| {
            directions.iter().map(move |d| {
                let k = frame.apply_transpose([s * d[0], s * d[1], s * d[2]]);
                FrequencyVector::new(r * k[0], r * k[1], r * k[2])
            })
        })
        .collect();
    Ok(ConeSampling {
        epsilon,
        eta,
        r,
        frame,
        directions,
        radii,
        kappas,
    })
}

/// `C (exp(2 d tau) |Lambda| + tau^-1/2)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundModel {
    pub calibration: f64,
    pub dn_norm: f64,
    pub d: f64,
}

impl BoundModel {
    pub fn predict(&self, tau: f64) -> f64 {
        self.calibration * ((2.0 * self.d * tau).exp() * self.dn_norm + tau.powf(-0.5))
    }

    /// Least-squares calibration constant (clamped at zero) for observed errors over a tau sweep.
    pub fn calibrate(dn_norm: f64, d: f64, samples: &[(f64, f64)]) -> Self {
        let unit = BoundModel {
            calibration: 1.0,
            dn_norm,
            d,
        };
        let (num, den) = samples.iter().fold((0.0, 0.0), |(n, m), &(tau, err)| {
            let x = unit.predict(tau);
            (n + x * err, m + x * x)
        });
        BoundModel {
            calibration: if den > 0.0 { (num / den).max(0.0) } else { 0.0 },
            ..unit
        }
    }
}

/// Non-negative two-term fit `err ~ A x1 + B x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTermFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

impl TwoTermFit {
    /// Least squares over the four active sets of the non-negativity constraints.
    pub fn fit(x1: &[f64], x2: &[f64], y: &[f64]) -> Result<Self> {
        if x1.len() != y.len() || x2.len() != y.len() || y.len() < 2 {
            return Err(Error::InvalidInput("two-term fit needs at least two matching samples".into()));
        }
        let sse = |a: f64, b: f64| -> f64 {
            x1.iter().zip(x2).zip(y).map(|((p, q), v)| (v - a * p - b * q).powi(2)).sum()
        };
        let single = |x: &[f64]| {
            let den: f64 = x.iter().map(|v| v * v).sum();
            if den > 0.0 {
                (x.iter().zip(y).map(|(p, v)| p * v).sum::<f64>() / den).max(0.0)
            } else {
                0.0
            }
        };
        let mut candidates = vec![(0.0, 0.0), (single(x1), 0.0), (0.0, single(x2))];
        let (s11, s12, s22) = x1.iter().zip(x2).fold((0.0, 0.0, 0.0), |(a, b, c), (p, q)| {
            (a + p * p, b + p * q, c + q * q)
        });
        let (t1, t2) = x1.iter().zip(x2).zip(y).fold((0.0, 0.0), |(a, b), ((p, q), v)| (a + p * v, b + q * v));
        let det = s11 * s22 - s12 * s12;
        if det.abs() > 1e-14 * s11 * s22 {
            let a = (t1 * s22 - t2 * s12) / det;
            let b = (s11 * t2 - s12 * t1) / det;
            if a >= 0.0 && b >= 0.0 {
                candidates.push((a, b));
            }
        }
        let (a, b) = candidates
            .into_iter()
            .min_by(|p, q| sse(p.0, p.1).total_cmp(&sse(q.0, q.1)))
            .expect("non-empty candidate list");
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let r_squared = if sst > 0.0 { 1.0 - sse(a, b) / sst } else { 1.0 };
        Ok(Self { a, b, r_squared })
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        self.a * x1 + self.b * x2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierEstimate {
    pub kappa: FrequencyVector,
    pub tau: f64,
    pub value: Complex64,
    pub predicted_bound: Option<f64>,
    pub psi1_l2: f64,
    pub psi2_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub tau0: f64,
    pub cgo: CgoOptions,
    /// Solver settings for the difference field behind the measurement.
    pub measurement: KrylovConfig,
    /// Relative standard deviation of additive noise on the measured Neumann trace.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            cgo: CgoOptions::default(),
            measurement: KrylovConfig::default(),
            noise: 0.0,
            seed: 0,
        }
    }
}

/// The pair of CGO solutions behind one estimate.
#[derive(Debug, Clone)]
pub struct CgoProbe {
    pub pair: CgoPair,
    /// Solves `(-Delta_h + q1) u1 = 0`, vanishing where `-zeta . nu > eps`.
    pub u1: CgoSolution,
    /// Solves `(-Delta_h + q2) u2 = 0`, vanishing where `zeta . nu < -eps`.
    pub u2: CgoSolution,
}

pub fn build_probe(op: &PartialDnOperator, kappa: &FrequencyVector, tau: f64, epsilon: f64, opts: &ProbeOptions) -> Result<CgoProbe> {
    let grid = *op.grid();
    let pair = make_cgo_pair(kappa, tau, op.partition().xi, epsilon, opts.tau0)?;
    let (r1, r2) = pair.discrete_phases(grid.spacing())?;
    let u1 = solve_cgo_with(op.q1(), r1, epsilon, &opts.cgo)?;
    let u2 = solve_cgo_with(op.q2(), r2, epsilon, &opts.cgo)?;
    let part = op.partition();
    if !u2.amplitude_trace.supported_in(&part.f) {
        return Err(Error::Geometry(format!(
            "t0 u2 is not supported in F (zeta = {:?}, epsilon = {epsilon})",
            pair.zeta
        )));
    }
    if !u1.amplitude_trace.supported_in(&part.g) {
        return Err(Error::Geometry(format!(
            "t0 u1 is not supported in G (zeta = {:?}, epsilon = {epsilon})",
            pair.zeta
        )));
    }
    Ok(CgoProbe { pair, u1, u2 })
}

/// Estimate of `int (q2 - q1) exp(-i kappa . x) dx` from the pairing of
/// `t0 u1` with the measured `(Lambda_q1 - Lambda_q2) t0 u2`.
pub fn alessandrini_estimate(
    op: &PartialDnOperator,
    kappa: &FrequencyVector,
    tau: f64,
    epsilon: f64,
    opts: &ProbeOptions,
) -> Result<FourierEstimate> {
    let probe = build_probe(op, kappa, tau, epsilon, opts)?;
    let value = measure_pairing(op, &probe, opts)?;
    Ok(FourierEstimate {
        kappa: *kappa,
        tau,
        value,
        predicted_bound: None,
        psi1_l2: probe.u1.psi_l2,
        psi2_l2: probe.u2.psi_l2,
    })
}

/// `-h^2 sum_G t0u1 * D w`, with `w = u1' - u2` the difference field for data
/// `t0 u2` and `D` the conormal difference. The field is carried as
/// `w = exp(rho2 . x) omega`, so the pairing is assembled from bounded factors.
pub fn measure_pairing(op: &PartialDnOperator, probe: &CgoProbe, opts: &ProbeOptions) -> Result<Complex64> {
    let grid = *op.grid();
    let n = grid.n_axis();
    let h = grid.spacing();
    let rho1 = probe.u1.rho;
    let rho2 = probe.u2.rho;
    let dq = op.potential_difference();
    if dq.iter().all(|&v| v == 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let src: Vec<Complex64> = probe.u2.psi.values().iter().zip(dq).map(|(&p, &d)| (p + 1.0) * d).collect();
    let mut conj = crate::cgo::ConjugatedOperator::new(op.q1(), rho2);
    conj.krylov = opts.measurement;
    let omega = conj.solve(
        &ScalarField::from_values(grid, src)?,
        &crate::boundary::BoundaryTrace::zeros(grid),
    )?;
    let omega = omega.solution.values();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut value = Complex64::new(0.0, 0.0);
    let mut trace_sq = 0.0;
    let mut count = 0usize;
    let mut weights = Vec::new();
    let sum: CVec3 = std::array::from_fn(|j| rho1[j] + rho2[j]);
    for face in op.partition().g.faces() {
        let nu = face.normal();
        let shift = (-(rho2[0] * nu[0] + rho2[1] * nu[1] + rho2[2] * nu[2]) * h).exp();
        let amp = probe.u1.amplitude_trace.face(face);
        for b in 0..n {
            for a in 0..n {
                let xb = face.point(&grid, a, b);
                let w1 = omega[face.interior_index(&grid, a, b, 0)];
                // t0u1 * Dw = -exp((rho1 + rho2).x_b - h rho2.nu) (1 + psi1_b) omega_1 / h
                value += amp[a + n * b] * phase(&sum, xb).exp() * shift * w1 * h;
                if opts.noise > 0.0 {
                    let x1 = interior_point(face, xb, h);
                    let dw = (phase(&rho2, x1).re).exp() * w1.norm() / h;
                    trace_sq += dw * dw;
                    count += 1;
                    weights.push(phase(&rho1, xb).exp() * amp[a + n * b]);
                }
            }
        }
    }
    if opts.noise > 0.0 && count > 0 {
        let level = opts.noise * (trace_sq / count as f64).sqrt();
        let h2 = h * h;
        for g1 in weights {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let e = Complex64::new(re, im) * (level / 2f64.sqrt());
            value -= g1 * e * h2;
        }
    }
    Ok(value)
}

fn interior_point(face: Face, xb: [f64; 3], h: f64) -> [f64; 3] {
    let nu = face.normal();
    [xb[0] - h * nu[0], xb[1] - h * nu[1], xb[2] - h * nu[2]]
}

/// Polynomial extension of cone samples of `F(k) = q^(r k)` to the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct LowpassExtension {
    pub r: f64,
    pub degree: usize,
    pub lambda: f64,
    pub exponents: Vec<[usize; 3]>,
    pub coefficients: Vec<Complex64>,
    /// Ratio of extreme singular values of the design matrix.
    pub condition: f64,
    /// Root-mean-square misfit on the samples.
    pub fit_residual: f64,
}

pub fn monomial_exponents(degree: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in (0..=total).rev() {
            for b in (0..=total - a).rev() {
                out.push([a, b, total - a - b]);
            }
        }
    }
    out
}

fn monomial(e: &[usize; 3], k: [f64; 3]) -> f64 {
    k[0].powi(e[0] as i32) * k[1].powi(e[1] as i32) * k[2].powi(e[2] as i32)
}

/// Ridge-regularized least squares for a degree-`D` polynomial in `kappa / r`.
pub fn extend_lowpass(samples: &[(FrequencyVector, Complex64)], r: f64, degree: usize, lambda: f64) -> Result<LowpassExtension> {
    if !(r > 0.0) || !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("need r > 0 and lambda >= 0 (r = {r}, lambda = {lambda})")));
    }
    let exponents = monomial_exponents(degree);
    let m = exponents.len();
    if samples.len() < m {
        return Err(Error::InvalidInput(format!(
            "degree {degree} needs at least {m} samples, got {}",
            samples.len()
        )));
    }
    let scaled: Vec<[f64; 3]> = samples.iter().map(|(k, _)| k.scaled(1.0 / r).0).collect();
    let design = DMatrix::from_fn(samples.len(), m, |i, j| monomial(&exponents[j], scaled[i]));
    let svd = design.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().expect("u requested"), svd.v_t.as_ref().expect("v_t requested"));
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let smin = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut coefficients = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..sigma.len() {
        let s = sigma[k];
        let filt = if s * s + lambda > 0.0 { s / (s * s + lambda) } else { 0.0 };
        if filt == 0.0 {
            continue;
        }
        let proj: Complex64 = (0..samples.len()).map(|i| samples[i].1 * u[(i, k)]).sum();
        for (j, c) in coefficients.iter_mut().enumerate() {
            *c += proj * (filt * vt[(k, j)]);
        }
    }
    let mut ext = LowpassExtension {
        r,
        degree,
        lambda,
        exponents,
        coefficients,
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        fit_residual: 0.0,
    };
    let sq: f64 = samples.iter().map(|(k, v)| (ext.eval(k) - v).norm_sqr()).sum();
    ext.fit_residual = (sq / samples.len() as f64).sqrt();
    Ok(ext)
}

impl LowpassExtension {
    /// Extension at `kappa`; meaningful for `|kappa| <= r`.
    pub fn eval(&self, kappa: &FrequencyVector) -> Complex64 {
        let k = kappa.scaled(1.0 / self.r).0;
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, &c)| c * monomial(e, k))
            .sum()
    }
}

/// First line of every CSV artifact.
pub fn csv_version_line() -> String {
    format!("# calderon-lab {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Serialize)]
struct EstimateRow {
    #[serde(rename = "kappa1")]
    k1: f64,
    #[serde(rename = "kappa2")]
    k2: f64,
    #[serde(rename = "kappa3")]
    k3: f64,
    tau: f64,
    #[serde(rename = "re_estimate_qhat_diff")]
    re: f64,
    #[serde(rename = "im_estimate_qhat_diff")]
    im: f64,
    #[serde(rename = "predicted_bound")]
    bound: Option<f64>,
}

pub fn write_estimates_csv(out: &mut impl Write, estimates: &[FourierEstimate]) -> Result<()> {
    writeln!(out, "{}", csv_version_line())?;
    let mut w = csv::Writer::from_writer(out);
    for e in estimates {
        w.serialize(EstimateRow {
            k1: e.kappa.0[0],
            k2: e.kappa.0[1],
            k3: e.kappa.0[2],
            tau: e.tau,
            re: e.value.re,
            im: e.value.im,
            bound: e.predicted_bound,
        })
        .map_err(|err| Error::Serde(err.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{face_partition, FaceSet};
    use crate::cgo::pick_zeta;
    use crate::grid::{fourier_coefficient, Grid, PotentialSpec};

    const E1: [f64; 3] = [1.0, 0.0, 0.0];

    #[test]
    fn eta_matches_dense_sampling() {
        let eta = eta_of_epsilon(0.2).unwrap();
        let target = 0.2f64 * 0.2;
        let samples = 100_000;
        let holds = |w: f64| (0..=samples).all(|i| cone_condition(w * (2.0 * i as f64 / samples as f64 - 1.0)) < target);
        assert!(holds(eta));
        assert!(!holds(eta + 2e-6));
        assert!(eta_of_epsilon(0.1).unwrap() <= eta);
        assert!(eta_of_epsilon(0.0).is_err() && eta_of_epsilon(1.5).is_err());
        assert!(eta_of_epsilon(1e-9).unwrap() >= 0.0);
    }

    #[test]
    fn cone_measure_closed_form() {
        let eps = 0.4;
        let eta = eta_of_epsilon(eps).unwrap();
        assert!((cone_measure(eps).unwrap() - 4.0 * PI / 3.0 * eta.sin()).abs() < 1e-15);
        assert!(cone_measure(1e-6).unwrap() < 1e-5);
    }

    #[test]
    fn cone_samples_are_admissible() {
        let eps = 0.3;
        let frame = DirectionFrame::new(E1).unwrap();
        let cone = sample_cone(eps, 4.0, 40, 3, frame).unwrap();
        assert_eq!(cone.kappas.len(), 120);
        for k in &cone.kappas {
            assert!(k.norm() <= 4.0 + 1e-12);
            pick_zeta(k, E1, eps).unwrap();
            assert!((k.0[0] / k.norm()).abs() < cone.eta.sin());
        }
        let xi = [0.0, 0.6, 0.8];
        let tilted = sample_cone(eps, 2.0, 25, 2, DirectionFrame::new(xi).unwrap()).unwrap();
        for k in &tilted.kappas {
            pick_zeta(k, xi, eps).unwrap();
        }
        assert!(sample_cone(eps, 0.0, 3, 3, frame).is_err());
    }

    #[test]
    fn two_term_fit_recovers_coefficients() {
        let x1 = [1.0, 2.0, 4.0, 8.0];
        let x2 = [1.0, 0.5, 0.3, 0.2];
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 0.3 * a + 2.0 * b).collect();
        let fit = TwoTermFit::fit(&x1, &x2, &y).unwrap();
        assert!((fit.a - 0.3).abs() < 1e-10 && (fit.b - 2.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x1.iter().map(|a| -a).collect();
        let fit = TwoTermFit::fit(&x1, &x2, &neg).unwrap();
        assert!(fit.a >= 0.0 && fit.b >= 0.0);
    }

    fn cone_points(eps: f64, r: f64) -> Vec<FrequencyVector> {
        sample_cone(eps, r, 60, 4, DirectionFrame::new(E1).unwrap()).unwrap().kappas
    }

    #[test]
    fn extension_reproduces_polynomials() {
        let pts = cone_points(0.4, 3.0);
        let c = Complex64::new(0.7, -0.2);
        let ext = extend_lowpass(&pts.iter().map(|k| (*k, c)).collect::<Vec<_>>(), 3.0, 2, 0.0).unwrap();
        assert!((ext.eval(&FrequencyVector::new(2.0, 0.5, -1.0)) - c).norm() < 1e-10);
        let lin: Vec<_> = pts.iter().map(|k| (*k, Complex64::new(k.0[1], 0.0))).collect();
        let ext = extend_lowpass(&lin, 3.0, 1, 0.0).unwrap();
        for k in [FrequencyVector::new(2.5, 0.3, 0.1), FrequencyVector::new(-1.0, -2.0, 1.5)] {
            assert!((ext.eval(&k) - k.0[1]).norm() < 1e-10);
        }
        assert!(extend_lowpass(&lin[..5], 3.0, 2, 0.0).is_err());
    }

    #[test]
    fn extension_is_linear_in_samples() {
        let pts = cone_points(0.4, 2.0);
        let s1: Vec<_> = pts.iter().map(|k| (*k, Complex64::new(k.0[0].cos(), k.0[2]))).collect();
        let s2: Vec<_> = pts.iter().map(|k| (*k, Complex64::new(k.norm(), 1.0))).collect();
        let mix: Vec<_> = s1.iter().zip(&s2).map(|(a, b)| (a.0, a.1 * 2.0 - b.1 * 0.5)).collect();
        let (e1, e2, em) = (
            extend_lowpass(&s1, 2.0, 4, 1e-8).unwrap(),
            extend_lowpass(&s2, 2.0, 4, 1e-8).unwrap(),
            extend_lowpass(&mix, 2.0, 4, 1e-8).unwrap(),
        );
        let k = FrequencyVector::new(1.2, -0.4, 0.3);
        assert!((em.eval(&k) - (e1.eval(&k) * 2.0 - e2.eval(&k) * 0.5)).norm() < 1e-9);
    }

    #[test]
    fn extension_of_bump_transform() {
        let g = Grid::new(15).unwrap();
        let q = PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, 3.0).build(g, 5.0).unwrap();
        let r = 2.0;
        let samples: Vec<_> = cone_points(0.7, r).into_iter().map(|k| (k, fourier_coefficient(&q, &k))).collect();
        let ext = extend_lowpass(&samples, r, 6, 1e-8).unwrap();
        let ball = sample_cone(1.0, r, 200, 4, DirectionFrame::new(E1).unwrap()).unwrap();
        let worst = ball
            .kappas
            .iter()
            .map(|k| (ext.eval(k) - fourier_coefficient(&q, k)).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 5.0 * ext.fit_residual.max(1e-6), "{worst} vs {}", ext.fit_residual);
    }

    fn setup(n: usize, amp: f64) -> (PartialDnOperator, ScalarField) {
        let g = Grid::new(n).unwrap();
        let q2 = PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, amp).build(g, 5.0).unwrap();
        let q1 = ScalarField::zeros(g);
        let dq = q2.sub(&q1);
        (PartialDnOperator::new(&q1, &q2, face_partition(E1, 0.45).unwrap()).unwrap(), dq)
    }

    #[test]
    fn identical_potentials_give_zero_estimate() {
        let g = Grid::new(11).unwrap();
        let q = PotentialSpec::single_bump([0.0; 3], 0.4, 2.0).build(g, 5.0).unwrap();
        let op = PartialDnOperator::new(&q, &q, face_partition(E1, 0.45).unwrap()).unwrap();
        let e = alessandrini_estimate(&op, &FrequencyVector::new(0.0, 1.0, 0.0), 4.0, 0.45, &ProbeOptions::default()).unwrap();
        assert!(e.value.norm() <= 1e-8);
    }

    #[test]
    fn factored_pairing_matches_direct_measurement() {
        let (mut op, _) = setup(11, 3.0);
        op.flux = crate::dn::FluxRule::Conormal;
        let opts = ProbeOptions::default();
        let probe = build_probe(&op, &FrequencyVector::new(0.0, 1.0, 0.5), 2.0, 0.45, &opts).unwrap();
        let factored = measure_pairing(&op, &probe, &opts).unwrap();
        let g1 = probe.u1.trace();
        let m = op.apply(&probe.u2.trace()).unwrap();
        let direct = -g1.pairing(&m, &FaceSet::ALL);
        assert!((factored - direct).norm() <= 1e-8 * direct.norm(), "{factored} vs {direct}");
    }

    #[test]
    fn estimate_tracks_fourier_coefficient() {
        let (op, dq) = setup(15, 3.0);
        let kappa = FrequencyVector::new(0.0, 0.8, 0.3);
        let exact = fourier_coefficient(&dq, &kappa);
        let errs: Vec<f64> = [2.0, 4.0, 8.0]
            .iter()
            .map(|&t| {
                let e = alessandrini_estimate(&op, &kappa, t, 0.45, &ProbeOptions::default()).unwrap();
                (e.value - exact).norm() / exact.norm()
            })
            .collect();
        assert!(errs[2] < 0.1, "{errs:?}");
        assert!(errs.iter().cloned().fold(f64::INFINITY, f64::min) <= errs[0]);
    }

    #[test]
    fn noise_degrades_estimates_and_is_seeded() {
        let (op, dq) = setup(11, 3.0);
        let kappa = FrequencyVector::new(0.0, 0.8, 0.3);
        let exact = fourier_coefficient(&dq, &kappa);
        let run = |noise: f64, seed: u64| {
            let opts = ProbeOptions {
                noise,
                seed,
                ..ProbeOptions::default()
            };
            alessandrini_estimate(&op, &kappa, 3.0, 0.45, &opts).unwrap().value
        };
        assert_eq!(run(1e-3, 5), run(1e-3, 5));
        let clean = run(0.0, 0);
        let spread = |noise: f64| (0..8).map(|s| (run(noise, s) - clean).norm()).sum::<f64>() / 8.0;
        let devs = [spread(1e-4), spread(1e-3), spread(1e-2)];
        assert!(devs[0] < devs[1] && devs[1] < devs[2], "{devs:?}");
        let err = |v: Complex64| (v - exact).norm();
        assert!((0..8).map(|s| err(run(0.3, s))).sum::<f64>() / 8.0 > err(clean));
    }

    #[test]
    fn csv_has_version_line_and_header() {
        let est = FourierEstimate {
            kappa: FrequencyVector::new(0.0, 1.0, 2.0),
            tau: 3.0,
            value: Complex64::new(1.5, -0.5),
            predicted_bound: Some(0.25),
            psi1_l2: 0.1,
            psi2_l2: 0.2,
        };
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &[est]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# calderon-lab"));
        assert_eq!(lines[1], "kappa1,kappa2,kappa3,tau,re_estimate_qhat_diff,im_estimate_qhat_diff,predicted_bound");
        assert_eq!(lines[2], "0.0,1.0,2.0,3.0,1.5,-0.5,0.25");
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn two_term_fit_is_nonnegative_and_optimal(
                rows in vec((0.0f64..10.0, 0.0f64..10.0, -5.0f64..5.0), 2..12),
                a in 0.0f64..3.0, b in 0.0f64..3.0,
            ) {
                let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
                let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
                let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
                let fit = TwoTermFit::fit(&x1, &x2, &y).unwrap();
                prop_assert!(fit.a >= 0.0 && fit.b >= 0.0);
                let sse = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
                    x1.iter().zip(&x2).zip(&y).map(|((p, q), v)| (v - f(*p, *q)).powi(2)).sum()
                };
                let best = sse(&|p, q| fit.eval(p, q));
                let other = sse(&|p, q| a * p + b * q);
                prop_assert!(best <= other * (1.0 + 1e-9) + 1e-9);
            }
        }
    }
}
