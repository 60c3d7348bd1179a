//! Configuration-driven experiment runners shared by the command-line front end,
//! the examples, and the acceptance suite.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{face_partition, BoundaryTrace, FacePartition, GridFunction};
use crate::cgo::{make_cgo_pair, pick_zeta, CgoClosure, CgoOptions};
use crate::conductivity::{
    dn_relation_defect, gauge_defect, liouville_potential, recover_sigma, CompactBump, ConductivityDifference,
    ConductivitySpec,
};
use crate::dn::{dn_symmetry_defect, operator_norm_with, NormConfig, PartialDnOperator};
use crate::error::{Error, Result};
use crate::forward::{carleman_ratio, check_invertible, green_defect, solve_dirichlet};
use crate::grid::{fourier_coefficient, write_field_dump, FrequencyVector, Grid, PotentialSpec, ScalarField};
use crate::probe::{alessandrini_estimate, csv_version_line, ProbeOptions, TwoTermFit};
use crate::reconstruct::{
    reconstruct, stability_sweep, write_stability_csv, RadiusRule, ReconstructionReport, SamplingConfig,
    StabilityParams, StabilitySweep,
};

/// Every key of the configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "defaults::n_axis")]
    pub n_axis: usize,
    #[serde(default = "defaults::xi")]
    pub xi: [f64; 3],
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::t")]
    pub t: f64,
    #[serde(default = "defaults::tau0")]
    pub tau0: f64,
    #[serde(default = "defaults::tau_max")]
    pub tau_max: f64,
    #[serde(default = "defaults::n_dir")]
    pub n_dir: usize,
    #[serde(default = "defaults::n_rad")]
    pub n_rad: usize,
    #[serde(default = "defaults::degree")]
    pub degree: usize,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::radius")]
    pub radius: RadiusRule,
    /// Relative standard deviation of additive noise on measured Neumann traces.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub closure: CgoClosure,
    #[serde(default = "defaults::q1")]
    pub q1: PotentialSpec,
    /// `q2 = q1 + phantom` for probe and reconstruct, `q1 + s * phantom` in a sweep.
    #[serde(default = "defaults::phantom")]
    pub phantom: PotentialSpec,
    #[serde(default = "defaults::scales")]
    pub scales: Vec<f64>,
    #[serde(default = "defaults::taus")]
    pub taus: Vec<f64>,
    #[serde(default = "defaults::kappas")]
    pub kappas: Vec<[f64; 3]>,
    #[serde(default)]
    pub conductivity: ConductivityPair,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductivityPair {
    pub sigma1: ConductivitySpec,
    pub sigma2: ConductivitySpec,
}

impl Default for ConductivityPair {
    fn default() -> Self {
        let bumps = |center: [f64; 3], radius: f64, amplitude: f64| ConductivitySpec::CompactBumps {
            background: 1.0,
            bumps: vec![CompactBump {
                center,
                radius,
                amplitude,
            }],
        };
        Self {
            sigma1: bumps([0.1, 0.0, 0.0], 0.6, 0.4),
            sigma2: bumps([-0.1, 0.1, 0.0], 0.5, 0.6),
        }
    }
}

mod defaults {
    use super::*;

    pub fn n_axis() -> usize {
        15
    }
    pub fn xi() -> [f64; 3] {
        [1.0, 0.0, 0.0]
    }
    pub fn epsilon() -> f64 {
        0.45
    }
    pub fn delta() -> f64 {
        5.0
    }
    pub fn t() -> f64 {
        1.0
    }
    pub fn tau0() -> f64 {
        1.0
    }
    pub fn tau_max() -> f64 {
        12.0
    }
    pub fn n_dir() -> usize {
        24
    }
    pub fn n_rad() -> usize {
        3
    }
    pub fn degree() -> usize {
        4
    }
    pub fn lambda() -> f64 {
        1e-6
    }
    pub fn radius() -> RadiusRule {
        RadiusRule::Fixed { r: 3.0 }
    }
    pub fn q1() -> PotentialSpec {
        PotentialSpec::Constant { value: 0.0 }
    }
    pub fn phantom() -> PotentialSpec {
        PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, 1.0)
    }
    pub fn scales() -> Vec<f64> {
        vec![0.4, 0.2, 0.1, 0.05]
    }
    pub fn taus() -> Vec<f64> {
        vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0]
    }
    pub fn kappas() -> Vec<[f64; 3]> {
        vec![[0.0, 0.5, 0.2], [0.2, 1.5, -1.0], [-0.3, -0.5, 2.5]]
    }
}

impl ExperimentConfig {
    /// Defaults for every key except the seed.
    pub fn with_seed(seed: u64) -> Self {
        toml::from_str(&format!("seed = {seed}")).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Range checks, reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        if self.n_axis < 3 {
            return Err(Error::Config(format!("n_axis = {} is below the minimum of 3", self.n_axis)));
        }
        Grid::new(self.n_axis).map_err(cfg_err)?;
        face_partition(self.xi, self.epsilon).map_err(cfg_err)?;
        self.stability_params().validate().map_err(cfg_err)?;
        self.sampling().validate().map_err(cfg_err)?;
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise = {} must be a non-negative number", self.noise)));
        }
        if self.taus.is_empty() || self.taus.iter().any(|&t| !(t >= self.tau0 && t <= self.tau_max)) {
            return Err(Error::Config(format!(
                "taus must be non-empty and lie in [tau0, tau_max] = [{}, {}]",
                self.tau0, self.tau_max
            )));
        }
        if self.kappas.iter().any(|k| k.iter().all(|&c| c == 0.0)) {
            return Err(Error::Config("kappas must be non-zero".into()));
        }
        if self.scales.is_empty() || self.scales.windows(2).any(|w| !(w[1] < w[0])) || self.scales.iter().any(|&s| s < 0.0) {
            return Err(Error::Config(format!(
                "scales must be non-empty, non-negative and strictly decreasing: {:?}",
                self.scales
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_axis)
    }

    pub fn partition(&self) -> Result<FacePartition> {
        face_partition(self.xi, self.epsilon)
    }

    pub fn stability_params(&self) -> StabilityParams {
        StabilityParams {
            t: self.t,
            delta: self.delta,
            tau0: self.tau0,
            tau_max: self.tau_max,
            ..StabilityParams::default()
        }
    }

    pub fn probe_options(&self) -> ProbeOptions {
        ProbeOptions {
            tau0: self.tau0,
            cgo: CgoOptions {
                closure: self.closure,
                ..CgoOptions::default()
            },
            noise: self.noise,
            seed: self.seed,
            ..ProbeOptions::default()
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            epsilon: self.epsilon,
            n_dir: self.n_dir,
            n_rad: self.n_rad,
            degree: self.degree,
            lambda: self.lambda,
            radius: self.radius,
            probe: self.probe_options(),
            norm: NormConfig {
                seed: self.seed,
                ..NormConfig::default()
            },
            ..SamplingConfig::default()
        }
    }

    /// `(q1, q2 - q1)` on the configured grid.
    pub fn potentials(&self) -> Result<(ScalarField, ScalarField)> {
        let grid = self.grid()?;
        let q1 = self.q1.build(grid, self.delta)?;
        let diff = self.phantom.build(grid, self.delta)?;
        let q2 = q1.add(&diff);
        if q2.sup_norm() > self.delta * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "q1 + phantom has sup-norm {:.4} above delta = {}",
                q2.sup_norm(),
                self.delta
            )));
        }
        Ok((q1, diff))
    }
}

/// One named pass/fail diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn order(coarse: f64, fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (coarse / fine).ln() / (h_coarse / h_fine).ln()
}

/// L2 error of the solver against `prod cos(pi x_i / 2)` with source
/// `(3 pi^2 / 4 + q) u`.
pub fn manufactured_error(q: &ScalarField) -> Result<f64> {
    let grid = *q.grid();
    let exact = |x: [f64; 3]| x.iter().map(|c| (PI * c / 2.0).cos()).product::<f64>();
    let f = q.zip_with(&ScalarField::from_fn(grid, exact), |qi, u| (0.75 * PI * PI + qi) * u);
    let rep = solve_dirichlet(q, &f, &BoundaryTrace::zeros(grid))?;
    Ok(rep.solution.sub(&ScalarField::from_fn(grid, exact)).l2_norm())
}

/// Green identity defect on a pair of smooth trigonometric functions.
pub fn green_pair_defect(q: &ScalarField) -> f64 {
    let grid = *q.grid();
    let u = GridFunction::from_fn(grid, |x| (1.3 * x[0] + 0.4).sin() * (0.7 * x[1]).cos() + (0.8 * x[2]).sin());
    let v = GridFunction::from_fn(grid, |x| (0.9 * x[1] - 0.2).cos() * (1.1 * x[2]).sin() + (0.6 * x[0]).cos());
    green_defect(&u, &v, q)
}

/// Random combinations of the 27 lowest Dirichlet sine modes.
pub fn random_vanishing_functions(grid: Grid, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coeffs: Vec<f64> = (0..27).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let interior = ScalarField::from_fn(grid, |x| {
                let m = |k: usize, t: f64| (k as f64 * PI * (t + 1.0) / 2.0).sin();
                let mut s = 0.0;
                for (i, c) in coeffs.iter().enumerate() {
                    let (a, b, d) = (i % 3 + 1, (i / 3) % 3 + 1, i / 9 + 1);
                    s += c * m(a, x[0]) * m(b, x[1]) * m(d, x[2]) / (a * a + b * b + d * d) as f64;
                }
                s
            });
            GridFunction::new(interior, BoundaryTrace::zeros(grid))
        })
        .collect()
}

/// For each tau, the largest Carleman ratio over `fns`.
pub fn carleman_sweep(fns: &[GridFunction], q: &ScalarField, taus: &[f64], zeta: [f64; 3]) -> Result<Vec<f64>> {
    taus.iter()
        .map(|&tau| {
            fns.iter()
                .map(|v| carleman_ratio(v, q, tau, zeta))
                .try_fold(0.0f64, |m, r| r.map(|r| m.max(r)))
        })
        .collect()
}

/// Solver self-checks on the configured grid and its refinement `2n + 1`.
pub fn run_forward(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let coarse = cfg.grid()?;
    let fine = Grid::new(2 * cfg.n_axis + 1)?;
    let (hc, hf) = (coarse.spacing(), fine.spacing());
    let build = |g: Grid| -> Result<(ScalarField, ScalarField)> {
        let q1 = cfg.q1.build(g, cfg.delta)?;
        let q2 = q1.add(&cfg.phantom.build(g, cfg.delta)?);
        Ok((q1, q2))
    };
    let (q1c, q2c) = build(coarse)?;
    let (_, q2f) = build(fine)?;
    let mut checks = Vec::new();
    checks.push(Check::at_least(
        "manufactured_order",
        order(manufactured_error(&q2c)?, manufactured_error(&q2f)?, hc, hf),
        1.8,
    ));
    let lam = check_invertible(&ScalarField::zeros(coarse))?;
    let cont = 0.75 * PI * PI;
    checks.push(Check::at_most("laplacian_ground_state_rel_err", (lam - cont).abs() / cont, 0.02));
    for (name, q) in [("q1_min_abs_eigenvalue", &q1c), ("q2_min_abs_eigenvalue", &q2c)] {
        checks.push(Check::at_least(name, check_invertible(q)?, 1e-6));
    }
    checks.push(Check::at_least(
        "green_defect_order",
        order(green_pair_defect(&q2c), green_pair_defect(&q2f), hc, hf),
        0.9,
    ));
    checks.push(Check::at_least(
        "dn_symmetry_order",
        order(dn_symmetry_defect(&q2c)?, dn_symmetry_defect(&q2f)?, hc, hf),
        0.9,
    ));
    let fns = random_vanishing_functions(coarse, 20, cfg.seed);
    let ratios = carleman_sweep(&fns, &q2c, &[1.0, 2.0, 4.0, 8.0], cfg.xi)?;
    let spread = ratios.iter().cloned().fold(0.0f64, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    checks.push(Check::at_most("carleman_spread", spread, 10.0));
    Ok(checks)
}

/// One probe estimate against the exact transform of `q2 - q1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub tau: f64,
    /// Estimate of the transform of `q2 - q1` at `kappa`.
    pub re_estimate: f64,
    pub im_estimate: f64,
    /// Grid transform of `q2 - q1` at `kappa`.
    pub re_oracle: f64,
    pub im_oracle: f64,
    pub abs_error: f64,
    /// `A exp(2 d tau) |Lambda| + B tau^-1/2` from the per-kappa fit.
    pub predicted_bound: f64,
    pub psi1_l2: f64,
    pub psi2_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa: [f64; 3],
    pub fit: TwoTermFit,
    /// Largest ratio of error to fitted bound over the tau sweep.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub dn_norm: f64,
    pub rows: Vec<ProbeRow>,
    pub fits: Vec<KappaFit>,
}

/// Alessandrini estimates over `kappas x taus`, with a two-term error fit per kappa.
pub fn run_probe(cfg: &ExperimentConfig) -> Result<ProbeRun> {
    let (q1, diff) = cfg.potentials()?;
    let q2 = q1.add(&diff);
    let op = PartialDnOperator::new(&q1, &q2, cfg.partition()?)?;
    let dn_norm = operator_norm_with(&op, &cfg.sampling().norm)?.norm;
    let d = cfg.grid()?.diameter();
    let jobs: Vec<(FrequencyVector, f64)> = cfg
        .kappas
        .iter()
        .flat_map(|k| cfg.taus.iter().map(move |&t| (FrequencyVector(*k), t)))
        .collect();
    let base = cfg.probe_options();
    let estimates = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (k, tau))| {
            let opts = ProbeOptions {
                seed: base.seed.wrapping_add(i as u64),
                ..base
            };
            alessandrini_estimate(&op, k, *tau, cfg.epsilon, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(estimates.len());
    let mut fits = Vec::with_capacity(cfg.kappas.len());
    for chunk in estimates.chunks(cfg.taus.len()) {
        let kappa = chunk[0].kappa;
        let oracle = fourier_coefficient(&diff, &kappa);
        let errs: Vec<f64> = chunk.iter().map(|e| (e.value - oracle).norm()).collect();
        let x1: Vec<f64> = chunk.iter().map(|e| (2.0 * d * e.tau).exp() * dn_norm).collect();
        let x2: Vec<f64> = chunk.iter().map(|e| e.tau.powf(-0.5)).collect();
        let fit = TwoTermFit::fit(&x1, &x2, &errs)?;
        let mut max_ratio = 0.0f64;
        for (i, e) in chunk.iter().enumerate() {
            let bound = fit.eval(x1[i], x2[i]);
            max_ratio = max_ratio.max(if bound > 0.0 { errs[i] / bound } else if errs[i] > 0.0 { f64::INFINITY } else { 0.0 });
            rows.push(ProbeRow {
                kappa1: kappa.0[0],
                kappa2: kappa.0[1],
                kappa3: kappa.0[2],
                tau: e.tau,
                re_estimate: e.value.re,
                im_estimate: e.value.im,
                re_oracle: oracle.re,
                im_oracle: oracle.im,
                abs_error: errs[i],
                predicted_bound: bound,
                psi1_l2: e.psi1_l2,
                psi2_l2: e.psi2_l2,
            });
        }
        fits.push(KappaFit {
            kappa: kappa.0,
            fit,
            max_ratio,
        });
    }
    Ok(ProbeRun { dn_norm, rows, fits })
}

/// Largest `|estimate|` when both potentials equal `q1`.
pub fn zero_control(cfg: &ExperimentConfig) -> Result<f64> {
    let (q1, _) = cfg.potentials()?;
    let op = PartialDnOperator::new(&q1, &q1, cfg.partition()?)?;
    let opts = cfg.probe_options();
    let mut worst = 0.0f64;
    for k in &cfg.kappas {
        for &tau in &cfg.taus {
            let e = alessandrini_estimate(&op, &FrequencyVector(*k), tau, cfg.epsilon, &opts)?;
            worst = worst.max(e.value.norm());
        }
    }
    Ok(worst)
}

pub struct ReconstructRun {
    pub q_rec: ScalarField,
    pub report: ReconstructionReport,
}

pub fn run_reconstruct(cfg: &ExperimentConfig) -> Result<ReconstructRun> {
    let (q1, diff) = cfg.potentials()?;
    let q2 = q1.add(&diff);
    let op = PartialDnOperator::new(&q1, &q2, cfg.partition()?)?;
    let rec = reconstruct(&op, &cfg.stability_params(), &cfg.sampling(), Some(&diff))?;
    Ok(ReconstructRun {
        q_rec: rec.q_rec,
        report: rec.report,
    })
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<StabilitySweep> {
    let grid = cfg.grid()?;
    let q1 = cfg.q1.build(grid, cfg.delta)?;
    let phantom = cfg.phantom.build(grid, cfg.delta)?;
    stability_sweep(&q1, &phantom, &cfg.scales, cfg.xi, &cfg.stability_params(), &cfg.sampling())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductivityRun {
    pub n_axis: usize,
    pub coarse_n_axis: usize,
    /// Defect of the DN relation for `sigma1` at both grids.
    pub relation_defect: f64,
    pub relation_defect_coarse: f64,
    pub relation_order: f64,
    pub gauge_defect: f64,
    pub gauge_defect_coarse: f64,
    pub recovery_error: f64,
    pub recovery_iterations: usize,
    pub recovery_converged: bool,
    pub norm_q: f64,
    pub norm_sigma: f64,
}

/// Relation and gauge defects on the configured grid and on `(n - 1) / 2`,
/// recovery of `sigma2` from the exact potential difference, and both operator norms.
pub fn run_conductivity(cfg: &ExperimentConfig) -> Result<ConductivityRun> {
    let grid = cfg.grid()?;
    let coarse_n = ((cfg.n_axis - 1) / 2).max(3);
    let coarse = Grid::new(coarse_n)?;
    let pair = &cfg.conductivity;
    let (s1, s2) = (pair.sigma1.build(grid)?, pair.sigma2.build(grid)?);
    let (c1, c2) = (pair.sigma1.build(coarse)?, pair.sigma2.build(coarse)?);
    let relation_defect = dn_relation_defect(&s1)?;
    let relation_defect_coarse = dn_relation_defect(&c1)?;
    let (q1, q2) = (liouville_potential(&s1), liouville_potential(&s2));
    let rec = recover_sigma(&s1, &q2.sub(&q1), &q1)?;
    let partition = cfg.partition()?;
    let norm_cfg = cfg.sampling().norm;
    let norm_q = operator_norm_with(&PartialDnOperator::new(&q1, &q2, partition)?, &norm_cfg)?.norm;
    let norm_sigma = operator_norm_with(&ConductivityDifference::new(&s1, &s2, partition)?, &norm_cfg)?.norm;
    Ok(ConductivityRun {
        n_axis: cfg.n_axis,
        coarse_n_axis: coarse_n,
        relation_defect,
        relation_defect_coarse,
        relation_order: order(relation_defect_coarse, relation_defect, coarse.spacing(), grid.spacing()),
        gauge_defect: gauge_defect(&s1, &s2)?,
        gauge_defect_coarse: gauge_defect(&c1, &c2)?,
        recovery_error: rec.sigma2.interior().sub(s2.interior()).sup_norm(),
        recovery_iterations: rec.report.iterations,
        recovery_converged: rec.report.converged,
        norm_q,
        norm_sigma,
    })
}

/// Worst invariant defect over `count` random admissible `(kappa, tau)`.
pub fn cgo_algebra_check(count: usize, seed: u64, xi: [f64; 3], epsilon: f64, tau0: f64, tau_max: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut made = 0;
    while made < count {
        let dir = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0f64..1.0)];
        let len = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(0.1..=1.0).contains(&len) {
            continue;
        }
        let tau = rng.gen_range(tau0..tau_max);
        let r = rng.gen_range(0.05..2.0 * tau);
        let kappa = FrequencyVector::new(r * dir[0] / len, r * dir[1] / len, r * dir[2] / len);
        if pick_zeta(&kappa, xi, epsilon).is_err() {
            continue;
        }
        worst = worst.max(make_cgo_pair(&kappa, tau, xi, epsilon, tau0)?.invariant_defect());
        made += 1;
    }
    Ok(worst)
}

/// Fast end-to-end checks on a small grid.
pub fn run_selftest(seed: u64) -> Result<Vec<Check>> {
    let mut cfg = ExperimentConfig::with_seed(seed);
    cfg.n_axis = 9;
    cfg.taus = vec![2.0, 3.0];
    cfg.kappas = vec![[0.0, 0.5, 0.2]];
    cfg.phantom = PotentialSpec::single_bump([0.1, 0.0, -0.1], 0.4, 3.0);
    let mut checks = Vec::new();
    checks.push(Check::at_most(
        "cgo_algebra_defect",
        cgo_algebra_check(1000, seed, cfg.xi, cfg.epsilon, cfg.tau0, cfg.tau_max)?,
        1e-10,
    ));
    let (e1, e2) = (manufactured_error(&ScalarField::zeros(Grid::new(7)?))?, manufactured_error(&ScalarField::zeros(Grid::new(15)?))?);
    checks.push(Check::at_least("manufactured_order", (e1 / e2).log2(), 1.8));
    checks.push(Check::at_most("zero_control", zero_control(&cfg)?, 1e-8));
    cfg.noise = 1e-4;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_probe_csv(&mut a, &run_probe(&cfg)?.rows)?;
    write_probe_csv(&mut b, &run_probe(&cfg)?.rows)?;
    checks.push(Check::at_most("probe_rerun_mismatch", (a != b) as u8 as f64, 0.0));
    let grid = cfg.grid()?;
    let s1 = cfg.conductivity.sigma1.build(grid)?;
    let rec = recover_sigma(&s1, &ScalarField::zeros(grid), &liouville_potential(&s1))?;
    checks.push(Check::at_most(
        "sigma_zero_difference",
        rec.sigma2.interior().sub(s1.interior()).sup_norm(),
        0.0,
    ));
    Ok(checks)
}

fn csv_out<W: Write>(out: W) -> Result<csv::Writer<W>> {
    let mut out = out;
    writeln!(out, "{}", csv_version_line())?;
    Ok(csv::Writer::from_writer(out))
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv_out(out)?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_checks_csv(out: impl Write, checks: &[Check]) -> Result<()> {
    write_rows(out, checks)
}

pub fn write_probe_csv(out: impl Write, rows: &[ProbeRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn write_conductivity_csv(out: impl Write, run: &ConductivityRun) -> Result<()> {
    write_rows(out, std::slice::from_ref(run))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Probe,
    Reconstruct,
    Sweep,
    Conductivity,
    Selftest,
}

/// Files written by a command, and whether its checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn json_file(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Runs `cmd` and writes its artifacts into `out`.
pub fn execute(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let at = |name: &str| out.join(name);
    let (passed, files, summary) = match cmd {
        Command::Forward => {
            let checks = run_forward(cfg)?;
            let path = at("forward_checks.csv");
            csv_file(&path, |b| write_checks_csv(b, &checks))?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            (failed.is_empty(), vec![path], format!("{} checks, failed: {failed:?}", checks.len()))
        }
        Command::Probe => {
            let run = run_probe(cfg)?;
            let (csv, json) = (at("probe_estimates.csv"), at("probe_fits.json"));
            csv_file(&csv, |b| write_probe_csv(b, &run.rows))?;
            json_file(&json, &serde_json::json!({ "dn_norm": run.dn_norm, "fits": run.fits }))?;
            let summary = format!("{} estimates, dn_norm {:.4e}", run.rows.len(), run.dn_norm);
            (true, vec![csv, json], summary)
        }
        Command::Reconstruct => {
            let run = run_reconstruct(cfg)?;
            let (json, dump) = (at("reconstruction.json"), at("q_rec.bin"));
            json_file(&json, &run.report)?;
            let mut buf = Vec::new();
            write_field_dump(&mut buf, "q_rec", &run.q_rec)?;
            fs::write(&dump, buf)?;
            let summary = format!(
                "tau {:.3}, r {:.3}, relative L2 error {:.4}",
                run.report.tau,
                run.report.r,
                run.report.relative_l2_error.unwrap_or(f64::NAN)
            );
            (true, vec![json, dump], summary)
        }
        Command::Sweep => {
            let sweep = run_sweep(cfg)?;
            let (csv, json) = (at("stability.csv"), at("stability_fit.json"));
            csv_file(&csv, |b| write_stability_csv(b, &sweep.records))?;
            json_file(
                &json,
                &serde_json::json!({
                    "fit": sweep.fit,
                    "norms_decreasing": sweep.norms_decreasing,
                    "errors_monotone": sweep.errors_monotone,
                    "bound_dominates": sweep.bound_dominates,
                    "reports": sweep.reports,
                }),
            )?;
            let passed = sweep.bound_dominates;
            let summary = format!("{} records, c = {:.4e}, c~ = {:.4e}", sweep.records.len(), sweep.fit.c, sweep.fit.c_tilde);
            (passed, vec![csv, json], summary)
        }
        Command::Conductivity => {
            let run = run_conductivity(cfg)?;
            let path = at("conductivity.csv");
            csv_file(&path, |b| write_conductivity_csv(b, &run))?;
            let summary = format!(
                "relation defect {:.3e} (order {:.2}), recovery error {:.3e}",
                run.relation_defect, run.relation_order, run.recovery_error
            );
            (run.recovery_converged, vec![path], summary)
        }
        Command::Selftest => {
            let checks = run_selftest(cfg.seed)?;
            let path = at("selftest.csv");
            csv_file(&path, |b| write_checks_csv(b, &checks))?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            (failed.is_empty(), vec![path], format!("{} checks, failed: {failed:?}", checks.len()))
        }
    };
    Ok(Outcome { passed, files, summary })
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}
