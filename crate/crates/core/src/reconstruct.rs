//! Parameter selection from the measured operator norm, low-pass
//! reconstruction of `q2 - q1`, and stability sweeps over scaled phantoms.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::DirectionFrame;
use crate::dn::{operator_norm_with, NormConfig, PartialDnOperator};
use crate::error::{Error, Result};
use crate::grid::{fourier_coefficient, lattice_transform, volume_sobolev_norm, FrequencyVector, Grid, ScalarField};
use crate::probe::{alessandrini_estimate, csv_version_line, extend_lowpass, sample_cone, LowpassExtension, ProbeOptions};

/// Space dimension; fixed.
const DIM: f64 = 3.0;

/// `tau^{-1/2} exp(-d tau)`
pub fn upsilon(tau: f64, d: f64) -> f64 {
    tau.powf(-0.5) * (-d * tau).exp()
}

fn ln_upsilon(tau: f64, d: f64) -> f64 {
    -0.5 * tau.ln() - d * tau
}

/// The unique `tau > tau0` with `upsilon(tau) = gamma`.
pub fn tau_star(gamma: f64, d: f64, tau0: f64) -> Result<f64> {
    if !(tau0 >= 1.0) || !(d > 0.0) {
        return Err(Error::InvalidInput(format!("need tau0 >= 1 and d > 0 (tau0 = {tau0}, d = {d})")));
    }
    let gamma0 = upsilon(tau0, d);
    if !(gamma > 0.0 && gamma < gamma0) {
        return Err(Error::OutOfRegime(format!(
            "|Lambda| = {gamma:.4e} not in (0, gamma0 = {gamma0:.4e})"
        )));
    }
    let target = gamma.ln();
    let mut lo = tau0;
    let mut hi = tau0 + 1.0;
    let mut prev = ln_upsilon(lo, d);
    while ln_upsilon(hi, d) > target {
        let next = ln_upsilon(hi, d);
        if next >= prev {
            return Err(Error::InvalidInput(format!("upsilon is not decreasing at tau = {hi}")));
        }
        prev = next;
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ln_upsilon(mid, d) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = if (ln_upsilon(lo, d) - target).abs() < (ln_upsilon(hi, d) - target).abs() {
        lo
    } else {
        hi
    };
    let lower = gamma.ln().abs() / (2.0 * d);
    if tau <= lower {
        return Err(Error::OutOfRegime(format!("tau* = {tau} violates tau* > |ln gamma| / 2d = {lower}")));
    }
    Ok(tau)
}

/// `(d r)^{2t} exp((n + 2) d r)`
pub fn iota(r: f64, d: f64, t: f64) -> f64 {
    (d * r).powf(2.0 * t) * ((DIM + 2.0) * d * r).exp()
}

fn ln_iota(r: f64, d: f64, t: f64) -> f64 {
    2.0 * t * (d * r).ln() + (DIM + 2.0) * d * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityParams {
    /// Smoothness index.
    pub t: f64,
    /// Bound on `||q||_inf`.
    pub delta: f64,
    /// Bound on `||q2 - q1||_{H^t}`.
    pub m: f64,
    pub d: f64,
    pub tau0: f64,
    pub tau_max: f64,
    pub c_prime: f64,
    pub theta: f64,
}

impl Default for StabilityParams {
    fn default() -> Self {
        Self {
            t: 1.0,
            delta: 5.0,
            m: 1.0,
            d: 3f64.sqrt(),
            tau0: 1.0,
            tau_max: 12.0,
            c_prime: 1.0,
            theta: 0.5,
        }
    }
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t", self.t),
            ("delta", self.delta),
            ("m", self.m),
            ("d", self.d),
            ("tau_max", self.tau_max),
            ("c_prime", self.c_prime),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.tau0 >= 1.0) || self.tau_max < self.tau0 {
            return Err(Error::InvalidInput(format!(
                "need 1 <= tau0 <= tau_max (tau0 = {}, tau_max = {})",
                self.tau0, self.tau_max
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidInput(format!("theta = {} outside (0, 1)", self.theta)));
        }
        Ok(())
    }

    pub fn gamma0(&self) -> f64 {
        upsilon(self.tau0, self.d)
    }

    /// `exp(-(M^2 / ((n + 2) C'))^{1 / (1 + 2t - theta)})`
    pub fn gamma1(&self) -> f64 {
        let base = self.m * self.m / ((DIM + 2.0) * self.c_prime);
        (-base.powf(1.0 / (1.0 + 2.0 * self.t - self.theta))).exp()
    }

    /// `(c, c~)` as produced by the parameter-selection argument.
    pub fn theoretical_constants(&self) -> (f64, f64) {
        let c = 2.0 * self.m * ((2.0 * self.t + DIM + 2.0) / self.theta).powf(self.t);
        let c_tilde = (self.m * self.m / self.c_prime).powf(1.0 / self.theta);
        (c, c_tilde)
    }
}

/// Root of `iota(r) = (M^2 / C') |ln gamma|^theta`, checked against `r < 2 tau*`.
pub fn r_star(gamma: f64, params: &StabilityParams) -> Result<f64> {
    params.validate()?;
    let tau = tau_star(gamma, params.d, params.tau0)?;
    let gamma1 = params.gamma1();
    if gamma >= gamma1 {
        return Err(Error::OutOfRegime(format!(
            "(n+2)|ln gamma|^(1+2t-theta) >= M^2/C' fails: |Lambda| = {gamma:.4e} >= gamma1 = {gamma1:.4e}"
        )));
    }
    let (d, t) = (params.d, params.t);
    let target = (params.m * params.m / params.c_prime).ln() + params.theta * gamma.ln().abs().ln();
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ln_iota(hi, d, t) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ln_iota(mid, d, t) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    if !(r > 0.0 && r < 2.0 * tau) {
        return Err(Error::OutOfRegime(format!("r* = {r} not in (0, 2 tau* = {})", 2.0 * tau)));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RadiusRule {
    /// `r*` from the operator norm, or the fallback radius out of regime.
    Stability,
    Fixed { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub epsilon: f64,
    pub n_dir: usize,
    pub n_rad: usize,
    pub degree: usize,
    pub lambda: f64,
    pub radius: RadiusRule,
    pub fallback_r: f64,
    pub probe: ProbeOptions,
    pub norm: NormConfig,
    /// Largest tolerated fraction of failed estimates.
    pub max_skip_rate: f64,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon = {} outside (0, 1)", self.epsilon)));
        }
        // A degree-2m polynomial can vanish on m spheres.
        if 2 * self.n_rad <= self.degree {
            return Err(Error::InvalidInput(format!(
                "degree {} needs more than {} radial shells, got {}",
                self.degree,
                self.degree / 2,
                self.n_rad
            )));
        }
        if !(self.fallback_r > 0.0) || !(0.0..=1.0).contains(&self.max_skip_rate) {
            return Err(Error::InvalidInput(format!(
                "need fallback_r > 0 and max_skip_rate in [0, 1] (got {}, {})",
                self.fallback_r, self.max_skip_rate
            )));
        }
        if let RadiusRule::Fixed { r } = self.radius {
            if !(r > 0.0) {
                return Err(Error::InvalidInput(format!("fixed radius {r} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.45,
            n_dir: 24,
            n_rad: 3,
            degree: 4,
            lambda: 1e-6,
            radius: RadiusRule::Stability,
            fallback_r: 3.0,
            probe: ProbeOptions::default(),
            norm: NormConfig::default(),
            max_skip_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub dn_norm: f64,
    pub tau_star: Option<f64>,
    pub r_star: Option<f64>,
    pub tau: f64,
    pub r: f64,
    /// `tau*` exceeded `tau_max`.
    pub tau_capped: bool,
    /// Reasons the stability rule was not applied.
    pub fallbacks: Vec<String>,
    pub samples: usize,
    pub skipped: usize,
    pub extension_condition: f64,
    pub extension_residual: f64,
    pub l2_error: Option<f64>,
    pub hm1_error: Option<f64>,
    pub relative_l2_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub q_rec: ScalarField,
    pub extension: LowpassExtension,
    pub report: ReconstructionReport,
}

/// Real part of the lattice synthesis of `spectrum` restricted to `|k| <= r`.
pub fn lowpass_synthesis(grid: Grid, r: f64, spectrum: impl Fn(&FrequencyVector) -> Complex64) -> ScalarField {
    let lattice = grid.lattice();
    let s = lattice.size();
    let values: Vec<Complex64> = (0..s * s * s)
        .map(|idx| {
            let k = FrequencyVector(lattice.wavevector(idx));
            if k.norm() <= r {
                spectrum(&k)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let out = lattice.synthesize(&values);
    ScalarField::from_values(grid, out.into_iter().map(|v| v.re).collect()).expect("synthesis matches grid")
}

fn truncated_spectrum(q: &ScalarField, r: f64) -> (crate::spectral::FourierLattice, Vec<Complex64>) {
    let lattice = q.grid().lattice();
    let mut spectrum = lattice_transform(q, &lattice);
    for (idx, v) in spectrum.iter_mut().enumerate() {
        if FrequencyVector(lattice.wavevector(idx)).norm() > r {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    (lattice, spectrum)
}

/// Projection of `q` onto lattice frequencies with `|k| <= r`.
pub fn truncate_fourier(q: &ScalarField, r: f64) -> ScalarField {
    let (lattice, spectrum) = truncated_spectrum(q, r);
    let values = lattice.synthesize(&spectrum).into_iter().map(|v| v.re).collect();
    ScalarField::from_values(*q.grid(), values).expect("synthesis matches grid")
}

/// `L2` norm of the low-pass projection of `q` outside the cube, on the padded lattice.
pub fn lowpass_leakage(q: &ScalarField, r: f64) -> f64 {
    let n = q.grid().n_axis();
    let h = q.grid().spacing();
    let (lattice, spectrum) = truncated_spectrum(q, r);
    let s = lattice.size();
    let full = lattice.synthesize_padded(&spectrum);
    let sq: f64 = full
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx % s >= n || (idx / s) % s >= n || idx / (s * s) >= n)
        .map(|(_, v)| v.re * v.re)
        .sum();
    (sq * h.powi(3)).sqrt()
}

/// Error norms of `q_rec` against `truth`: `(L2, H^-1, relative L2)`.
pub fn reconstruction_errors(q_rec: &ScalarField, truth: &ScalarField) -> Result<(f64, f64, f64)> {
    let diff = q_rec.sub(truth);
    let l2 = diff.l2_norm();
    let hm1 = volume_sobolev_norm(&diff, -1.0)?;
    let norm = truth.l2_norm();
    Ok((l2, hm1, if norm > 0.0 { l2 / norm } else { l2 }))
}

struct Selection {
    tau_star: Option<f64>,
    r_star: Option<f64>,
    tau: f64,
    r: f64,
    tau_capped: bool,
    fallbacks: Vec<String>,
}

fn select_parameters(gamma: f64, params: &StabilityParams, cfg: &SamplingConfig) -> Selection {
    let mut fallbacks = Vec::new();
    let ts = match tau_star(gamma, params.d, params.tau0) {
        Ok(t) => Some(t),
        Err(e) => {
            fallbacks.push(format!("tau: {e}"));
            None
        }
    };
    let rs = match ts.map(|_| r_star(gamma, params)) {
        Some(Ok(r)) => Some(r),
        Some(Err(e)) => {
            fallbacks.push(format!("r: {e}"));
            None
        }
        None => None,
    };
    let tau = ts.unwrap_or(params.tau_max).min(params.tau_max);
    let tau_capped = ts.is_some_and(|t| t > params.tau_max);
    let r = match cfg.radius {
        RadiusRule::Fixed { r } => r,
        RadiusRule::Stability => rs.unwrap_or(cfg.fallback_r),
    };
    Selection {
        tau_star: ts,
        r_star: rs,
        tau,
        r,
        tau_capped,
        fallbacks,
    }
}

/// Cone samples of the low-pass ball of radius `r` (kept strictly below `2 tau`).
fn cone_kappas(xi: [f64; 3], r: f64, tau: f64, cfg: &SamplingConfig) -> Result<Vec<FrequencyVector>> {
    if !(r < 2.0 * tau) {
        return Err(Error::OutOfRegime(format!("radius {r} not below 2 tau = {}", 2.0 * tau)));
    }
    Ok(sample_cone(cfg.epsilon, r, cfg.n_dir, cfg.n_rad, DirectionFrame::new(xi)?)?.kappas)
}

fn finish(
    grid: Grid,
    samples: Vec<(FrequencyVector, Complex64)>,
    total: usize,
    r: f64,
    cfg: &SamplingConfig,
    truth: Option<&ScalarField>,
    mut report: ReconstructionReport,
) -> Result<Reconstruction> {
    let skipped = total - samples.len();
    if skipped as f64 > cfg.max_skip_rate * total as f64 {
        return Err(Error::TooManyFailures { failed: skipped, total });
    }
    let extension = extend_lowpass(&samples, r, cfg.degree, cfg.lambda)?;
    let q_rec = lowpass_synthesis(grid, r, |k| extension.eval(k));
    report.samples = samples.len();
    report.skipped = skipped;
    report.extension_condition = extension.condition;
    report.extension_residual = extension.fit_residual;
    if let Some(truth) = truth {
        let (l2, hm1, rel) = reconstruction_errors(&q_rec, truth)?;
        report.l2_error = Some(l2);
        report.hm1_error = Some(hm1);
        report.relative_l2_error = Some(rel);
    }
    Ok(Reconstruction {
        q_rec,
        extension,
        report,
    })
}

fn empty_report(dn_norm: f64, sel: Selection) -> ReconstructionReport {
    ReconstructionReport {
        dn_norm,
        tau_star: sel.tau_star,
        r_star: sel.r_star,
        tau: sel.tau,
        r: sel.r,
        tau_capped: sel.tau_capped,
        fallbacks: sel.fallbacks,
        samples: 0,
        skipped: 0,
        extension_condition: 0.0,
        extension_residual: 0.0,
        l2_error: None,
        hm1_error: None,
        relative_l2_error: None,
    }
}

/// Low-pass reconstruction of `q2 - q1` from the partial difference map.
pub fn reconstruct(
    op: &PartialDnOperator,
    params: &StabilityParams,
    cfg: &SamplingConfig,
    truth: Option<&ScalarField>,
) -> Result<Reconstruction> {
    params.validate()?;
    cfg.validate()?;
    let grid = *op.grid();
    let norm = operator_norm_with(op, &cfg.norm)?.norm;
    let sel = select_parameters(norm, params, cfg);
    let (tau, r) = (sel.tau, sel.r);
    let kappas = cone_kappas(op.partition().xi, r, tau, cfg)?;
    if op.potential_difference().iter().all(|&v| v == 0.0) {
        let samples = kappas.iter().map(|k| (*k, Complex64::new(0.0, 0.0))).collect();
        return finish(grid, samples, kappas.len(), r, cfg, truth, empty_report(norm, sel));
    }
    let results: Vec<Option<(FrequencyVector, Complex64)>> = kappas
        .par_iter()
        .enumerate()
        .map(|(i, k)| {
            let opts = ProbeOptions {
                seed: cfg.probe.seed.wrapping_add(i as u64),
                ..cfg.probe
            };
            alessandrini_estimate(op, k, tau, cfg.epsilon, &opts).ok().map(|e| (*k, e.value))
        })
        .collect();
    let samples: Vec<_> = results.into_iter().flatten().collect();
    finish(grid, samples, kappas.len(), r, cfg, truth, empty_report(norm, sel))
}

/// The same pipeline fed with exact transforms of `qdiff` at the cone samples,
/// for a given operator norm (parameter selection only).
pub fn reconstruct_exact(
    qdiff: &ScalarField,
    xi: [f64; 3],
    dn_norm: f64,
    params: &StabilityParams,
    cfg: &SamplingConfig,
) -> Result<Reconstruction> {
    params.validate()?;
    cfg.validate()?;
    let grid = *qdiff.grid();
    let sel = select_parameters(dn_norm, params, cfg);
    let (tau, r) = (sel.tau, sel.r);
    let kappas = cone_kappas(xi, r, tau, cfg)?;
    let samples: Vec<_> = kappas.iter().map(|k| (*k, fourier_coefficient(qdiff, k))).collect();
    finish(grid, samples, kappas.len(), r, cfg, Some(qdiff), empty_report(dn_norm, sel))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub scale: f64,
    pub dn_norm: f64,
    pub l2_err: f64,
    pub hm1_err: f64,
    pub tau_star: f64,
    pub r_star: f64,
    /// Fitted bound at this record's operator norm.
    pub bound_fit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityFit {
    pub c: f64,
    pub c_tilde: f64,
    pub t: f64,
    /// Coefficient of determination of log error against log bound.
    pub r_squared: f64,
}

impl StabilityFit {
    /// `c (gamma + |ln(c~ |ln gamma|)|^{-t})`
    pub fn bound(&self, gamma: f64) -> f64 {
        self.c * stability_shape(gamma, self.c_tilde, self.t)
    }
}

fn stability_shape(gamma: f64, c_tilde: f64, t: f64) -> f64 {
    if gamma <= 0.0 {
        return 0.0;
    }
    gamma + (c_tilde * gamma.ln().abs()).ln().abs().powf(-t)
}

/// Smallest dominating `c` for each candidate `c~`, keeping the `c~` whose
/// bound tracks the errors best in log space.
pub fn fit_stability(points: &[(f64, f64)], t: f64) -> Result<StabilityFit> {
    let pts: Vec<(f64, f64)> = points.iter().cloned().filter(|&(g, e)| g > 0.0 && e > 0.0).collect();
    if pts.len() < 2 {
        return Err(Error::InvalidInput(format!("need two records with positive norm and error, got {}", pts.len())));
    }
    let mut best: Option<(f64, StabilityFit)> = None;
    for i in 0..=600 {
        let c_tilde = 10f64.powf(-3.0 + i as f64 * 0.01);
        let shapes: Vec<f64> = pts.iter().map(|&(g, _)| stability_shape(g, c_tilde, t)).collect();
        if shapes.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            continue;
        }
        let c = pts.iter().zip(&shapes).map(|(&(_, e), s)| e / s).fold(0.0f64, f64::max);
        let logs: Vec<(f64, f64)> = pts.iter().zip(&shapes).map(|(&(_, e), s)| (e.ln(), (c * s).ln())).collect();
        let mean = logs.iter().map(|l| l.0).sum::<f64>() / logs.len() as f64;
        let ss_res: f64 = logs.iter().map(|(y, f)| (y - f).powi(2)).sum();
        let ss_tot: f64 = logs.iter().map(|(y, _)| (y - mean).powi(2)).sum();
        let fit = StabilityFit {
            c,
            c_tilde,
            t,
            r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 },
        };
        if best.as_ref().is_none_or(|(s, _)| ss_res < *s) {
            best = Some((ss_res, fit));
        }
    }
    best.map(|(_, f)| f)
        .ok_or_else(|| Error::InvalidInput("no admissible c~ in [1e-3, 1e3]".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySweep {
    pub records: Vec<StabilityRecord>,
    pub fit: StabilityFit,
    pub reports: Vec<ReconstructionReport>,
    /// `||Lambda||` strictly decreasing along the positive scales.
    pub norms_decreasing: bool,
    /// Both error norms non-increasing within 10% along the scales.
    pub errors_monotone: bool,
    pub bound_dominates: bool,
}

/// One reconstruction per scale `s` of `q2 = q1 + s * phantom`.
pub fn stability_sweep(
    q1: &ScalarField,
    phantom: &ScalarField,
    scales: &[f64],
    xi: [f64; 3],
    params: &StabilityParams,
    cfg: &SamplingConfig,
) -> Result<StabilitySweep> {
    if scales.windows(2).any(|w| !(w[1] < w[0])) || scales.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidInput(format!("scales must be non-negative and strictly decreasing: {scales:?}")));
    }
    let partition = crate::boundary::face_partition(xi, cfg.epsilon)?;
    let mut records = Vec::with_capacity(scales.len());
    let mut reports = Vec::with_capacity(scales.len());
    for &s in scales {
        let diff = phantom.scale(s);
        let q2 = q1.add(&diff);
        let op = PartialDnOperator::new(q1, &q2, partition)?;
        let rec = reconstruct(&op, params, cfg, Some(&diff))?;
        let rep = rec.report;
        records.push(StabilityRecord {
            scale: s,
            dn_norm: rep.dn_norm,
            l2_err: rep.l2_error.unwrap_or(0.0),
            hm1_err: rep.hm1_error.unwrap_or(0.0),
            tau_star: rep.tau_star.unwrap_or(rep.tau),
            r_star: rep.r_star.unwrap_or(rep.r),
            bound_fit: 0.0,
        });
        reports.push(rep);
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.dn_norm, r.l2_err.max(r.hm1_err))).collect();
    let fit = fit_stability(&points, params.t)?;
    for r in records.iter_mut() {
        r.bound_fit = fit.bound(r.dn_norm);
    }
    let positive: Vec<&StabilityRecord> = records.iter().filter(|r| r.scale > 0.0).collect();
    let norms_decreasing = positive.windows(2).all(|w| w[1].dn_norm < w[0].dn_norm);
    let errors_monotone = records
        .windows(2)
        .all(|w| w[1].l2_err <= 1.1 * w[0].l2_err && w[1].hm1_err <= 1.1 * w[0].hm1_err);
    let bound_dominates = records
        .iter()
        .all(|r| r.bound_fit >= r.l2_err * (1.0 - 1e-12) && r.bound_fit >= r.hm1_err * (1.0 - 1e-12));
    Ok(StabilitySweep {
        records,
        fit,
        reports,
        norms_decreasing,
        errors_monotone,
        bound_dominates,
    })
}

pub fn write_stability_csv(out: &mut impl Write, records: &[StabilityRecord]) -> Result<()> {
    writeln!(out, "{}", csv_version_line())?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::face_partition;
    use crate::grid::PotentialSpec;
    use approx::assert_relative_eq;

    const D: f64 = 1.7320508075688772;

    fn bump(n: usize, amp: f64) -> ScalarField {
        PotentialSpec::single_bump([0.0, 0.0, 0.0], 0.4, amp)
            .build(Grid::new(n).unwrap(), 5.0)
            .unwrap()
    }

    #[test]
    fn tau_star_inverts_upsilon() {
        assert_relative_eq!(tau_star(upsilon(2.0, D), D, 1.0).unwrap(), 2.0, epsilon = 1e-10);
        let t = tau_star(1e-6, D, 1.0).unwrap();
        assert!(t > 1e-6f64.ln().abs() / (2.0 * D));
        assert!(t > 3.988);
        let g0 = upsilon(1.0, D);
        assert!(matches!(tau_star(2.0 * g0, D, 1.0), Err(Error::OutOfRegime(_))));
        assert!(matches!(tau_star(0.0, D, 1.0), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn tau_star_on_ten_decades() {
        let g0 = upsilon(1.0, D);
        for i in 1..=100 {
            let gamma = g0 * 10f64.powf(-0.1 * i as f64);
            let t = tau_star(gamma, D, 1.0).unwrap();
            assert!(((upsilon(t, D) - gamma) / gamma).abs() <= 1e-12, "gamma {gamma:e}");
            assert!(t > gamma.ln().abs() / (2.0 * D));
        }
    }

    #[test]
    fn r_star_recovers_known_root_and_is_monotone() {
        let gamma: f64 = 1e-10;
        let base = StabilityParams::default();
        let target = iota(1.0, D, base.t) * gamma.ln().abs().powf(-base.theta);
        let params = StabilityParams {
            m: 1.0,
            c_prime: 1.0 / target,
            ..base
        };
        assert_relative_eq!(r_star(gamma, &params).unwrap(), 1.0, epsilon = 1e-10);
        let mut prev = 0.0;
        for k in 3..12 {
            let r = r_star(10f64.powi(-k), &base).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn r_star_reports_violated_regime() {
        let params = StabilityParams {
            c_prime: 1e-12,
            ..Default::default()
        };
        match r_star(1e-3, &params) {
            Err(Error::OutOfRegime(msg)) => assert!(msg.contains("gamma1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn params_validation() {
        assert!(StabilityParams::default().validate().is_ok());
        let bad = StabilityParams {
            theta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg = SamplingConfig {
            degree: 6,
            n_rad: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exact_samples_reproduce_truncation() {
        let q = bump(15, 1.0);
        let r = 3.0;
        let direct = lowpass_synthesis(*q.grid(), r, |k| fourier_coefficient(&q, k));
        let trunc = truncate_fourier(&q, r);
        assert!(direct.sub(&trunc).l2_norm() <= 1e-10 * trunc.l2_norm());
        let cfg = SamplingConfig {
            radius: RadiusRule::Fixed { r },
            ..Default::default()
        };
        let rec = reconstruct_exact(&q, [1.0, 0.0, 0.0], 1e-3, &StabilityParams::default(), &cfg).unwrap();
        assert!(rec.q_rec.sub(&trunc).l2_norm() <= 0.01 * trunc.l2_norm());
    }

    #[test]
    fn truncation_defect_is_bounded_by_leakage() {
        for n in [15, 31] {
            let q = bump(n, 1.0);
            for r in [3.0, 8.0, 12.0] {
                let p = truncate_fourier(&q, r);
                let defect = truncate_fourier(&p, r).sub(&p).l2_norm();
                let leak = lowpass_leakage(&q, r);
                assert!(defect <= 1.1 * leak, "n {n} r {r}: {defect} > {leak}");
            }
            let p = truncate_fourier(&q, 12.0);
            assert!(truncate_fourier(&p, 12.0).sub(&p).l2_norm() < 5e-3 * p.l2_norm());
        }
    }

    #[test]
    fn identical_potentials_reconstruct_zero() {
        let q = bump(11, 2.0);
        let op = PartialDnOperator::new(&q, &q, face_partition([1.0, 0.0, 0.0], 0.45).unwrap()).unwrap();
        let cfg = SamplingConfig {
            radius: RadiusRule::Fixed { r: 3.0 },
            ..Default::default()
        };
        let rec = reconstruct(&op, &StabilityParams::default(), &cfg, None).unwrap();
        assert!(rec.q_rec.sup_norm() <= 1e-6);
        assert!(!rec.report.fallbacks.is_empty());
    }

    #[test]
    fn reconstruction_is_nearly_linear_in_the_phantom() {
        let g = Grid::new(11).unwrap();
        let q1 = ScalarField::zeros(g);
        let part = face_partition([1.0, 0.0, 0.0], 0.45).unwrap();
        let cfg = SamplingConfig {
            radius: RadiusRule::Fixed { r: 3.0 },
            ..Default::default()
        };
        let params = StabilityParams::default();
        let run = |amp: f64| {
            let op = PartialDnOperator::new(&q1, &bump(11, amp), part).unwrap();
            reconstruct(&op, &params, &cfg, None).unwrap().q_rec
        };
        let small = run(0.25);
        let large = run(0.5);
        let rel = large.sub(&small.scale(2.0)).l2_norm() / large.l2_norm();
        assert!(rel < 0.05, "{rel}");
    }

    #[test]
    fn fit_dominates_synthetic_errors() {
        let pts: Vec<(f64, f64)> = [1e-2, 3e-3, 1e-3, 3e-4].iter().map(|&g| (g, 0.5 * g + 0.02)).collect();
        let fit = fit_stability(&pts, 1.0).unwrap();
        assert!(fit.c > 0.0 && fit.c_tilde > 0.0);
        for &(g, e) in &pts {
            assert!(fit.bound(g) >= e * (1.0 - 1e-12));
        }
    }

    #[test]
    fn small_sweep_properties() {
        let g = Grid::new(11).unwrap();
        let q1 = ScalarField::zeros(g);
        let phantom = bump(11, 1.0);
        let cfg = SamplingConfig {
            radius: RadiusRule::Fixed { r: 3.0 },
            ..Default::default()
        };
        let sweep = stability_sweep(&q1, &phantom, &[0.4, 0.2, 0.1, 0.0], [1.0, 0.0, 0.0], &StabilityParams::default(), &cfg).unwrap();
        assert_eq!(sweep.records.len(), 4);
        assert!(sweep.norms_decreasing);
        assert!(sweep.errors_monotone);
        assert!(sweep.bound_dominates);
        let zero = sweep.records.last().unwrap();
        assert!(zero.dn_norm <= 1e-8 && zero.l2_err <= 1e-6);
        for r in &sweep.records {
            assert!(r.hm1_err <= r.l2_err);
        }
        let mut buf = Vec::new();
        write_stability_csv(&mut buf, &sweep.records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# calderon-lab"));
        assert_eq!(lines.next().unwrap(), "scale,dn_norm,l2_err,hm1_err,tau_star,r_star,bound_fit");
    }

    #[test]
    fn sweep_rejects_unsorted_scales() {
        let g = Grid::new(7).unwrap();
        let q = ScalarField::zeros(g);
        let r = stability_sweep(&q, &q, &[0.1, 0.2], [1.0, 0.0, 0.0], &StabilityParams::default(), &SamplingConfig::default());
        assert!(r.is_err());
    }
}
