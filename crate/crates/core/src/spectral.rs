//! FFT-backed kernels: type-I discrete sine transforms on interior grids and
//! faces, the fast Dirichlet Laplacian inverse, and the zero-padded Fourier
//! lattice used for volume Sobolev norms and low-pass synthesis.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// DST-I of length `n`, evaluated through a complex FFT of length `2(n+1)`.
///
/// `X_k = sum_{j=1..n} x_j sin(pi j k / (n+1))`, unnormalized; applying it twice
/// multiplies by `(n+1)/2`.
#[derive(Clone)]
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("n", &self.n).finish()
    }
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Transform `count` lines of a buffer; line `l` has its `j`-th entry at
    /// `offset(l) + j * stride`.
    fn lines(&self, data: &mut [Complex64], count: usize, stride: usize, offset: impl Fn(usize) -> usize) {
        let n = self.n;
        let m = 2 * (n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); m * count];
        for l in 0..count {
            let base = offset(l);
            let line = &mut buf[l * m..(l + 1) * m];
            for j in 0..n {
                let v = data[base + j * stride];
                line[j + 1] = v;
                line[m - 1 - j] = -v;
            }
        }
        self.fft.process(&mut buf);
        let half_i = Complex64::new(0.0, 0.5);
        for l in 0..count {
            let base = offset(l);
            let line = &buf[l * m..(l + 1) * m];
            for k in 0..n {
                data[base + k * stride] = line[k + 1] * half_i;
            }
        }
    }

    /// Unnormalized DST-I along every axis of an `n x n x n` array (x fastest).
    pub fn forward_3d(&self, data: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n * n);
        self.lines(data, n * n, 1, |l| l * n);
        self.lines(data, n * n, n, |l| (l / n) * n * n + l % n);
        self.lines(data, n * n, n * n, |l| l);
    }

    /// Unnormalized DST-I along both axes of an `n x n` array (first index fastest).
    pub fn forward_2d(&self, data: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        self.lines(data, n, 1, |l| l * n);
        self.lines(data, n, n, |l| l);
    }
}

/// Eigenvalue of the 1-D second-difference operator `-D_h^2` for sine mode `a >= 1`.
pub fn laplacian_eigenvalue_1d(a: usize, n: usize, h: f64) -> f64 {
    let s = (PI * a as f64 / (2.0 * (n + 1) as f64)).sin();
    4.0 * s * s / (h * h)
}

/// Fast inverse of `-Delta_h + shift` with homogeneous Dirichlet data on the
/// `n^3` interior grid.
#[derive(Debug, Clone)]
pub struct FastPoisson {
    n: usize,
    dst: SineTransform,
    inv_eigs: Vec<f64>,
}

impl FastPoisson {
    pub fn new(n: usize, h: f64, shift: f64) -> Self {
        let lam: Vec<f64> = (1..=n).map(|a| laplacian_eigenvalue_1d(a, n, h)).collect();
        let norm = (2.0 / (n + 1) as f64).powi(3);
        let mut inv_eigs = vec![0.0; n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let e = lam[i] + lam[j] + lam[k] + shift;
                    inv_eigs[i + n * (j + n * k)] = if e.abs() > 0.0 { norm / e } else { 0.0 };
                }
            }
        }
        Self {
            n,
            dst: SineTransform::new(n),
            inv_eigs,
        }
    }

    pub fn apply_inplace(&self, data: &mut [Complex64]) {
        self.dst.forward_3d(data);
        for (v, &w) in data.iter_mut().zip(&self.inv_eigs) {
            *v *= w;
        }
        self.dst.forward_3d(data);
    }

    pub fn apply_real(&self, rhs: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex64> = rhs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.apply_inplace(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Zero-padded periodic Fourier lattice of side `L = 2(n+1) h = 4`.
///
/// Interior node `i` sits at padded index `i`; the lattice origin is the first
/// interior node, so transforms carry the phase `exp(-i kappa . origin)`.
#[derive(Clone)]
pub struct FourierLattice {
    n: usize,
    size: usize,
    spacing: f64,
    origin: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierLattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierLattice")
            .field("n", &self.n)
            .field("size", &self.size)
            .finish()
    }
}

impl FourierLattice {
    pub fn new(n: usize, h: f64) -> Self {
        let size = 2 * (n + 1);
        let mut planner = FftPlanner::new();
        Self {
            n,
            size,
            spacing: h,
            origin: -1.0 + h,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Period of the lattice box.
    pub fn period(&self) -> f64 {
        self.size as f64 * self.spacing
    }

    /// Angular frequency of FFT bin `m` along one axis.
    pub fn frequency(&self, m: usize) -> f64 {
        let k = if m <= self.size / 2 {
            m as f64
        } else {
            m as f64 - self.size as f64
        };
        2.0 * PI * k / self.period()
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let s = self.size;
        [
            self.frequency(idx % s),
            self.frequency((idx / s) % s),
            self.frequency(idx / (s * s)),
        ]
    }

    fn fft3(&self, data: &mut [Complex64], inverse: bool) {
        let s = self.size;
        let plan = if inverse { &self.inv } else { &self.fwd };
        // x lines are contiguous.
        plan.process(data);
        let mut buf = vec![Complex64::new(0.0, 0.0); s * s];
        // y lines
        for k in 0..s {
            for i in 0..s {
                for j in 0..s {
                    buf[i * s + j] = data[i + s * (j + s * k)];
                }
            }
            plan.process(&mut buf);
            for i in 0..s {
                for j in 0..s {
                    data[i + s * (j + s * k)] = buf[i * s + j];
                }
            }
        }
        // z lines
        for j in 0..s {
            for i in 0..s {
                for k in 0..s {
                    buf[i * s + k] = data[i + s * (j + s * k)];
                }
            }
            plan.process(&mut buf);
            for i in 0..s {
                for k in 0..s {
                    data[i + s * (j + s * k)] = buf[i * s + k];
                }
            }
        }
    }

    /// Continuous Fourier transform `int q(x) exp(-i kappa.x) dx` sampled on the
    /// lattice, from already-weighted interior samples `weighted[i] = w_i q_i`.
    pub fn transform(&self, weighted: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let s = self.size;
        let mut data = vec![Complex64::new(0.0, 0.0); s * s * s];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    data[i + s * (j + s * k)] = weighted[i + n * (j + n * k)];
                }
            }
        }
        self.fft3(&mut data, false);
        for (idx, v) in data.iter_mut().enumerate() {
            let kv = self.wavevector(idx);
            let phase = -(kv[0] + kv[1] + kv[2]) * self.origin;
            *v *= Complex64::from_polar(1.0, phase);
        }
        data
    }

    /// Inverse transform `(2 pi)^-3 int F(kappa) exp(i kappa.x) dkappa` by lattice
    /// summation, returned at the interior nodes.
    pub fn synthesize(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let s = self.size;
        let data = self.synthesize_padded(spectrum);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    out[i + n * (j + n * k)] = data[i + s * (j + s * k)];
                }
            }
        }
        out
    }

    /// Same synthesis on the whole padded lattice; node `(i, j, k)` sits at
    /// `origin + h (i, j, k)` and interior nodes have all indices below `n`.
    pub fn synthesize_padded(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let kv = self.wavevector(idx);
                v * Complex64::from_polar(1.0, (kv[0] + kv[1] + kv[2]) * self.origin)
            })
            .collect();
        self.fft3(&mut data, true);
        let scale = 1.0 / self.period().powi(3);
        for v in data.iter_mut() {
            *v *= scale;
        }
        data
    }
}
