//! Matrix-free Krylov solvers: preconditioned conjugate gradients for
//! Hermitian positive-definite systems and restarted right-preconditioned GMRES.

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            restart: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Returned when CG meets a direction of non-positive curvature.
#[derive(Debug, Clone)]
pub struct IndefiniteBreakdown {
    pub iterations: usize,
}

/// Preconditioned CG. `Ok(Err(_))` signals an indefinite operator so callers can
/// switch to GMRES.
pub fn pcg<T: Scalar>(
    apply: impl Fn(&[T], &mut [T]),
    precond: impl Fn(&[T], &mut [T]),
    b: &[T],
    cfg: &KrylovConfig,
) -> Result<std::result::Result<KrylovOutcome<T>, IndefiniteBreakdown>> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![T::zero(); n];
    if bnorm == 0.0 {
        return Ok(Ok(KrylovOutcome {
            solution: x,
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
        }));
    }
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    for it in 1..=cfg.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap.re() <= 0.0 {
            return Ok(Err(IndefiniteBreakdown { iterations: it }));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= cfg.tol {
            return Ok(Ok(KrylovOutcome {
                solution: x,
                iterations: it,
                residual: rel,
                history,
            }));
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        if rz_new.re() <= 0.0 && rz_new.abs() > 0.0 {
            return Ok(Err(IndefiniteBreakdown { iterations: it }));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(Error::NonConvergence {
        method: "conjugate gradients",
        iterations: cfg.max_iter,
        residual,
        history,
        hint: String::new(),
    })
}

fn givens<T: Scalar>(a: T, b: T) -> (f64, T, T) {
    let aa = a.abs();
    let bb = b.abs();
    if bb == 0.0 {
        return (1.0, T::zero(), a);
    }
    if aa == 0.0 {
        let s = b.conj() * (1.0 / bb);
        return (0.0, s, T::from_real(bb));
    }
    let r = (aa * aa + bb * bb).sqrt();
    let phase = a * (1.0 / aa);
    let c = aa / r;
    let s = phase * b.conj() * (1.0 / r);
    (c, s, phase * r)
}

/// Restarted GMRES with right preconditioning `A M y = b`, `x = M y`.
pub fn gmres<T: Scalar>(
    apply: impl Fn(&[T], &mut [T]),
    precond: impl Fn(&[T], &mut [T]),
    b: &[T],
    x0: Option<&[T]>,
    cfg: &KrylovConfig,
) -> Result<KrylovOutcome<T>> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); n]);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            solution: vec![T::zero(); n],
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
        });
    }
    let m = cfg.restart.max(1);
    let mut history = Vec::new();
    let mut total = 0usize;
    let mut tmp = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    loop {
        // r = b - A x
        apply(&x, &mut tmp);
        let r: Vec<T> = b.iter().zip(&tmp).map(|(&bi, &ai)| bi - ai).collect();
        let beta = norm2(&r);
        let rel0 = beta / bnorm;
        if history.is_empty() {
            history.push(rel0);
        }
        if rel0 <= cfg.tol {
            return Ok(KrylovOutcome {
                solution: x,
                iterations: total,
                residual: rel0,
                history,
            });
        }
        if total >= cfg.max_iter {
            return Err(Error::NonConvergence {
                method: "GMRES",
                iterations: total,
                residual: rel0,
                history,
                hint: String::new(),
            });
        }
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v * (1.0 / beta)).collect());
        let mut hess: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, T)> = Vec::with_capacity(m);
        let mut g = vec![T::zero(); m + 1];
        g[0] = T::from_real(beta);
        let mut inner = 0;
        let mut converged = false;
        while inner < m && total < cfg.max_iter {
            precond(&basis[inner], &mut tmp);
            apply(&tmp, &mut w);
            let mut col = vec![T::zero(); inner + 2];
            // Modified Gram-Schmidt, two passes for stability.
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let hij = dot(v, &w);
                    col[j] += hij;
                    axpy(-hij, v, &mut w);
                }
            }
            let wn = norm2(&w);
            col[inner + 1] = T::from_real(wn);
            for (j, &(c, s)) in cs.iter().enumerate() {
                let a = col[j];
                let bj = col[j + 1];
                col[j] = a * c + s * bj;
                col[j + 1] = -(s.conj() * a) + bj * c;
            }
            let (c, s, rr) = givens(col[inner], col[inner + 1]);
            col[inner] = rr;
            col[inner + 1] = T::zero();
            cs.push((c, s));
            let gi = g[inner];
            g[inner] = gi * c;
            g[inner + 1] = -(s.conj() * gi);
            hess.push(col);
            total += 1;
            inner += 1;
            let rel = g[inner].abs() / bnorm;
            history.push(rel);
            if rel <= cfg.tol || wn == 0.0 {
                converged = true;
                break;
            }
            basis.push(w.iter().map(|&v| v * (1.0 / wn)).collect());
        }
        // Back substitution for y, then x += M (V y).
        let k = inner;
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hess[j][i] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, &yj) in y.iter().enumerate() {
            axpy(yj, &basis[j], &mut update);
        }
        precond(&update, &mut tmp);
        for (xi, &ti) in x.iter_mut().zip(&tmp) {
            *xi += ti;
        }
        if converged {
            // Confirm with the true residual; restart if the recurrence drifted.
            apply(&x, &mut tmp);
            let true_rel = norm2(
                &b.iter()
                    .zip(&tmp)
                    .map(|(&bi, &ai)| bi - ai)
                    .collect::<Vec<_>>(),
            ) / bnorm;
            if true_rel <= cfg.tol * 10.0 {
                return Ok(KrylovOutcome {
                    solution: x,
                    iterations: total,
                    residual: true_rel,
                    history,
                });
            }
        }
    }
}
