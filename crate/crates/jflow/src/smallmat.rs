//! Dense kernels for small complex Hermitian matrices (dim ≤ 8).
//!
//! Everything here operates on row-major `&[Complex64]` slices of length
//! `dim * dim`. The pointwise algebra of the flow only ever sees matrices of
//! complex dimension ≤ 4, so naive O(n³) kernels are the right tool; the
//! Jacobi eigensolver converges to machine precision in a handful of sweeps
//! at these sizes.

use num_complex::Complex64;

/// Hard cap shared by every small-matrix routine.
pub const MAX_DIM: usize = 8;

pub type C64 = Complex64;

#[inline]
pub fn idx(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

/// Determinant by LU with partial pivoting.
pub fn det(a: &[C64], n: usize) -> C64 {
    debug_assert_eq!(a.len(), n * n);
    let mut m: Vec<C64> = a.to_vec();
    let mut d = C64::new(1.0, 0.0);
    for k in 0..n {
        // pivot
        let mut p = k;
        let mut best = m[idx(n, k, k)].norm_sqr();
        for r in k + 1..n {
            let v = m[idx(n, r, k)].norm_sqr();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != k {
            for c in 0..n {
                m.swap(idx(n, k, c), idx(n, p, c));
            }
            d = -d;
        }
        let piv = m[idx(n, k, k)];
        d *= piv;
        for r in k + 1..n {
            let f = m[idx(n, r, k)] / piv;
            for c in k + 1..n {
                let s = m[idx(n, k, c)];
                m[idx(n, r, c)] -= f * s;
            }
        }
    }
    d
}

/// Cholesky factorization A = L L^H for Hermitian positive definite A.
/// Returns the lower factor, or the offending (nonpositive) pivot value.
pub fn cholesky(a: &[C64], n: usize) -> std::result::Result<Vec<C64>, f64> {
    let mut l = vec![C64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut s = a[idx(n, j, j)].re;
        for k in 0..j {
            s -= l[idx(n, j, k)].norm_sqr();
        }
        if s <= 0.0 || !s.is_finite() {
            return Err(s);
        }
        let ljj = s.sqrt();
        l[idx(n, j, j)] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut acc = a[idx(n, i, j)];
            for k in 0..j {
                acc -= l[idx(n, i, k)] * l[idx(n, j, k)].conj();
            }
            l[idx(n, i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// Solve L x = b for lower-triangular L (forward substitution), in place.
pub fn solve_lower(l: &[C64], n: usize, b: &mut [C64]) {
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[idx(n, i, k)] * b[k];
        }
        b[i] = acc / l[idx(n, i, i)];
    }
}

/// Solve L^H x = b (backward substitution), in place.
pub fn solve_lower_adjoint(l: &[C64], n: usize, b: &mut [C64]) {
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in i + 1..n {
            acc -= l[idx(n, k, i)].conj() * b[k];
        }
        b[i] = acc / l[idx(n, i, i)].conj();
    }
}

/// Congruence transform M = L⁻¹ A L⁻ᴴ given the Cholesky factor L of the
/// reference form. M is Hermitian whenever A is.
pub fn reduce_by_cholesky(a: &[C64], l: &[C64], n: usize, out: &mut [C64]) {
    // Columns of W solve L W = A, then M solves M L^H = W row-wise.
    let mut w = a.to_vec();
    // forward substitution applied to every column
    for c in 0..n {
        for i in 0..n {
            let mut acc = w[idx(n, i, c)];
            for k in 0..i {
                acc -= l[idx(n, i, k)] * w[idx(n, k, c)];
            }
            w[idx(n, i, c)] = acc / l[idx(n, i, i)];
        }
    }
    // M = W L^{-H}: solve conj(L) M^T = W^T, i.e. rows of M via forward
    // substitution with conjugated L.
    for r in 0..n {
        for j in 0..n {
            let mut acc = w[idx(n, r, j)];
            for k in 0..j {
                acc -= l[idx(n, j, k)].conj() * out[idx(n, r, k)];
            }
            out[idx(n, r, j)] = acc / l[idx(n, j, j)];
        }
    }
}

/// Cyclic Jacobi eigensolver for a Hermitian matrix. Eigenvalues ascending;
/// optionally accumulates eigenvectors (columns of the returned matrix).
pub fn hermitian_eigen(
    a: &[C64],
    n: usize,
    want_vectors: bool,
) -> (Vec<f64>, Option<Vec<C64>>) {
    debug_assert!(n <= MAX_DIM);
    let mut m: Vec<C64> = a.to_vec();
    let mut v = if want_vectors {
        let mut id = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            id[idx(n, i, i)] = C64::new(1.0, 0.0);
        }
        Some(id)
    } else {
        None
    };

    let norm: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tol = (norm * 1e-15).max(f64::MIN_POSITIVE);

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += m[idx(n, p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[idx(n, p, q)];
                let mag = apq.norm();
                if mag <= tol * 1e-2 {
                    continue;
                }
                // Phase that makes the pivot real, then a real rotation.
                let phase = apq / mag; // e^{i arg}
                let app = m[idx(n, p, p)].re;
                let aqq = m[idx(n, q, q)].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Combined unitary acting on columns (p, q):
                //   col_p' =  c * col_p + s * conj(phase) * col_q-ish
                // Implemented as G = [[c, s*conj(phase)], [-s*phase, c]]^H
                // applied from both sides.
                // Unitary block G = [[c, s], [-s*conj(ph), c*conj(ph)]] zeroes
                // the pivot of G^H A G; apply columns (A·G) then rows (G^H·A).
                let ph = phase;
                for k in 0..n {
                    let akp = m[idx(n, k, p)];
                    let akq = m[idx(n, k, q)];
                    m[idx(n, k, p)] = akp * c - akq * ph.conj() * s;
                    m[idx(n, k, q)] = akp * s + akq * ph.conj() * c;
                }
                for k in 0..n {
                    let apk = m[idx(n, p, k)];
                    let aqk = m[idx(n, q, k)];
                    m[idx(n, p, k)] = apk * c - aqk * ph * s;
                    m[idx(n, q, k)] = apk * s + aqk * ph * c;
                }
                // clean the hermitian structure at the pivot
                m[idx(n, p, q)] = C64::new(0.0, 0.0);
                m[idx(n, q, p)] = C64::new(0.0, 0.0);
                m[idx(n, p, p)] = C64::new(m[idx(n, p, p)].re, 0.0);
                m[idx(n, q, q)] = C64::new(m[idx(n, q, q)].re, 0.0);
                if let Some(vm) = v.as_mut() {
                    for k in 0..n {
                        let vkp = vm[idx(n, k, p)];
                        let vkq = vm[idx(n, k, q)];
                        vm[idx(n, k, p)] = vkp * c - vkq * ph.conj() * s;
                        vm[idx(n, k, q)] = vkp * s + vkq * ph.conj() * c;
                    }
                }
            }
        }
    }

    let mut vals: Vec<(f64, usize)> = (0..n).map(|i| (m[idx(n, i, i)].re, i)).collect();
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let values: Vec<f64> = vals.iter().map(|&(v, _)| v).collect();
    let vectors = v.map(|vm| {
        let mut sorted = vec![C64::new(0.0, 0.0); n * n];
        for (newc, &(_, oldc)) in vals.iter().enumerate() {
            for r in 0..n {
                sorted[idx(n, r, newc)] = vm[idx(n, r, oldc)];
            }
        }
        sorted
    });
    (values, vectors)
}

/// All eigenvalues of a Hermitian matrix, ascending, written into `out`.
/// Closed forms for dim ≤ 3, Jacobi above — the guard/stability hot path.
pub fn hermitian_eigenvalues_fast(a: &[C64], n: usize, out: &mut [f64]) {
    match n {
        1 => out[0] = a[0].re,
        2 => {
            let tr = a[0].re + a[3].re;
            let dt = a[0].re * a[3].re - a[1].norm_sqr();
            let disc = (tr * tr - 4.0 * dt).max(0.0).sqrt();
            out[0] = 0.5 * (tr - disc);
            out[1] = 0.5 * (tr + disc);
        }
        3 => {
            let q = (a[0].re + a[4].re + a[8].re) / 3.0;
            let b00 = a[0].re - q;
            let b11 = a[4].re - q;
            let b22 = a[8].re - q;
            let p2 = b00 * b00
                + b11 * b11
                + b22 * b22
                + 2.0 * (a[1].norm_sqr() + a[2].norm_sqr() + a[5].norm_sqr());
            let p = (p2 / 6.0).sqrt();
            if p == 0.0 {
                out[0] = q;
                out[1] = q;
                out[2] = q;
                return;
            }
            let b01 = a[1];
            let b02 = a[2];
            let b12 = a[5];
            let detb = b00 * (b11 * b22 - b12.norm_sqr())
                - (b01 * (b01.conj() * b22 - b12 * b02.conj())).re
                + (b02 * (b01.conj() * b12.conj() - b11 * b02.conj())).re;
            let r = (detb / (2.0 * p * p * p)).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let c0 = (phi).cos();
            let c1 = (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
            let c2 = (phi + 4.0 * std::f64::consts::FRAC_PI_3).cos();
            // ordering: cos(phi) largest, cos(phi + 2π/3) smallest
            out[0] = q + 2.0 * p * c1;
            out[1] = q + 2.0 * p * c2;
            out[2] = q + 2.0 * p * c0;
            if out[0] > out[1] {
                out.swap(0, 1);
            }
            if out[1] > out[2] {
                out.swap(1, 2);
            }
            if out[0] > out[1] {
                out.swap(0, 1);
            }
        }
        _ => {
            let vals = hermitian_eigen(a, n, false).0;
            out[..n].copy_from_slice(&vals);
        }
    }
}

/// Smallest eigenvalue of a Hermitian matrix (closed forms for dim ≤ 3,
/// Jacobi above).
pub fn hermitian_min_eigenvalue(a: &[C64], n: usize) -> f64 {
    match n {
        1 => a[0].re,
        2 => {
            let tr = a[0].re + a[3].re;
            let dt = a[0].re * a[3].re - a[1].norm_sqr();
            let disc = (tr * tr - 4.0 * dt).max(0.0).sqrt();
            0.5 * (tr - disc)
        }
        3 => {
            // Trigonometric closed form on the shifted matrix.
            let q = (a[0].re + a[4].re + a[8].re) / 3.0;
            let b00 = a[0].re - q;
            let b11 = a[4].re - q;
            let b22 = a[8].re - q;
            let p2 = b00 * b00
                + b11 * b11
                + b22 * b22
                + 2.0 * (a[1].norm_sqr() + a[2].norm_sqr() + a[5].norm_sqr());
            let p = (p2 / 6.0).sqrt();
            if p == 0.0 {
                return q;
            }
            // det(B/p)
            let b01 = a[1];
            let b02 = a[2];
            let b12 = a[5];
            let detb = b00 * (b11 * b22 - b12.norm_sqr())
                - (b01 * (b01.conj() * b22 - b12 * b02.conj())).re
                + (b02 * (b01.conj() * b12.conj() - b11 * b02.conj())).re;
            let r = (detb / (2.0 * p * p * p)).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            // eigenvalues are q + 2p·cos(phi + 2πk/3); k = 1 is the smallest
            q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos()
        }
        _ => hermitian_eigen(a, n, false).0[0],
    }
}
