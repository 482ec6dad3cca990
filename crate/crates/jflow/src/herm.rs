//! Algebra of Hermitian forms at a point.
//!
//! A real (1,1)-form on the torus is represented in coordinates by an n×n
//! Hermitian matrix. This module provides the pointwise kernel every other
//! module calls: generalized eigenvalues of a Hermitian pencil, elementary
//! symmetric polynomials and their partial variants, mixed discriminants by
//! polarization, wedge-product coefficient extraction, and the coefficients
//! of the cone-condition (n−1, n−1)-form.
//!
//! Normalization conventions (pinned by the mixed-discriminant oracle, see
//! the tests):
//! - `mixed_discriminant(A, …, A) = n!·det(A)`;
//! - the wedge coefficient `W(A₁^{k₁} ∧ … ∧ A_r^{k_r})` used throughout is
//!   the form divided by the volume form of the identity metric, scaled so
//!   that `W(Iⁿ) = 1`; concretely `W = MD(A₁×k₁, …) / n!`;
//! - `mixed_wedge_ratio(A, B, m, n) = n·W(Aᵐ∧B^{n−m})/W(Aⁿ)
//!    = (n / C(n,m)) · e_{n−m}(1/λ)` with λ the (A, B) generalized
//!   eigenvalues.

use crate::error::{Error, Result};
use crate::smallmat::{self, idx, C64};

/// An n×n Hermitian matrix representing a real (1,1)-form at a point.
///
/// Construction symmetrizes entries within 1e−12 of Hermitian, absorbing
/// floating-point drift, and rejects anything farther off.
#[derive(Debug, Clone, PartialEq)]
pub struct HermForm {
    dim: usize,
    entries: Vec<C64>,
}

/// Hermitian deviation tolerated (and silently symmetrized away) on
/// construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

impl HermForm {
    pub fn new(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim < 1 || dim > smallmat::MAX_DIM {
            return Err(Error::argument(format!(
                "HermForm dim must be in 1..={}, got {dim}",
                smallmat::MAX_DIM
            )));
        }
        if entries.len() != dim * dim {
            return Err(Error::argument(format!(
                "HermForm expects {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let d = (entries[idx(dim, i, j)] - entries[idx(dim, j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        if !worst.is_finite() || worst > HERMITIAN_TOL {
            return Err(Error::argument(format!(
                "matrix is not Hermitian: max |M - M^H| = {worst:.3e} exceeds {HERMITIAN_TOL:.0e}"
            )));
        }
        let mut sym = entries;
        for i in 0..dim {
            sym[idx(dim, i, i)] = C64::new(sym[idx(dim, i, i)].re, 0.0);
            for j in i + 1..dim {
                let v = (sym[idx(dim, i, j)] + sym[idx(dim, j, i)].conj()) * 0.5;
                sym[idx(dim, i, j)] = v;
                sym[idx(dim, j, i)] = v.conj();
            }
        }
        Ok(HermForm { dim, entries: sym })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[idx(dim, i, i)] = C64::new(1.0, 0.0);
        }
        HermForm { dim, entries }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut entries = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[idx(dim, i, i)] = C64::new(diag[i], 0.0);
        }
        HermForm { dim, entries }
    }

    /// Real symmetric input (the torus-invariant reduction produces these).
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        let complex: Vec<C64> = entries.iter().map(|&v| C64::new(v, 0.0)).collect();
        HermForm::new(dim, complex)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.entries[idx(self.dim, i, j)]
    }

    pub fn scale(&self, s: f64) -> Self {
        HermForm {
            dim: self.dim,
            entries: self.entries.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &HermForm) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::argument("HermForm dimension mismatch in add"));
        }
        Ok(HermForm {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }
}

/// Generalized eigenvalues of a pencil (A, B) with B positive definite,
/// sorted ascending, plus the conditioning of the diagonalizing basis.
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    pub values: Vec<f64>,
    /// cond₂ of the simultaneous-diagonalization basis P (P^H B P = I);
    /// equals sqrt(λ_max(B)/λ_min(B)) and is ≥ 1.
    pub basis_conditioning: f64,
}

/// k-th elementary symmetric polynomial e_k(values); e_0 ≡ 1.
pub fn elem_sym(k: usize, values: &[f64]) -> Result<f64> {
    if k > values.len() {
        return Err(Error::argument(format!(
            "elem_sym: k = {k} out of range for {} values",
            values.len()
        )));
    }
    Ok(elem_sym_unchecked(k, values))
}

fn elem_sym_unchecked(k: usize, values: &[f64]) -> f64 {
    // DP over prefixes: e[j] after consuming x becomes e[j] + x e[j-1].
    let mut e = vec![0.0f64; k + 1];
    e[0] = 1.0;
    for &x in values {
        for j in (1..=k).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[k]
}

/// e_k of the list with entry `i` removed (the partial symmetric
/// polynomial S_{k;i}).
pub fn elem_sym_partial(k: usize, i: usize, values: &[f64]) -> Result<f64> {
    let n = values.len();
    if i >= n {
        return Err(Error::argument(format!(
            "elem_sym_partial: index {i} out of range for {n} values"
        )));
    }
    if k + 1 > n {
        return Err(Error::argument(format!(
            "elem_sym_partial: k = {k} out of range for {n} values (need k <= n-1)"
        )));
    }
    let reduced: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .collect();
    Ok(elem_sym_unchecked(k, &reduced))
}

/// Exact binomial coefficient as f64 (small arguments only).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut num = 1.0f64;
    let mut den = 1.0f64;
    for j in 0..k {
        num *= (n - j) as f64;
        den *= (j + 1) as f64;
    }
    num / den
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Generalized eigenvalues λ solving det(A − λB) = 0, ascending.
///
/// Computed, per the stable route for positive-definite reference forms, as
/// a Cholesky factorization B = L L^H followed by a Hermitian eigensolve of
/// L⁻¹ A L⁻ᴴ.
pub fn gen_eigen(a: &HermForm, b: &HermForm) -> Result<EigenSpectrum> {
    let (values, _) = gen_eigen_inner(a, b, false)?;
    let b_eigs = smallmat::hermitian_eigen(b.entries(), b.dim(), false).0;
    let cond = (b_eigs[b.dim() - 1] / b_eigs[0]).sqrt();
    Ok(EigenSpectrum {
        values,
        basis_conditioning: cond.max(1.0),
    })
}

/// Generalized eigenvalues plus the diagonalizing frame P (columns v_i with
/// P^H B P = I and P^H A P = diag(λ)).
pub fn gen_eigen_with_frame(a: &HermForm, b: &HermForm) -> Result<(Vec<f64>, Vec<C64>)> {
    let (values, frame) = gen_eigen_inner(a, b, true)?;
    Ok((values, frame.unwrap()))
}

fn gen_eigen_inner(
    a: &HermForm,
    b: &HermForm,
    want_frame: bool,
) -> Result<(Vec<f64>, Option<Vec<C64>>)> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::argument("gen_eigen: dimension mismatch"));
    }
    let l = match smallmat::cholesky(b.entries(), n) {
        Ok(l) => l,
        Err(_) => {
            let min_b = smallmat::hermitian_eigen(b.entries(), n, false).0[0];
            return Err(Error::geometry_at(
                "gen_eigen: reference form is not positive definite",
                min_b,
                None,
            ));
        }
    };
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    smallmat::reduce_by_cholesky(a.entries(), &l, n, &mut m);
    let (values, vecs) = smallmat::hermitian_eigen(&m, n, want_frame);
    let frame = if want_frame {
        // v_i = L^{-H} u_i
        let u = vecs.unwrap();
        let mut p = vec![C64::new(0.0, 0.0); n * n];
        let mut col = vec![C64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = u[idx(n, r, c)];
            }
            smallmat::solve_lower_adjoint(&l, n, &mut col);
            for r in 0..n {
                p[idx(n, r, c)] = col[r];
            }
        }
        Some(p)
    } else {
        None
    };
    Ok((values, frame))
}

/// Mixed discriminant MD(A₁, …, A_n) by polarization: the coefficient of
/// t₁·…·t_n in det(Σ t_k A_k), computed by inclusion–exclusion over subsets.
/// Normalized so MD(A, …, A) = n!·det(A).
pub fn mixed_discriminant(forms: &[HermForm]) -> Result<f64> {
    let n = forms.len();
    if n == 0 {
        return Err(Error::argument("mixed_discriminant: empty form list"));
    }
    for f in forms {
        if f.dim() != n {
            return Err(Error::argument(format!(
                "mixed_discriminant: expected {n}×{n} forms, got dim {}",
                f.dim()
            )));
        }
    }
    let slices: Vec<&[C64]> = forms.iter().map(|f| f.entries()).collect();
    Ok(mixed_discriminant_slices(&slices, n))
}

/// Inclusion–exclusion polarization on raw slices.
/// MD = Σ_{∅≠S⊆[n]} (−1)^{n−|S|} det(Σ_{i∈S} A_i).
pub fn mixed_discriminant_slices(mats: &[&[C64]], n: usize) -> f64 {
    debug_assert_eq!(mats.len(), n);
    let mut total = 0.0f64;
    let mut sum = vec![C64::new(0.0, 0.0); n * n];
    for mask in 1u32..(1 << n) {
        for v in sum.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        let mut bits = 0usize;
        for (i, m) in mats.iter().enumerate() {
            if mask & (1 << i) != 0 {
                bits += 1;
                for (s, &x) in sum.iter_mut().zip(m.iter()) {
                    *s += x;
                }
            }
        }
        let d = smallmat::det(&sum, n).re;
        if (n - bits) % 2 == 0 {
            total += d;
        } else {
            total -= d;
        }
    }
    total
}

/// n·(Aᵐ∧B^{n−m})/Aⁿ = (n / C(n,m)) · e_{n−m}(1/λ₁, …, 1/λ_n) with
/// λ = gen_eigen(A, B). Requires both forms positive definite.
pub fn mixed_wedge_ratio(a: &HermForm, b: &HermForm, m: usize, n: usize) -> Result<f64> {
    if a.dim() != n || b.dim() != n {
        return Err(Error::argument(format!(
            "mixed_wedge_ratio: forms must be {n}×{n}"
        )));
    }
    if !(1 <= m && m < n) {
        return Err(Error::argument(format!(
            "mixed_wedge_ratio: need 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    let spec = gen_eigen(a, b)?;
    if spec.values[0] <= 0.0 {
        return Err(Error::geometry_at(
            "mixed_wedge_ratio: A is not positive definite relative to B",
            spec.values[0],
            None,
        ));
    }
    let inv: Vec<f64> = spec.values.iter().map(|&v| 1.0 / v).collect();
    Ok(n as f64 / binomial(n, m) * elem_sym_unchecked(n - m, &inv))
}

/// Coefficients κ_i of the cone-condition (n−1, n−1)-form
/// c·χ^{n−1} − m·χ^{m−1}∧ω^{n−m} in the frame where χ has (χ, ω)
/// generalized eigenvalues `mu`:
///
///   κ_i = c·e_{n−1}(mu∖i) − (m!·(n−m)!/(n−1)!)·e_{m−1}(mu∖i).
///
/// The form is ≥ 0 iff all κ_i ≥ 0 and > 0 iff all κ_i > 0.
pub fn cone_form_coefficients(mu: &[f64], m: usize, c: f64) -> Result<Vec<f64>> {
    let n = mu.len();
    if !(1 <= m && m < n) {
        return Err(Error::argument(format!(
            "cone_form_coefficients: need 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    if c <= 0.0 {
        return Err(Error::argument(format!(
            "cone_form_coefficients: c must be positive, got {c}"
        )));
    }
    if let Some(&bad) = mu.iter().find(|&&v| v <= 0.0) {
        return Err(Error::geometry_at(
            "cone_form_coefficients: eigenvalues must be positive",
            bad,
            None,
        ));
    }
    let weight = factorial(m) * factorial(n - m) / factorial(n - 1);
    let mut kappa = Vec::with_capacity(n);
    for i in 0..n {
        let lead = elem_sym_partial(n - 1, i, mu)?;
        let tail = elem_sym_partial(m - 1, i, mu)?;
        kappa.push(c * lead - weight * tail);
    }
    Ok(kappa)
}

// ---------------------------------------------------------------------------
// Pointwise kernels on raw slices (the grid hot paths).
// ---------------------------------------------------------------------------

/// Coefficients [e_0, …, e_n] of the eigenvalues of a Hermitian matrix,
/// i.e. its principal-minor sums, without an eigensolve. dim ≤ 4.
pub fn char_elem_syms(a: &[C64], n: usize, out: &mut [f64; 5]) {
    out[0] = 1.0;
    match n {
        1 => {
            out[1] = a[0].re;
        }
        2 => {
            out[1] = a[0].re + a[3].re;
            out[2] = a[0].re * a[3].re - a[1].norm_sqr();
        }
        3 => {
            let (d0, d1, d2) = (a[0].re, a[4].re, a[8].re);
            out[1] = d0 + d1 + d2;
            out[2] = d0 * d1 - a[1].norm_sqr() + d0 * d2 - a[2].norm_sqr() + d1 * d2
                - a[5].norm_sqr();
            // det, expanded along the first row
            let m01 = a[1].conj() * a[8] - a[5] * a[2].conj();
            let m02 = a[1].conj() * a[5].conj() - a[4] * a[2].conj();
            out[3] = d0 * (d1 * d2 - a[5].norm_sqr()) - (a[1] * m01).re + (a[2] * m02).re;
        }
        4 => {
            out[1] = a[0].re + a[5].re + a[10].re + a[15].re;
            let mut e2 = 0.0;
            let mut e3 = 0.0;
            // 2×2 principal minors
            for i in 0..4 {
                for j in i + 1..4 {
                    e2 += a[idx(4, i, i)].re * a[idx(4, j, j)].re - a[idx(4, i, j)].norm_sqr();
                }
            }
            // 3×3 principal minors
            for skip in 0..4usize {
                let rows: Vec<usize> = (0..4).filter(|&r| r != skip).collect();
                let mut sub = [C64::new(0.0, 0.0); 9];
                for (ri, &r) in rows.iter().enumerate() {
                    for (ci, &c) in rows.iter().enumerate() {
                        sub[idx(3, ri, ci)] = a[idx(4, r, c)];
                    }
                }
                e3 += smallmat::det(&sub, 3).re;
            }
            out[2] = e2;
            out[3] = e3;
            out[4] = smallmat::det(a, 4).re;
        }
        _ => {
            // cold path: via eigenvalues
            let vals = smallmat::hermitian_eigen(a, n, false).0;
            for (k, o) in out.iter_mut().enumerate().take(n + 1) {
                *o = elem_sym_unchecked(k, &vals);
            }
        }
    }
}

/// Coefficient of t^p in det(t·B + A) for n ≤ 4, via Leibniz expansion with
/// per-entry linear forms. The coefficients equal det(B)·e_{n−p}(λ) with λ
/// the (A, B) generalized eigenvalues whenever B is positive definite.
pub fn pencil_char_coeff(a: &[C64], b: &[C64], n: usize, p: usize) -> f64 {
    debug_assert!(n <= 4 && p <= n);
    let perms = permutations(n);
    let mut total = C64::new(0.0, 0.0);
    // product of n linear forms (a_i + t b_i); coefficient of t^p = sum over
    // which p rows contribute their b-entry.
    let rows: Vec<usize> = (0..n).collect();
    let combos = combinations(&rows, p);
    for (sign, sigma) in perms {
        let mut term = C64::new(0.0, 0.0);
        for combo in &combos {
            let mut prod = C64::new(1.0, 0.0);
            for i in 0..n {
                let e = if combo.contains(&i) {
                    b[idx(n, i, sigma[i])]
                } else {
                    a[idx(n, i, sigma[i])]
                };
                prod *= e;
            }
            term += prod;
        }
        if *sign > 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total.re
}

/// Normalized wedge coefficient of a product of Hermitian factors with
/// multiplicities summing to n (dim ≤ 4):
///
///   W(A₁^{k₁} ∧ … ∧ A_r^{k_r}) = (∏ k_v!)/n! · [∏ t_v^{k_v}] det(Σ t_v A_v)
///
/// so that W(Iⁿ) = 1 and W(Aⁿ) = det(A).
pub fn wedge_coeff(factors: &[(&[C64], usize)], n: usize) -> Result<f64> {
    let total: usize = factors.iter().map(|&(_, k)| k).sum();
    if total != n {
        return Err(Error::argument(format!(
            "wedge_coeff: exponents sum to {total}, expected {n}"
        )));
    }
    if n > 4 {
        return Err(Error::argument("wedge_coeff: dim > 4 not supported"));
    }
    let active: Vec<(&[C64], usize)> = factors.iter().copied().filter(|&(_, k)| k > 0).collect();
    if active.len() == 1 {
        return Ok(smallmat::det(active[0].0, n).re);
    }
    if active.len() == 2 {
        let (a, ka) = active[0];
        let (b, kb) = active[1];
        // coefficient of t^{kb} in det(t·B + A), divided by C(n, ka)
        return Ok(pencil_char_coeff(a, b, n, kb) * factorial(ka) * factorial(kb) / factorial(n));
    }
    // r >= 3: assignment enumeration. Rows are assigned one factor each,
    // with factor v used exactly k_v times.
    let assignments = multiset_permutations(&active.iter().map(|&(_, k)| k).collect::<Vec<_>>());
    let perms = permutations(n);
    let mut total_c = C64::new(0.0, 0.0);
    for (sign, sigma) in perms {
        let mut term = C64::new(0.0, 0.0);
        for assign in &assignments {
            let mut prod = C64::new(1.0, 0.0);
            for i in 0..n {
                let mat = active[assign[i] as usize].0;
                prod *= mat[idx(n, i, sigma[i])];
            }
            term += prod;
        }
        if *sign > 0 {
            total_c += term;
        } else {
            total_c -= term;
        }
    }
    let norm: f64 = active.iter().map(|&(_, k)| factorial(k)).product::<f64>() / factorial(n);
    Ok(total_c.re * norm)
}

/// Wedge coefficient evaluated through the mixed-discriminant polarization:
/// the independent oracle route, `MD(A₁×k₁, …)/n!`.
pub fn wedge_coeff_md_oracle(factors: &[(&[C64], usize)], n: usize) -> Result<f64> {
    let total: usize = factors.iter().map(|&(_, k)| k).sum();
    if total != n {
        return Err(Error::argument("wedge_coeff_md_oracle: exponents must sum to n"));
    }
    let mut list: Vec<&[C64]> = Vec::with_capacity(n);
    for &(m, k) in factors {
        for _ in 0..k {
            list.push(m);
        }
    }
    Ok(mixed_discriminant_slices(&list, n) / factorial(n))
}

fn permutations(n: usize) -> &'static [(i8, Vec<usize>)] {
    use std::sync::OnceLock;
    static TABLES: OnceLock<Vec<Vec<(i8, Vec<usize>)>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        (0..=4usize)
            .map(|n| {
                let mut out: Vec<(i8, Vec<usize>)> = Vec::new();
                let mut perm: Vec<usize> = (0..n).collect();
                loop {
                    let mut inversions = 0usize;
                    for i in 0..n {
                        for j in i + 1..n {
                            if perm[i] > perm[j] {
                                inversions += 1;
                            }
                        }
                    }
                    let sign = if inversions % 2 == 0 { 1 } else { -1 };
                    out.push((sign, perm.clone()));
                    if !next_lexicographic(&mut perm) {
                        break;
                    }
                }
                out
            })
            .collect()
    });
    &tables[n]
}

fn next_lexicographic(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let n = items.len();
    if k > n {
        return out;
    }
    let mut idxs: Vec<usize> = (0..k).collect();
    loop {
        out.push(idxs.iter().map(|&i| items[i]).collect());
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idxs[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idxs[i] += 1;
        for j in i + 1..k {
            idxs[j] = idxs[j - 1] + 1;
        }
    }
}

/// All distinct sequences assigning factor indices to n slots where factor v
/// appears exactly counts[v] times.
fn multiset_permutations(counts: &[usize]) -> Vec<Vec<u8>> {
    let n: usize = counts.iter().sum();
    let mut out = Vec::new();
    let mut current = vec![0u8; n];
    let mut remaining = counts.to_vec();
    fn go(
        pos: usize,
        n: usize,
        remaining: &mut Vec<usize>,
        current: &mut Vec<u8>,
        out: &mut Vec<Vec<u8>>,
    ) {
        if pos == n {
            out.push(current.clone());
            return;
        }
        for v in 0..remaining.len() {
            if remaining[v] > 0 {
                remaining[v] -= 1;
                current[pos] = v as u8;
                go(pos + 1, n, remaining, current, out);
                remaining[v] += 1;
            }
        }
    }
    go(0, n, &mut remaining, &mut current, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Independent reference routes used by the verification suites.
// ---------------------------------------------------------------------------

pub mod oracle {
    //! Brute-force reference implementations, deliberately independent of the
    //! production code paths they are used to check.

    use super::*;

    /// Generalized eigenvalues as roots of det(A − λB), located by scanning
    /// for sign changes on a bracketing grid and bisecting. Assumes distinct
    /// roots (random test inputs).
    pub fn gen_eigen_bracketing(a: &HermForm, b: &HermForm) -> Vec<f64> {
        let n = a.dim();
        let f = |lam: f64| -> f64 {
            let mut m = vec![C64::new(0.0, 0.0); n * n];
            for i in 0..n * n {
                m[i] = a.entries()[i] - b.entries()[i] * lam;
            }
            smallmat::det(&m, n).re
        };
        // bracketing radius from the reduced matrix norm
        let l = smallmat::cholesky(b.entries(), n).expect("oracle needs PD reference");
        let mut red = vec![C64::new(0.0, 0.0); n * n];
        smallmat::reduce_by_cholesky(a.entries(), &l, n, &mut red);
        let radius: f64 = red.iter().map(|z| z.norm()).sum::<f64>() + 1.0;
        let grid = 8192;
        let mut roots = Vec::new();
        let mut prev_x = -radius;
        let mut prev_f = f(prev_x);
        for i in 1..=grid {
            let x = -radius + 2.0 * radius * i as f64 / grid as f64;
            let fx = f(x);
            if prev_f == 0.0 {
                roots.push(prev_x);
            } else if prev_f * fx < 0.0 {
                let (mut lo, mut hi) = (prev_x, x);
                let mut flo = prev_f;
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let fm = f(mid);
                    if flo * fm <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev_x = x;
            prev_f = fx;
        }
        roots
    }

    /// e_k by explicit subset enumeration (n ≤ 20).
    pub fn elem_sym_subsets(k: usize, values: &[f64]) -> f64 {
        let n = values.len();
        assert!(n <= 20);
        if k == 0 {
            return 1.0;
        }
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let mut prod = 1.0;
            for (i, &v) in values.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    prod *= v;
                }
            }
            total += prod;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> HermForm {
        let mut entries = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            entries[idx(n, i, i)] = c(rng.gen_range(-scale..scale), 0.0);
            for j in i + 1..n {
                let z = c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
                entries[idx(n, i, j)] = z;
                entries[idx(n, j, i)] = z.conj();
            }
        }
        HermForm::new(n, entries).unwrap()
    }

    pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> HermForm {
        // A^H A + eps I is PD
        let mut g = vec![c(0.0, 0.0); n * n];
        for v in g.iter_mut() {
            *v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let mut pd = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = c(0.0, 0.0);
                for k in 0..n {
                    s += g[idx(n, k, i)].conj() * g[idx(n, k, j)];
                }
                pd[idx(n, i, j)] = s;
            }
        }
        for i in 0..n {
            pd[idx(n, i, i)] += c(0.05, 0.0);
        }
        HermForm::new(n, pd).unwrap()
    }

    #[test]
    fn elem_sym_trivial_cases() {
        assert_eq!(elem_sym(0, &[2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(elem_sym(1, &[2.0, 3.0]).unwrap(), 5.0);
        assert_eq!(elem_sym(2, &[2.0, 3.0]).unwrap(), 6.0);
        assert!(elem_sym(3, &[2.0, 3.0]).is_err());
    }

    #[test]
    fn elem_sym_partial_cases() {
        assert_eq!(elem_sym_partial(1, 0, &[2.0, 3.0, 5.0]).unwrap(), 8.0);
        assert_eq!(elem_sym_partial(0, 2, &[2.0, 3.0, 5.0]).unwrap(), 1.0);
        assert_eq!(elem_sym_partial(2, 1, &[2.0, 3.0, 5.0]).unwrap(), 10.0);
        assert!(elem_sym_partial(1, 3, &[2.0, 3.0, 5.0]).is_err());
        assert!(elem_sym_partial(3, 0, &[2.0, 3.0, 5.0]).is_err());
    }

    #[test]
    fn elem_sym_matches_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..=8usize);
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for k in 0..=n {
                let fast = elem_sym(k, &vals).unwrap();
                let slow = oracle::elem_sym_subsets(k, &vals);
                assert!(
                    (fast - slow).abs() <= 1e-12 * (1.0 + slow.abs()),
                    "k={k} vals={vals:?}"
                );
            }
        }
    }

    #[test]
    fn newton_recurrence_extension() {
        // e_k(λ ∪ {x}) = e_k(λ) + x e_{k-1}(λ)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6usize);
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x = rng.gen_range(-3.0..3.0);
            let mut ext = vals.clone();
            ext.push(x);
            for k in 1..=n {
                let lhs = elem_sym(k, &ext).unwrap();
                let rhs = elem_sym(k, &vals).unwrap() + x * elem_sym(k - 1, &vals).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn partial_identity_cross_check() {
        // e_k(λ) = e_k(λ∖i) + λ_i e_{k-1}(λ∖i)
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = rng.gen_range(2..=6usize);
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for i in 0..n {
                for k in 1..n {
                    let full = elem_sym(k, &vals).unwrap();
                    let part = elem_sym_partial(k, i, &vals).unwrap()
                        + vals[i] * elem_sym_partial(k - 1, i, &vals).unwrap();
                    assert!((full - part).abs() <= 1e-12 * (1.0 + full.abs()));
                }
            }
        }
    }

    #[test]
    fn gen_eigen_identity_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=4usize {
            let a = random_pd(&mut rng, n);
            let spec = gen_eigen(&a, &a).unwrap();
            for &v in &spec.values {
                assert!((v - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gen_eigen_diagonal_ratio() {
        let a = HermForm::from_diagonal(&[2.0, 6.0]);
        let b = HermForm::from_diagonal(&[1.0, 2.0]);
        let spec = gen_eigen(&a, &b).unwrap();
        assert!((spec.values[0] - 2.0).abs() < 1e-13);
        assert!((spec.values[1] - 3.0).abs() < 1e-13);
        assert!((spec.basis_conditioning - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gen_eigen_matches_bracketing_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let n = 3;
            let a = random_hermitian(&mut rng, n, 2.0);
            let b = random_pd(&mut rng, n);
            let spec = gen_eigen(&a, &b).unwrap();
            let roots = oracle::gen_eigen_bracketing(&a, &b);
            assert_eq!(roots.len(), n, "oracle found {} roots", roots.len());
            for (x, y) in spec.values.iter().zip(&roots) {
                assert!((x - y).abs() < 1e-8 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn gen_eigen_congruence_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(2..=4usize);
            let a = random_hermitian(&mut rng, n, 2.0);
            let b = random_pd(&mut rng, n);
            // random invertible P (diagonally dominated to stay well conditioned)
            let mut p = vec![c(0.0, 0.0); n * n];
            for i in 0..n {
                for j in 0..n {
                    p[idx(n, i, j)] = c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                }
                p[idx(n, i, i)] += c(2.0, 0.0);
            }
            let congr = |m: &HermForm| -> HermForm {
                let mut out = vec![c(0.0, 0.0); n * n];
                for i in 0..n {
                    for j in 0..n {
                        let mut s = c(0.0, 0.0);
                        for r in 0..n {
                            for t in 0..n {
                                s += p[idx(n, r, i)].conj() * m.entries()[idx(n, r, t)]
                                    * p[idx(n, t, j)];
                            }
                        }
                        out[idx(n, i, j)] = s;
                    }
                }
                HermForm::new(n, out).unwrap()
            };
            let sa = gen_eigen(&a, &b).unwrap();
            let sb = gen_eigen(&congr(&a), &congr(&b)).unwrap();
            for (x, y) in sa.values.iter().zip(&sb.values) {
                assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn gen_eigen_rejects_indefinite_reference() {
        let a = HermForm::identity(2);
        let b = HermForm::from_diagonal(&[1.0, -0.25]);
        match gen_eigen(&a, &b) {
            Err(Error::Geometry {
                min_eigenvalue: Some(v),
                ..
            }) => assert!((v + 0.25).abs() < 1e-12),
            other => panic!("expected geometry error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_discriminant_frozen_cases() {
        let i2 = HermForm::identity(2);
        assert!((mixed_discriminant(&[i2.clone(), i2.clone()]).unwrap() - 2.0).abs() < 1e-14);
        // MD(diag(a,b), I) = a + b: expand det(t1 diag(a,b) + t2 I) and read
        // the t1 t2 coefficient = a + b.
        let d = HermForm::from_diagonal(&[3.0, 5.0]);
        assert!((mixed_discriminant(&[d, i2]).unwrap() - 8.0).abs() < 1e-13);

        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let a = random_hermitian(&mut rng, 3, 2.0);
            let md = mixed_discriminant(&[a.clone(), a.clone(), a.clone()]).unwrap();
            let det = smallmat::det(a.entries(), 3).re;
            assert!((md - 6.0 * det).abs() < 1e-11 * (1.0 + det.abs()));
        }
    }

    #[test]
    fn mixed_discriminant_rejects_mismatched_dims() {
        let a = HermForm::identity(2);
        let b = HermForm::identity(3);
        assert!(mixed_discriminant(&[a, b]).is_err());
    }

    #[test]
    fn mixed_wedge_ratio_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 2..=4usize {
            let a = random_pd(&mut rng, n);
            for m in 1..n {
                let r = mixed_wedge_ratio(&a, &a, m, n).unwrap();
                assert!((r - n as f64).abs() < 1e-10, "n={n} m={m} r={r}");
            }
        }
        // n=2, m=1, λ=(2,2): S_1(λ^{-1}) = 1
        let a = HermForm::from_diagonal(&[2.0, 2.0]);
        let b = HermForm::identity(2);
        assert!((mixed_wedge_ratio(&a, &b, 1, 2).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn mixed_wedge_ratio_matches_md_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let n = rng.gen_range(2..=4usize);
            let m = rng.gen_range(1..n);
            let a = random_pd(&mut rng, n);
            let b = random_pd(&mut rng, n);
            let ratio = mixed_wedge_ratio(&a, &b, m, n).unwrap();
            // ratio · MD(A×n) == n · MD(A×m, B×(n−m))
            let mut top: Vec<HermForm> = Vec::new();
            for _ in 0..m {
                top.push(a.clone());
            }
            for _ in 0..n - m {
                top.push(b.clone());
            }
            let lhs = ratio * mixed_discriminant(&vec![a.clone(); n]).unwrap();
            let rhs = n as f64 * mixed_discriminant(&top).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()),
                "n={n} m={m}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn wedge_coeff_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let n = rng.gen_range(2..=4usize);
            let a = random_hermitian(&mut rng, n, 1.5);
            let b = random_pd(&mut rng, n);
            let d = random_hermitian(&mut rng, n, 1.5);
            // random split of n into up to three exponents
            let ka = rng.gen_range(0..=n);
            let kb = rng.gen_range(0..=(n - ka));
            let kd = n - ka - kb;
            let factors = [
                (a.entries(), ka),
                (b.entries(), kb),
                (d.entries(), kd),
            ];
            let fast = wedge_coeff(&factors, n).unwrap();
            let slow = wedge_coeff_md_oracle(&factors, n).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-10 * (1.0 + slow.abs()),
                "n={n} k=({ka},{kb},{kd}): {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn wedge_identity_normalization() {
        for n in 1..=4usize {
            let i = HermForm::identity(n);
            let w = wedge_coeff(&[(i.entries(), n)], n).unwrap();
            assert!((w - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn char_elem_syms_match_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let n = rng.gen_range(1..=4usize);
            let a = random_hermitian(&mut rng, n, 2.0);
            let mut coeffs = [0.0f64; 5];
            char_elem_syms(a.entries(), n, &mut coeffs);
            let vals = smallmat::hermitian_eigen(a.entries(), n, false).0;
            for k in 0..=n {
                let ek = elem_sym(k, &vals).unwrap();
                assert!(
                    (coeffs[k] - ek).abs() <= 1e-10 * (1.0 + ek.abs()),
                    "n={n} k={k}: {} vs {ek}",
                    coeffs[k]
                );
            }
        }
    }

    #[test]
    fn pencil_char_coeff_matches_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..100 {
            let n = rng.gen_range(2..=4usize);
            let a = random_hermitian(&mut rng, n, 1.5);
            let b = random_pd(&mut rng, n);
            let lam = gen_eigen(&a, &b).unwrap().values;
            let detb = smallmat::det(b.entries(), n).re;
            for p in 0..=n {
                let coeff = pencil_char_coeff(a.entries(), b.entries(), n, p);
                let expect = detb * elem_sym(n - p, &lam).unwrap();
                assert!(
                    (coeff - expect).abs() <= 1e-9 * (1.0 + expect.abs()),
                    "n={n} p={p}: {coeff} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn cone_coefficients_n2_closed_form() {
        // n=2, m=1: κ = (c·μ₂ − 1, c·μ₁ − 1)
        let mu = [1.7, 0.6];
        let c = 1.3;
        let kappa = cone_form_coefficients(&mu, 1, c).unwrap();
        assert!((kappa[0] - (c * 0.6 - 1.0)).abs() < 1e-14);
        assert!((kappa[1] - (c * 1.7 - 1.0)).abs() < 1e-14);
        // boundary attained: mu = (1,1), c = 1 -> (0,0)
        let k2 = cone_form_coefficients(&[1.0, 1.0], 1, 1.0).unwrap();
        assert_eq!(k2, vec![0.0, 0.0]);
    }

    #[test]
    fn cone_coefficients_match_md_oracle() {
        // Evaluate c·χ^{n−1} − m·χ^{m−1}∧ω^{n−m} against the coordinate test
        // bivectors E_i via the mixed discriminant and compare with κ_i·(n−1)!.
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..200 {
            let n = rng.gen_range(2..=4usize);
            let m = rng.gen_range(1..n);
            let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
            let c = rng.gen_range(0.2..3.0);
            let kappa = cone_form_coefficients(&mu, m, c).unwrap();
            let chi = HermForm::from_diagonal(&mu);
            let omega = HermForm::identity(n);
            for i in 0..n {
                let mut e = vec![C64::new(0.0, 0.0); n * n];
                e[idx(n, i, i)] = C64::new(1.0, 0.0);
                let ei = HermForm::new(n, e).unwrap();
                let mut lead: Vec<HermForm> = vec![chi.clone(); n - 1];
                lead.push(ei.clone());
                let mut tail: Vec<HermForm> = vec![chi.clone(); m - 1];
                tail.extend(vec![omega.clone(); n - m]);
                tail.push(ei.clone());
                let form_val = c * mixed_discriminant(&lead).unwrap()
                    - m as f64 * mixed_discriminant(&tail).unwrap()
                        / (factorial(m - 1) * factorial(n - m))
                        * factorial(m - 1)
                        * factorial(n - m);
                let expect = kappa[i] * factorial(n - 1);
                assert!(
                    (form_val - expect).abs() <= 1e-10 * (1.0 + expect.abs()),
                    "n={n} m={m} i={i}: {form_val} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn cone_coefficients_error_paths() {
        assert!(cone_form_coefficients(&[1.0, -0.1], 1, 1.0).is_err());
        assert!(cone_form_coefficients(&[1.0, 1.0], 0, 1.0).is_err());
        assert!(cone_form_coefficients(&[1.0, 1.0], 1, -1.0).is_err());
    }

    #[test]
    fn hermform_symmetrizes_small_drift() {
        let eps = 1e-13;
        let entries = vec![
            c(1.0, eps),
            c(0.5, 0.2),
            c(0.5, -0.2 + eps),
            c(2.0, 0.0),
        ];
        let h = HermForm::new(2, entries).unwrap();
        assert_eq!(h.entry(0, 0).im, 0.0);
        assert_eq!(h.entry(0, 1), h.entry(1, 0).conj());
    }

    #[test]
    fn hermform_rejects_non_hermitian() {
        let entries = vec![c(1.0, 0.0), c(0.5, 0.2), c(0.5, 0.2), c(2.0, 0.0)];
        assert!(HermForm::new(2, entries).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-3.0f64..3.0, n)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn newton_extension_recurrence(vals in (1usize..7).prop_flat_map(values), x in -3.0f64..3.0) {
                let mut ext = vals.clone();
                ext.push(x);
                for k in 1..=vals.len() {
                    let lhs = elem_sym(k, &ext).unwrap();
                    let rhs = elem_sym(k, &vals).unwrap() + x * elem_sym(k - 1, &vals).unwrap();
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
                }
            }

            #[test]
            fn partial_reconstructs_full(vals in (2usize..7).prop_flat_map(values), idx_seed in 0usize..64) {
                let i = idx_seed % vals.len();
                for k in 1..vals.len() {
                    let full = elem_sym(k, &vals).unwrap();
                    let part = elem_sym_partial(k, i, &vals).unwrap()
                        + vals[i] * elem_sym_partial(k - 1, i, &vals).unwrap();
                    prop_assert!((full - part).abs() <= 1e-12 * (1.0 + full.abs()));
                }
            }

            #[test]
            fn elem_sym_matches_subsets(vals in (1usize..9).prop_flat_map(values), k_seed in 0usize..16) {
                let k = k_seed % (vals.len() + 1);
                let fast = elem_sym(k, &vals).unwrap();
                let slow = oracle::elem_sym_subsets(k, &vals);
                prop_assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow.abs()));
            }
        }
    }
}
