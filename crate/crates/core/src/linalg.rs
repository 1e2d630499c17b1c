//! Dense kernels: products, Cholesky, triangular and general solves, SVD.
//!
//! Every kernel widens its inputs to the compute type of the resolved
//! signature, runs there, and rounds once on the way out. Work is split only
//! across output columns, and every inner loop has a fixed order, so results
//! are identical for any thread count.

use crate::array::{MPArray, Shape};
use crate::dispatch::{check_placement, plan, with_compute};
use crate::error::{Error, Result};
use crate::parallel::{for_each_column, for_each_column_from};
use crate::precision::Precision;
use crate::scalar::{axpy, dot, Real};

/// Scaling and transposition flags for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GemmParams {
    pub trans_a: bool,
    pub trans_b: bool,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GemmParams {
    fn default() -> Self {
        GemmParams {
            trans_a: false,
            trans_b: false,
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Singular values (descending) and the requested singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub d: MPArray,
    pub u: MPArray,
    pub v: MPArray,
}

const SVD_MAX_SWEEPS: usize = 30;

fn matrix_shape(rows: usize, cols: usize) -> Shape {
    Shape::Matrix { rows, cols }
}

/// Result shape for a solve or product whose right operand was `b`: a vector
/// right-hand side gives a vector back.
fn rhs_shape(b: &MPArray, rows: usize, cols: usize) -> Shape {
    if !b.is_matrix() && cols == 1 {
        Shape::Vector(rows)
    } else {
        matrix_shape(rows, cols)
    }
}

fn square(a: &MPArray, op: &'static str) -> Result<usize> {
    if !a.is_matrix() {
        return Err(Error::NotAMatrix(op));
    }
    let (r, c) = a.dims();
    if r != c {
        return Err(Error::ShapeMismatch(format!(
            "'{op}' needs a square matrix, got {r} x {c}"
        )));
    }
    Ok(r)
}

pub(crate) fn transpose_buf<T: Copy>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = Vec::with_capacity(x.len());
    for i in 0..rows {
        t.extend((0..cols).map(|j| x[j * rows + i]));
    }
    t
}

/// `A (m x k) * B (k x n)`, each output column built by axpy over A's columns.
pub(crate) fn matmul_kernel<T: Real>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for_each_column(&mut out, m, |j, col| {
        for l in 0..k {
            axpy(b[j * k + l], &a[l * m..(l + 1) * m], col);
        }
    });
    out
}

/// `Aᵀ B` for `A (m x p)`, `B (m x q)`, one dot product per entry.
pub(crate) fn crossprod_kernel<T: Real>(a: &[T], m: usize, p: usize, b: &[T], q: usize) -> Vec<T> {
    let mut out = vec![T::zero(); p * q];
    for_each_column(&mut out, p, |j, col| {
        let bj = &b[j * m..(j + 1) * m];
        for (i, c) in col.iter_mut().enumerate() {
            *c = dot(&a[i * m..(i + 1) * m], bj);
        }
    });
    out
}

/// Matrix product `A B`. A vector `B` is a column and yields a vector.
pub fn matmul(a: &MPArray, b: &MPArray) -> Result<MPArray> {
    let entry = plan("matmul", &[a, b])?;
    let (m, k) = a.dims();
    let (kb, n) = b.dims();
    if k != kb {
        return Err(Error::ShapeMismatch(format!(
            "matmul of {m} x {k} and {kb} x {n}"
        )));
    }
    with_compute!(entry.compute, T => {
        let out = matmul_kernel(&a.to_compute::<T>(), m, k, &b.to_compute::<T>(), n);
        Ok(MPArray::from_compute(rhs_shape(b, m, n), entry.key.out, out))
    })
}

/// `AᵀA` or `AᵀB`. The one-argument form is exactly symmetric.
pub fn crossprod(a: &MPArray, b: Option<&MPArray>) -> Result<MPArray> {
    let other = b.unwrap_or(a);
    let entry = plan("crossprod", &[a, other])?;
    let (m, p) = a.dims();
    let (mb, q) = other.dims();
    if m != mb {
        return Err(Error::ShapeMismatch(format!(
            "crossprod of {m} x {p} and {mb} x {q}"
        )));
    }
    with_compute!(entry.compute, T => {
        let x = a.to_compute::<T>();
        let out = match b {
            Some(b) => crossprod_kernel(&x, m, p, &b.to_compute::<T>(), q),
            None => crossprod_kernel(&x, m, p, &x, p),
        };
        Ok(MPArray::from_compute(matrix_shape(p, q), entry.key.out, out))
    })
}

/// `C <- alpha op(A) op(B) + beta C`, computed in C's precision.
///
/// With `beta == 0` the previous contents of C are not read, so NaNs there do
/// not propagate.
pub fn gemm(a: &MPArray, b: &MPArray, c: &mut MPArray, params: GemmParams) -> Result<()> {
    let entry = plan("gemm", &[a, b])?;
    check_placement("gemm", &[c])?;
    if c.precision() < entry.key.out {
        return Err(Error::PrecisionMismatch(format!(
            "gemm target is {} but the inputs promote to {}",
            c.precision(),
            entry.key.out
        )));
    }
    let (ra, ca) = a.dims();
    let (rb, cb) = b.dims();
    let (m, k) = if params.trans_a { (ca, ra) } else { (ra, ca) };
    let (kb, n) = if params.trans_b { (cb, rb) } else { (rb, cb) };
    if k != kb || c.dims() != (m, n) {
        return Err(Error::ShapeMismatch(format!(
            "gemm of {m} x {k} and {kb} x {n} into {:?}",
            c.dims()
        )));
    }
    let target = c.precision();
    with_compute!(target.compute(), T => {
        let mut x = a.to_compute::<T>();
        if params.trans_a {
            x = transpose_buf(&x, ra, ca);
        }
        let mut y = b.to_compute::<T>();
        if params.trans_b {
            y = transpose_buf(&y, rb, cb);
        }
        let mut prod = matmul_kernel(&x, m, k, &y, n);
        let alpha = T::from_f64(params.alpha);
        let beta = T::from_f64(params.beta);
        if params.beta == 0.0 {
            for v in prod.iter_mut() {
                *v *= alpha;
            }
        } else {
            let old = c.to_compute::<T>();
            for (v, &o) in prod.iter_mut().zip(&old) {
                *v = alpha * *v + beta * o;
            }
        }
        *c = MPArray::from_compute(c.shape(), target, prod);
    });
    Ok(())
}

/// In-place upper Cholesky of the `n x n` buffer; the strict lower triangle
/// is zeroed. Only the upper triangle of the input is read.
pub(crate) fn chol_kernel<T: Real>(a: &mut [T], n: usize) -> Result<()> {
    let mut row = vec![T::zero(); n];
    for k in 0..n {
        let pivot = a[k * n + k];
        if pivot.is_nan() || pivot <= T::zero() {
            return Err(Error::NotPositiveDefinite { column: k });
        }
        let ukk = pivot.sqrt();
        a[k * n + k] = ukk;
        for j in k + 1..n {
            let v = a[j * n + k] / ukk;
            a[j * n + k] = v;
            row[j] = v;
        }
        let row = &row;
        for_each_column_from(a, n, k + 1, |j, col| {
            let rj = row[j];
            for (c, &r) in col[k + 1..=j].iter_mut().zip(&row[k + 1..=j]) {
                *c = *c - r * rj;
            }
        });
    }
    for j in 0..n {
        for i in j + 1..n {
            a[j * n + i] = T::zero();
        }
    }
    Ok(())
}

/// Upper triangular `U` with `UᵀU = A`.
pub fn chol(a: &MPArray) -> Result<MPArray> {
    let entry = plan("chol", &[a])?;
    let n = square(a, "chol")?;
    with_compute!(entry.compute, T => {
        let mut x = a.to_compute::<T>();
        chol_kernel(&mut x, n)?;
        Ok(MPArray::from_compute(matrix_shape(n, n), entry.key.out, x))
    })
}

fn check_diagonal<T: Real>(a: &[T], n: usize) -> Result<()> {
    match (0..n).find(|&i| a[i * n + i] == T::zero()) {
        Some(index) => Err(Error::SingularMatrix { index }),
        None => Ok(()),
    }
}

/// Solves `T X = B` in place for triangular `T` (`n x n`), column by column.
/// Only the named triangle of `t` is read.
pub(crate) fn tri_solve_kernel<T: Real>(t: &[T], n: usize, b: &mut [T], lower: bool) {
    for_each_column(b, n, |_, x| {
        if lower {
            for k in 0..n {
                let xk = x[k] / t[k * n + k];
                x[k] = xk;
                axpy(-xk, &t[k * n + k + 1..(k + 1) * n], &mut x[k + 1..]);
            }
        } else {
            for k in (0..n).rev() {
                let xk = x[k] / t[k * n + k];
                x[k] = xk;
                axpy(-xk, &t[k * n..k * n + k], &mut x[..k]);
            }
        }
    });
}

fn triangular_solve(op: &'static str, t: &MPArray, b: &MPArray, lower: bool) -> Result<MPArray> {
    let entry = plan(op, &[t, b])?;
    let n = square(t, op)?;
    let (rb, nrhs) = b.dims();
    if rb != n {
        return Err(Error::ShapeMismatch(format!(
            "'{op}' with a {n} x {n} matrix and {rb} right-hand side rows"
        )));
    }
    with_compute!(entry.compute, T => {
        let tm = t.to_compute::<T>();
        check_diagonal(&tm, n)?;
        let mut x = b.to_compute::<T>();
        tri_solve_kernel(&tm, n, &mut x, lower);
        Ok(MPArray::from_compute(rhs_shape(b, n, nrhs), entry.key.out, x))
    })
}

/// Solves `L X = B` using the lower triangle of `l`.
pub fn forwardsolve(l: &MPArray, b: &MPArray) -> Result<MPArray> {
    triangular_solve("forwardsolve", l, b, true)
}

/// Solves `U X = B` using the upper triangle of `u`.
pub fn backsolve(u: &MPArray, b: &MPArray) -> Result<MPArray> {
    triangular_solve("backsolve", u, b, false)
}

/// Overwrites `b` with the solution of `op(A) X = alpha B` (left) or
/// `X op(A) = alpha B` (right), where `op(A)` is `A` or `Aᵀ`.
///
/// The right-side solve is carried out as the left solve of the transposed
/// system, so it equals `transpose(trsm_left(Aᵀ, Bᵀ))` exactly.
pub fn trsm(
    a: &MPArray,
    b: &mut MPArray,
    side: Side,
    upper: bool,
    trans: bool,
    alpha: f64,
) -> Result<()> {
    let entry = plan("trsm", &[a, b])?;
    if b.precision() < entry.key.out {
        return Err(Error::PrecisionMismatch(format!(
            "trsm target is {} but the inputs promote to {}",
            b.precision(),
            entry.key.out
        )));
    }
    let n = square(a, "trsm")?;
    let (rb, cb) = b.dims();
    let conforming = match side {
        Side::Left => rb == n,
        Side::Right => cb == n,
    };
    if !conforming {
        return Err(Error::ShapeMismatch(format!(
            "trsm ({side:?}) with a {n} x {n} matrix and a {rb} x {cb} right-hand side"
        )));
    }
    let target = b.precision();
    with_compute!(target.compute(), T => {
        let mut am = a.to_compute::<T>();
        check_diagonal(&am, n)?;
        let alpha = T::from_f64(alpha);
        let mut x: Vec<T> = b.to_compute::<T>().into_iter().map(|v| alpha * v).collect();
        // Reduce everything to a left solve with an explicit matrix.
        let transpose_a = match side {
            Side::Left => trans,
            Side::Right => !trans,
        };
        let mut lower = !upper;
        if transpose_a {
            am = transpose_buf(&am, n, n);
            lower = !lower;
        }
        match side {
            Side::Left => tri_solve_kernel(&am, n, &mut x, lower),
            Side::Right => {
                let mut xt = transpose_buf(&x, rb, cb);
                tri_solve_kernel(&am, n, &mut xt, lower);
                x = transpose_buf(&xt, cb, rb);
            }
        }
        *b = MPArray::from_compute(b.shape(), target, x);
    });
    Ok(())
}

/// `(UᵀU)⁻¹` from an upper factor, computed in the compute type.
fn chol2inv_kernel<T: Real>(u: &[T], n: usize) -> Result<Vec<T>> {
    check_diagonal(u, n)?;
    let mut uinv = identity_buf::<T>(n);
    tri_solve_kernel(u, n, &mut uinv, false);
    // (UᵀU)⁻¹ = U⁻¹ U⁻ᵀ = Wᵀ W with W = U⁻ᵀ; dot products make it exactly symmetric.
    let w = transpose_buf(&uinv, n, n);
    Ok(crossprod_kernel(&w, n, n, &w, n))
}

fn identity_buf<T: Real>(n: usize) -> Vec<T> {
    let mut x = vec![T::zero(); n * n];
    for i in 0..n {
        x[i * n + i] = T::one();
    }
    x
}

/// Inverse of `UᵀU` given the upper Cholesky factor `U`.
pub fn chol2inv(u: &MPArray) -> Result<MPArray> {
    let entry = plan("chol2inv", &[u])?;
    let n = square(u, "chol2inv")?;
    with_compute!(entry.compute, T => {
        let inv = chol2inv_kernel(&u.to_compute::<T>(), n)?;
        Ok(MPArray::from_compute(matrix_shape(n, n), entry.key.out, inv))
    })
}

fn is_symmetric<T: Real>(a: &[T], n: usize) -> bool {
    (0..n).all(|j| (0..j).all(|i| a[j * n + i] == a[i * n + j]))
}

/// LU with partial pivoting, solving into `b` (`n x nrhs`).
fn lu_solve_kernel<T: Real>(mut a: Vec<T>, n: usize, b: &mut [T]) -> Result<()> {
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let col = &a[k * n..(k + 1) * n];
        let mut p = k;
        for i in k + 1..n {
            if col[i].abs() > col[p].abs() {
                p = i;
            }
        }
        if a[k * n + p] == T::zero() || a[k * n + p].is_nan() {
            return Err(Error::SingularMatrix { index: k });
        }
        if p != k {
            for j in 0..n {
                a.swap(j * n + k, j * n + p);
            }
            perm.swap(k, p);
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            a[k * n + i] = a[k * n + i] / pivot;
        }
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let lcol = &head[k * n + k + 1..(k + 1) * n];
        for_each_column(tail, n, |_, col| {
            let akj = col[k];
            axpy(-akj, lcol, &mut col[k + 1..]);
        });
    }
    for_each_column(b, n, |_, x| {
        let src: Vec<T> = perm.iter().map(|&p| x[p]).collect();
        x.copy_from_slice(&src);
        // Unit lower, then upper.
        for k in 0..n {
            let xk = x[k];
            axpy(-xk, &a[k * n + k + 1..(k + 1) * n], &mut x[k + 1..]);
        }
        for k in (0..n).rev() {
            let xk = x[k] / a[k * n + k];
            x[k] = xk;
            axpy(-xk, &a[k * n..k * n + k], &mut x[..k]);
        }
    });
    Ok(())
}

/// Solves `A X = B`, or inverts `A` when `b` is `None`.
///
/// Exactly symmetric matrices try Cholesky first; anything else, or a failed
/// factorization, goes through LU with partial pivoting.
pub fn solve(a: &MPArray, b: Option<&MPArray>) -> Result<MPArray> {
    let entry = match b {
        Some(b) => plan("solve", &[a, b])?,
        None => plan("inverse", &[a])?,
    };
    let n = square(a, "solve")?;
    let shape = match b {
        Some(b) => {
            let (rb, cb) = b.dims();
            if rb != n {
                return Err(Error::ShapeMismatch(format!(
                    "solve with a {n} x {n} matrix and {rb} right-hand side rows"
                )));
            }
            rhs_shape(b, n, cb)
        }
        None => matrix_shape(n, n),
    };
    with_compute!(entry.compute, T => {
        let am = a.to_compute::<T>();
        if is_symmetric(&am, n) {
            let mut u = am.clone();
            if chol_kernel(&mut u, n).is_ok() {
                let x = match b {
                    None => chol2inv_kernel(&u, n)?,
                    Some(b) => {
                        let mut x = b.to_compute::<T>();
                        let ut = transpose_buf(&u, n, n);
                        tri_solve_kernel(&ut, n, &mut x, true);
                        tri_solve_kernel(&u, n, &mut x, false);
                        x
                    }
                };
                return Ok(MPArray::from_compute(shape, entry.key.out, x));
            }
        }
        let mut x = match b {
            Some(b) => b.to_compute::<T>(),
            None => identity_buf::<T>(n),
        };
        lu_solve_kernel(am, n, &mut x)?;
        Ok(MPArray::from_compute(shape, entry.key.out, x))
    })
}

/// Thin one-sided Jacobi SVD of a tall `m x n` buffer (`m >= n`).
///
/// Returns `(d, U (m x n), V (n x n))` with `d` sorted descending.
fn jacobi_svd_kernel<T: Real>(
    mut w: Vec<T>,
    m: usize,
    n: usize,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let mut v = identity_buf::<T>(n);
    let u = T::PRECISION.unit_roundoff();
    let tol = T::from_f64(10.0 * u);
    // Columns this small are rounding residue of a rank deficiency; rotating
    // against them only chases noise.
    let fro2 = dot(&w, &w);
    let negligible = T::from_f64((m as f64 * u).powi(2)) * fro2;
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == SVD_MAX_SWEEPS {
            return Err(Error::NoConvergence { iterations: sweeps });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (wp, wq) = (&w[p * m..(p + 1) * m], &w[q * m..(q + 1) * m]);
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                let gamma = dot(wp, wq);
                if gamma == T::zero()
                    || alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, m, p, q, c, s);
                rotate(&mut v, n, p, q, c, s);
            }
        }
    }

    let norms: Vec<T> = (0..n)
        .map(|j| dot(&w[j * m..(j + 1) * m], &w[j * m..(j + 1) * m]).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        norms[j]
            .partial_cmp(&norms[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut d = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(m * n);
    let mut vs = Vec::with_capacity(n * n);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        d.push(s);
        vs.extend_from_slice(&v[j * n..(j + 1) * n]);
        if s * s > negligible {
            u.extend(w[j * m..(j + 1) * m].iter().map(|&x| x / s));
        } else {
            u.extend(std::iter::repeat_n(T::zero(), m));
            missing.push(slot);
        }
    }
    complete_basis(&mut u, m, &missing);
    Ok((d, u, vs))
}

fn rotate<T: Real>(x: &mut [T], rows: usize, p: usize, q: usize, c: T, s: T) {
    let (left, right) = x.split_at_mut(q * rows);
    let xp = &mut left[p * rows..(p + 1) * rows];
    let xq = &mut right[..rows];
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let (ai, bi) = (*a, *b);
        *a = c * ai - s * bi;
        *b = s * ai + c * bi;
    }
}

/// Fills the zero columns listed in `missing` with unit vectors orthogonal
/// to every other column (Gram-Schmidt, applied twice).
fn complete_basis<T: Real>(u: &mut [T], m: usize, missing: &[usize]) {
    let half = T::from_f64(0.5);
    let mut candidate = 0;
    for &slot in missing {
        while candidate < m {
            let mut e = vec![T::zero(); m];
            e[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for j in 0..u.len() / m {
                    if j == slot {
                        continue;
                    }
                    let col = &u[j * m..(j + 1) * m];
                    let proj = dot(col, &e);
                    axpy(-proj, col, &mut e);
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > half {
                for (dst, &x) in u[slot * m..(slot + 1) * m].iter_mut().zip(&e) {
                    *dst = x / norm;
                }
                break;
            }
        }
    }
}

/// Singular value decomposition `A = U diag(d) Vᵀ`.
///
/// `nu` and `nv` select how many left and right singular vectors to return;
/// `-1` means `min(m, n)`.
pub fn svd(a: &MPArray, nu: i64, nv: i64) -> Result<SvdResult> {
    let entry = plan("svd", &[a])?;
    let (m, n) = a.dims();
    let k = m.min(n);
    let pick = |x: i64, name: &str| -> Result<usize> {
        match x {
            -1 => Ok(k),
            x if x >= 0 && (x as usize) <= k => Ok(x as usize),
            _ => Err(Error::InvalidParam(format!(
                "{name} = {x} outside [-1, {k}]"
            ))),
        }
    };
    let nu = pick(nu, "nu")?;
    let nv = pick(nv, "nv")?;
    let out = entry.key.out;
    with_compute!(entry.compute, T => {
        let x = a.to_compute::<T>();
        let (d, u, v) = if m >= n {
            jacobi_svd_kernel(x, m, n)?
        } else {
            let (d, u, v) = jacobi_svd_kernel(transpose_buf(&x, m, n), n, m)?;
            (d, v, u)
        };
        // Both factors have k columns here: U is m x k, V is n x k.
        let u = u[..m * nu].to_vec();
        let v = v[..n * nv].to_vec();
        Ok(SvdResult {
            d: MPArray::from_compute(Shape::Vector(k), out, d),
            u: MPArray::from_compute(matrix_shape(m, nu), out, u),
            v: MPArray::from_compute(matrix_shape(n, nv), out, v),
        })
    })
}

/// `tol(p)` used by postconditions: `100 u max(m, n)`.
pub fn tolerance(p: Precision, m: usize, n: usize) -> f64 {
    100.0 * p.unit_roundoff() * m.max(n) as f64
}

/// Relative Frobenius distance `‖x − reference‖ / ‖reference‖`, in double.
pub fn rel_frobenius_error(x: &MPArray, reference: &MPArray) -> Result<f64> {
    if x.dims() != reference.dims() {
        return Err(Error::ShapeMismatch(format!(
            "comparing {:?} with {:?}",
            x.dims(),
            reference.dims()
        )));
    }
    let (xs, rs) = (x.to_doubles(), reference.to_doubles());
    let num: f64 = xs.iter().zip(&rs).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = rs.iter().map(|b| b * b).sum();
    Ok(if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    })
}
