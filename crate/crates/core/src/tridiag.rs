//! Eigen-solvers for real symmetric tridiagonal matrices.
//!
//! The full decomposition uses the implicit QL algorithm with Wilkinson-style
//! shifts, accumulating plane rotations into the eigenvector matrix. Partial
//! spectra use Sturm-sequence bisection followed by inverse iteration, which
//! costs O(n) per requested pair.

use ndarray::{Array2, ShapeBuilder};

use crate::error::{Error, Result};

const MAX_QL_ITERATIONS: usize = 60;
const INVERSE_ITERATIONS: usize = 4;

/// Eigenpairs sorted by ascending eigenvalue; column `j` of `vectors` belongs to `values[j]`.
#[derive(Debug, Clone)]
pub struct TridiagEigen {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

fn check_shape(diag: &[f64], offdiag: &[f64]) -> Result<()> {
    if diag.is_empty() {
        return Err(Error::Domain("empty tridiagonal matrix".into()));
    }
    if offdiag.len() + 1 != diag.len() {
        return Err(Error::Domain(format!(
            "off-diagonal length {} does not match diagonal length {}",
            offdiag.len(),
            diag.len()
        )));
    }
    Ok(())
}

/// Implicit QL on `d` (diagonal) and `e` (sub-diagonal, `e[i]` couples `i` and `i + 1`,
/// `e[n - 1] == 0`). When `z` is given it holds an `n x n` column-major matrix that
/// receives the rotations.
fn implicit_ql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut shift_total = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::Numeric(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift_total += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (left, right) = z.split_at_mut((i + 1) * n);
                        let col_i = &mut left[i * n..];
                        let col_next = &mut right[..n];
                        for (a, b) in col_i.iter_mut().zip(col_next.iter_mut()) {
                            let t = *b;
                            *b = s * *a + c * t;
                            *a = c * *a - s * t;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_total;
        e[l] = 0.0;
    }
    Ok(())
}

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// All eigenvalues, ascending.
pub fn eigenvalues(diag: &[f64], offdiag: &[f64]) -> Result<Vec<f64>> {
    check_shape(diag, offdiag)?;
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    if n > 1 {
        implicit_ql(&mut d, &mut e, None)?;
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Full eigendecomposition by implicit QL with accumulated rotations.
pub fn full_eigen(diag: &[f64], offdiag: &[f64]) -> Result<TridiagEigen> {
    check_shape(diag, offdiag)?;
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    if n > 1 {
        implicit_ql(&mut d, &mut e, Some(&mut z))?;
    }
    let order = ascending_order(&d);
    let mut sorted = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        sorted[dst * n..(dst + 1) * n].copy_from_slice(&z[src * n..(src + 1) * n]);
    }
    let vectors =
        Array2::from_shape_vec((n, n).f(), sorted).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(TridiagEigen {
        values: order.iter().map(|&i| d[i]).collect(),
        vectors,
    })
}

/// LU factorization of `T - shift I` with partial pivoting (second super-diagonal fill-in).
struct ShiftedLu {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    upper2: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn new(diag: &[f64], offdiag: &[f64], shift: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut lower = offdiag.to_vec();
        let mut upper = offdiag.to_vec();
        let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
        let mut upper2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= lower[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = lower[i] / d[i];
                lower[i] = fact;
                d[i + 1] -= fact * upper[i];
            } else {
                let fact = d[i] / lower[i];
                d[i] = lower[i];
                lower[i] = fact;
                let temp = upper[i];
                upper[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    upper2[i] = upper[i + 1];
                    upper[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        for v in d.iter_mut() {
            if *v == 0.0 {
                *v = tiny;
            }
        }
        Self {
            lower,
            diag: d,
            upper,
            upper2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.lower[i] * b[i];
            } else {
                b[i + 1] -= self.lower[i] * b[i];
            }
        }
        b[n - 1] /= self.diag[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.upper[n - 2] * b[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1] - self.upper2[i] * b[i + 2]) / self.diag[i];
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Number of eigenvalues strictly below `x` (Sturm sequence count).
fn count_below(diag: &[f64], offdiag: &[f64], x: f64, tiny: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let prev = if q.abs() < tiny { tiny } else { q };
        q = diag[i] - x - offdiag[i - 1] * offdiag[i - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `count` lowest eigenvalues by bisection on the Sturm count.
pub fn lowest_eigenvalues(diag: &[f64], offdiag: &[f64], count: usize) -> Result<Vec<f64>> {
    check_shape(diag, offdiag)?;
    let n = diag.len();
    if count == 0 || count > n {
        return Err(Error::Domain(format!(
            "requested {count} eigenvalues of a {n}x{n} matrix"
        )));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let left = if i > 0 { offdiag[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { offdiag[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    lo -= 1e-12 * span;
    hi += 1e-12 * span;
    let tiny = f64::MIN_POSITIVE.sqrt() * span;
    let mut values = Vec::with_capacity(count);
    let mut floor = lo;
    for k in 0..count {
        // Smallest x with count_below(x) > k, i.e. the k-th eigenvalue.
        let (mut a, mut b) = (floor, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_below(diag, offdiag, mid, tiny) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        let value = 0.5 * (a + b);
        values.push(value);
        floor = a;
    }
    Ok(values)
}

/// The `count` lowest eigenpairs: eigenvalues by Sturm bisection, eigenvectors by
/// inverse iteration with re-orthogonalization inside eigenvalue clusters.
pub fn lowest_eigenpairs(diag: &[f64], offdiag: &[f64], count: usize) -> Result<TridiagEigen> {
    check_shape(diag, offdiag)?;
    let n = diag.len();
    if count == 0 || count > n {
        return Err(Error::Domain(format!(
            "requested {count} eigenpairs of a {n}x{n} matrix"
        )));
    }
    if count == n {
        return full_eigen(diag, offdiag);
    }
    let values = lowest_eigenvalues(diag, offdiag, count)?;
    let scale = diag
        .iter()
        .zip(offdiag.iter().chain(std::iter::once(&0.0)))
        .map(|(a, b)| a.abs() + 2.0 * b.abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let cluster_gap = 1e-3 * scale;

    let mut data = vec![0.0; n * count];
    for j in 0..count {
        let lu = ShiftedLu::new(diag, offdiag, values[j], tiny);
        // Deterministic start vector with no special symmetry.
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
            .collect();
        normalize(&mut v);
        for _ in 0..INVERSE_ITERATIONS {
            lu.solve(&mut v);
            for prev in (0..j).rev() {
                if (values[j] - values[prev]).abs() > cluster_gap {
                    break;
                }
                let col = &data[prev * n..(prev + 1) * n];
                let overlap: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(col).for_each(|(x, c)| *x -= overlap * c);
            }
            if normalize(&mut v) == 0.0 || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "inverse iteration broke down for eigenvalue {}",
                    values[j]
                )));
            }
        }
        data[j * n..(j + 1) * n].copy_from_slice(&v);
    }
    let vectors =
        Array2::from_shape_vec((n, count).f(), data).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(TridiagEigen { values, vectors })
}
