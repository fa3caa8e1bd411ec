//! Small dense linear-algebra helpers on top of nalgebra: deterministically
//! ordered and sign-fixed decompositions, seeded orthogonal matrices, and an
//! adaptive quadrature routine.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Flip a vector's sign so that its entry of largest magnitude is positive.
/// Ties resolve to the lowest index, which keeps the convention deterministic.
pub fn fix_sign(v: &mut DVector<f64>) -> bool {
    let mut idx = 0;
    let mut best = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

/// SVD with singular values sorted in descending order and sign-fixed left
/// singular vectors (the matching right vector is flipped together with it).
pub struct SortedSvd {
    pub s: Vec<f64>,
    /// Left singular vectors, one column per singular value.
    pub q: Vec<DVector<f64>>,
    /// Right singular vectors.
    pub r: Vec<DVector<f64>>,
}

pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let mut s = Vec::with_capacity(order.len());
    let mut qs = Vec::with_capacity(order.len());
    let mut rs = Vec::with_capacity(order.len());
    for &k in &order {
        s.push(svd.singular_values[k]);
        let mut qk = DVector::from_column_slice(u.column(k).as_slice());
        let mut rk = DVector::from_iterator(vt.ncols(), vt.row(k).iter().copied());
        if fix_sign(&mut qk) {
            rk.neg_mut();
        }
        qs.push(qk);
        rs.push(rk);
    }
    SortedSvd { s, q: qs, r: rs }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and sign-fixed eigenvectors.
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
}

pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut values = Vec::with_capacity(order.len());
    let mut vectors = Vec::with_capacity(order.len());
    for &k in &order {
        values.push(eig.eigenvalues[k]);
        let mut v = DVector::from_column_slice(eig.eigenvectors.column(k).as_slice());
        fix_sign(&mut v);
        vectors.push(v);
    }
    SortedEigen { values, vectors }
}

/// Group sorted values into multiplicity classes: consecutive values whose
/// relative gap is below `rel_tol` are treated as equal.
pub fn multiplicity_of_first(values: &[f64], rel_tol: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let scale = values[0].abs().max(1e-300);
    let mut r = 1;
    for k in 1..values.len() {
        if (values[0] - values[k]).abs() / scale < rel_tol {
            r += 1;
        } else {
            break;
        }
    }
    r
}

/// True when any pair of consecutive sorted values is closer than `rel_tol`
/// relative to the largest magnitude.
pub fn has_near_degeneracy(values: &[f64], rel_tol: f64) -> bool {
    let scale = values
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    values
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() / scale < rel_tol)
}

/// Seeded random orthogonal matrix via QR of a Gaussian matrix, with the
/// diagonal of R made positive so the result is a deterministic function of
/// the RNG stream.
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Condition number estimate from singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().singular_values();
    let max = s.iter().cloned().fold(0.0_f64, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Adaptive Simpson quadrature on [a, b] with a relative tolerance.
/// Recursion splits intervals until the Richardson error estimate is below
/// the budget allotted to the interval.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = whole.abs().max(1e-300);
    simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol * scale, 28)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
    }
}
