//! Exact dense linear algebra over rationals — internal plumbing for form
//! inversion, nondegeneracy checks, and kernel/image computations.

use num::traits::{One, Zero};

use crate::scalar::Q;

pub(crate) fn identity(n: usize) -> Vec<Vec<Q>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Q::one() } else { Q::zero() })
                .collect()
        })
        .collect()
}

pub(crate) fn transpose(m: &[Vec<Q>]) -> Vec<Vec<Q>> {
    if m.is_empty() {
        return Vec::new();
    }
    let rows = m.len();
    let cols = m[0].len();
    (0..cols)
        .map(|j| (0..rows).map(|i| m[i][j].clone()).collect())
        .collect()
}

pub(crate) fn mat_mul(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let n = a.len();
    let inner = if n > 0 { a[0].len() } else { 0 };
    let cols = if b.is_empty() { 0 } else { b[0].len() };
    let mut out = vec![vec![Q::zero(); cols]; n];
    for i in 0..n {
        for (k, aik) in a[i].iter().enumerate().take(inner) {
            if aik.is_zero() {
                continue;
            }
            for j in 0..cols {
                if !b[k][j].is_zero() {
                    out[i][j] += aik.clone() * b[k][j].clone();
                }
            }
        }
    }
    out
}

/// Row vector times matrix: `v · m`.
pub(crate) fn vec_mat(v: &[Q], m: &[Vec<Q>]) -> Vec<Q> {
    let cols = if m.is_empty() { 0 } else { m[0].len() };
    let mut out = vec![Q::zero(); cols];
    for (i, vi) in v.iter().enumerate() {
        if vi.is_zero() {
            continue;
        }
        for j in 0..cols {
            if !m[i][j].is_zero() {
                out[j] += vi.clone() * m[i][j].clone();
            }
        }
    }
    out
}

/// Reduced row echelon form; returns the reduced matrix and pivot columns.
pub(crate) fn rref(m: &[Vec<Q>]) -> (Vec<Vec<Q>>, Vec<usize>) {
    let mut a: Vec<Vec<Q>> = m.to_vec();
    let rows = a.len();
    let cols = if rows > 0 { a[0].len() } else { 0 };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r >= rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = a[r][c].clone();
        for x in &mut a[r] {
            *x /= inv.clone();
        }
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for j in 0..cols {
                    let sub = f.clone() * a[r][j].clone();
                    a[i][j] -= sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

pub(crate) fn rank(m: &[Vec<Q>]) -> usize {
    rref(m).1.len()
}

/// Basis of the row space: the nonzero rows of the reduced form.
pub(crate) fn row_space_basis(m: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let (a, pivots) = rref(m);
    a.into_iter().take(pivots.len()).collect()
}

/// Basis of the right kernel `{x : m·x = 0}`.
pub(crate) fn kernel_basis(m: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let rows = m.len();
    let cols = if rows > 0 { m[0].len() } else { 0 };
    let (a, pivots) = rref(m);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut basis = Vec::new();
    for &f in &free {
        let mut v = vec![Q::zero(); cols];
        v[f] = Q::one();
        for (r, &p) in pivots.iter().enumerate() {
            v[p] = -a[r][f].clone();
        }
        basis.push(v);
    }
    basis
}

/// Inverse of a square matrix, or `None` when singular.
pub(crate) fn invert(m: &[Vec<Q>]) -> Option<Vec<Vec<Q>>> {
    let n = m.len();
    let mut a: Vec<Vec<Q>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n, "matrix must be square");
            let mut r = row.clone();
            r.extend(identity(n)[i].iter().cloned());
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero())?;
        a.swap(c, p);
        let inv = a[c][c].clone();
        for x in &mut a[c] {
            *x /= inv.clone();
        }
        for i in 0..n {
            if i != c && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for j in 0..2 * n {
                    let sub = f.clone() * a[c][j].clone();
                    a[i][j] -= sub;
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n..].to_vec()).collect())
}
