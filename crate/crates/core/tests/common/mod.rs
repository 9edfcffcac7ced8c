//! Naive reference implementations. Plain loops over `Vec<Vec<f64>>`, no
//! shared code with the library beyond the input matrices.

#![allow(dead_code, clippy::needless_range_loop)]

use ckascope::{RepresentationMatrix, SeededRng};
use ndarray::Array2;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(x: &RepresentationMatrix) -> Mat {
    x.data().rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn to_array(m: &Mat) -> Array2<f64> {
    let n = m.len();
    let p = m[0].len();
    Array2::from_shape_fn((n, p), |(i, j)| m[i][j])
}

pub fn random_matrix(n: usize, p: usize, rng: &mut SeededRng) -> RepresentationMatrix {
    RepresentationMatrix::new(Array2::from_shape_fn((n, p), |_| rng.standard_normal())).unwrap()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn trace(a: &Mat) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

pub fn centering(n: usize) -> Mat {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
                .collect()
        })
        .collect()
}

pub fn linear_kernel(x: &Mat) -> Mat {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
        }
    }
    k
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Median of the sorted pairwise distances.
pub fn median_distance(x: &Mat) -> f64 {
    let mut d = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d.push(sq_dist(&x[i], &x[j]).sqrt());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

pub fn rbf_kernel(x: &Mat, fraction: f64) -> Mat {
    let sigma = fraction * median_distance(x);
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = (-sq_dist(&x[i], &x[j]) / (2.0 * sigma * sigma)).exp();
        }
    }
    k
}

/// `tr(K H L H) / (n-1)²` with an explicit centering matrix.
pub fn hsic(k: &Mat, l: &Mat) -> f64 {
    let n = k.len();
    let h = centering(n);
    let khlh = matmul(&matmul(&matmul(k, &h), l), &h);
    trace(&khlh) / ((n - 1) as f64).powi(2)
}

pub fn cka_from(k: &Mat, l: &Mat) -> f64 {
    hsic(k, l) / (hsic(k, k) * hsic(l, l)).sqrt()
}

/// U-statistic form of the unbiased HSIC estimator, summing over distinct
/// index tuples directly.
pub fn hsic_u_statistic(k: &Mat, l: &Mat) -> f64 {
    let n = k.len();
    let (mut t1, mut t2, mut t3) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            t1 += k[i][j] * l[i][j];
            for q in 0..n {
                if q == i || q == j {
                    continue;
                }
                t3 += k[i][j] * l[i][q];
                for r in 0..n {
                    if r == i || r == j || r == q {
                        continue;
                    }
                    t2 += k[i][j] * l[q][r];
                }
            }
        }
    }
    let nf = n as f64;
    let p2 = nf * (nf - 1.0);
    let p3 = p2 * (nf - 2.0);
    let p4 = p3 * (nf - 3.0);
    t1 / p2 + t2 / p4 - 2.0 * t3 / p3
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(p: usize, rng: &mut SeededRng) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    while cols.len() < p {
        let mut v: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= d * ci;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    transpose(&cols)
}

pub fn random_permutation(p: usize, rng: &mut SeededRng) -> Mat {
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        let j = (rng.uniform() * (i + 1) as f64) as usize;
        order.swap(i, j.min(i));
    }
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| if order[i] == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Linear CKA on column-centered copies, through explicit Gram matrices.
pub fn linear_cka(x: &Mat, y: &Mat) -> f64 {
    cka_from(&linear_kernel(x), &linear_kernel(y))
}

/// Fourth-order central difference of `f` at `y` in entry `(i, j)`.
pub fn central_difference<F: Fn(&Mat) -> f64>(f: &F, y: &Mat, i: usize, j: usize, h: f64) -> f64 {
    let at = |delta: f64| {
        let mut z = y.clone();
        z[i][j] += delta;
        f(&z)
    };
    (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
}
