//! Smallest eigenvalue of a dense Hermitian matrix: Lanczos iteration with
//! full reorthogonalization, plus a QL eigensolver for the projected
//! tridiagonal problem.

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, standard_normal};
use crate::sim::CMatrix;
use num_complex::Complex64;

/// Start-vector seed; fixed so the routine is a pure function of its input.
const START_SEED: u64 = 0x1A2C_3051;

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn random_unit(dim: usize, rng: &mut crate::rng::SeededRng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(standard_normal(rng), standard_normal(rng)))
        .collect();
    let n = norm(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Eigen-decomposition of a symmetric tridiagonal matrix (QL with implicit
/// shifts). `d` holds the diagonal, `e[i]` the coupling between i and i+1
/// (`e[n-1]` ignored). On return `d` is ascending and `z` (row-major, seeded
/// with the identity) holds the eigenvectors in matching columns.
pub(crate) fn tridiagonal_eigen(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 64 {
                    return Err(Error::LanczosNoConvergence {
                        residual: e[l].abs(),
                        iterations: iter,
                    });
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
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;
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
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * h;
                        z[k * n + i] = c * z[k * n + i] - s * h;
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
        d[l] += f;
        e[l] = 0.0;
    }
    // selection sort, ascending, moving eigenvector columns along
    for i in 0..n {
        let mut k = i;
        for j in i + 1..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            for row in 0..n {
                z.swap(row * n + i, row * n + k);
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue of Hermitian `h` with Rayleigh residual below `tol`.
pub fn smallest_eigenvalue(h: &CMatrix, tol: f64) -> Result<f64> {
    let dim = h.dim;
    if dim == 1 {
        return Ok(h.get(0, 0).re);
    }
    let mut rng = rng_from_seed(START_SEED);
    let mut basis: Vec<Vec<Complex64>> = vec![random_unit(dim, &mut rng)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut w = h.matvec(&basis[0]);
    let a0 = dot(&basis[0], &w).re;
    alphas.push(a0);
    for (wi, vi) in w.iter_mut().zip(&basis[0]) {
        *wi -= a0 * vi;
    }

    let mut last_residual = f64::INFINITY;
    for j in 1..=dim {
        // full reorthogonalization against every Lanczos vector, twice
        for _ in 0..2 {
            for v in &basis {
                let proj = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= proj * vi;
                }
            }
        }
        let beta = norm(&w);
        let exhausted = beta < 1e-13;
        if !exhausted && j < dim {
            betas.push(beta);
            let vj: Vec<Complex64> = w.iter().map(|x| x / beta).collect();
            w = h.matvec(&vj);
            let aj = dot(&vj, &w).re;
            alphas.push(aj);
            for (wi, vi) in w.iter_mut().zip(&vj) {
                *wi -= aj * vi;
            }
            let bj = betas[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= bj * vi;
            }
            basis.push(vj);
        }

        let k = alphas.len();
        let check = exhausted || j >= dim || k >= dim || j % 4 == 0 || k <= 32;
        if check {
            let mut d = alphas.clone();
            let mut e = vec![0.0; k];
            e[..k - 1].copy_from_slice(&betas[..k - 1]);
            let mut z = vec![0.0; k * k];
            for i in 0..k {
                z[i * k + i] = 1.0;
            }
            tridiagonal_eigen(&mut d, &mut e, &mut z)?;
            let lambda = d[0];
            // candidate eigenvector in the original space
            let mut v = vec![Complex64::new(0.0, 0.0); dim];
            for (col, basis_vec) in basis.iter().enumerate().take(k) {
                let y = z[col * k]; // component col of eigenvector 0
                for (vi, bi) in v.iter_mut().zip(basis_vec) {
                    *vi += y * bi;
                }
            }
            let hv = h.matvec(&v);
            let residual: f64 = hv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lambda * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            last_residual = residual;
            if residual < tol {
                return Ok(lambda);
            }
        }

        if exhausted {
            if basis.len() >= dim {
                break;
            }
            // invariant subspace hit before convergence: restart with a fresh
            // direction orthogonal to the current basis
            let mut fresh = random_unit(dim, &mut rng);
            for _ in 0..2 {
                for v in &basis {
                    let proj = dot(v, &fresh);
                    for (fi, vi) in fresh.iter_mut().zip(v) {
                        *fi -= proj * vi;
                    }
                }
            }
            let n = norm(&fresh);
            if n < 1e-13 {
                break;
            }
            for x in &mut fresh {
                *x /= n;
            }
            // restart the three-term recurrence from the fresh vector
            betas.push(0.0);
            w = h.matvec(&fresh);
            let aj = dot(&fresh, &w).re;
            alphas.push(aj);
            for (wi, vi) in w.iter_mut().zip(&fresh) {
                *wi -= aj * vi;
            }
            basis.push(fresh);
        }
    }
    Err(Error::LanczosNoConvergence {
        residual: last_residual,
        iterations: basis.len(),
    })
}
