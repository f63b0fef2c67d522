//! Small dense linear-algebra kernels: stationary vectors of stochastic matrices,
//! spectral radii and norms, and a symmetric eigensolver. Everything is
//! deterministic; nothing links against an external BLAS/LAPACK.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Iteration cap shared by the power-method routines.
pub const POWER_MAX_ITERS: usize = 100_000;
/// Convergence tolerance on successive normalized iterates.
pub const POWER_TOL: f64 = 1e-12;

/// Left stationary vector of a row-stochastic matrix: `w^T R = w^T`, `w >= 0`,
/// normalized so the entries sum to `m`.
///
/// Power iteration on `R^T` from the uniform vector; the L1 norm is invariant,
/// so the dominant eigenvalue is exactly 1 and only the direction is iterated.
/// Errors with [`Error::Numerical`] if the fixed-point residual does not reach
/// `1e-10 * m` within the iteration cap, which happens when the eigenvalue 1 is
/// not simple (e.g. the influence graph is not rooted).
pub fn left_stationary(r: &Array2<f64>) -> Result<Array1<f64>> {
    stationary(&r.t(), "left stationary vector")
}

/// Right stationary vector of a column-stochastic matrix: `C v = v`, `v >= 0`,
/// entries summing to `m`. Same contract as [`left_stationary`].
pub fn right_stationary(c: &Array2<f64>) -> Result<Array1<f64>> {
    stationary(&c.view(), "right stationary vector")
}

fn stationary(a: &ArrayView2<f64>, what: &str) -> Result<Array1<f64>> {
    let m = a.nrows();
    if m != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what}: matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut w = Array1::from_elem(m, 1.0);
    let mut best = w.clone();
    let mut best_res = f64::INFINITY;
    let mut stale = 0usize;
    for _ in 0..POWER_MAX_ITERS {
        let next = a.dot(&w);
        let sum = next.sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Numerical(format!("{what}: iterate collapsed")));
        }
        let next = next * (m as f64 / sum);
        let res = a
            .dot(&next)
            .iter()
            .zip(next.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        if res < best_res {
            best_res = res;
            best = next.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        let step: f64 = next
            .iter()
            .zip(w.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        w = next;
        // Keep polishing past the iterate tolerance until the residual stalls:
        // downstream identities lean on ~1e-14 accuracy of the fixed point.
        if (step <= POWER_TOL && stale > 50) || best_res == 0.0 {
            break;
        }
    }
    if best_res > 1e-10 * m as f64 {
        return Err(Error::Numerical(format!(
            "{what}: fixed-point residual {best_res:e} after power iteration; \
             eigenvalue 1 may not be simple"
        )));
    }
    Ok(best)
}

/// Spectral radius of a general square matrix.
///
/// Norm-growth doubling: square the matrix repeatedly with max-abs rescaling and
/// accumulate the normalizers, using `rho(A) = lim ||A^(2^J)||^(1/2^J)`. Unlike
/// vector power iteration this converges when the dominant eigenvalues form a
/// complex pair or a Jordan block, which deflated mixing matrices do produce.
/// 48 squarings leave a relative truncation error around 1e-14.
pub fn spectral_radius(a: &Array2<f64>) -> Result<f64> {
    let m = a.nrows();
    if m != a.ncols() {
        return Err(Error::Dimension(format!(
            "spectral radius: matrix is {}x{}",
            m,
            a.ncols()
        )));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    if !scale.is_finite() {
        return Err(Error::Numerical("spectral radius: non-finite entries".into()));
    }
    let mut b = a / scale;
    let mut log_rho = scale.ln();
    let mut weight = 0.5f64;
    for _ in 0..48 {
        b = b.dot(&b);
        let norm = b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if norm == 0.0 {
            // Nilpotent up to rescaling: the true radius is zero.
            return Ok(0.0);
        }
        b /= norm;
        log_rho += weight * norm.ln();
        weight *= 0.5;
    }
    Ok(log_rho.exp())
}

/// Largest singular value of a general matrix, via power iteration on `A^T A`
/// (symmetric positive semidefinite, so the value estimate always converges).
/// The start vector is drawn from a splitmix stream of `seed`.
pub fn spectral_norm(a: &Array2<f64>, seed: u64) -> Result<f64> {
    let n = a.ncols();
    if n == 0 {
        return Ok(0.0);
    }
    let gram = a.t().dot(a);
    let mut z = Array1::from_shape_fn(n, |i| {
        // Deterministic positive start with irregular components.
        0.5 + 0.5 * fract_hash(seed, i as u64)
    });
    let mut norm_z = l2(&z);
    z /= norm_z;
    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITERS {
        let next = gram.dot(&z);
        norm_z = l2(&next);
        if norm_z == 0.0 {
            return Ok(0.0);
        }
        let next = next / norm_z;
        let delta = next
            .iter()
            .zip(z.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        z = next;
        lambda = norm_z;
        if delta <= POWER_TOL {
            break;
        }
    }
    Ok(lambda.max(0.0).sqrt())
}

fn fract_hash(seed: u64, i: u64) -> f64 {
    let mut x = seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn l2(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
/// Input symmetry is enforced by symmetrizing `(A + A^T)/2` first; asymmetry
/// beyond 1e-9 relative is rejected.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Array1<f64>> {
    let m = a.nrows();
    if m != a.ncols() {
        return Err(Error::Dimension(format!(
            "symmetric eigenvalues: matrix is {}x{}",
            m,
            a.ncols()
        )));
    }
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut skew = 0.0f64;
    for i in 0..m {
        for j in 0..i {
            skew = skew.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if scale > 0.0 && skew > 1e-9 * scale {
        return Err(Error::Validation(format!(
            "symmetric eigenvalues: input asymmetry {skew:e} exceeds 1e-9 relative"
        )));
    }
    let mut s = Array2::from_shape_fn((m, m), |(i, j)| 0.5 * (a[(i, j)] + a[(j, i)]));
    if m == 0 {
        return Ok(Array1::zeros(0));
    }

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..m {
            for j in (i + 1)..m {
                off += s[(i, j)] * s[(i, j)];
            }
        }
        if off.sqrt() <= 1e-14 * scale.max(1e-300) {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = s[(p, p)];
                let aqq = s[(q, q)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..m {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..m {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..m).map(|i| s[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    Ok(Array1::from_vec(eig))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn symmetric_min_eigenvalue(a: &Array2<f64>) -> Result<f64> {
    let eig = symmetric_eigenvalues(a)?;
    eig.first().copied().ok_or_else(|| {
        Error::Dimension("symmetric minimum eigenvalue: empty matrix".into())
    })
}

/// Solve the dense linear system `a·x = b` by LU factorization with partial
/// pivoting. Errors with [`Error::Numerical`] when a pivot vanishes, i.e. the
/// matrix is singular to working precision.
pub fn solve_linear(a: &Array2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "linear solve needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has {} entries for a {n}x{n} system",
            b.len()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.to_owned();
    for col in 0..n {
        let mut pivot = col;
        let mut largest = lu[(col, col)].abs();
        for row in col + 1..n {
            let v = lu[(row, col)].abs();
            if v > largest {
                pivot = row;
                largest = v;
            }
        }
        if !(largest > 0.0) || !largest.is_finite() {
            return Err(Error::Numerical(format!("singular system at pivot {col}")));
        }
        if pivot != col {
            for c in col..n {
                lu.swap((col, c), (pivot, c));
            }
            x.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = lu[(row, col)] / lu[(col, col)];
            if factor == 0.0 {
                continue;
            }
            for c in col + 1..n {
                lu[(row, c)] -= factor * lu[(col, c)];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= lu[(col, col)];
        for row in 0..col {
            x[row] -= lu[(row, col)] * x[col];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn stationary_of_two_node_averaging_matrix_is_uniform() {
        let r = array![[0.5, 0.5], [0.5, 0.5]];
        let u = left_stationary(&r).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12 && (u[1] - 1.0).abs() < 1e-12, "u = {u}");
        let v = right_stationary(&r).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn stationary_detects_nonuniform_weights() {
        // Row-stochastic with a heavier self-loop at node 0.
        let r = array![[0.9, 0.1], [0.5, 0.5]];
        let u = left_stationary(&r).unwrap();
        // u^T R = u^T => u0 * 0.9 + u1 * 0.5 = u0, with u0 + u1 = 2 => u0 = 5/3.
        assert!((u[0] - 5.0 / 3.0).abs() < 1e-12, "u = {u}");
        let res = (u[0] * 0.9 + u[1] * 0.5 - u[0]).abs();
        assert!(res < 1e-14, "residual {res:e}");
    }

    #[test]
    fn spectral_radius_handles_rotation_blocks() {
        // Pure rotation scaled by 0.8: eigenvalues 0.8 e^{±i pi/4}.
        let th = std::f64::consts::FRAC_PI_4;
        let a = array![
            [0.8 * th.cos(), -0.8 * th.sin()],
            [0.8 * th.sin(), 0.8 * th.cos()]
        ];
        let rho = spectral_radius(&a).unwrap();
        assert!((rho - 0.8).abs() < 1e-12, "rho = {rho}");
    }

    #[test]
    fn spectral_radius_of_nilpotent_is_zero() {
        let a = array![[0.0, 1.0], [0.0, 0.0]];
        assert_eq!(spectral_radius(&a).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_of_jordan_block() {
        let a = array![[0.5, 1.0], [0.0, 0.5]];
        let rho = spectral_radius(&a).unwrap();
        assert!((rho - 0.5).abs() < 1e-10, "rho = {rho}");
    }

    #[test]
    fn spectral_norm_matches_hand_value() {
        // A^T A = [[25, 20], [20, 25]] has eigenvalues 45 and 5, so the
        // largest singular value is sqrt(45).
        let a = array![[3.0, 0.0], [4.0, 5.0]];
        let s = spectral_norm(&a, 7).unwrap();
        assert!((s - 45.0f64.sqrt()).abs() < 1e-9, "sigma = {s}");
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]];
        // Tridiagonal toeplitz: 2 + 2cos(k pi / 4), k = 1..3.
        let eig = symmetric_eigenvalues(&a).unwrap();
        let expect = [2.0 - 2.0f64.sqrt(), 2.0, 2.0 + 2.0f64.sqrt()];
        for (e, x) in eig.iter().zip(expect.iter()) {
            assert!((e - x).abs() < 1e-12, "eig {eig}");
        }
    }

    #[test]
    fn jacobi_rejects_asymmetric_input() {
        let a = array![[0.0, 1.0], [-1.0, 0.0]];
        assert!(symmetric_eigenvalues(&a).is_err());
    }

    #[test]
    fn min_eigenvalue_of_psd_gram_is_nonnegative() {
        let g = array![[1.0, 2.0, 0.5], [0.0, 1.0, -1.0]];
        let c = g.t().dot(&g);
        let lo = symmetric_min_eigenvalue(&c).unwrap();
        assert!(lo > -1e-12, "lambda_min = {lo}");
    }

    #[test]
    fn linear_solve_recovers_a_known_solution() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]];
        let truth = array![1.0, -2.0, 0.5];
        let b = a.dot(&truth);
        let x = solve_linear(&a, b.view()).unwrap();
        for (xi, ti) in x.iter().zip(truth.iter()) {
            assert!((xi - ti).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn linear_solve_pivots_through_a_zero_diagonal() {
        // Requires a row swap at the first pivot.
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let x = solve_linear(&a, array![3.0, 7.0].view()).unwrap();
        assert_eq!(x, array![7.0, 3.0]);
    }

    #[test]
    fn linear_solve_handles_skew_systems() {
        // (A + I)x = (1, 1) has the solution (0, 1).
        let a = array![[1.0, 1.0], [-1.0, 1.0]];
        let x = solve_linear(&a, array![1.0, 1.0].view()).unwrap();
        assert!(x[0].abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15, "x = {x}");
    }

    #[test]
    fn linear_solve_rejects_singular_and_misshapen_input() {
        let singular = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(solve_linear(&singular, array![1.0, 1.0].view()).is_err());
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(solve_linear(&a, array![1.0, 2.0, 3.0].view()).is_err());
    }
}
