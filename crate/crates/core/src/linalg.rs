//! Small dense linear-algebra helpers shared by the ground-truth and
//! plug-in estimation code. State spaces here are tiny, so everything is
//! dense LU with partial pivoting.

use nalgebra::{DMatrix, DVector};

/// Solve `a x = b`, returning `None` when the factorization is singular or
/// produces non-finite values.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    // One step of iterative refinement.
    let resid = b - a * &x;
    if let Some(dx) = lu.solve(&resid) {
        if dx.iter().all(|v| v.is_finite()) {
            x += dx;
        }
    }
    Some(x)
}

/// True iff the directed graph on `n` nodes with edge predicate `edge` is
/// strongly connected.
pub(crate) fn strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Stationary distribution of a row-stochastic matrix: solves `(Pᵀ − I) π = 0`
/// with the last equation replaced by `Σ π = 1`.
pub(crate) fn stationary(p: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let mut pi = solve(&a, &b)?;
    for v in pi.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = pi.sum();
    if !(total > 0.0) {
        return None;
    }
    pi /= total;
    Some(pi)
}

/// Fundamental-matrix Poisson solution `(I − P + e π)⁻¹ r`.
pub(crate) fn fundamental_solve(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
    r: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = p.nrows();
    let mut a = DMatrix::<f64>::identity(n, n) - p;
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += pi[j];
        }
    }
    solve(&a, r)
}
