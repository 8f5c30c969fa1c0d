//! Lawson–Hanson active-set solver for `min ‖A x − b‖₂ subject to x ≥ 0`.

use nalgebra::{DMatrix, DVector};

/// Relative gradient threshold: a zero-set column with dual value below
/// `GRADIENT_TOL · ‖A‖_F · ‖b‖` cannot improve the objective.
pub const GRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// `‖A x − b‖₂`
    pub residual: f64,
    /// Outer iterations (columns moved into the passive set).
    pub iterations: usize,
}

/// Solves the non-negative least-squares problem for an `m x k` matrix `a`
/// (columns are the candidate atoms) and `m`-vector `b`.
///
/// Runs at most `3k` outer iterations. Each passive-set subproblem is solved
/// through an SVD so duplicate or collinear columns are tolerated.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let (m, k) = a.shape();
    assert_eq!(m, b.len(), "nnls: row count mismatch");
    let mut x = DVector::<f64>::zeros(k);
    if k == 0 || m == 0 {
        return finish(a, b, x, 0);
    }
    let tol = GRADIENT_TOL * a.norm() * b.norm().max(f64::MIN_POSITIVE);
    let max_iter = 3 * k;

    let mut passive = vec![false; k];
    let mut iterations = 0;
    let mut w = a.tr_mul(&(b - a * &x));
    // Columns rejected in this round because they could not enter with a
    // positive coefficient; cleared whenever the passive set changes.
    let mut blocked = vec![false; k];

    while iterations < max_iter {
        let entering = (0..k)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(t) = entering else { break };
        iterations += 1;
        passive[t] = true;

        let mut z = solve_passive(a, b, &passive);
        if z[t] <= 0.0 {
            // Degenerate entry: the column is dependent on the passive set.
            passive[t] = false;
            blocked[t] = true;
            continue;
        }

        loop {
            let infeasible: Vec<usize> = (0..k).filter(|&j| passive[j] && z[j] <= 0.0).collect();
            if infeasible.is_empty() {
                break;
            }
            let (blocking, alpha) = infeasible
                .iter()
                .map(|&j| (j, x[j] / (x[j] - z[j])))
                .fold((usize::MAX, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            for j in 0..k {
                if passive[j] {
                    x[j] += alpha * (z[j] - x[j]);
                }
            }
            x[blocking] = 0.0;
            for j in 0..k {
                if passive[j] && x[j] <= 0.0 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            z = solve_passive(a, b, &passive);
        }
        x = z;
        blocked.iter_mut().for_each(|v| *v = false);
        w = a.tr_mul(&(b - a * &x));
    }
    finish(a, b, x, iterations)
}

fn finish(a: &DMatrix<f64>, b: &DVector<f64>, x: DVector<f64>, iterations: usize) -> NnlsSolution {
    let residual = (a * &x - b).norm();
    NnlsSolution {
        x: x.iter().copied().collect(),
        residual,
        iterations,
    }
}

/// Unconstrained least squares on the passive columns; zero elsewhere.
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let mut z = DVector::<f64>::zeros(passive.len());
    if cols.is_empty() {
        return z;
    }
    let sub = a.select_columns(&cols);
    let svd = sub.svd(true, true);
    let eps = f64::EPSILON * svd.singular_values.max() * (a.nrows().max(cols.len()) as f64);
    let sol = svd.solve(b, eps).expect("u and v_t were computed");
    for (c, &j) in cols.iter().enumerate() {
        z[j] = sol[c];
    }
    z
}
