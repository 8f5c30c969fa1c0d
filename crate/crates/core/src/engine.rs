//! Power-iteration diffusion of known embeddings into the unknown block.
//!
//! With the anchor rows of `W` replaced by identity rows, repeated
//! multiplication `Y ← W Y` keeps `Y_p` fixed and drives `Y_q` toward the
//! unique fixed point `(I − W_qq)⁻¹ W_qp Y_p` whenever every unknown vertex
//! draws, through some chain of positive weights, on an anchor.

use nalgebra::{Complex, DMatrix, Schur};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{LsiError, Result};
use crate::graph::first_unreachable;
use crate::par;
use crate::weights::WeightMatrix;

pub const DEFAULT_ETA: f64 = 1e-2;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_INIT_SIGMA: f64 = 0.1;

/// Largest unknown block accepted by [`closed_form_solve`].
pub const CLOSED_FORM_CAP: usize = 4096;
/// Largest matrix accepted by [`spectral_diagnostics`].
pub const SPECTRAL_CAP: usize = 2000;
/// Eigenvalues within this distance of 1 count as unit eigenvalues.
pub const UNIT_EIGEN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImputationConfig {
    /// Stop once the relative ℓ₁ change of `Y_q` falls below this.
    pub eta: f64,
    pub max_iter: usize,
    /// Seed for the Gaussian initialization of `Y_q`.
    pub seed: u64,
    pub init_sigma: f64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            init_sigma: DEFAULT_INIT_SIGMA,
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(LsiError::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_iter == 0 {
            return Err(LsiError::invalid("max_iter must be at least 1"));
        }
        if !self.init_sigma.is_finite() || self.init_sigma < 0.0 {
            return Err(LsiError::invalid(format!(
                "init_sigma must be non-negative, got {}",
                self.init_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    /// `n x s`: the anchor rows followed by the imputed rows.
    pub y: Array2<f64>,
    pub iterations: usize,
    pub final_relative_change: f64,
    pub converged: bool,
    /// Number of leading anchor rows in `y`.
    pub p: usize,
}

impl ImputationResult {
    pub fn q(&self) -> usize {
        self.y.nrows() - self.p
    }

    /// The imputed rows.
    pub fn imputed(&self) -> ndarray::ArrayView2<'_, f64> {
        self.y.slice(ndarray::s![self.p.., ..])
    }
}

/// Replaces rows `0..p` with identity rows.
pub fn fix_known_block(w: &WeightMatrix, p: usize) -> Result<WeightMatrix> {
    let n = w.n();
    if p == 0 {
        return Err(LsiError::NoAnchors);
    }
    if p > n {
        return Err(LsiError::IndexOutOfRange { index: p, len: n });
    }
    let rows = (0..n)
        .map(|i| if i < p { vec![(i, 1.0)] } else { w.row(i).to_vec() })
        .collect();
    Ok(WeightMatrix::from_rows_unchecked(rows))
}

/// Unknown rows split into the constant anchor contribution `W_qp Y_p` and
/// the sparse `W_qq` entries (column indices shifted by `p`).
struct SplitSystem {
    p: usize,
    s: usize,
    anchor_term: Vec<f64>,
    inner: Vec<Vec<(usize, f64)>>,
}

impl SplitSystem {
    fn new(w: &WeightMatrix, y_p: ArrayView2<'_, f64>) -> Result<Self> {
        let n = w.n();
        let (p, s) = y_p.dim();
        if p == 0 {
            return Err(LsiError::NoAnchors);
        }
        if p > n {
            return Err(LsiError::invalid(format!("{p} anchor rows for {n} vertices")));
        }
        for i in 0..p {
            if w.row(i) != [(i, 1.0)] {
                return Err(LsiError::invalid(format!(
                    "row {i} of the anchor block is not an identity row"
                )));
            }
        }
        if let Some(v) = y_p.iter().find(|v| !v.is_finite()) {
            return Err(LsiError::invalid(format!("non-finite anchor value {v}")));
        }
        let q = n - p;
        let mut anchor_term = vec![0.0; q * s];
        par::for_each_chunk_mut(&mut anchor_term, s, |r, out| {
            for &(j, wij) in w.row(p + r) {
                if j < p {
                    for (o, y) in out.iter_mut().zip(y_p.row(j)) {
                        *o += wij * y;
                    }
                }
            }
        });
        let inner = (p..n)
            .map(|i| {
                w.row(i)
                    .iter()
                    .filter(|e| e.0 >= p)
                    .map(|&(j, wij)| (j - p, wij))
                    .collect()
            })
            .collect();
        Ok(Self { p, s, anchor_term, inner })
    }

    fn q(&self) -> usize {
        self.inner.len()
    }

    /// Every unknown vertex must be reachable from an anchor along
    /// positive-weight edges `j -> i` (`w_ij > 0`).
    fn check_reachability(&self, w: &WeightMatrix) -> Result<()> {
        let n = w.n();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in self.p..n {
            for &(j, wij) in w.row(i) {
                if wij > 0.0 {
                    out[j].push(i);
                }
            }
        }
        match first_unreachable(&out, self.p) {
            Some(vertex) => Err(LsiError::Unreachable { vertex }),
            None => Ok(()),
        }
    }

    /// `next = W_qp Y_p + W_qq cur`
    fn step(&self, cur: &[f64], next: &mut [f64]) {
        let s = self.s;
        par::for_each_chunk_mut(next, s, |r, out| {
            out.copy_from_slice(&self.anchor_term[r * s..(r + 1) * s]);
            for &(j, wij) in &self.inner[r] {
                for (o, y) in out.iter_mut().zip(&cur[j * s..(j + 1) * s]) {
                    *o += wij * y;
                }
            }
        });
    }
}

/// Sum of `f(row)` over `width`-sized rows, reduced in row order.
fn ordered_row_sum(data: &[f64], width: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    if width == 0 {
        return 0.0;
    }
    par::map_range(data.len() / width, f).into_iter().sum()
}

/// Runs the diffusion without progress reporting.
pub fn power_iterate(
    w_fixed: &WeightMatrix,
    y_p: ArrayView2<'_, f64>,
    cfg: &ImputationConfig,
) -> Result<ImputationResult> {
    power_iterate_with_progress(w_fixed, y_p, cfg, |_, _| {})
}

/// Like [`power_iterate`], calling `progress(t, rel_change)` after every
/// iteration.
pub fn power_iterate_with_progress(
    w_fixed: &WeightMatrix,
    y_p: ArrayView2<'_, f64>,
    cfg: &ImputationConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<ImputationResult> {
    cfg.validate()?;
    let sys = SplitSystem::new(w_fixed, y_p)?;
    let (p, s, q) = (sys.p, sys.s, sys.q());
    let n = p + q;
    let mut y = Array2::<f64>::zeros((n, s));
    y.slice_mut(ndarray::s![..p, ..]).assign(&y_p);
    if q == 0 {
        return Ok(ImputationResult {
            y,
            iterations: 0,
            final_relative_change: 0.0,
            converged: true,
            p,
        });
    }
    sys.check_reachability(w_fixed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_sigma).expect("sigma validated");
    let mut cur: Vec<f64> = (0..q * s).map(|_| normal.sample(&mut rng)).collect();
    let mut next = vec![0.0; q * s];

    let mut rel = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        sys.step(&cur, &mut next);
        iterations += 1;
        let diff = ordered_row_sum(&next, s, |r| {
            next[r * s..(r + 1) * s]
                .iter()
                .zip(&cur[r * s..(r + 1) * s])
                .map(|(a, b)| (a - b).abs())
                .sum()
        });
        let base = ordered_row_sum(&cur, s, |r| cur[r * s..(r + 1) * s].iter().map(|v| v.abs()).sum());
        if !diff.is_finite() {
            return Err(LsiError::Diverged { iteration: iterations });
        }
        rel = if base > 0.0 { diff / base } else { f64::INFINITY };
        std::mem::swap(&mut cur, &mut next);
        progress(iterations, rel);
        if rel < cfg.eta {
            break;
        }
    }

    for (r, row) in cur.chunks(s.max(1)).enumerate().take(q) {
        y.row_mut(p + r).iter_mut().zip(row).for_each(|(d, v)| *d = *v);
    }
    Ok(ImputationResult {
        y,
        iterations,
        final_relative_change: rel,
        converged: rel < cfg.eta,
        p,
    })
}

/// Fixed point `(I − W_qq)⁻¹ W_qp Y_p` by dense LU. Intended as a reference
/// for checking [`power_iterate`], not for large systems.
pub fn closed_form_solve(w_fixed: &WeightMatrix, y_p: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let sys = SplitSystem::new(w_fixed, y_p)?;
    let (q, s) = (sys.q(), sys.s);
    if q > CLOSED_FORM_CAP {
        return Err(LsiError::TooLarge {
            what: "closed-form solve",
            size: q,
            cap: CLOSED_FORM_CAP,
        });
    }
    if q == 0 {
        return Ok(Array2::zeros((0, s)));
    }
    let mut lhs = DMatrix::<f64>::identity(q, q);
    for (r, row) in sys.inner.iter().enumerate() {
        for &(c, wij) in row {
            lhs[(r, c)] -= wij;
        }
    }
    let rhs = DMatrix::from_row_slice(q, s, &sys.anchor_term);
    let lu = lhs.lu();
    let u_min = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if u_min.is_nan() || u_min <= 1e-14 {
        return Err(LsiError::Singular);
    }
    let sol = lu.solve(&rhs).ok_or(LsiError::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(LsiError::Singular);
    }
    Ok(Array2::from_shape_fn((q, s), |(r, c)| sol[(r, c)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub n: usize,
    pub p: usize,
    /// `ρ(W)` of the unmodified weight matrix.
    pub spectral_radius: f64,
    /// Eigenvalues of the anchor-fixed matrix with `|λ − 1| < 1e-6`.
    pub unit_eigenvalues_fixed: usize,
    /// `ρ(W_qq)`; zero when nothing is unknown.
    pub unknown_block_radius: f64,
}

/// Dense eigenvalue check of the weight matrix before and after fixing the
/// anchor block. Limited to `n ≤ 2000`.
pub fn spectral_diagnostics(w: &WeightMatrix, p: usize) -> Result<SpectralReport> {
    let n = w.n();
    if n > SPECTRAL_CAP {
        return Err(LsiError::TooLarge {
            what: "spectral diagnostics (dense eigendecomposition; diagnostic use only)",
            size: n,
            cap: SPECTRAL_CAP,
        });
    }
    let fixed = fix_known_block(w, p)?;
    let spectral_radius = eigenvalues(w.to_dense())?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let unit_eigenvalues_fixed = eigenvalues(fixed.to_dense())?
        .iter()
        .filter(|z| (*z - Complex::new(1.0, 0.0)).norm() < UNIT_EIGEN_TOL)
        .count();
    let q = n - p;
    let unknown_block_radius = if q == 0 {
        0.0
    } else {
        let block = w.to_dense().view((p, p), (q, q)).clone_owned();
        eigenvalues(block)?.iter().map(|z| z.norm()).fold(0.0, f64::max)
    };
    Ok(SpectralReport {
        n,
        p,
        spectral_radius,
        unit_eigenvalues_fixed,
        unknown_block_radius,
    })
}

/// Eigenvalues via real Schur decomposition.
///
/// Unshifted QR can stall when distinct eigenvalues share a modulus (periodic
/// chains have both 1 and −1), so on failure the matrix is retried with a
/// few diagonal shifts.
pub(crate) fn eigenvalues(m: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    // Deflating at exactly one ulp stalls on clusters of repeated
    // eigenvalues (every anchor row contributes a 1), so allow a few ulps
    // before resorting to shifted retries.
    for shift in [0.0, 0.381_966, -0.271_828, 0.618_034] {
        for ulps in [4.0, 64.0] {
            let shifted = &m + DMatrix::<f64>::identity(n, n) * shift;
            if let Some(schur) = Schur::try_new(shifted, ulps * f64::EPSILON, 100 * n.max(10)) {
                return Ok(schur
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| z - Complex::new(shift, 0.0))
                    .collect());
            }
        }
    }
    Err(LsiError::invalid("Schur decomposition did not converge"))
}
