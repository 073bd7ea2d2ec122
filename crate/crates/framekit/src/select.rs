//! Incoherent row selection from unital matrices: the iterative reweighted
//! l1 relaxation, greedy support reduction, and swap local search, plus the
//! circulant-structure utilities (shift/multiplier equivalence classes and
//! the complement identity) for Fourier sources.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{self, ConeKind, ConeProgram, SolveStatus, SolverSettings, SparseMatrix};
use crate::error::{Error, Result};
use crate::frame::{Field, Frame, C64};
use crate::linalg::derive_seed;

/// A row subset of an n x n unital matrix, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SelectionPattern {
    pub n: usize,
    pub indices: Vec<usize>,
}

impl SelectionPattern {
    pub fn new(n: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.iter().any(|&k| k >= n) {
            return Err(Error::InvalidParameter(format!(
                "selection index out of range for n = {n}"
            )));
        }
        Ok(SelectionPattern { n, indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Binary vector form.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &k in &self.indices {
            mask[k] = true;
        }
        mask
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Fourier,
    Hadamard,
    Custom,
}

/// The reduced linear operator mapping a selection vector to the distinct
/// off-diagonal Gram magnitudes of the selected frame.
///
/// Rows are stored column-major (re/im planes) so that single-column
/// updates, the workhorse of the greedy and local-search steps, touch
/// contiguous memory.
pub struct CoherenceOperator {
    source: SourceKind,
    n: usize,
    nrows: usize,
    col_re: Vec<f64>,
    col_im: Vec<f64>,
    /// Reduced row -> Gram index pairs it represents.
    multiplicity: Vec<Vec<(usize, usize)>>,
    /// The source matrix itself (kept for materialization).
    matrix: DMatrix<C64>,
    /// Count of from-scratch applications, kept to verify that the search
    /// steps work incrementally.
    full_applies: AtomicU64,
}

impl Clone for CoherenceOperator {
    fn clone(&self) -> Self {
        CoherenceOperator {
            source: self.source,
            n: self.n,
            nrows: self.nrows,
            col_re: self.col_re.clone(),
            col_im: self.col_im.clone(),
            multiplicity: self.multiplicity.clone(),
            matrix: self.matrix.clone(),
            full_applies: AtomicU64::new(0),
        }
    }
}

/// Sylvester Hadamard matrix of order n = 2^k.
pub fn sylvester_hadamard(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::UnsupportedHadamardOrder(n));
    }
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                let v = h[(i, j)];
                next[(i, j)] = v;
                next[(i, j + k)] = v;
                next[(i + k, j)] = v;
                next[(i + k, j + k)] = -v;
            }
        }
        h = next;
    }
    Ok(h)
}

impl CoherenceOperator {
    /// Conjugate Fourier rows at frequencies 1..floor(n/2); the circulant
    /// Gram of a harmonic selection makes these the only distinct moduli.
    pub fn fourier(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimensions("fourier source needs n >= 2".into()));
        }
        let nrows = n / 2;
        let mut col_re = vec![0.0; nrows * n];
        let mut col_im = vec![0.0; nrows * n];
        for k in 0..n {
            for r in 0..nrows {
                let angle = 2.0 * std::f64::consts::PI * ((r + 1) as f64) * (k as f64) / n as f64;
                col_re[k * nrows + r] = angle.cos();
                col_im[k * nrows + r] = angle.sin();
            }
        }
        let mut multiplicity = vec![Vec::new(); nrows];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = j - i;
                let r = d.min(n - d);
                if r >= 1 && r <= nrows {
                    multiplicity[r - 1].push((i, j));
                }
            }
        }
        let matrix = DMatrix::from_fn(n, n, |j, k| {
            let angle = -2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / n as f64;
            C64::from_polar(1.0, angle)
        });
        Ok(CoherenceOperator {
            source: SourceKind::Fourier,
            n,
            nrows,
            col_re,
            col_im,
            multiplicity,
            matrix,
            full_applies: AtomicU64::new(0),
        })
    }

    /// Built-in Sylvester construction; other orders must come in as a
    /// user-supplied matrix via [`CoherenceOperator::hadamard_matrix`].
    pub fn hadamard(n: usize) -> Result<Self> {
        let h = sylvester_hadamard(n)?;
        Self::hadamard_matrix(&h.map(|x| C64::new(x, 0.0)))
    }

    /// Wraps a caller-supplied Hadamard matrix after validating +-1 entries
    /// and orthogonal rows.
    pub fn hadamard_matrix(matrix: &DMatrix<C64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidSource("hadamard matrix must be square".into()));
        }
        for z in matrix.iter() {
            if z.im != 0.0 || (z.re.abs() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSource(
                    "hadamard entries must be exactly +-1".into(),
                ));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += matrix[(i, k)].re * matrix[(j, k)].re;
                }
                if acc.abs() > 1e-9 * n as f64 {
                    return Err(Error::InvalidSource(format!(
                        "hadamard rows {i} and {j} are not orthogonal"
                    )));
                }
            }
        }
        Self::from_unital(matrix.clone(), SourceKind::Hadamard)
    }

    /// Arbitrary unital source: entries must have modulus one.
    pub fn custom(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidSource("custom source must be square".into()));
        }
        for z in matrix.iter() {
            if (z.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidSource(
                    "custom source entries must have modulus 1".into(),
                ));
            }
        }
        Self::from_unital(matrix, SourceKind::Custom)
    }

    /// Generic construction: deduplicated elementwise pair products
    /// conj(col_k) o col_l over column pairs k < l, canonicalized up to a
    /// unit-modulus factor and conjugation (neither changes the modulus of
    /// the linear form on real selection vectors).
    fn from_unital(matrix: DMatrix<C64>, source: SourceKind) -> Result<Self> {
        use std::collections::HashMap;
        let n = matrix.nrows();
        let quant = |x: f64| (x * 1e9).round() as i64;
        let mut keys: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
        let mut rows: Vec<Vec<C64>> = Vec::new();
        let mut multiplicity: Vec<Vec<(usize, usize)>> = Vec::new();
        for k in 0..n {
            for l in (k + 1)..n {
                let v: Vec<C64> = (0..n)
                    .map(|i| matrix[(i, k)].conj() * matrix[(i, l)])
                    .collect();
                // canonical phase: make the first entry 1
                let phase = v[0].conj() / v[0].norm();
                let w: Vec<C64> = v.iter().map(|z| z * phase).collect();
                let enc = |u: &[C64]| -> Vec<(i64, i64)> {
                    u.iter().map(|z| (quant(z.re), quant(z.im))).collect()
                };
                let a = enc(&w);
                let b = enc(&w.iter().map(|z| z.conj()).collect::<Vec<_>>());
                let key = a.clone().min(b);
                match keys.get(&key) {
                    Some(&r) => multiplicity[r].push((k, l)),
                    None => {
                        let r = rows.len();
                        keys.insert(key, r);
                        rows.push(w);
                        multiplicity.push(vec![(k, l)]);
                    }
                }
            }
        }
        let nrows = rows.len();
        let mut col_re = vec![0.0; nrows * n];
        let mut col_im = vec![0.0; nrows * n];
        for (r, row) in rows.iter().enumerate() {
            for k in 0..n {
                col_re[k * nrows + r] = row[k].re;
                col_im[k * nrows + r] = row[k].im;
            }
        }
        Ok(CoherenceOperator {
            source,
            n,
            nrows,
            col_re,
            col_im,
            multiplicity,
            matrix,
            full_applies: AtomicU64::new(0),
        })
    }

    pub fn source(&self) -> SourceKind {
        self.source
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reduced_rows(&self) -> usize {
        self.nrows
    }

    pub fn multiplicity(&self, row: usize) -> &[(usize, usize)] {
        &self.multiplicity[row]
    }

    pub fn full_apply_count(&self) -> u64 {
        self.full_applies.load(Ordering::Relaxed)
    }

    /// F * 1_K from scratch (instrumented; the search routines are expected
    /// to call this once and update incrementally afterwards).
    pub fn apply_full(&self, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
        self.full_applies.fetch_add(1, Ordering::Relaxed);
        let mut re = vec![0.0; self.nrows];
        let mut im = vec![0.0; self.nrows];
        for &k in indices {
            self.add_column(&mut re, &mut im, k);
        }
        (re, im)
    }

    #[inline]
    pub fn add_column(&self, re: &mut [f64], im: &mut [f64], k: usize) {
        let base = k * self.nrows;
        for r in 0..self.nrows {
            re[r] += self.col_re[base + r];
            im[r] += self.col_im[base + r];
        }
    }

    #[inline]
    pub fn sub_column(&self, re: &mut [f64], im: &mut [f64], k: usize) {
        let base = k * self.nrows;
        for r in 0..self.nrows {
            re[r] -= self.col_re[base + r];
            im[r] -= self.col_im[base + r];
        }
    }

    /// Squared infinity norm of the accumulated linear form.
    #[inline]
    pub fn inf_norm_sq(&self, re: &[f64], im: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for r in 0..self.nrows {
            let v = re[r] * re[r] + im[r] * im[r];
            if v > best {
                best = v;
            }
        }
        best
    }

    /// Squared infinity norm, aborting once the running maximum reaches
    /// `bound_sq` (callers scanning for an improvement discard such values).
    #[inline]
    fn inf_norm_sq_bounded(&self, re: &[f64], im: &[f64], bound_sq: f64) -> f64 {
        let mut best = 0.0f64;
        for r in 0..self.nrows {
            let v = re[r] * re[r] + im[r] * im[r];
            if v > best {
                best = v;
                if best >= bound_sq {
                    return best;
                }
            }
        }
        best
    }

    /// Squared infinity norm with a single extra column added, aborting as
    /// soon as the running maximum exceeds `bound_sq` (the caller only needs
    /// to know it is not an improvement).
    #[inline]
    fn inf_norm_sq_plus_col(&self, re: &[f64], im: &[f64], k: usize, bound_sq: f64) -> f64 {
        let base = k * self.nrows;
        let mut best = 0.0f64;
        for r in 0..self.nrows {
            let a = re[r] + self.col_re[base + r];
            let b = im[r] + self.col_im[base + r];
            let v = a * a + b * b;
            if v > best {
                best = v;
                if best >= bound_sq {
                    return best;
                }
            }
        }
        best
    }

    /// As above but with the column removed.
    #[inline]
    fn inf_norm_sq_minus_col(&self, re: &[f64], im: &[f64], k: usize, bound_sq: f64) -> f64 {
        let base = k * self.nrows;
        let mut best = 0.0f64;
        for r in 0..self.nrows {
            let a = re[r] - self.col_re[base + r];
            let b = im[r] - self.col_im[base + r];
            let v = a * a + b * b;
            if v > best {
                best = v;
                if best >= bound_sq {
                    return best;
                }
            }
        }
        best
    }

    /// Materializes the normalized selected frame (rows of the source over
    /// sqrt(m)).
    pub fn materialize(&self, pattern: &SelectionPattern) -> Result<Frame> {
        if pattern.is_empty() {
            return Err(Error::InvalidDimensions("empty selection".into()));
        }
        let m = pattern.len();
        let scale = 1.0 / (m as f64).sqrt();
        let data = DMatrix::from_fn(m, self.n, |r, c| {
            self.matrix[(pattern.indices[r], c)] * scale
        });
        let field = if data.iter().all(|z| z.im == 0.0) {
            Field::Real
        } else {
            Field::Complex
        };
        Frame::new(field, data)
    }
}

/// m^-1 || F 1_K ||_inf, the mutual coherence of the selected frame.
pub fn selection_coherence(op: &CoherenceOperator, pattern: &SelectionPattern) -> Result<f64> {
    if pattern.is_empty() {
        return Err(Error::InvalidDimensions("selection needs m >= 1".into()));
    }
    let (re, im) = op.apply_full(&pattern.indices);
    Ok(op.inf_norm_sq(&re, &im).sqrt() / pattern.len() as f64)
}

/// Gram pair attaining the selection coherence, mapped back through the
/// row-deduplication multiplicity.
pub fn selection_argmax_pair(
    op: &CoherenceOperator,
    pattern: &SelectionPattern,
) -> Result<(usize, usize)> {
    if pattern.is_empty() {
        return Err(Error::InvalidDimensions("selection needs m >= 1".into()));
    }
    let (re, im) = op.apply_full(&pattern.indices);
    let mut best = (0usize, -1.0f64);
    for r in 0..op.reduced_rows() {
        let v = re[r] * re[r] + im[r] * im[r];
        if v > best.1 {
            best = (r, v);
        }
    }
    Ok(op.multiplicity(best.0).first().copied().unwrap_or((0, 0)))
}

/// Weight update rules for the reweighted l1 rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// w_k = 1 - g_k
    OneMinusG,
    /// w_k = (g_k + eps)^-1
    InverseMagnitude(f64),
    /// w_k = 1 - g_k / ||g||_inf
    OneMinusGOverInf,
}

/// Algorithm parameters for the row-selection search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicConfig {
    /// Reweighting rounds per restart.
    pub irl1_iters: usize,
    /// l1 weight; defaults to 1/m when unset.
    pub lambda: Option<f64>,
    /// |K0| = ceil(zeta * (n - m)) indices forced to zero per restart.
    pub zeta: f64,
    /// Swap width of the local search; defaults by problem size when unset.
    pub local_search_width: Option<usize>,
    /// Support threshold applied to the relaxed solution.
    pub support_epsilon: f64,
    /// Number of random restarts.
    pub runs: usize,
    pub weight_rule: WeightRule,
    pub rng_seed: u64,
    /// Repeat local-search passes until no swap improves.
    pub local_search_fixpoint: bool,
    /// Stop restarting once this coherence has been reached.
    pub stop_at: Option<f64>,
    #[serde(skip)]
    pub solver: SolverSettings,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        HarmonicConfig {
            irl1_iters: 7,
            lambda: None,
            zeta: 0.1,
            local_search_width: None,
            support_epsilon: 1e-3,
            runs: 500,
            weight_rule: WeightRule::OneMinusG,
            rng_seed: 0,
            local_search_fixpoint: true,
            stop_at: None,
            solver: SolverSettings::default(),
        }
    }
}

/// Default swap width by ambient size.
pub fn default_local_width(n: usize) -> usize {
    if n <= 40 {
        4
    } else if n < 128 {
        3
    } else {
        2
    }
}

/// One round of the convex relaxation with fixed weights: minimize
/// m^-1 ||F g||_inf + lambda w'g subject to g_0 = 1, sum_{k>=1} g_k = m - 1,
/// g = 0 on K0, 0 <= g <= 1.
fn relax_round(
    op: &CoherenceOperator,
    m: usize,
    lambda: f64,
    weights: &[f64],
    k0: &[usize],
    solver: &SolverSettings,
) -> Result<Vec<f64>> {
    let n = op.n();
    let is_zero = {
        let mut z = vec![false; n];
        for &k in k0 {
            z[k] = true;
        }
        z
    };
    let free: Vec<usize> = (1..n).filter(|&k| !is_zero[k]).collect();
    let nf = free.len();
    let t_var = nf;
    let num_vars = nf + 1;
    let inv_m = 1.0 / m as f64;

    let mut objective = vec![0.0; num_vars];
    objective[t_var] = 1.0;
    for (slot, &k) in free.iter().enumerate() {
        objective[slot] = lambda * weights[k];
    }
    let mut program = ConeProgram::new(num_vars, objective);
    program.add_equality(free.iter().enumerate().map(|(s, _)| (s, 1.0)).collect(), (m - 1) as f64);

    // box 0 <= g <= 1
    let mut box_block = SparseMatrix::empty(num_vars);
    let mut box_off = Vec::with_capacity(2 * nf);
    for slot in 0..nf {
        box_block.push_row(vec![(slot, 1.0)]);
        box_off.push(0.0);
    }
    for slot in 0..nf {
        box_block.push_row(vec![(slot, -1.0)]);
        box_off.push(1.0);
    }
    program.add_block(ConeKind::Nonnegative, box_block, box_off);

    // epigraph rows, one per reduced row; real rows use an orthant pair
    let nrows = op.reduced_rows();
    for r in 0..nrows {
        let coef = |k: usize| (op.col_re[k * nrows + r], op.col_im[k * nrows + r]);
        let (c0re, c0im) = coef(0); // g_0 = 1 contribution
        let row_is_real = (0..n).all(|k| coef(k).1.abs() <= 1e-13);
        if row_is_real {
            let mut block = SparseMatrix::empty(num_vars);
            let mut plus = vec![(t_var, 1.0)];
            let mut minus = vec![(t_var, 1.0)];
            for (slot, &k) in free.iter().enumerate() {
                let (cr, _) = coef(k);
                if cr != 0.0 {
                    plus.push((slot, -inv_m * cr));
                    minus.push((slot, inv_m * cr));
                }
            }
            block.push_row(plus);
            block.push_row(minus);
            program.add_block(
                ConeKind::Nonnegative,
                block,
                vec![-inv_m * c0re, inv_m * c0re],
            );
        } else {
            let mut block = SparseMatrix::empty(num_vars);
            block.push_row(vec![(t_var, 1.0)]);
            let mut row_re = Vec::new();
            let mut row_im = Vec::new();
            for (slot, &k) in free.iter().enumerate() {
                let (cr, ci) = coef(k);
                if cr != 0.0 {
                    row_re.push((slot, inv_m * cr));
                }
                if ci != 0.0 {
                    row_im.push((slot, inv_m * ci));
                }
            }
            block.push_row(row_re);
            block.push_row(row_im);
            program.add_block(
                ConeKind::SecondOrder,
                block,
                vec![0.0, inv_m * c0re, inv_m * c0im],
            );
        }
    }

    let sol = cone::solve_with(&program, solver);
    if sol.status != SolveStatus::Optimal {
        return Err(Error::MalformedProgram(format!(
            "relaxation solve ended with status {:?}",
            sol.status
        )));
    }
    let mut g = vec![0.0; n];
    g[0] = 1.0;
    for (slot, &k) in free.iter().enumerate() {
        g[k] = sol.primal[slot].clamp(0.0, 1.0);
    }
    Ok(g)
}

/// Iteratively reweighted l1 relaxation: K rounds of the convex problem with
/// the diagonal weights refreshed from the previous solution.
pub fn irl1_relax(
    op: &CoherenceOperator,
    m: usize,
    config: &HarmonicConfig,
    k0: &[usize],
) -> Result<Vec<f64>> {
    let n = op.n();
    if m < 1 || m >= n {
        return Err(Error::InvalidDimensions(format!(
            "selection size m = {m} must satisfy 1 <= m < n = {n}"
        )));
    }
    if k0.len() > n - m {
        return Err(Error::InfeasibleSelection {
            k0: k0.len(),
            slack: n - m,
        });
    }
    if k0.iter().any(|&k| k == 0 || k >= n) {
        return Err(Error::InvalidParameter(
            "K0 must be a subset of {1,...,n-1}".into(),
        ));
    }
    let lambda = config.lambda.unwrap_or(1.0 / m as f64);
    let mut weights = vec![1.0; n];
    let mut g = vec![0.0; n];
    for _ in 0..config.irl1_iters.max(1) {
        g = relax_round(op, m, lambda, &weights, k0, &config.solver)?;
        let sup = g.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        for k in 0..n {
            weights[k] = match config.weight_rule {
                WeightRule::OneMinusG => 1.0 - g[k],
                WeightRule::InverseMagnitude(eps) => 1.0 / (g[k] + eps),
                WeightRule::OneMinusGOverInf => 1.0 - g[k] / sup,
            };
        }
    }
    Ok(g)
}

/// Thresholds the relaxed solution and greedily adjusts the support to size
/// m, evaluating every candidate through incremental single-column updates.
pub fn extract_and_reduce(
    op: &CoherenceOperator,
    g: &[f64],
    m: usize,
    support_epsilon: f64,
) -> Result<SelectionPattern> {
    let n = op.n();
    let mut support: Vec<usize> = (0..n).filter(|&k| g[k] > support_epsilon).collect();
    if support.is_empty() {
        support.push(0);
    }
    let (mut re, mut im) = op.apply_full(&support);

    while support.len() > m {
        let mut best: Option<(f64, usize, usize)> = None; // (norm_sq, pos, index)
        for (pos, &k) in support.iter().enumerate() {
            let bound = best.map_or(f64::INFINITY, |(b, _, _)| b);
            let v = op.inf_norm_sq_minus_col(&re, &im, k, bound);
            if best.map_or(true, |(b, _, _)| v < b) {
                best = Some((v, pos, k));
            }
        }
        let (_, pos, k) = best.expect("support nonempty");
        op.sub_column(&mut re, &mut im, k);
        support.remove(pos);
    }

    while support.len() < m {
        let in_support = {
            let mut mask = vec![false; n];
            for &k in &support {
                mask[k] = true;
            }
            mask
        };
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n {
            if in_support[k] {
                continue;
            }
            let bound = best.map_or(f64::INFINITY, |(b, _)| b);
            let v = op.inf_norm_sq_plus_col(&re, &im, k, bound);
            if best.map_or(true, |(b, _)| v < b) {
                best = Some((v, k));
            }
        }
        let (_, k) = best.expect("candidates exist");
        op.add_column(&mut re, &mut im, k);
        support.push(k);
        support.sort_unstable();
    }

    SelectionPattern::new(n, support)
}

/// Exhaustive swap search of width `width` around a pattern: every subset
/// Z of the pattern with |Z| = width may be replaced by any equally sized
/// subset of the complement (the identity swap is always a candidate, so the
/// result is never worse than the input). Passes repeat until no strict
/// improvement when `fixpoint` is set.
pub fn local_search(
    op: &CoherenceOperator,
    pattern: &SelectionPattern,
    width: usize,
    fixpoint: bool,
) -> Result<SelectionPattern> {
    let m = pattern.len();
    if m == 0 {
        return Err(Error::InvalidDimensions("empty pattern".into()));
    }
    let width = width.min(m.saturating_sub(1));
    if width == 0 {
        return Ok(pattern.clone());
    }
    let n = op.n();
    let nrows = op.reduced_rows();
    let mut current = pattern.indices.clone();

    loop {
        let (base_re, base_im) = op.apply_full(&current);
        let base_norm = op.inf_norm_sq(&base_re, &base_im);
        // Strict-improvement floor: swaps within round-off of the incumbent
        // do not count, which also guarantees the fixpoint loop terminates.
        let floor = base_norm - 1e-12 * base_norm.max(1.0);

        let in_k = {
            let mut mask = vec![false; n];
            for &k in &current {
                mask[k] = true;
            }
            mask
        };
        let k_c: Vec<usize> = (0..n).filter(|&k| !in_k[k]).collect();

        // depth buffers for the Z (removal) recursion
        let mut z_re = vec![vec![0.0; nrows]; width + 1];
        let mut z_im = vec![vec![0.0; nrows]; width + 1];
        z_re[0].copy_from_slice(&base_re);
        z_im[0].copy_from_slice(&base_im);
        let mut z_stack: Vec<usize> = Vec::with_capacity(width);
        let mut a_re = vec![vec![0.0; nrows]; width + 1];
        let mut a_im = vec![vec![0.0; nrows]; width + 1];
        let mut a_stack: Vec<usize> = Vec::with_capacity(width);

        let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;

        // iterative enumeration via recursion
        struct Ctx<'a> {
            op: &'a CoherenceOperator,
            current: &'a [usize],
            k_c: &'a [usize],
            width: usize,
        }
        fn a_rec(
            ctx: &Ctx,
            cand: &[usize],
            start: usize,
            depth: usize,
            a_re: &mut [Vec<f64>],
            a_im: &mut [Vec<f64>],
            a_stack: &mut Vec<usize>,
            z_stack: &[usize],
            best: &mut Option<(f64, Vec<usize>, Vec<usize>)>,
            improvement_floor: f64,
        ) {
            if depth == ctx.width {
                let bound = best.as_ref().map_or(improvement_floor, |(b, _, _)| *b);
                let v = ctx.op.inf_norm_sq_bounded(&a_re[depth], &a_im[depth], bound);
                if v < bound {
                    *best = Some((v, z_stack.to_vec(), a_stack.clone()));
                }
                return;
            }
            for pos in start..cand.len() {
                if cand.len() - pos < ctx.width - depth {
                    break;
                }
                let k = cand[pos];
                let (lo, hi) = a_re.split_at_mut(depth + 1);
                hi[0].copy_from_slice(&lo[depth]);
                let (lo_i, hi_i) = a_im.split_at_mut(depth + 1);
                hi_i[0].copy_from_slice(&lo_i[depth]);
                ctx.op.add_column(&mut hi[0], &mut hi_i[0], k);
                a_stack.push(k);
                a_rec(
                    ctx, cand, pos + 1, depth + 1, a_re, a_im, a_stack, z_stack, best, improvement_floor,
                );
                a_stack.pop();
            }
        }
        #[allow(clippy::too_many_arguments)]
        fn z_rec(
            ctx: &Ctx,
            start: usize,
            depth: usize,
            z_re: &mut [Vec<f64>],
            z_im: &mut [Vec<f64>],
            z_stack: &mut Vec<usize>,
            a_re: &mut [Vec<f64>],
            a_im: &mut [Vec<f64>],
            a_stack: &mut Vec<usize>,
            best: &mut Option<(f64, Vec<usize>, Vec<usize>)>,
            improvement_floor: f64,
        ) {
            if depth == ctx.width {
                // candidates: complement plus the removed set, sorted
                let mut cand: Vec<usize> = ctx.k_c.to_vec();
                cand.extend_from_slice(z_stack);
                cand.sort_unstable();
                a_re[0].copy_from_slice(&z_re[depth]);
                a_im[0].copy_from_slice(&z_im[depth]);
                a_rec(
                    ctx, &cand, 0, 0, a_re, a_im, a_stack, z_stack, best, improvement_floor,
                );
                return;
            }
            for pos in start..ctx.current.len() {
                if ctx.current.len() - pos < ctx.width - depth {
                    break;
                }
                let k = ctx.current[pos];
                let (lo, hi) = z_re.split_at_mut(depth + 1);
                hi[0].copy_from_slice(&lo[depth]);
                let (lo_i, hi_i) = z_im.split_at_mut(depth + 1);
                hi_i[0].copy_from_slice(&lo_i[depth]);
                ctx.op.sub_column(&mut hi[0], &mut hi_i[0], k);
                z_stack.push(k);
                z_rec(
                    ctx,
                    pos + 1,
                    depth + 1,
                    z_re,
                    z_im,
                    z_stack,
                    a_re,
                    a_im,
                    a_stack,
                    best,
                    improvement_floor,
                );
                z_stack.pop();
            }
        }

        let ctx = Ctx {
            op,
            current: &current,
            k_c: &k_c,
            width,
        };
        z_rec(
            &ctx,
            0,
            0,
            &mut z_re,
            &mut z_im,
            &mut z_stack,
            &mut a_re,
            &mut a_im,
            &mut a_stack,
            &mut best,
            floor,
        );

        match best {
            Some((_, z, a)) if !z.is_empty() || !a.is_empty() => {
                let mut next: Vec<usize> =
                    current.iter().copied().filter(|k| !z.contains(k)).collect();
                next.extend_from_slice(&a);
                next.sort_unstable();
                next.dedup();
                debug_assert_eq!(next.len(), m);
                current = next;
                if !fixpoint {
                    break;
                }
            }
            _ => break,
        }
    }

    SelectionPattern::new(n, current)
}

/// All circular shifts and coprime multiplier images of a Fourier selection
/// pattern; every one of them attains the same coherence.
pub fn equivalence_maps(
    op: &CoherenceOperator,
    pattern: &SelectionPattern,
) -> Result<Vec<SelectionPattern>> {
    if op.source() != SourceKind::Fourier {
        return Err(Error::EquivalenceUndefined);
    }
    let n = op.n();
    let mut out = std::collections::BTreeSet::new();
    for j in 0..n {
        let shifted: Vec<usize> = pattern.indices.iter().map(|&k| (k + j) % n).collect();
        out.insert(SelectionPattern::new(n, shifted)?);
    }
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    for tau in 1..n {
        if gcd(tau, n) == 1 {
            let mapped: Vec<usize> = pattern.indices.iter().map(|&k| (k * tau) % n).collect();
            out.insert(SelectionPattern::new(n, mapped)?);
        }
    }
    Ok(out.into_iter().collect())
}

/// Complement selection {0,...,n-1} \ K of a Fourier pattern; its coherence
/// is m/(n-m) times the original.
pub fn complement(op: &CoherenceOperator, pattern: &SelectionPattern) -> Result<SelectionPattern> {
    if op.source() != SourceKind::Fourier {
        return Err(Error::EquivalenceUndefined);
    }
    complement_indices(pattern)
}

fn complement_indices(pattern: &SelectionPattern) -> Result<SelectionPattern> {
    let mask = pattern.mask();
    let indices: Vec<usize> = (0..pattern.n).filter(|&k| !mask[k]).collect();
    SelectionPattern::new(pattern.n, indices)
}

/// End-to-end search: per restart, a random zero set, the IRL1 relaxation,
/// support reduction, and the local search, run for both the target size m
/// and the complement size n - m (whose solutions map back through the
/// complement identity). Returns the best pattern of size m.
pub fn select_rows(
    op: &CoherenceOperator,
    m: usize,
    config: &HarmonicConfig,
) -> Result<(SelectionPattern, f64)> {
    let n = op.n();
    if m < 1 || m >= n {
        return Err(Error::InvalidDimensions(format!(
            "select_rows needs 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    let mut best: Option<(SelectionPattern, f64)> = None;
    'runs: for restart in 0..config.runs.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, restart as u64));
        for side in [m, n - m] {
            if side < 1 || side >= n {
                continue;
            }
            let k0_size = ((config.zeta * (n - side) as f64).ceil() as usize).min(n - side);
            let mut pool: Vec<usize> = (1..n).collect();
            pool.shuffle(&mut rng);
            let mut k0: Vec<usize> = pool.into_iter().take(k0_size).collect();
            k0.sort_unstable();

            let width = config
                .local_search_width
                .unwrap_or_else(|| default_local_width(n));
            let candidate = irl1_relax(op, side, config, &k0)
                .and_then(|g| extract_and_reduce(op, &g, side, config.support_epsilon))
                .and_then(|p| local_search(op, &p, width, config.local_search_fixpoint));
            let pattern = match candidate {
                Ok(p) => p,
                Err(_) => continue,
            };
            let pattern_m = if side == m {
                pattern
            } else {
                complement_indices(&pattern)?
            };
            let mu = selection_coherence(op, &pattern_m)?;
            if best.as_ref().map_or(true, |(_, b)| mu < *b) {
                best = Some((pattern_m, mu));
            }
            if let Some(target) = config.stop_at {
                if best.as_ref().map_or(false, |(_, b)| *b <= target) {
                    break 'runs;
                }
            }
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no restart produced a pattern".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fourier_operator_shape_and_full_selection() {
        let op = CoherenceOperator::fourier(8).unwrap();
        assert_eq!(op.reduced_rows(), 4);
        let all = SelectionPattern::new(8, (0..8).collect()).unwrap();
        let mu = selection_coherence(&op, &all).unwrap();
        assert!(mu < 1e-12);
    }

    #[test]
    fn sylvester_reduces_to_n_minus_1_rows() {
        let op = CoherenceOperator::hadamard(16).unwrap();
        assert_eq!(op.reduced_rows(), 15);
    }

    #[test]
    fn selection_coherence_matches_materialized_frame() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for source in 0..2 {
            let op = if source == 0 {
                CoherenceOperator::fourier(12).unwrap()
            } else {
                CoherenceOperator::hadamard(16).unwrap()
            };
            for trial in 0..20 {
                let n = op.n();
                let m = 2 + trial % 5;
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                let pattern = SelectionPattern::new(n, idx.into_iter().take(m).collect()).unwrap();
                let mu = selection_coherence(&op, &pattern).unwrap();
                let frame = op.materialize(&pattern).unwrap();
                let direct = crate::frame::coherence(&frame).unwrap().coherence;
                assert_relative_eq!(mu, direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn known_etf_patterns() {
        // (13,40) harmonic ETF
        let op = CoherenceOperator::fourier(40).unwrap();
        let etf = SelectionPattern::new(
            40,
            vec![0, 8, 10, 15, 17, 20, 21, 26, 29, 30, 32, 33, 34],
        )
        .unwrap();
        let mu = selection_coherence(&op, &etf).unwrap();
        assert_relative_eq!(mu, 0.23076923076923078, epsilon = 1e-12);

        // the 28-row Hadamard selection of order 64 (0-indexed rows of the
        // Sylvester ordering) is an ETF at the Welch bound 1/7
        let oph = CoherenceOperator::hadamard(64).unwrap();
        let k = vec![
            4, 5, 6, 11, 13, 14, 16, 21, 23, 24, 25, 28, 32, 38, 39, 41, 42, 45, 48, 49, 50, 51,
            53, 54, 55, 57, 61, 63,
        ];
        let pattern = SelectionPattern::new(64, k).unwrap();
        let mu = selection_coherence(&oph, &pattern).unwrap();
        assert_relative_eq!(mu, 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn circulant_gram_property() {
        let op = CoherenceOperator::fourier(12).unwrap();
        let pattern = SelectionPattern::new(12, vec![0, 1, 3, 7]).unwrap();
        let frame = op.materialize(&pattern).unwrap();
        let gram = frame.gram();
        let n = 12;
        for i in 0..n {
            for j in 0..n {
                let d = (j + n - i) % n;
                let diff = (gram[(i, j)] - gram[(0, d)]).norm();
                assert!(diff < 1e-12, "gram not circulant at ({i},{j})");
            }
        }
    }

    #[test]
    fn shift_multiplier_and_complement_identities() {
        let op = CoherenceOperator::fourier(16).unwrap();
        let pattern = SelectionPattern::new(16, vec![0, 2, 3, 7, 11]).unwrap();
        let mu = selection_coherence(&op, &pattern).unwrap();
        for p in equivalence_maps(&op, &pattern).unwrap() {
            assert_relative_eq!(selection_coherence(&op, &p).unwrap(), mu, epsilon = 1e-12);
        }
        // complement scaling: mu_c = (m/(n-m)) mu ... mapped the other way
        let comp = complement(&op, &pattern).unwrap();
        assert_eq!(comp.len(), 11);
        let mu_c = selection_coherence(&op, &comp).unwrap();
        assert_relative_eq!(mu_c, (5.0 / 11.0) * mu, epsilon = 1e-12);
        // involution
        let back = complement(&op, &comp).unwrap();
        assert_eq!(back, pattern);
        // non-fourier sources have no equivalence classes
        let oph = CoherenceOperator::hadamard(8).unwrap();
        assert!(matches!(
            equivalence_maps(&oph, &pattern),
            Err(Error::EquivalenceUndefined)
        ));
    }

    #[test]
    fn trivial_relaxation_solution_without_zero_set() {
        // with W = I and K0 empty the first round returns the constant vector
        let op = CoherenceOperator::fourier(16).unwrap();
        let cfg = HarmonicConfig {
            irl1_iters: 1,
            lambda: Some(1.0 / 4.0),
            ..Default::default()
        };
        let g = irl1_relax(&op, 4, &cfg, &[]).unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-9);
        let expect = 3.0 / 15.0;
        for k in 1..16 {
            assert_relative_eq!(g[k], expect, epsilon = 1e-5);
        }
        // the infinity-norm value of that solution: (n-m)/(m(n-1)) = 0.2
        let (re, im) = op.apply_full(&[]);
        let mut u_re = re;
        let mut u_im = im;
        // F g with g = [1; expect * ones]
        for r in 0..op.reduced_rows() {
            u_re[r] = 0.0;
            u_im[r] = 0.0;
        }
        for k in 0..16 {
            let w = if k == 0 { 1.0 } else { expect };
            let base = k * op.reduced_rows();
            for r in 0..op.reduced_rows() {
                u_re[r] += w * op.col_re[base + r];
                u_im[r] += w * op.col_im[base + r];
            }
        }
        let inf = op.inf_norm_sq(&u_re, &u_im).sqrt() / 4.0;
        assert_relative_eq!(inf, 0.2, epsilon = 1e-6);
    }

    #[test]
    fn reduce_matches_brute_force_single_removal() {
        let op = CoherenceOperator::fourier(14).unwrap();
        // support of size m+1: the greedy must pick the best single removal
        let support = vec![0usize, 1, 4, 6, 9, 11];
        let m = 5;
        let mut g = vec![0.0; 14];
        for &k in &support {
            g[k] = 1.0;
        }
        let reduced = extract_and_reduce(&op, &g, m, 0.5).unwrap();
        // brute force
        let mut best: Option<(f64, Vec<usize>)> = None;
        for drop in &support {
            let rest: Vec<usize> = support.iter().copied().filter(|k| k != drop).collect();
            let p = SelectionPattern::new(14, rest.clone()).unwrap();
            let mu = selection_coherence(&op, &p).unwrap();
            if best.as_ref().map_or(true, |(b, _)| mu < *b) {
                best = Some((mu, rest));
            }
        }
        assert_eq!(reduced.indices, best.unwrap().1);
    }

    #[test]
    fn reduce_works_incrementally() {
        let op = CoherenceOperator::fourier(40).unwrap();
        let mut g = vec![0.0; 40];
        for k in 0..25 {
            g[k] = 1.0;
        }
        let before = op.full_apply_count();
        let _ = extract_and_reduce(&op, &g, 13, 0.5).unwrap();
        // one full application at entry, everything else incremental
        assert_eq!(op.full_apply_count() - before, 1);
    }

    #[test]
    fn local_search_recovers_planted_optimum() {
        let op = CoherenceOperator::fourier(40).unwrap();
        let etf = vec![0usize, 8, 10, 15, 17, 20, 21, 26, 29, 30, 32, 33, 34];
        // remove one index, add a wrong one
        let mut damaged = etf.clone();
        damaged.retain(|&k| k != 21);
        damaged.push(22);
        let pattern = SelectionPattern::new(40, damaged).unwrap();
        let fixed = local_search(&op, &pattern, 1, true).unwrap();
        let mu = selection_coherence(&op, &fixed).unwrap();
        assert_relative_eq!(mu, 0.23076923076923078, epsilon = 1e-9);
    }

    #[test]
    fn local_search_never_worse() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let op = CoherenceOperator::fourier(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let mut idx: Vec<usize> = (0..20).collect();
            idx.shuffle(&mut rng);
            let pattern = SelectionPattern::new(20, idx.into_iter().take(6).collect()).unwrap();
            let mu0 = selection_coherence(&op, &pattern).unwrap();
            let out = local_search(&op, &pattern, 2, true).unwrap();
            let mu1 = selection_coherence(&op, &out).unwrap();
            assert!(mu1 <= mu0 + 1e-15);
        }
    }

    #[test]
    fn select_rows_small_case() {
        let op = CoherenceOperator::fourier(8).unwrap();
        let cfg = HarmonicConfig {
            runs: 10,
            rng_seed: 7,
            ..Default::default()
        };
        let (pattern, mu) = select_rows(&op, 2, &cfg).unwrap();
        assert_eq!(pattern.len(), 2);
        // best 2-of-8 coherence by direct enumeration over difference classes
        let mut best = f64::INFINITY;
        for j in 1..8usize {
            let p = SelectionPattern::new(8, vec![0, j]).unwrap();
            best = best.min(selection_coherence(&op, &p).unwrap());
        }
        assert_relative_eq!(mu, best, epsilon = 1e-12);
    }
}
