//! Sequential per-column coherence minimization: the outer loop that sweeps
//! the frame in random order, solves the per-column convex subproblem inside
//! its trust region, and applies the tight-frame retraction (or a variant's
//! replacement heuristic) when progress stalls.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cone::{self, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::frame::{polar_retraction, tight_polar_factor, Field, Frame, C64};
use crate::linalg::derive_seed;
use crate::subproblem::{Subproblem, SubproblemKind};

/// Frame family being designed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Real,
    Complex,
    Unital,
    NonnegReal,
    NonnegComplex,
    SparseReal,
    SparseComplex,
}

impl VariantKind {
    pub fn field(&self) -> Field {
        match self {
            VariantKind::Real | VariantKind::NonnegReal | VariantKind::SparseReal => Field::Real,
            _ => Field::Complex,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, VariantKind::SparseReal | VariantKind::SparseComplex)
    }
}

/// How sparsity is obtained for the sparse variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityMode {
    /// l1 penalty in the subproblem objective, plus a final polishing pass.
    L1Penalty,
    /// Zero positions fixed a priori and eliminated by presolve.
    FixedSupport,
}

/// Full specification of a design variant and its parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariantSpec {
    pub kind: VariantKind,
    /// Unital magnitude slack (unital only), 0 < gamma << 1.
    pub gamma: f64,
    /// l1 weight (sparse only).
    pub lambda: f64,
    pub sparsity_mode: SparsityMode,
    /// Per-column zero sets for the fixed-support mode.
    pub support_mask: Option<Vec<Vec<usize>>>,
    /// Threshold below which an entry counts as zero when the polishing
    /// support is established.
    pub epsilon_support: f64,
    /// Perturbation magnitude for the nonnegative stall heuristic.
    pub delta: f64,
    /// Scale on the per-entry trust radius of the unital subproblem.
    pub unital_radius_scale: f64,
}

impl VariantSpec {
    pub fn new(kind: VariantKind) -> Self {
        VariantSpec {
            kind,
            gamma: 0.01,
            lambda: 0.0,
            sparsity_mode: SparsityMode::L1Penalty,
            support_mask: None,
            epsilon_support: 1e-4,
            delta: 1e-3,
            unital_radius_scale: 1.0,
        }
    }

    pub fn real() -> Self {
        Self::new(VariantKind::Real)
    }

    pub fn complex() -> Self {
        Self::new(VariantKind::Complex)
    }

    pub fn unital(gamma: f64) -> Self {
        let mut v = Self::new(VariantKind::Unital);
        v.gamma = gamma;
        v
    }

    pub fn nonneg_real() -> Self {
        Self::new(VariantKind::NonnegReal)
    }

    pub fn nonneg_complex() -> Self {
        Self::new(VariantKind::NonnegComplex)
    }

    pub fn sparse(real: bool, lambda: f64) -> Self {
        let mut v = Self::new(if real {
            VariantKind::SparseReal
        } else {
            VariantKind::SparseComplex
        });
        v.lambda = lambda;
        v
    }

    pub fn fixed_support(real: bool, mask: Vec<Vec<usize>>) -> Self {
        let mut v = Self::new(if real {
            VariantKind::SparseReal
        } else {
            VariantKind::SparseComplex
        });
        v.sparsity_mode = SparsityMode::FixedSupport;
        v.support_mask = Some(mask);
        v
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.kind == VariantKind::Unital && !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "unital gamma must satisfy 0 < gamma << 1, got {}",
                self.gamma
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
        }
        if let Some(mask) = &self.support_mask {
            if mask.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "support mask covers {} columns, frame has {n}",
                    mask.len()
                )));
            }
            for (i, zeros) in mask.iter().enumerate() {
                if zeros.len() >= m || zeros.iter().any(|&k| k >= m) {
                    return Err(Error::InvalidParameter(format!(
                        "support mask for column {i} is invalid"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Monotone coherence decrease holds for these variants, so the engine
    /// rejects any column update that would break it.
    fn has_descent_guarantee(&self) -> bool {
        match self.kind {
            VariantKind::Real
            | VariantKind::Complex
            | VariantKind::NonnegReal
            | VariantKind::NonnegComplex => true,
            VariantKind::Unital => false,
            VariantKind::SparseReal | VariantKind::SparseComplex => {
                self.sparsity_mode == SparsityMode::FixedSupport
            }
        }
    }

    /// Whether the stall heuristic exists for this variant.
    fn has_stall_heuristic(&self) -> bool {
        !self.kind.is_sparse()
    }
}

/// Outer-loop configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SidcoConfig {
    /// Iteration budget K.
    pub max_iterations: usize,
    pub rng_seed: u64,
    /// Relative coherence decrease per sweep below which the run counts as
    /// converged.
    pub convergence_tol: f64,
    /// Maximum number of stall-heuristic applications.
    pub retraction_budget: usize,
    /// Keep the best frame seen rather than the last one. Always on for the
    /// unital variant, which has no descent guarantee.
    pub track_best: bool,
    /// Stop once converged and out of retraction budget.
    pub stop_on_stall: bool,
    /// Apply one last tight-frame retraction to the returned frame
    /// (real/complex: unit polar step; unital: polar step plus modulus
    /// projection). Trades a coherence increase for an exactly tight output;
    /// when set, the returned frame is the tightened final frame rather than
    /// the best-coherence iterate.
    pub final_retraction: bool,
    #[serde(skip)]
    pub solver: SolverSettings,
}

impl Default for SidcoConfig {
    fn default() -> Self {
        SidcoConfig {
            max_iterations: 2000,
            rng_seed: 0,
            convergence_tol: 1e-6,
            retraction_budget: 10,
            track_best: true,
            stop_on_stall: true,
            final_retraction: false,
            solver: SolverSettings::default(),
        }
    }
}

impl SidcoConfig {
    pub fn with_seed(seed: u64) -> Self {
        SidcoConfig {
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a design run.
#[derive(Clone, Debug)]
pub struct DesignReport {
    pub best_frame: Frame,
    pub best_coherence: f64,
    /// Coherence after each outer iteration (stall heuristic included).
    pub trajectory: Vec<f64>,
    pub iterations_run: usize,
    pub retractions_applied: usize,
    /// Columns kept unchanged because the subproblem solve failed.
    pub column_skips: usize,
    /// Columns kept unchanged because the update would have raised that
    /// column's correlation (solver noise guard).
    pub guard_rejections: usize,
    pub seed: u64,
}

fn gaussian_frame(m: usize, n: usize, field: Field, rng: &mut ChaCha8Rng) -> Frame {
    let data = DMatrix::from_fn(m, n, |_, _| match field {
        Field::Real => C64::new(StandardNormal.sample(rng), 0.0),
        Field::Complex => C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)),
    });
    Frame::new(field, data).expect("gaussian frame is well-formed")
}

fn project_unital(frame: &mut Frame) {
    let m = frame.rows();
    let scale = (m as f64).powf(-0.5);
    for i in 0..frame.cols() {
        let col: Vec<C64> = frame
            .column(i)
            .iter()
            .map(|z| {
                if z.norm() <= f64::EPSILON {
                    C64::new(scale, 0.0)
                } else {
                    z / z.norm() * scale
                }
            })
            .collect();
        frame.set_column(i, &col);
    }
}

/// Draws the starting frame for a design run.
pub fn initialize(m: usize, n: usize, variant: &VariantSpec, seed: u64) -> Result<Frame> {
    if n <= m || m == 0 {
        return Err(Error::InvalidDimensions(format!(
            "design needs n > m >= 1, got m = {m}, n = {n}"
        )));
    }
    variant.validate(m, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame = gaussian_frame(m, n, variant.kind.field(), &mut rng);

    match variant.kind {
        VariantKind::NonnegReal | VariantKind::NonnegComplex => {
            // nonnegative parts first; the polar step would reintroduce signs
            for i in 0..n {
                let col: Vec<C64> = frame
                    .column(i)
                    .iter()
                    .map(|z| C64::new(z.re.abs(), z.im.abs()))
                    .collect();
                frame.set_column(i, &col);
            }
            frame.normalize_columns()?;
        }
        VariantKind::Unital => {
            frame.normalize_columns()?;
            frame = tight_polar_factor(&frame, 1.0)?;
            project_unital(&mut frame);
        }
        VariantKind::SparseReal | VariantKind::SparseComplex
            if variant.sparsity_mode == SparsityMode::FixedSupport =>
        {
            if let Some(mask) = &variant.support_mask {
                for (i, zeros) in mask.iter().enumerate() {
                    let mut col = frame.column(i);
                    for &k in zeros {
                        col[k] = C64::new(0.0, 0.0);
                    }
                    frame.set_column(i, &col);
                }
            }
            frame.normalize_columns()?;
        }
        _ => {
            frame.normalize_columns()?;
            frame = polar_retraction(&frame, 1.0)?;
        }
    }
    Ok(frame)
}

/// Maximal trust radius preserving the descent guarantee:
/// 1 - max_{j != i} |g_ij|^2.
pub fn trust_radius(frame: &Frame, column_index: usize) -> Result<f64> {
    let n = frame.cols();
    let mut worst = 0.0f64;
    let mut worst_j = 0;
    for j in 0..n {
        if j == column_index {
            continue;
        }
        let g = frame.inner(column_index, j).norm();
        if g > worst {
            worst = g;
            worst_j = j;
        }
    }
    let radius = 1.0 - worst * worst;
    if radius <= 1e-14 {
        return Err(Error::CoincidentColumns(column_index.min(worst_j), column_index.max(worst_j)));
    }
    Ok(radius)
}

fn subproblem_kind(variant: &VariantSpec, column_index: usize) -> SubproblemKind {
    let real = variant.kind.field() == Field::Real;
    match variant.kind {
        VariantKind::Real => SubproblemKind::Real,
        VariantKind::Complex => SubproblemKind::Complex,
        VariantKind::Unital => SubproblemKind::Unital {
            gamma: variant.gamma,
        },
        VariantKind::NonnegReal | VariantKind::NonnegComplex => SubproblemKind::Nonneg { real },
        VariantKind::SparseReal | VariantKind::SparseComplex => match variant.sparsity_mode {
            SparsityMode::L1Penalty => SubproblemKind::SparseL1 {
                real,
                lambda: variant.lambda,
            },
            SparsityMode::FixedSupport => SubproblemKind::FixedSupport {
                real,
                zeros: variant
                    .support_mask
                    .as_ref()
                    .map(|m| m[column_index].clone())
                    .unwrap_or_default(),
            },
        },
    }
}

/// Builds the column-update subproblem for one column of a frame.
pub fn build_subproblem(
    frame: &Frame,
    column_index: usize,
    variant: &VariantSpec,
    radius: f64,
) -> Subproblem {
    let competitors: Vec<Vec<C64>> = (0..frame.cols())
        .filter(|&j| j != column_index)
        .map(|j| frame.column(j))
        .collect();
    Subproblem {
        center: frame.column(column_index),
        competitors,
        radius_sq: radius,
        kind: subproblem_kind(variant, column_index),
    }
}

/// Variant-specific normalization applied to a subproblem solution.
fn normalize_update(variant: &VariantSpec, m: usize, mut col: Vec<C64>) -> Result<Vec<C64>> {
    match variant.kind {
        VariantKind::Unital => {
            let scale = (m as f64).powf(-0.5);
            for z in col.iter_mut() {
                let r = z.norm();
                *z = if r <= f64::EPSILON {
                    C64::new(scale, 0.0)
                } else {
                    *z / r * scale
                };
            }
        }
        _ => {
            let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm <= f64::EPSILON {
                return Err(Error::DegenerateColumn(0));
            }
            for z in col.iter_mut() {
                *z /= nrm;
            }
        }
    }
    Ok(col)
}

/// Solves the subproblem for one column and returns the normalized column
/// together with the subproblem objective value.
pub fn update_column(
    frame: &Frame,
    column_index: usize,
    variant: &VariantSpec,
    radius: f64,
    solver: &SolverSettings,
) -> Result<(Vec<C64>, f64)> {
    let sub = build_subproblem(frame, column_index, variant, radius);
    let program = sub.canonicalize().map_err(|e| Error::ColumnSolve {
        column: column_index,
        reason: e.to_string(),
    })?;
    let sol = cone::solve_with(&program, solver);
    if sol.status != SolveStatus::Optimal {
        return Err(Error::ColumnSolve {
            column: column_index,
            reason: format!("solver status {:?}", sol.status),
        });
    }
    let col = sub.extract_column(&sol.primal);
    let col = normalize_update(variant, frame.rows(), col)?;
    Ok((col, sol.objective_value))
}

/// Uniformly random per-column zero sets of equal size.
pub fn make_fixed_support(
    m: usize,
    n: usize,
    per_column_zeros: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if per_column_zeros >= m {
        return Err(Error::InvalidParameter(format!(
            "per_column_zeros = {per_column_zeros} must be below m = {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Vec::with_capacity(n);
    for _ in 0..n {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut rng);
        let mut zeros: Vec<usize> = idx.into_iter().take(per_column_zeros).collect();
        zeros.sort_unstable();
        mask.push(zeros);
    }
    Ok(mask)
}

/// Max correlation of a candidate column against all other columns.
fn column_max_correlation(frame: &Frame, column_index: usize, col: &[C64]) -> f64 {
    let mut best = 0.0f64;
    for j in 0..frame.cols() {
        if j == column_index {
            continue;
        }
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..frame.rows() {
            acc += frame.data()[(r, j)].conj() * col[r];
        }
        best = best.max(acc.norm());
    }
    best
}

fn apply_stall_heuristic(
    frame: &Frame,
    variant: &VariantSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Frame> {
    match variant.kind {
        VariantKind::Real | VariantKind::Complex => polar_retraction(frame, 1.0),
        VariantKind::Unital => {
            let mut out = tight_polar_factor(frame, 1.0)?;
            project_unital(&mut out);
            Ok(out)
        }
        VariantKind::NonnegReal | VariantKind::NonnegComplex => {
            // random perturbation, clamp to the nonnegative orthant, renormalize
            let mut out = frame.clone();
            let complex = variant.kind == VariantKind::NonnegComplex;
            for i in 0..out.cols() {
                let mut col = out.column(i);
                for z in col.iter_mut() {
                    let dr: f64 = StandardNormal.sample(rng);
                    let di: f64 = if complex { StandardNormal.sample(rng) } else { 0.0 };
                    let re = (z.re + variant.delta * dr).max(0.0);
                    let im = if complex {
                        (z.im + variant.delta * di).max(0.0)
                    } else {
                        0.0
                    };
                    *z = C64::new(re, im);
                }
                out.set_column(i, &col);
            }
            out.normalize_columns()?;
            Ok(out)
        }
        VariantKind::SparseReal | VariantKind::SparseComplex => {
            unreachable!("stall heuristic is disabled for sparse variants")
        }
    }
}

/// Final polishing pass of the l1 sparse mode: fixes the support at
/// `epsilon_support` and re-solves every column with exact zeros imposed.
fn polish_sparse(frame: &mut Frame, variant: &VariantSpec, solver: &SolverSettings) -> usize {
    let real = variant.kind.field() == Field::Real;
    let m = frame.rows();
    let mut skips = 0;
    for i in 0..frame.cols() {
        let zeros: Vec<usize> = frame
            .column(i)
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() <= variant.epsilon_support)
            .map(|(k, _)| k)
            .collect();
        if zeros.len() >= m {
            skips += 1;
            continue;
        }
        let radius = match trust_radius(frame, i) {
            Ok(r) => r,
            Err(_) => {
                skips += 1;
                continue;
            }
        };
        let sub = Subproblem {
            center: frame.column(i),
            competitors: (0..frame.cols())
                .filter(|&j| j != i)
                .map(|j| frame.column(j))
                .collect(),
            radius_sq: radius,
            kind: SubproblemKind::FixedSupport {
                real,
                zeros: zeros.clone(),
            },
        };
        let program = match sub.canonicalize() {
            Ok(p) => p,
            Err(_) => {
                skips += 1;
                continue;
            }
        };
        let sol = cone::solve_with(&program, solver);
        if sol.status != SolveStatus::Optimal {
            skips += 1;
            continue;
        }
        let col = sub.extract_column(&sol.primal);
        match normalize_update(
            &VariantSpec {
                kind: variant.kind,
                ..variant.clone()
            },
            m,
            col,
        ) {
            Ok(col) => frame.set_column(i, &col),
            Err(_) => skips += 1,
        }
    }
    skips
}

/// Runs the design loop from a fresh random initialization.
pub fn run(m: usize, n: usize, variant: &VariantSpec, config: &SidcoConfig) -> Result<DesignReport> {
    let frame = initialize(m, n, variant, config.rng_seed)?;
    run_from(frame, variant, config)
}

/// Runs the design loop from a caller-supplied starting frame (the usual
/// route for the sparse variants, which profit from a pre-designed start).
pub fn run_from(
    mut frame: Frame,
    variant: &VariantSpec,
    config: &SidcoConfig,
) -> Result<DesignReport> {
    config.validate()?;
    variant.validate(frame.rows(), frame.cols())?;
    let n = frame.cols();
    let m = frame.rows();
    let track_best = config.track_best || variant.kind == VariantKind::Unital;
    let guard = variant.has_descent_guarantee();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, 0x5eed));

    let mut prev_mu = frame.max_cross_correlation();
    let mut best_mu = prev_mu;
    let mut best_frame = frame.clone();
    let mut trajectory = Vec::with_capacity(config.max_iterations);
    let mut retractions = 0usize;
    let mut skips = 0usize;
    let mut guard_rejections = 0usize;
    let mut iterations_run = 0usize;

    let mut order: Vec<usize> = (0..n).collect();
    for _iter in 0..config.max_iterations {
        iterations_run += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let radius = match trust_radius(&frame, i) {
                Ok(r) => r * if variant.kind == VariantKind::Unital {
                    variant.unital_radius_scale
                } else {
                    1.0
                },
                Err(_) => {
                    skips += 1;
                    continue;
                }
            };
            match update_column(&frame, i, variant, radius, &config.solver) {
                Ok((col, _obj)) => {
                    if guard {
                        let old = column_max_correlation(&frame, i, &frame.column(i));
                        let new = column_max_correlation(&frame, i, &col);
                        if new <= old {
                            frame.set_column(i, &col);
                        } else {
                            guard_rejections += 1;
                        }
                    } else {
                        frame.set_column(i, &col);
                    }
                }
                Err(_) => {
                    skips += 1;
                }
            }
        }
        let mut mu = frame.max_cross_correlation();
        let stalled = prev_mu - mu < config.convergence_tol * prev_mu.max(f64::MIN_POSITIVE);
        let mut applied = false;
        if stalled && variant.has_stall_heuristic() && retractions < config.retraction_budget {
            if let Ok(next) = apply_stall_heuristic(&frame, variant, &mut rng) {
                frame = next;
                mu = frame.max_cross_correlation();
                retractions += 1;
                applied = true;
            }
        }
        trajectory.push(mu);
        if mu < best_mu {
            best_mu = mu;
            best_frame = frame.clone();
        }
        if stalled && !applied && config.stop_on_stall {
            break;
        }
        prev_mu = mu;
    }

    if variant.kind.is_sparse() && variant.sparsity_mode == SparsityMode::L1Penalty {
        skips += polish_sparse(&mut frame, variant, &config.solver);
        let mu = frame.max_cross_correlation();
        trajectory.push(mu);
        if mu < best_mu || !track_best {
            best_mu = mu;
            best_frame = frame.clone();
        }
    }

    if !track_best {
        best_mu = *trajectory.last().unwrap_or(&prev_mu);
        best_frame = frame.clone();
    }

    // Tightening the output is only sound where the polar step does not
    // destroy the variant structure (it would re-sign nonnegative frames and
    // refill sparse ones).
    let can_tighten = matches!(
        variant.kind,
        VariantKind::Real | VariantKind::Complex | VariantKind::Unital
    );
    if config.final_retraction && can_tighten {
        let tightened = match variant.kind {
            VariantKind::Unital => {
                let mut out = tight_polar_factor(&frame, 1.0)?;
                project_unital(&mut out);
                out
            }
            _ => polar_retraction(&frame, 1.0)?,
        };
        let mu = tightened.max_cross_correlation();
        trajectory.push(mu);
        best_mu = mu;
        best_frame = tightened;
    }

    Ok(DesignReport {
        best_frame,
        best_coherence: best_mu,
        trajectory,
        iterations_run,
        retractions_applied: retractions,
        column_skips: skips,
        guard_rejections,
        seed: config.rng_seed,
    })
}

/// Best report over several seeds derived from a base seed.
pub fn run_multi_seed(
    m: usize,
    n: usize,
    variant: &VariantSpec,
    config: &SidcoConfig,
    seeds: usize,
    jobs: usize,
) -> Result<DesignReport> {
    let configs: Vec<SidcoConfig> = (0..seeds.max(1))
        .map(|s| SidcoConfig {
            rng_seed: derive_seed(config.rng_seed, s as u64),
            ..config.clone()
        })
        .collect();
    let reports: Vec<Result<DesignReport>> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        pool.install(|| {
            configs
                .par_iter()
                .map(|cfg| run(m, n, variant, cfg))
                .collect()
        })
    } else {
        configs.iter().map(|cfg| run(m, n, variant, cfg)).collect()
    };
    let mut best: Option<DesignReport> = None;
    for r in reports {
        let r = r?;
        if best
            .as_ref()
            .map_or(true, |b| r.best_coherence < b.best_coherence)
        {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no seeds requested".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn initialization_is_unit_norm_and_deterministic() {
        let v = VariantSpec::complex();
        let a = initialize(3, 7, &v, 42).unwrap();
        let b = initialize(3, 7, &v, 42).unwrap();
        assert_eq!(a, b);
        for i in 0..7 {
            assert_relative_eq!(a.column_norm(i), 1.0, epsilon = 1e-12);
        }
        let c = initialize(3, 7, &v, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unital_initialization_has_constant_modulus() {
        let v = VariantSpec::unital(0.01);
        let f = initialize(4, 9, &v, 1).unwrap();
        let target = 0.5;
        for z in f.data().iter() {
            assert_relative_eq!(z.norm(), target, epsilon = 1e-12);
        }
    }

    #[test]
    fn nonneg_initialization_is_nonnegative() {
        let v = VariantSpec::nonneg_real();
        let f = initialize(4, 10, &v, 7).unwrap();
        assert!(f.data().iter().all(|z| z.re >= 0.0 && z.im == 0.0));
    }

    #[test]
    fn trust_radius_values() {
        // orthonormal columns -> radius 1
        let f = Frame::from_real(nalgebra::DMatrix::identity(3, 3));
        assert_relative_eq!(trust_radius(&f, 0).unwrap(), 1.0, epsilon = 1e-12);

        // two columns at inner product 0.6 -> 1 - 0.36 = 0.64
        let g = Frame::from_real(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.6, 0.0, 0.8],
        ));
        assert_relative_eq!(trust_radius(&g, 0).unwrap(), 0.64, epsilon = 1e-12);

        // duplicate columns -> error
        let h = Frame::from_real(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 1.0, 0.0, 0.0],
        ));
        assert!(matches!(
            trust_radius(&h, 0),
            Err(Error::CoincidentColumns(0, 1))
        ));
    }

    #[test]
    fn orthogonal_competitors_leave_column_unchanged() {
        let f = Frame::from_real(nalgebra::DMatrix::identity(3, 3));
        // column 0 with orthogonal competitors: center already optimal
        let (col, obj) = update_column(
            &f,
            0,
            &VariantSpec::real(),
            trust_radius(&f, 0).unwrap(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(obj.abs() < 1e-6);
        let corr = column_max_correlation(&f, 0, &col);
        assert!(corr < 1e-6);
    }

    #[test]
    fn fixed_support_mask_is_respected() {
        let mask = make_fixed_support(4, 9, 2, 3).unwrap();
        assert!(mask.iter().all(|z| z.len() == 2));
        let variant = VariantSpec::fixed_support(true, mask.clone());
        let cfg = SidcoConfig {
            max_iterations: 5,
            rng_seed: 9,
            ..Default::default()
        };
        let report = run(4, 9, &variant, &cfg).unwrap();
        for (i, zeros) in mask.iter().enumerate() {
            for &k in zeros {
                assert_eq!(report.best_frame.data()[(k, i)], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn empty_mask_is_allowed() {
        let mask = make_fixed_support(4, 6, 0, 3).unwrap();
        assert!(mask.iter().all(|z| z.is_empty()));
        assert!(make_fixed_support(4, 6, 4, 3).is_err());
    }

    #[test]
    fn descent_and_reproducibility_small_complex_run() {
        let variant = VariantSpec::complex();
        let cfg = SidcoConfig {
            max_iterations: 12,
            rng_seed: 5,
            ..Default::default()
        };
        let a = run(3, 6, &variant, &cfg).unwrap();
        let b = run(3, 6, &variant, &cfg).unwrap();
        assert_eq!(a.best_coherence, b.best_coherence);
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.best_frame, b.best_frame);
        // coherence at least the Welch bound
        let wb = crate::frame::welch_bound(3, 6).unwrap().value;
        assert!(a.best_coherence >= wb - 1e-12);
    }
}
