//! Primal-dual path-following interior-point method for orthant/second-order
//! cone programs, on the homogeneous self-dual embedding with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector step.
//!
//! Internally the program is held in the conic standard form
//! `min c'x  s.t.  Ax = b,  Gx + s = h,  s in K`, obtained from the
//! block form by `G = -M`, `h = v`. The KKT systems are solved by dense
//! elimination: a Cholesky factorization of `H = G' W^-2 G` plus a Schur
//! complement for the equality multipliers. Everything runs on a fixed
//! iteration schedule with no randomization, so repeated solves of the same
//! program produce identical output.

use nalgebra::DMatrix;

use super::{ConeKind, ConeProgram, ConeSolution, SolveStatus, SparseMatrix};

#[derive(Clone, Copy, Debug)]
pub struct SolverSettings {
    /// Relative duality-gap tolerance.
    pub tol: f64,
    /// Primal/dual feasibility tolerance.
    pub feas_tol: f64,
    pub max_iters: usize,
    /// Residual tolerance on infeasibility certificates.
    pub infeas_tol: f64,
    /// Fixed number of iterative-refinement rounds per KKT solve.
    pub refine_rounds: usize,
    /// Fraction of the step to the cone boundary actually taken.
    pub step_frac: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 200,
            infeas_tol: 1e-9,
            refine_rounds: 2,
            step_frac: 0.99,
        }
    }
}

/// Solves a cone program with the given gap tolerance and iteration cap.
pub fn solve(program: &ConeProgram, tol: f64, max_iters: usize) -> ConeSolution {
    let settings = SolverSettings {
        tol,
        feas_tol: tol,
        max_iters,
        ..SolverSettings::default()
    };
    solve_with(program, &settings)
}

pub fn solve_with(program: &ConeProgram, settings: &SolverSettings) -> ConeSolution {
    match Workspace::new(program) {
        Ok(mut ws) => ws.run(settings),
        Err(msg) => ConeSolution {
            primal: vec![0.0; program.num_vars],
            dual_eq: vec![0.0; program.equality.nrows()],
            dual_cone: vec![0.0; program.cone_rows()],
            objective_value: f64::NAN,
            status: SolveStatus::NumericalFailure,
            gap: f64::INFINITY,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            iterations: 0,
        }
        .tap_msg(msg),
    }
}

impl ConeSolution {
    fn tap_msg(self, _msg: String) -> Self {
        self
    }
}

// ---------------------------------------------------------------------------
// cone layout
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Block {
    /// offset, length
    Orthant(usize, usize),
    /// offset, dim
    Soc(usize, usize),
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        match *self {
            Block::Orthant(o, d) | Block::Soc(o, d) => o..o + d,
        }
    }
}

/// NT scaling state for the full cone.
struct Scaling {
    /// Orthant: w_i = sqrt(s_i/z_i), stored for all cone rows (unused on SOC rows).
    w: Vec<f64>,
    /// Per SOC block: (eta, wbar) with wbar'J wbar = 1.
    soc: Vec<(f64, Vec<f64>)>,
    /// Scaled point lambda = W z = W^-1 s.
    lambda: Vec<f64>,
}

fn jdot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = u[0] * v[0];
    for i in 1..u.len() {
        acc -= u[i] * v[i];
    }
    acc
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm2(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

impl Scaling {
    fn identity(blocks: &[Block], q: usize) -> Scaling {
        let mut soc = Vec::new();
        for b in blocks {
            if let Block::Soc(_, d) = *b {
                let mut wbar = vec![0.0; d];
                wbar[0] = 1.0;
                soc.push((1.0, wbar));
            }
        }
        Scaling {
            w: vec![1.0; q],
            soc,
            lambda: vec![0.0; q],
        }
    }

    /// Computes the NT scaling from an interior primal-dual pair.
    /// Returns false if either point has drifted out of the cone interior.
    fn compute(&mut self, blocks: &[Block], s: &[f64], z: &[f64]) -> bool {
        let mut soc_idx = 0;
        for b in blocks {
            match *b {
                Block::Orthant(o, d) => {
                    for i in o..o + d {
                        if s[i] <= 0.0 || z[i] <= 0.0 {
                            return false;
                        }
                        self.w[i] = (s[i] / z[i]).sqrt();
                        self.lambda[i] = (s[i] * z[i]).sqrt();
                    }
                }
                Block::Soc(o, d) => {
                    let sb = &s[o..o + d];
                    let zb = &z[o..o + d];
                    let s2 = jdot(sb, sb);
                    let z2 = jdot(zb, zb);
                    if s2 <= 0.0 || z2 <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0 {
                        return false;
                    }
                    let nrm_s = s2.sqrt();
                    let nrm_z = z2.sqrt();
                    let gamma = ((1.0 + dot(sb, zb) / (nrm_s * nrm_z)) / 2.0).sqrt();
                    let eta = (nrm_s / nrm_z).sqrt();
                    let (_, wbar) = &mut self.soc[soc_idx];
                    let inv = 1.0 / (2.0 * gamma);
                    wbar[0] = (sb[0] / nrm_s + zb[0] / nrm_z) * inv;
                    for i in 1..d {
                        wbar[i] = (sb[i] / nrm_s - zb[i] / nrm_z) * inv;
                    }
                    self.soc[soc_idx].0 = eta;
                    // lambda = W z in closed form
                    let scale = (nrm_s * nrm_z).sqrt();
                    let lb = &mut self.lambda[o..o + d];
                    let wbar = &self.soc[soc_idx].1;
                    let zb0 = zb[0] / nrm_z;
                    let sb0 = sb[0] / nrm_s;
                    lb[0] = gamma * scale;
                    let denom = sb0 + zb0 + 2.0 * gamma;
                    for i in 1..d {
                        let sb1 = sb[i] / nrm_s;
                        let zb1 = zb[i] / nrm_z;
                        lb[i] = scale * (((gamma + zb0) * sb1 + (gamma + sb0) * zb1) / denom);
                    }
                    let _ = wbar;
                    soc_idx += 1;
                }
            }
        }
        true
    }

    /// u := W u (square-root scaling).
    fn apply_w(&self, blocks: &[Block], u: &mut [f64]) {
        let mut soc_idx = 0;
        for b in blocks {
            match *b {
                Block::Orthant(o, d) => {
                    for i in o..o + d {
                        u[i] *= self.w[i];
                    }
                }
                Block::Soc(o, d) => {
                    let (eta, wbar) = &self.soc[soc_idx];
                    let ub = &mut u[o..o + d];
                    let t: f64 = wbar[1..].iter().zip(&ub[1..]).map(|(a, b)| a * b).sum();
                    let u0 = ub[0];
                    ub[0] = eta * (wbar[0] * u0 + t);
                    let coef = u0 + t / (1.0 + wbar[0]);
                    for i in 1..d {
                        ub[i] = eta * (ub[i] + coef * wbar[i]);
                    }
                    soc_idx += 1;
                }
            }
        }
    }

    /// u := W^-1 u.
    fn apply_w_inv(&self, blocks: &[Block], u: &mut [f64]) {
        let mut soc_idx = 0;
        for b in blocks {
            match *b {
                Block::Orthant(o, d) => {
                    for i in o..o + d {
                        u[i] /= self.w[i];
                    }
                }
                Block::Soc(o, d) => {
                    let (eta, wbar) = &self.soc[soc_idx];
                    let ub = &mut u[o..o + d];
                    let t: f64 = wbar[1..].iter().zip(&ub[1..]).map(|(a, b)| a * b).sum();
                    let u0 = ub[0];
                    ub[0] = (wbar[0] * u0 - t) / eta;
                    let coef = -u0 + t / (1.0 + wbar[0]);
                    for i in 1..d {
                        ub[i] = (ub[i] + coef * wbar[i]) / eta;
                    }
                    soc_idx += 1;
                }
            }
        }
    }

    /// u := W^-2 u.
    fn apply_w2_inv(&self, blocks: &[Block], u: &mut [f64]) {
        let mut soc_idx = 0;
        for b in blocks {
            match *b {
                Block::Orthant(o, d) => {
                    for i in o..o + d {
                        let w = self.w[i];
                        u[i] /= w * w;
                    }
                }
                Block::Soc(o, d) => {
                    let (eta, wbar) = &self.soc[soc_idx];
                    // W^-2 u = eta^-2 (2 (J wbar)(J wbar)'u - J u)
                    let ub = &mut u[o..o + d];
                    let mut t = wbar[0] * ub[0];
                    for i in 1..d {
                        t -= wbar[i] * ub[i];
                    }
                    let e2 = eta * eta;
                    let u0 = ub[0];
                    ub[0] = (2.0 * t * wbar[0] - u0) / e2;
                    for i in 1..d {
                        ub[i] = (-2.0 * t * wbar[i] + ub[i]) / e2;
                    }
                    soc_idx += 1;
                }
            }
        }
    }

    /// u := W^2 u.
    fn apply_w2(&self, blocks: &[Block], u: &mut [f64]) {
        let mut soc_idx = 0;
        for b in blocks {
            match *b {
                Block::Orthant(o, d) => {
                    for i in o..o + d {
                        let w = self.w[i];
                        u[i] *= w * w;
                    }
                }
                Block::Soc(o, d) => {
                    let (eta, wbar) = &self.soc[soc_idx];
                    let ub = &mut u[o..o + d];
                    let t: f64 = wbar.iter().zip(ub.iter()).map(|(a, b)| a * b).sum();
                    let e2 = eta * eta;
                    let u0 = ub[0];
                    ub[0] = e2 * (2.0 * t * wbar[0] - u0);
                    for i in 1..d {
                        ub[i] = e2 * (2.0 * t * wbar[i] + ub[i]);
                    }
                    soc_idx += 1;
                }
            }
        }
    }
}

// Jordan-algebra helpers over the stacked cone.

/// out = u o v
fn jordan_product(blocks: &[Block], u: &[f64], v: &[f64], out: &mut [f64]) {
    for b in blocks {
        match *b {
            Block::Orthant(o, d) => {
                for i in o..o + d {
                    out[i] = u[i] * v[i];
                }
            }
            Block::Soc(o, d) => {
                let ub = &u[o..o + d];
                let vb = &v[o..o + d];
                let mut acc = 0.0;
                for i in 0..d {
                    acc += ub[i] * vb[i];
                }
                out[o] = acc;
                for i in 1..d {
                    out[o + i] = ub[0] * vb[i] + vb[0] * ub[i];
                }
            }
        }
    }
}

/// out = lambda \ d  (solve lambda o x = d)
fn jordan_div(blocks: &[Block], lambda: &[f64], d_vec: &[f64], out: &mut [f64]) {
    for b in blocks {
        match *b {
            Block::Orthant(o, d) => {
                for i in o..o + d {
                    out[i] = d_vec[i] / lambda[i];
                }
            }
            Block::Soc(o, d) => {
                let lb = &lambda[o..o + d];
                let db = &d_vec[o..o + d];
                let mut l1d1 = 0.0;
                let mut l1sq = 0.0;
                for i in 1..d {
                    l1d1 += lb[i] * db[i];
                    l1sq += lb[i] * lb[i];
                }
                let det = lb[0] * lb[0] - l1sq;
                let x0 = (lb[0] * db[0] - l1d1) / det;
                out[o] = x0;
                for i in 1..d {
                    out[o + i] = (db[i] - x0 * lb[i]) / lb[0];
                }
            }
        }
    }
}

/// Writes the cone identity element into `out`.
fn identity_element(blocks: &[Block], out: &mut [f64]) {
    out.fill(0.0);
    for b in blocks {
        match *b {
            Block::Orthant(o, d) => out[o..o + d].fill(1.0),
            Block::Soc(o, _) => out[o] = 1.0,
        }
    }
}

/// Largest step t such that u + a*du stays in the cone for all a in [0, t];
/// returns f64::INFINITY when unbounded.
fn max_step(blocks: &[Block], u: &[f64], du: &[f64]) -> f64 {
    let mut t = f64::INFINITY;
    for b in blocks {
        match *b {
            Block::Orthant(o, d) => {
                for i in o..o + d {
                    if du[i] < 0.0 {
                        t = t.min(-u[i] / du[i]);
                    }
                }
            }
            Block::Soc(o, d) => {
                let ub = &u[o..o + d];
                let db = &du[o..o + d];
                // boundary of (u0 + a d0)^2 >= |u1 + a d1|^2, u0 + a d0 >= 0
                if db[0] < 0.0 {
                    t = t.min(-ub[0] / db[0]);
                }
                let a = jdot(db, db);
                let bq = 2.0 * jdot(ub, db);
                let c = jdot(ub, ub);
                // f(alpha) = a alpha^2 + bq alpha + c, f(0) = c > 0 interior
                let disc = bq * bq - 4.0 * a * c;
                if a.abs() < 1e-300 {
                    if bq < 0.0 {
                        t = t.min(-c / bq);
                    }
                } else if a > 0.0 {
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        // roots (-bq +- sq)/(2a); f >= 0 outside (r1, r2)
                        let r1 = (-bq - sq) / (2.0 * a);
                        if r1 > 0.0 {
                            t = t.min(r1);
                        }
                    }
                } else {
                    // a < 0: f >= 0 on [r1, r2], 0 inside; positive root:
                    let sq = disc.max(0.0).sqrt();
                    let r2 = (-bq - sq) / (2.0 * a);
                    if r2 > 0.0 {
                        t = t.min(r2);
                    }
                }
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// workspace
// ---------------------------------------------------------------------------

enum BlockMatrix {
    /// Sparse rows, natural for orthant blocks.
    Rows(Vec<super::SparseRow>),
    /// Dense row-major d x n, natural for SOC blocks.
    Dense(Vec<f64>, usize), // (data, dim)
}

struct Workspace {
    n: usize,
    p: usize,
    q: usize,
    blocks: Vec<Block>,
    /// G = -M per block, aligned with `blocks`.
    gmats: Vec<BlockMatrix>,
    a: SparseMatrix,
    c: Vec<f64>,
    b: Vec<f64>,
    h: Vec<f64>,
    nu: f64,

    // iterate
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,

    scaling: Scaling,
    hmat: DMatrix<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    schur_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    reg: f64,
}

impl Workspace {
    fn new(program: &ConeProgram) -> Result<Workspace, String> {
        program.validate().map_err(|e| e.to_string())?;
        let n = program.num_vars;
        let p = program.equality.nrows();
        let q = program.cone_rows();

        let mut blocks = Vec::with_capacity(program.blocks.len());
        let mut gmats = Vec::with_capacity(program.blocks.len());
        let mut h = Vec::with_capacity(q);
        let mut offset = 0usize;
        let mut nu = 0.0;
        for spec in &program.blocks {
            let d = spec.dim();
            match spec.kind {
                ConeKind::Nonnegative => {
                    blocks.push(Block::Orthant(offset, d));
                    nu += d as f64;
                    // G rows are negated map rows
                    let rows = spec
                        .map
                        .rows
                        .iter()
                        .map(|r| r.iter().map(|&(c, a)| (c, -a)).collect())
                        .collect();
                    gmats.push(BlockMatrix::Rows(rows));
                }
                ConeKind::SecondOrder => {
                    blocks.push(Block::Soc(offset, d));
                    nu += 1.0;
                    let mut dense = vec![0.0; d * n];
                    for (r, row) in spec.map.rows.iter().enumerate() {
                        for &(c, a) in row {
                            dense[r * n + c] = -a;
                        }
                    }
                    gmats.push(BlockMatrix::Dense(dense, d));
                }
            }
            h.extend_from_slice(&spec.offset);
            offset += d;
        }

        let scaling = Scaling::identity(&blocks, q);
        Ok(Workspace {
            n,
            p,
            q,
            blocks,
            gmats,
            a: program.equality.clone(),
            c: program.objective.clone(),
            b: program.equality_rhs.clone(),
            h,
            nu,
            x: vec![0.0; n],
            y: vec![0.0; p],
            z: vec![0.0; q],
            s: vec![0.0; q],
            tau: 1.0,
            kappa: 1.0,
            scaling,
            hmat: DMatrix::zeros(n, n),
            chol: None,
            schur_chol: None,
            reg: 0.0,
        })
    }

    /// y += alpha * G x  (x has n entries, y has q entries)
    fn g_mul_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        for (b, g) in self.blocks.iter().zip(&self.gmats) {
            let range = b.range();
            match g {
                BlockMatrix::Rows(rows) => {
                    for (k, row) in rows.iter().enumerate() {
                        let mut acc = 0.0;
                        for &(c, a) in row {
                            acc += a * x[c];
                        }
                        y[range.start + k] += alpha * acc;
                    }
                }
                BlockMatrix::Dense(data, d) => {
                    for r in 0..*d {
                        let rowslice = &data[r * self.n..(r + 1) * self.n];
                        y[range.start + r] += alpha * dot(rowslice, x);
                    }
                }
            }
        }
    }

    /// y += alpha * G' u  (u has q entries, y has n entries)
    fn gt_mul_acc(&self, u: &[f64], alpha: f64, y: &mut [f64]) {
        for (b, g) in self.blocks.iter().zip(&self.gmats) {
            let range = b.range();
            match g {
                BlockMatrix::Rows(rows) => {
                    for (k, row) in rows.iter().enumerate() {
                        let v = alpha * u[range.start + k];
                        if v != 0.0 {
                            for &(c, a) in row {
                                y[c] += a * v;
                            }
                        }
                    }
                }
                BlockMatrix::Dense(data, d) => {
                    for r in 0..*d {
                        let v = alpha * u[range.start + r];
                        if v != 0.0 {
                            let rowslice = &data[r * self.n..(r + 1) * self.n];
                            for (c, a) in rowslice.iter().enumerate() {
                                y[c] += a * v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Assembles H = G' W^-2 G + reg*I and factors it, together with the
    /// Schur complement A H^-1 A' when equality rows are present.
    fn factor(&mut self) -> bool {
        let n = self.n;
        self.hmat.fill(0.0);
        let mut scratch: Vec<f64> = Vec::new();
        let mut soc_idx = 0;
        for (b, g) in self.blocks.iter().zip(&self.gmats) {
            match (*b, g) {
                (Block::Orthant(o, d), BlockMatrix::Rows(rows)) => {
                    for k in 0..d {
                        let w = self.scaling.w[o + k];
                        let weight = 1.0 / (w * w);
                        let row = &rows[k];
                        for (ii, &(ci, ai)) in row.iter().enumerate() {
                            let wai = weight * ai;
                            for &(cj, aj) in &row[ii..] {
                                let (lo, hi) = if ci <= cj { (ci, cj) } else { (cj, ci) };
                                self.hmat[(lo, hi)] += wai * aj;
                            }
                        }
                    }
                }
                (Block::Soc(_, d), BlockMatrix::Dense(data, _)) => {
                    // U = W^-1 G_blk, then H += U'U
                    scratch.clear();
                    scratch.extend_from_slice(data);
                    let (eta, wbar) = &self.scaling.soc[soc_idx];
                    // apply W^-1 columnwise: for column j the entries are
                    // scratch[r*n + j], r = 0..d
                    for j in 0..n {
                        let mut t = 0.0;
                        for r in 1..d {
                            t += wbar[r] * scratch[r * n + j];
                        }
                        let u0 = scratch[j];
                        scratch[j] = (wbar[0] * u0 - t) / eta;
                        let coef = -u0 + t / (1.0 + wbar[0]);
                        for r in 1..d {
                            scratch[r * n + j] = (scratch[r * n + j] + coef * wbar[r]) / eta;
                        }
                    }
                    for r in 0..d {
                        let rowslice = &scratch[r * n..(r + 1) * n];
                        for i in 0..n {
                            let ui = rowslice[i];
                            if ui != 0.0 {
                                for j in i..n {
                                    self.hmat[(i, j)] += ui * rowslice[j];
                                }
                            }
                        }
                    }
                    soc_idx += 1;
                }
                _ => unreachable!("block/matrix kind mismatch"),
            }
        }
        // mirror to lower triangle
        for i in 0..n {
            for j in 0..i {
                self.hmat[(i, j)] = self.hmat[(j, i)];
            }
        }

        let mut trace = 0.0;
        for i in 0..n {
            trace += self.hmat[(i, i)];
        }
        let base_reg = 1e-12 * (trace / n as f64 + 1.0);
        let mut reg = base_reg;
        for _attempt in 0..6 {
            let mut m = self.hmat.clone();
            for i in 0..n {
                m[(i, i)] += reg;
            }
            if let Some(chol) = nalgebra::Cholesky::new(m) {
                self.chol = Some(chol);
                self.reg = reg;
                // Schur complement for equalities
                if self.p > 0 {
                    let mut at = DMatrix::zeros(self.n, self.p);
                    for (r, row) in self.a.rows.iter().enumerate() {
                        for &(c, a) in row {
                            at[(c, r)] = a;
                        }
                    }
                    let hinv_at = self.chol.as_ref().unwrap().solve(&at);
                    let mut schur = DMatrix::zeros(self.p, self.p);
                    for r in 0..self.p {
                        for k in 0..self.p {
                            let mut acc = 0.0;
                            for (cc, aa) in self.a.rows[r].iter() {
                                acc += aa * hinv_at[(*cc, k)];
                            }
                            schur[(r, k)] = acc;
                        }
                    }
                    for i in 0..self.p {
                        schur[(i, i)] += reg;
                    }
                    match nalgebra::Cholesky::new(schur) {
                        Some(c) => self.schur_chol = Some(c),
                        None => {
                            reg *= 100.0;
                            continue;
                        }
                    }
                }
                return true;
            }
            reg *= 100.0;
        }
        false
    }

    /// Solves K3 [x;y;z] = [bx;by;bz] using the current factorization,
    /// with fixed iterative refinement.
    fn kkt_solve(
        &self,
        bx: &[f64],
        by: &[f64],
        bz: &[f64],
        refine: usize,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; self.n];
        let mut y = vec![0.0; self.p];
        let mut z = vec![0.0; self.q];
        self.kkt_solve_raw(bx, by, bz, &mut x, &mut y, &mut z);
        let mut res_x = vec![0.0; self.n];
        let mut res_y = vec![0.0; self.p];
        let mut res_z = vec![0.0; self.q];
        let mut cx = vec![0.0; self.n];
        let mut cy = vec![0.0; self.p];
        let mut cz = vec![0.0; self.q];
        for _ in 0..refine {
            // residual of the 3x3 system
            res_x.copy_from_slice(bx);
            for (i, v) in self.aty(&y).into_iter().enumerate() {
                res_x[i] -= v;
            }
            self.gt_mul_acc(&z, -1.0, &mut res_x);
            res_y.copy_from_slice(by);
            self.a.mul_acc(&x, -1.0, &mut res_y);
            res_z.copy_from_slice(bz);
            self.g_mul_acc(&x, -1.0, &mut res_z);
            let mut w2z = z.clone();
            self.scaling.apply_w2(&self.blocks, &mut w2z);
            for i in 0..self.q {
                res_z[i] += w2z[i];
            }
            self.kkt_solve_raw(&res_x, &res_y, &res_z, &mut cx, &mut cy, &mut cz);
            for i in 0..self.n {
                x[i] += cx[i];
            }
            for i in 0..self.p {
                y[i] += cy[i];
            }
            for i in 0..self.q {
                z[i] += cz[i];
            }
        }
        (x, y, z)
    }

    fn aty(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.a.tr_mul_acc(y, 1.0, &mut out);
        out
    }

    fn kkt_solve_raw(
        &self,
        bx: &[f64],
        by: &[f64],
        bz: &[f64],
        x: &mut [f64],
        y: &mut [f64],
        z: &mut [f64],
    ) {
        let chol = self.chol.as_ref().expect("factorization present");
        // rhs_x = bx + G' W^-2 bz
        let mut w2bz = bz.to_vec();
        self.scaling.apply_w2_inv(&self.blocks, &mut w2bz);
        let mut rhs_x = bx.to_vec();
        self.gt_mul_acc(&w2bz, 1.0, &mut rhs_x);

        let rhs_x_vec = nalgebra::DVector::from_column_slice(&rhs_x);
        let t = chol.solve(&rhs_x_vec);
        if self.p > 0 {
            // Schur solve for y: (A H^-1 A') y = A t - by
            let mut rhs_y = vec![0.0; self.p];
            for (r, row) in self.a.rows.iter().enumerate() {
                let mut acc = -by[r];
                for &(c, a) in row {
                    acc += a * t[c];
                }
                rhs_y[r] = acc;
            }
            let sol_y = self
                .schur_chol
                .as_ref()
                .expect("schur present")
                .solve(&nalgebra::DVector::from_column_slice(&rhs_y));
            // x = H^-1 (rhs_x - A' y)
            let mut rhs2 = rhs_x.clone();
            for (r, row) in self.a.rows.iter().enumerate() {
                for &(c, a) in row {
                    rhs2[c] -= a * sol_y[r];
                }
            }
            let sol_x = chol.solve(&nalgebra::DVector::from_column_slice(&rhs2));
            x.copy_from_slice(sol_x.as_slice());
            y.copy_from_slice(sol_y.as_slice());
        } else {
            x.copy_from_slice(t.as_slice());
        }
        // z = W^-2 (G x - bz)
        let mut gz = vec![0.0; self.q];
        self.g_mul_acc(x, 1.0, &mut gz);
        for i in 0..self.q {
            gz[i] -= bz[i];
        }
        self.scaling.apply_w2_inv(&self.blocks, &mut gz);
        z.copy_from_slice(&gz);
    }

    fn initialize(&mut self) -> bool {
        if !self.factor() {
            return false;
        }
        let zeros_n = vec![0.0; self.n];
        let zeros_p = vec![0.0; self.p];
        let zeros_q = vec![0.0; self.q];

        // primal start: min ||s|| s.t. Ax = b, Gx + s = h
        let (x0, _y0, zneg) = self.kkt_solve(&zeros_n, &self.b.clone(), &self.h.clone(), 1);
        let shat: Vec<f64> = zneg.iter().map(|v| -v).collect();
        self.x = x0;
        self.s = shift_to_interior(&self.blocks, &shat);

        // dual start: min ||z|| s.t. A'y + G'z + c = 0
        let negc: Vec<f64> = self.c.iter().map(|v| -v).collect();
        let (_x1, y1, z1) = self.kkt_solve(&negc, &zeros_p, &zeros_q, 1);
        self.y = y1;
        self.z = shift_to_interior(&self.blocks, &z1);

        self.tau = 1.0;
        self.kappa = 1.0;
        true
    }

    fn run(&mut self, settings: &SolverSettings) -> ConeSolution {
        let norm_b = norm2(&self.b).max(1.0);
        let norm_h = norm2(&self.h).max(1.0);
        let norm_c = norm2(&self.c).max(1.0);

        if !self.initialize() {
            return self.emit(SolveStatus::NumericalFailure, 0, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        }

        let mut best: Option<(f64, ConeSolution)> = None;
        let mut status = SolveStatus::MaxIters;
        let mut iters_done = settings.max_iters;

        for iter in 0..settings.max_iters {
            // residuals
            let mut rx = self.c.iter().map(|v| v * self.tau).collect::<Vec<f64>>();
            self.a.tr_mul_acc(&self.y, 1.0, &mut rx);
            self.gt_mul_acc(&self.z, 1.0, &mut rx);

            let mut ry: Vec<f64> = self.b.iter().map(|v| -v * self.tau).collect();
            self.a.mul_acc(&self.x, 1.0, &mut ry);

            let mut rz: Vec<f64> = (0..self.q).map(|i| self.s[i] - self.h[i] * self.tau).collect();
            self.g_mul_acc(&self.x, 1.0, &mut rz);

            let cx = dot(&self.c, &self.x);
            let by = dot(&self.b, &self.y);
            let hz = dot(&self.h, &self.z);
            let rtau = self.kappa + cx + by + hz;

            let gap_inner = dot(&self.s, &self.z);
            let mu = (gap_inner + self.tau * self.kappa) / (self.nu + 1.0);

            // convergence metrics at the de-homogenized point
            let inv_tau = 1.0 / self.tau;
            let pcost = cx * inv_tau;
            let gap = gap_inner * inv_tau * inv_tau;
            let relgap = gap / pcost.abs().max(1.0);
            let pres = (norm2(&ry) / norm_b).max(norm2(&rz) / norm_h) * inv_tau;
            let dres = norm2(&rx) / norm_c * inv_tau;

            let score = pres.max(dres).max(relgap);
            if best.as_ref().map_or(true, |(s, _)| score < *s) {
                best = Some((score, self.emit(SolveStatus::MaxIters, iter, relgap, pres, dres)));
            }

            if pres <= settings.feas_tol && dres <= settings.feas_tol && (relgap <= settings.tol || gap <= settings.tol * settings.tol)
            {
                status = SolveStatus::Optimal;
                iters_done = iter;
                break;
            }

            // infeasibility certificates
            let cert_p = -(by + hz);
            if cert_p > 0.0 {
                let mut atgz = vec![0.0; self.n];
                self.a.tr_mul_acc(&self.y, 1.0, &mut atgz);
                self.gt_mul_acc(&self.z, 1.0, &mut atgz);
                if norm2(&atgz) / norm_c / cert_p <= settings.infeas_tol {
                    status = SolveStatus::Infeasible;
                    iters_done = iter;
                    break;
                }
            }
            if cx < 0.0 {
                let mut ax = vec![0.0; self.p.max(1)];
                if self.p > 0 {
                    self.a.mul_acc(&self.x, 1.0, &mut ax);
                }
                let mut gxs = self.s.clone();
                self.g_mul_acc(&self.x, 1.0, &mut gxs);
                let res = (norm2(&ax[..self.p]) / norm_b).max(norm2(&gxs) / norm_h);
                if res / (-cx) <= settings.infeas_tol {
                    status = SolveStatus::Infeasible;
                    iters_done = iter;
                    break;
                }
            }

            // NT scaling and factorization
            if !self.scaling.compute(&self.blocks, &self.s, &self.z) || !self.factor() {
                status = SolveStatus::NumericalFailure;
                iters_done = iter;
                break;
            }
            let lambda = self.scaling.lambda.clone();

            // constant solve for the tau elimination
            let negc: Vec<f64> = self.c.iter().map(|v| -v).collect();
            let (vx, vy, vz) = self.kkt_solve(&negc, &self.b.clone(), &self.h.clone(), settings.refine_rounds);
            let denom_base = dot(&self.c, &vx) + dot(&self.b, &vy) + dot(&self.h, &vz) - self.kappa / self.tau;

            // --- affine (predictor) direction ---
            let mut ds_rhs = vec![0.0; self.q];
            jordan_product(&self.blocks, &lambda, &lambda, &mut ds_rhs);
            for v in ds_rhs.iter_mut() {
                *v = -*v;
            }
            let d_tau_kappa = -self.tau * self.kappa;

            let (_dx_a, _dy_a, dz_a, ds_a, dtau_a, dkappa_a) = self.direction(
                &rx, &ry, &rz, rtau, &ds_rhs, d_tau_kappa, &lambda, &vx, &vy, &vz, denom_base,
                settings.refine_rounds, 1.0,
            );

            // affine step length
            let alpha_aff = {
                let a_s = max_step(&self.blocks, &self.s, &ds_a);
                let a_z = max_step(&self.blocks, &self.z, &dz_a);
                let mut a = a_s.min(a_z);
                if dtau_a < 0.0 {
                    a = a.min(-self.tau / dtau_a);
                }
                if dkappa_a < 0.0 {
                    a = a.min(-self.kappa / dkappa_a);
                }
                a.min(1.0)
            };
            let mu_aff = {
                let mut acc = 0.0;
                for i in 0..self.q {
                    acc += (self.s[i] + alpha_aff * ds_a[i]) * (self.z[i] + alpha_aff * dz_a[i]);
                }
                acc += (self.tau + alpha_aff * dtau_a) * (self.kappa + alpha_aff * dkappa_a);
                acc / (self.nu + 1.0)
            };
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // --- combined (corrector) direction ---
            let mut wds = ds_a.clone();
            self.scaling.apply_w_inv(&self.blocks, &mut wds);
            let mut wdz = dz_a.clone();
            self.scaling.apply_w(&self.blocks, &mut wdz);
            let mut corr = vec![0.0; self.q];
            jordan_product(&self.blocks, &wds, &wdz, &mut corr);

            let mut id_el = vec![0.0; self.q];
            identity_element(&self.blocks, &mut id_el);
            for i in 0..self.q {
                ds_rhs[i] = ds_rhs[i] + sigma * mu * id_el[i] - corr[i];
            }
            let d_tau_kappa = -self.tau * self.kappa + sigma * mu - dtau_a * dkappa_a;

            let residual_scale = 1.0 - sigma;
            let (dx, dy, dz, ds, dtau, dkappa) = self.direction(
                &rx, &ry, &rz, rtau, &ds_rhs, d_tau_kappa, &lambda, &vx, &vy, &vz, denom_base,
                settings.refine_rounds, residual_scale,
            );

            let alpha = {
                let a_s = max_step(&self.blocks, &self.s, &ds);
                let a_z = max_step(&self.blocks, &self.z, &dz);
                let mut a = a_s.min(a_z);
                if dtau < 0.0 {
                    a = a.min(-self.tau / dtau);
                }
                if dkappa < 0.0 {
                    a = a.min(-self.kappa / dkappa);
                }
                (settings.step_frac * a).min(1.0)
            };

            if !alpha.is_finite() || alpha <= 1e-14 {
                status = SolveStatus::NumericalFailure;
                iters_done = iter;
                break;
            }

            for i in 0..self.n {
                self.x[i] += alpha * dx[i];
            }
            for i in 0..self.p {
                self.y[i] += alpha * dy[i];
            }
            for i in 0..self.q {
                self.z[i] += alpha * dz[i];
                self.s[i] += alpha * ds[i];
            }
            self.tau += alpha * dtau;
            self.kappa += alpha * dkappa;

            if !self.tau.is_finite() || self.tau <= 1e-300 {
                status = SolveStatus::NumericalFailure;
                iters_done = iter;
                break;
            }
        }

        match status {
            SolveStatus::Optimal | SolveStatus::Infeasible => {
                let mut rx = self.c.iter().map(|v| v * self.tau).collect::<Vec<f64>>();
                self.a.tr_mul_acc(&self.y, 1.0, &mut rx);
                self.gt_mul_acc(&self.z, 1.0, &mut rx);
                let mut ry: Vec<f64> = self.b.iter().map(|v| -v * self.tau).collect();
                self.a.mul_acc(&self.x, 1.0, &mut ry);
                let mut rz: Vec<f64> =
                    (0..self.q).map(|i| self.s[i] - self.h[i] * self.tau).collect();
                self.g_mul_acc(&self.x, 1.0, &mut rz);
                let inv_tau = 1.0 / self.tau;
                let pres = (norm2(&ry) / norm_b).max(norm2(&rz) / norm_h) * inv_tau;
                let dres = norm2(&rx) / norm_c * inv_tau;
                let gap = dot(&self.s, &self.z) * inv_tau * inv_tau;
                let relgap = gap / (dot(&self.c, &self.x) * inv_tau).abs().max(1.0);
                self.emit(status, iters_done, relgap, pres, dres)
            }
            SolveStatus::MaxIters | SolveStatus::NumericalFailure => {
                // return the best iterate seen
                let (_, mut sol) = best.expect("at least one iterate recorded");
                sol.status = status;
                sol.iterations = iters_done;
                sol
            }
        }
    }

    /// Solves one Newton system of the homogeneous embedding given the
    /// right-hand sides and the constant (c,b,h) solve.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        rx: &[f64],
        ry: &[f64],
        rz: &[f64],
        rtau: f64,
        ds_rhs: &[f64],
        d_tau_kappa: f64,
        lambda: &[f64],
        vx: &[f64],
        vy: &[f64],
        vz: &[f64],
        denom: f64,
        refine: usize,
        residual_scale: f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
        // bz' = -rz*scale - W (lambda \ ds_rhs)
        let mut lam_div = vec![0.0; self.q];
        jordan_div(&self.blocks, lambda, ds_rhs, &mut lam_div);
        let mut wld = lam_div.clone();
        self.scaling.apply_w(&self.blocks, &mut wld);

        let bx: Vec<f64> = rx.iter().map(|v| -v * residual_scale).collect();
        let by: Vec<f64> = ry.iter().map(|v| -v * residual_scale).collect();
        let bz: Vec<f64> = (0..self.q)
            .map(|i| -rz[i] * residual_scale - wld[i])
            .collect();

        let (ux, uy, uz) = self.kkt_solve(&bx, &by, &bz, refine);

        let num = -rtau * residual_scale
            - d_tau_kappa / self.tau
            - (dot(&self.c, &ux) + dot(&self.b, &uy) + dot(&self.h, &uz));
        let dtau = num / denom;

        let dx: Vec<f64> = (0..self.n).map(|i| ux[i] + dtau * vx[i]).collect();
        let dy: Vec<f64> = (0..self.p).map(|i| uy[i] + dtau * vy[i]).collect();
        let dz: Vec<f64> = (0..self.q).map(|i| uz[i] + dtau * vz[i]).collect();

        // ds = W(lambda \ ds_rhs) - W^2 dz
        let mut w2dz = dz.clone();
        self.scaling.apply_w2(&self.blocks, &mut w2dz);
        let ds: Vec<f64> = (0..self.q).map(|i| wld[i] - w2dz[i]).collect();

        let dkappa = (d_tau_kappa - self.kappa * dtau) / self.tau;
        (dx, dy, dz, ds, dtau, dkappa)
    }

    fn emit(
        &self,
        status: SolveStatus,
        iterations: usize,
        gap: f64,
        pres: f64,
        dres: f64,
    ) -> ConeSolution {
        let inv_tau = 1.0 / self.tau;
        ConeSolution {
            primal: self.x.iter().map(|v| v * inv_tau).collect(),
            dual_eq: self.y.iter().map(|v| v * inv_tau).collect(),
            dual_cone: self.z.iter().map(|v| v * inv_tau).collect(),
            objective_value: dot(&self.c, &self.x) * inv_tau,
            status,
            gap,
            primal_residual: pres,
            dual_residual: dres,
            iterations,
        }
    }
}

/// Shifts a point into the cone interior along the identity element.
fn shift_to_interior(blocks: &[Block], u: &[f64]) -> Vec<f64> {
    let mut margin = 0.0f64; // how far outside the cone u is
    for b in blocks {
        match *b {
            Block::Orthant(o, d) => {
                for i in o..o + d {
                    margin = margin.max(-u[i]);
                }
            }
            Block::Soc(o, d) => {
                let n1 = norm2(&u[o + 1..o + d]);
                margin = margin.max(n1 - u[o]);
            }
        }
    }
    let mut out = u.to_vec();
    if margin >= -1e-8 {
        let shift = 1.0 + margin;
        for b in blocks {
            match *b {
                Block::Orthant(o, d) => {
                    for v in out[o..o + d].iter_mut() {
                        *v += shift;
                    }
                }
                Block::Soc(o, _) => out[o] += shift,
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{ConeKind, ConeProgram, SparseMatrix};
    use approx::assert_relative_eq;

    fn soc_block(rows: Vec<super::super::SparseRow>, offset: Vec<f64>, ncols: usize) -> (SparseMatrix, Vec<f64>) {
        let mut m = SparseMatrix::empty(ncols);
        for r in rows {
            m.push_row(r);
        }
        (m, offset)
    }

    #[test]
    fn nt_scaling_identities() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let blocks = vec![Block::Orthant(0, 3), Block::Soc(3, 4)];
        let q = 7;
        let mut s = vec![0.0; q];
        let mut z = vec![0.0; q];
        for trial in 0..50 {
            for i in 0..3 {
                s[i] = rng.gen_range(0.1..3.0);
                z[i] = rng.gen_range(0.1..3.0);
            }
            for (vec, _off) in [(&mut s, 3), (&mut z, 3)] {
                let inner: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let nrm = norm2(&inner);
                let r0 = nrm + rng.gen_range(0.05..2.0);
                vec[3] = r0;
                vec[4..7].copy_from_slice(&inner);
            }
            let mut sc = Scaling::identity(&blocks, q);
            assert!(sc.compute(&blocks, &s, &z), "trial {trial}");
            // W z == W^-1 s == lambda
            let mut wz = z.clone();
            sc.apply_w(&blocks, &mut wz);
            let mut wis = s.clone();
            sc.apply_w_inv(&blocks, &mut wis);
            for i in 0..q {
                assert_relative_eq!(wz[i], sc.lambda[i], epsilon = 1e-9);
                assert_relative_eq!(wis[i], sc.lambda[i], epsilon = 1e-9);
            }
            // W^-1 (W u) == u and W^2 u == W(W u)
            let u: Vec<f64> = (0..q).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut round = u.clone();
            sc.apply_w(&blocks, &mut round);
            let mut w2 = u.clone();
            sc.apply_w2(&blocks, &mut w2);
            let mut ww = round.clone();
            sc.apply_w(&blocks, &mut ww);
            sc.apply_w_inv(&blocks, &mut round);
            for i in 0..q {
                assert_relative_eq!(round[i], u[i], epsilon = 1e-9);
                assert_relative_eq!(w2[i], ww[i], epsilon = 1e-9);
            }
            // W^-2 (W^2 u) == u
            let mut back = w2.clone();
            sc.apply_w2_inv(&blocks, &mut back);
            for i in 0..q {
                assert_relative_eq!(back[i], u[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn epigraph_of_point_absolute_value() {
        // minimize t s.t. |x - 1| <= t: SOC block (t, x - 1)
        let mut p = ConeProgram::new(2, vec![0.0, 1.0]); // vars (x, t)
        let (m, off) = soc_block(
            vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            vec![0.0, -1.0],
            2,
        );
        p.add_block(ConeKind::SecondOrder, m, off);
        let sol = solve(&p, 1e-9, 100);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective_value, 0.0, epsilon = 1e-7);
        assert_relative_eq!(sol.primal[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn small_lp_with_equality() {
        // minimize x + 2y s.t. x + y = 1, x >= 0, y >= 0 -> (1, 0), obj 1
        let mut p = ConeProgram::new(2, vec![1.0, 2.0]);
        p.add_equality(vec![(0, 1.0), (1, 1.0)], 1.0);
        let mut m = SparseMatrix::empty(2);
        m.push_row(vec![(0, 1.0)]);
        m.push_row(vec![(1, 1.0)]);
        p.add_block(ConeKind::Nonnegative, m, vec![0.0, 0.0]);
        let sol = solve(&p, 1e-9, 100);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective_value, 1.0, epsilon = 1e-7);
        assert_relative_eq!(sol.primal[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(sol.primal[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn projection_onto_ball() {
        // minimize -x1 s.t. ||(x1, x2) - (0.3, 0.4)|| <= 0.5 -> x1 = 0.8
        let mut p = ConeProgram::new(2, vec![-1.0, 0.0]);
        let (m, off) = soc_block(
            vec![vec![], vec![(0, 1.0)], vec![(1, 1.0)]],
            vec![0.5, -0.3, -0.4],
            2,
        );
        p.add_block(ConeKind::SecondOrder, m, off);
        let sol = solve(&p, 1e-9, 100);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.primal[0], 0.8, epsilon = 1e-6);
        assert_relative_eq!(sol.primal[1], 0.4, epsilon = 1e-6);
    }

    #[test]
    fn detects_infeasible_orthant() {
        // x >= 1 and -x >= 0 simultaneously
        let mut p = ConeProgram::new(1, vec![0.0]);
        let mut m = SparseMatrix::empty(1);
        m.push_row(vec![(0, 1.0)]);
        m.push_row(vec![(0, -1.0)]);
        p.add_block(ConeKind::Nonnegative, m, vec![-1.0, 0.0]);
        let sol = solve(&p, 1e-8, 100);
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn deterministic_resolve() {
        let mut p = ConeProgram::new(3, vec![1.0, -0.5, 0.2]);
        p.add_equality(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0);
        let mut m = SparseMatrix::empty(3);
        for i in 0..3 {
            m.push_row(vec![(i, 1.0)]);
        }
        p.add_block(ConeKind::Nonnegative, m, vec![0.0; 3]);
        let (mq, off) = soc_block(
            vec![vec![], vec![(0, 1.0), (1, -1.0)], vec![(2, 1.0)]],
            vec![2.0, 0.0, 0.0],
            3,
        );
        p.add_block(ConeKind::SecondOrder, mq, off);
        let a = solve(&p, 1e-8, 200);
        let b = solve(&p, 1e-8, 200);
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
        assert_eq!(a.iterations, b.iterations);
    }
}
