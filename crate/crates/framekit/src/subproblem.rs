//! Per-column design subproblems: the convex program solved when one frame
//! vector is updated against the fixed competitors, in its original
//! (pre-epigraph) form, together with its canonicalization to a cone program.
//!
//! Keeping the subproblem as its own value lets the interior-point route
//! (via [`canonicalize`](Subproblem::canonicalize)) and the subgradient
//! oracle attack the same instance through entirely different code paths.

use crate::cone::{ConeKind, ConeProgram, SparseMatrix};
use crate::error::{Error, Result};
use crate::frame::C64;

/// Constraint structure of a column-update subproblem.
#[derive(Clone, Debug, PartialEq)]
pub enum SubproblemKind {
    /// Real vector in a trust ball.
    Real,
    /// Complex vector in a trust ball.
    Complex,
    /// Per-entry trust disks plus per-entry magnitude bound
    /// |f_k| <= m^{-1/2} + gamma.
    Unital { gamma: f64 },
    /// Trust ball plus componentwise nonnegativity (on both real and
    /// imaginary parts in the complex case).
    Nonneg { real: bool },
    /// Trust ball with an l1 penalty lambda * ||f||_1 added to the objective.
    SparseL1 { real: bool, lambda: f64 },
    /// Trust ball with a fixed zero set imposed on the entries.
    FixedSupport { real: bool, zeros: Vec<usize> },
}

impl SubproblemKind {
    pub fn is_real(&self) -> bool {
        matches!(
            self,
            SubproblemKind::Real
                | SubproblemKind::Nonneg { real: true }
                | SubproblemKind::SparseL1 { real: true, .. }
                | SubproblemKind::FixedSupport { real: true, .. }
        )
    }
}

/// One column-update instance.
#[derive(Clone, Debug)]
pub struct Subproblem {
    /// Reference column h_i, length m.
    pub center: Vec<C64>,
    /// Fixed competitor columns h_j, j != i.
    pub competitors: Vec<Vec<C64>>,
    /// Squared trust radius T_i (per entry for the unital kind).
    pub radius_sq: f64,
    pub kind: SubproblemKind,
}

impl Subproblem {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// max_j |h_j^H f|
    pub fn max_correlation(&self, f: &[C64]) -> f64 {
        let mut best = 0.0f64;
        for a in &self.competitors {
            let mut acc = C64::new(0.0, 0.0);
            for (ak, fk) in a.iter().zip(f) {
                acc += ak.conj() * fk;
            }
            let v = acc.norm();
            if v > best {
                best = v;
            }
        }
        best
    }

    /// Full subproblem objective at a point (correlation term plus the l1
    /// term for the sparse kind).
    pub fn objective(&self, f: &[C64]) -> f64 {
        let base = self.max_correlation(f);
        match &self.kind {
            SubproblemKind::SparseL1 { lambda, .. } => {
                base + lambda * f.iter().map(|z| z.norm()).sum::<f64>()
            }
            _ => base,
        }
    }

    /// Violation of the constraint set at a point (0 when feasible).
    pub fn infeasibility(&self, f: &[C64]) -> f64 {
        let m = self.dim();
        let ball = |full: bool| -> f64 {
            let mut d2 = 0.0;
            for k in 0..m {
                let d = f[k] - self.center[k];
                d2 += d.norm_sqr();
            }
            if full {
                (d2.sqrt() - self.radius_sq.sqrt()).max(0.0)
            } else {
                0.0
            }
        };
        match &self.kind {
            SubproblemKind::Real | SubproblemKind::Complex => ball(true),
            SubproblemKind::Nonneg { .. } => {
                let mut v = ball(true);
                for z in f {
                    v = v.max(-z.re).max(-z.im);
                }
                v
            }
            SubproblemKind::SparseL1 { .. } => ball(true),
            SubproblemKind::FixedSupport { zeros, .. } => {
                let mut v = ball(true);
                for &k in zeros {
                    v = v.max(f[k].norm());
                }
                v
            }
            SubproblemKind::Unital { gamma } => {
                let r = self.radius_sq.sqrt();
                let mag = (m as f64).powf(-0.5) + gamma;
                let mut v: f64 = 0.0;
                for k in 0..m {
                    v = v.max((f[k] - self.center[k]).norm() - r);
                    v = v.max(f[k].norm() - mag);
                }
                v
            }
        }
    }

    /// Canonicalizes to the standard cone form. Variable layout before
    /// auxiliaries: the free entries of f (real, or split re/im), then the
    /// epigraph variable t; l1 auxiliaries follow t.
    pub fn canonicalize(&self) -> Result<ConeProgram> {
        if self.competitors.is_empty() {
            return Err(Error::MalformedProgram(
                "subproblem needs at least one competitor column".into(),
            ));
        }
        if self.radius_sq <= 0.0 {
            return Err(Error::MalformedProgram("trust radius must be positive".into()));
        }
        let m = self.dim();
        let real = self.kind.is_real();
        let zeros: &[usize] = match &self.kind {
            SubproblemKind::FixedSupport { zeros, .. } => zeros,
            _ => &[],
        };
        let free: Vec<usize> = (0..m).filter(|k| !zeros.contains(k)).collect();
        let nf = free.len();
        if nf == 0 {
            return Err(Error::MalformedProgram("all entries fixed to zero".into()));
        }
        // var index helpers
        let re_of = |slot: usize| slot;
        let im_of = |slot: usize| nf + slot; // complex only
        let t_var = if real { nf } else { 2 * nf };
        let num_core = t_var + 1;
        let num_aux = match &self.kind {
            SubproblemKind::SparseL1 { .. } => nf,
            _ => 0,
        };
        let num_vars = num_core + num_aux;

        let mut objective = vec![0.0; num_vars];
        objective[t_var] = 1.0;
        if let SubproblemKind::SparseL1 { lambda, .. } = &self.kind {
            for a in 0..num_aux {
                objective[num_core + a] = *lambda;
            }
        }
        let mut program = ConeProgram::new(num_vars, objective);

        // correlation epigraph: |h_j^H f| <= t for every competitor
        for comp in &self.competitors {
            // h^H f = sum_k conj(a_k) f_k restricted to free entries
            if real {
                // two orthant rows: t -+ a'f >= 0
                let mut block = SparseMatrix::empty(num_vars);
                let mut row_plus = vec![(t_var, 1.0)];
                let mut row_minus = vec![(t_var, 1.0)];
                for (slot, &k) in free.iter().enumerate() {
                    let a = comp[k].re;
                    if a != 0.0 {
                        row_plus.push((re_of(slot), -a));
                        row_minus.push((re_of(slot), a));
                    }
                }
                block.push_row(row_plus);
                block.push_row(row_minus);
                program.add_block(ConeKind::Nonnegative, block, vec![0.0, 0.0]);
            } else {
                // SOC3: (t, Re h^H f, Im h^H f)
                let mut block = SparseMatrix::empty(num_vars);
                block.push_row(vec![(t_var, 1.0)]);
                let mut row_re = Vec::new();
                let mut row_im = Vec::new();
                for (slot, &k) in free.iter().enumerate() {
                    let (ar, ai) = (comp[k].re, comp[k].im);
                    if ar != 0.0 {
                        row_re.push((re_of(slot), ar));
                        row_im.push((im_of(slot), ar));
                    }
                    if ai != 0.0 {
                        row_re.push((im_of(slot), ai));
                        row_im.push((re_of(slot), -ai));
                    }
                }
                block.push_row(row_re);
                block.push_row(row_im);
                program.add_block(ConeKind::SecondOrder, block, vec![0.0, 0.0, 0.0]);
            }
        }

        let sqrt_t = self.radius_sq.sqrt();
        match &self.kind {
            SubproblemKind::Unital { gamma } => {
                // per-entry trust disk and magnitude disk
                let mag = (m as f64).powf(-0.5) + gamma;
                for (slot, &k) in free.iter().enumerate() {
                    let mut trust = SparseMatrix::empty(num_vars);
                    trust.push_row(vec![]);
                    trust.push_row(vec![(re_of(slot), 1.0)]);
                    trust.push_row(vec![(im_of(slot), 1.0)]);
                    program.add_block(
                        ConeKind::SecondOrder,
                        trust,
                        vec![sqrt_t, -self.center[k].re, -self.center[k].im],
                    );
                    let mut bound = SparseMatrix::empty(num_vars);
                    bound.push_row(vec![]);
                    bound.push_row(vec![(re_of(slot), 1.0)]);
                    bound.push_row(vec![(im_of(slot), 1.0)]);
                    program.add_block(ConeKind::SecondOrder, bound, vec![mag, 0.0, 0.0]);
                }
            }
            _ => {
                // one trust ball over all free entries
                let mut ball = SparseMatrix::empty(num_vars);
                ball.push_row(vec![]);
                let mut offset = vec![sqrt_t];
                for (slot, &k) in free.iter().enumerate() {
                    ball.push_row(vec![(re_of(slot), 1.0)]);
                    offset.push(-self.center[k].re);
                }
                if !real {
                    for (slot, &k) in free.iter().enumerate() {
                        ball.push_row(vec![(im_of(slot), 1.0)]);
                        offset.push(-self.center[k].im);
                    }
                }
                program.add_block(ConeKind::SecondOrder, ball, offset);
            }
        }

        match &self.kind {
            SubproblemKind::Nonneg { real: true } => {
                let mut block = SparseMatrix::empty(num_vars);
                for slot in 0..nf {
                    block.push_row(vec![(re_of(slot), 1.0)]);
                }
                program.add_block(ConeKind::Nonnegative, block, vec![0.0; nf]);
            }
            SubproblemKind::Nonneg { real: false } => {
                let mut block = SparseMatrix::empty(num_vars);
                for slot in 0..nf {
                    block.push_row(vec![(re_of(slot), 1.0)]);
                }
                for slot in 0..nf {
                    block.push_row(vec![(im_of(slot), 1.0)]);
                }
                program.add_block(ConeKind::Nonnegative, block, vec![0.0; 2 * nf]);
            }
            SubproblemKind::SparseL1 { real: true, .. } => {
                // u_k >= |f_k| via two orthant rows
                let mut block = SparseMatrix::empty(num_vars);
                let mut offset = Vec::new();
                for slot in 0..nf {
                    block.push_row(vec![(num_core + slot, 1.0), (re_of(slot), -1.0)]);
                    block.push_row(vec![(num_core + slot, 1.0), (re_of(slot), 1.0)]);
                    offset.extend_from_slice(&[0.0, 0.0]);
                }
                program.add_block(ConeKind::Nonnegative, block, offset);
            }
            SubproblemKind::SparseL1 { real: false, .. } => {
                // u_k >= |f_k| as SOC3 per entry
                for slot in 0..nf {
                    let mut block = SparseMatrix::empty(num_vars);
                    block.push_row(vec![(num_core + slot, 1.0)]);
                    block.push_row(vec![(re_of(slot), 1.0)]);
                    block.push_row(vec![(im_of(slot), 1.0)]);
                    program.add_block(ConeKind::SecondOrder, block, vec![0.0; 3]);
                }
            }
            _ => {}
        }

        Ok(program)
    }

    /// Reassembles the complex column from a solver primal vector,
    /// re-inserting entries eliminated by presolve.
    pub fn extract_column(&self, primal: &[f64]) -> Vec<C64> {
        let m = self.dim();
        let real = self.kind.is_real();
        let zeros: &[usize] = match &self.kind {
            SubproblemKind::FixedSupport { zeros, .. } => zeros,
            _ => &[],
        };
        let free: Vec<usize> = (0..m).filter(|k| !zeros.contains(k)).collect();
        let nf = free.len();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for (slot, &k) in free.iter().enumerate() {
            out[k] = if real {
                C64::new(primal[slot], 0.0)
            } else {
                C64::new(primal[slot], primal[nf + slot])
            };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{self, SolveStatus};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn real_program_shape() {
        // (m, n) = (3, 4): 3 + 1 variables, 3 competitors -> 2*3 orthant rows,
        // plus one SOC trust ball.
        let sub = Subproblem {
            center: vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            competitors: vec![
                vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
                vec![c(0.6, 0.0), c(0.8, 0.0), c(0.0, 0.0)],
            ],
            radius_sq: 0.5,
            kind: SubproblemKind::Real,
        };
        let p = sub.canonicalize().unwrap();
        p.validate().unwrap();
        assert_eq!(p.num_vars, 4);
        let orthant_rows: usize = p
            .blocks
            .iter()
            .filter(|b| b.kind == cone::ConeKind::Nonnegative)
            .map(|b| b.dim())
            .sum();
        assert_eq!(orthant_rows, 6);
        let socs: Vec<usize> = p
            .blocks
            .iter()
            .filter(|b| b.kind == cone::ConeKind::SecondOrder)
            .map(|b| b.dim())
            .collect();
        assert_eq!(socs, vec![4]);
    }

    #[test]
    fn complex_program_has_2m_plus_1_core_variables() {
        let m = 4;
        let center: Vec<C64> = (0..m).map(|k| c(1.0 / (k as f64 + 1.0), 0.1)).collect();
        let comp: Vec<Vec<C64>> = (0..6)
            .map(|j| (0..m).map(|k| c((j + k) as f64 * 0.1, 0.05 * j as f64)).collect())
            .collect();
        let sub = Subproblem {
            center,
            competitors: comp,
            radius_sq: 0.3,
            kind: SubproblemKind::Complex,
        };
        let p = sub.canonicalize().unwrap();
        assert_eq!(p.num_vars, 2 * m + 1);
        // N - 1 = 6 correlation constraints
        let soc3 = p.blocks.iter().filter(|b| b.dim() == 3).count();
        assert_eq!(soc3, 6);
    }

    #[test]
    fn unital_block_structure() {
        let m = 4;
        let scale = (m as f64).powf(-0.5);
        let center: Vec<C64> = (0..m)
            .map(|k| C64::from_polar(scale, 0.3 * k as f64))
            .collect();
        let comp: Vec<Vec<C64>> = (0..3)
            .map(|j| {
                (0..m)
                    .map(|k| C64::from_polar(scale, 0.5 * (j + 2) as f64 * (k + 1) as f64))
                    .collect()
            })
            .collect();
        let sub = Subproblem {
            center,
            competitors: comp,
            radius_sq: 0.2,
            kind: SubproblemKind::Unital { gamma: 0.01 },
        };
        let p = sub.canonicalize().unwrap();
        // 3 objective SOC3s + 4 trust + 4 magnitude
        let soc3 = p.blocks.iter().filter(|b| b.dim() == 3).count();
        assert_eq!(soc3, 3 + 4 + 4);
    }

    #[test]
    fn single_competitor_matches_slab_projection() {
        // minimize |a'f| over ||f - e1|| <= sqrt(T) with a = e1:
        // optimum 1 - sqrt(T) at f = (1 - sqrt(T), 0).
        let t = 0.64;
        let sub = Subproblem {
            center: vec![c(1.0, 0.0), c(0.0, 0.0)],
            competitors: vec![vec![c(1.0, 0.0), c(0.0, 0.0)]],
            radius_sq: t,
            kind: SubproblemKind::Real,
        };
        let p = sub.canonicalize().unwrap();
        let sol = cone::solve(&p, 1e-9, 200);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective_value, 1.0 - t.sqrt(), epsilon = 1e-7);
        let f = sub.extract_column(&sol.primal);
        assert_relative_eq!(f[0].re, 1.0 - t.sqrt(), epsilon = 1e-6);
        assert_relative_eq!(f[1].re, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn fixed_support_entries_are_exact_zeros() {
        let sub = Subproblem {
            center: vec![c(0.8, 0.0), c(0.0, 0.0), c(0.6, 0.0)],
            competitors: vec![vec![c(0.6, 0.0), c(0.0, 0.0), c(0.8, 0.0)]],
            radius_sq: 0.3,
            kind: SubproblemKind::FixedSupport {
                real: true,
                zeros: vec![1],
            },
        };
        let p = sub.canonicalize().unwrap();
        // presolve eliminated one variable
        assert_eq!(p.num_vars, 3); // 2 free + t
        let sol = cone::solve(&p, 1e-9, 200);
        assert_eq!(sol.status, SolveStatus::Optimal);
        let f = sub.extract_column(&sol.primal);
        assert_eq!(f[1], c(0.0, 0.0));
    }

    #[test]
    fn center_is_feasible_hence_objective_bounded_by_center() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let m = 3;
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<C64> {
                let mut v: Vec<C64> = (0..m)
                    .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                for z in v.iter_mut() {
                    *z /= nrm;
                }
                v
            };
            let center = mk(&mut rng);
            let competitors: Vec<Vec<C64>> = (0..4).map(|_| mk(&mut rng)).collect();
            let sub = Subproblem {
                center: center.clone(),
                competitors,
                radius_sq: 0.2,
                kind: SubproblemKind::Complex,
            };
            let sol = cone::solve(&sub.canonicalize().unwrap(), 1e-8, 200);
            assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
            let at_center = sub.max_correlation(&center);
            assert!(
                sol.objective_value <= at_center + 1e-7,
                "trial {trial}: {} > {}",
                sol.objective_value,
                at_center
            );
        }
    }
}
