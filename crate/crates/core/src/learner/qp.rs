//! Dual coordinate ascent for the n-slack restricted QP
//!
//! ```text
//! min_w,ζ  ½‖w‖² + U Σᵢ ζᵢ    s.t.  wᵀaⱼ ≥ bⱼ − ζ_{i(j)},  ζᵢ ≥ 0
//! ```
//!
//! with `aⱼ = Δⱼ·δψⱼ`, `bⱼ = Δⱼ·μⱼ` and `U = C/n`. The dual is
//!
//! ```text
//! max_α  Σⱼ αⱼ bⱼ − ½‖Σⱼ αⱼ aⱼ‖²    s.t.  αⱼ ≥ 0,  Σ_{j∈i} αⱼ ≤ U
//! ```
//!
//! Each example's block is optimised by single-coordinate steps followed by
//! pairwise transfers when the block's budget `U` is exhausted.

use rand::seq::SliceRandom;
use rand::Rng;

use super::Constraint;

/// Solves are abandoned after this many sweeps.
const MAX_SWEEPS: usize = 200_000;
/// Constraints idle (zero dual weight) for this many solves are dropped.
const PRUNE_AFTER: usize = 10;

#[derive(Clone, Debug)]
struct Row {
    c: Constraint,
    a: Vec<f64>,
    b: f64,
    sq: f64,
    alpha: f64,
    idle: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct DualQp {
    budget: f64,
    n_examples: usize,
    dim: usize,
    rows: Vec<Row>,
    w: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SolveStats {
    pub primal: f64,
    pub dual: f64,
    pub sweeps: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl DualQp {
    pub fn new(budget: f64, n_examples: usize, dim: usize) -> Self {
        DualQp { budget, n_examples, dim, rows: Vec::new(), w: vec![0.0; dim] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn contains(&self, example: usize, frame: usize) -> bool {
        self.rows.iter().any(|r| r.c.example == example && r.c.frame == frame)
    }

    pub fn add(&mut self, c: Constraint) {
        debug_assert!(c.delta > 0.0);
        debug_assert_eq!(c.diff.len(), self.dim);
        let a: Vec<f64> = c.diff.iter().map(|v| c.delta * v).collect();
        let sq = dot(&a, &a);
        let b = c.delta * c.mu;
        self.rows.push(Row { c, a, b, sq, alpha: 0.0, idle: 0 });
    }

    /// Replaces every stored margin value, e.g. after the semantic scores are
    /// refreshed.
    pub fn set_margins(&mut self, mu: impl Fn(usize, usize) -> f64) {
        for r in &mut self.rows {
            r.c.mu = mu(r.c.example, r.c.frame);
            r.b = r.c.delta * r.c.mu;
        }
    }

    /// `max(0, max over stored constraints of bⱼ − wᵀaⱼ)` for one example.
    #[cfg(test)]
    pub fn slack(&self, example: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.c.example == example)
            .map(|r| r.b - dot(&self.w, &r.a))
            .fold(0.0, f64::max)
    }

    pub fn slacks(&self) -> Vec<f64> {
        let mut s = vec![0.0f64; self.n_examples];
        for r in &self.rows {
            let v = r.b - dot(&self.w, &r.a);
            s[r.c.example] = s[r.c.example].max(v);
        }
        s
    }

    pub fn primal(&self) -> f64 {
        0.5 * dot(&self.w, &self.w) + self.budget * self.slacks().iter().sum::<f64>()
    }

    pub fn dual(&self) -> f64 {
        self.rows.iter().map(|r| r.alpha * r.b).sum::<f64>() - 0.5 * dot(&self.w, &self.w)
    }

    fn recompute_w(&mut self) {
        let mut w = vec![0.0; self.dim];
        for r in &self.rows {
            if r.alpha != 0.0 {
                w.iter_mut().zip(&r.a).for_each(|(x, a)| *x += r.alpha * a);
            }
        }
        self.w = w;
    }

    fn shift(&mut self, j: usize, delta: f64) {
        let r = &mut self.rows[j];
        r.alpha += delta;
        for (x, a) in self.w.iter_mut().zip(&r.a) {
            *x += delta * a;
        }
    }

    fn grad(&self, j: usize) -> f64 {
        self.rows[j].b - dot(&self.w, &self.rows[j].a)
    }

    fn optimise_block(&mut self, members: &[usize]) {
        for &j in members {
            let used: f64 = members.iter().map(|&m| self.rows[m].alpha).sum();
            let alpha = self.rows[j].alpha;
            let upper = (alpha + self.budget - used).max(0.0);
            let g = self.grad(j);
            let sq = self.rows[j].sq;
            let target = if sq > 0.0 {
                alpha + g / sq
            } else if g > 0.0 {
                upper
            } else {
                0.0
            };
            let new = target.clamp(0.0, upper);
            if new != alpha {
                self.shift(j, new - alpha);
            }
        }
        if members.len() < 2 {
            return;
        }
        for _ in 0..4 * members.len() {
            let grads: Vec<f64> = members.iter().map(|&j| self.grad(j)).collect();
            let hi = (0..members.len()).max_by(|&a, &b| grads[a].total_cmp(&grads[b])).unwrap();
            let lo = (0..members.len())
                .filter(|&m| self.rows[members[m]].alpha > 0.0 && m != hi)
                .min_by(|&a, &b| grads[a].total_cmp(&grads[b]));
            let Some(lo) = lo else { break };
            let gap = grads[hi] - grads[lo];
            if gap <= 1e-13 {
                break;
            }
            let (jh, jl) = (members[hi], members[lo]);
            let dd: f64 = self.rows[jh]
                .a
                .iter()
                .zip(&self.rows[jl].a)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let mut t = if dd > 0.0 { gap / dd } else { f64::INFINITY };
            t = t.min(self.rows[jl].alpha);
            if t <= 0.0 {
                break;
            }
            self.shift(jh, t);
            self.shift(jl, -t);
            let a = self.rows[jl].alpha;
            if a < 0.0 {
                self.shift(jl, -a);
            }
        }
    }

    /// Ascends the dual until the duality gap is at most `gap_tol`.
    pub fn solve<R: Rng>(&mut self, gap_tol: f64, rng: &mut R) -> SolveStats {
        self.recompute_w();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.n_examples];
        for (j, r) in self.rows.iter().enumerate() {
            groups[r.c.example].push(j);
        }
        let mut order: Vec<usize> = (0..self.n_examples).filter(|&i| !groups[i].is_empty()).collect();
        let mut sweeps = 0;
        loop {
            let (p, d) = (self.primal(), self.dual());
            if p - d <= gap_tol || sweeps >= MAX_SWEEPS {
                for r in &mut self.rows {
                    r.idle = if r.alpha == 0.0 { r.idle + 1 } else { 0 };
                }
                return SolveStats { primal: p, dual: d, sweeps };
            }
            order.shuffle(rng);
            for &i in &order {
                let members = groups[i].clone();
                self.optimise_block(&members);
            }
            sweeps += 1;
            if sweeps % 64 == 0 {
                self.recompute_w();
            }
        }
    }

    /// Drops constraints that carried no dual weight for the last few solves.
    pub fn prune(&mut self) -> usize {
        let before = self.rows.len();
        self.rows.retain(|r| r.idle < PRUNE_AFTER);
        before - self.rows.len()
    }
}
