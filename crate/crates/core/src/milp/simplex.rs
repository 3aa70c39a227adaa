//! Bounded-variable two-phase primal simplex over a dense tableau.
//!
//! Solves `min c·x` subject to linear rows and box bounds `lo <= x <= hi`.
//! Phase 1 drives per-row artificials to zero from an identity basis; phase 2
//! optimizes the real objective with artificials pinned at zero. Pivoting is
//! Dantzig by default and switches to Bland's rule after a run of degenerate
//! steps, so the method terminates and every run is deterministic.

use super::Cmp;

const TOL_D: f64 = 1e-9;
const TOL_PIV: f64 = 1e-8;
const TOL_STEP: f64 = 1e-10;
const TOL_RATIO_TIE: f64 = 1e-9;
const DEGENERATE_LIMIT: u32 = 60;
const REFRESH_PERIOD: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum ColStatus {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// LP outcome as seen by the branch-and-bound.
pub(crate) enum LpResult {
    Optimal {
        value: f64,
        x: Vec<f64>,
        /// Reduced costs of the structural columns at the optimal basis.
        /// `value + d[j]` bounds every solution with column `j` raised off
        /// its lower bound to 1, and `value - d[j]` every solution with `j`
        /// dropped off its upper bound to 0 (basic columns carry 0).
        d: Vec<f64>,
    },
    /// Phase 1 stalled above zero; `residual` is the remaining infeasibility,
    /// which the caller should treat as proof only when clearly nonzero.
    Infeasible { residual: f64 },
    /// Iteration cap or numerical trouble: no usable answer, not a bound.
    Unavailable,
}

/// Relaxation input: `n` structural columns with costs and bounds, plus rows.
pub(crate) struct LpInput<'a> {
    pub n: usize,
    pub costs: &'a [f64],
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    pub rows: &'a [(Vec<(usize, f64)>, Cmp, f64)],
}

struct Tableau {
    m: usize,
    width: usize,
    /// Row-major `m x width` working matrix, kept equal to `B^-1 A`.
    t: Vec<f64>,
    /// `B^-1 b`, carried through the same row operations.
    bhat: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    status: Vec<ColStatus>,
    basis: Vec<usize>,
    /// Current values of basic variables, refreshed periodically.
    beta: Vec<f64>,
    d: Vec<f64>,
    costs: Vec<f64>,
    iterations: u64,
    degenerate_run: u32,
    bland: bool,
}

pub(crate) fn solve_lp(input: &LpInput) -> LpResult {
    let m = input.rows.len();
    if m == 0 {
        let mut value = 0.0;
        let mut x = Vec::with_capacity(input.n);
        for j in 0..input.n {
            let v = if input.costs[j] >= 0.0 {
                input.lo[j]
            } else {
                input.hi[j]
            };
            value += input.costs[j] * v;
            x.push(v);
        }
        let d = input.costs.to_vec();
        return LpResult::Optimal { value, x, d };
    }

    // Residual of each row at the all-lower starting point decides whether
    // its slack can start basic (a crash basis) or an artificial is needed:
    // equalities always take one, inequalities only when their slack would
    // start negative. Phase 1 then only has to repair those few rows.
    let mut residual = vec![0.0; m];
    for (i, (terms, _, rhs)) in input.rows.iter().enumerate() {
        let mut r = *rhs;
        for &(col, coef) in terms {
            r -= coef * input.lo[col];
        }
        residual[i] = r;
    }
    let needs_art: Vec<bool> = input
        .rows
        .iter()
        .enumerate()
        .map(|(i, (_, cmp, _))| match cmp {
            Cmp::Eq => true,
            Cmp::Le => residual[i] < 0.0,
            Cmp::Ge => residual[i] > 0.0,
        })
        .collect();

    let n_slack = input
        .rows
        .iter()
        .filter(|(_, cmp, _)| *cmp != Cmp::Eq)
        .count();
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let art_base = input.n + n_slack;
    let width = art_base + n_art;

    let mut t = vec![0.0; m * width];
    let mut lo = vec![0.0; width];
    let mut hi = vec![f64::INFINITY; width];
    lo[..input.n].copy_from_slice(input.lo);
    hi[..input.n].copy_from_slice(input.hi);

    let mut status = vec![ColStatus::AtLower; width];
    let mut basis = vec![0usize; m];
    let mut beta = vec![0.0; m];
    let mut bhat = vec![0.0; m];

    let mut slack_idx = input.n;
    let mut art_idx = art_base;
    for (i, (terms, cmp, rhs)) in input.rows.iter().enumerate() {
        let row = &mut t[i * width..(i + 1) * width];
        for &(col, coef) in terms {
            row[col] += coef;
        }
        let slack = if *cmp != Cmp::Eq {
            row[slack_idx] = if *cmp == Cmp::Le { 1.0 } else { -1.0 };
            slack_idx += 1;
            Some(slack_idx - 1)
        } else {
            None
        };
        // Scale the row so its starting basic column has coefficient +1 and
        // a nonnegative starting value.
        let basic = if needs_art[i] {
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            if sign < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            bhat[i] = sign * *rhs;
            row[art_idx] = 1.0;
            art_idx += 1;
            art_idx - 1
        } else {
            let sign = if *cmp == Cmp::Le { 1.0 } else { -1.0 };
            if sign < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            bhat[i] = sign * *rhs;
            slack.expect("inequality rows have slacks")
        };
        basis[i] = basic;
        status[basic] = ColStatus::Basic(i);
        beta[i] = residual[i].abs();
    }

    let mut tab = Tableau {
        m,
        width,
        t,
        bhat,
        lo,
        hi,
        status,
        basis,
        beta,
        d: vec![0.0; width],
        costs: vec![0.0; width],
        iterations: 0,
        degenerate_run: 0,
        bland: false,
    };

    // Phase 1: minimize the sum of artificials (skipped when none exist).
    if n_art > 0 {
        for j in art_base..width {
            tab.costs[j] = 1.0;
        }
        tab.recompute_reduced();
        if !tab.optimize() {
            return LpResult::Unavailable;
        }
        let residual: f64 = (art_base..width).map(|j| tab.value_of(j)).sum();
        if residual > TOL_D {
            return LpResult::Infeasible { residual };
        }
        // Artificials frozen at zero from here on.
        for j in art_base..width {
            tab.hi[j] = 0.0;
            tab.costs[j] = 0.0;
        }
    }

    // Phase 2: the real objective.
    for j in 0..input.n {
        tab.costs[j] = input.costs[j];
    }
    tab.bland = false;
    tab.degenerate_run = 0;
    tab.recompute_reduced();
    if !tab.optimize() {
        return LpResult::Unavailable;
    }

    // One clean recomputation so the answer reflects the final basis rather
    // than incrementally updated (and slightly drifted) working values.
    tab.refresh_beta();
    tab.recompute_reduced();

    let x: Vec<f64> = (0..input.n).map(|j| tab.value_of(j)).collect();
    let value = x
        .iter()
        .zip(input.costs)
        .map(|(v, c)| v * c)
        .sum::<f64>();
    let d = tab.d[..input.n].to_vec();
    LpResult::Optimal { value, x, d }
}

impl Tableau {
    fn value_of(&self, col: usize) -> f64 {
        match self.status[col] {
            ColStatus::Basic(row) => self.beta[row],
            ColStatus::AtLower => self.lo[col],
            ColStatus::AtUpper => self.hi[col],
        }
    }

    fn recompute_reduced(&mut self) {
        self.d.copy_from_slice(&self.costs);
        for i in 0..self.m {
            let cb = self.costs[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.width..(i + 1) * self.width];
            for (dj, &tij) in self.d.iter_mut().zip(row) {
                *dj -= cb * tij;
            }
        }
    }

    fn refresh_beta(&mut self) {
        for i in 0..self.m {
            let row = &self.t[i * self.width..(i + 1) * self.width];
            let mut v = self.bhat[i];
            for j in 0..self.width {
                match self.status[j] {
                    ColStatus::Basic(_) => {}
                    ColStatus::AtLower => v -= row[j] * self.lo[j],
                    ColStatus::AtUpper => v -= row[j] * self.hi[j],
                }
            }
            self.beta[i] = v;
        }
    }

    /// Runs pivots until optimal. Returns false on iteration cap or an
    /// unbounded ray (callers treat both as "no usable answer").
    fn optimize(&mut self) -> bool {
        let cap = 20_000 + 50 * (self.m as u64 + self.width as u64);
        loop {
            self.iterations += 1;
            if self.iterations > cap {
                return false;
            }
            if self.iterations % REFRESH_PERIOD == 0 {
                self.refresh_beta();
                self.recompute_reduced();
            }
            let entering = self.select_entering();
            let Some(j) = entering else {
                return true;
            };
            let dir = if self.status[j] == ColStatus::AtLower {
                1.0
            } else {
                -1.0
            };
            if !self.step(j, dir) {
                return false;
            }
        }
    }

    fn select_entering(&self) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..self.width {
            if self.hi[j] - self.lo[j] <= TOL_STEP {
                continue;
            }
            let violation = match self.status[j] {
                ColStatus::Basic(_) => continue,
                ColStatus::AtLower => -self.d[j],
                ColStatus::AtUpper => self.d[j],
            };
            if violation <= TOL_D {
                continue;
            }
            if self.bland {
                return Some(j);
            }
            if best.map_or(true, |(v, _)| violation > v) {
                best = Some((violation, j));
            }
        }
        best.map(|(_, j)| j)
    }

    /// Moves entering column `j` in direction `dir`; pivots or bound-flips.
    fn step(&mut self, j: usize, dir: f64) -> bool {
        let self_cap = self.hi[j] - self.lo[j];
        // First pass: smallest blocking ratio across basic rows.
        let mut min_ratio = f64::INFINITY;
        for i in 0..self.m {
            let rate = -self.t[i * self.width + j] * dir;
            let k = self.basis[i];
            let cap = if rate < -TOL_PIV {
                (self.beta[i] - self.lo[k]).max(0.0) / -rate
            } else if rate > TOL_PIV && self.hi[k].is_finite() {
                (self.hi[k] - self.beta[i]).max(0.0) / rate
            } else {
                continue;
            };
            if cap < min_ratio {
                min_ratio = cap;
            }
        }

        if self_cap <= min_ratio {
            if !self_cap.is_finite() {
                // Unbounded ray; impossible for well-posed inputs here.
                return false;
            }
            let delta = dir * self_cap;
            for i in 0..self.m {
                self.beta[i] -= self.t[i * self.width + j] * delta;
            }
            self.status[j] = if dir > 0.0 {
                ColStatus::AtUpper
            } else {
                ColStatus::AtLower
            };
            self.note_step(self_cap);
            return true;
        }

        // Second pass: pick the blocking row among near-ties.
        let mut pick: Option<(usize, bool)> = None;
        let mut pick_score = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..self.m {
            let rate = -self.t[i * self.width + j] * dir;
            let k = self.basis[i];
            let (cap, to_upper) = if rate < -TOL_PIV {
                ((self.beta[i] - self.lo[k]).max(0.0) / -rate, false)
            } else if rate > TOL_PIV && self.hi[k].is_finite() {
                ((self.hi[k] - self.beta[i]).max(0.0) / rate, true)
            } else {
                continue;
            };
            if cap > min_ratio + TOL_RATIO_TIE {
                continue;
            }
            if self.bland {
                if pick.map_or(true, |(r, _)| self.basis[r] > k) {
                    pick = Some((i, to_upper));
                }
            } else {
                let score = (self.t[i * self.width + j].abs(), usize::MAX - k);
                if score > pick_score {
                    pick_score = score;
                    pick = Some((i, to_upper));
                }
            }
        }
        let Some((r, to_upper)) = pick else {
            return false;
        };
        let step = min_ratio;
        let entering_new = self.value_of(j) + dir * step;

        for i in 0..self.m {
            if i != r {
                self.beta[i] -= self.t[i * self.width + j] * dir * step;
            }
        }
        let leaving = self.basis[r];
        self.status[leaving] = if to_upper {
            ColStatus::AtUpper
        } else {
            ColStatus::AtLower
        };

        // Eliminate column j from all other rows and the reduced-cost row.
        let pivot = self.t[r * self.width + j];
        let (head, rest) = self.t.split_at_mut(r * self.width);
        let (prow, tail) = rest.split_at_mut(self.width);
        for v in prow.iter_mut() {
            *v /= pivot;
        }
        self.bhat[r] /= pivot;
        for (i, chunk) in head.chunks_mut(self.width).enumerate() {
            let alpha = chunk[j];
            if alpha != 0.0 {
                for (v, &p) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= alpha * p;
                }
                self.bhat[i] -= alpha * self.bhat[r];
            }
        }
        for (off, chunk) in tail.chunks_mut(self.width).enumerate() {
            let i = r + 1 + off;
            let alpha = chunk[j];
            if alpha != 0.0 {
                for (v, &p) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= alpha * p;
                }
                self.bhat[i] -= alpha * self.bhat[r];
            }
        }
        let dj = self.d[j];
        if dj != 0.0 {
            for (v, &p) in self.d.iter_mut().zip(prow.iter()) {
                *v -= dj * p;
            }
        }

        self.basis[r] = j;
        self.status[j] = ColStatus::Basic(r);
        self.beta[r] = entering_new;
        self.note_step(step);
        true
    }

    fn note_step(&mut self, step: f64) {
        if step <= TOL_STEP {
            self.degenerate_run += 1;
            if self.degenerate_run >= DEGENERATE_LIMIT {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
        }
    }
}
