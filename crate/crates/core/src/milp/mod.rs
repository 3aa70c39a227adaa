//! 0-1 integer linear programs and a bundled exact solver.
//!
//! Models hold named binary variables, a linear objective to minimize, and
//! linear constraints. [`solve`] runs an exact branch-and-bound: domain
//! propagation plus valid lower bounds (a combinatorial bound always, an LP
//! relaxation where the model is small enough), so a result with
//! [`SolveStatus::Optimal`] is a proven minimum. The solver keeps no hidden
//! state and is deterministic for a given model and options.

mod lp_text;
mod simplex;
mod solver;

use std::collections::HashMap;
use std::time::Duration;

use thiserror::Error;

pub use lp_text::export_lp;

/// Errors from model construction or solving.
#[derive(Debug, Error)]
pub enum MilpError {
    #[error("variable `{0}` already exists")]
    DuplicateVariable(String),
    #[error("invalid variable name `{0}`")]
    BadVariableName(String),
    #[error("unknown variable id {0}")]
    UnknownVariable(usize),
    #[error("constraint has no terms")]
    EmptyConstraint,
}

/// Handle to a model variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Constraint comparison operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// One linear constraint: `terms <cmp> rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// A 0-1 minimization model.
#[derive(Debug, Clone, Default)]
pub struct IlpModel {
    names: Vec<String>,
    by_name: HashMap<String, VarId>,
    /// Objective coefficient per variable (0 when absent).
    costs: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl IlpModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a binary variable. Names must be unique and LP-format safe
    /// (`[A-Za-z_][A-Za-z0-9_]*`).
    pub fn add_var(&mut self, name: impl Into<String>) -> Result<VarId, MilpError> {
        let name = name.into();
        let mut chars = name.chars();
        let head_ok = chars
            .next()
            .map_or(false, |c| c.is_ascii_alphabetic() || c == '_');
        if !head_ok || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(MilpError::BadVariableName(name));
        }
        if self.by_name.contains_key(&name) {
            return Err(MilpError::DuplicateVariable(name));
        }
        let id = VarId(self.names.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.costs.push(0.0);
        Ok(id)
    }

    /// Sets the objective coefficient of one variable.
    pub fn set_cost(&mut self, var: VarId, cost: f64) -> Result<(), MilpError> {
        if var.0 >= self.names.len() {
            return Err(MilpError::UnknownVariable(var.0));
        }
        self.costs[var.0] = cost;
        Ok(())
    }

    /// Adds `terms <cmp> rhs`. Repeated variables in `terms` are summed.
    pub fn add_constraint(
        &mut self,
        terms: Vec<(VarId, f64)>,
        cmp: Cmp,
        rhs: f64,
    ) -> Result<(), MilpError> {
        if terms.is_empty() {
            return Err(MilpError::EmptyConstraint);
        }
        let mut folded: HashMap<usize, f64> = HashMap::new();
        for (v, c) in terms {
            if v.0 >= self.names.len() {
                return Err(MilpError::UnknownVariable(v.0));
            }
            *folded.entry(v.0).or_insert(0.0) += c;
        }
        let mut terms: Vec<(VarId, f64)> = folded
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .map(|(v, c)| (VarId(v), c))
            .collect();
        terms.sort_by_key(|&(v, _)| v);
        self.constraints.push(Constraint { terms, cmp, rhs });
        Ok(())
    }

    pub fn var_count(&self) -> usize {
        self.names.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.names[var.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn cost(&self, var: VarId) -> f64 {
        self.costs[var.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Objective value of a full assignment.
    pub fn objective_of(&self, values: &[bool]) -> f64 {
        self.costs
            .iter()
            .zip(values)
            .map(|(c, &v)| if v { *c } else { 0.0 })
            .sum()
    }

    /// Checks a full assignment against every constraint.
    pub fn is_feasible(&self, values: &[bool]) -> bool {
        const TOL: f64 = 1e-6;
        if values.len() != self.names.len() {
            return false;
        }
        self.constraints.iter().all(|c| {
            let lhs: f64 = c
                .terms
                .iter()
                .map(|&(v, coef)| if values[v.0] { coef } else { 0.0 })
                .sum();
            match c.cmp {
                Cmp::Le => lhs <= c.rhs + TOL,
                Cmp::Ge => lhs >= c.rhs - TOL,
                Cmp::Eq => (lhs - c.rhs).abs() <= TOL,
            }
        })
    }
}

/// Outcome class of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The returned assignment is a proven minimum.
    Optimal,
    /// No assignment satisfies the constraints.
    Infeasible,
    /// The time budget ran out; the incumbent (if any) is feasible but the
    /// bound gap may be open.
    Timeout,
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct IlpSolution {
    pub status: SolveStatus,
    /// Best feasible assignment found, indexed by [`VarId`].
    pub values: Option<Vec<bool>>,
    /// Objective of `values`.
    pub objective: Option<f64>,
    /// Valid global lower bound on the optimum at return time.
    pub best_bound: f64,
    /// Branch-and-bound nodes processed.
    pub nodes_explored: u64,
}

impl IlpSolution {
    /// Absolute gap between incumbent and bound (0 for proven optima).
    pub fn gap(&self) -> f64 {
        match (self.status, self.objective) {
            (SolveStatus::Optimal, _) => 0.0,
            (_, Some(obj)) => (obj - self.best_bound).max(0.0),
            _ => f64::INFINITY,
        }
    }
}

/// Solver knobs.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_budget: Duration,
    /// Optional feasible assignment used as the starting incumbent.
    pub warm_start: Option<Vec<bool>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_budget: Duration::from_secs(60),
            warm_start: None,
        }
    }
}

/// Solves the model to proven optimality within `time_budget`.
pub fn solve(model: &IlpModel, time_budget: Duration) -> IlpSolution {
    solve_with(
        model,
        &SolveOptions {
            time_budget,
            warm_start: None,
        },
    )
}

/// [`solve`] with full options.
pub fn solve_with(model: &IlpModel, options: &SolveOptions) -> IlpSolution {
    solver::run(model, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle over all 2^n assignments.
    pub(crate) fn enumerate_optimum(model: &IlpModel) -> Option<(f64, Vec<bool>)> {
        let n = model.var_count();
        assert!(n <= 20, "oracle is exponential");
        let mut best: Option<(f64, Vec<bool>)> = None;
        for mask in 0u32..(1u32 << n) {
            let values: Vec<bool> = (0..n).map(|j| mask & (1 << j) != 0).collect();
            if !model.is_feasible(&values) {
                continue;
            }
            let obj = model.objective_of(&values);
            if best.as_ref().map_or(true, |(b, _)| obj < *b - 1e-12) {
                best = Some((obj, values));
            }
        }
        best
    }

    fn toy_cover() -> IlpModel {
        let mut m = IlpModel::new();
        let x0 = m.add_var("x0").unwrap();
        let x1 = m.add_var("x1").unwrap();
        m.set_cost(x0, 1.0).unwrap();
        m.set_cost(x1, 2.0).unwrap();
        m.add_constraint(vec![(x0, 1.0), (x1, 1.0)], Cmp::Ge, 1.0)
            .unwrap();
        m
    }

    #[test]
    fn solves_tiny_cover() {
        let m = toy_cover();
        let sol = solve(&m, Duration::from_secs(5));
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective, Some(1.0));
        assert!(sol.gap() == 0.0);
        assert_eq!(sol.values.unwrap(), vec![true, false]);
    }

    #[test]
    fn detects_infeasibility() {
        let mut m = IlpModel::new();
        let x = m.add_var("x").unwrap();
        m.add_constraint(vec![(x, 1.0)], Cmp::Ge, 1.0).unwrap();
        m.add_constraint(vec![(x, 1.0)], Cmp::Le, 0.0).unwrap();
        let sol = solve(&m, Duration::from_secs(5));
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.values.is_none());
    }

    #[test]
    fn rejects_duplicate_and_bad_names() {
        let mut m = IlpModel::new();
        m.add_var("x").unwrap();
        assert!(matches!(
            m.add_var("x"),
            Err(MilpError::DuplicateVariable(_))
        ));
        assert!(matches!(
            m.add_var("0abc"),
            Err(MilpError::BadVariableName(_))
        ));
        assert!(matches!(
            m.add_var("a b"),
            Err(MilpError::BadVariableName(_))
        ));
    }

    #[test]
    fn folds_repeated_terms() {
        let mut m = IlpModel::new();
        let x = m.add_var("x").unwrap();
        m.add_constraint(vec![(x, 1.0), (x, 1.0)], Cmp::Le, 1.0)
            .unwrap();
        assert_eq!(m.constraints()[0].terms, vec![(x, 2.0)]);
        // 2x <= 1 forces x = 0.
        let sol = solve(&m, Duration::from_secs(5));
        assert_eq!(sol.values.unwrap(), vec![false]);
    }

    #[test]
    fn matches_exhaustive_enumeration_on_random_models() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
        for case in 0..80 {
            let n = rng.gen_range(1..=10);
            let rows = rng.gen_range(1..=12);
            let mut m = IlpModel::new();
            let vars: Vec<VarId> = (0..n)
                .map(|j| m.add_var(format!("v{j}")).unwrap())
                .collect();
            for &v in &vars {
                m.set_cost(v, rng.gen_range(-6..=6) as f64).unwrap();
            }
            for _ in 0..rows {
                let width = rng.gen_range(1..=n.min(4));
                let mut picked: Vec<usize> = (0..n).collect();
                for i in 0..width {
                    let j = rng.gen_range(i..n);
                    picked.swap(i, j);
                }
                let terms: Vec<(VarId, f64)> = picked[..width]
                    .iter()
                    .map(|&j| (vars[j], rng.gen_range(-4..=4) as f64))
                    .filter(|&(_, c)| c != 0.0)
                    .collect();
                if terms.is_empty() {
                    continue;
                }
                let cmp = match rng.gen_range(0..3) {
                    0 => Cmp::Le,
                    1 => Cmp::Ge,
                    _ => Cmp::Eq,
                };
                let rhs = rng.gen_range(-3..=5) as f64;
                m.add_constraint(terms, cmp, rhs).unwrap();
            }
            let sol = solve(&m, Duration::from_secs(10));
            let oracle = enumerate_optimum(&m);
            match oracle {
                None => assert_eq!(
                    sol.status,
                    SolveStatus::Infeasible,
                    "case {case}: solver found {:?} on infeasible model",
                    sol.objective
                ),
                Some((best, _)) => {
                    assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
                    let got = sol.objective.unwrap();
                    assert!(
                        (got - best).abs() < 1e-6,
                        "case {case}: solver {got}, oracle {best}"
                    );
                    assert!(m.is_feasible(sol.values.as_ref().unwrap()), "case {case}");
                }
            }
        }
    }

    #[test]
    fn extra_constraints_never_lower_the_optimum() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n = rng.gen_range(2..=8);
            let mut m = IlpModel::new();
            let vars: Vec<VarId> = (0..n)
                .map(|j| m.add_var(format!("v{j}")).unwrap())
                .collect();
            for &v in &vars {
                m.set_cost(v, rng.gen_range(-5..=5) as f64).unwrap();
            }
            let row = |rng: &mut rand_chacha::ChaCha12Rng| {
                let terms: Vec<(VarId, f64)> = vars
                    .iter()
                    .map(|&v| (v, rng.gen_range(-3..=3) as f64))
                    .filter(|&(_, c)| c != 0.0)
                    .collect();
                (terms, rng.gen_range(-2..=4) as f64)
            };
            let (terms, rhs) = row(&mut rng);
            if !terms.is_empty() {
                m.add_constraint(terms, Cmp::Le, rhs).unwrap();
            }
            let before = solve(&m, Duration::from_secs(10));
            let (terms, rhs) = row(&mut rng);
            if terms.is_empty() {
                continue;
            }
            m.add_constraint(terms, Cmp::Le, rhs).unwrap();
            let after = solve(&m, Duration::from_secs(10));
            match (before.objective, after.objective) {
                (Some(b), Some(a)) => assert!(a >= b - 1e-9, "tightened {b} -> {a}"),
                (None, Some(_)) => panic!("constraint addition cannot create feasibility"),
                _ => {}
            }
        }
    }

    #[test]
    fn warm_start_bounds_the_search() {
        let m = toy_cover();
        let sol = solve_with(
            &m,
            &SolveOptions {
                time_budget: Duration::from_secs(5),
                warm_start: Some(vec![false, true]),
            },
        );
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective, Some(1.0));
    }

    #[test]
    fn zero_budget_reports_timeout() {
        let m = toy_cover();
        let sol = solve(&m, Duration::ZERO);
        assert_eq!(sol.status, SolveStatus::Timeout);
        // Any incumbent must still be feasible.
        if let Some(v) = &sol.values {
            assert!(m.is_feasible(v));
        }
    }

    #[test]
    fn solution_values_follow_var_ids() {
        let mut m = IlpModel::new();
        let a = m.add_var("a").unwrap();
        let b = m.add_var("b").unwrap();
        m.set_cost(a, 5.0).unwrap();
        m.set_cost(b, -1.0).unwrap();
        let sol = solve(&m, Duration::from_secs(5));
        let v = sol.values.unwrap();
        assert!(!v[a.0]);
        assert!(v[b.0]);
        assert_eq!(sol.objective, Some(-1.0));
    }
}
