//! Exact branch-and-bound for 0-1 models.
//!
//! Pipeline: root presolve (domain propagation to a fixed point, then
//! dominance fixing of variables that can only help or only hurt), reduction
//! to the free variables, structure detection, and a depth-first search. Each
//! node is bounded by a combinatorial lower bound built from detected
//! structure — exactly-one groups, implications `x_p <= x_q`, and pairwise
//! conflicts `x_p + x_q <= 1` — and, when the reduced model is small enough,
//! by an LP relaxation. Both bounds are valid for every completion of the
//! node, so pruning never discards a strictly better solution.

use std::collections::HashMap;
use std::time::Instant;

use super::simplex::{solve_lp, LpInput, LpResult};
use super::{Cmp, IlpModel, IlpSolution, SolveOptions, SolveStatus};

const EPS: f64 = 1e-7;
/// LP objective values are discounted by this much before pruning on them.
fn lp_safety(value: f64) -> f64 {
    1e-6 + 1e-9 * value.abs()
}
/// Bound-vs-incumbent margin: nodes that cannot beat the incumbent by more
/// than this are pruned, so ties resolve to the first solution found.
fn prune_margin(incumbent: f64) -> f64 {
    1e-9 * (1.0 + incumbent.abs())
}
/// Static size gate (rows x columns) for running LP relaxations at all.
const LP_CELL_CAP: usize = 400_000;

/// One `terms <= rhs` row over reduced variable ids.
struct RowLe {
    terms: Vec<(usize, f64)>,
    rhs: f64,
}

/// A set of exactly-one groups that must occupy pairwise-distinct cost
/// variables inside `q_sorted` (see `detect_families`).
struct Family {
    need: usize,
    /// Cost variables of the family, ascending by (cost, id).
    q_sorted: Vec<(usize, f64)>,
}

struct Reduced {
    nf: usize,
    orig_of: Vec<usize>,
    costs: Vec<f64>,
    base_cost: f64,
    rows: Vec<RowLe>,
    var_rows: Vec<Vec<usize>>,
    lp_rows: Vec<(Vec<(usize, f64)>, Cmp, f64)>,
    /// Exactly-one groups (members are reduced ids, ascending).
    groups: Vec<Vec<usize>>,
    /// Implied cost variables per variable, from rows `x_p - x_q <= 0`.
    imps: Vec<Vec<usize>>,
    families: Vec<Family>,
    fixed_full: Vec<Option<bool>>,
}

pub(crate) fn run(model: &IlpModel, options: &SolveOptions) -> IlpSolution {
    let deadline = Instant::now() + options.time_budget;

    // An externally supplied feasible point caps the search from the start.
    let mut external: Option<(f64, Vec<bool>)> = None;
    if let Some(warm) = &options.warm_start {
        if model.is_feasible(warm) {
            external = Some((model.objective_of(warm), warm.clone()));
        }
    }

    let full_rows = normalize_full(model);
    let presolved = match presolve(model, &full_rows) {
        Some(dom) => dom,
        None => {
            debug_assert!(external.is_none());
            return finish(model, None, SolveStatus::Infeasible, f64::INFINITY, 0);
        }
    };
    let red = reduce(model, &presolved);

    if red.nf == 0 {
        let reduced_sol = Some((red.base_cost, Vec::new()));
        let assembled = assemble(model, &red, reduced_sol, external);
        let bound = assembled.as_ref().map_or(f64::INFINITY, |(o, _)| *o);
        return finish(model, assembled, SolveStatus::Optimal, bound, 0);
    }

    let cells = red.rows.len() * (red.nf + 2 * red.rows.len());
    if std::env::var_os("XORPATH_MILP_DEBUG").is_some() {
        eprintln!(
            "milp: nf={} rows={} lp_rows={} cells={} groups={} families={}",
            red.nf,
            red.rows.len(),
            red.lp_rows.len(),
            cells,
            red.groups.len(),
            red.families.len()
        );
    }
    let mut search = Search {
        model,
        red: &red,
        dom: vec![FREE; red.nf],
        deadline,
        timed_out: false,
        nodes: 0,
        incumbent: None,
        incumbent_cap: external.as_ref().map(|(o, _)| *o),
        counted: vec![false; red.nf],
        row_queued: vec![false; red.rows.len()],
        root_bound: f64::NEG_INFINITY,
        lp_enabled: cells <= LP_CELL_CAP,
    };

    // Establish the root fixed point over reduced rows before searching.
    let mut trail = Vec::new();
    let feasible_root = search.propagate(&mut trail);
    if feasible_root {
        search.dfs(0);
    }

    let nodes = search.nodes;
    if std::env::var_os("XORPATH_MILP_DEBUG").is_some() {
        eprintln!(
            "milp: nodes={} warm={:?} incumbent={:?} root_bound={}",
            nodes,
            external.as_ref().map(|(o, _)| *o),
            search.incumbent.as_ref().map(|(o, _)| *o),
            search.root_bound
        );
    }
    if !feasible_root {
        debug_assert!(external.is_none());
        return finish(model, None, SolveStatus::Infeasible, f64::INFINITY, nodes);
    }
    let timed_out = search.timed_out;
    let root_bound = search.root_bound;
    let assembled = assemble(model, &red, search.incumbent, external);
    if timed_out {
        let bound = if root_bound.is_finite() {
            root_bound
        } else {
            f64::NEG_INFINITY
        };
        finish(model, assembled, SolveStatus::Timeout, bound, nodes)
    } else {
        match assembled {
            Some((obj, values)) => {
                finish(model, Some((obj, values)), SolveStatus::Optimal, obj, nodes)
            }
            None => finish(model, None, SolveStatus::Infeasible, f64::INFINITY, nodes),
        }
    }
}

fn finish(
    model: &IlpModel,
    best: Option<(f64, Vec<bool>)>,
    status: SolveStatus,
    best_bound: f64,
    nodes: u64,
) -> IlpSolution {
    debug_assert!(best
        .as_ref()
        .map_or(true, |(_, v)| model.is_feasible(v)));
    IlpSolution {
        status,
        objective: best.as_ref().map(|(o, _)| *o),
        values: best.map(|(_, v)| v),
        best_bound,
        nodes_explored: nodes,
    }
}

/// Combines the search incumbent (over reduced ids) with the presolve fixings
/// and picks the better of it and the external warm start.
fn assemble(
    model: &IlpModel,
    red: &Reduced,
    reduced_sol: Option<(f64, Vec<u8>)>,
    external: Option<(f64, Vec<bool>)>,
) -> Option<(f64, Vec<bool>)> {
    let from_search = reduced_sol.map(|(obj, dom)| {
        let mut values: Vec<bool> = red
            .fixed_full
            .iter()
            .map(|f| f.unwrap_or(false))
            .collect();
        for (j, &orig) in red.orig_of.iter().enumerate() {
            values[orig] = dom[j] == 1;
        }
        debug_assert!(model.is_feasible(&values));
        (obj, values)
    });
    match (from_search, external) {
        (Some(a), Some(b)) => Some(if a.0 <= b.0 + 1e-12 { a } else { b }),
        (Some(a), None) => Some(a),
        (None, b) => b,
    }
}

/// Expands each constraint into one or two `<=` rows over original ids.
fn normalize_full(model: &IlpModel) -> Vec<RowLe> {
    let mut rows = Vec::new();
    for c in model.constraints() {
        let terms: Vec<(usize, f64)> = c.terms.iter().map(|&(v, co)| (v.0, co)).collect();
        match c.cmp {
            Cmp::Le => rows.push(RowLe {
                terms,
                rhs: c.rhs,
            }),
            Cmp::Ge => rows.push(RowLe {
                terms: terms.iter().map(|&(v, co)| (v, -co)).collect(),
                rhs: -c.rhs,
            }),
            Cmp::Eq => {
                rows.push(RowLe {
                    terms: terms.clone(),
                    rhs: c.rhs,
                });
                rows.push(RowLe {
                    terms: terms.iter().map(|&(v, co)| (v, -co)).collect(),
                    rhs: -c.rhs,
                });
            }
        }
    }
    rows
}

fn min_contribution(dom: Option<bool>, coef: f64) -> f64 {
    match dom {
        Some(true) => coef,
        Some(false) => 0.0,
        None => coef.min(0.0),
    }
}

fn max_contribution(dom: Option<bool>, coef: f64) -> f64 {
    match dom {
        Some(true) => coef,
        Some(false) => 0.0,
        None => coef.max(0.0),
    }
}

/// Fixed-point propagation plus dominance fixing over the full model.
/// Returns the per-variable fixings, or None when infeasible.
fn presolve(model: &IlpModel, rows: &[RowLe]) -> Option<Vec<Option<bool>>> {
    let n = model.var_count();
    let mut dom: Vec<Option<bool>> = vec![None; n];
    let mut var_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, row) in rows.iter().enumerate() {
        for &(v, _) in &row.terms {
            var_rows[v].push(r);
        }
    }

    let propagate = |dom: &mut Vec<Option<bool>>, seed: Vec<usize>| -> Option<()> {
        let mut queue: Vec<usize> = seed;
        let mut queued = vec![false; rows.len()];
        for &r in &queue {
            queued[r] = true;
        }
        while let Some(r) = queue.pop() {
            queued[r] = false;
            let row = &rows[r];
            let minact: f64 = row
                .terms
                .iter()
                .map(|&(v, c)| min_contribution(dom[v], c))
                .sum();
            if minact > row.rhs + EPS {
                return None;
            }
            for &(v, c) in &row.terms {
                if dom[v].is_some() {
                    continue;
                }
                let forced = if c > 0.0 && minact + c > row.rhs + EPS {
                    Some(false)
                } else if c < 0.0 && minact - c > row.rhs + EPS {
                    Some(true)
                } else {
                    None
                };
                if let Some(val) = forced {
                    dom[v] = Some(val);
                    for &r2 in &var_rows[v] {
                        if !queued[r2] {
                            queued[r2] = true;
                            queue.push(r2);
                        }
                    }
                }
            }
        }
        Some(())
    };

    propagate(&mut dom, (0..rows.len()).collect())?;

    loop {
        let mut newly_fixed = Vec::new();
        for v in 0..n {
            if dom[v].is_some() {
                continue;
            }
            let cost = model.cost(super::VarId(v));
            let mut can_zero = cost >= 0.0;
            let mut can_one = cost <= 0.0;
            for &r in &var_rows[v] {
                if !(can_zero || can_one) {
                    break;
                }
                let row = &rows[r];
                let maxact: f64 = row
                    .terms
                    .iter()
                    .map(|&(u, c)| max_contribution(dom[u], c))
                    .sum();
                if maxact <= row.rhs + EPS {
                    continue; // Row holds for every completion.
                }
                let coef = row
                    .terms
                    .iter()
                    .find(|&&(u, _)| u == v)
                    .map(|&(_, c)| c)
                    .unwrap_or(0.0);
                if coef < 0.0 {
                    can_zero = false;
                }
                if coef > 0.0 {
                    can_one = false;
                }
            }
            if can_zero {
                dom[v] = Some(false);
                newly_fixed.push(v);
            } else if can_one {
                dom[v] = Some(true);
                newly_fixed.push(v);
            }
        }
        if newly_fixed.is_empty() {
            break;
        }
        let seed: Vec<usize> = {
            let mut s: Vec<usize> = newly_fixed
                .iter()
                .flat_map(|&v| var_rows[v].iter().copied())
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        };
        propagate(&mut dom, seed)?;
    }

    Some(dom)
}

/// Projects the model onto free variables and detects bounding structure.
fn reduce(model: &IlpModel, dom: &[Option<bool>]) -> Reduced {
    let n = model.var_count();
    let mut orig_of = Vec::new();
    let mut new_of: Vec<Option<usize>> = vec![None; n];
    for v in 0..n {
        if dom[v].is_none() {
            new_of[v] = Some(orig_of.len());
            orig_of.push(v);
        }
    }
    let nf = orig_of.len();
    let costs: Vec<f64> = orig_of
        .iter()
        .map(|&v| model.cost(super::VarId(v)))
        .collect();
    let base_cost: f64 = (0..n)
        .filter(|&v| dom[v] == Some(true))
        .map(|v| model.cost(super::VarId(v)))
        .sum();

    let mut rows = Vec::new();
    let mut lp_rows = Vec::new();
    let mut groups = Vec::new();
    for c in model.constraints() {
        let mut fixed_sum = 0.0;
        let mut free_terms: Vec<(usize, f64)> = Vec::new();
        for &(v, coef) in &c.terms {
            match dom[v.0] {
                Some(true) => fixed_sum += coef,
                Some(false) => {}
                None => free_terms.push((new_of[v.0].unwrap(), coef)),
            }
        }
        // Exactly-one structure: sum of unit terms equal to 1.
        if c.cmp == Cmp::Eq
            && (c.rhs - 1.0).abs() <= EPS
            && c.terms.iter().all(|&(_, co)| (co - 1.0).abs() <= EPS)
            && c.terms.iter().all(|&(v, _)| dom[v.0] != Some(true))
            && free_terms.len() >= 2
        {
            let mut members: Vec<usize> = free_terms.iter().map(|&(v, _)| v).collect();
            members.sort_unstable();
            groups.push(members);
        }
        if free_terms.is_empty() {
            continue;
        }
        let rhs = c.rhs - fixed_sum;
        let min: f64 = free_terms.iter().map(|&(_, co)| co.min(0.0)).sum();
        let max: f64 = free_terms.iter().map(|&(_, co)| co.max(0.0)).sum();
        let keep_le = matches!(c.cmp, Cmp::Le | Cmp::Eq) && max > rhs + EPS;
        let keep_ge = matches!(c.cmp, Cmp::Ge | Cmp::Eq) && min < rhs - EPS;
        if keep_le {
            rows.push(RowLe {
                terms: free_terms.clone(),
                rhs,
            });
        }
        if keep_ge {
            rows.push(RowLe {
                terms: free_terms.iter().map(|&(v, co)| (v, -co)).collect(),
                rhs: -rhs,
            });
        }
        if keep_le || keep_ge {
            let cmp = match (keep_le, keep_ge, c.cmp) {
                (true, true, _) => Cmp::Eq,
                (true, false, Cmp::Eq) => Cmp::Le,
                (false, true, Cmp::Eq) => Cmp::Ge,
                (_, _, cmp) => cmp,
            };
            lp_rows.push((free_terms, cmp, rhs));
        }
    }

    let mut var_rows: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for (r, row) in rows.iter().enumerate() {
        for &(v, _) in &row.terms {
            var_rows[v].push(r);
        }
    }

    // Implications x_p <= x_q from two-term rows `x_p - x_q <= 0`.
    let mut imps: Vec<Vec<usize>> = vec![Vec::new(); nf];
    let mut conflicts: Vec<(usize, usize)> = Vec::new();
    for row in &rows {
        if row.terms.len() != 2 {
            continue;
        }
        let (a, ca) = row.terms[0];
        let (b, cb) = row.terms[1];
        if row.rhs.abs() <= EPS {
            if (ca - 1.0).abs() <= EPS && (cb + 1.0).abs() <= EPS {
                imps[a].push(b);
            } else if (cb - 1.0).abs() <= EPS && (ca + 1.0).abs() <= EPS {
                imps[b].push(a);
            }
        }
        if (row.rhs - 1.0).abs() <= EPS
            && (ca - 1.0).abs() <= EPS
            && (cb - 1.0).abs() <= EPS
        {
            conflicts.push((a.min(b), a.max(b)));
        }
    }
    for list in &mut imps {
        list.sort_unstable();
        list.dedup();
    }
    conflicts.sort_unstable();
    conflicts.dedup();

    let families = detect_families(nf, &costs, &groups, &imps, &conflicts);

    Reduced {
        nf,
        orig_of,
        costs,
        base_cost,
        rows,
        var_rows,
        lp_rows,
        groups,
        imps,
        families,
        fixed_full: dom.to_vec(),
    }
}

/// Finds sets of exactly-one groups forced onto pairwise-distinct positive
/// cost variables.
///
/// Cost variables are bucketed by the set of groups whose members imply them.
/// Within a bucket `Q`, two groups qualify as exclusive when every pair of
/// their members implying a common `q in Q` is in conflict, so each group of
/// a qualified clique must push a distinct `q` to 1 in any completion. The
/// clique size is then a valid lower bound on how many variables of `Q` are 1.
fn detect_families(
    nf: usize,
    costs: &[f64],
    groups: &[Vec<usize>],
    imps: &[Vec<usize>],
    conflicts: &[(usize, usize)],
) -> Vec<Family> {
    let mut group_of: Vec<Option<usize>> = vec![None; nf];
    for (g, members) in groups.iter().enumerate() {
        for &p in members {
            if group_of[p].is_none() {
                group_of[p] = Some(g);
            }
        }
    }
    // Implying members per cost variable.
    let mut implied_by: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for (p, list) in imps.iter().enumerate() {
        for &q in list {
            implied_by[q].push(p);
        }
    }
    let conflict_set: std::collections::HashSet<(usize, usize)> =
        conflicts.iter().copied().collect();
    let in_conflict =
        |a: usize, b: usize| conflict_set.contains(&(a.min(b), a.max(b)));

    // Bucket positive-cost variables by implying-group signature.
    let mut buckets: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for q in 0..nf {
        if costs[q] <= 0.0 || implied_by[q].is_empty() {
            continue;
        }
        let mut sig: Vec<usize> = implied_by[q]
            .iter()
            .filter_map(|&p| group_of[p])
            .collect();
        sig.sort_unstable();
        sig.dedup();
        if sig.len() < 2 {
            continue;
        }
        buckets.entry(sig).or_default().push(q);
    }
    let mut ordered: Vec<(Vec<usize>, Vec<usize>)> = buckets.into_iter().collect();
    ordered.sort();

    let mut families = Vec::new();
    for (sig, q_list) in ordered {
        let q_in_bucket: std::collections::HashSet<usize> = q_list.iter().copied().collect();
        // Groups whose every member implies into the bucket.
        let eligible: Vec<usize> = sig
            .iter()
            .copied()
            .filter(|&g| {
                groups[g]
                    .iter()
                    .all(|&p| imps[p].iter().any(|q| q_in_bucket.contains(q)))
            })
            .collect();
        if eligible.len() < 2 {
            continue;
        }
        let qualified = |ga: usize, gb: usize| -> bool {
            q_list.iter().all(|&q| {
                let members = &implied_by[q];
                let from_a: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&p| group_of[p] == Some(ga))
                    .collect();
                let from_b: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&p| group_of[p] == Some(gb))
                    .collect();
                from_a
                    .iter()
                    .all(|&pa| from_b.iter().all(|&pb| in_conflict(pa, pb)))
            })
        };
        // Greedy clique, largest degree first, index as tie-break.
        let mut degree: Vec<(usize, usize)> = eligible
            .iter()
            .map(|&g| {
                let d = eligible
                    .iter()
                    .filter(|&&h| h != g && qualified(g, h))
                    .count();
                (g, d)
            })
            .collect();
        degree.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut clique: Vec<usize> = Vec::new();
        for &(g, _) in &degree {
            if clique.iter().all(|&h| qualified(g, h)) {
                clique.push(g);
            }
        }
        if clique.len() < 2 {
            continue;
        }
        let mut q_sorted: Vec<(usize, f64)> =
            q_list.iter().map(|&q| (q, costs[q])).collect();
        q_sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        families.push(Family {
            need: clique.len(),
            q_sorted,
        });
    }
    families
}

const ZERO: u8 = 0;
const ONE: u8 = 1;
const FREE: u8 = 2;

struct Search<'a> {
    model: &'a IlpModel,
    red: &'a Reduced,
    dom: Vec<u8>,
    deadline: Instant,
    timed_out: bool,
    nodes: u64,
    incumbent: Option<(f64, Vec<u8>)>,
    /// Objective of the external warm start, if any; prunes like an incumbent.
    incumbent_cap: Option<f64>,
    counted: Vec<bool>,
    row_queued: Vec<bool>,
    root_bound: f64,
    lp_enabled: bool,
}

impl<'a> Search<'a> {
    fn cap(&self) -> Option<f64> {
        match (self.incumbent.as_ref().map(|(o, _)| *o), self.incumbent_cap) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, b) => b,
        }
    }

    fn propagate(&mut self, trail: &mut Vec<usize>) -> bool {
        let red = self.red;
        let mut queue: Vec<usize> = Vec::new();
        let mut touched: Vec<usize> = Vec::new();
        let enqueue = |queue: &mut Vec<usize>,
                           touched: &mut Vec<usize>,
                           row_queued: &mut Vec<bool>,
                           r: usize| {
            if !row_queued[r] {
                row_queued[r] = true;
                queue.push(r);
                touched.push(r);
            }
        };
        if trail.is_empty() {
            for r in 0..red.rows.len() {
                enqueue(&mut queue, &mut touched, &mut self.row_queued, r);
            }
        } else {
            for &v in trail.iter() {
                for &r in &red.var_rows[v] {
                    enqueue(&mut queue, &mut touched, &mut self.row_queued, r);
                }
            }
        }
        let mut ok = true;
        while let Some(r) = queue.pop() {
            self.row_queued[r] = false;
            let row = &red.rows[r];
            let minact: f64 = row
                .terms
                .iter()
                .map(|&(v, c)| match self.dom[v] {
                    ONE => c,
                    ZERO => 0.0,
                    _ => c.min(0.0),
                })
                .sum();
            if minact > row.rhs + EPS {
                ok = false;
                break;
            }
            for &(v, c) in &row.terms {
                if self.dom[v] != FREE {
                    continue;
                }
                let forced = if c > 0.0 && minact + c > row.rhs + EPS {
                    Some(ZERO)
                } else if c < 0.0 && minact - c > row.rhs + EPS {
                    Some(ONE)
                } else {
                    None
                };
                if let Some(val) = forced {
                    self.dom[v] = val;
                    trail.push(v);
                    for &r2 in &red.var_rows[v] {
                        enqueue(&mut queue, &mut touched, &mut self.row_queued, r2);
                    }
                }
            }
        }
        for r in touched {
            self.row_queued[r] = false;
        }
        ok
    }

    /// Valid lower bound for every completion of the current domains.
    fn lower_bound(&mut self) -> f64 {
        let red = self.red;
        let mut base = 0.0;
        for v in 0..red.nf {
            match self.dom[v] {
                ONE => base += red.costs[v],
                FREE if red.costs[v] < 0.0 => base += red.costs[v],
                _ => {}
            }
        }

        // A: union increments from exactly-one groups.
        self.counted.iter_mut().for_each(|c| *c = false);
        for v in 0..red.nf {
            if self.dom[v] == ONE || (self.dom[v] == FREE && red.costs[v] < 0.0) {
                self.counted[v] = true;
            }
        }
        let mut union_total = 0.0;
        for members in &red.groups {
            if members.iter().any(|&p| self.dom[p] == ONE) {
                continue;
            }
            let mut best: Option<f64> = None;
            for &p in members {
                if self.dom[p] != FREE {
                    continue;
                }
                let inc: f64 = red.imps[p]
                    .iter()
                    .filter(|&&q| !self.counted[q] && red.costs[q] > 0.0 && self.dom[q] != ZERO)
                    .map(|&q| red.costs[q])
                    .sum();
                if best.map_or(true, |b| inc < b) {
                    best = Some(inc);
                }
            }
            if let Some(inc) = best {
                union_total += inc;
                for &p in members {
                    if self.dom[p] != FREE {
                        continue;
                    }
                    for &q in &red.imps[p] {
                        self.counted[q] = true;
                    }
                }
            }
        }

        // B: distinct-occupancy counts from exclusive families.
        let mut family_total = 0.0;
        for fam in &red.families {
            let mut fixed = 0usize;
            let mut free = 0usize;
            for &(q, _) in &fam.q_sorted {
                match self.dom[q] {
                    ONE => fixed += 1,
                    FREE => free += 1,
                    _ => {}
                }
            }
            if fixed + free < fam.need {
                return f64::INFINITY;
            }
            let mut extra = fam.need.saturating_sub(fixed);
            for &(q, cost) in &fam.q_sorted {
                if extra == 0 {
                    break;
                }
                if self.dom[q] == FREE {
                    family_total += cost;
                    extra -= 1;
                }
            }
        }

        red.base_cost + base + union_total.max(family_total)
    }

    fn node_lp(&self) -> Option<LpOutcome> {
        let red = self.red;
        let lo: Vec<f64> = self
            .dom
            .iter()
            .map(|&d| if d == ONE { 1.0 } else { 0.0 })
            .collect();
        let hi: Vec<f64> = self
            .dom
            .iter()
            .map(|&d| if d == ZERO { 0.0 } else { 1.0 })
            .collect();
        match solve_lp(&LpInput {
            n: red.nf,
            costs: &red.costs,
            lo: &lo,
            hi: &hi,
            rows: &red.lp_rows,
        }) {
            LpResult::Unavailable => None,
            LpResult::Infeasible { residual } => {
                if residual > 1e-5 {
                    Some(LpOutcome::Infeasible)
                } else {
                    None
                }
            }
            LpResult::Optimal { value, x, d } => Some(LpOutcome::Solved { value, x, d }),
        }
    }

    /// Records `dom` as the incumbent when it satisfies every row and beats
    /// the current cap. Returns whether the assignment was feasible at all
    /// (callers may prune on `true` even if it did not improve the cap).
    fn try_incumbent_from(&mut self, dom: Vec<u8>) -> bool {
        let red = self.red;
        let feasible = red.rows.iter().all(|row| {
            let act: f64 = row
                .terms
                .iter()
                .map(|&(v, c)| if dom[v] == ONE { c } else { 0.0 })
                .sum();
            act <= row.rhs + EPS
        });
        if !feasible {
            return false;
        }
        let obj: f64 = red.base_cost
            + (0..red.nf)
                .filter(|&v| dom[v] == ONE)
                .map(|v| red.costs[v])
                .sum::<f64>();
        let accept = match self.cap() {
            None => true,
            Some(cap) => {
                obj < cap - 1e-12 || (self.incumbent.is_none() && obj <= cap + 1e-12)
            }
        };
        if accept {
            self.incumbent = Some((obj, dom));
        }
        true
    }

    fn dfs(&mut self, depth: usize) {
        self.nodes += 1;
        if Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }

        let mut lb = self.lower_bound();
        let mut lp_sol: Option<(f64, Vec<f64>, Vec<f64>)> = None;

        if lb.is_finite() && self.lp_enabled {
            match self.node_lp() {
                Some(LpOutcome::Infeasible) => lb = f64::INFINITY,
                Some(LpOutcome::Solved { value, x, d }) => {
                    lb = lb.max(value - lp_safety(value));
                    let integral = x.iter().all(|v| (v - v.round()).abs() <= 1e-7);
                    if integral {
                        let cand: Vec<u8> = self
                            .dom
                            .iter()
                            .zip(&x)
                            .map(|(&d, &v)| {
                                if d == FREE {
                                    u8::from(v.round() >= 0.5)
                                } else {
                                    d
                                }
                            })
                            .collect();
                        if depth == 0 {
                            self.root_bound = self.root_bound.max(lb);
                        }
                        // An integral LP optimum settles this subtree, but
                        // only when the rounded point verifies exactly;
                        // otherwise fall through and branch as usual.
                        if self.try_incumbent_from(cand) {
                            return;
                        }
                    }
                    lp_sol = Some((value, x, d));
                }
                None => {}
            }
        }

        if depth == 0 {
            self.root_bound = self.root_bound.max(lb);
        }
        if let Some(cap) = self.cap() {
            if lb >= cap - prune_margin(cap) {
                return;
            }
        }
        if !lb.is_finite() {
            return;
        }

        // Reduced-cost fixing: once an incumbent caps the search, a free
        // variable whose reduced cost would push the LP value past that cap
        // cannot leave its LP bound in any improving completion, so it is
        // pinned for this subtree (undone below with the branch trail).
        let mut rc_trail: Vec<usize> = Vec::new();
        let rc_off = std::env::var_os("XORPATH_NO_RCFIX").is_some();
        if let (false, Some((value, x, d)), Some(cap)) = (rc_off, &lp_sol, self.cap()) {
            let limit = cap - prune_margin(cap) + lp_safety(*value);
            for v in 0..self.red.nf {
                if self.dom[v] != FREE {
                    continue;
                }
                if x[v] <= 1e-9 && d[v] > 0.0 && value + d[v] >= limit {
                    self.dom[v] = ZERO;
                    rc_trail.push(v);
                } else if x[v] >= 1.0 - 1e-9 && d[v] < 0.0 && value - d[v] >= limit {
                    self.dom[v] = ONE;
                    rc_trail.push(v);
                }
            }
            if !rc_trail.is_empty() && !self.propagate(&mut rc_trail) {
                for &u in &rc_trail {
                    self.dom[u] = FREE;
                }
                return;
            }
        }

        // Most fractional free variable; name breaks ties.
        let mut branch: Option<(usize, u8)> = None;
        if let Some((_, x, _)) = &lp_sol {
            let mut best: Option<(f64, usize)> = None;
            for v in 0..self.red.nf {
                if self.dom[v] != FREE {
                    continue;
                }
                let frac = x[v].min(1.0 - x[v]).max(0.0);
                let better = match best {
                    None => true,
                    Some((bf, bv)) => {
                        frac > bf + 1e-12
                            || ((frac - bf).abs() <= 1e-12
                                && self.name_of(v) < self.name_of(bv))
                    }
                };
                if better {
                    best = Some((frac, v));
                }
            }
            if let Some((_, v)) = best {
                branch = Some((v, u8::from(x[v] >= 0.5)));
            }
        }

        let chosen = match branch {
            Some(b) => Some(b),
            None => (0..self.red.nf)
                .find(|&v| self.dom[v] == FREE)
                .map(|v| (v, ONE)),
        };
        match chosen {
            Some((v, first)) => {
                for val in [first, 1 - first] {
                    if self.timed_out {
                        break;
                    }
                    let mut trail = vec![v];
                    self.dom[v] = val;
                    if self.propagate(&mut trail) {
                        self.dfs(depth + 1);
                    }
                    for &u in &trail {
                        self.dom[u] = FREE;
                    }
                }
            }
            None => {
                let snapshot = self.dom.clone();
                self.try_incumbent_from(snapshot);
            }
        }
        for &u in &rc_trail {
            self.dom[u] = FREE;
        }
    }

    fn name_of(&self, v: usize) -> &str {
        self.model.var_name(super::VarId(self.red.orig_of[v]))
    }
}

enum LpOutcome {
    Solved {
        value: f64,
        x: Vec<f64>,
        d: Vec<f64>,
    },
    Infeasible,
}
