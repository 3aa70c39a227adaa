//! LP-format text export.
//!
//! Produces standard `Minimize` / `Subject To` / `Binary` / `End` sections
//! that CPLEX-compatible readers accept, so models can be cross-checked with
//! external solvers. Output is byte-deterministic for a given model.

use super::{Cmp, IlpModel};
use crate::topology::fmt_num;

const TERMS_PER_LINE: usize = 8;
const NAMES_PER_LINE: usize = 10;

/// Renders the model as LP-format text.
pub fn export_lp(model: &IlpModel) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "\\ {} variables, {} constraints\n",
        model.var_count(),
        model.constraint_count()
    ));

    out.push_str("Minimize\n");
    let obj_terms: Vec<(usize, f64)> = (0..model.var_count())
        .map(|v| (v, model.cost(super::VarId(v))))
        .filter(|&(_, c)| c != 0.0)
        .collect();
    if obj_terms.is_empty() {
        if model.var_count() > 0 {
            out.push_str(&format!(" obj: 0 {}\n", model.var_name(super::VarId(0))));
        } else {
            out.push_str(" obj:\n");
        }
    } else {
        push_terms(&mut out, " obj: ", &obj_terms, model);
    }

    if model.constraint_count() > 0 {
        out.push_str("Subject To\n");
        for (i, c) in model.constraints().iter().enumerate() {
            let terms: Vec<(usize, f64)> =
                c.terms.iter().map(|&(v, co)| (v.0, co)).collect();
            let head = format!(" c{i}: ");
            let tail = format!(
                " {} {}",
                match c.cmp {
                    Cmp::Le => "<=",
                    Cmp::Ge => ">=",
                    Cmp::Eq => "=",
                },
                fmt_num(c.rhs)
            );
            push_terms_with_tail(&mut out, &head, &terms, model, &tail);
        }
    }

    if model.var_count() > 0 {
        out.push_str("Binary\n");
        let mut line = String::new();
        for v in 0..model.var_count() {
            if v % NAMES_PER_LINE == 0 {
                if !line.is_empty() {
                    out.push_str(&line);
                    out.push('\n');
                }
                line = String::from(" ");
            }
            line.push_str(model.var_name(super::VarId(v)));
            line.push(' ');
        }
        if !line.trim().is_empty() {
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

fn push_terms(out: &mut String, head: &str, terms: &[(usize, f64)], model: &IlpModel) {
    push_terms_with_tail(out, head, terms, model, "");
}

fn push_terms_with_tail(
    out: &mut String,
    head: &str,
    terms: &[(usize, f64)],
    model: &IlpModel,
    tail: &str,
) {
    out.push_str(head);
    for (k, &(v, coef)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push('\n');
            out.push_str("      ");
        }
        let name = model.var_name(super::VarId(v));
        if k == 0 {
            if coef < 0.0 {
                out.push_str("- ");
            }
        } else if coef < 0.0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mag = coef.abs();
        if (mag - 1.0).abs() < 1e-12 {
            out.push_str(name);
        } else {
            out.push_str(&format!("{} {}", fmt_num(mag), name));
        }
    }
    out.push_str(tail);
    out.push('\n');
}
