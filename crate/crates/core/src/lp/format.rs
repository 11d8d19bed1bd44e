//! Plain-text dump in the CPLEX LP interchange format.

use std::fmt::Write;

use super::{LinearProgram, Relation, Sense};

fn linear_expr(coeffs: &[f64]) -> String {
    let mut s = String::new();
    for (j, &a) in coeffs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let sign = if a < 0.0 { "-" } else { "+" };
        let _ = write!(s, " {sign} {:e} x{j}", a.abs());
    }
    if s.is_empty() {
        s.push_str(" 0 x0");
    }
    s
}

/// Renders `lp` so it can be cross-checked with an external solver. The
/// constant objective offset is written as a comment.
pub fn write_lp_format(lp: &LinearProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ objective offset {:e}", lp.offset);
    out.push_str(match lp.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    let _ = writeln!(out, " obj:{}", linear_expr(&lp.objective));
    out.push_str("Subject To\n");
    for (k, c) in lp.constraints.iter().enumerate() {
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " c{k}:{} {rel} {:e}", linear_expr(&c.coeffs), c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let fmt = |v: f64| {
            if v == f64::INFINITY {
                "+inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v:e}")
            }
        };
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " x{j} free");
        } else {
            let _ = writeln!(out, " {} <= x{j} <= {}", fmt(lo), fmt(hi));
        }
    }
    out.push_str("End\n");
    out
}
