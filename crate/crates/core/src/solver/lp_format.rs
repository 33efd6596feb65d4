//! CPLEX-LP style dump for cross-checking a problem with external solvers.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::problem::{ProblemSpec, Sense};
use crate::scalar::Scalar;

fn lp_name(name: &str) -> String {
    name.chars()
        .map(|c| match c {
            '[' | ']' | ',' | ' ' => '_',
            other => other,
        })
        .collect()
}

fn term<T: Scalar>(out: &mut String, coef: T, name: &str) {
    let c = coef.as_f64();
    let sign = if c < 0.0 { '-' } else { '+' };
    let _ = write!(out, " {sign} {:.17e} {name}", c.abs());
}

/// Writes the problem in minimisation form (`cost`, the negated welfare).
pub fn write_lp<T: Scalar, W: Write>(problem: &ProblemSpec<T>, mut w: W) -> io::Result<()> {
    let names: Vec<String> = problem.variables.iter().map(|v| lp_name(&v.name)).collect();
    writeln!(w, "\\ {}", problem.name)?;
    writeln!(w, "Minimize")?;
    let mut obj = String::from(" obj:");
    for (v, n) in problem.variables.iter().zip(&names) {
        if v.cost != T::zero() {
            term(&mut obj, v.cost, n);
        }
    }
    let mut quad = String::new();
    for (v, n) in problem.variables.iter().zip(&names) {
        if v.quad != T::zero() {
            term(&mut quad, T::lit(2.0) * v.quad, &format!("{n} ^ 2"));
        }
    }
    for &(i, j, c) in &problem.bilinear {
        term(&mut quad, T::lit(2.0) * c, &format!("{} * {}", names[i], names[j]));
    }
    if !quad.is_empty() {
        let _ = write!(obj, " + [{quad} ] / 2");
    }
    writeln!(w, "{obj}")?;
    writeln!(w, "Subject To")?;
    for c in &problem.constraints {
        let mut row = format!(" {}:", lp_name(&c.name));
        for &(j, a) in &c.coeffs {
            term(&mut row, a, &names[j]);
        }
        let op = match c.sense {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        };
        writeln!(w, "{row} {op} {:.17e}", c.rhs.as_f64())?;
    }
    writeln!(w, "Bounds")?;
    for (v, n) in problem.variables.iter().zip(&names) {
        let lo = v.lower.as_f64();
        let up = v.upper.as_f64();
        let lo_s = if lo.is_finite() { format!("{lo:.17e}") } else { "-inf".into() };
        let up_s = if up.is_finite() { format!("{up:.17e}") } else { "+inf".into() };
        writeln!(w, " {lo_s} <= {n} <= {up_s}")?;
    }
    writeln!(w, "End")?;
    Ok(())
}
