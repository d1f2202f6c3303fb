use std::io::Write;

use super::{LinearProgram, Sense};

fn num(v: f64) -> String {
    let s = format!("{v:.9}");
    if s == "-0.000000000" {
        "0.000000000".to_string()
    } else {
        s
    }
}

/// Fixed-format MPS. The objective is negated because the format
/// minimizes. Variables are `X<j>`, rows `R<i>`, both 1-based.
pub fn write_mps<W: Write>(mut w: W, name: &str, lp: &LinearProgram) -> std::io::Result<()> {
    writeln!(w, "NAME          {name}")?;
    writeln!(w, "ROWS")?;
    writeln!(w, " N  OBJ")?;
    for (i, r) in lp.rows.iter().enumerate() {
        let t = match r.sense {
            Sense::Ge => 'G',
            Sense::Le => 'L',
            Sense::Eq => 'E',
        };
        writeln!(w, " {t}  R{}", i + 1)?;
    }
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (i, r) in lp.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            cols[j].push((i, a));
        }
    }
    writeln!(w, "COLUMNS")?;
    for (j, col) in cols.iter_mut().enumerate() {
        col.sort_by_key(|(i, _)| *i);
        let var = format!("X{}", j + 1);
        let c = lp.objective[j];
        if c != 0.0 {
            writeln!(w, "    {var:<8}  {:<8}  {:>12}", "OBJ", num(-c))?;
        }
        for &(i, a) in col.iter() {
            writeln!(w, "    {var:<8}  {:<8}  {:>12}", format!("R{}", i + 1), num(a))?;
        }
    }
    writeln!(w, "RHS")?;
    for (i, r) in lp.rows.iter().enumerate() {
        if r.rhs != 0.0 {
            writeln!(w, "    {:<8}  {:<8}  {:>12}", "RHS", format!("R{}", i + 1), num(r.rhs))?;
        }
    }
    writeln!(w, "BOUNDS")?;
    for j in 0..lp.num_vars() {
        let var = format!("X{}", j + 1);
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l == u {
            writeln!(w, " FX {:<8}  {var:<8}  {:>12}", "BND", num(l))?;
            continue;
        }
        if l == f64::NEG_INFINITY {
            writeln!(w, " MI {:<8}  {var:<8}", "BND")?;
        } else if l != 0.0 {
            writeln!(w, " LO {:<8}  {var:<8}  {:>12}", "BND", num(l))?;
        }
        if u.is_finite() {
            writeln!(w, " UP {:<8}  {var:<8}  {:>12}", "BND", num(u))?;
        }
    }
    writeln!(w, "ENDATA")
}
