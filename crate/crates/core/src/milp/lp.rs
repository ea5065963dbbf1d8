//! Minimal linear model with a CPLEX-LP text writer and a matching reader.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Minimization model over named variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearModel {
    pub vars: Vec<Var>,
    pub objective: Vec<(usize, f64)>,
    pub rows: Vec<Row>,
}

const TERMS_PER_LINE: usize = 6;

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

impl LinearModel {
    pub fn add_var(&mut self, name: String, lb: f64, ub: f64, kind: VarKind) -> usize {
        self.vars.push(Var { name, lb, ub, kind });
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row { name, terms, sense, rhs });
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.vars.len() - self.num_binaries()
    }

    /// Objective value of an assignment.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * values[i]).sum()
    }

    /// Largest bound or row violation of an assignment.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lb - x).max(x - v.ub);
        }
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|&(i, c)| c * values[i]).sum();
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    fn write_terms(&self, out: &mut String, terms: &[(usize, f64)]) {
        if terms.is_empty() {
            out.push_str(" 0");
            return;
        }
        for (k, &(i, c)) in terms.iter().enumerate() {
            if k > 0 && k % TERMS_PER_LINE == 0 {
                out.push_str("\n   ");
            }
            let sign = if c.is_sign_negative() { '-' } else { '+' };
            let _ = write!(out, " {sign} {} {}", c.abs(), self.vars[i].name);
        }
    }

    /// CPLEX LP text. Every variable gets an explicit bounds line, in index
    /// order, so that [`LinearModel::parse_lp`] restores the same indices.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::from("\\ departure staggering model\nMinimize\n obj:");
        self.write_terms(&mut out, &self.objective);
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.name);
            self.write_terms(&mut out, &row.terms);
            let _ = writeln!(out, " {} {}", row.sense.as_str(), row.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            if v.lb == v.ub {
                let _ = writeln!(out, " {} = {}", v.name, v.lb);
            } else {
                let _ = writeln!(out, " {} <= {} <= {}", fmt_bound(v.lb), v.name, fmt_bound(v.ub));
            }
        }
        let bins: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !bins.is_empty() {
            out.push_str("Binaries\n");
            for chunk in bins.chunks(TERMS_PER_LINE) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }

    /// Reads the subset of CPLEX LP produced by [`LinearModel::to_lp_string`].
    pub fn parse_lp(text: &str) -> Result<LinearModel> {
        #[derive(PartialEq)]
        enum Section {
            Head,
            Objective,
            Rows,
            Bounds,
            Binaries,
            Done,
        }
        let mut section = Section::Head;
        let mut obj_text = String::new();
        let mut rows_text = String::new();
        let mut bounds = Vec::new();
        let mut binaries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('\\') {
                continue;
            }
            match line.to_ascii_lowercase().as_str() {
                "minimize" => {
                    section = Section::Objective;
                    continue;
                }
                "subject to" => {
                    section = Section::Rows;
                    continue;
                }
                "bounds" => {
                    section = Section::Bounds;
                    continue;
                }
                "binaries" => {
                    section = Section::Binaries;
                    continue;
                }
                "end" => {
                    section = Section::Done;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::Objective => {
                    obj_text.push(' ');
                    obj_text.push_str(line);
                }
                Section::Rows => {
                    // a new row starts with "name:"
                    if line.split_whitespace().next().is_some_and(|t| t.ends_with(':')) {
                        rows_text.push('\n');
                    }
                    rows_text.push(' ');
                    rows_text.push_str(line);
                }
                Section::Bounds => bounds.push(line.to_string()),
                Section::Binaries => binaries.extend(line.split_whitespace().map(str::to_string)),
                Section::Head | Section::Done => {
                    return Err(Error::Parse(format!("unexpected LP line: {line}")));
                }
            }
        }

        let mut model = LinearModel::default();
        let mut index = std::collections::HashMap::new();
        for b in &bounds {
            let toks: Vec<&str> = b.split_whitespace().collect();
            let (name, lb, ub) = match toks.as_slice() {
                [name, "=", v] => {
                    let v = parse_num(v)?;
                    (*name, v, v)
                }
                [lb, "<=", name, "<=", ub] => (*name, parse_num(lb)?, parse_num(ub)?),
                _ => return Err(Error::Parse(format!("bad bounds line: {b}"))),
            };
            index.insert(name.to_string(), model.vars.len());
            model.add_var(name.to_string(), lb, ub, VarKind::Continuous);
        }
        for b in &binaries {
            let i = *index
                .get(b)
                .ok_or_else(|| Error::Parse(format!("binary {b} has no bounds line")))?;
            model.vars[i].kind = VarKind::Binary;
        }
        let obj = obj_text
            .trim()
            .strip_prefix("obj:")
            .ok_or_else(|| Error::Parse("objective must be named obj".into()))?;
        model.objective = parse_terms(obj, &index)?;
        for row in rows_text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (name, rest) = row
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("unnamed row: {row}")))?;
            let toks: Vec<&str> = rest.split_whitespace().collect();
            let n = toks.len();
            if n < 2 {
                return Err(Error::Parse(format!("row {name} too short")));
            }
            let sense = match toks[n - 2] {
                "<=" => Sense::Le,
                ">=" => Sense::Ge,
                "=" => Sense::Eq,
                s => return Err(Error::Parse(format!("row {name}: bad sense {s}"))),
            };
            let rhs = parse_num(toks[n - 1])?;
            let terms = parse_terms(&toks[..n - 2].join(" "), &index)?;
            model.add_row(name.trim().to_string(), terms, sense, rhs);
        }
        Ok(model)
    }
}

fn parse_num(s: &str) -> Result<f64> {
    match s {
        "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Parse(format!("bad number {s}"))),
    }
}

fn parse_terms(text: &str, index: &std::collections::HashMap<String, usize>) -> Result<Vec<(usize, f64)>> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks == ["0"] || toks.is_empty() {
        return Ok(Vec::new());
    }
    if !toks.len().is_multiple_of(3) {
        return Err(Error::Parse(format!("malformed expression: {text}")));
    }
    toks.chunks(3)
        .map(|t| {
            let sign = match t[0] {
                "+" => 1.0,
                "-" => -1.0,
                s => return Err(Error::Parse(format!("expected sign, got {s}"))),
            };
            let c = parse_num(t[1])?;
            let i = *index
                .get(t[2])
                .ok_or_else(|| Error::Parse(format!("unknown variable {}", t[2])))?;
            Ok((i, sign * c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LinearModel {
        let mut m = LinearModel::default();
        let x = m.add_var("x".into(), 0.0, 10.5, VarKind::Continuous);
        let y = m.add_var("y".into(), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous);
        let b = m.add_var("b".into(), 0.0, 1.0, VarKind::Binary);
        let z = m.add_var("z".into(), 3.0, 3.0, VarKind::Continuous);
        m.objective = vec![(x, 1.0), (y, 0.1)];
        m.add_row("c0".into(), vec![(x, 1.0), (y, -2.5), (b, 1e-7)], Sense::Le, 4.0);
        m.add_row("c1".into(), (0..14).map(|k| (k % 4, k as f64 + 0.5)).collect(), Sense::Ge, -1.25);
        m.add_row("c2".into(), vec![(z, 1.0)], Sense::Eq, 3.0);
        m
    }

    #[test]
    fn round_trip_is_identical() {
        let m = sample();
        let text = m.to_lp_string();
        assert_eq!(LinearModel::parse_lp(&text).unwrap(), m);
    }

    #[test]
    fn empty_objective_round_trips() {
        let m = LinearModel::default();
        let text = m.to_lp_string();
        assert!(text.contains("obj: 0"));
        assert_eq!(LinearModel::parse_lp(&text).unwrap(), m);
    }

    #[test]
    fn violation_measure() {
        let m = sample();
        assert_eq!(m.max_violation(&[1.0, 0.0, 0.0, 3.0]), 0.0);
        assert_eq!(m.max_violation(&[12.0, 0.0, 0.0, 3.0]), 8.0);
        assert_eq!(m.objective_value(&[2.0, 10.0, 0.0, 3.0]), 3.0);
    }
}
