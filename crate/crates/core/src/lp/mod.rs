//! Linear-program relaxation of the weighted clause set.

mod mps;
mod rank;
mod simplex;

use std::collections::HashMap;

use crate::grounding::Clause;
use crate::model::AtomId;

pub use mps::write_mps;
pub use rank::{prior_ranking, randomized_round, rank, FacetRanking, RankEntry, KEY_QUANTUM};
pub use simplex::{solve, SimplexOptions, SolveResult, SolveStatus, VarState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `max cᵀx` subject to the rows and `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        debug_assert!(coeffs.iter().all(|(j, _)| *j < self.objective.len()));
        self.rows.push(Row { coeffs, sense, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for r in &self.rows {
            let act: f64 = r.coeffs.iter().map(|(j, a)| a * x[*j]).sum();
            let gap = match r.sense {
                Sense::Ge => r.rhs - act,
                Sense::Le => act - r.rhs,
                Sense::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }
}

/// An LP built from atoms and clauses, with atom variables first.
#[derive(Debug, Clone)]
pub struct EncodedLp {
    pub lp: LinearProgram,
    pub atoms: Vec<AtomId>,
    atom_var: HashMap<AtomId, usize>,
}

impl EncodedLp {
    pub fn atom_var(&self, a: AtomId) -> Option<usize> {
        self.atom_var.get(&a).copied()
    }

    pub fn clause_var(&self, clause_index: usize) -> usize {
        self.atoms.len() + clause_index
    }

    pub fn num_clauses(&self) -> usize {
        self.lp.num_vars() - self.atoms.len()
    }
}

/// Atom variables weighted by `atom_weight`, one variable per clause weighted
/// by its ω^c, and per clause the rows `c − v ≥ 0` for each positive
/// literal, `c + w ≥ 1` for each negative literal, and
/// `Σv − Σw − c ≥ −|c⁻|`.
///
/// Panics if a clause references an atom missing from `atoms`.
pub fn encode(atoms: &[AtomId], clauses: &[Clause], atom_weight: impl Fn(AtomId) -> f64) -> EncodedLp {
    let mut lp = LinearProgram::new();
    let mut atom_var = HashMap::with_capacity(atoms.len());
    for &a in atoms {
        let j = lp.add_var(atom_weight(a), 0.0, 1.0);
        atom_var.insert(a, j);
    }
    let var = |a: &AtomId| -> usize {
        *atom_var
            .get(a)
            .unwrap_or_else(|| panic!("clause references atom {a:?} outside the encoded set"))
    };
    for cl in clauses {
        let c = lp.add_var(cl.weight, 0.0, 1.0);
        for v in &cl.positive {
            lp.add_row(vec![(c, 1.0), (var(v), -1.0)], Sense::Ge, 0.0);
        }
        for w in &cl.negative {
            lp.add_row(vec![(c, 1.0), (var(w), 1.0)], Sense::Ge, 1.0);
        }
        let mut coeffs: Vec<(usize, f64)> = cl.positive.iter().map(|v| (var(v), 1.0)).collect();
        coeffs.extend(cl.negative.iter().map(|w| (var(w), -1.0)));
        coeffs.push((c, -1.0));
        lp.add_row(coeffs, Sense::Ge, -(cl.negative.len() as f64));
    }
    EncodedLp {
        lp,
        atoms: atoms.to_vec(),
        atom_var,
    }
}
