use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EncodedLp, SolveResult, VarState};
use crate::model::{AtomId, Facet, StatementId};

/// Ranking keys and primal values are compared after rounding to this grid,
/// so solver noise cannot reorder ties.
pub const KEY_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEntry {
    pub statement: StatementId,
    pub key: f64,
    pub primal: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetRanking {
    pub facet: Facet,
    pub entries: Vec<RankEntry>,
}

fn quantize(v: f64) -> i64 {
    (v / KEY_QUANTUM).round() as i64
}

fn order(facet: Facet, mut entries: Vec<RankEntry>) -> FacetRanking {
    entries.sort_by(|a, b| {
        quantize(a.key)
            .cmp(&quantize(b.key))
            .then(quantize(b.primal).cmp(&quantize(a.primal)))
            .then(a.statement.cmp(&b.statement))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    FacetRanking { facet, entries }
}

/// Per facet, ranks `statements` by the key `−d` of their atom variables
/// (0 when basic), lowest first, then by primal value descending, then by
/// statement id.
///
/// An atom at its lower bound has key `|d|`, the objective increase it
/// needs before it would enter; one at its upper bound has key `−d ≤ 0`,
/// the decrease it could absorb before leaving.
pub fn rank(result: &SolveResult, lp: &EncodedLp, statements: &[StatementId]) -> [FacetRanking; 4] {
    Facet::ALL.map(|facet| {
        let entries = statements
            .iter()
            .map(|&s| {
                let j = lp
                    .atom_var(AtomId::new(facet, s))
                    .expect("ranked statement has an encoded atom");
                let key = match result.states[j] {
                    VarState::Basic => 0.0,
                    _ => -result.reduced_costs[j],
                };
                RankEntry {
                    statement: s,
                    key,
                    primal: result.x[j],
                    rank: 0,
                }
            })
            .collect();
        order(facet, entries)
    })
}

/// Ranking from priors alone: key `−prior`, primal `prior`.
pub fn prior_ranking(statements: &[StatementId], prior: impl Fn(StatementId, Facet) -> f64) -> [FacetRanking; 4] {
    Facet::ALL.map(|facet| {
        let entries = statements
            .iter()
            .map(|&s| {
                let p = prior(s, facet);
                RankEntry {
                    statement: s,
                    key: -p,
                    primal: p,
                    rank: 0,
                }
            })
            .collect();
        order(facet, entries)
    })
}

/// Independent coin flips: `true` with probability equal to each value.
pub fn randomized_round(values: &[f64], seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values.iter().map(|&v| rng.gen::<f64>() < v).collect()
}
