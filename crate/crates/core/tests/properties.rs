//! Invariants checked on randomly generated small worlds.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csk_facets::grounding::{expand_candidates, CandidateSet, RuleWeights};
use csk_facets::ingest::{CskCollection, Taxonomy};
use csk_facets::lp::{self, LinearProgram, Sense, SimplexOptions, SolveStatus, VarState};
use csk_facets::model::{ConceptId, Facet, Statement, Vocabulary};
use csk_facets::partition::{build_partitions, solve_all, Problem};
use csk_facets::priors::PriorScores;
use csk_facets::similarity::{SimilarPair, SimilarityIndex};

struct World {
    candidates: CandidateSet,
    taxonomy: Taxonomy,
    similarity: SimilarityIndex,
    priors: Vec<PriorScores>,
    weights: RuleWeights,
}

impl World {
    fn problem(&self) -> Problem<'_> {
        Problem {
            candidates: &self.candidates,
            taxonomy: &self.taxonomy,
            similarity: &self.similarity,
            threshold: 0.75,
            weights: &self.weights,
            priors: &self.priors,
            simplex: SimplexOptions::default(),
        }
    }
}

fn world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = Vocabulary::new();
    let nc = rng.gen_range(3..7);
    let np = rng.gen_range(3..9);
    let concepts: Vec<ConceptId> = (0..nc).map(|i| vocab.concept(&format!("c{i}")).unwrap()).collect();
    let props: Vec<_> = (0..np).map(|i| vocab.property(&format!("p{i}")).unwrap()).collect();

    let mut rows = Vec::new();
    for &c in &concepts {
        for &p in &props {
            if rng.gen_bool(0.4) {
                rows.push(Statement {
                    subject: c,
                    property: p,
                    source_score: rng.gen_range(0.1..3.0),
                });
            }
        }
    }
    let csk = CskCollection::from_statements(rows).0;

    let mut taxonomy = Taxonomy::new();
    for &c in &concepts {
        taxonomy.add_node(c);
    }
    for i in 0..nc {
        for j in i + 1..nc {
            if rng.gen_bool(0.35) {
                taxonomy.add_edge(concepts[i], concepts[j], rng.gen_range(0.5..1.0));
            }
        }
    }
    for s in csk.subjects() {
        taxonomy.mark_statements(s);
    }

    let mut pairs = Vec::new();
    for a in 0..np {
        for b in a + 1..np {
            if rng.gen_bool(0.25) {
                pairs.push(SimilarPair {
                    a: props[a],
                    b: props[b],
                    sim: rng.gen_range(0.6..1.0),
                });
            }
        }
    }
    let candidates = if rng.gen_bool(0.5) {
        expand_candidates(&csk, &taxonomy)
    } else {
        CandidateSet::observed(&csk)
    };
    let priors = (0..candidates.len())
        .map(|_| PriorScores([0; 4].map(|_| rng.gen_range(0.0..1.0))))
        .collect();
    let mut weights = RuleWeights::default();
    for w in weights.0.iter_mut() {
        *w = rng.gen_range(0.0..1.0);
    }
    World {
        candidates,
        taxonomy,
        similarity: SimilarityIndex::new(&pairs),
        priors,
        weights,
    }
}

fn random_lp(seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=10);
    let mut lp = LinearProgram::new();
    for _ in 0..n {
        let lo = rng.gen_range(-1.0..0.5);
        lp.add_var(rng.gen_range(-1.0..1.0), lo, lo + rng.gen_range(0.5..2.0));
    }
    for _ in 0..rng.gen_range(1..=10) {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                coeffs.push((j, rng.gen_range(-1.0..1.0)));
            }
        }
        let sense = if rng.gen_bool(0.7) { Sense::Le } else { Sense::Ge };
        let rhs = match sense {
            Sense::Le => rng.gen_range(1.5..3.0),
            _ => rng.gen_range(-3.0..-1.5),
        };
        lp.add_row(coeffs, sense, rhs);
    }
    lp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grounding_weights_order_and_tautologies(seed in any::<u64>()) {
        let w = world(seed);
        let clauses = w.problem().grounder().ground_all();
        prop_assert_eq!(&clauses, &w.problem().grounder().ground_all());
        for c in &clauses {
            let product = c.omega_r * c.omega_s * c.omega_e;
            prop_assert!((c.weight - product).abs() <= f64::EPSILON * product.max(1.0));
            let pos: BTreeSet<_> = c.positive.iter().collect();
            prop_assert!(c.negative.iter().all(|a| !pos.contains(a)));
        }
        for pair in clauses.windows(2) {
            let key = |c: &csk_facets::grounding::Clause| (c.rule, c.positive.clone(), c.negative.clone());
            prop_assert!(key(&pair[0]) <= key(&pair[1]));
        }
    }

    #[test]
    fn worker_count_invariance(seed in any::<u64>(), workers in 2usize..6) {
        let w = world(seed);
        prop_assume!(!w.candidates.is_empty());
        let parts = build_partitions(&w.taxonomy, &w.candidates, 200);
        let anchors: Vec<ConceptId> = parts.iter().map(|p| p.anchor).collect();
        let subjects: Vec<ConceptId> = w.candidates.subjects().collect();
        prop_assert_eq!(anchors.iter().collect::<BTreeSet<_>>().len(), anchors.len());
        prop_assert_eq!(anchors.iter().collect::<BTreeSet<_>>(), subjects.iter().collect::<BTreeSet<_>>());

        let one = solve_all(&w.problem(), &parts, 1).unwrap();
        let many = solve_all(&w.problem(), &parts, workers).unwrap();
        prop_assert_eq!(&one.statements, &many.statements);
        for s in subjects {
            let own = w.candidates.of_subject(s);
            for f in Facet::ALL {
                let mut ranks: Vec<usize> = own.iter().map(|&i| one.get(i).scores.get(f).rank).collect();
                ranks.sort();
                prop_assert_eq!(ranks, (1..=own.len()).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn duality_and_reduced_costs(seed in any::<u64>()) {
        let lp = random_lp(seed);
        let r = lp::solve(&lp, &SimplexOptions::default());
        prop_assume!(r.status == SolveStatus::Optimal);
        prop_assert!(lp.max_violation(&r.x) <= 1e-9);
        let mut dual = 0.0;
        for (row, y) in lp.rows.iter().zip(&r.duals) {
            dual += y * row.rhs;
        }
        for j in 0..lp.num_vars() {
            let aty: f64 = lp
                .rows
                .iter()
                .zip(&r.duals)
                .flat_map(|(row, y)| row.coeffs.iter().filter(|(k, _)| *k == j).map(move |(_, a)| a * y))
                .sum();
            let d = lp.objective[j] - aty;
            prop_assert!((d - r.reduced_costs[j]).abs() <= 1e-6);
            match r.states[j] {
                VarState::AtLower => dual += d * lp.lower[j],
                VarState::AtUpper => dual += d * lp.upper[j],
                _ => prop_assert!(d.abs() <= 1e-6),
            }
        }
        prop_assert!((dual - r.objective).abs() <= 1e-6, "dual {} primal {}", dual, r.objective);
    }
}

#[test]
fn statements_are_scored_exactly_once_by_their_own_partition() {
    for seed in 0..20 {
        let w = world(seed);
        if w.candidates.is_empty() {
            continue;
        }
        let parts = build_partitions(&w.taxonomy, &w.candidates, 200);
        let mut seen = vec![0usize; w.candidates.len()];
        for p in &parts {
            assert!(p.members.contains(&p.anchor));
            for &id in w.candidates.of_subject(p.anchor) {
                seen[id.0 as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1), "seed {seed}: {seen:?}");
    }
}
