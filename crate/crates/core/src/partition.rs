//! Taxonomy-neighborhood partitions solved independently in parallel.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grounding::{CandidateSet, Clause, Grounder, RuleWeights};
use crate::ingest::Taxonomy;
use crate::lp::{self, EncodedLp, FacetRanking, SimplexOptions, SolveResult, SolveStatus};
use crate::model::{percentile, AtomId, ConceptId, Facet, FacetScore, FacetScores, StatementId, Vocabulary};
use crate::priors::PriorScores;
use crate::similarity::SimilarityIndex;

pub const DEFAULT_SIBLING_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub anchor: ConceptId,
    /// Anchor, its parents, and its siblings after truncation.
    pub members: BTreeSet<ConceptId>,
    pub truncated_siblings: usize,
}

/// One partition per subject with at least one candidate, in subject order.
/// Siblings beyond `sibling_cap` are dropped, weakest link first, then by
/// highest id.
pub fn build_partitions(tax: &Taxonomy, candidates: &CandidateSet, sibling_cap: usize) -> Vec<Partition> {
    candidates
        .subjects()
        .map(|anchor| {
            let mut members: BTreeSet<ConceptId> = BTreeSet::from([anchor]);
            members.extend(tax.parents(anchor).keys().copied());
            let mut sibs: Vec<(f64, ConceptId)> = tax
                .siblings(anchor)
                .into_iter()
                .map(|s| (tax.sibling_confidence(anchor, s), s))
                .collect();
            sibs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let truncated = sibs.len().saturating_sub(sibling_cap);
            if truncated > 0 {
                log::info!(
                    "partition {}: keeping {sibling_cap} of {} siblings",
                    anchor.0,
                    sibs.len()
                );
            }
            members.extend(sibs.into_iter().take(sibling_cap).map(|(_, s)| s));
            Partition {
                anchor,
                members,
                truncated_siblings: truncated,
            }
        })
        .collect()
}

/// Frozen inputs shared by every partition solve.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub candidates: &'a CandidateSet,
    pub taxonomy: &'a Taxonomy,
    pub similarity: &'a SimilarityIndex,
    pub threshold: f64,
    pub weights: &'a RuleWeights,
    /// Indexed by [`StatementId`].
    pub priors: &'a [PriorScores],
    pub simplex: SimplexOptions,
}

impl<'a> Problem<'a> {
    pub fn grounder(&self) -> Grounder<'a> {
        Grounder {
            candidates: self.candidates,
            taxonomy: self.taxonomy,
            similarity: self.similarity,
            threshold: self.threshold,
            weights: self.weights,
            priors: self.priors,
        }
    }

    fn atom_weight(&self, a: AtomId) -> f64 {
        self.priors[a.statement().0 as usize].get(a.facet())
    }

    /// Atoms for `statements` plus any statement the clauses mention, all
    /// four facets each, in id order.
    fn atoms(&self, statements: &[StatementId], clauses: &[Clause]) -> Vec<AtomId> {
        let mut ids: BTreeSet<StatementId> = statements.iter().copied().collect();
        ids.extend(clauses.iter().flat_map(|c| c.atoms().map(AtomId::statement)));
        ids.into_iter()
            .flat_map(|s| Facet::ALL.map(|f| AtomId::new(f, s)))
            .collect()
    }

    pub fn encode(&self, statements: &[StatementId], clauses: &[Clause]) -> EncodedLp {
        lp::encode(&self.atoms(statements, clauses), clauses, |a| self.atom_weight(a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub anchor: ConceptId,
    pub members: usize,
    pub statements: usize,
    pub clauses: usize,
    pub lp_vars: usize,
    pub lp_rows: usize,
    pub solve_millis: u128,
    pub status: SolveStatus,
}

/// A solved partition, with rankings over the anchor's own statements.
#[derive(Debug, Clone)]
pub struct PartitionSolution {
    pub partition: Partition,
    pub statements: Vec<StatementId>,
    pub clauses: Vec<Clause>,
    pub encoded: EncodedLp,
    pub result: SolveResult,
    pub rankings: [FacetRanking; 4],
    /// True when the solve failed and the rankings come from priors alone.
    pub fallback: bool,
    pub telemetry: Telemetry,
}

pub fn solve_partition(problem: &Problem, partition: &Partition) -> PartitionSolution {
    let start = Instant::now();
    let statements: Vec<StatementId> = partition
        .members
        .iter()
        .flat_map(|&m| problem.candidates.of_subject(m).iter().copied())
        .collect();
    let clauses = problem.grounder().ground_touching(&partition.members);
    let encoded = problem.encode(&statements, &clauses);
    let result = lp::solve(&encoded.lp, &problem.simplex);
    let own = problem.candidates.of_subject(partition.anchor);
    let fallback = result.status != SolveStatus::Optimal;
    let rankings = if fallback {
        log::error!(
            "partition {}: solver stopped with {:?}, using prior-only ranking",
            partition.anchor.0,
            result.status
        );
        lp::prior_ranking(own, |s, f| problem.priors[s.0 as usize].get(f))
    } else {
        lp::rank(&result, &encoded, own)
    };
    let telemetry = Telemetry {
        anchor: partition.anchor,
        members: partition.members.len(),
        statements: statements.len(),
        clauses: clauses.len(),
        lp_vars: encoded.lp.num_vars(),
        lp_rows: encoded.lp.num_rows(),
        solve_millis: start.elapsed().as_millis(),
        status: result.status,
    };
    PartitionSolution {
        partition: partition.clone(),
        statements,
        clauses,
        encoded,
        result,
        rankings,
        fallback,
        telemetry,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatementResult {
    pub scores: FacetScores,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Indexed by [`StatementId`].
    pub statements: Vec<StatementResult>,
    pub telemetry: Vec<Telemetry>,
}

impl Solution {
    pub fn get(&self, s: StatementId) -> &StatementResult {
        &self.statements[s.0 as usize]
    }

    pub fn fallback_partitions(&self) -> usize {
        self.telemetry
            .iter()
            .filter(|t| t.status != SolveStatus::Optimal)
            .count()
    }
}

fn scores_from(rankings: &[FacetRanking; 4], fallback: bool, out: &mut [Option<StatementResult>]) {
    let n = rankings[0].entries.len();
    for (fi, ranking) in rankings.iter().enumerate() {
        for e in &ranking.entries {
            let slot = out[e.statement.0 as usize].get_or_insert(StatementResult {
                scores: FacetScores(
                    [FacetScore {
                        score: 0.0,
                        rank: 0,
                        percentile: 0.0,
                    }; 4],
                ),
                fallback,
            });
            slot.scores.0[fi] = FacetScore {
                score: e.key,
                rank: e.rank,
                percentile: percentile(e.rank, n),
            };
        }
    }
}

/// Solves every partition on a pool of `workers` threads and keeps each
/// statement's scores from the partition anchored at its own subject.
/// The result does not depend on `workers`.
pub fn solve_all(problem: &Problem, partitions: &[Partition], workers: usize) -> Result<Solution> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    let solved: Vec<([FacetRanking; 4], bool, Telemetry)> = pool.install(|| {
        partitions
            .par_iter()
            .map(|p| {
                let s = solve_partition(problem, p);
                (s.rankings, s.fallback, s.telemetry)
            })
            .collect()
    });
    let mut slots: Vec<Option<StatementResult>> = vec![None; problem.candidates.len()];
    let mut telemetry = Vec::with_capacity(solved.len());
    for (rankings, fallback, t) in solved {
        scores_from(&rankings, fallback, &mut slots);
        telemetry.push(t);
    }
    let statements = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Solver(format!("statement {i} has no primary partition"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Solution {
        statements,
        telemetry,
    })
}

/// One LP over every candidate and every clause, ranked per subject.
pub fn solve_global(problem: &Problem) -> Result<Solution> {
    let start = Instant::now();
    let clauses = problem.grounder().ground_all();
    let all: Vec<StatementId> = (0..problem.candidates.len() as u32).map(StatementId).collect();
    let encoded = problem.encode(&all, &clauses);
    let result = lp::solve(&encoded.lp, &problem.simplex);
    if result.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("global solve ended with {:?}", result.status)));
    }
    let mut slots: Vec<Option<StatementResult>> = vec![None; problem.candidates.len()];
    let mut telemetry = Vec::new();
    let subjects: Vec<ConceptId> = problem.candidates.subjects().collect();
    for s in subjects {
        let own = problem.candidates.of_subject(s);
        scores_from(&lp::rank(&result, &encoded, own), false, &mut slots);
        telemetry.push(Telemetry {
            anchor: s,
            members: 0,
            statements: all.len(),
            clauses: clauses.len(),
            lp_vars: encoded.lp.num_vars(),
            lp_rows: encoded.lp.num_rows(),
            solve_millis: start.elapsed().as_millis(),
            status: result.status,
        });
    }
    let statements = slots.into_iter().map(|s| s.expect("every subject ranked")).collect();
    Ok(Solution {
        statements,
        telemetry,
    })
}

pub fn write_telemetry<W: Write>(mut w: W, telemetry: &[Telemetry], vocab: &Vocabulary) -> std::io::Result<()> {
    writeln!(w, "anchor\tmembers\tstatements\tclauses\tlp_vars\tlp_rows\tsolve_millis\tstatus")?;
    for t in telemetry {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            vocab.concept_name(t.anchor),
            t.members,
            t.statements,
            t.clauses,
            t.lp_vars,
            t.lp_rows,
            t.solve_millis,
            match t.status {
                SolveStatus::Optimal => "optimal",
                SolveStatus::Infeasible => "infeasible",
                SolveStatus::Unbounded => "unbounded",
                SolveStatus::IterationLimit => "iteration_limit",
            }
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::expand_candidates;
    use crate::ingest::CskCollection;
    use crate::model::Statement;

    fn setup(
        rows: &[(&str, &str)],
        edges: &[(&str, &str, f64)],
    ) -> (Vocabulary, CskCollection, Taxonomy) {
        let mut v = Vocabulary::new();
        let sts: Vec<Statement> = rows
            .iter()
            .map(|(s, p)| Statement {
                subject: v.concept(s).unwrap(),
                property: v.property(p).unwrap(),
                source_score: 1.0,
            })
            .collect();
        let csk = CskCollection::from_statements(sts).0;
        let mut tax = Taxonomy::new();
        for (c, p, w) in edges {
            let (c, p) = (v.concept(c).unwrap(), v.concept(p).unwrap());
            tax.add_edge(c, p, *w);
        }
        for s in csk.subjects() {
            tax.add_node(s);
        }
        (v, csk, tax)
    }

    #[test]
    fn isolated_subject_singleton() {
        let (v, csk, tax) = setup(&[("rock", "be hard"), ("rock", "be grey")], &[]);
        let c = expand_candidates(&csk, &tax);
        let parts = build_partitions(&tax, &c, 200);
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].members, BTreeSet::from([v.find_concept("rock").unwrap()]));
    }

    #[test]
    fn lion_neighborhood() {
        let (v, csk, tax) = setup(
            &[("lion", "roar"), ("leopard", "climb"), ("cheetah", "run fast")],
            &[
                ("lion", "big cat", 0.9),
                ("leopard", "big cat", 0.8),
                ("cheetah", "big cat", 0.7),
            ],
        );
        let c = expand_candidates(&csk, &tax);
        let parts = build_partitions(&tax, &c, 200);
        let lion = v.find_concept("lion").unwrap();
        let p = parts.iter().find(|p| p.anchor == lion).unwrap();
        let names: BTreeSet<&str> = p.members.iter().map(|&m| v.concept_name(m)).collect();
        assert_eq!(names, BTreeSet::from(["lion", "big cat", "leopard", "cheetah"]));
        let capped = build_partitions(&tax, &c, 1);
        let p = capped.iter().find(|p| p.anchor == lion).unwrap();
        assert!(p.members.contains(&v.find_concept("leopard").unwrap()));
        assert!(!p.members.contains(&v.find_concept("cheetah").unwrap()));
        assert_eq!(p.truncated_siblings, 1);
    }

    #[test]
    fn every_statement_has_one_primary() {
        let (_, csk, tax) = setup(
            &[("a", "p"), ("b", "p"), ("b", "q"), ("c", "r")],
            &[("a", "x", 0.9), ("b", "x", 0.9), ("c", "b", 0.9)],
        );
        let c = expand_candidates(&csk, &tax);
        let parts = build_partitions(&tax, &c, 200);
        let mut seen = vec![0; c.len()];
        for p in &parts {
            for &s in c.of_subject(p.anchor) {
                seen[s.0 as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&k| k == 1));
    }
}
