//! Rule templates, candidate expansion along taxonomy edges, and grounding
//! into weighted clauses over facet atoms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use crate::ingest::{CskCollection, Taxonomy};
use crate::model::{AtomId, ConceptId, Facet, StatementId, StatementKey, Vocabulary};
use crate::priors::PriorScores;
use crate::similarity::SimilarityIndex;

pub const DEFAULT_GROUNDING_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Single,
    ParentChild,
    Sibling,
    ChildrenConjunction,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleId {
    TypicalImpliesPlausible,
    SalientImpliesPlausible,
    TypicalRemarkableImpliesSalient,
    PlausibleInheritance,
    TypicalInheritance,
    PlausibilityInference,
    RemarkableParentExcludesChild,
    TypicalParentPreventsRemarkableChild,
    ParentImplausibilityRemarkable,
    ChildrenTypicalImpliesParentTypical,
    SiblingRemarkableExclusion,
    SiblingTypicalPreventsRemarkable,
    SiblingImplausibilityRemarkable,
    SimPlausible,
    SimTypical,
    SimRemarkable,
    SimSalient,
}

impl RuleId {
    pub const COUNT: usize = 17;

    pub const ALL: [RuleId; Self::COUNT] = [
        RuleId::TypicalImpliesPlausible,
        RuleId::SalientImpliesPlausible,
        RuleId::TypicalRemarkableImpliesSalient,
        RuleId::PlausibleInheritance,
        RuleId::TypicalInheritance,
        RuleId::PlausibilityInference,
        RuleId::RemarkableParentExcludesChild,
        RuleId::TypicalParentPreventsRemarkableChild,
        RuleId::ParentImplausibilityRemarkable,
        RuleId::ChildrenTypicalImpliesParentTypical,
        RuleId::SiblingRemarkableExclusion,
        RuleId::SiblingTypicalPreventsRemarkable,
        RuleId::SiblingImplausibilityRemarkable,
        RuleId::SimPlausible,
        RuleId::SimTypical,
        RuleId::SimRemarkable,
        RuleId::SimSalient,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            RuleId::TypicalImpliesPlausible => "TYPICAL_IMPLIES_PLAUSIBLE",
            RuleId::SalientImpliesPlausible => "SALIENT_IMPLIES_PLAUSIBLE",
            RuleId::TypicalRemarkableImpliesSalient => "TYPICAL_REMARKABLE_IMPLIES_SALIENT",
            RuleId::PlausibleInheritance => "PLAUSIBLE_INHERITANCE",
            RuleId::TypicalInheritance => "TYPICAL_INHERITANCE",
            RuleId::PlausibilityInference => "PLAUSIBILITY_INFERENCE",
            RuleId::RemarkableParentExcludesChild => "REMARKABLE_PARENT_EXCLUDES_CHILD",
            RuleId::TypicalParentPreventsRemarkableChild => {
                "TYPICAL_PARENT_PREVENTS_REMARKABLE_CHILD"
            }
            RuleId::ParentImplausibilityRemarkable => "PARENT_IMPLAUSIBILITY_REMARKABLE",
            RuleId::ChildrenTypicalImpliesParentTypical => {
                "CHILDREN_TYPICAL_IMPLIES_PARENT_TYPICAL"
            }
            RuleId::SiblingRemarkableExclusion => "SIBLING_REMARKABLE_EXCLUSION",
            RuleId::SiblingTypicalPreventsRemarkable => "SIBLING_TYPICAL_PREVENTS_REMARKABLE",
            RuleId::SiblingImplausibilityRemarkable => "SIBLING_IMPLAUSIBILITY_REMARKABLE",
            RuleId::SimPlausible => "SIM_PLAUSIBLE",
            RuleId::SimTypical => "SIM_TYPICAL",
            RuleId::SimRemarkable => "SIM_REMARKABLE",
            RuleId::SimSalient => "SIM_SALIENT",
        }
    }

    pub fn parse(tag: &str) -> Option<RuleId> {
        let tag = tag.trim();
        Self::ALL
            .into_iter()
            .find(|r| r.tag().eq_ignore_ascii_case(tag))
    }

    pub fn scope(self) -> Scope {
        use RuleId::*;
        match self {
            TypicalImpliesPlausible | SalientImpliesPlausible | TypicalRemarkableImpliesSalient => {
                Scope::Single
            }
            PlausibleInheritance
            | TypicalInheritance
            | PlausibilityInference
            | RemarkableParentExcludesChild
            | TypicalParentPreventsRemarkableChild
            | ParentImplausibilityRemarkable => Scope::ParentChild,
            ChildrenTypicalImpliesParentTypical => Scope::ChildrenConjunction,
            SiblingRemarkableExclusion
            | SiblingTypicalPreventsRemarkable
            | SiblingImplausibilityRemarkable => Scope::Sibling,
            SimPlausible | SimTypical | SimRemarkable | SimSalient => Scope::Similarity,
        }
    }

    pub fn default_weight(self) -> f64 {
        match self {
            RuleId::SimPlausible | RuleId::SimTypical | RuleId::SimRemarkable | RuleId::SimSalient => {
                0.85
            }
            RuleId::PlausibilityInference => 0.66,
            RuleId::SiblingImplausibilityRemarkable => 0.60,
            _ => 0.40,
        }
    }

    fn similarity_facet(self) -> Option<Facet> {
        match self {
            RuleId::SimPlausible => Some(Facet::Plausible),
            RuleId::SimTypical => Some(Facet::Typical),
            RuleId::SimRemarkable => Some(Facet::Remarkable),
            RuleId::SimSalient => Some(Facet::Salient),
            _ => None,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One ω_r per rule, indexed by [`RuleId::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleWeights(pub [f64; RuleId::COUNT]);

impl Default for RuleWeights {
    fn default() -> Self {
        RuleWeights(RuleId::ALL.map(RuleId::default_weight))
    }
}

impl RuleWeights {
    pub fn get(&self, rule: RuleId) -> f64 {
        self.0[rule.index()]
    }

    pub fn set(&mut self, rule: RuleId, w: f64) {
        self.0[rule.index()] = w;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Observed,
    FromChild,
    FromParent,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::FromChild => "from_child",
            Provenance::FromParent => "from_parent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateStatement {
    pub key: StatementKey,
    pub source_score: f64,
    pub provenance: Provenance,
    /// Subject of the observed statement an inherited candidate came from.
    pub source: Option<ConceptId>,
}

/// Candidates in key order; position is the [`StatementId`].
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    statements: Vec<CandidateStatement>,
    index: HashMap<StatementKey, StatementId>,
    by_subject: BTreeMap<ConceptId, Vec<StatementId>>,
}

impl CandidateSet {
    pub fn new(mut statements: Vec<CandidateStatement>) -> Self {
        statements.sort_by_key(|c| c.key);
        statements.dedup_by_key(|c| c.key);
        let mut index = HashMap::with_capacity(statements.len());
        let mut by_subject: BTreeMap<ConceptId, Vec<StatementId>> = BTreeMap::new();
        for (i, c) in statements.iter().enumerate() {
            let id = StatementId(i as u32);
            index.insert(c.key, id);
            by_subject.entry(c.key.subject).or_default().push(id);
        }
        Self {
            statements,
            index,
            by_subject,
        }
    }

    /// Observed statements only.
    pub fn observed(csk: &CskCollection) -> Self {
        Self::new(
            csk.statements()
                .iter()
                .map(|st| CandidateStatement {
                    key: st.key(),
                    source_score: st.source_score,
                    provenance: Provenance::Observed,
                    source: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn all(&self) -> &[CandidateStatement] {
        &self.statements
    }

    pub fn keys(&self) -> Vec<StatementKey> {
        self.statements.iter().map(|c| c.key).collect()
    }

    pub fn get(&self, id: StatementId) -> &CandidateStatement {
        &self.statements[id.0 as usize]
    }

    pub fn id(&self, key: StatementKey) -> Option<StatementId> {
        self.index.get(&key).copied()
    }

    pub fn of_subject(&self, s: ConceptId) -> &[StatementId] {
        self.by_subject.get(&s).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn subjects(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.by_subject.keys().copied()
    }
}

/// Observed statements plus each observed property pushed one edge up and
/// one edge down the taxonomy. Inherited candidates score 0; when several
/// sources propose the same pair, the smallest source subject wins.
pub fn expand_candidates(csk: &CskCollection, tax: &Taxonomy) -> CandidateSet {
    let mut proposals: BTreeMap<StatementKey, (ConceptId, Provenance)> = BTreeMap::new();
    for st in csk.statements() {
        let mut propose = |target: ConceptId, prov: Provenance| {
            let key = StatementKey::new(target, st.property);
            if csk.contains(key) {
                return;
            }
            let entry = proposals.entry(key).or_insert((st.subject, prov));
            if (st.subject, prov) < *entry {
                *entry = (st.subject, prov);
            }
        };
        for &parent in tax.parents(st.subject).keys() {
            propose(parent, Provenance::FromChild);
        }
        for &child in tax.children(st.subject).keys() {
            propose(child, Provenance::FromParent);
        }
    }
    let mut all: Vec<CandidateStatement> = csk
        .statements()
        .iter()
        .map(|st| CandidateStatement {
            key: st.key(),
            source_score: st.source_score,
            provenance: Provenance::Observed,
            source: None,
        })
        .collect();
    all.extend(proposals.into_iter().map(|(key, (src, prov))| CandidateStatement {
        key,
        source_score: 0.0,
        provenance: prov,
        source: Some(src),
    }));
    CandidateSet::new(all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub rule: RuleId,
    pub positive: Vec<AtomId>,
    pub negative: Vec<AtomId>,
    pub omega_r: f64,
    pub omega_s: f64,
    pub omega_e: f64,
    pub weight: f64,
}

impl Clause {
    pub fn atoms(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.positive.iter().chain(&self.negative).copied()
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Truth value under a Boolean atom assignment.
    pub fn satisfied_by(&self, value: impl Fn(AtomId) -> bool) -> bool {
        self.positive.iter().any(|&a| value(a)) || self.negative.iter().any(|&a| !value(a))
    }

    fn sort_key(&self) -> (RuleId, &[AtomId], &[AtomId]) {
        (self.rule, &self.positive, &self.negative)
    }
}

/// Noisy-or over literal probabilities: `1 − Π(1 − u)`, where a literal's
/// probability is the prior of its atom, or one minus it when negated.
pub fn evidence_weight(literals: impl IntoIterator<Item = (f64, bool)>) -> f64 {
    1.0 - literals
        .into_iter()
        .map(|(prior, positive)| 1.0 - if positive { prior } else { 1.0 - prior })
        .product::<f64>()
}

pub struct Grounder<'a> {
    pub candidates: &'a CandidateSet,
    pub taxonomy: &'a Taxonomy,
    pub similarity: &'a SimilarityIndex,
    pub threshold: f64,
    pub weights: &'a RuleWeights,
    /// Indexed by [`StatementId`].
    pub priors: &'a [PriorScores],
}

type Lit = (Facet, StatementId, bool);

impl Grounder<'_> {
    /// Every clause of the whole problem, in canonical order.
    pub fn ground_all(&self) -> Vec<Clause> {
        let mut out = Vec::new();
        for i in 0..self.candidates.len() {
            self.single(StatementId(i as u32), &mut out);
        }
        for (child, parent, _) in self.taxonomy.edges() {
            self.parent_child(parent, child, &mut out);
        }
        let nodes: Vec<ConceptId> = self.taxonomy.nodes().collect();
        for &s1 in &nodes {
            for s2 in self.taxonomy.siblings(s1) {
                self.sibling(s1, s2, &mut out);
            }
        }
        for &parent in &nodes {
            self.children_conjunction(parent, &mut out);
        }
        let subjects: Vec<ConceptId> = self.candidates.subjects().collect();
        for s in subjects {
            self.similar(s, &mut out);
        }
        self.finish(out)
    }

    /// Clauses with at least one atom whose subject is in `members`.
    ///
    /// Equals filtering [`Grounder::ground_all`], enumerating only the
    /// groundings that can touch the members.
    pub fn ground_touching(&self, members: &BTreeSet<ConceptId>) -> Vec<Clause> {
        let mut out = Vec::new();
        let mut conj_parents = BTreeSet::new();
        for &m in members {
            for &id in self.candidates.of_subject(m) {
                self.single(id, &mut out);
            }
            for &parent in self.taxonomy.parents(m).keys() {
                self.parent_child(parent, m, &mut out);
                conj_parents.insert(parent);
            }
            for &child in self.taxonomy.children(m).keys() {
                self.parent_child(m, child, &mut out);
            }
            for sib in self.taxonomy.siblings(m) {
                self.sibling(m, sib, &mut out);
                self.sibling(sib, m, &mut out);
            }
            conj_parents.insert(m);
            self.similar(m, &mut out);
        }
        for parent in conj_parents {
            self.children_conjunction(parent, &mut out);
        }
        out.retain(|c| {
            c.atoms()
                .any(|a| members.contains(&self.candidates.get(a.statement()).key.subject))
        });
        self.finish(out)
    }

    fn finish(&self, mut out: Vec<Clause>) -> Vec<Clause> {
        out.sort_by(|a, b| {
            a.sort_key()
                .cmp(&b.sort_key())
                .then(b.weight.total_cmp(&a.weight))
        });
        out.dedup_by(|later, first| later.sort_key() == first.sort_key());
        out
    }

    fn emit(&self, rule: RuleId, omega_s: f64, lits: &[Lit], out: &mut Vec<Clause>) {
        let mut positive: Vec<AtomId> = Vec::new();
        let mut negative: Vec<AtomId> = Vec::new();
        for &(f, s, pos) in lits {
            let a = AtomId::new(f, s);
            if pos {
                positive.push(a);
            } else {
                negative.push(a);
            }
        }
        positive.sort_unstable();
        positive.dedup();
        negative.sort_unstable();
        negative.dedup();
        if positive.iter().any(|a| negative.binary_search(a).is_ok()) {
            return;
        }
        let omega_e = evidence_weight(
            positive
                .iter()
                .map(|a| (self.prior(*a), true))
                .chain(negative.iter().map(|a| (self.prior(*a), false))),
        );
        let omega_r = self.weights.get(rule);
        let weight = omega_r * omega_s * omega_e;
        if weight <= 0.0 {
            return;
        }
        out.push(Clause {
            rule,
            positive,
            negative,
            omega_r,
            omega_s,
            omega_e,
            weight,
        });
    }

    fn prior(&self, a: AtomId) -> f64 {
        self.priors[a.statement().0 as usize].get(a.facet())
    }

    fn single(&self, s: StatementId, out: &mut Vec<Clause>) {
        use Facet::*;
        self.emit(
            RuleId::TypicalImpliesPlausible,
            1.0,
            &[(Typical, s, false), (Plausible, s, true)],
            out,
        );
        self.emit(
            RuleId::SalientImpliesPlausible,
            1.0,
            &[(Salient, s, false), (Plausible, s, true)],
            out,
        );
        self.emit(
            RuleId::TypicalRemarkableImpliesSalient,
            1.0,
            &[(Typical, s, false), (Remarkable, s, false), (Salient, s, true)],
            out,
        );
    }

    /// Pairs `(x, y, ω_s)` of candidates of `a` and `b` whose properties are
    /// equal or similar above the threshold.
    fn linked(&self, a: ConceptId, b: ConceptId) -> Vec<(StatementId, StatementId, f64)> {
        let mut pairs = Vec::new();
        for &x in self.candidates.of_subject(a) {
            let p = self.candidates.get(x).key.property;
            if let Some(y) = self.candidates.id(StatementKey::new(b, p)) {
                pairs.push((x, y, 1.0));
            }
            for (q, sim) in self.similarity.neighbors(p, self.threshold) {
                if let Some(y) = self.candidates.id(StatementKey::new(b, q)) {
                    pairs.push((x, y, sim));
                }
            }
        }
        pairs
    }

    fn parent_child(&self, parent: ConceptId, child: ConceptId, out: &mut Vec<Clause>) {
        use Facet::*;
        for (s1, s2, w) in self.linked(parent, child) {
            self.emit(
                RuleId::PlausibleInheritance,
                w,
                &[(Plausible, s1, false), (Plausible, s2, true)],
                out,
            );
            self.emit(
                RuleId::TypicalInheritance,
                w,
                &[(Typical, s1, false), (Typical, s2, true)],
                out,
            );
            self.emit(
                RuleId::PlausibilityInference,
                w,
                &[(Typical, s2, false), (Plausible, s1, true)],
                out,
            );
            self.emit(
                RuleId::RemarkableParentExcludesChild,
                w,
                &[(Remarkable, s1, false), (Remarkable, s2, false)],
                out,
            );
            self.emit(
                RuleId::TypicalParentPreventsRemarkableChild,
                w,
                &[(Typical, s1, false), (Remarkable, s2, false)],
                out,
            );
            self.emit(
                RuleId::ParentImplausibilityRemarkable,
                w,
                &[(Plausible, s1, true), (Plausible, s2, false), (Remarkable, s2, true)],
                out,
            );
        }
    }

    fn sibling(&self, a: ConceptId, b: ConceptId, out: &mut Vec<Clause>) {
        use Facet::*;
        for (s1, s2, w) in self.linked(a, b) {
            self.emit(
                RuleId::SiblingRemarkableExclusion,
                w,
                &[(Remarkable, s1, false), (Remarkable, s2, false)],
                out,
            );
            self.emit(
                RuleId::SiblingTypicalPreventsRemarkable,
                w,
                &[(Typical, s1, false), (Remarkable, s2, false)],
                out,
            );
            self.emit(
                RuleId::SiblingImplausibilityRemarkable,
                w,
                &[(Plausible, s1, true), (Plausible, s2, false), (Remarkable, s2, true)],
                out,
            );
        }
    }

    fn children_conjunction(&self, parent: ConceptId, out: &mut Vec<Clause>) {
        let children = self.taxonomy.children(parent);
        if children.len() < 2 {
            return;
        }
        for &x in self.candidates.of_subject(parent) {
            let p = self.candidates.get(x).key.property;
            let mut lits: Vec<Lit> = children
                .keys()
                .filter_map(|&c| self.candidates.id(StatementKey::new(c, p)))
                .map(|y| (Facet::Typical, y, false))
                .collect();
            if lits.len() < 2 {
                continue;
            }
            lits.push((Facet::Typical, x, true));
            self.emit(RuleId::ChildrenTypicalImpliesParentTypical, 1.0, &lits, out);
        }
    }

    fn similar(&self, s: ConceptId, out: &mut Vec<Clause>) {
        let ids = self.candidates.of_subject(s);
        for &x in ids {
            let p = self.candidates.get(x).key.property;
            for (q, sim) in self.similarity.neighbors(p, self.threshold) {
                let Some(y) = self.candidates.id(StatementKey::new(s, q)) else {
                    continue;
                };
                for rule in [
                    RuleId::SimPlausible,
                    RuleId::SimTypical,
                    RuleId::SimRemarkable,
                    RuleId::SimSalient,
                ] {
                    let f = rule.similarity_facet().expect("similarity rule");
                    self.emit(rule, sim, &[(f, x, false), (f, y, true)], out);
                }
            }
        }
    }
}

pub fn count_by_rule(clauses: &[Clause]) -> [usize; RuleId::COUNT] {
    let mut counts = [0; RuleId::COUNT];
    for c in clauses {
        counts[c.rule.index()] += 1;
    }
    counts
}

/// Renders a literal as `+facet(subject|property)` or `-facet(...)`.
pub fn format_literal(a: AtomId, positive: bool, candidates: &CandidateSet, vocab: &Vocabulary) -> String {
    let key = candidates.get(a.statement()).key;
    format!(
        "{}{}({}|{})",
        if positive { '+' } else { '-' },
        a.facet(),
        vocab.concept_name(key.subject),
        vocab.property_name(key.property)
    )
}

/// TSV rows `rule, literals, ω_r, ω_s, ω_e, ω^c` with literals joined by `;`.
pub fn write_clause_dump<W: Write>(
    mut w: W,
    clauses: &[Clause],
    candidates: &CandidateSet,
    vocab: &Vocabulary,
) -> std::io::Result<()> {
    writeln!(w, "rule\tliterals\tomega_r\tomega_s\tomega_e\tweight")?;
    for c in clauses {
        let lits: Vec<String> = c
            .positive
            .iter()
            .map(|&a| format_literal(a, true, candidates, vocab))
            .chain(c.negative.iter().map(|&a| format_literal(a, false, candidates, vocab)))
            .collect();
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            c.rule,
            lits.join(";"),
            c.omega_r,
            c.omega_s,
            c.omega_e,
            c.weight
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PropertyId, Statement};
    use crate::similarity::SimilarPair;
    use proptest::prelude::*;

    struct World {
        vocab: Vocabulary,
        csk: CskCollection,
        tax: Taxonomy,
    }

    fn world(rows: &[(&str, &str)], edges: &[(&str, &str)]) -> World {
        let mut vocab = Vocabulary::new();
        let sts: Vec<Statement> = rows
            .iter()
            .map(|(s, p)| Statement {
                subject: vocab.concept(s).unwrap(),
                property: vocab.property(p).unwrap(),
                source_score: 1.0,
            })
            .collect();
        let csk = CskCollection::from_statements(sts).0;
        let mut tax = Taxonomy::new();
        for (c, p) in edges {
            let (c, p) = (vocab.concept(c).unwrap(), vocab.concept(p).unwrap());
            tax.add_edge(c, p, 0.9);
        }
        for s in csk.subjects() {
            tax.add_node(s);
        }
        World { vocab, csk, tax }
    }

    fn ground(w: &World, cands: &CandidateSet, sim: &SimilarityIndex, prior: f64) -> Vec<Clause> {
        let priors = vec![PriorScores([prior; 4]); cands.len()];
        let weights = RuleWeights::default();
        Grounder {
            candidates: cands,
            taxonomy: &w.tax,
            similarity: sim,
            threshold: 0.75,
            weights: &weights,
            priors: &priors,
        }
        .ground_all()
    }

    #[test]
    fn seventeen_rules_by_scope() {
        assert_eq!(RuleId::ALL.len(), 17);
        let count = |s: Scope| RuleId::ALL.iter().filter(|r| r.scope() == s).count();
        assert_eq!(count(Scope::Single), 3);
        assert_eq!(count(Scope::ParentChild) + count(Scope::ChildrenConjunction), 7);
        assert_eq!(count(Scope::Sibling), 3);
        assert_eq!(count(Scope::Similarity), 4);
        for r in RuleId::ALL {
            assert_eq!(RuleId::parse(&r.tag().to_lowercase()), Some(r));
        }
    }

    #[test]
    fn default_weights() {
        let w = RuleWeights::default();
        assert_eq!(w.get(RuleId::SimTypical), 0.85);
        assert_eq!(w.get(RuleId::PlausibilityInference), 0.66);
        assert_eq!(w.get(RuleId::SiblingImplausibilityRemarkable), 0.60);
        assert_eq!(w.get(RuleId::TypicalInheritance), 0.40);
    }

    #[test]
    fn predators_propagate_to_big_cats() {
        let w = world(&[("lion", "are predators")], &[("lion", "big cat")]);
        let c = expand_candidates(&w.csk, &w.tax);
        let key = StatementKey::new(
            w.vocab.find_concept("big cat").unwrap(),
            w.vocab.find_property("are predators").unwrap(),
        );
        let cand = c.get(c.id(key).unwrap());
        assert_eq!(cand.provenance, Provenance::FromChild);
        assert_eq!(cand.source, w.vocab.find_concept("lion"));
        assert_eq!(cand.source_score, 0.0);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn observed_not_duplicated_and_isolated_unexpanded() {
        let w = world(
            &[("lion", "roar"), ("big cat", "roar"), ("rock", "be hard")],
            &[("lion", "big cat")],
        );
        let c = expand_candidates(&w.csk, &w.tax);
        assert_eq!(c.len(), 3);
        assert!(c.all().iter().all(|x| x.provenance == Provenance::Observed));
    }

    #[test]
    fn concept_dimension_shapes() {
        let w = world(&[("car", "hit wall")], &[]);
        let c = CandidateSet::observed(&w.csk);
        let clauses = ground(&w, &c, &SimilarityIndex::default(), 0.5);
        assert_eq!(clauses.len(), 3);
        let s = StatementId(0);
        assert_eq!(clauses[0].rule, RuleId::TypicalImpliesPlausible);
        assert_eq!(clauses[0].positive, vec![AtomId::new(Facet::Plausible, s)]);
        assert_eq!(clauses[0].negative, vec![AtomId::new(Facet::Typical, s)]);
        assert_eq!(clauses[2].negative.len(), 2);
    }

    #[test]
    fn similarity_grounds_two_directions() {
        let w = world(&[("bicycle", "be at city"), ("bicycle", "be at town")], &[]);
        let c = CandidateSet::observed(&w.csk);
        let (p, q) = (
            w.vocab.find_property("be at city").unwrap(),
            w.vocab.find_property("be at town").unwrap(),
        );
        let sim = SimilarityIndex::new(&[SimilarPair { a: p.min(q), b: p.max(q), sim: 0.86 }]);
        let clauses = ground(&w, &c, &sim, 1.0);
        let simp: Vec<&Clause> = clauses.iter().filter(|c| c.rule == RuleId::SimPlausible).collect();
        assert_eq!(simp.len(), 2);
        for cl in simp {
            assert_eq!(cl.omega_s, 0.86);
            assert_eq!(cl.omega_e, 1.0);
            assert!((cl.weight - 0.731).abs() < 1e-12);
        }
    }

    #[test]
    fn children_conjunction_needs_two_children() {
        let one = world(&[("a", "p"), ("x", "p")], &[("a", "x")]);
        let c = CandidateSet::observed(&one.csk);
        assert!(!ground(&one, &c, &SimilarityIndex::default(), 0.5)
            .iter()
            .any(|c| c.rule == RuleId::ChildrenTypicalImpliesParentTypical));

        let two = world(&[("a", "p"), ("b", "p"), ("x", "p")], &[("a", "x"), ("b", "x")]);
        let c = CandidateSet::observed(&two.csk);
        let conj: Vec<Clause> = ground(&two, &c, &SimilarityIndex::default(), 0.5)
            .into_iter()
            .filter(|c| c.rule == RuleId::ChildrenTypicalImpliesParentTypical)
            .collect();
        assert_eq!(conj.len(), 1);
        assert_eq!(conj[0].negative.len(), 2);
        assert_eq!(conj[0].positive.len(), 1);
    }

    #[test]
    fn zero_weight_rules_dropped() {
        let w = world(&[("car", "hit wall")], &[]);
        let c = CandidateSet::observed(&w.csk);
        let mut weights = RuleWeights::default();
        weights.set(RuleId::TypicalImpliesPlausible, 0.0);
        let priors = vec![PriorScores([0.5; 4])];
        let g = Grounder {
            candidates: &c,
            taxonomy: &w.tax,
            similarity: &SimilarityIndex::default(),
            threshold: 0.75,
            weights: &weights,
            priors: &priors,
        };
        assert_eq!(g.ground_all().len(), 2);
    }

    #[test]
    fn evidence_fold_examples() {
        assert!((evidence_weight([(0.2, true), (0.5, false)]) - 0.6).abs() < 1e-12);
        assert_eq!(evidence_weight([(1.0, true), (1.0, false)]), 1.0);
        assert!((evidence_weight([(0.2, false), (0.2, false)]) - 0.96).abs() < 1e-12);
    }

    fn random_world(
        subjects: usize,
        props: usize,
        rows: &[(usize, usize)],
        edges: &[(usize, usize)],
        sims: &[(usize, usize, f64)],
    ) -> (World, SimilarityIndex) {
        let names: Vec<(String, String)> = rows
            .iter()
            .map(|(s, p)| (format!("s{}", s % subjects), format!("p{}", p % props)))
            .collect();
        let refs: Vec<(&str, &str)> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let enames: Vec<(String, String)> = edges
            .iter()
            .filter(|(a, b)| a % subjects != b % subjects)
            .map(|(a, b)| (format!("s{}", a % subjects), format!("s{}", b % subjects)))
            .collect();
        let erefs: Vec<(&str, &str)> = enames.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let mut w = world(&refs, &erefs);
        let ids: Vec<PropertyId> = (0..props).map(|i| w.vocab.property(&format!("p{i}")).unwrap()).collect();
        let mut pairs = BTreeMap::new();
        for (a, b, x) in sims {
            let (a, b) = (ids[a % props], ids[b % props]);
            if a != b {
                pairs.insert((a.min(b), a.max(b)), *x);
            }
        }
        let pairs: Vec<SimilarPair> = pairs.into_iter().map(|((a, b), sim)| SimilarPair { a, b, sim }).collect();
        (w, SimilarityIndex::new(&pairs))
    }

    proptest! {
        #[test]
        fn evidence_fold_order_invariant(lits in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..6), rot in 0usize..6) {
            let mut other = lits.clone();
            other.rotate_left(rot % lits.len());
            other.reverse();
            prop_assert!((evidence_weight(lits.iter().copied()) - evidence_weight(other)).abs() < 1e-12);
        }

        #[test]
        fn touching_equals_filtered_all(
            rows in prop::collection::vec((0usize..6, 0usize..5), 1..20),
            edges in prop::collection::vec((0usize..6, 0usize..6), 0..8),
            sims in prop::collection::vec((0usize..5, 0usize..5, 0.6f64..1.0), 0..4),
            members in prop::collection::btree_set(0usize..6, 1..4),
            prior in 0.05f64..0.95,
        ) {
            let (w, sim) = random_world(6, 5, &rows, &edges, &sims);
            let cands = expand_candidates(&w.csk, &w.tax);
            let priors = vec![PriorScores([prior, prior * 0.9, 1.0 - prior, 0.5]); cands.len()];
            let weights = RuleWeights::default();
            let g = Grounder {
                candidates: &cands,
                taxonomy: &w.tax,
                similarity: &sim,
                threshold: 0.75,
                weights: &weights,
                priors: &priors,
            };
            let members: BTreeSet<ConceptId> = members
                .into_iter()
                .filter_map(|m| w.vocab.find_concept(&format!("s{m}")))
                .collect();
            let all = g.ground_all();
            let filtered: Vec<Clause> = all
                .iter()
                .filter(|c| c.atoms().any(|a| members.contains(&cands.get(a.statement()).key.subject)))
                .cloned()
                .collect();
            prop_assert_eq!(g.ground_touching(&members), filtered);
            prop_assert_eq!(g.ground_all(), all.clone());
            for c in &all {
                prop_assert!(!c.is_empty());
                prop_assert!(c.positive.iter().all(|a| !c.negative.contains(a)));
                prop_assert_eq!(c.weight, c.omega_r * c.omega_s * c.omega_e);
                prop_assert!(c.atoms().all(|a| (a.statement().0 as usize) < cands.len()));
            }
            for pair in all.windows(2) {
                prop_assert!(pair[0].sort_key() < pair[1].sort_key());
            }
        }
    }
}
