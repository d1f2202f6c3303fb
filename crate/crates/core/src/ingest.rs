//! Loading commonsense collections and hypernymy taxonomies from TSV.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;

use crate::error::{Error, Result};
use crate::model::{ConceptId, PropertyId, Statement, StatementKey, Vocabulary};

pub const DEFAULT_TAXONOMY_CUTOFF: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CskFormat {
    /// subject, predicate, object, score
    Triples,
    /// subject, property, score
    Pairs,
}

impl CskFormat {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "triples" => Some(CskFormat::Triples),
            "pairs" => Some(CskFormat::Pairs),
            _ => None,
        }
    }
}

/// A malformed input row that was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CskLoadReport {
    pub rows: usize,
    pub rejected: Vec<RejectedRow>,
    pub merged_duplicates: usize,
}

/// Deduplicated statements with subject and property indices.
#[derive(Debug, Clone, Default)]
pub struct CskCollection {
    statements: Vec<Statement>,
    index: HashMap<StatementKey, usize>,
    by_subject: BTreeMap<ConceptId, Vec<usize>>,
    by_property: BTreeMap<PropertyId, Vec<usize>>,
}

impl CskCollection {
    /// Builds a collection, merging duplicate keys by maximum score.
    ///
    /// Returns the collection and the number of merged duplicates.
    pub fn from_statements(input: impl IntoIterator<Item = Statement>) -> (Self, usize) {
        let mut merged: BTreeMap<StatementKey, f64> = BTreeMap::new();
        let mut dups = 0;
        for st in input {
            merged
                .entry(st.key())
                .and_modify(|s| {
                    dups += 1;
                    *s = s.max(st.source_score);
                })
                .or_insert(st.source_score);
        }
        let statements = merged
            .into_iter()
            .map(|(k, score)| Statement {
                subject: k.subject,
                property: k.property,
                source_score: score,
            })
            .collect();
        (Self::index_statements(statements), dups)
    }

    fn index_statements(statements: Vec<Statement>) -> Self {
        let mut index = HashMap::with_capacity(statements.len());
        let mut by_subject: BTreeMap<ConceptId, Vec<usize>> = BTreeMap::new();
        let mut by_property: BTreeMap<PropertyId, Vec<usize>> = BTreeMap::new();
        for (i, st) in statements.iter().enumerate() {
            index.insert(st.key(), i);
            by_subject.entry(st.subject).or_default().push(i);
            by_property.entry(st.property).or_default().push(i);
        }
        Self {
            statements,
            index,
            by_subject,
            by_property,
        }
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn get(&self, key: StatementKey) -> Option<&Statement> {
        self.index.get(&key).map(|&i| &self.statements[i])
    }

    pub fn contains(&self, key: StatementKey) -> bool {
        self.index.contains_key(&key)
    }

    pub fn subjects(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.by_subject.keys().copied()
    }

    pub fn properties(&self) -> impl Iterator<Item = PropertyId> + '_ {
        self.by_property.keys().copied()
    }

    pub fn of_subject(&self, subject: ConceptId) -> impl Iterator<Item = &Statement> + '_ {
        self.by_subject
            .get(&subject)
            .into_iter()
            .flatten()
            .map(move |&i| &self.statements[i])
    }

    pub fn of_property(&self, property: PropertyId) -> impl Iterator<Item = &Statement> + '_ {
        self.by_property
            .get(&property)
            .into_iter()
            .flatten()
            .map(move |&i| &self.statements[i])
    }

    /// True when the indices agree with a fresh rebuild from the statement list.
    pub fn indices_consistent(&self) -> bool {
        let rebuilt = Self::index_statements(self.statements.clone());
        rebuilt.index == self.index
            && rebuilt.by_subject == self.by_subject
            && rebuilt.by_property == self.by_property
    }
}

pub(crate) fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty() && !s.trim_start().starts_with('#'),
            Err(_) => true,
        })
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_score(field: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("score `{}` is not a number", field.trim()))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("score {v} must be finite and non-negative"));
    }
    Ok(v)
}

pub fn load_csk(
    path: &Path,
    format: CskFormat,
    vocab: &mut Vocabulary,
) -> Result<(CskCollection, CskLoadReport)> {
    let reader = open(path)?;
    parse_csk(reader, &path.display().to_string(), format, vocab)
}

pub fn parse_csk<R: BufRead>(
    reader: R,
    origin: &str,
    format: CskFormat,
    vocab: &mut Vocabulary,
) -> Result<(CskCollection, CskLoadReport)> {
    let mut report = CskLoadReport::default();
    let mut rows = Vec::new();
    for (line_no, line) in data_lines(reader) {
        let line = line.map_err(|e| Error::io(origin, e))?;
        report.rows += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let parsed = match format {
            CskFormat::Triples if cols.len() >= 4 => {
                parse_score(cols[3]).map(|s| (cols[0], format!("{} {}", cols[1], cols[2]), s))
            }
            CskFormat::Pairs if cols.len() >= 3 => {
                parse_score(cols[2]).map(|s| (cols[0], cols[1].to_string(), s))
            }
            _ => Err(format!("expected {format:?} row, found {} columns", cols.len())),
        };
        let row = parsed.and_then(|(subj, prop, score)| {
            let subject = vocab
                .concept(subj)
                .map_err(|_| "empty subject".to_string())?;
            let property = vocab
                .property(&prop)
                .map_err(|_| "empty property".to_string())?;
            Ok(Statement {
                subject,
                property,
                source_score: score,
            })
        });
        match row {
            Ok(st) => rows.push(st),
            Err(reason) => {
                log::warn!("{origin}:{line_no}: skipped row: {reason}");
                report.rejected.push(RejectedRow {
                    line: line_no,
                    reason,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::NoValidRows {
            origin: origin.to_string(),
        });
    }
    let (csk, dups) = CskCollection::from_statements(rows);
    report.merged_duplicates = dups;
    Ok((csk, report))
}

/// Hypernymy digraph with per-edge confidence.
///
/// Edges run child → parent. Cycles are allowed.
#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    nodes: BTreeSet<ConceptId>,
    parents: BTreeMap<ConceptId, BTreeMap<ConceptId, f64>>,
    children: BTreeMap<ConceptId, BTreeMap<ConceptId, f64>>,
    with_statements: BTreeSet<ConceptId>,
}

const NO_EDGES: &BTreeMap<ConceptId, f64> = &BTreeMap::new();

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, c: ConceptId) {
        self.nodes.insert(c);
    }

    /// Adds `child → parent`, keeping the larger confidence on duplicates.
    ///
    /// Self-loops are ignored. Returns false if the edge already existed.
    pub fn add_edge(&mut self, child: ConceptId, parent: ConceptId, confidence: f64) -> bool {
        if child == parent {
            return false;
        }
        self.nodes.insert(child);
        self.nodes.insert(parent);
        let slot = self.parents.entry(child).or_default().entry(parent);
        let fresh = matches!(slot, std::collections::btree_map::Entry::Vacant(_));
        let conf = slot
            .and_modify(|c| *c = c.max(confidence))
            .or_insert(confidence);
        let conf = *conf;
        self.children.entry(parent).or_default().insert(child, conf);
        fresh
    }

    fn remove_node(&mut self, n: ConceptId) {
        if let Some(ps) = self.parents.remove(&n) {
            for p in ps.keys() {
                if let Some(cs) = self.children.get_mut(p) {
                    cs.remove(&n);
                }
            }
        }
        if let Some(cs) = self.children.remove(&n) {
            for c in cs.keys() {
                if let Some(ps) = self.parents.get_mut(c) {
                    ps.remove(&n);
                }
            }
        }
        self.nodes.remove(&n);
        self.with_statements.remove(&n);
    }

    pub fn contains(&self, c: ConceptId) -> bool {
        self.nodes.contains(&c)
    }

    pub fn nodes(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Parents of `c` with edge confidences, in id order.
    pub fn parents(&self, c: ConceptId) -> &BTreeMap<ConceptId, f64> {
        self.parents.get(&c).unwrap_or(NO_EDGES)
    }

    /// Children of `c` with edge confidences, in id order.
    pub fn children(&self, c: ConceptId) -> &BTreeMap<ConceptId, f64> {
        self.children.get(&c).unwrap_or(NO_EDGES)
    }

    /// Concepts sharing at least one parent with `c`, excluding `c`.
    pub fn siblings(&self, c: ConceptId) -> BTreeSet<ConceptId> {
        self.parents(c)
            .keys()
            .flat_map(|p| self.children(*p).keys().copied())
            .filter(|&s| s != c)
            .collect()
    }

    /// Strongest link from `c` to sibling `s` through a shared parent:
    /// max over shared parents of the weaker of the two edges.
    pub fn sibling_confidence(&self, c: ConceptId, s: ConceptId) -> f64 {
        let mine = self.parents(c);
        self.parents(s)
            .iter()
            .filter_map(|(p, cs)| mine.get(p).map(|cc| cc.min(*cs)))
            .fold(0.0, f64::max)
    }

    pub fn edge_confidence(&self, child: ConceptId, parent: ConceptId) -> Option<f64> {
        self.parents.get(&child).and_then(|ps| ps.get(&parent)).copied()
    }

    /// All edges as `(child, parent, confidence)` in id order.
    pub fn edges(&self) -> impl Iterator<Item = (ConceptId, ConceptId, f64)> + '_ {
        self.parents
            .iter()
            .flat_map(|(c, ps)| ps.iter().map(move |(p, w)| (*c, *p, *w)))
    }

    pub fn edge_count(&self) -> usize {
        self.parents.values().map(BTreeMap::len).sum()
    }

    pub fn has_statements(&self, c: ConceptId) -> bool {
        self.with_statements.contains(&c)
    }

    pub fn mark_statements(&mut self, c: ConceptId) {
        self.nodes.insert(c);
        self.with_statements.insert(c);
    }

    /// Strongly connected components with more than one node.
    pub fn cycles(&self) -> Vec<Vec<ConceptId>> {
        let mut g: DiGraphMap<u32, ()> = DiGraphMap::new();
        for n in &self.nodes {
            g.add_node(n.0);
        }
        for (c, p, _) in self.edges() {
            g.add_edge(c.0, p.0, ());
        }
        let mut out: Vec<Vec<ConceptId>> = tarjan_scc(&g)
            .into_iter()
            .filter(|scc| scc.len() > 1)
            .map(|scc| {
                let mut v: Vec<ConceptId> = scc.into_iter().map(ConceptId).collect();
                v.sort();
                v
            })
            .collect();
        out.sort();
        out
    }
}

/// Counters collected while loading and reshaping a taxonomy.
#[derive(Debug, Clone, Default)]
pub struct TaxonomyReport {
    pub rows: usize,
    pub rejected: Vec<RejectedRow>,
    pub below_cutoff: usize,
    pub self_loops: usize,
    pub duplicate_edges: usize,
    pub cycles: Vec<Vec<ConceptId>>,
    pub exact_matches: usize,
    pub token_matches: Vec<(ConceptId, ConceptId)>,
    pub unmatched_subjects: Vec<ConceptId>,
    pub collapsed_nodes: usize,
}

impl TaxonomyReport {
    /// Plain-text diagnostics summary.
    pub fn render(&self, vocab: &Vocabulary) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "taxonomy rows: {}", self.rows);
        let _ = writeln!(s, "malformed rows: {}", self.rejected.len());
        for r in &self.rejected {
            let _ = writeln!(s, "  line {}: {}", r.line, r.reason);
        }
        let _ = writeln!(s, "edges at or below cutoff: {}", self.below_cutoff);
        let _ = writeln!(s, "self-loops dropped: {}", self.self_loops);
        let _ = writeln!(s, "duplicate edges merged: {}", self.duplicate_edges);
        let _ = writeln!(s, "cycles: {}", self.cycles.len());
        for cyc in &self.cycles {
            let names: Vec<&str> = cyc.iter().map(|c| vocab.concept_name(*c)).collect();
            let _ = writeln!(s, "  {}", names.join(" <-> "));
        }
        let _ = writeln!(s, "subjects matched exactly: {}", self.exact_matches);
        let _ = writeln!(s, "subjects matched by tokens: {}", self.token_matches.len());
        for (subj, node) in &self.token_matches {
            let _ = writeln!(
                s,
                "  {} -> {}",
                vocab.concept_name(*subj),
                vocab.concept_name(*node)
            );
        }
        let _ = writeln!(s, "unmatched subjects: {}", self.unmatched_subjects.len());
        for c in &self.unmatched_subjects {
            let _ = writeln!(s, "  {}", vocab.concept_name(*c));
        }
        let _ = writeln!(s, "collapsed chain nodes: {}", self.collapsed_nodes);
        s
    }
}

pub fn load_taxonomy(
    path: &Path,
    cutoff: f64,
    vocab: &mut Vocabulary,
) -> Result<(Taxonomy, TaxonomyReport)> {
    let reader = open(path)?;
    parse_taxonomy(reader, &path.display().to_string(), cutoff, vocab)
}

/// Parses `child \t parent \t confidence` rows, keeping edges with
/// confidence strictly above `cutoff`.
pub fn parse_taxonomy<R: BufRead>(
    reader: R,
    origin: &str,
    cutoff: f64,
    vocab: &mut Vocabulary,
) -> Result<(Taxonomy, TaxonomyReport)> {
    let mut tax = Taxonomy::new();
    let mut report = TaxonomyReport::default();
    for (line_no, line) in data_lines(reader) {
        let line = line.map_err(|e| Error::io(origin, e))?;
        report.rows += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let row = (|| {
            if cols.len() < 3 {
                return Err(format!("expected 3 columns, found {}", cols.len()));
            }
            let conf: f64 = cols[2]
                .trim()
                .parse()
                .map_err(|_| format!("confidence `{}` is not a number", cols[2].trim()))?;
            if !(0.0..=1.0).contains(&conf) {
                return Err(format!("confidence {conf} outside [0,1]"));
            }
            let child = vocab.concept(cols[0]).map_err(|_| "empty child".to_string())?;
            let parent = vocab.concept(cols[1]).map_err(|_| "empty parent".to_string())?;
            Ok((child, parent, conf))
        })();
        match row {
            Ok((child, parent, conf)) => {
                if child == parent {
                    report.self_loops += 1;
                } else if conf <= cutoff {
                    report.below_cutoff += 1;
                } else if !tax.add_edge(child, parent, conf) {
                    report.duplicate_edges += 1;
                }
            }
            Err(reason) => report.rejected.push(RejectedRow {
                line: line_no,
                reason,
            }),
        }
    }
    report.cycles = tax.cycles();
    if !report.cycles.is_empty() {
        log::warn!("{origin}: {} hypernymy cycles tolerated", report.cycles.len());
    }
    Ok((tax, report))
}

/// Places every collection subject in the taxonomy.
///
/// Exact node matches win. Otherwise the subject is attached as a child of
/// the node matching its longest contiguous token run anchored at either
/// end (head-noun suffix first: "grizzly bear" → "bear"). Unmatched
/// subjects become isolated nodes.
pub fn attach_subjects(
    mut tax: Taxonomy,
    csk: &CskCollection,
    vocab: &Vocabulary,
    report: &mut TaxonomyReport,
) -> Taxonomy {
    let subjects: Vec<ConceptId> = csk.subjects().collect();
    let known = tax.nodes.clone();
    for subject in subjects {
        if known.contains(&subject) {
            report.exact_matches += 1;
        } else if let Some(node) = token_match(vocab.concept_name(subject), vocab, &known) {
            tax.add_edge(subject, node, 1.0);
            report.token_matches.push((subject, node));
        } else {
            tax.add_node(subject);
            report.unmatched_subjects.push(subject);
        }
        tax.mark_statements(subject);
    }
    tax
}

fn token_match(name: &str, vocab: &Vocabulary, known: &BTreeSet<ConceptId>) -> Option<ConceptId> {
    let tokens: Vec<&str> = name.split(' ').collect();
    let n = tokens.len();
    let lookup = |t: &[&str]| {
        vocab
            .find_concept(&t.join(" "))
            .filter(|c| known.contains(c))
    };
    (1..n)
        .rev()
        .find_map(|len| lookup(&tokens[n - len..]).or_else(|| lookup(&tokens[..len])))
}

/// True for a statement-free node whose only child has no other parent.
pub fn is_chain_link(tax: &Taxonomy, n: ConceptId) -> bool {
    if tax.has_statements(n) {
        return false;
    }
    let mut kids = tax.children(n).keys();
    match (kids.next(), kids.next()) {
        (Some(&c), None) => tax.parents(c).len() == 1,
        _ => false,
    }
}

/// Merges every statement-free node on an unbranched hypernymy path into
/// its only child, repeating to a fixpoint. Returns the number of merged
/// nodes.
///
/// The child inherits the merged node's parents; each new edge carries the
/// smaller of the two confidences it replaces.
pub fn collapse_chains(tax: &mut Taxonomy) -> usize {
    let mut merged = 0;
    loop {
        let target = tax
            .nodes
            .iter()
            .copied()
            .find(|&n| is_chain_link(tax, n));
        let Some(node) = target else { break };
        let (&child, &down) = tax.children(node).iter().next().expect("one child");
        let ups: Vec<(ConceptId, f64)> = tax.parents(node).iter().map(|(p, w)| (*p, *w)).collect();
        tax.remove_node(node);
        for (parent, up) in ups {
            tax.add_edge(child, parent, down.min(up));
        }
        merged += 1;
    }
    merged
}
