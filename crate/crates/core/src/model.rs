//! Shared vocabulary: interned identifiers, statements, facets and atoms.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Lowercases and collapses runs of whitespace into a single space.
///
/// Returns `None` when nothing remains.
pub fn normalize(text: &str) -> Option<String> {
    let joined = text
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    (!joined.is_empty()).then_some(joined)
}

/// Bijective map between normalized strings and dense `u32` ids.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    strings: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, raw: &str) -> Result<u32> {
        let norm = normalize(raw).ok_or(Error::EmptyIdentifier)?;
        if let Some(&id) = self.ids.get(&norm) {
            return Ok(id);
        }
        let id = u32::try_from(self.strings.len()).expect("interner overflow");
        self.strings.push(norm.clone());
        self.ids.insert(norm, id);
        Ok(id)
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        normalize(raw).and_then(|n| self.ids.get(&n).copied())
    }

    pub fn resolve(&self, id: u32) -> &str {
        &self.strings[id as usize]
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(
    /// A subject concept or taxonomy node.
    ConceptId
);
id_type!(
    /// A property phrase.
    PropertyId
);

/// Concept and property interning tables.
///
/// Built during ingestion, read-only afterwards.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub concepts: Interner,
    pub properties: Interner,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn concept(&mut self, raw: &str) -> Result<ConceptId> {
        self.concepts.intern(raw).map(ConceptId)
    }

    pub fn property(&mut self, raw: &str) -> Result<PropertyId> {
        self.properties.intern(raw).map(PropertyId)
    }

    pub fn find_concept(&self, raw: &str) -> Option<ConceptId> {
        self.concepts.get(raw).map(ConceptId)
    }

    pub fn find_property(&self, raw: &str) -> Option<PropertyId> {
        self.properties.get(raw).map(PropertyId)
    }

    pub fn concept_name(&self, id: ConceptId) -> &str {
        self.concepts.resolve(id.0)
    }

    pub fn property_name(&self, id: PropertyId) -> &str {
        self.properties.resolve(id.0)
    }
}

/// The (subject, property) pair identifying a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StatementKey {
    pub subject: ConceptId,
    pub property: PropertyId,
}

impl StatementKey {
    pub fn new(subject: ConceptId, property: PropertyId) -> Self {
        Self { subject, property }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statement {
    pub subject: ConceptId,
    pub property: PropertyId,
    pub source_score: f64,
}

impl Statement {
    pub fn key(&self) -> StatementKey {
        StatementKey::new(self.subject, self.property)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Facet {
    Plausible,
    Typical,
    Remarkable,
    Salient,
}

impl Facet {
    pub const ALL: [Facet; 4] = [
        Facet::Plausible,
        Facet::Typical,
        Facet::Remarkable,
        Facet::Salient,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Facet::Plausible => "plausible",
            Facet::Typical => "typical",
            Facet::Remarkable => "remarkable",
            Facet::Salient => "salient",
        }
    }

    pub fn parse(text: &str) -> Option<Facet> {
        match text.trim().to_ascii_lowercase().as_str() {
            "plausible" | "plausibility" => Some(Facet::Plausible),
            "typical" | "typicality" => Some(Facet::Typical),
            "remarkable" | "remarkability" => Some(Facet::Remarkable),
            "salient" | "salience" | "saliency" => Some(Facet::Salient),
            _ => None,
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index of a statement in a candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StatementId(pub u32);

/// `Facet(statement)` as a single dense id: `statement * 4 + facet`.
///
/// Ordering follows statement first, then facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomId(pub u32);

impl AtomId {
    pub fn new(facet: Facet, statement: StatementId) -> Self {
        AtomId(statement.0 * 4 + facet as u32)
    }

    pub fn facet(self) -> Facet {
        Facet::ALL[(self.0 % 4) as usize]
    }

    pub fn statement(self) -> StatementId {
        StatementId(self.0 / 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetScore {
    pub score: f64,
    pub rank: usize,
    pub percentile: f64,
}

/// Final per-facet output for one statement, indexed by [`Facet::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetScores(pub [FacetScore; 4]);

impl FacetScores {
    pub fn get(&self, facet: Facet) -> &FacetScore {
        &self.0[facet.index()]
    }
}

/// `1 - (rank - 1) / (n - 1)`, or 1 for a single-element ranking.
pub fn percentile(rank: usize, n: usize) -> f64 {
    assert!(rank >= 1 && rank <= n, "rank {rank} outside 1..={n}");
    if n == 1 {
        1.0
    } else {
        1.0 - (rank - 1) as f64 / (n - 1) as f64
    }
}
