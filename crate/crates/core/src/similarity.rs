//! Property similarity from idf-weighted word-vector centroids.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::CskCollection;
use crate::model::{PropertyId, Vocabulary};

/// Splits on non-alphanumeric characters and drops empty tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

/// Word vectors of a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingLoadReport {
    pub declared: usize,
    pub duplicates: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Inserts or replaces a vector. Returns true if the word was already present.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> bool {
        assert_eq!(vector.len(), self.dim);
        match self.index.get(word) {
            Some(&slot) => {
                self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(vector);
                true
            }
            None => {
                self.index.insert(word.to_string(), self.index.len());
                self.data.extend_from_slice(vector);
                false
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&slot| &self.data[slot * self.dim..(slot + 1) * self.dim])
    }
}

pub fn load_embeddings(path: &Path) -> Result<(EmbeddingTable, EmbeddingLoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(BufReader::new(file), &path.display().to_string())
}

/// Reads the word2vec text format: a `count dim` header, then
/// `word v1 ... vd` per line. Duplicate words: last occurrence wins.
pub fn parse_embeddings<R: BufRead>(
    reader: R,
    origin: &str,
) -> Result<(EmbeddingTable, EmbeddingLoadReport)> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(origin, e))?,
        None => return Err(Error::parse(origin, 1, "missing `count dim` header")),
    };
    let mut head = header.split_whitespace();
    let (count, dim) = match (
        head.next().and_then(|t| t.parse::<usize>().ok()),
        head.next().and_then(|t| t.parse::<usize>().ok()),
    ) {
        (Some(c), Some(d)) if d > 0 => (c, d),
        _ => return Err(Error::parse(origin, 1, format!("bad header `{header}`"))),
    };
    let mut table = EmbeddingTable::new(dim);
    let mut report = EmbeddingLoadReport {
        declared: count,
        ..Default::default()
    };
    let mut buf = Vec::with_capacity(dim);
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line");
        buf.clear();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad component `{f}`")))?;
            buf.push(v);
        }
        if buf.len() != dim {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected {dim} components, found {}", buf.len()),
            ));
        }
        let word = word.to_lowercase();
        if table.insert(&word, &buf) {
            log::warn!("{origin}:{line_no}: duplicate vector for `{word}`, keeping the last");
            report.duplicates.push(word);
        }
    }
    if table.len() != count {
        log::warn!(
            "{origin}: header declares {count} vectors, loaded {}",
            table.len()
        );
    }
    Ok((table, report))
}

/// Inverse document frequencies over the property vocabulary, with each
/// distinct property treated as one document.
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    idf: HashMap<String, f64>,
    documents: usize,
}

impl IdfTable {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut documents = 0;
        for doc in docs {
            documents += 1;
            let words: HashSet<&str> = tokenize(doc).collect();
            for w in words {
                *df.entry(w.to_string()).or_default() += 1;
            }
        }
        let n = documents as f64;
        let idf = df
            .into_iter()
            .map(|(w, d)| (w, (n / d as f64).ln()))
            .collect();
        Self { idf, documents }
    }

    /// Unseen words weigh zero.
    pub fn idf(&self, word: &str) -> f64 {
        self.idf.get(word).copied().unwrap_or(0.0)
    }

    pub fn documents(&self) -> usize {
        self.documents
    }
}

pub fn build_idf(csk: &CskCollection, vocab: &Vocabulary) -> IdfTable {
    IdfTable::from_documents(csk.properties().map(|p| vocab.property_name(p)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyVector {
    pub property: PropertyId,
    pub vector: Vec<f64>,
    pub is_zero: bool,
}

impl PropertyVector {
    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `Σ idf(w)·vec(w)` over the in-vocabulary tokens of `text`.
pub fn property_vector(
    property: PropertyId,
    text: &str,
    emb: &EmbeddingTable,
    idf: &IdfTable,
) -> PropertyVector {
    let mut vector = vec![0.0; emb.dim()];
    let mut is_zero = true;
    for tok in tokenize(text) {
        let weight = idf.idf(tok);
        if weight == 0.0 {
            continue;
        }
        if let Some(v) = emb.get(tok) {
            is_zero = false;
            for (acc, x) in vector.iter_mut().zip(v) {
                *acc += weight * x;
            }
        }
    }
    PropertyVector {
        property,
        vector,
        is_zero,
    }
}

/// Mapped cosine `½(cos + 1)`.
///
/// A zero vector has no direction: the pair scores 0.5, or 1 when both
/// sides are the same property.
pub fn sim(p: &PropertyVector, q: &PropertyVector) -> f64 {
    if p.property == q.property {
        return 1.0;
    }
    if p.is_zero || q.is_zero {
        return 0.5;
    }
    let (np, nq) = (p.norm(), q.norm());
    if np == 0.0 || nq == 0.0 {
        return 0.5;
    }
    let dot: f64 = p.vector.iter().zip(&q.vector).map(|(a, b)| a * b).sum();
    (0.5 * (dot / (np * nq) + 1.0)).clamp(0.0, 1.0)
}

/// An unordered property pair with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarPair {
    pub a: PropertyId,
    pub b: PropertyId,
    pub sim: f64,
}

fn canonical(mut pairs: Vec<SimilarPair>) -> Vec<SimilarPair> {
    pairs.sort_by_key(|p| (p.a, p.b));
    pairs
}

/// Exhaustive enumeration of pairs with `sim ≥ threshold`.
pub fn similar_pairs_exhaustive(vocab: &[PropertyVector], threshold: f64) -> Vec<SimilarPair> {
    let mut out = Vec::new();
    for (i, p) in vocab.iter().enumerate() {
        for q in &vocab[i + 1..] {
            if p.property == q.property {
                continue;
            }
            let s = sim(p, q);
            if s >= threshold {
                let (a, b) = if p.property < q.property {
                    (p.property, q.property)
                } else {
                    (q.property, p.property)
                };
                out.push(SimilarPair { a, b, sim: s });
            }
        }
    }
    canonical(out)
}

const TILE: usize = 64;

/// Same result set as [`similar_pairs_exhaustive`], computed over tiles of
/// the upper triangle in parallel with zero vectors skipped up front.
///
/// `threshold` must lie in (0.5, 1], where zero vectors can never qualify.
pub fn similar_pairs(vocab: &[PropertyVector], threshold: f64) -> Vec<SimilarPair> {
    assert!(
        threshold > 0.5 && threshold <= 1.0,
        "similarity threshold {threshold} outside (0.5, 1]"
    );
    let live: Vec<&PropertyVector> = vocab.iter().filter(|p| !p.is_zero).collect();
    let tiles = live.len().div_ceil(TILE);
    let blocks: Vec<(usize, usize)> = (0..tiles)
        .flat_map(|i| (i..tiles).map(move |j| (i, j)))
        .collect();
    let out: Vec<SimilarPair> = blocks
        .par_iter()
        .flat_map_iter(|&(bi, bj)| {
            let mut local = Vec::new();
            let rows = bi * TILE..((bi + 1) * TILE).min(live.len());
            for i in rows {
                let start = if bi == bj { i + 1 } else { bj * TILE };
                let end = ((bj + 1) * TILE).min(live.len());
                for j in start..end {
                    let (p, q) = (live[i], live[j]);
                    if p.property == q.property {
                        continue;
                    }
                    let s = sim(p, q);
                    if s >= threshold {
                        let (a, b) = if p.property < q.property {
                            (p.property, q.property)
                        } else {
                            (q.property, p.property)
                        };
                        local.push(SimilarPair { a, b, sim: s });
                    }
                }
            }
            local
        })
        .collect();
    canonical(out)
}

/// Adjacency view over similar pairs.
#[derive(Debug, Clone, Default)]
pub struct SimilarityIndex {
    neighbors: BTreeMap<PropertyId, Vec<(PropertyId, f64)>>,
}

impl SimilarityIndex {
    pub fn new(pairs: &[SimilarPair]) -> Self {
        let mut neighbors: BTreeMap<PropertyId, Vec<(PropertyId, f64)>> = BTreeMap::new();
        for p in pairs {
            neighbors.entry(p.a).or_default().push((p.b, p.sim));
            neighbors.entry(p.b).or_default().push((p.a, p.sim));
        }
        for v in neighbors.values_mut() {
            v.sort_by_key(|(q, _)| *q);
        }
        Self { neighbors }
    }

    /// Neighbors of `p` with similarity at least `threshold`, in id order.
    pub fn neighbors(&self, p: PropertyId, threshold: f64) -> impl Iterator<Item = (PropertyId, f64)> + '_ {
        self.neighbors
            .get(&p)
            .into_iter()
            .flatten()
            .copied()
            .filter(move |(_, s)| *s >= threshold)
    }

    pub fn get(&self, p: PropertyId, q: PropertyId) -> Option<f64> {
        if p == q {
            return Some(1.0);
        }
        let list = self.neighbors.get(&p)?;
        list.binary_search_by_key(&q, |(x, _)| *x)
            .ok()
            .map(|i| list[i].1)
    }
}

/// Writes `p \t q \t sim` rows with six-decimal fixed-point similarities.
pub fn write_pairs<W: Write>(mut w: W, pairs: &[SimilarPair], vocab: &Vocabulary) -> std::io::Result<()> {
    for p in pairs {
        writeln!(
            w,
            "{}\t{}\t{:.6}",
            vocab.property_name(p.a),
            vocab.property_name(p.b),
            p.sim
        )?;
    }
    Ok(())
}

/// Reads a pair cache written by [`write_pairs`], interning unseen properties.
pub fn read_pairs<R: BufRead>(reader: R, origin: &str, vocab: &mut Vocabulary) -> Result<Vec<SimilarPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(origin, i + 1, "expected 3 columns"));
        }
        let p = vocab.property(cols[0]).map_err(|_| Error::parse(origin, i + 1, "empty property"))?;
        let q = vocab.property(cols[1]).map_err(|_| Error::parse(origin, i + 1, "empty property"))?;
        let sim: f64 = cols[2]
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, "bad similarity"))?;
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        out.push(SimilarPair { a, b, sim });
    }
    Ok(canonical(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(id: u32, v: &[f64]) -> PropertyVector {
        PropertyVector {
            property: PropertyId(id),
            vector: v.to_vec(),
            is_zero: v.iter().all(|x| *x == 0.0),
        }
    }

    #[test]
    fn embedding_format() {
        let (t, r) = parse_embeddings("2 3\ncat 1 0 0\ndog 0 1 0.5\n".as_bytes(), "e").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("dog").unwrap(), &[0.0, 1.0, 0.5]);
        assert!(r.duplicates.is_empty());
    }

    #[test]
    fn embedding_short_row_rejected() {
        let e = parse_embeddings("2 3\ncat 1 0 0\ndog 0 1\n".as_bytes(), "e");
        match e {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn embedding_duplicate_last_wins() {
        let (t, r) = parse_embeddings("2 2\ncat 1 0\ncat 0 1\n".as_bytes(), "e").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("cat").unwrap(), &[0.0, 1.0]);
        assert_eq!(r.duplicates, vec!["cat".to_string()]);
    }

    #[test]
    fn idf_values() {
        let docs = [
            "eat meat", "eat grass", "eat fish", "eat bugs", "eat fruit", "eat seeds", "eat nuts",
            "eat leaves", "eat honey", "eat eggs",
        ];
        let idf = IdfTable::from_documents(docs);
        assert_eq!(idf.documents(), 10);
        assert_eq!(idf.idf("eat"), 0.0);
        assert!((idf.idf("meat") - 10f64.ln()).abs() < 1e-12);
        assert_eq!(idf.idf("zebra"), 0.0);
    }

    #[test]
    fn property_vector_cases() {
        let mut emb = EmbeddingTable::new(2);
        emb.insert("a", &[1.0, 2.0]);
        emb.insert("b", &[3.0, -1.0]);
        // idf(a) = 1 in a 3-document corpus where a appears once... use e
        let idf = IdfTable::from_documents(["a x", "b y", "b z"]);
        let ln3 = 3f64.ln();
        let v = property_vector(PropertyId(0), "a", &emb, &idf);
        assert!(!v.is_zero);
        assert!((v.vector[0] - ln3).abs() < 1e-12 && (v.vector[1] - 2.0 * ln3).abs() < 1e-12);

        let oov = property_vector(PropertyId(1), "q r", &emb, &idf);
        assert!(oov.is_zero);
        assert_eq!(oov.vector, vec![0.0, 0.0]);

        // idf {a: 2, b: 0}
        let idf = IdfTable {
            idf: [("a".to_string(), 2.0), ("b".to_string(), 0.0)].into_iter().collect(),
            documents: 0,
        };
        let v = property_vector(PropertyId(2), "a b", &emb, &idf);
        assert_eq!(v.vector, vec![2.0, 4.0]);
    }

    #[test]
    fn singleton_idf_one() {
        let mut emb = EmbeddingTable::new(3);
        emb.insert("w", &[0.5, -1.0, 2.0]);
        let idf = IdfTable {
            idf: [("w".to_string(), 1.0)].into_iter().collect(),
            documents: 1,
        };
        let v = property_vector(PropertyId(0), "w", &emb, &idf);
        assert_eq!(v.vector, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn sim_reference_angles() {
        let a = pv(0, &[1.0, 0.0]);
        let same = pv(1, &[2.0, 0.0]);
        let ortho = pv(2, &[0.0, 3.0]);
        let opp = pv(3, &[-1.0, 0.0]);
        assert!((sim(&a, &same) - 1.0).abs() < 1e-12);
        assert!((sim(&a, &ortho) - 0.5).abs() < 1e-12);
        assert!(sim(&a, &opp).abs() < 1e-12);
    }

    #[test]
    fn sim_zero_fallback() {
        let z = pv(0, &[0.0, 0.0]);
        let a = pv(1, &[1.0, 0.0]);
        assert_eq!(sim(&z, &a), 0.5);
        assert_eq!(sim(&z, &z), 1.0);
    }

    #[test]
    fn single_property_has_no_pairs() {
        assert!(similar_pairs(&[pv(0, &[1.0, 0.0])], 0.75).is_empty());
    }

    #[test]
    fn threshold_pair_emitted() {
        // cos = 0.72 ⇒ sim = 0.86
        let c: f64 = 0.72;
        let city = pv(0, &[1.0, 0.0]);
        let town = pv(1, &[c, (1.0 - c * c).sqrt()]);
        let pairs = similar_pairs(&[city, town], 0.75);
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].sim - 0.86).abs() < 1e-12);
    }

    fn random_vocab(n: usize, dim: usize, seed: u64) -> Vec<PropertyVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|i| {
                let c = &centers[i % centers.len()];
                let v: Vec<f64> = if i % 37 == 0 {
                    vec![0.0; dim]
                } else {
                    c.iter().map(|x| x + rng.gen_range(-0.4..0.4)).collect()
                };
                pv(i as u32, &v)
            })
            .collect()
    }

    #[test]
    fn tiled_matches_exhaustive_on_200() {
        let vocab = random_vocab(200, 16, 7);
        for t in [0.6, 0.75, 0.9, 1.0] {
            let fast = similar_pairs(&vocab, t);
            let slow = similar_pairs_exhaustive(&vocab, t);
            assert_eq!(fast, slow, "threshold {t}");
        }
        assert!(!similar_pairs(&vocab, 0.75).is_empty());
    }

    #[test]
    fn cache_reload_is_bit_exact() {
        let vocab_vecs = random_vocab(60, 8, 3);
        let mut vocab = Vocabulary::new();
        for i in 0..60 {
            vocab.property(&format!("prop {i}")).unwrap();
        }
        let pairs = similar_pairs(&vocab_vecs, 0.8);
        let mut first = Vec::new();
        write_pairs(&mut first, &pairs, &vocab).unwrap();
        let reloaded = read_pairs(first.as_slice(), "cache", &mut vocab).unwrap();
        let mut second = Vec::new();
        write_pairs(&mut second, &reloaded, &vocab).unwrap();
        assert_eq!(first, second);
        let again = read_pairs(second.as_slice(), "cache", &mut vocab).unwrap();
        assert_eq!(reloaded, again);
    }

    #[test]
    fn index_lookup() {
        let pairs = vec![SimilarPair { a: PropertyId(1), b: PropertyId(4), sim: 0.9 }];
        let idx = SimilarityIndex::new(&pairs);
        assert_eq!(idx.get(PropertyId(4), PropertyId(1)), Some(0.9));
        assert_eq!(idx.get(PropertyId(2), PropertyId(2)), Some(1.0));
        assert_eq!(idx.get(PropertyId(1), PropertyId(2)), None);
        assert_eq!(idx.neighbors(PropertyId(1), 0.95).count(), 0);
    }

    fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 4)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn sim_symmetric_bounded(a in arb_vec(), b in arb_vec()) {
            let (p, q) = (pv(0, &a), pv(1, &b));
            let s = sim(&p, &q);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - sim(&q, &p)).abs() < 1e-12);
            let p2 = pv(2, &a);
            prop_assert!((sim(&p, &p2) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn sim_scale_invariant(a in arb_vec(), b in arb_vec(), k in 0.01f64..100.0) {
            let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
            let (p, q, ps) = (pv(0, &a), pv(1, &b), pv(0, &scaled));
            prop_assert!((sim(&p, &q) - sim(&ps, &q)).abs() < 1e-9);
        }

        #[test]
        fn pairs_monotone_in_threshold(seed in 0u64..50, t1 in 0.51f64..1.0, dt in 0.0f64..0.4) {
            let vocab = random_vocab(40, 6, seed);
            let t2 = (t1 + dt).min(1.0);
            let lo = similar_pairs(&vocab, t1);
            let hi = similar_pairs(&vocab, t2);
            for p in &hi {
                prop_assert!(lo.iter().any(|q| q.a == p.a && q.b == p.b));
            }
        }
    }
}
