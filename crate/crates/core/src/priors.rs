//! Statistical cues per statement and their regression aggregation into
//! the four facet priors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{data_lines, open, CskCollection, Taxonomy};
use crate::model::{normalize, ConceptId, Facet, PropertyId, StatementKey, Vocabulary};
use crate::similarity::SimilarityIndex;

pub const DEFAULT_PRIOR_THRESHOLD: f64 = 0.75;

/// Similarity-smoothed joint distribution over observed statements.
///
/// Only observed statements are stored; [`ProbTable::joint`] derives the
/// value for any other pair with the same normalizer, so those values sit
/// outside the stored distribution.
#[derive(Debug, Clone)]
pub struct ProbTable {
    joint: HashMap<StatementKey, f64>,
    subject_marginal: HashMap<ConceptId, f64>,
    property_marginal: HashMap<PropertyId, f64>,
    z: f64,
    threshold: f64,
    observed: BTreeMap<ConceptId, Vec<(PropertyId, f64)>>,
    sim: SimilarityIndex,
}

impl ProbTable {
    /// `P[s,p] = (1/Z) Σ score(s,q)·sim(q,p)` over observed `q` of `s` with
    /// `q = p` or `sim(q,p) ≥ threshold`.
    pub fn build(csk: &CskCollection, sim: &SimilarityIndex, threshold: f64) -> Result<Self> {
        let mut observed: BTreeMap<ConceptId, Vec<(PropertyId, f64)>> = BTreeMap::new();
        for st in csk.statements() {
            observed
                .entry(st.subject)
                .or_default()
                .push((st.property, st.source_score));
        }
        let mut table = ProbTable {
            joint: HashMap::with_capacity(csk.len()),
            subject_marginal: HashMap::new(),
            property_marginal: HashMap::new(),
            z: 1.0,
            threshold,
            observed,
            sim: sim.clone(),
        };
        let masses: Vec<(StatementKey, f64)> = csk
            .statements()
            .iter()
            .map(|st| (st.key(), table.mass(st.subject, st.property)))
            .collect();
        let z: f64 = masses.iter().map(|(_, m)| m).sum();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Degenerate(
                "all source scores are zero, the joint distribution is undefined".into(),
            ));
        }
        table.z = z;
        for (key, m) in masses {
            let v = m / z;
            table.joint.insert(key, v);
            *table.subject_marginal.entry(key.subject).or_default() += v;
            *table.property_marginal.entry(key.property).or_default() += v;
        }
        Ok(table)
    }

    fn mass(&self, s: ConceptId, p: PropertyId) -> f64 {
        let Some(props) = self.observed.get(&s) else {
            return 0.0;
        };
        props
            .iter()
            .map(|&(q, score)| {
                if q == p {
                    score
                } else {
                    match self.sim.get(q, p) {
                        Some(x) if x >= self.threshold => score * x,
                        _ => 0.0,
                    }
                }
            })
            .sum()
    }

    pub fn joint(&self, s: ConceptId, p: PropertyId) -> f64 {
        match self.joint.get(&StatementKey::new(s, p)) {
            Some(v) => *v,
            None => self.mass(s, p) / self.z,
        }
    }

    pub fn subject_marginal(&self, s: ConceptId) -> f64 {
        self.subject_marginal.get(&s).copied().unwrap_or(0.0)
    }

    pub fn property_marginal(&self, p: PropertyId) -> f64 {
        self.property_marginal.get(&p).copied().unwrap_or(0.0)
    }

    pub fn normalizer(&self) -> f64 {
        self.z
    }

    pub fn stored(&self) -> impl Iterator<Item = (StatementKey, f64)> + '_ {
        self.joint.iter().map(|(k, v)| (*k, *v))
    }

    /// `P[p|s]`, zero when `P[s]` is zero.
    pub fn cond_necessity(&self, s: ConceptId, p: PropertyId) -> f64 {
        ratio(self.joint(s, p), self.subject_marginal(s))
    }

    /// `P[s|p]`, zero when `P[p]` is zero.
    pub fn cond_sufficiency(&self, s: ConceptId, p: PropertyId) -> f64 {
        ratio(self.joint(s, p), self.property_marginal(p))
    }

    pub fn implication(&self, s: ConceptId, p: PropertyId) -> f64 {
        implication_prob(self.subject_marginal(s), self.joint(s, p))
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// `1 − P[s] + P[s,p]`, clamped to [0,1].
pub fn implication_prob(subject_marginal: f64, joint: f64) -> f64 {
    (1.0 - subject_marginal + joint).clamp(0.0, 1.0)
}

/// Entropy of a uniform choice among `x` properties in the closed form
/// `(1/x) ln x + ((x−1)/x) ln(x/(x−1))`; zero for `x ≤ 1`.
pub fn entropy(x: usize) -> f64 {
    if x <= 1 {
        return 0.0;
    }
    let x = x as f64;
    (1.0 / x) * x.ln() + ((x - 1.0) / x) * (x / (x - 1.0)).ln()
}

/// `H(X_{s}) − H(X_{N(s)∖{s}})` where `N(s)` is the parents and siblings of
/// `s` and `X` counts distinct observed properties.
///
/// The value does not depend on the property, so it is computed per subject.
pub fn info_gain(csk: &CskCollection, tax: &Taxonomy, s: ConceptId) -> f64 {
    let mut neighborhood: BTreeSet<ConceptId> = tax.parents(s).keys().copied().collect();
    neighborhood.extend(tax.siblings(s));
    neighborhood.remove(&s);
    let around: BTreeSet<PropertyId> = neighborhood
        .iter()
        .flat_map(|&n| csk.of_subject(n).map(|st| st.property))
        .collect();
    if around.is_empty() {
        return 0.0;
    }
    let own: BTreeSet<PropertyId> = csk.of_subject(s).map(|st| st.property).collect();
    entropy(own.len()) - entropy(around.len())
}

type KeyedRows = HashMap<(String, String), Vec<f64>>;

/// Reads `subject \t property \t v1 ... vk` rows with every value in [0,1].
/// Out-of-range or malformed rows are skipped with a warning.
fn parse_keyed_unit_rows<R: BufRead>(
    reader: R,
    origin: &str,
    values: usize,
) -> Result<(KeyedRows, usize)> {
    let mut out = HashMap::new();
    let mut rejected = 0;
    for (line_no, line) in data_lines(reader) {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let cols: Vec<&str> = line.split('\t').collect();
        let parsed = (|| {
            if cols.len() != 2 + values {
                return Err(format!("expected {} columns, found {}", 2 + values, cols.len()));
            }
            let s = normalize(cols[0]).ok_or("empty subject")?;
            let p = normalize(cols[1]).ok_or("empty property")?;
            let mut vs = Vec::with_capacity(values);
            for c in &cols[2..] {
                let v: f64 = c
                    .trim()
                    .parse()
                    .map_err(|_| format!("`{}` is not a number", c.trim()))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("value {v} outside [0,1]"));
                }
                vs.push(v);
            }
            Ok(((s, p), vs))
        })();
        match parsed {
            Ok((k, v)) => {
                out.insert(k, v);
            }
            Err(msg) => {
                log::warn!("{origin}:{line_no}: {msg}, row skipped");
                rejected += 1;
            }
        }
    }
    Ok((out, rejected))
}

/// Precomputed entailment and contradiction scores keyed by normalized text.
#[derive(Debug, Clone, Default)]
pub struct EntailmentTable {
    rows: HashMap<(String, String), (f64, f64)>,
}

impl EntailmentTable {
    pub const NEUTRAL: (f64, f64) = (0.5, 0.5);

    pub fn insert(&mut self, subject: &str, property: &str, entail: f64, con: f64) {
        if let (Some(s), Some(p)) = (normalize(subject), normalize(property)) {
            self.rows.insert((s, p), (entail, con));
        }
    }

    /// `(entail, con)`, or the neutral default for unknown pairs.
    pub fn get(&self, subject: &str, property: &str) -> (f64, f64) {
        match (normalize(subject), normalize(property)) {
            (Some(s), Some(p)) => self.rows.get(&(s, p)).copied().unwrap_or(Self::NEUTRAL),
            _ => Self::NEUTRAL,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Returns the table and the number of rejected rows.
pub fn load_entailment(path: &Path) -> Result<(EntailmentTable, usize)> {
    parse_entailment(open(path)?, &path.display().to_string())
}

pub fn parse_entailment<R: BufRead>(reader: R, origin: &str) -> Result<(EntailmentTable, usize)> {
    let (rows, rejected) = parse_keyed_unit_rows(reader, origin, 2)?;
    let rows = rows.into_iter().map(|(k, v)| (k, (v[0], v[1]))).collect();
    Ok((EntailmentTable { rows }, rejected))
}

/// Hand-set priors that replace the regression output for listed statements.
#[derive(Debug, Clone, Default)]
pub struct PriorOverrides {
    rows: HashMap<(String, String), PriorScores>,
}

impl PriorOverrides {
    pub fn get(&self, subject: &str, property: &str) -> Option<PriorScores> {
        let key = (normalize(subject)?, normalize(property)?);
        self.rows.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn load_prior_overrides(path: &Path) -> Result<(PriorOverrides, usize)> {
    parse_prior_overrides(open(path)?, &path.display().to_string())
}

/// Rows `subject \t property \t π \t τ \t ρ \t σ`.
pub fn parse_prior_overrides<R: BufRead>(reader: R, origin: &str) -> Result<(PriorOverrides, usize)> {
    let (rows, rejected) = parse_keyed_unit_rows(reader, origin, 4)?;
    let rows = rows
        .into_iter()
        .map(|(k, v)| (k, PriorScores([v[0], v[1], v[2], v[3]])))
        .collect();
    Ok((PriorOverrides { rows }, rejected))
}

pub const CUE_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CueVector {
    pub joint: f64,
    pub cond_necessity: f64,
    pub cond_sufficiency: f64,
    pub implication: f64,
    pub entail: f64,
    pub contradiction: f64,
    pub info_gain: f64,
}

impl CueVector {
    pub const NAMES: [&'static str; CUE_COUNT] = [
        "joint",
        "cond_necessity",
        "cond_sufficiency",
        "implication",
        "entail",
        "contradiction",
        "info_gain",
    ];

    pub fn to_array(&self) -> [f64; CUE_COUNT] {
        [
            self.joint,
            self.cond_necessity,
            self.cond_sufficiency,
            self.implication,
            self.entail,
            self.contradiction,
            self.info_gain,
        ]
    }

    pub fn from_array(a: [f64; CUE_COUNT]) -> Self {
        Self {
            joint: a[0],
            cond_necessity: a[1],
            cond_sufficiency: a[2],
            implication: a[3],
            entail: a[4],
            contradiction: a[5],
            info_gain: a[6],
        }
    }
}

/// Everything needed to compute cues for arbitrary statements.
pub struct CueSource<'a> {
    pub table: &'a ProbTable,
    pub entailment: &'a EntailmentTable,
    pub csk: &'a CskCollection,
    pub taxonomy: &'a Taxonomy,
    pub vocab: &'a Vocabulary,
}

impl CueSource<'_> {
    pub fn cues(&self, key: StatementKey) -> CueVector {
        self.assemble(key, info_gain(self.csk, self.taxonomy, key.subject))
    }

    /// Cues for many statements, computed in parallel, in input order.
    pub fn cues_for(&self, keys: &[StatementKey]) -> Vec<CueVector> {
        let subjects: BTreeSet<ConceptId> = keys.iter().map(|k| k.subject).collect();
        let ig: HashMap<ConceptId, f64> = subjects
            .into_iter()
            .map(|s| (s, info_gain(self.csk, self.taxonomy, s)))
            .collect();
        keys.par_iter()
            .map(|&key| self.assemble(key, ig[&key.subject]))
            .collect()
    }

    fn assemble(&self, key: StatementKey, info_gain: f64) -> CueVector {
        let (s, p) = (key.subject, key.property);
        let (entail, contradiction) = self
            .entailment
            .get(self.vocab.concept_name(s), self.vocab.property_name(p));
        CueVector {
            joint: self.table.joint(s, p),
            cond_necessity: self.table.cond_necessity(s, p),
            cond_sufficiency: self.table.cond_sufficiency(s, p),
            implication: self.table.implication(s, p),
            entail,
            contradiction,
            info_gain,
        }
    }
}

/// A labeled pairwise judgment with a mean preference on a 1..5 scale,
/// where values above 3 favor property A.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub subject: String,
    pub property_a: String,
    pub property_b: String,
    pub facet: Facet,
    pub mean_preference: f64,
}

impl PreferencePair {
    pub fn is_determinate(&self) -> bool {
        !(self.mean_preference > 2.5 && self.mean_preference < 3.5)
    }

    /// `(label_a, label_b)` for determinate pairs.
    pub fn labels(&self) -> Option<(f64, f64)> {
        if self.mean_preference >= 3.5 {
            Some((1.0, 0.0))
        } else if self.mean_preference <= 2.5 {
            Some((0.0, 1.0))
        } else {
            None
        }
    }
}

pub fn load_preference_pairs(path: &Path) -> Result<Vec<PreferencePair>> {
    parse_preference_pairs(open(path)?, &path.display().to_string())
}

/// Rows `subject \t propertyA \t propertyB \t facet \t mean_preference`.
pub fn parse_preference_pairs<R: BufRead>(reader: R, origin: &str) -> Result<Vec<PreferencePair>> {
    let mut out = Vec::new();
    for (line_no, line) in data_lines(reader) {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let cols: Vec<&str> = line.split('\t').collect();
        let parsed = (|| {
            if cols.len() != 5 {
                return Err(format!("expected 5 columns, found {}", cols.len()));
            }
            let subject = normalize(cols[0]).ok_or("empty subject")?;
            let property_a = normalize(cols[1]).ok_or("empty property A")?;
            let property_b = normalize(cols[2]).ok_or("empty property B")?;
            if property_a == property_b {
                return Err("property A equals property B".to_string());
            }
            let facet = Facet::parse(cols[3]).ok_or_else(|| format!("unknown facet `{}`", cols[3]))?;
            let mean: f64 = cols[4]
                .trim()
                .parse()
                .map_err(|_| format!("`{}` is not a number", cols[4].trim()))?;
            if !(1.0..=5.0).contains(&mean) {
                return Err(format!("mean preference {mean} outside [1,5]"));
            }
            Ok(PreferencePair {
                subject,
                property_a,
                property_b,
                facet,
                mean_preference: mean,
            })
        })();
        match parsed {
            Ok(p) => out.push(p),
            Err(msg) => log::warn!("{origin}:{line_no}: {msg}, row skipped"),
        }
    }
    if out.is_empty() {
        return Err(Error::NoValidRows {
            origin: origin.to_string(),
        });
    }
    Ok(out)
}

/// Per-facet π, τ, ρ, σ, indexed by [`Facet::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorScores(pub [f64; 4]);

impl PriorScores {
    pub fn get(&self, facet: Facet) -> f64 {
        self.0[facet.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub weights: [f64; CUE_COUNT],
    pub bias: f64,
}

impl LinearModel {
    pub const UNINFORMED: LinearModel = LinearModel {
        weights: [0.0; CUE_COUNT],
        bias: 0.5,
    };

    pub fn predict(&self, cues: &CueVector) -> f64 {
        cues.to_array()
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionModel {
    pub facets: [LinearModel; 4],
}

impl RegressionModel {
    pub fn uninformed() -> Self {
        Self {
            facets: [LinearModel::UNINFORMED; 4],
        }
    }

    pub fn get(&self, facet: Facet) -> &LinearModel {
        &self.facets[facet.index()]
    }
}

/// Per-facet prediction clamped to [0,1].
pub fn prior_scores(cues: &CueVector, model: &RegressionModel) -> PriorScores {
    PriorScores(Facet::ALL.map(|f| model.get(f).predict(cues).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FacetFit {
    pub pairs: usize,
    pub rows: usize,
    pub ridge: bool,
    pub uninformed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct FitReport {
    pub facets: [FacetFit; 4],
    pub unresolved_pairs: usize,
}

const RIDGE_LAMBDA: f64 = 1e-6;
const CONDITION_FLOOR: f64 = 1e-12;

/// Least squares with a bias term. Returns the model and whether the design
/// was rank deficient, in which case a small ridge penalty (not applied to
/// the bias) is used instead.
///
/// Rows are sorted before accumulation, so the result does not depend on
/// their order.
pub fn fit_linear(rows: &[([f64; CUE_COUNT], f64)]) -> Result<(LinearModel, bool)> {
    if rows.is_empty() {
        return Err(Error::Degenerate("no training rows".into()));
    }
    let mut sorted: Vec<&([f64; CUE_COUNT], f64)> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.0.iter()
            .chain(std::iter::once(&a.1))
            .map(|x| x.to_bits())
            .cmp(b.0.iter().chain(std::iter::once(&b.1)).map(|x| x.to_bits()))
    });
    let k = CUE_COUNT + 1;
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for (x, y) in sorted {
        let mut row = [1.0; CUE_COUNT + 1];
        row[..CUE_COUNT].copy_from_slice(x);
        for i in 0..k {
            xty[i] += row[i] * y;
            for j in 0..k {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    let eig = xtx.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let deficient = hi <= 0.0 || lo / hi < CONDITION_FLOOR;
    let mut a = xtx;
    if deficient {
        for i in 0..CUE_COUNT {
            a[(i, i)] += RIDGE_LAMBDA;
        }
    }
    let w = match a.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => a
            .svd(true, true)
            .solve(&xty, 1e-12)
            .map_err(|e| Error::Degenerate(format!("regression solve failed: {e}")))?,
    };
    let mut weights = [0.0; CUE_COUNT];
    weights.copy_from_slice(&w.as_slice()[..CUE_COUNT]);
    Ok((
        LinearModel {
            weights,
            bias: w[CUE_COUNT],
        },
        deficient,
    ))
}

/// Fits one model per facet from pairwise labels converted to pointwise
/// rows. Facets with fewer than `2 · CUE_COUNT` usable pairs keep the
/// uninformed model.
pub fn fit_regression(
    pairs: &[PreferencePair],
    cues: impl Fn(&str, &str) -> Option<CueVector>,
) -> Result<(RegressionModel, FitReport)> {
    let mut model = RegressionModel::uninformed();
    let mut report = FitReport::default();
    for facet in Facet::ALL {
        let mut rows = Vec::new();
        let mut used = 0;
        for pair in pairs.iter().filter(|p| p.facet == facet) {
            let Some((la, lb)) = pair.labels() else {
                continue;
            };
            match (
                cues(&pair.subject, &pair.property_a),
                cues(&pair.subject, &pair.property_b),
            ) {
                (Some(a), Some(b)) => {
                    rows.push((a.to_array(), la));
                    rows.push((b.to_array(), lb));
                    used += 1;
                }
                _ => report.unresolved_pairs += 1,
            }
        }
        let fit = &mut report.facets[facet.index()];
        fit.pairs = used;
        fit.rows = rows.len();
        if used < 2 * CUE_COUNT {
            fit.uninformed = true;
            log::info!("facet {facet}: {used} labeled pairs, keeping the uninformed model");
            continue;
        }
        let (m, ridge) = fit_linear(&rows)?;
        if ridge {
            log::warn!("facet {facet}: rank-deficient design, fitted with ridge λ={RIDGE_LAMBDA}");
        }
        fit.ridge = ridge;
        model.facets[facet.index()] = m;
    }
    Ok((model, report))
}

/// One row per statement: subject, property, then the seven cues.
pub fn write_cue_dump<W: Write>(
    mut w: W,
    keys: &[StatementKey],
    cues: &[CueVector],
    vocab: &Vocabulary,
) -> std::io::Result<()> {
    write!(w, "subject\tproperty")?;
    for n in CueVector::NAMES {
        write!(w, "\t{n}")?;
    }
    writeln!(w)?;
    for (k, c) in keys.iter().zip(cues) {
        write!(w, "{}\t{}", vocab.concept_name(k.subject), vocab.property_name(k.property))?;
        for v in c.to_array() {
            write!(w, "\t{v:.6}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
