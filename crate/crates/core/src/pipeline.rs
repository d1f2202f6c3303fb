//! End-to-end orchestration: load, score priors, ground, solve, write.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{ppref_by_facet, PreferencePair};
use crate::grounding::{expand_candidates, CandidateSet, Clause, Provenance, RuleWeights};
use crate::ingest::{attach_subjects, collapse_chains, load_csk, load_taxonomy, CskCollection, CskLoadReport, Taxonomy, TaxonomyReport};
use crate::lp::SimplexOptions;
use crate::model::{ConceptId, Facet, StatementId, StatementKey, Vocabulary};
use crate::partition::{build_partitions, solve_all, solve_partition, Partition, PartitionSolution, Problem, Solution};
use crate::priors::{
    fit_regression, load_entailment, load_preference_pairs, load_prior_overrides, prior_scores, CueSource, CueVector,
    EntailmentTable, FitReport, PriorScores, ProbTable, RegressionModel,
};
use crate::similarity::{
    build_idf, load_embeddings, property_vector, read_pairs, similar_pairs, write_pairs, SimilarPair, SimilarityIndex,
};

/// Six-decimal fixed point without a negative zero.
pub fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

/// Loaded collection and reshaped taxonomy.
pub struct Ingested {
    pub vocab: Vocabulary,
    pub csk: CskCollection,
    pub csk_report: CskLoadReport,
    pub taxonomy: Taxonomy,
    pub taxonomy_report: TaxonomyReport,
}

pub fn ingest(config: &Config) -> Result<Ingested> {
    let mut vocab = Vocabulary::new();
    let csk_path = config.require("csk").stage("ingest")?;
    let (csk, csk_report) = load_csk(&csk_path, config.csk_format, &mut vocab).stage("ingest")?;
    if csk.is_empty() {
        return Err(Error::NoValidRows {
            origin: csk_path.display().to_string(),
        })
        .stage("ingest");
    }
    let (taxonomy, mut taxonomy_report) = match config.existing("taxonomy").stage("ingest")? {
        Some(p) => load_taxonomy(&p, config.taxonomy_cutoff, &mut vocab).stage("ingest")?,
        None => (Taxonomy::new(), TaxonomyReport::default()),
    };
    let mut taxonomy = attach_subjects(taxonomy, &csk, &vocab, &mut taxonomy_report);
    taxonomy_report.collapsed_nodes = collapse_chains(&mut taxonomy);
    taxonomy_report.cycles = taxonomy.cycles();
    Ok(Ingested {
        vocab,
        csk,
        csk_report,
        taxonomy,
        taxonomy_report,
    })
}

/// Everything up to and including prior scores; solving reuses it for
/// any number of weight vectors.
pub struct Prepared {
    pub config: Config,
    pub vocab: Vocabulary,
    pub csk: CskCollection,
    pub taxonomy: Taxonomy,
    pub taxonomy_report: TaxonomyReport,
    pub pairs: Vec<SimilarPair>,
    pub similarity: SimilarityIndex,
    pub table: ProbTable,
    pub entailment: EntailmentTable,
    pub candidates: CandidateSet,
    /// Indexed by [`StatementId`].
    pub cues: Vec<CueVector>,
    pub model: RegressionModel,
    pub fit: FitReport,
    /// Indexed by [`StatementId`].
    pub priors: Vec<PriorScores>,
    pub overridden: usize,
    pub labels: Vec<PreferencePair>,
}

fn similarity_pairs(config: &Config, ing: &mut Ingested) -> Result<Vec<SimilarPair>> {
    let cache = config.optional("pairs_cache")?;
    if let Some(path) = cache.as_ref().filter(|p| p.exists()) {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let pairs = read_pairs(BufReader::new(f), &path.display().to_string(), &mut ing.vocab)?;
        log::info!("read {} similar pairs from {}", pairs.len(), path.display());
        return Ok(pairs);
    }
    let emb_path = config.require("embeddings")?;
    let (emb, report) = load_embeddings(&emb_path)?;
    if !report.duplicates.is_empty() {
        log::warn!("{}: {} duplicate words ignored", emb_path.display(), report.duplicates.len());
    }
    let idf = build_idf(&ing.csk, &ing.vocab);
    let vectors: Vec<_> = ing
        .csk
        .properties()
        .map(|p| property_vector(p, ing.vocab.property_name(p), &emb, &idf))
        .collect();
    let threshold = config.prior_threshold.min(config.grounding_threshold);
    let pairs = similar_pairs(&vectors, threshold);
    if let Some(path) = cache {
        write_atomically(&path, |w| write_pairs(w, &pairs, &ing.vocab))?;
    }
    Ok(pairs)
}

pub fn prepare(config: &Config) -> Result<Prepared> {
    let mut ing = ingest(config)?;
    let pairs = similarity_pairs(config, &mut ing).stage("similarity")?;
    let similarity = SimilarityIndex::new(&pairs);

    let table = ProbTable::build(&ing.csk, &similarity, config.prior_threshold).stage("priors")?;
    let entailment = match config.existing("entailment").stage("priors")? {
        Some(p) => {
            let (t, rejected) = load_entailment(&p).stage("priors")?;
            if rejected > 0 {
                log::warn!("{}: {rejected} rows rejected", p.display());
            }
            t
        }
        None => EntailmentTable::default(),
    };

    let candidates = if config.expand {
        expand_candidates(&ing.csk, &ing.taxonomy)
    } else {
        CandidateSet::observed(&ing.csk)
    };
    let source = CueSource {
        table: &table,
        entailment: &entailment,
        csk: &ing.csk,
        taxonomy: &ing.taxonomy,
        vocab: &ing.vocab,
    };
    let cues = source.cues_for(&candidates.keys());

    let labels = match config.existing("labels").stage("priors")? {
        Some(p) => load_preference_pairs(&p).stage("priors")?,
        None => Vec::new(),
    };
    let (model, fit) = if labels.is_empty() {
        (RegressionModel::uninformed(), FitReport::default())
    } else {
        let lookup = |s: &str, p: &str| {
            let key = StatementKey::new(ing.vocab.find_concept(s)?, ing.vocab.find_property(p)?);
            Some(match candidates.id(key) {
                Some(id) => cues[id.0 as usize],
                None => source.cues(key),
            })
        };
        fit_regression(&labels, lookup).stage("priors")?
    };

    let overrides = match config.existing("priors").stage("priors")? {
        Some(p) => load_prior_overrides(&p).stage("priors")?.0,
        None => Default::default(),
    };
    let mut overridden = 0;
    let priors: Vec<PriorScores> = candidates
        .all()
        .iter()
        .zip(&cues)
        .map(|(c, cue)| {
            let names = (
                ing.vocab.concept_name(c.key.subject),
                ing.vocab.property_name(c.key.property),
            );
            match overrides.get(names.0, names.1) {
                Some(p) => {
                    overridden += 1;
                    p
                }
                None => prior_scores(cue, &model),
            }
        })
        .collect();

    Ok(Prepared {
        config: config.clone(),
        vocab: ing.vocab,
        csk: ing.csk,
        taxonomy: ing.taxonomy,
        taxonomy_report: ing.taxonomy_report,
        pairs,
        similarity,
        table,
        entailment,
        candidates,
        cues,
        model,
        fit,
        priors,
        overridden,
        labels,
    })
}

/// Top unobserved candidates of one subject at one recall level.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrichment {
    pub level: f64,
    pub subject: ConceptId,
    pub statements: Vec<StatementId>,
}

impl Prepared {
    pub fn problem<'a>(&'a self, weights: &'a RuleWeights) -> Problem<'a> {
        Problem {
            candidates: &self.candidates,
            taxonomy: &self.taxonomy,
            similarity: &self.similarity,
            threshold: self.config.grounding_threshold,
            weights,
            priors: &self.priors,
            simplex: SimplexOptions {
                max_iters: self.config.max_iters,
                ..SimplexOptions::default()
            },
        }
    }

    pub fn partitions(&self) -> Vec<Partition> {
        build_partitions(&self.taxonomy, &self.candidates, self.config.sibling_cap)
    }

    pub fn ground(&self, weights: &RuleWeights) -> Vec<Clause> {
        self.problem(weights).grounder().ground_all()
    }

    pub fn solve(&self, weights: &RuleWeights, workers: usize) -> Result<Solution> {
        let solution = solve_all(&self.problem(weights), &self.partitions(), workers).stage("solve")?;
        let failed = solution.fallback_partitions();
        if failed > 0 {
            log::warn!("{failed} partitions fell back to prior ranking");
        }
        Ok(solution)
    }

    pub fn solve_subject(&self, weights: &RuleWeights, subject: &str) -> Result<PartitionSolution> {
        let id = self
            .vocab
            .find_concept(subject)
            .filter(|c| !self.candidates.of_subject(*c).is_empty())
            .ok_or_else(|| Error::UnknownSubject(subject.to_string()))
            .stage("solve")?;
        let partition = self
            .partitions()
            .into_iter()
            .find(|p| p.anchor == id)
            .ok_or_else(|| Error::UnknownSubject(subject.to_string()))
            .stage("solve")?;
        Ok(solve_partition(&self.problem(weights), &partition))
    }

    fn statement_id(&self, subject: &str, property: &str) -> Option<StatementId> {
        let key = StatementKey::new(self.vocab.find_concept(subject)?, self.vocab.find_property(property)?);
        self.candidates.id(key)
    }

    /// Labeled pairs whose statements are both candidates.
    pub fn scorable_labels(&self, pairs: &[PreferencePair]) -> Vec<PreferencePair> {
        let kept: Vec<PreferencePair> = pairs
            .iter()
            .filter(|p| {
                self.statement_id(&p.subject, &p.property_a).is_some()
                    && self.statement_id(&p.subject, &p.property_b).is_some()
            })
            .cloned()
            .collect();
        if kept.len() < pairs.len() {
            log::warn!("{} labeled pairs mention unknown statements and are skipped", pairs.len() - kept.len());
        }
        kept
    }

    /// ppref per facet, comparing statements by rank (rank 1 is best).
    pub fn evaluate(&self, solution: &Solution, pairs: &[PreferencePair]) -> Result<[Option<f64>; 4]> {
        ppref_by_facet(pairs, |s, p, f| {
            let id = self.statement_id(s, p)?;
            Some(-(solution.get(id).scores.get(f).rank as f64))
        })
        .stage("eval")
    }

    /// Rows sorted by subject name, then property name.
    fn output_order(&self) -> Vec<StatementId> {
        let mut ids: Vec<StatementId> = (0..self.candidates.len() as u32).map(StatementId).collect();
        ids.sort_by_cached_key(|&id| {
            let k = self.candidates.get(id).key;
            (
                self.vocab.concept_name(k.subject).to_string(),
                self.vocab.property_name(k.property).to_string(),
            )
        });
        ids
    }

    pub fn write_scores<W: Write>(&self, mut w: W, solution: &Solution) -> std::io::Result<()> {
        write!(w, "subject\tproperty\tprovenance")?;
        for f in Facet::ALL {
            write!(w, "\t{f}_score\t{f}_rank\t{f}_percentile")?;
        }
        writeln!(w)?;
        for id in self.output_order() {
            let c = self.candidates.get(id);
            write!(
                w,
                "{}\t{}\t{}",
                self.vocab.concept_name(c.key.subject),
                self.vocab.property_name(c.key.property),
                c.provenance.name()
            )?;
            for s in solution.get(id).scores.0 {
                write!(w, "\t{}\t{}\t{:.6}", fixed6(s.score), s.rank, s.percentile)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// subject, property, seven cues, four priors.
    pub fn write_priors<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "subject\tproperty")?;
        for n in CueVector::NAMES {
            write!(w, "\t{n}")?;
        }
        for f in Facet::ALL {
            write!(w, "\tprior_{f}")?;
        }
        writeln!(w)?;
        for id in self.output_order() {
            let k = self.candidates.get(id).key;
            write!(w, "{}\t{}", self.vocab.concept_name(k.subject), self.vocab.property_name(k.property))?;
            for v in self.cues[id.0 as usize].to_array() {
                write!(w, "\t{v:.6}")?;
            }
            for v in self.priors[id.0 as usize].0 {
                write!(w, "\t{v:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// For each level and subject, the `floor(level · observed)` best
    /// unobserved candidates by plausible rank.
    pub fn enrich(&self, solution: &Solution, levels: &[f64]) -> Vec<Enrichment> {
        let mut by_subject: BTreeMap<ConceptId, (usize, Vec<StatementId>)> = BTreeMap::new();
        for s in self.candidates.subjects() {
            let entry = by_subject.entry(s).or_default();
            for &id in self.candidates.of_subject(s) {
                if self.candidates.get(id).provenance == Provenance::Observed {
                    entry.0 += 1;
                } else {
                    entry.1.push(id);
                }
            }
            entry
                .1
                .sort_by_key(|&id| (solution.get(id).scores.get(Facet::Plausible).rank, id));
        }
        let mut out = Vec::new();
        for &level in levels {
            for (&subject, (observed, unobserved)) in &by_subject {
                let n = ((level * *observed as f64) + 1e-9).floor() as usize;
                out.push(Enrichment {
                    level,
                    subject,
                    statements: unobserved.iter().take(n).copied().collect(),
                });
            }
        }
        out
    }

    pub fn write_enrichment<W: Write>(&self, mut w: W, solution: &Solution, rows: &[Enrichment]) -> std::io::Result<()> {
        writeln!(w, "level\tsubject\tproperty\tprovenance\tplausible_score\tplausible_rank")?;
        for e in rows {
            for &id in &e.statements {
                let c = self.candidates.get(id);
                let s = solution.get(id).scores.get(Facet::Plausible);
                writeln!(
                    w,
                    "{:.2}\t{}\t{}\t{}\t{}\t{}",
                    e.level,
                    self.vocab.concept_name(c.key.subject),
                    self.vocab.property_name(c.key.property),
                    c.provenance.name(),
                    fixed6(s.score),
                    s.rank
                )?;
            }
        }
        Ok(())
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomically(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Full run: prepare, solve with the configured weights, write scores.
pub fn run_pipeline(config: &Config) -> Result<Solution> {
    let prepared = prepare(config)?;
    let solution = prepared.solve(&config.weights, config.worker_count())?;
    let out = config
        .optional("output")?
        .ok_or_else(|| Error::config("output", "required path is not set"))
        .stage("output")?;
    write_atomically(&out, |w| prepared.write_scores(w, &solution)).stage("output")?;
    if let Some(t) = config.optional("telemetry")? {
        write_atomically(&t, |w| crate::partition::write_telemetry(w, &solution.telemetry, &prepared.vocab))
            .stage("output")?;
    }
    Ok(solution)
}
