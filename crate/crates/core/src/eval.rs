//! Pairwise-preference precision and rule-weight search.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grounding::{RuleId, RuleWeights};
use crate::model::Facet;

pub use crate::priors::{load_preference_pairs, parse_preference_pairs, PreferencePair};

/// Fraction of determinate pairs whose score order agrees with the label;
/// ties count one half. `score(subject, property, facet)` must be higher
/// for the more preferred statement.
pub fn ppref(
    pairs: &[PreferencePair],
    score: impl Fn(&str, &str, Facet) -> Option<f64>,
) -> Result<f64> {
    let mut total = 0usize;
    let mut agree = 0.0;
    for p in pairs.iter().filter(|p| p.is_determinate()) {
        let get = |prop: &str| {
            score(&p.subject, prop, p.facet).ok_or_else(|| Error::MissingScore {
                subject: p.subject.clone(),
                property: prop.to_string(),
                facet: p.facet,
            })
        };
        let (a, b) = (get(&p.property_a)?, get(&p.property_b)?);
        total += 1;
        let want = p.mean_preference > 3.0;
        if a == b {
            agree += 0.5;
        } else if (a > b) == want {
            agree += 1.0;
        }
    }
    if total == 0 {
        return Err(Error::Degenerate("no determinate preference pairs".into()));
    }
    Ok(agree / total as f64)
}

/// ppref per facet; `None` for facets without determinate pairs.
pub fn ppref_by_facet(
    pairs: &[PreferencePair],
    score: impl Fn(&str, &str, Facet) -> Option<f64>,
) -> Result<[Option<f64>; 4]> {
    let mut out = [None; 4];
    for f in Facet::ALL {
        let subset: Vec<PreferencePair> = pairs.iter().filter(|p| p.facet == f).cloned().collect();
        if subset.iter().any(PreferencePair::is_determinate) {
            out[f.index()] = Some(ppref(&subset, &score)?);
        }
    }
    Ok(out)
}

/// Mean over the facets that have a value.
pub fn mean_ppref(per_facet: &[Option<f64>; 4]) -> Option<f64> {
    let vals: Vec<f64> = per_facet.iter().flatten().copied().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    pub seed: u64,
    /// Maximum number of distinct weight vectors evaluated, defaults included.
    pub budget: usize,
    pub grid: Vec<f64>,
    pub radius: f64,
    /// Share of the budget stage 1 may use.
    pub screen_share: f64,
    /// Rules open to tuning; others keep their starting weight.
    pub rules: Vec<RuleId>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: 60,
            grid: vec![0.0, 0.1, 0.5, 1.0],
            radius: 0.2,
            screen_share: 0.5,
            rules: RuleId::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneLogEntry {
    pub index: usize,
    pub stage: u8,
    pub weights: RuleWeights,
    pub per_facet: [Option<f64>; 4],
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: RuleWeights,
    pub best_mean: f64,
    pub log: Vec<TuneLogEntry>,
}

struct Search<'f, F> {
    eval: &'f mut F,
    budget: usize,
    memo: HashMap<Vec<u64>, f64>,
    log: Vec<TuneLogEntry>,
    best: RuleWeights,
    best_mean: f64,
}

impl<F> Search<'_, F>
where
    F: FnMut(&RuleWeights) -> Result<[Option<f64>; 4]>,
{
    fn exhausted(&self) -> bool {
        self.log.len() >= self.budget
    }

    /// Evaluates unless memoized or out of budget; adopts strict improvements.
    fn try_weights(&mut self, w: RuleWeights, stage: u8) -> Result<()> {
        let key: Vec<u64> = w.0.iter().map(|x| x.to_bits()).collect();
        if self.memo.contains_key(&key) || self.exhausted() {
            return Ok(());
        }
        let per_facet = (self.eval)(&w)?;
        let mean = mean_ppref(&per_facet)
            .ok_or_else(|| Error::Degenerate("evaluation returned no facet scores".into()))?;
        self.memo.insert(key, mean);
        self.log.push(TuneLogEntry {
            index: self.log.len(),
            stage,
            weights: w,
            per_facet,
            mean,
        });
        if mean > self.best_mean {
            self.best = w;
            self.best_mean = mean;
        }
        Ok(())
    }
}

/// Two-stage search maximizing mean ppref.
///
/// The starting weights are evaluated first. Stage 1 visits the open rules
/// in seeded random order and tries each grid value for that rule, keeping
/// strict improvements, until `screen_share` of the budget is used. Stage 2
/// spends the remaining budget on uniform joint samples within `radius` of
/// the current incumbent, clamped to [0,1].
pub fn tune<F>(start: RuleWeights, opts: &TuneOptions, mut eval: F) -> Result<TuneOutcome>
where
    F: FnMut(&RuleWeights) -> Result<[Option<f64>; 4]>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut search = Search {
        eval: &mut eval,
        budget: opts.budget.max(1),
        memo: HashMap::new(),
        log: Vec::new(),
        best: start,
        best_mean: f64::NEG_INFINITY,
    };
    search.try_weights(start, 0)?;

    let screen = ((search.budget as f64 * opts.screen_share).ceil() as usize).max(1);
    let mut order = opts.rules.clone();
    order.shuffle(&mut rng);
    'screen: for &rule in &order {
        for &v in &opts.grid {
            if search.exhausted() || search.log.len() >= screen {
                break 'screen;
            }
            let mut w = search.best;
            w.set(rule, v);
            search.try_weights(w, 1)?;
        }
    }

    let mut misses = 0;
    while !search.exhausted() && !opts.rules.is_empty() && misses < 1000 {
        let center = search.best;
        let mut w = center;
        for &rule in &opts.rules {
            let c = center.get(rule);
            let lo = (c - opts.radius).max(0.0);
            let hi = (c + opts.radius).min(1.0);
            w.set(rule, if hi > lo { rng.gen_range(lo..=hi) } else { lo });
        }
        let before = search.log.len();
        search.try_weights(w, 2)?;
        if search.log.len() == before {
            misses += 1;
        }
    }
    Ok(TuneOutcome {
        best: search.best,
        best_mean: search.best_mean,
        log: search.log,
    })
}

/// TSV: index, stage, one column per rule weight, four facet pprefs, mean.
pub fn write_tune_log<W: Write>(mut w: W, log: &[TuneLogEntry]) -> std::io::Result<()> {
    write!(w, "index\tstage")?;
    for r in RuleId::ALL {
        write!(w, "\t{}", r.tag())?;
    }
    for f in Facet::ALL {
        write!(w, "\tppref_{f}")?;
    }
    writeln!(w, "\tmean")?;
    for e in log {
        write!(w, "{}\t{}", e.index, e.stage)?;
        for x in e.weights.0 {
            write!(w, "\t{x:.6}")?;
        }
        for p in e.per_facet {
            match p {
                Some(v) => write!(w, "\t{v:.6}")?,
                None => write!(w, "\tNA")?,
            }
        }
        writeln!(w, "\t{:.6}", e.mean)?;
    }
    Ok(())
}
