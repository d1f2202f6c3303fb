use std::path::{Path, PathBuf};

use csk_facets::config::Config;
use csk_facets::grounding::{count_by_rule, write_clause_dump};
use csk_facets::pipeline::{prepare, run_pipeline, Prepared};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn savannah() -> (Config, Prepared) {
    let cfg = Config::load(&fixture("savannah/savannah.conf")).unwrap();
    let p = prepare(&cfg).unwrap();
    (cfg, p)
}

fn scores_text(p: &Prepared, cfg: &Config, workers: usize) -> String {
    let s = p.solve(&cfg.weights, workers).unwrap();
    let mut buf = Vec::new();
    p.write_scores(&mut buf, &s).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn savannah_matches_golden_scores() {
    let (cfg, p) = savannah();
    let expected = std::fs::read_to_string(fixture("savannah/expected_scores.tsv")).unwrap();
    assert_eq!(scores_text(&p, &cfg, 2), expected);
}

#[test]
fn repeated_runs_and_worker_counts_agree() {
    let (cfg, p) = savannah();
    let a = scores_text(&p, &cfg, 1);
    assert_eq!(a, scores_text(&p, &cfg, 4));
    let (cfg2, p2) = savannah();
    assert_eq!(a, scores_text(&p2, &cfg2, 1));
}

#[test]
fn score_table_shape() {
    let (cfg, p) = savannah();
    let text = scores_text(&p, &cfg, 1);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(header.len(), 15);
    assert_eq!(&header[..3], ["subject", "property", "provenance"]);
    let mut keys = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 15, "{line}");
        for i in [3, 5, 6, 8, 9, 11, 12, 14] {
            let v = cols[i];
            assert_eq!(v.split('.').nth(1).map(str::len), Some(6), "{v}");
            assert!(!v.starts_with("-0.000000"), "{v}");
        }
        let pct: f64 = cols[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&pct));
        keys.push((cols[0].to_string(), cols[1].to_string()));
    }
    assert_eq!(keys.len(), p.candidates.len());
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn priors_dump_columns_and_range() {
    let (_, p) = savannah();
    let mut buf = Vec::new();
    p.write_priors(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split('\t').count(), 2 + 7 + 4);
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 13);
        for v in &cols[9..] {
            let x: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&x));
        }
        rows += 1;
    }
    assert_eq!(rows, p.candidates.len());
    assert!(p.overridden > 0);
}

#[test]
fn all_priors_in_unit_interval_on_both_fixtures() {
    for conf in ["savannah/savannah.conf", "pond/pond.conf"] {
        let mut cfg = Config::load(&fixture(conf)).unwrap();
        cfg.set("priors", "").unwrap();
        cfg.set("expand", "true").unwrap();
        let p = prepare(&cfg).unwrap();
        assert_eq!(p.overridden, 0);
        for pr in &p.priors {
            assert!(pr.0.iter().all(|x| (0.0..=1.0).contains(x)), "{conf}: {pr:?}");
        }
    }
}

#[test]
fn ground_dump_accounts_for_every_clause() {
    let (cfg, p) = savannah();
    let clauses = p.ground(&cfg.weights);
    assert_eq!(count_by_rule(&clauses).iter().sum::<usize>(), clauses.len());
    let mut buf = Vec::new();
    write_clause_dump(&mut buf, &clauses, &p.candidates, &p.vocab).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), clauses.len() + 1);
    assert!(text.lines().skip(1).all(|l| l.split('\t').count() == 6));
}

#[test]
fn enrichment_takes_a_quarter_of_observed_count() {
    let mut cfg = Config::load(&fixture("savannah/savannah.conf")).unwrap();
    cfg.set("expand", "true").unwrap();
    let p = prepare(&cfg).unwrap();
    let s = p.solve(&cfg.weights, 2).unwrap();
    let rows = p.enrich(&s, &[0.25, 1.0]);
    let lion = p.vocab.find_concept("lion").unwrap();
    let quarter = rows.iter().find(|e| e.subject == lion && e.level == 0.25).unwrap();
    assert_eq!(quarter.statements.len(), 2);
    let full = rows.iter().find(|e| e.subject == lion && e.level == 1.0).unwrap();
    assert!(full.statements.starts_with(&quarter.statements));
    let mut buf = Vec::new();
    p.write_enrichment(&mut buf, &s, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split('\t').nth(3) != Some("observed")));
}

#[test]
fn run_pipeline_writes_output_and_telemetry() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::load(&fixture("savannah/savannah.conf")).unwrap();
    let out = dir.path().join("scores.tsv");
    let tel = dir.path().join("telemetry.tsv");
    cfg.set("output", out.to_str().unwrap()).unwrap();
    cfg.set("telemetry", tel.to_str().unwrap()).unwrap();
    run_pipeline(&cfg).unwrap();
    let expected = std::fs::read_to_string(fixture("savannah/expected_scores.tsv")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), expected);
    let t = std::fs::read_to_string(&tel).unwrap();
    assert!(t.starts_with("anchor\t"));
    assert_eq!(t.lines().count(), 1 + 6);
}

#[test]
fn missing_output_key_is_a_config_error() {
    let cfg = Config::load(&fixture("savannah/savannah.conf")).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_config(), "{err}");
    assert!(err.to_string().contains("output"));
}

#[test]
fn missing_embeddings_names_the_key() {
    let mut cfg = Config::load(&fixture("savannah/savannah.conf")).unwrap();
    cfg.set("embeddings", "/nonexistent/vectors.vec").unwrap();
    let Err(err) = prepare(&cfg) else {
        panic!("prepare succeeded without embeddings");
    };
    assert!(err.is_config(), "{err}");
    assert!(err.to_string().contains("embeddings"), "{err}");
}
