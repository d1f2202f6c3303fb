use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csk-facets"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn savannah(args: &[&str]) -> Output {
    let conf = fixture("savannah/savannah.conf");
    let mut all = vec!["-c", conf.to_str().unwrap()];
    all.extend_from_slice(args);
    run(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_embeddings_exits_two_and_names_key() {
    let o = savannah(&["--set", "embeddings=/nonexistent/vectors.vec", "rank", "-o", "/tmp/never.tsv"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("embeddings"), "{}", stderr(&o));
}

#[test]
fn malformed_override_exits_two() {
    let o = savannah(&["--set", "taxonomy_cutoff=abc", "ingest-check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("taxonomy_cutoff"));
}

#[test]
fn rank_is_reproducible_and_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    for (path, workers) in [(&a, "1"), (&b, "3")] {
        let o = savannah(&["--set", &format!("workers={workers}"), "rank", "-o", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    assert_eq!(first, std::fs::read(fixture("savannah/expected_scores.tsv")).unwrap());
}

#[test]
fn ingest_check_reports_counts() {
    let o = savannah(&["ingest-check"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("statements: 37"), "{text}");
}

#[test]
fn priors_dump_schema() {
    let o = savannah(&["priors-dump"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("subject\tproperty\tjoint\t"));
    assert!(header.ends_with("prior_salient"));
    assert!(text.lines().all(|l| l.split('\t').count() == 13));
}

#[test]
fn ground_dump_schema() {
    let o = savannah(&["ground-dump"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "rule\tliterals\tomega_r\tomega_s\tomega_e\tweight");
    assert!(text.lines().count() > 1);
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split('\t').skip(2).map(|v| v.parse().unwrap()).collect();
        assert!((cols[0] * cols[1] * cols[2] - cols[3]).abs() < 2e-6, "{line}");
    }
}

#[test]
fn solve_one_prints_rankings_and_mps() {
    let dir = tempfile::tempdir().unwrap();
    let mps = dir.path().join("hyena.mps");
    let o = savannah(&["solve-one", "hyena", "--mps", mps.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let top = text
        .lines()
        .find(|l| l.starts_with("remarkable\t1\t"))
        .unwrap();
    assert!(top.contains("eat carcasses"), "{text}");
    let m = std::fs::read_to_string(&mps).unwrap();
    assert!(m.contains("ROWS") && m.ends_with("ENDATA\n"));

    let missing = savannah(&["solve-one", "unicorn"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn eval_reports_every_facet() {
    let o = savannah(&["eval"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "facet\tppref\tppref_priors");
    assert_eq!(rows.len(), 6);
    assert!(rows[2].starts_with("typical\t1.000000\t"));
}

#[test]
fn tune_writes_log_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("tune.tsv");
    let o = savannah(&["tune", "--budget", "5", "--log", log.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("# mean ppref"));
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.lines().count() <= 6);
    assert!(text.lines().next().unwrap().ends_with("\tmean"));
}

#[test]
fn enrich_quarter_level_for_lion() {
    let o = savannah(&["--set", "expand=true", "enrich", "--levels", "0.25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lion = text.lines().filter(|l| l.starts_with("0.25\tlion\t")).count();
    assert_eq!(lion, 2, "{text}");
}
