use std::path::Path;

use dropcurve::compare::{PLOT_FILE, SUMMARY_FILE};
use dropcurve::data::load_splits;
use dropcurve::train::{metrics_to_csv, seed_file};
use dropcurve::{compare_methods, read_metrics, run_experiment, train_seed, Method, RunConfig, SummaryReport};
use dropcurve_core::dropout::RetainGroup;
use tempfile::TempDir;

fn blobs_config(out: &Path, extra: &str) -> RunConfig {
    let text = format!(
        "architecture = mlp
dataset = blobs
mlp.hidden = 16, 16
blobs.classes = 4
blobs.per_class = 25
blobs.test_per_class = 25
blobs.dim = 8
blobs.separation = 8
train.total_updates = 200
train.batch_size = 20
train.learning_rate = 0.01
train.eval_every = 20
train.seeds = 0, 1
output.dir = {}
{extra}
",
        out.display()
    );
    // Keys in `extra` replace the defaults above.
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let merged: Vec<&str> = text.lines().filter(|l| !overridden.contains(&key(l)) || extra.contains(l)).collect();
    merged.join("\n").parse().unwrap()
}

#[test]
fn no_dropout_fits_separable_blobs() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "method = constant\nschedule.theta_bar = 1");
    let splits = load_splits(&cfg).unwrap();
    let out = train_seed(&cfg, &splits, 0).unwrap();
    assert!(out.diverged_at.is_none());
    let last = out.records.last().unwrap();
    assert_eq!(last.train_acc, 1.0);
    assert!(out.records.iter().all(|r| r.theta_of(RetainGroup::Hidden) == Some(1.0)));
}

#[test]
fn logged_thetas_follow_the_schedule() {
    let dir = TempDir::new().unwrap();
    for method in ["curriculum", "polynomial", "power_exponent", "anti"] {
        let cfg = blobs_config(dir.path(), &format!("method = {method}"));
        let splits = load_splits(&cfg).unwrap();
        let records = train_seed(&cfg, &splits, 1).unwrap().records;
        assert_eq!(records.len(), 200);
        for group in [RetainGroup::Input, RetainGroup::Hidden] {
            let schedule = cfg.group_schedule(group, splits.train.len()).unwrap();
            for r in &records {
                let logged = r.theta_of(group).unwrap();
                let expected = schedule.retain_probability(r.step as f64).unwrap();
                assert!((logged - expected).abs() <= 1e-12, "{method} {group:?} t={}", r.step);
            }
            if method != "anti" {
                assert_eq!(records[0].theta_of(group), Some(1.0));
            }
        }
        assert_eq!(records[0].theta_of(RetainGroup::Conv), None);
    }
}

#[test]
fn evaluation_rows_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "train.seeds = 3\ntrain.total_updates = 55");
    let paths = run_experiment(&cfg).unwrap();
    assert_eq!(paths, vec![seed_file(dir.path(), Method::Curriculum, 3)]);
    let records = read_metrics(&paths[0]).unwrap();
    let evals: Vec<u64> = records.iter().filter(|r| r.test_acc.is_some()).map(|r| r.step).collect();
    assert_eq!(evals, vec![19, 39, 54]);
    assert!(records.windows(2).all(|w| w[0].step + 1 == w[1].step));

    let first = std::fs::read(&paths[0]).unwrap();
    run_experiment(&cfg).unwrap();
    assert_eq!(std::fs::read(&paths[0]).unwrap(), first);
    assert_eq!(String::from_utf8(first).unwrap(), metrics_to_csv(&records));
}

#[test]
fn compare_on_a_tiny_training_set() {
    let dir = TempDir::new().unwrap();
    // Few training points and wide layers invite overfitting.
    let cfg = blobs_config(dir.path(), "blobs.per_class = 3\nblobs.separation = 2\nmlp.hidden = 64, 64");
    let methods = [Method::None, Method::Constant, Method::Curriculum, Method::Anti];
    let report = compare_methods(&cfg, &methods, 3).unwrap();
    let names: Vec<&str> = report.methods.iter().map(|m| m.method.as_str()).collect();
    assert_eq!(names, vec!["none", "constant", "curriculum", "anti"]);
    assert!(report.methods.iter().all(|m| m.steps.len() == 10 && m.files.len() == 2));
    let row = report.boost("curriculum").unwrap();
    assert!(row.delta_pp.is_some());
    assert_eq!(report.boost("constant").unwrap().boost_percent, Some(0.0));

    assert_eq!(SummaryReport::load(&dir.path().join(SUMMARY_FILE)).unwrap(), report);
    let svg = std::fs::read_to_string(dir.path().join(PLOT_FILE)).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn constant_alone_has_zero_boost() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "train.total_updates = 40");
    let report = compare_methods(&cfg, &[Method::Constant], 1).unwrap();
    let row = report.boost("constant").unwrap();
    assert_eq!(row.boost_percent, Some(0.0));
    assert_eq!(row.delta_pp, None);
}

#[test]
fn invalid_configs_fail_before_training() {
    let dir = TempDir::new().unwrap();
    assert!("train.batch_size = 0".parse::<RunConfig>().is_err());
    assert!("schedule.T = 10\ntrain.total_updates = 20".parse::<RunConfig>().is_err());
    assert!("no_such_key = 1".parse::<RunConfig>().is_err());
    let mut cfg = blobs_config(dir.path(), "");
    cfg.seeds.clear();
    assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 1);
    assert!(!dir.path().join("curriculum").exists());
}
