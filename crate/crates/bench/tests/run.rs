use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use aced::oracles::{erm_exact, WeightedSample};
use aced::pool::{pool_error, LabelModel, LabelSource};
use aced_bench::plotdata::curves;
use aced_bench::run::{build_instance, TrainView};
use aced_bench::stdin_labels::PromptLabels;
use aced_bench::{run_experiment, write_outputs, ExperimentConfig, Labels, RunOutcome};

fn config(body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(body, Path::new(".")).unwrap()
}

const NOISY: &str = r#"
[instance]
generator = "thresholds"
n = 20
k_star = 7
eps = 0.4
persistent = true
"#;

fn final_rows(outcomes: &[RunOutcome]) -> BTreeMap<(String, u64), f64> {
    outcomes
        .iter()
        .map(|o| ((o.algorithm.clone(), o.seed), o.rows.last().unwrap().pool_accuracy.unwrap()))
        .collect()
}

#[test]
fn passive_full_budget_matches_full_data_erm() {
    let cfg = config(&format!("replicates = 5\n{NOISY}\n[[algorithm]]\nname = \"passive\"\nbudget = 20\n"));
    let inst = build_instance(&cfg.instance).unwrap();
    let class = inst.class.explicit().unwrap();
    let outcomes = run_experiment(&cfg, Labels::Model).unwrap();
    assert_eq!(outcomes.len(), 5);
    for o in &outcomes {
        let mut model = LabelModel::new(inst.eta().to_vec(), true, o.seed).unwrap();
        let samples: Vec<WeightedSample> = (0..20)
            .map(|i| WeightedSample::new(i, model.query(i).unwrap(), 1.0))
            .collect();
        let best = erm_exact(class, &samples).unwrap();
        let want = 1.0 - pool_error(class.row(best), inst.eta()).unwrap();
        let last = o.rows.last().unwrap();
        assert_eq!(last.queries, Some(20));
        assert_eq!(last.pool_accuracy, Some(want), "seed {}", o.seed);
    }
}

#[test]
fn ten_replicates_average_into_curves() {
    let cfg = config(&format!(
        "replicates = 10\nseed = 100\n{NOISY}\n[[algorithm]]\nname = \"passive\"\nbudget = 12\ncheckpoint_every = 4\n"
    ));
    let outcomes = run_experiment(&cfg, Labels::Model).unwrap();
    assert_eq!(outcomes.len(), 10);
    let seeds: Vec<u64> = outcomes.iter().map(|o| o.seed).collect();
    assert_eq!(seeds, (100..110).collect::<Vec<_>>());
    let rows: Vec<_> = outcomes.iter().flat_map(|o| o.rows.clone()).collect();
    let pts = curves(&rows);
    let qs: Vec<usize> = pts.iter().map(|p| p.queries).collect();
    assert_eq!(qs, vec![4, 8, 12]);
    let finals: Vec<f64> = outcomes
        .iter()
        .map(|o| o.rows.iter().map(|r| r.pool_accuracy.unwrap()).fold(0.0, f64::max))
        .collect();
    let mean = finals.iter().sum::<f64>() / 10.0;
    assert!((pts[2].mean_acc - mean).abs() < 1e-12);
}

#[test]
fn seed_order_does_not_matter() {
    let algos = "[[algorithm]]\nname = \"passive\"\nbudget = 10\n\n[[algorithm]]\nname = \"aced_fixed_budget\"\nbudget = 16\nepsilon = 0.25\n";
    let a = run_experiment(&config(&format!("seeds = [5, 1, 3]\nreplicates = 3\n{NOISY}\n{algos}")), Labels::Model).unwrap();
    let b = run_experiment(&config(&format!("seeds = [1, 3, 5]\nreplicates = 3\n{NOISY}\n{algos}")), Labels::Model).unwrap();
    let rows = |o: &[RunOutcome]| o.iter().flat_map(|x| x.rows.clone()).collect::<Vec<_>>();
    assert_eq!(rows(&a), rows(&b));
    assert_eq!(final_rows(&a), final_rows(&b));
}

#[test]
fn holdout_points_are_never_queried() {
    let body = format!(
        "replicates = 2\nholdout = 0.3\nholdout_seed = 9\n{NOISY}\n\
         [[algorithm]]\nname = \"passive\"\nbudget = 14\ncheckpoint_every = 2\n\
         [[algorithm]]\nname = \"uniform_disagreement\"\nbudget = 14\n\
         [[algorithm]]\nname = \"iwal\"\nbudget = 14\n\
         [[algorithm]]\nname = \"aced_fixed_budget\"\nbudget = 14\nepsilon = 0.25\n\
         [[algorithm]]\nname = \"aced_waterfilled\"\nbudget = 14\nepsilon = 0.25\n"
    );
    let cfg = config(&body);
    let inst = build_instance(&cfg.instance).unwrap();
    let view = TrainView::new(&inst, cfg.holdout, cfg.holdout_seed).unwrap();
    assert_eq!(view.holdout.len(), 6);
    assert_eq!(view.train.len(), 14);
    assert!(view.train.iter().all(|i| !view.holdout.contains(i)));
    let outcomes = run_experiment(&cfg, Labels::Model).unwrap();
    for o in &outcomes {
        let record = o.record.as_ref().unwrap_or_else(|| panic!("{} failed: {:?}", o.algorithm, o.error));
        view.assert_no_leak(record);
        assert!(record.queries.iter().all(|q| q.index < 14));
        let mut last = None;
        for r in &o.rows {
            assert!(last < r.queries, "queries must increase within a run");
            last = r.queries;
            let pa = r.pool_accuracy.unwrap();
            let ha = r.holdout_accuracy.unwrap();
            assert!((0.0..=1.0).contains(&pa) && (0.0..=1.0).contains(&ha));
        }
    }
}

#[test]
fn linear_holdout_accuracy() {
    let body = "holdout = 0.25\n[instance]\ngenerator = \"thresholds\"\nn = 24\nk_star = 10\nlinear = true\n\
                [[algorithm]]\nname = \"passive\"\nbudget = 18\n";
    let outcomes = run_experiment(&config(body), Labels::Model).unwrap();
    let last = outcomes[0].rows.last().unwrap();
    assert_eq!(last.status, "ok");
    assert!(last.holdout_accuracy.unwrap() >= 0.8);
    assert!(last.pool_accuracy.unwrap() >= 0.8);
}

#[test]
fn failures_are_recorded_per_row() {
    let body = "replicates = 2\n[instance]\ngenerator = \"thresholds\"\nn = 16\nk_star = 4\nlinear = true\n\
                [[algorithm]]\nname = \"uniform_disagreement\"\nbudget = 8\n\
                [[algorithm]]\nname = \"passive\"\nbudget = 8\n";
    let outcomes = run_experiment(&config(body), Labels::Model).unwrap();
    assert_eq!(outcomes.len(), 4);
    for o in &outcomes[..2] {
        assert!(o.error.is_some());
        assert_eq!(o.rows.len(), 1);
        assert!(o.rows[0].status.starts_with("error: "), "{}", o.rows[0].status);
        assert_eq!(o.rows[0].queries, None);
    }
    for o in &outcomes[2..] {
        assert!(o.error.is_none());
        assert!(o.rows.iter().all(|r| r.status == "ok"));
    }
}

#[test]
fn outputs_are_byte_identical() {
    let body = format!(
        "replicates = 3\nholdout = 0.2\n{NOISY}\n[[algorithm]]\nname = \"passive\"\nbudget = 12\ncheckpoint_every = 3\n\
         [[algorithm]]\nname = \"aced_fixed_budget_efficient\"\nbudget = 12\nepsilon = 0.25\n"
    );
    let cfg = config(&body);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_outputs(d.path(), &run_experiment(&cfg, Labels::Model).unwrap()).unwrap();
    }
    for file in ["results.csv", "curves.csv", "runs.jsonl"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs");
    }
    let timings = std::fs::read_to_string(dirs[0].path().join("timings.csv")).unwrap();
    assert_eq!(timings.lines().next(), Some("algorithm,seed,wall_ms"));
    assert_eq!(timings.lines().count(), 7);
}

#[test]
fn prompt_labels_cache_and_retry() {
    let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let mut prompt = Vec::new();
    {
        let mut src = PromptLabels::new(ids, Cursor::new("maybe\n1\n 0 \n"), &mut prompt);
        assert!(src.is_persistent());
        assert_eq!(src.len(), 3);
        assert!(src.query(0).unwrap());
        assert!(src.query(0).unwrap());
        assert!(!src.query(1).unwrap());
        assert!(src.query(2).is_err());
        assert!(src.query(7).is_err());
    }
    let text = String::from_utf8(prompt).unwrap();
    assert_eq!(text.matches("label for a [0/1]: ").count(), 2);
    assert_eq!(text.matches("label for b [0/1]: ").count(), 1);
}

#[test]
fn external_labels_drive_runs() {
    let body = "[instance]\ngenerator = \"thresholds\"\nn = 6\nk_star = 2\n\
                [[algorithm]]\nname = \"passive\"\nbudget = 6\n";
    let cfg = config(body);
    let answers = "1\n".repeat(6);
    let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
    let mut prompt = Vec::new();
    let mut src = PromptLabels::new(ids, Cursor::new(answers), &mut prompt);
    let outcomes = run_experiment(&cfg, Labels::External(&mut src)).unwrap();
    let record = outcomes[0].record.as_ref().unwrap();
    assert_eq!(record.queries.len(), 6);
    assert_eq!(record.returned, Some(5));
    assert_eq!(String::from_utf8(prompt).unwrap().matches("[0/1]").count(), 6);
}
