use std::fs;

use coincide::exec::Execution;
use coincide::simulate::{sample_framework, Framework, FrameworkConfig};
use coincide::spike_data::{
    load_trial_set, sidecar_header_path, trial_set_from_vecs, validate, write_trial_set, Format, TrialSet, Window,
};
use coincide::Error;
use proptest::prelude::*;

fn trial_sets() -> impl Strategy<Value = TrialSet> {
    (1usize..4, 1usize..5, -3.0f64..3.0, 0.05f64..2.0).prop_flat_map(|(n, m, a, len)| {
        let train = prop::collection::btree_set(0u64..1_000_000, 0..6).prop_map(move |s| {
            s.into_iter()
                .map(|u| a + len * u as f64 / 1_000_000.0)
                .collect::<Vec<f64>>()
        });
        prop::collection::vec(prop::collection::vec(train, n), m).prop_map(move |trials| {
            trial_set_from_vecs(Window::new(a, a + len).unwrap(), trials).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_and_json_round_trip(ts in trial_sets()) {
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("d.csv", Format::Csv), ("d.json", Format::Json)] {
            let path = dir.path().join(name);
            write_trial_set(&ts, &path, format).unwrap();
            let back = load_trial_set(&path, format).unwrap();
            prop_assert_eq!(&back, &ts);
        }
    }
}

#[test]
fn simulated_sets_validate() {
    for fw in [Framework::F1, Framework::F2, Framework::F3, Framework::F4] {
        for rep in 0..5 {
            let (ts, _) = sample_framework(&FrameworkConfig::new(fw, 9, 30), rep, Execution::Sequential).unwrap();
            assert!(validate(&ts.to_raw()).is_ok(), "{fw:?} repetition {rep}");
        }
    }
}

#[test]
fn sidecar_header_replaces_comment_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    fs::write(&path, "trial_id,neuron_id,spike_time\n1,1,0.25\n2,2,0.5\n1,2,0.125\n").unwrap();
    assert!(matches!(load_trial_set(&path, Format::Csv), Err(Error::Parse(_))));
    fs::write(
        sidecar_header_path(&path),
        r#"{"window_a": 0.0, "window_b": 1.0, "neurons": 3, "trials": 2}"#,
    )
    .unwrap();
    let ts = load_trial_set(&path, Format::Csv).unwrap();
    assert_eq!(ts.trial_count(), 2);
    assert_eq!(ts.neuron_count(), 3);
    assert_eq!(ts.trials()[0].train(1).times(), &[0.125]);
    assert!(ts.trials()[1].train(2).is_empty());
}

#[test]
fn invalid_files_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"window": {"a": 0.0, "b": 1.0}, "neuron_count": 2,
            "trials": [[[0.5, 0.2], [1.5]], [[0.1]]]}"#,
    )
    .unwrap();
    match load_trial_set(&path, Format::Json) {
        Err(Error::InvalidTrialSet(v)) => {
            let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            assert_eq!(v.len(), 3, "{text:?}");
            assert!(text.iter().any(|t| t.contains("not sorted")));
            assert!(text.iter().any(|t| t.contains("outside window")));
            assert!(text.iter().any(|t| t.contains("inconsistent neuron count")));
        }
        other => panic!("expected validation failure, got {other:?}"),
    }
}

#[test]
fn per_trial_windows_are_rebased_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shifted.json");
    fs::write(
        &path,
        r#"{"window": {"a": 0.0, "b": 0.5}, "neuron_count": 1,
            "trials": [[[10.25]], [[20.0, 20.5]]],
            "trial_windows": [{"a": 10.0, "b": 10.5}, {"a": 20.0, "b": 20.5}]}"#,
    )
    .unwrap();
    let ts = load_trial_set(&path, Format::Json).unwrap();
    assert_eq!(ts.window().a(), 0.0);
    assert_eq!(ts.trials()[0].train(0).times(), &[0.25]);
    assert_eq!(ts.trials()[1].train(0).times(), &[0.0, 0.5]);
}
