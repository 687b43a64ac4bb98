use super::*;
use crate::dsl::SkillProgram;
use crate::BENCHMARK_PROGRAM;

fn benchmark() -> SkillProgram {
    BENCHMARK_PROGRAM.parse().unwrap()
}

#[test]
fn config_defaults() {
    let c: LifecycleConfig = serde_json::from_str(r#"{"episodes_total": 10}"#).unwrap();
    assert_eq!(c, LifecycleConfig::new(10));
    assert_eq!((c.finetune_every, c.finetune_epochs, c.buffer_capacity), (50, 20, 500));
    assert!(c.reoptimize_after_finetune && c.finetune_enabled);
    assert_eq!((c.drift_alarm_window, c.drift_alarm_threshold), (50, 0.10));
    assert!(serde_json::from_str::<LifecycleConfig>(r#"{"episodes_total": 1, "typo": 1}"#).is_err());
}

#[test]
fn config_invariants() {
    let ok = LifecycleConfig::new(10);
    assert!(ok.validate().is_ok());
    let zero = LifecycleConfig { finetune_every: 0, ..ok.clone() };
    assert!(matches!(zero.validate(), Err(LifecycleError::Config(_))));
    let small = LifecycleConfig { buffer_capacity: 49, ..ok.clone() };
    assert!(matches!(small.validate(), Err(LifecycleError::Config(_))));
    let region = LifecycleConfig { reoptimize_trust_region: 0.0, ..ok };
    assert!(region.validate().is_err());
}

#[test]
fn identical_pattern_raises_no_alarm() {
    let pattern: Vec<bool> = (0..100).map(|i| i % 7 != 0).collect();
    let s = detect_drift(&pattern, 50, 0.10).unwrap();
    assert!(!s.alarm);
    let ones = vec![true; 80];
    let s = detect_drift(&ones, 40, 0.10).unwrap();
    assert_eq!((s.baseline, s.current, s.drop), (1.0, 1.0, 0.0));
}

#[test]
fn drop_of_fifteen_percent_alarms() {
    let mut outcomes = vec![true; 40];
    outcomes.extend((0..20).map(|i| i >= 3));
    let s = detect_drift(&outcomes, 20, 0.10).unwrap();
    assert_eq!(s.baseline, 1.0);
    assert!((s.current - 0.85).abs() < 1e-12);
    assert!(s.alarm);
}

#[test]
fn short_window_is_rejected() {
    let e = detect_drift(&[true; 10], 20, 0.1).unwrap_err();
    assert!(matches!(e, LifecycleError::ShortWindow { needed: 20, found: 10 }));
    assert!(detect_drift(&[], 0, 0.1).is_err());
}

#[test]
fn exploration_stays_in_bounds_and_is_seeded() {
    let p = benchmark();
    let bounds = p.free_bounds();
    for e in 0..200 {
        let t = explore_parameters(&p, 3, e);
        assert!(t.iter().zip(&bounds).all(|(v, (lo, hi))| v >= lo && v <= hi));
        assert_eq!(t, explore_parameters(&p, 3, e));
    }
    assert_ne!(explore_parameters(&p, 3, 0), explore_parameters(&p, 4, 0));
}

#[test]
fn collected_records_carry_the_explored_parameters() {
    let p = benchmark();
    let traces = collect_episodes(&p, &WorldConfig::reference(0.002), 30, 8, true).unwrap();
    for t in &traces {
        let q = p.set_free_parameters(&explore_parameters(&p, 8, t.episode_index)).unwrap();
        for s in &t.steps {
            assert_eq!(s.params, q.skills()[s.skill_index].values());
        }
    }
    let fixed = collect_episodes(&p, &WorldConfig::reference(0.002), 5, 8, false).unwrap();
    assert_eq!(fixed[0], execute_program(&p, &WorldConfig::reference(0.002), 8, 0));
}

#[test]
fn csv_has_one_row_per_record() {
    let mut log = LifecycleLog::new(vec!["search.r_max".into()]);
    for e in 0..3 {
        log.push(LifecycleRecord {
            episode: e,
            hole: [0.4, 0.0],
            success: e != 1,
            duration: 4.5,
            theta: vec![0.003],
            events: if e == 2 { vec![Event::Finetune, Event::Reoptimize] } else { vec![] },
        });
    }
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "episode,hole_x,hole_y,success,duration,search.r_max,event");
    assert_eq!(lines[2], "1,0.4,0,0,4.5,0.003,");
    assert_eq!(lines[3], "2,0.4,0,1,4.5,0.003,finetune;reoptimize");
    assert_eq!(lines.len(), 4);
    assert_eq!(log.count(Event::Finetune), 1);
}

#[test]
fn missing_models_fail_before_any_episode() {
    let e = run_operation(
        &benchmark(),
        &Library::new(),
        &WorldConfig::reference(0.0),
        &LossSpec::default(),
        &LifecycleConfig::new(10),
        1,
    )
    .unwrap_err();
    assert!(matches!(e, LifecycleError::Surrogate(SurrogateError::MissingModel(_))));
}

mod properties {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn config_validation_matches_invariants(every in 0u64..100, capacity in 0u64..200, window in 0u64..60) {
            let c = LifecycleConfig { finetune_every: every, buffer_capacity: capacity, drift_alarm_window: window, ..LifecycleConfig::new(10) };
            prop_assert_eq!(c.validate().is_ok(), every >= 1 && capacity >= every && window >= 1);
        }

        #[test]
        fn stationary_pattern_never_alarms(pattern in proptest::collection::vec(any::<bool>(), 1..20), repeats in 1usize..10) {
            let log: Vec<bool> = pattern.iter().copied().cycle().take(pattern.len() * repeats).collect();
            let s = detect_drift(&log, pattern.len(), 0.1).unwrap();
            prop_assert!(!s.alarm);
            prop_assert!((s.baseline - s.current).abs() < 1e-12);
        }

        #[test]
        fn exploration_within_bounds(seed in any::<u64>(), episode in any::<u64>()) {
            let p = benchmark();
            let theta = explore_parameters(&p, seed, episode);
            for (t, (lo, hi)) in theta.iter().zip(p.free_bounds()) {
                prop_assert!(*t >= lo && *t <= hi);
            }
        }
    }
}
