mod support;

use ipg::axiom::Curriculum;
use ipg::generation::GenerationConfig;
use ipg::pipeline::SessionOutput;
use support::criteria::{check_session, mock_session};

#[test]
fn offline_session_meets_dataset_invariants() {
    let cm = Curriculum::classical_mechanics();
    let out = mock_session(&cm, GenerationConfig::default());
    check_session(&cm, &out).unwrap();
    assert!(
        out.low_complexity() >= 1,
        "the restitution seed yields a flagged problem"
    );
}

#[test]
fn sessions_are_deterministic() {
    let cm = Curriculum::classical_mechanics();
    let a = mock_session(&cm, GenerationConfig::default());
    let b = mock_session(&cm, GenerationConfig::default());
    assert!(a.records().eq(b.records()));
}

#[test]
fn parallel_workers_keep_seed_order_and_invariants() {
    let cm = Curriculum::classical_mechanics();
    let serial = mock_session(&cm, GenerationConfig::default());
    let parallel = mock_session(
        &cm,
        GenerationConfig {
            jobs: 4,
            ..GenerationConfig::default()
        },
    );
    let ids = |o: &SessionOutput| o.seeds.iter().map(|s| s.seed_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&serial), ids(&parallel));
    check_session(&cm, &parallel).unwrap();
}

#[test]
fn every_planted_fault_is_recovered() {
    let cm = Curriculum::classical_mechanics();
    let out = mock_session(&cm, GenerationConfig::default());
    assert!(out.collisions >= 1);
    assert!(out.rejected().count() >= 7);
    for s in &out.seeds {
        assert!(s.seed_failure.is_none(), "{}", s.seed_id);
    }
}
