//! Data-parallel sweeps return exactly what a single thread computes.
#![cfg(feature = "parallel")]

use autocat::balance::balance_grid;
use autocat::model::{ReactionParams, ScaledParams, State};
use autocat::oracle::{stationary_truncated, TruncationSpec};
use autocat::par::with_single_thread;
use autocat::ssa::{run_replicas, SimConfig};
use autocat::stationary::build_distribution;

fn params() -> ReactionParams {
    ScaledParams::new(20.0, 0.01, vec![1.0, 1.01]).unwrap().to_unscaled()
}

#[test]
fn sweeps_do_not_depend_on_the_thread_count() {
    let p = params();
    assert_eq!(
        with_single_thread(|| balance_grid(&p, 40).unwrap()),
        balance_grid(&p, 40).unwrap()
    );
    assert_eq!(
        with_single_thread(|| build_distribution(&p, 1e-12).unwrap()),
        build_distribution(&p, 1e-12).unwrap()
    );
    assert_eq!(
        with_single_thread(|| stationary_truncated(&p, &TruncationSpec::new(70)).unwrap()),
        stationary_truncated(&p, &TruncationSpec::new(70)).unwrap()
    );
    let cfg = SimConfig::with_events(20_000, 5, State::d2(10, 10)).unwrap();
    assert_eq!(
        with_single_thread(|| run_replicas(&p, &cfg, 6).unwrap()),
        run_replicas(&p, &cfg, 6).unwrap()
    );
}
