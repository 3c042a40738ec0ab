//! Route-against-route checks: the event simulator, the exact chain solve
//! and the closed forms must tell the same story wherever their semantics
//! coincide (single confirmation, no rejections).

use bran_core::ctmc::{metrics, solve_adaptive, SolveOptions};
use bran_core::des::{run, SimConfig};
use bran_core::model::SystemParams;

fn chain_latency(params: &SystemParams) -> f64 {
    let (space, ss) = solve_adaptive(params, &SolveOptions::default()).unwrap();
    let m = metrics(&ss, &space, params);
    assert!(!m.truncation_warning);
    m.little_latency
}

fn check_des_against_chain(params: SystemParams, seed: u64) {
    assert_eq!(params.n_conf, 1, "the chain has no confirmation stage");
    let expected = chain_latency(&params);
    let stats = run(&SimConfig::new(params, 400_000, seed)).unwrap().stats;
    assert!(
        (stats.mean_sojourn - expected).abs() <= 3.0 * stats.sojourn_ci95_halfwidth,
        "sojourn {} vs chain {} (ci95 {})",
        stats.mean_sojourn,
        expected,
        stats.sojourn_ci95_halfwidth
    );
}

#[test]
fn des_matches_chain_for_conventional_model() {
    check_des_against_chain(
        SystemParams {
            lambda_a: 0.6,
            lambda_b: 1.0,
            lambda_c: 1.0,
            lambda_r: 0.0,
            k: 1,
            r: 1,
            s: 1,
            n_conf: 1,
        },
        31,
    );
}

#[test]
fn des_matches_chain_with_batched_blocks() {
    // lambda_a exceeds the block rate: only batch service keeps up. The
    // closed forms refuse this region; the chain and the simulator agree
    // in it.
    check_des_against_chain(
        SystemParams {
            lambda_a: 1.5,
            lambda_b: 1.0,
            lambda_c: 1.0,
            lambda_r: 0.0,
            k: 3,
            r: 1,
            s: 2,
            n_conf: 1,
        },
        32,
    );
}

#[test]
fn des_matches_chain_under_single_rejections() {
    // With r = 1 the chain's effective-throughput correction is exact, and
    // queue occupancies can be compared through Little's law on the
    // surviving flow: both routes must see the same served fraction too.
    let params = SystemParams {
        lambda_a: 1.2,
        lambda_b: 1.0,
        lambda_c: 1.0,
        lambda_r: 0.4,
        k: 2,
        r: 1,
        s: 2,
        n_conf: 1,
    };
    let (space, ss) = solve_adaptive(&params, &SolveOptions::default()).unwrap();
    let m = metrics(&ss, &space, &params);
    let chain_served_fraction =
        (params.lambda_a - params.lambda_r * m.p_pending_nonempty) / params.lambda_a;

    let stats = run(&SimConfig::new(params, 400_000, 33)).unwrap().stats;
    let sim_served_fraction = stats.counts.serviced as f64 / stats.counts.arrived as f64;
    assert!(
        (sim_served_fraction - chain_served_fraction).abs() < 5e-3,
        "served fraction {} vs chain {}",
        sim_served_fraction,
        chain_served_fraction
    );
}
