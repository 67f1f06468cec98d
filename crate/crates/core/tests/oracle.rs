mod common;

use common::{brute_elbo, brute_responsibilities, max_rel_err, rel_err, update_discrepancy, Instance};
use invdir_mix::inference::{compute_expectations, r_tilde, surrogate_elbo, update_responsibilities};
use invdir_mix::PriorConfig;

const CASES: u64 = 200;

#[test]
fn closed_form_updates_match_brute_force() {
    let prior = PriorConfig::default();
    for seed in 0..CASES {
        let inst = Instance::random(seed, 10, 3, 3);
        let err = update_discrepancy(&inst, &prior);
        assert!(err < 1e-10, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn updates_match_under_other_hyperparameters() {
    let prior = PriorConfig { s0: 2.5, t0: 0.3, u0: 0.7, v0: 1.9, ..PriorConfig::default() };
    for seed in 0..CASES {
        let inst = Instance::random(1000 + seed, 10, 3, 3);
        let err = update_discrepancy(&inst, &prior);
        assert!(err < 1e-10, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn responsibilities_match_brute_force() {
    for seed in 0..CASES {
        let inst = Instance::random(2000 + seed, 10, 3, 3);
        let cache = compute_expectations(&inst.posterior());
        let r = update_responsibilities(&inst.dataset(), &cache);
        let brute = brute_responsibilities(&inst);
        let err = max_rel_err(r.iter(), brute.iter().flatten());
        assert!(err < 1e-10, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn r_tilde_matches_brute_force() {
    for seed in 0..CASES {
        let inst = Instance::random(3000 + seed, 10, 3, 3);
        let cache = compute_expectations(&inst.posterior());
        for m in 0..inst.m() {
            let err = rel_err(r_tilde(&cache, m), inst.r_tilde(m));
            assert!(err < 1e-10, "seed {seed}, component {m}: relative error {err:e}");
        }
    }
}

#[test]
fn surrogate_elbo_matches_brute_force() {
    let prior = PriorConfig::default();
    for seed in 0..CASES {
        let inst = Instance::random(4000 + seed, 10, 3, 3);
        let post = inst.posterior();
        let cache = compute_expectations(&post);
        let value = surrogate_elbo(&inst.dataset(), &post, &cache, &prior);
        let brute = brute_elbo(&inst, &prior);
        // Terms of both signs cancel, so compare against the largest scale involved.
        let err = (value - brute).abs() / brute.abs().max(1.0);
        assert!(err < 1e-9, "seed {seed}: {value} vs {brute}");
    }
}

#[test]
fn observation_at_the_first_mode_of_model_a_belongs_to_it() {
    // Near-degenerate factors put every expectation at the Model A truth with π = [0.5, 0.5].
    let big = 1e8;
    let truth = [[16.0, 8.0, 6.0, 2.0], [8.0, 12.0, 15.0, 18.0]];
    // Mode of component 1: (α_d − 1) / (α_{D+1} + D).
    let mode: Vec<f64> = truth[0][..3].iter().map(|a| (a - 1.0) / (truth[0][3] + 3.0)).collect();
    let inst = Instance {
        x: vec![mode],
        r: vec![vec![0.5, 0.5]],
        g: vec![big, big],
        h: vec![big, 1.0],
        s: vec![1.0, 1.0],
        t: vec![1.0, 1.0],
        u: truth.iter().map(|row| row.iter().map(|a| a * big).collect()).collect(),
        v: vec![vec![big; 4]; 2],
    };
    let cache = compute_expectations(&inst.posterior());
    let r = update_responsibilities(&inst.dataset(), &cache);
    let brute = brute_responsibilities(&inst);
    assert!(r[[0, 0]] > 0.99, "r = {r}");
    assert!(rel_err(r[[0, 0]], brute[0][0]) < 1e-10);
}
