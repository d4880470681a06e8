//! Acceptance battery.
//!
//! Eleven numbered criteria, each at its stated tolerance, each printing one
//! pass/fail line (run with `--nocapture` to see them on success). The first
//! ten map onto the verification battery's property groups over the full
//! documented grid; the eleventh is the negative control, which corrupts the
//! analyzed mix sequence and must make the decay-identity group fail.

use vi_spectral::suite::{run_suite, GridSpec, PropertyOutcome, SuiteConfig};

struct CriterionResult {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn from_group(id: usize, name: &'static str, outcome: &PropertyOutcome) -> CriterionResult {
    let mut detail = format!(
        "passed={} failed={} skipped={}",
        outcome.passed, outcome.failed, outcome.skipped
    );
    if let Some(first) = outcome.sample_failures.first() {
        detail.push_str(&format!("; first failure: {first}"));
    }
    CriterionResult {
        id,
        name,
        passed: outcome.ok(),
        detail,
    }
}

#[test]
fn acceptance_criteria() {
    let config = SuiteConfig::default();
    let report = run_suite(&config).expect("battery infrastructure");
    let group = |name: &str| report.outcome(name).expect("known group");

    let mut results = vec![
        from_group(1, "oracle equivalence (1e-8)", group("oracle_equivalence")),
        from_group(
            2,
            "sandwich bounds, blend recovery, mix exactness (1e-9)",
            group("sandwich_bounds"),
        ),
        from_group(
            3,
            "decay-identity equality and gain positivity (1e-9 rel)",
            group("theorem_equality"),
        ),
        from_group(
            4,
            "horizon decay bound with lambda = min gain (1e-8 rel)",
            group("corollary_decay"),
        ),
        from_group(
            5,
            "consensus geometric law incl. 3*0.95^10 closed form (1e-12)",
            group("consensus_dynamics"),
        ),
        from_group(
            6,
            "quadratic-form identities, 1000 draws each (1e-11 rel)",
            group("lemma_identities"),
        ),
        from_group(
            7,
            "gain >= lambda2 and route agreement (1e-9 / 1e-10 rel)",
            group("rayleigh_bound"),
        ),
        from_group(
            8,
            "lambda2 scaling bound incl. 100/9 vs 20/9 case (1e-9)",
            group("lambda_bound_lemma"),
        ),
        from_group(
            9,
            "probability sequence validity (1e-12 / 1e-11)",
            group("aps_validity"),
        ),
        from_group(
            10,
            "sup-norm contraction at gamma_alpha (1e-8)",
            group("inf_norm_contraction"),
        ),
    ];

    // Negative control: a 1e-3 corruption of one mix entry must break the
    // decay-identity group.
    let fault_config = SuiteConfig {
        base_seed: config.base_seed,
        grid: GridSpec::quick(),
        inject_fault: true,
    };
    let fault_report = run_suite(&fault_config).expect("battery infrastructure");
    let theorem = fault_report
        .outcome("theorem_equality")
        .expect("known group");
    results.push(CriterionResult {
        id: 11,
        name: "negative control: fault injection trips the decay check",
        passed: theorem.failed > 0,
        detail: format!(
            "corrupted runs: passed={} failed={} (failures expected)",
            theorem.passed, theorem.failed
        ),
    });

    let mut all_ok = true;
    for result in &results {
        println!(
            "criterion {:2} {}: {} ({})",
            result.id,
            if result.passed { "PASS" } else { "FAIL" },
            result.name,
            result.detail
        );
        all_ok &= result.passed;
    }
    println!(
        "acceptance: {} of {} criteria passed over {} grid runs (seed {})",
        results.iter().filter(|r| r.passed).count(),
        results.len(),
        report.runs,
        config.base_seed
    );
    assert!(
        all_ok,
        "acceptance failures: {:?}",
        results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| format!("criterion {} ({}): {}", r.id, r.name, r.detail))
            .collect::<Vec<_>>()
    );
}
