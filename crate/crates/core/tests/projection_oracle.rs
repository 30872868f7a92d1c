mod common;

use popchain::projection::{
    distribution_at_year, distributions_through, expected_populations, group_probabilities, initial_distribution,
    one_step_triple_probability,
};
use popchain::state_model::OverflowPolicy;
use popchain::Error;

#[test]
fn strict_projection_matches_path_sums() {
    for seed in 0..5 {
        for n in 1..=3usize {
            let model = common::random_toy_model(seed * 10 + n as u64, OverflowPolicy::Strict, 4 - n as i32);
            let d = distribution_at_year(&model, n).unwrap();
            for i in 0..model.config.n_cells() {
                let t = model.config.cell_triple(i);
                let want = common::path_sum(&model, &model.initial.probs, n, &t);
                assert!((d.probs[i] - want).abs() < 1e-12, "seed {seed} n {n} {t:?}: {} vs {want}", d.probs[i]);
            }
        }
    }
}

#[test]
fn absorb_projection_matches_forward_scatter() {
    for seed in 0..5 {
        let model = common::random_toy_model(100 + seed, OverflowPolicy::Absorb, 4);
        let mut want = model.initial.probs.clone();
        for d in distributions_through(&model, 6).unwrap().iter().skip(1) {
            want = common::scatter_absorb(&model, &want);
            for (a, b) in d.probs.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((d.total() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn interior_kernel_rows_are_distributions() {
    let model = common::random_toy_model(3, OverflowPolicy::Absorb, 4);
    let cfg = &model.config;
    for i in 0..cfg.n_cells() {
        let from = cfg.cell_triple(i);
        if from.age == cfg.age_max() - 1 || from.seniority == cfg.seniority_max() - 1 {
            continue;
        }
        let s: f64 = (0..cfg.n_cells()).map(|j| one_step_triple_probability(&from, &cfg.cell_triple(j), &model)).sum();
        assert!((s - 1.0).abs() < 1e-12, "{from:?}: {s}");
    }
}

#[test]
fn strict_projection_refuses_to_run_past_the_last_age() {
    let model = common::random_toy_model(4, OverflowPolicy::Strict, 2);
    assert!(distribution_at_year(&model, 2).is_ok());
    assert!(matches!(distribution_at_year(&model, 3), Err(Error::Horizon(_))));
}

#[test]
fn year_zero_rows_aggregate_the_initial_distribution() {
    let model = common::random_toy_model(8, OverflowPolicy::Absorb, 4);
    let d0 = initial_distribution(&model);
    let table = group_probabilities(&d0, &model.config);
    let (rows, unsplit) = expected_populations(&table, &model);
    assert_eq!(unsplit, 0);
    let total: f64 = rows.iter().filter(|r| r.tuple.is_none()).map(|r| r.expected_count).sum();
    assert!((total - model.total_population).abs() < 1e-9);
    for r in rows.iter().filter(|r| r.tuple.is_none()) {
        let direct: f64 = d0
            .probs
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let t = model.config.cell_triple(*i);
                let (ag, sg) = model.config.locate_groups(&t);
                t.category == r.key.category && ag == r.key.age_group && sg == r.key.seniority_group
            })
            .map(|(_, p)| p)
            .sum();
        assert!((r.probability - direct).abs() < 1e-15);
    }
}
