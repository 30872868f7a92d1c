use std::collections::BTreeMap;

use popchain::estimation::StoppingTimePmf;
use popchain::finance::{profile_for, total_cost_gt, FinanceConfig, SalaryScale};
use popchain::fit;
use popchain::ingestion::{build_counts_with, build_reserve, Weighting, YearMonth};
use popchain::projection::{distribution_at_year, expected_populations, group_probabilities};
use popchain::report::{backtest, cost_report, relative_error, BacktestInput};
use popchain::synthetic::{generate, SyntheticTruth};

fn finance() -> FinanceConfig {
    popchain::config::RunConfig::load(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo/config.toml"),
    )
    .unwrap()
    .finance
}

fn scale() -> SalaryScale {
    SalaryScale(BTreeMap::from([(1, 650_000.0), (2, 900_000.0), (3, 1_250_000.0)]))
}

#[test]
fn backtest_expectations_equal_a_projection_of_the_truncated_fit() {
    let truth = SyntheticTruth::demo(6);
    let cfg = &truth.config;
    let panel = generate(&truth, YearMonth::new(2013, 1), 72, 40, 3).unwrap();
    let pmf = StoppingTimePmf::uniform();
    let (fin, sc) = (finance(), scale());
    let input = BacktestInput {
        records: &panel.records,
        reserve: &panel.reserve,
        config: cfg,
        weighting: Weighting::Workload,
        stopping_time: &pmf,
        finance: &fin,
        scale: &sc,
        split_year: 2017,
    };
    let report = backtest(&input, None).unwrap();

    let train: Vec<_> = panel.records.iter().filter(|r| r.calendar.year < 2017).cloned().collect();
    let cube = build_reserve(build_counts_with(&train, cfg, Weighting::Workload), &panel.reserve, cfg).unwrap();
    let model = fit(&cube, cfg, pmf.clone()).unwrap();
    assert_eq!(model.base_year, 2016);
    let totals: Vec<_> = report.totals().collect();
    assert_eq!(totals.len(), 2);
    for (n, t) in (1..=2).zip(totals) {
        assert_eq!(t.calendar_year, 2016 + n as i32);
        let (rows, _) =
            expected_populations(&group_probabilities(&distribution_at_year(&model, n).unwrap(), cfg), &model);
        let pop: f64 = rows.iter().filter(|r| r.tuple.is_none() && r.key.category > 0).map(|r| r.expected_count).sum();
        assert!((pop - t.expected_population).abs() < 1e-9 * pop.max(1.0));
        let mut cost = 0.0;
        for r in rows.iter().filter(|r| r.key.category > 0) {
            let split = rows.iter().any(|o| o.key == r.key && o.tuple.is_some());
            if r.tuple.is_some() || !split {
                let p = profile_for(r.key.category, r.tuple.as_deref(), &sc, &fin, cfg, model.weighting).unwrap();
                cost += r.expected_count * total_cost_gt(t.calendar_year, &p, &fin.schedule()).unwrap();
            }
        }
        assert!((cost - t.expected_cost).abs() < 1e-9 * cost);
        let e = relative_error(t.observed_cost, t.expected_cost).unwrap();
        assert!((e - (t.observed_cost - t.expected_cost).abs() / t.observed_cost).abs() < 1e-15);
    }
}

#[test]
fn cost_report_totals_add_up_and_simulation_tracks_them() {
    let truth = SyntheticTruth::demo(6);
    let cfg = &truth.config;
    let panel = generate(&truth, YearMonth::new(2012, 1), 48, 40, 8).unwrap();
    let cube = build_reserve(build_counts_with(&panel.records, cfg, Weighting::Workload), &panel.reserve, cfg).unwrap();
    let model = fit(&cube, cfg, StoppingTimePmf::uniform()).unwrap();
    let sim = popchain::montecarlo::SimulationConfig { iterations: 3000, seed: 4 };
    let rows = cost_report(&model, &finance(), &scale(), 3, Some(&sim)).unwrap();
    for year in 1..=3 {
        let cells: Vec<_> = rows.iter().filter(|r| r.year == year && r.key.is_some()).collect();
        let total = rows.iter().find(|r| r.year == year && r.key.is_none()).unwrap();
        let sum: f64 = cells.iter().map(|r| r.expected_cost).sum();
        assert!((sum - total.expected_cost).abs() < 1e-6 * sum);
        let s = total.simulated.unwrap();
        assert!(
            (s.mean - total.expected_cost).abs() < 4.0 * s.sd / (3000f64).sqrt(),
            "{} vs {}",
            s.mean,
            total.expected_cost
        );
    }
}

#[test]
fn estimators_recover_a_small_synthetic_truth_roughly() {
    let truth = SyntheticTruth::demo(40);
    let cfg = &truth.config;
    let panel = generate(&truth, YearMonth::new(1950, 1), 360, 60, 12).unwrap();
    let cube =
        build_reserve(build_counts_with(&panel.records, cfg, Weighting::Headcount), &panel.reserve, cfg).unwrap();
    let model = fit(&cube, cfg, StoppingTimePmf::uniform()).unwrap();
    for (i, (&p, &r)) in model.initial.probs.iter().zip(&panel.realized_in_system).enumerate() {
        if cfg.cell_triple(i).category > 0 {
            assert!((p - r).abs() < 1e-12);
        }
    }
    // well populated groups: ages 30-57, both seniority groups
    for g in 4..8 {
        for r in 0..3 {
            for c in 0..3 {
                assert!((model.monthly.matrices[g].get(r, c) - truth.monthly[g].get(r, c)).abs() < 0.01);
            }
        }
        for c in 1..4 {
            assert!((model.entry.enter[g][c] - truth.enter[g][c]).abs() < 0.05, "g{g} c{c}");
        }
    }
    for ag in 1..4 {
        let g = cfg.group_index(ag, 0);
        assert!((model.entry.enter[g][0] - truth.enter[g][0]).abs() < 0.02);
    }
}
