mod common;

use popchain::estimation::{annualize_matrix, StoppingTimePmf};
use popchain::ingestion::YearMonth;
use popchain::montecarlo::{multinomial_draw, stream_rng, summarize_values};
use popchain::projection::{distributions_through, group_probabilities};
use popchain::state_model::OverflowPolicy;
use popchain::FittedModel;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pmf_strategy() -> impl Strategy<Value = [f64; 12]> {
    prop::array::uniform12(0.0f64..1.0).prop_filter_map("positive mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-3).then(|| w.map(|x| x / s))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn absorb_projection_conserves_mass(seed in any::<u64>(), years in 1usize..8) {
        let model = common::random_toy_model(seed, OverflowPolicy::Absorb, 4);
        for d in distributions_through(&model, years).unwrap() {
            prop_assert!(d.probs.iter().all(|&p| p >= 0.0));
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            let g = group_probabilities(&d, &model.config);
            prop_assert!((g.total() - d.total()).abs() < 1e-12);
        }
    }

    #[test]
    fn strict_projection_matches_path_sums(seed in any::<u64>(), n in 1usize..=3) {
        let model = common::random_toy_model(seed, OverflowPolicy::Strict, 4 - n as i32);
        let d = &distributions_through(&model, n).unwrap()[n];
        for i in 0..model.config.n_cells() {
            let t = model.config.cell_triple(i);
            prop_assert!((d.probs[i] - common::path_sum(&model, &model.initial.probs, n, &t)).abs() < 1e-12);
        }
    }

    #[test]
    fn annualized_matrices_are_stochastic(seed in any::<u64>(), dim in 1usize..6, pmf in pmf_strategy()) {
        let m = common::random_stochastic(&mut ChaCha8Rng::seed_from_u64(seed), dim);
        let a = annualize_matrix(&m, &StoppingTimePmf::new(pmf).unwrap());
        for r in 0..dim {
            prop_assert!(a.row(r).iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
            prop_assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multinomial_draws_sum_to_trials(
        weights in prop::collection::vec(0.0f64..1.0, 1..12),
        trials in 0u64..5000,
        seed in any::<u64>(),
        iteration in any::<u32>(),
    ) {
        let s: f64 = weights.iter().sum();
        prop_assume!(s > 1e-6);
        let probs: Vec<f64> = weights.iter().map(|w| w / s).collect();
        let d = multinomial_draw(trials, &probs, &mut stream_rng(seed, 1, iteration)).unwrap();
        prop_assert_eq!(d.iter().sum::<u64>(), trials);
        for (x, p) in d.iter().zip(&probs) {
            if *p == 0.0 {
                prop_assert_eq!(*x, 0);
            }
        }
    }

    #[test]
    fn summaries_are_ordered(values in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let s = summarize_values(&values);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.p05 && s.p05 <= s.p50 && s.p50 <= s.p95 && s.p95 <= hi);
        prop_assert!(s.mean >= lo - 1e-6 && s.mean <= hi + 1e-6);
        prop_assert!(s.sd >= 0.0);
        for q in [s.p05, s.p50, s.p95] {
            prop_assert!(values.contains(&q));
        }
    }

    #[test]
    fn year_month_ordinals_round_trip(year in 1900i32..2200, month in 1u32..=12) {
        let ym = YearMonth::new(year, month);
        prop_assert_eq!(YearMonth::from_ordinal(ym.ordinal()), ym);
        prop_assert_eq!(YearMonth::from_ordinal(ym.ordinal() + 1).ordinal(), ym.ordinal() + 1);
    }

    #[test]
    fn model_files_round_trip_exactly(seed in any::<u64>()) {
        let model = common::random_toy_model(seed, OverflowPolicy::Absorb, 4);
        let back = FittedModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back.initial.probs, &model.initial.probs);
        prop_assert_eq!(&back.entry.enter, &model.entry.enter);
        prop_assert_eq!(back.to_json().unwrap(), model.to_json().unwrap());
    }
}
