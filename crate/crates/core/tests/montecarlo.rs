mod common;

use popchain::montecarlo::{multinomial_draw, plan, simulate_projection, stream_rng, SimulationConfig};
use popchain::state_model::OverflowPolicy;
use rand_distr::{ChiSquared, Distribution};

/// Wilson-Hilferty approximation of the chi-square quantile at normal
/// score `z`.
fn chi_square_upper(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

#[test]
fn single_cell_counts_fit_the_binomial() {
    // Pool one cell's draws into bins and compare with its binomial pmf.
    let probs = [0.1, 0.25, 0.4, 0.25];
    let trials = 20u64;
    let iterations = 20_000u32;
    let mut counts = vec![0u64; trials as usize + 1];
    for i in 0..iterations {
        let d = multinomial_draw(trials, &probs, &mut stream_rng(7, 1, i)).unwrap();
        counts[d[2] as usize] += 1;
    }
    let p = probs[2];
    let binom = |k: u64| {
        let mut c = 1.0;
        for j in 0..k {
            c *= (trials - j) as f64 / (j + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((trials - k) as i32)
    };
    // merge tails so that every expected count is at least 5
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for k in 0..=trials {
        obs += counts[k as usize] as f64;
        exp += binom(k) * f64::from(iterations);
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (bins.len() - 1) as f64;
    assert!(stat < chi_square_upper(df, 3.09), "chi2 {stat} with {df} df");
}

#[test]
fn wilson_hilferty_is_close() {
    // sanity check of the approximation against sampled quantiles
    let dist = ChiSquared::new(10.0).unwrap();
    let mut rng = stream_rng(1, 1, 0);
    let mut xs: Vec<f64> = (0..200_000).map(|_| dist.sample(&mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let q999 = xs[(0.999 * xs.len() as f64) as usize];
    assert!((chi_square_upper(10.0, 3.09) - q999).abs() / q999 < 0.03);
}

#[test]
fn cell_means_track_expected_counts() {
    let model = common::random_toy_model(31, OverflowPolicy::Absorb, 4);
    let p = plan(&model, 4).unwrap();
    let sim = SimulationConfig { iterations: 4000, seed: 3 };
    let out = simulate_projection(&p.inputs, 1000, &sim, None).unwrap();
    for (input, o) in p.inputs.iter().zip(&out) {
        for (v, s) in input.probs.iter().zip(&o.cells) {
            let var = 1000.0 * v * (1.0 - v);
            assert!((s.mean - 1000.0 * v).abs() <= 4.0 * (var / 4000.0).sqrt() + 1e-9);
            if *v > 0.05 {
                assert!((s.sd * s.sd / var - 1.0).abs() < 0.15, "{} vs {var}", s.sd * s.sd);
            }
        }
        for (set, s) in input.sums.iter().zip(&o.sums) {
            let v: f64 = set.iter().map(|&i| input.probs[i]).sum();
            let var = 1000.0 * v * (1.0 - v);
            assert!((s.mean - 1000.0 * v).abs() <= 4.0 * (var / 4000.0).sqrt() + 1e-9);
        }
    }
}

#[cfg(feature = "parallel")]
#[test]
fn results_do_not_depend_on_thread_count() {
    let model = common::random_toy_model(32, OverflowPolicy::Absorb, 4);
    let p = plan(&model, 3).unwrap();
    let sim = SimulationConfig { iterations: 1500, seed: 9 };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut dump = Vec::new();
            let out = simulate_projection(&p.inputs, 1000, &sim, Some(&mut dump)).unwrap();
            (out, dump)
        })
    };
    let one = run(1);
    for t in [2, 3, 8] {
        assert_eq!(run(t), one);
    }
}

#[test]
fn different_seeds_give_different_draws() {
    let model = common::random_toy_model(33, OverflowPolicy::Absorb, 4);
    let p = plan(&model, 1).unwrap();
    let a = simulate_projection(&p.inputs, 1000, &SimulationConfig { iterations: 200, seed: 1 }, None).unwrap();
    let b = simulate_projection(&p.inputs, 1000, &SimulationConfig { iterations: 200, seed: 2 }, None).unwrap();
    assert_ne!(a, b);
}
