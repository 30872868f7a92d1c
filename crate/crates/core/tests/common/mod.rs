//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use popchain::estimation::CharacteristicDistributionSet;
use popchain::ingestion::CellKey;
use popchain::matrix::SquareMatrix;
use popchain::state_model::{validate_config, Characteristic, OverflowPolicy, RawStateSpace, StateSpaceConfig, Triple};
use popchain::FittedModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three categories (0 outside), ages [0, 4), seniorities [0, 3) with
/// groups {0, 1} and {2}; every (age, seniority) pair is feasible.
pub fn toy_config(overflow: OverflowPolicy) -> StateSpaceConfig {
    validate_config(RawStateSpace {
        categories: vec!["0".into(), "1".into(), "2".into()],
        out_of_system: None,
        age_min: 0,
        age_max: 4,
        age_groups: vec![[0, 2], [2, 4]],
        seniority_max: 3,
        seniority_groups: vec![[0, 2], [2, 3]],
        working_age_min: -3,
        full_time_hours: 40.0,
        overflow,
        characteristics: vec![Characteristic { name: "s".into(), levels: vec!["x".into(), "y".into()] }],
    })
    .unwrap()
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> SquareMatrix {
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n {
        data.extend(random_simplex(rng, n));
    }
    SquareMatrix::from_row_major(n, data)
}

/// Random parameters on the toy space. Nobody joins the top seniority
/// group, so strict projections never run out of seniorities. The initial
/// distribution lives on ages `< max_initial_age`.
pub fn random_toy_model(seed: u64, overflow: OverflowPolicy, max_initial_age: i32) -> FittedModel {
    let cfg = toy_config(overflow);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = cfg.n_group_pairs();
    let annual = (0..groups).map(|_| random_stochastic(&mut rng, 2)).collect();
    let enter = (0..groups)
        .map(|g| {
            let top_seniority = g % cfg.n_seniority_groups() == 1;
            (0..cfg.n_categories())
                .map(|_| if top_seniority && overflow == OverflowPolicy::Strict { 0.0 } else { rng.random::<f64>() })
                .collect()
        })
        .collect();
    let hire_mix = (0..groups).map(|_| random_simplex(&mut rng, 2)).collect();
    let mut initial = vec![0.0; cfg.n_cells()];
    let cells: Vec<usize> = (0..cfg.n_cells()).filter(|&i| cfg.cell_triple(i).age < max_initial_age).collect();
    let w = random_simplex(&mut rng, cells.len());
    for (i, p) in cells.into_iter().zip(w) {
        initial[i] = p;
    }
    let mut chars = CharacteristicDistributionSet::default();
    for c in 1..cfg.n_categories() {
        for ag in 0..cfg.n_age_groups() {
            for sg in 0..cfg.n_seniority_groups() {
                let x = rng.random::<f64>();
                chars.dists.insert(
                    CellKey { category: c, age_group: ag, seniority_group: sg },
                    BTreeMap::from([(vec![0], x), (vec![1], 1.0 - x)]),
                );
            }
        }
    }
    FittedModel::from_parameters(cfg, 1000.0, 2020, initial, annual, enter, hire_mix, chars).unwrap()
}

fn group_of(cfg: &StateSpaceConfig, c: usize, e: i32, a: i32) -> usize {
    let (ag, sg) = cfg.locate_groups(&Triple::new(c, e, a));
    cfg.group_index(ag, sg)
}

/// Factor for moving from category `c0` (in group `g`) to `c1` within a
/// year, written out from the model parameters.
fn factor(m: &FittedModel, c0: usize, g: usize, c1: usize) -> f64 {
    let q1 = m.entry.enter[g][c0];
    if c1 == 0 {
        1.0 - q1
    } else if c0 == 0 {
        m.entry_categories.dists[g][c1 - 1] * q1
    } else {
        m.annual.matrices[g].get(c0 - 1, c1 - 1) * q1
    }
}

/// Probability of `target` after `n` years by explicit summation over every
/// category path `(c_0, ..., c_{n-1})`: seniority at step k is the target
/// seniority minus the in-system years still to come, age is the target age
/// minus the remaining years, and the path weight is the initial
/// probability times the product of one-year factors.
pub fn path_sum(m: &FittedModel, initial: &[f64], n: usize, target: &Triple) -> f64 {
    let cfg = &m.config;
    let nc = cfg.n_categories();
    let e0 = target.age - n as i32;
    if e0 < cfg.age_min() {
        return 0.0;
    }
    if n == 0 {
        return initial[cfg.cell_index(target)];
    }
    let mut total = 0.0;
    let mut path = vec![0usize; n];
    loop {
        // full category sequence c_0 .. c_n
        let mut cats = path.clone();
        cats.push(target.category);
        let mut sen = vec![0i32; n + 1];
        sen[n] = target.seniority;
        for k in (0..n).rev() {
            sen[k] = sen[k + 1] - i32::from(cats[k + 1] != 0);
        }
        if sen[0] >= 0 && sen.iter().all(|&a| a < cfg.seniority_max()) {
            let mut w = initial[cfg.cell_index(&Triple::new(cats[0], e0, sen[0]))];
            for k in 0..n {
                if w == 0.0 {
                    break;
                }
                let g = group_of(cfg, cats[k], e0 + k as i32, sen[k]);
                w *= factor(m, cats[k], g, cats[k + 1]);
            }
            total += w;
        }
        // next path in lexicographic order
        let mut i = 0;
        loop {
            if i == n {
                return total;
            }
            path[i] += 1;
            if path[i] < nc {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Forward scatter with top-age / top-seniority clamping, written
/// independently of the library's gather.
pub fn scatter_absorb(m: &FittedModel, d: &[f64]) -> Vec<f64> {
    let cfg = &m.config;
    let mut out = vec![0.0; d.len()];
    for (i, &p) in d.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let t = cfg.cell_triple(i);
        let g = group_of(cfg, t.category, t.age, t.seniority);
        let age = (t.age + 1).min(cfg.age_max() - 1);
        for c1 in 0..cfg.n_categories() {
            let sen = if c1 == 0 { t.seniority } else { (t.seniority + 1).min(cfg.seniority_max() - 1) };
            out[cfg.cell_index(&Triple::new(c1, age, sen))] += p * factor(m, t.category, g, c1);
        }
    }
    out
}

/// `sum_t p_t * (M^t)(i, j)` for t = 1..=len(pmf), enumerating every
/// month-by-month path.
pub fn annualize_by_paths(m: &SquareMatrix, pmf: &[f64]) -> SquareMatrix {
    let n = m.dim();
    let mut out = SquareMatrix::zeros(n);
    for (t0, &p) in pmf.iter().enumerate() {
        let t = t0 + 1;
        for i in 0..n {
            let mut stack = vec![(i, 1usize, 1.0)];
            while let Some((at, step, w)) = stack.pop() {
                for next in 0..n {
                    let w2 = w * m.get(at, next);
                    if step == t {
                        out.set(i, next, out.get(i, next) + p * w2);
                    } else {
                        stack.push((next, step + 1, w2));
                    }
                }
            }
        }
    }
    out
}

/// `sum_t p_t * M^t` with powers by naive triple loops.
pub fn annualize_by_powers(m: &SquareMatrix, pmf: &[f64]) -> SquareMatrix {
    let n = m.dim();
    let mut power: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut out = SquareMatrix::zeros(n);
    for &p in pmf {
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    next[i][j] += power[i][k] * m.get(k, j);
                }
            }
        }
        power = next;
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, out.get(i, j) + p * power[i][j]);
            }
        }
    }
    out
}
