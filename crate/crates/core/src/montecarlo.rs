//! Monte Carlo simulation of projected head counts.
//!
//! Each projection year is sampled on its own: an iteration draws one
//! multinomial vector of `I0` people over the year's cells. Years are not
//! coupled into trajectories, so per-year marginals are exact but the draws
//! for consecutive years are independent of each other.
//!
//! Randomness: iteration `i` of year `n` uses a ChaCha8 generator seeded
//! from the master seed with stream `(n << 32) | i`, so results do not
//! depend on how iterations are scheduled across threads.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::ingestion::CellKey;
use crate::model::FittedModel;
use crate::projection::{distributions_through, expected_populations, group_probabilities, ProjectionRow};

const SUM_TOLERANCE: f64 = 1e-9;
const CHUNK: u32 = 512;
pub const DUMP_MAGIC: &[u8; 4] = b"PCMC";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub iterations: u32,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { iterations: 10_000, seed: 0 }
    }
}

/// Generator for one (year, iteration) pair.
pub fn stream_rng(seed: u64, year: usize, iteration: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((year as u64) << 32) | u64::from(iteration));
    rng
}

/// Multinomial(`trials`, `probs`) as a chain of conditional binomials in
/// ascending cell order. Cells with zero probability get 0 and consume no
/// randomness; the last positive cell takes whatever is left.
pub fn multinomial_draw<R: Rng + ?Sized>(trials: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::Simulation(format!("cell probability {p} is not a non-negative number")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Simulation(format!("cell probabilities sum to {total}, not 1")));
    }
    let mut out = vec![0u64; probs.len()];
    let Some(last) = probs.iter().rposition(|&p| p > 0.0) else {
        return Ok(out);
    };
    // tail[i] = probability mass of cells i.. ; summed from the right once.
    let mut tail = vec![0.0; probs.len() + 1];
    for i in (0..probs.len()).rev() {
        tail[i] = tail[i + 1] + probs[i];
    }
    let mut left = trials;
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if p == 0.0 {
            continue;
        }
        if i == last {
            out[i] = left;
            break;
        }
        let q = (p / tail[i]).clamp(0.0, 1.0);
        let x =
            Binomial::new(left, q).map_err(|e| Error::Simulation(format!("binomial({left}, {q}): {e}")))?.sample(rng);
        out[i] = x;
        left -= x;
    }
    Ok(out)
}

/// Mean, sample standard deviation and nearest-rank quantiles.
///
/// The q-quantile is the `ceil(q * n)`-th smallest value (at least the
/// first), so on ties between two order statistics the lower one wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
}

fn nearest_rank(q: f64, n: u64) -> u64 {
    ((q * n as f64).ceil() as u64).clamp(1, n)
}

/// Counts of each integer value, in value order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram(pub BTreeMap<u64, u64>);

impl Histogram {
    pub fn add(&mut self, v: u64) {
        *self.0.entry(v).or_default() += 1;
    }

    pub fn len(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn quantile(&self, q: f64) -> f64 {
        let rank = nearest_rank(q, self.len());
        let mut seen = 0;
        for (&v, &c) in &self.0 {
            seen += c;
            if seen >= rank {
                return v as f64;
            }
        }
        unreachable!("rank within histogram size")
    }

    pub fn summary(&self) -> Summary {
        let n = self.len();
        assert!(n > 0, "summary of an empty histogram");
        let mean = self.0.iter().map(|(&v, &c)| v as f64 * c as f64).sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss: f64 = self.0.iter().map(|(&v, &c)| c as f64 * (v as f64 - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, sd, p05: self.quantile(0.05), p50: self.quantile(0.50), p95: self.quantile(0.95) }
    }
}

/// Same statistics for real-valued draws.
pub fn summarize_values(values: &[f64]) -> Summary {
    let n = values.len();
    assert!(n > 0, "summary of no draws");
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |q: f64| sorted[nearest_rank(q, n as u64) as usize - 1];
    Summary { mean, sd, p05: at(0.05), p50: at(0.50), p95: at(0.95) }
}

/// What to sample and record for one projection year.
#[derive(Debug, Clone, Default)]
pub struct YearInput {
    /// Projection year, 1-based; also selects the random streams.
    pub year: usize,
    /// Probability of each sampled cell.
    pub probs: Vec<f64>,
    /// Integer totals over sets of cells, summarised alongside the cells.
    pub sums: Vec<Vec<usize>>,
    /// Weighted totals `sum(count * weight)`, e.g. costs.
    pub weighted: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearOutput {
    pub year: usize,
    pub cells: Vec<Summary>,
    pub sums: Vec<Summary>,
    pub weighted: Vec<Summary>,
}

fn draw_chunk(input: &YearInput, trials: u64, seed: u64, range: std::ops::Range<u32>) -> Result<Vec<Vec<u64>>> {
    let one = |i: u32| multinomial_draw(trials, &input.probs, &mut stream_rng(seed, input.year, i));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(one).collect()
    }
}

/// Sample one year and summarise it. Draws are optionally appended to
/// `dump` as little-endian u32 counts, iteration by iteration.
pub fn simulate_year(
    input: &YearInput,
    trials: u64,
    sim: &SimulationConfig,
    mut dump: Option<&mut dyn Write>,
) -> Result<YearOutput> {
    if sim.iterations == 0 {
        return Err(Error::Simulation("at least one iteration is required".into()));
    }
    if dump.is_some() && trials > u64::from(u32::MAX) {
        return Err(Error::Simulation("population too large for the raw dump format".into()));
    }
    let mut cells = vec![Histogram::default(); input.probs.len()];
    let mut sums = vec![Histogram::default(); input.sums.len()];
    let mut weighted = vec![Vec::with_capacity(sim.iterations as usize); input.weighted.len()];

    let mut start = 0;
    while start < sim.iterations {
        let end = start.saturating_add(CHUNK).min(sim.iterations);
        for draw in draw_chunk(input, trials, sim.seed, start..end)? {
            debug_assert_eq!(draw.iter().sum::<u64>(), trials);
            for (h, &x) in cells.iter_mut().zip(&draw) {
                h.add(x);
            }
            for (h, set) in sums.iter_mut().zip(&input.sums) {
                h.add(set.iter().map(|&i| draw[i]).sum());
            }
            for (v, terms) in weighted.iter_mut().zip(&input.weighted) {
                v.push(terms.iter().map(|&(i, w)| draw[i] as f64 * w).sum());
            }
            if let Some(out) = dump.as_deref_mut() {
                let mut buf = Vec::with_capacity(draw.len() * 4);
                for &x in &draw {
                    buf.extend_from_slice(&(x as u32).to_le_bytes());
                }
                out.write_all(&buf).map_err(|e| Error::io("writing raw draws", e))?;
            }
        }
        start = end;
    }
    Ok(YearOutput {
        year: input.year,
        cells: cells.iter().map(Histogram::summary).collect(),
        sums: sums.iter().map(Histogram::summary).collect(),
        weighted: weighted.iter().map(|v| summarize_values(v)).collect(),
    })
}

/// Header of the raw-draws file: magic `PCMC`, then u32 version, years,
/// iterations and cells per draw, all little-endian. The body is
/// `years * iterations * cells` u32 counts, year-major then iteration-major.
pub fn write_dump_header<W: Write + ?Sized>(out: &mut W, years: u32, iterations: u32, cells: u32) -> Result<()> {
    let mut buf = Vec::with_capacity(20);
    buf.extend_from_slice(DUMP_MAGIC);
    for v in [DUMP_VERSION, years, iterations, cells] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(|e| Error::io("writing raw draws", e))
}

/// Years must run 1, 2, ... without gaps.
pub fn simulate_projection(
    inputs: &[YearInput],
    trials: u64,
    sim: &SimulationConfig,
    mut dump: Option<&mut dyn Write>,
) -> Result<Vec<YearOutput>> {
    if inputs.is_empty() {
        return Err(Error::Simulation("no projection year to simulate".into()));
    }
    for (k, input) in inputs.iter().enumerate() {
        if input.year != k + 1 {
            return Err(Error::Simulation(format!("cell probabilities for year {} are missing", k + 1)));
        }
    }
    if let Some(out) = dump.as_deref_mut() {
        let cells = inputs[0].probs.len();
        if inputs.iter().any(|i| i.probs.len() != cells) {
            return Err(Error::Simulation("raw dump needs the same cells every year".into()));
        }
        write_dump_header(out, inputs.len() as u32, sim.iterations, cells as u32)?;
    }
    let mut out = Vec::with_capacity(inputs.len());
    for input in inputs {
        let sink: Option<&mut dyn Write> = match dump {
            Some(ref mut w) => Some(&mut **w),
            None => None,
        };
        out.push(simulate_year(input, trials, sim, sink)?);
    }
    Ok(out)
}

/// Total population as a whole number of people.
pub fn integer_population(i0: f64) -> Result<u64> {
    if !(i0 >= 0.0) || !i0.is_finite() {
        return Err(Error::Simulation(format!("population {i0} cannot be simulated")));
    }
    let n = i0.round();
    if (n - i0).abs() > 1e-6 {
        log::warn!("total population {i0} is not a whole number; simulating {n} people");
    }
    Ok(n as u64)
}

/// Which projection rows are sampled directly and which are totals of
/// sampled rows.
#[derive(Debug, Clone, PartialEq)]
pub enum RowRole {
    /// Index into the sampled cells.
    Cell(usize),
    /// Index into the per-year sums (an aggregate row split by characteristics).
    Sum(usize),
}

/// Sampled cells are the characteristic tuples of split cells plus the
/// aggregates of cells that are not split; the aggregates of split cells are
/// recovered as sums.
pub fn layout(rows: &[ProjectionRow]) -> (Vec<RowRole>, Vec<Vec<usize>>) {
    let mut split_keys = std::collections::BTreeSet::new();
    for r in rows {
        if r.tuple.is_some() {
            split_keys.insert(r.key);
        }
    }
    let mut roles = Vec::with_capacity(rows.len());
    let mut n_cells = 0;
    let mut members: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
    for r in rows {
        if r.tuple.is_some() || !split_keys.contains(&r.key) {
            if r.tuple.is_some() {
                members.entry(r.key).or_default().push(n_cells);
            }
            roles.push(RowRole::Cell(n_cells));
            n_cells += 1;
        } else {
            roles.push(RowRole::Sum(usize::MAX));
        }
    }
    let mut sums = Vec::new();
    for (role, r) in roles.iter_mut().zip(rows) {
        if let RowRole::Sum(slot) = role {
            *slot = sums.len();
            sums.push(members.remove(&r.key).unwrap_or_default());
        }
    }
    (roles, sums)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub row: ProjectionRow,
    pub summary: Summary,
}

/// Projection rows for years `1..=years`, with the sampled cells and sums
/// for each.
pub struct SimulationPlan {
    pub rows: Vec<Vec<ProjectionRow>>,
    pub roles: Vec<Vec<RowRole>>,
    pub inputs: Vec<YearInput>,
}

pub fn plan(model: &FittedModel, years: usize) -> Result<SimulationPlan> {
    if years == 0 {
        return Err(Error::Horizon("simulation needs at least one year".into()));
    }
    let dists = distributions_through(model, years)?;
    let mut plan = SimulationPlan { rows: Vec::new(), roles: Vec::new(), inputs: Vec::new() };
    for d in &dists[1..] {
        let (rows, _) = expected_populations(&group_probabilities(d, &model.config), model);
        let (roles, sums) = layout(&rows);
        let mut probs = Vec::new();
        for (role, r) in roles.iter().zip(&rows) {
            if matches!(role, RowRole::Cell(_)) {
                probs.push(r.probability.max(0.0));
            }
        }
        plan.inputs.push(YearInput { year: d.year, probs, sums, weighted: Vec::new() });
        plan.rows.push(rows);
        plan.roles.push(roles);
    }
    Ok(plan)
}

/// Summaries attached to the projection rows they belong to.
pub fn attach(plan: &SimulationPlan, outputs: &[YearOutput]) -> Vec<SimulationRow> {
    let mut out = Vec::new();
    for ((rows, roles), o) in plan.rows.iter().zip(&plan.roles).zip(outputs) {
        for (r, role) in rows.iter().zip(roles) {
            let summary = match role {
                RowRole::Cell(i) => o.cells[*i],
                RowRole::Sum(i) => o.sums[*i],
            };
            out.push(SimulationRow { row: r.clone(), summary });
        }
    }
    out
}

pub const SIMULATION_HEADER: [&str; 10] =
    ["year", "category", "age_group", "seniority_group", "characteristic_tuple", "mean", "sd", "p05", "p50", "p95"];

pub fn write_simulation_csv<W: Write>(
    out: W,
    rows: &[SimulationRow],
    cfg: &crate::state_model::StateSpaceConfig,
    comments: &[String],
) -> Result<()> {
    let mut out = out;
    crate::projection::write_comment_lines(&mut out, comments).map_err(|e| Error::io("writing simulation", e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Model(format!("writing simulation CSV: {e}"));
    w.write_record(SIMULATION_HEADER).map_err(csv_err)?;
    for r in rows {
        let s = r.summary;
        w.write_record([
            r.row.year.to_string(),
            cfg.categories()[r.row.key.category].clone(),
            r.row.key.age_group.to_string(),
            r.row.key.seniority_group.to_string(),
            crate::projection::tuple_label(cfg, &r.row.tuple),
            s.mean.to_string(),
            s.sd.to_string(),
            s.p05.to_string(),
            s.p50.to_string(),
            s.p95.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("writing simulation", e))?;
    Ok(())
}
