//! Expected runtime over seeded batches, paired Wilcoxon signed-rank tests,
//! Holm step-down correction and comparison tables.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::bitstring::{RngStream, Target};
use crate::error::{Error, Result};
use crate::ga::run_episode;
use crate::policy::Policy;

/// Outcome of one seeded run, as needed for ERT and pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub evaluations: u64,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErtSummary {
    pub n: usize,
    pub runs: usize,
    pub successes: usize,
    /// Total evaluations over all runs divided by the number of successes.
    /// Infinite when nothing succeeded (serialized as `null`).
    pub ert: f64,
    pub normalized_ert: f64,
    /// Sample standard deviation of evaluations over successful runs.
    pub std: f64,
    pub normalized_std: f64,
}

impl ErtSummary {
    pub fn from_runs(n: usize, runs: &[RunRecord]) -> Self {
        let total: u64 = runs.iter().map(|r| r.evaluations).sum();
        let ok: Vec<f64> = runs.iter().filter(|r| r.success).map(|r| r.evaluations as f64).collect();
        let successes = ok.len();
        let ert = if successes == 0 { f64::INFINITY } else { total as f64 / successes as f64 };
        let std = if successes < 2 {
            0.0
        } else {
            let mean = ok.iter().sum::<f64>() / successes as f64;
            (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (successes - 1) as f64).sqrt()
        };
        Self {
            n,
            runs: runs.len(),
            successes,
            ert,
            normalized_ert: ert / n as f64,
            std,
            normalized_std: std / n as f64,
        }
    }

    /// False when no run reached the optimum and the ERT is infinite.
    pub fn is_finite(&self) -> bool {
        self.successes > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub policy: String,
    pub summary: ErtSummary,
    /// One record per seed, in the order the seeds were given.
    pub runs: Vec<RunRecord>,
}

impl Evaluation {
    pub fn runtimes(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.evaluations as f64).collect()
    }
}

/// Run `policy` once per seed on OneMax of size `n`.
///
/// Seed `s` drives `RngStream::new(master_seed, s)` and a fresh clone of the
/// policy, so the result does not depend on `parallel` (0 = all cores).
pub fn evaluate_policy(
    policy: &dyn Policy,
    n: usize,
    master_seed: u64,
    seeds: &[u64],
    cutoff: u64,
    parallel: usize,
) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::contract("problem size must be at least 1"));
    }
    let mut seen = HashSet::with_capacity(seeds.len());
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::contract(format!("duplicate seed {dup}")));
    }
    let z = Target::all_ones(n);
    let one = |seed: u64| -> Result<RunRecord> {
        let mut p = policy.clone_box();
        let mut rng = RngStream::new(master_seed, seed);
        let r = run_episode(p.as_mut(), &z, cutoff, &mut rng, false)?;
        Ok(RunRecord { seed, evaluations: r.evaluations_total, success: r.success })
    };
    let runs = if parallel == 1 {
        seeds.iter().map(|&s| one(s)).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(|&s| one(s)).collect::<Result<Vec<_>>>())?
    };
    Ok(Evaluation { policy: policy.name(), summary: ErtSummary::from_runs(n, &runs), runs })
}

/// Seeds `0..count`.
pub fn seed_range(count: usize) -> Vec<u64> {
    (0..count as u64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every paired difference was zero.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences `a - b`.
    pub statistic: f64,
    pub p_value: f64,
    pub nonzero: usize,
    pub method: WilcoxonMethod,
}

pub const EXACT_LIMIT: usize = 25;

/// Two-sided paired signed-rank test. Exact for up to 25 nonzero pairs,
/// normal approximation (tie and continuity corrected) beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let ranked = signed_ranks(a, b)?;
    if ranked.is_empty() {
        return Ok(degenerate());
    }
    if ranked.len() <= EXACT_LIMIT {
        Ok(exact_test(&ranked))
    } else {
        Ok(normal_test(&ranked))
    }
}

/// Same test forced through the normal approximation.
pub fn wilcoxon_signed_rank_normal(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let ranked = signed_ranks(a, b)?;
    if ranked.is_empty() {
        return Ok(degenerate());
    }
    Ok(normal_test(&ranked))
}

fn degenerate() -> WilcoxonResult {
    WilcoxonResult { statistic: 0.0, p_value: 1.0, nonzero: 0, method: WilcoxonMethod::Degenerate }
}

/// Nonzero differences as (doubled average rank, positive?) pairs.
fn signed_ranks(a: &[f64], b: &[f64]) -> Result<Vec<(u64, bool)>> {
    if a.len() != b.len() {
        return Err(Error::contract(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("paired samples must be finite"));
    }
    d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut out = Vec::with_capacity(d.len());
    let mut i = 0;
    while i < d.len() {
        let mut j = i;
        while j + 1 < d.len() && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled to stay integral
        let doubled = (i + 1 + j + 1) as u64;
        out.extend(d[i..=j].iter().map(|v| (doubled, *v > 0.0)));
        i = j + 1;
    }
    Ok(out)
}

fn exact_test(ranked: &[(u64, bool)]) -> WilcoxonResult {
    let total: u64 = ranked.iter().map(|r| r.0).sum();
    let w2: u64 = ranked.iter().filter(|r| r.1).map(|r| r.0).sum();
    // counts[s] = number of sign assignments whose doubled positive-rank sum is s
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &(r, _) in ranked {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranked.len() as i32);
    let lower: f64 = counts[..=w2 as usize].iter().sum::<f64>() / all;
    let upper: f64 = counts[w2 as usize..].iter().sum::<f64>() / all;
    WilcoxonResult {
        statistic: w2 as f64 / 2.0,
        p_value: (2.0 * lower.min(upper)).min(1.0),
        nonzero: ranked.len(),
        method: WilcoxonMethod::Exact,
    }
}

fn normal_test(ranked: &[(u64, bool)]) -> WilcoxonResult {
    let m = ranked.len() as f64;
    let w: f64 = ranked.iter().filter(|r| r.1).map(|r| r.0 as f64 / 2.0).sum();
    let mean = m * (m + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < ranked.len() {
        let mut j = i;
        while j + 1 < ranked.len() && ranked[j + 1].0 == ranked[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_term / 48.0;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    WilcoxonResult { statistic: w, p_value, nonzero: ranked.len(), method: WilcoxonMethod::Normal }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    pub reject: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Holm step-down; outputs are in the input order.
pub fn holm_bonferroni(p_values: &[f64], level: f64) -> Result<HolmResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::contract(format!("level must lie in (0, 1), got {level}")));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::contract("p-values must lie in [0, 1]"));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut reject = vec![false; m];
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    let mut stopped = false;
    for (rank, &i) in order.iter().enumerate() {
        let k = (m - rank) as f64;
        running = running.max((k * p_values[i]).min(1.0));
        adjusted[i] = running;
        if !stopped && p_values[i] <= level / k {
            reject[i] = true;
        } else {
            stopped = true;
        }
    }
    Ok(HolmResult { reject, adjusted })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub policy: String,
    pub summary: ErtSummary,
    pub best: bool,
    /// Not significantly different from the best (after correction).
    pub not_significant: bool,
    pub p_value: Option<f64>,
    pub adjusted_p: Option<f64>,
    pub runtimes: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub n: usize,
    pub cells: Vec<TableCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub level: f64,
    pub policies: Vec<String>,
    pub columns: Vec<TableColumn>,
}

/// Evaluate every policy at every `n` on the same seeds and mark the table.
pub fn comparison_table(
    policies: &[Box<dyn Policy>],
    ns: &[usize],
    master_seed: u64,
    seeds: &[u64],
    cutoff: impl Fn(usize) -> u64,
    level: f64,
    parallel: usize,
) -> Result<ComparisonTable> {
    let mut grid = Vec::with_capacity(ns.len());
    for &n in ns {
        let row = policies
            .iter()
            .map(|p| evaluate_policy(p.as_ref(), n, master_seed, seeds, cutoff(n), parallel))
            .collect::<Result<Vec<_>>>()?;
        grid.push(row);
    }
    ComparisonTable::from_evaluations(grid, level)
}

impl ComparisonTable {
    /// `grid[i][j]` is policy `j` at the `i`-th problem size. Within a column
    /// every policy must share the same seeds, in the same order.
    pub fn from_evaluations(grid: Vec<Vec<Evaluation>>, level: f64) -> Result<Self> {
        let policies: Vec<String> = grid.first().map(|r| r.iter().map(|e| e.policy.clone()).collect()).unwrap_or_default();
        let mut columns = Vec::with_capacity(grid.len());
        for row in grid {
            if row.is_empty() {
                return Err(Error::contract("comparison needs at least one policy"));
            }
            if row.len() != policies.len() {
                return Err(Error::contract("every problem size needs the same policies"));
            }
            let n = row[0].summary.n;
            let seeds: Vec<u64> = row[0].runs.iter().map(|r| r.seed).collect();
            for e in &row {
                let other: Vec<u64> = e.runs.iter().map(|r| r.seed).collect();
                if other != seeds || e.summary.n != n {
                    return Err(Error::validation(format!(
                        "policy {} at n={} is not paired with {} ({} vs {} seeds)",
                        e.policy,
                        e.summary.n,
                        row[0].policy,
                        other.len(),
                        seeds.len()
                    )));
                }
            }
            columns.push(mark_column(n, row, level)?);
        }
        Ok(Self { level, policies, columns })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n", "policy", "runs", "successes", "ert", "normalized_ert", "normalized_std", "best", "not_significant",
            "p_value", "adjusted_p",
        ])?;
        let opt = |v: Option<f64>| v.map(|p| format!("{p:.6e}")).unwrap_or_default();
        for col in &self.columns {
            for c in &col.cells {
                w.write_record([
                    col.n.to_string(),
                    c.policy.clone(),
                    c.summary.runs.to_string(),
                    c.summary.successes.to_string(),
                    format!("{:.3}", c.summary.ert),
                    format!("{:.4}", c.summary.normalized_ert),
                    format!("{:.4}", c.summary.normalized_std),
                    c.best.to_string(),
                    c.not_significant.to_string(),
                    opt(c.p_value),
                    opt(c.adjusted_p),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text: one row per policy, one column per `n`. `*` marks the
    /// best ERT in a column, `~` marks entries not significantly worse.
    pub fn to_text(&self) -> String {
        let width = self.policies.iter().map(|p| p.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = write!(s, "{:<width$}", "policy");
        for col in &self.columns {
            let _ = write!(s, "  {:>16}", format!("n={}", col.n));
        }
        s.push('\n');
        for (j, name) in self.policies.iter().enumerate() {
            let _ = write!(s, "{name:<width$}");
            for col in &self.columns {
                let c = &col.cells[j];
                let mark = if c.best {
                    '*'
                } else if c.not_significant {
                    '~'
                } else {
                    ' '
                };
                let cell = format!("{:.3}({:.2}){mark}", c.summary.normalized_ert, c.summary.normalized_std);
                let _ = write!(s, "  {cell:>16}");
            }
            s.push('\n');
        }
        s
    }
}

fn mark_column(n: usize, row: Vec<Evaluation>, level: f64) -> Result<TableColumn> {
    let best = row
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.summary.ert.total_cmp(&b.1.summary.ert))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let best_rt = row[best].runtimes();
    let mut tests = Vec::new();
    for (j, e) in row.iter().enumerate() {
        if j != best {
            tests.push((j, wilcoxon_signed_rank(&e.runtimes(), &best_rt)?.p_value));
        }
    }
    let holm = holm_bonferroni(&tests.iter().map(|t| t.1).collect::<Vec<_>>(), level)?;
    let mut cells: Vec<TableCell> = row
        .into_iter()
        .enumerate()
        .map(|(j, e)| TableCell {
            policy: e.policy,
            summary: e.summary,
            best: j == best,
            not_significant: false,
            p_value: None,
            adjusted_p: None,
            runtimes: e.runs.iter().map(|r| r.evaluations).collect(),
        })
        .collect();
    for (k, (j, p)) in tests.into_iter().enumerate() {
        let c = &mut cells[j];
        c.p_value = Some(p);
        c.adjusted_p = Some(holm.adjusted[k]);
        c.not_significant = !holm.reject[k];
    }
    Ok(TableColumn { n, cells })
}
