//! Parameter-control policies: fitness-based formulas, self-adjusting
//! success rules, per-parameter compositions and replayable lookup tables.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{round_lambda, Comparison, IterationOutcome, ParameterSet};

/// Chooses `⟨λ_m, α, λ_c, β⟩` from the current fitness, optionally adapting
/// to the outcomes of previous iterations.
pub trait Policy: Send + Sync {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet>;

    fn observe(&mut self, _outcome: &IterationOutcome) {}

    /// Restore the state produced at construction.
    fn reset(&mut self) {}

    fn name(&self) -> String;

    fn clone_box(&self) -> Box<dyn Policy>;
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

fn check_fitness(fx: usize, n: usize) -> Result<()> {
    if n == 0 || fx >= n {
        return Err(Error::contract(format!("policy queried with fx={fx}, n={n}; need 0 <= fx < n")));
    }
    Ok(())
}

/// `√(n/(n−f(x)))`
fn theory_lambda(fx: usize, n: usize) -> f64 {
    (n as f64 / (n - fx) as f64).sqrt()
}

/// `f(x)/n ≤ 0.95`, evaluated exactly in integers.
fn early_phase(fx: usize, n: usize) -> bool {
    20 * fx as u128 <= 19 * n as u128
}

fn dmp_lambda_m(fx: usize, n: usize) -> u32 {
    if early_phase(fx, n) {
        1
    } else {
        round_lambda(theory_lambda(fx, n))
    }
}

fn dmp_lambda_c(fx: usize, n: usize) -> u32 {
    round_lambda(2.0 * theory_lambda(fx, n))
}

fn dmp_alpha(fx: usize, n: usize) -> f64 {
    if early_phase(fx, n) {
        0.001
    } else {
        1.0
    }
}

fn ushape_alpha(fx: usize, n: usize) -> f64 {
    if 20 * (fx as u128) < 17 * (n as u128) {
        0.5
    } else {
        dmp_alpha(fx, n)
    }
}

/// `λ_m = λ_c = √(n/(n−f(x)))`, `α = β = 1`.
pub fn theory_params(fx: usize, n: usize) -> Result<ParameterSet> {
    check_fitness(fx, n)?;
    Ok(ParameterSet::standard(round_lambda(theory_lambda(fx, n))))
}

/// The derived multi-parameter policy: `λ_m = 1` and `α = 0.001` while
/// `f(x) ≤ 0.95n`, afterwards `λ_m = √(n/(n−f(x)))` and `α = 1`;
/// `λ_c = 2√(n/(n−f(x)))` throughout; `β = 1`.
pub fn dmp_params(fx: usize, n: usize) -> Result<ParameterSet> {
    check_fitness(fx, n)?;
    Ok(ParameterSet {
        lambda_m: dmp_lambda_m(fx, n),
        alpha: dmp_alpha(fx, n),
        lambda_c: dmp_lambda_c(fx, n),
        beta: 1.0,
    })
}

/// As [`dmp_params`] but with α = 0.5 below 0.85n.
pub fn ushape_alpha_params(fx: usize, n: usize) -> Result<ParameterSet> {
    let mut ps = dmp_params(fx, n)?;
    ps.alpha = ushape_alpha(fx, n);
    Ok(ps)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TheoryPolicy;

impl Policy for TheoryPolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        theory_params(fx, n)
    }

    fn name(&self) -> String {
        "theory".into()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(*self)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DmpPolicy;

impl Policy for DmpPolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        dmp_params(fx, n)
    }

    fn name(&self) -> String {
        "dmp".into()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(*self)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UShapeAlphaPolicy;

impl Policy for UShapeAlphaPolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        ushape_alpha_params(fx, n)
    }

    fn name(&self) -> String {
        "ushape".into()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(*self)
    }
}

/// Same parameters at every fitness level.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPolicy(ParameterSet);

impl ConstantPolicy {
    pub fn new(params: ParameterSet) -> Self {
        Self(params)
    }
}

impl Policy for ConstantPolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        check_fitness(fx, n)?;
        Ok(self.0)
    }

    fn name(&self) -> String {
        let p = &self.0;
        format!("constant:{},{},{},{}", p.lambda_m, p.alpha, p.lambda_c, p.beta)
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(*self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfAdjustConfig {
    pub alpha: f64,
    pub beta: f64,
    /// `λ_c = crossover_ratio · λ_m`.
    pub crossover_ratio: f64,
    /// `A > 1`, applied to λ_m after an iteration without strict improvement.
    pub increase: f64,
    /// `b ∈ (0, 1)`, applied to λ_m after a strict improvement.
    pub decrease: f64,
    pub lambda_init: f64,
}

impl SelfAdjustConfig {
    /// One-fifth success rule: `A = F^(1/4)`, `b = 1/F`, all ratios 1.
    pub fn one_fifth(f: f64) -> Result<Self> {
        if !(f.is_finite() && f > 1.0) {
            return Err(Error::contract(format!("one-fifth rule needs F > 1, got {f}")));
        }
        Ok(Self {
            alpha: 1.0,
            beta: 1.0,
            crossover_ratio: 1.0,
            increase: f.powf(0.25),
            decrease: 1.0 / f,
            lambda_init: 1.0,
        })
    }

    /// Statically tuned constants reported for the irace-configured variant.
    pub fn irace() -> Self {
        Self {
            alpha: 0.3594,
            beta: 1.4128,
            crossover_ratio: 1.2379,
            increase: 1.1672,
            decrease: 0.691,
            lambda_init: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.increase > 1.0) {
            return Err(Error::validation(format!("increase factor A must be > 1, got {}", self.increase)));
        }
        if !(self.decrease > 0.0 && self.decrease < 1.0) {
            return Err(Error::validation(format!("decrease factor b must lie in (0,1), got {}", self.decrease)));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("crossover_ratio", self.crossover_ratio)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda_init.is_finite() && self.lambda_init >= 1.0) {
            return Err(Error::validation(format!("lambda_init must be >= 1, got {}", self.lambda_init)));
        }
        Ok(())
    }
}

/// Self-adjusting λ_m: multiplied by `b < 1` after a strict improvement and
/// by `A > 1` after an equal or worse iteration, always kept within `[1, n−1]`.
///
/// Larger populations make success more likely, so λ_m shrinks on success;
/// with `A = F^(1/4)`, `b = 1/F` it is stationary exactly when one iteration
/// in five improves. The real-valued λ̃_m is rounded only when parameters are
/// selected.
#[derive(Clone, Debug)]
pub struct SelfAdjustingPolicy {
    name: String,
    config: SelfAdjustConfig,
    lambda: f64,
}

impl SelfAdjustingPolicy {
    pub fn new(config: SelfAdjustConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            name: format!(
                "self_adjust:{},{},{},{},{}",
                config.alpha, config.crossover_ratio, config.beta, config.increase, config.decrease
            ),
            config,
            lambda: config.lambda_init,
        })
    }

    pub fn one_fifth(f: f64) -> Result<Self> {
        let mut p = Self::new(SelfAdjustConfig::one_fifth(f)?)?;
        p.name = format!("one_fifth:{f}");
        Ok(p)
    }

    pub fn irace() -> Self {
        let mut p = Self::new(SelfAdjustConfig::irace()).expect("irace constants are valid");
        p.name = "irace".into();
        p
    }

    pub fn config(&self) -> &SelfAdjustConfig {
        &self.config
    }

    /// Current real-valued λ̃_m.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda.max(1.0);
    }
}

fn lambda_upper(n: usize) -> f64 {
    n.saturating_sub(1).max(1) as f64
}

impl Policy for SelfAdjustingPolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        check_fitness(fx, n)?;
        let lambda = self.lambda.clamp(1.0, lambda_upper(n));
        let lm = round_lambda(lambda);
        let lc = round_lambda(self.config.crossover_ratio * lambda);
        Ok(ParameterSet {
            lambda_m: lm,
            alpha: self.config.alpha,
            lambda_c: lc,
            beta: self.config.beta,
        })
    }

    fn observe(&mut self, outcome: &IterationOutcome) {
        let factor = match outcome.comparison {
            Comparison::Improved => self.config.decrease,
            Comparison::Equal | Comparison::Worse => self.config.increase,
        };
        self.lambda = (self.lambda * factor).clamp(1.0, lambda_upper(outcome.n));
    }

    fn reset(&mut self) {
        self.lambda = self.config.lambda_init;
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Where one parameter of a [`CompositePolicy`] comes from.
#[derive(Clone, Debug)]
pub enum Source {
    /// λ_m: `√(n/(n−f))`; α, β: 1; λ_c: the resolved λ_m.
    Theory,
    /// The derived-policy formula for this parameter (β: 1).
    Dmp,
    /// The U-shaped α schedule (α only).
    UShape,
    Constant(f64),
    /// This parameter's column of a lookup table.
    Table(Arc<PolicyTable>),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Theory => f.write_str("theory"),
            Source::Dmp => f.write_str("dmp"),
            Source::UShape => f.write_str("ushape"),
            Source::Constant(v) => write!(f, "{v}"),
            Source::Table(t) => write!(f, "table({})", t.n()),
        }
    }
}

impl Source {
    fn parse(token: &str) -> Result<Self> {
        let token = token.trim();
        match token {
            "theory" | "default" | "lambda_m" => Ok(Source::Theory),
            "dmp" => Ok(Source::Dmp),
            "ushape" => Ok(Source::UShape),
            _ => {
                if let Some(path) = token.strip_prefix("table=") {
                    return Ok(Source::Table(Arc::new(PolicyTable::load(path)?)));
                }
                token
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v > 0.0)
                    .map(Source::Constant)
                    .ok_or_else(|| Error::validation(format!("unknown parameter source {token:?}")))
            }
        }
    }
}

/// One source per parameter, in the order `λ_m, α, λ_c, β`.
#[derive(Clone, Debug)]
pub struct PerParameterSource {
    pub lambda_m: Source,
    pub alpha: Source,
    pub lambda_c: Source,
    pub beta: Source,
}

impl PerParameterSource {
    pub fn theory() -> Self {
        Self { lambda_m: Source::Theory, alpha: Source::Theory, lambda_c: Source::Theory, beta: Source::Theory }
    }

    /// Parse `"λ_m,α,λ_c,β"` where each entry is `theory`, `dmp`, `ushape`,
    /// a positive number, or `table=<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::validation(format!(
                "composite policy needs 4 comma-separated sources (lambda_m,alpha,lambda_c,beta), got {spec:?}"
            )));
        }
        Ok(Self {
            lambda_m: Source::parse(parts[0])?,
            alpha: Source::parse(parts[1])?,
            lambda_c: Source::parse(parts[2])?,
            beta: Source::parse(parts[3])?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CompositePolicy {
    sources: PerParameterSource,
}

impl CompositePolicy {
    pub fn new(sources: PerParameterSource) -> Self {
        Self { sources }
    }

    pub fn sources(&self) -> &PerParameterSource {
        &self.sources
    }
}

impl Policy for CompositePolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        check_fitness(fx, n)?;
        let s = &self.sources;
        let lambda_m = match &s.lambda_m {
            Source::Theory => round_lambda(theory_lambda(fx, n)),
            Source::Dmp => dmp_lambda_m(fx, n),
            Source::UShape => return Err(Error::validation("ushape is an alpha-only source")),
            Source::Constant(v) => round_lambda(*v),
            Source::Table(t) => t.select(fx, n)?.lambda_m,
        };
        let alpha = match &s.alpha {
            Source::Theory => 1.0,
            Source::Dmp => dmp_alpha(fx, n),
            Source::UShape => ushape_alpha(fx, n),
            Source::Constant(v) => *v,
            Source::Table(t) => t.select(fx, n)?.alpha,
        };
        let lambda_c = match &s.lambda_c {
            Source::Theory => lambda_m,
            Source::Dmp => dmp_lambda_c(fx, n),
            Source::UShape => return Err(Error::validation("ushape is an alpha-only source")),
            Source::Constant(v) => round_lambda(*v),
            Source::Table(t) => t.select(fx, n)?.lambda_c,
        };
        let beta = match &s.beta {
            Source::Theory | Source::Dmp => 1.0,
            Source::UShape => return Err(Error::validation("ushape is an alpha-only source")),
            Source::Constant(v) => *v,
            Source::Table(t) => t.select(fx, n)?.beta,
        };
        ParameterSet::new(lambda_m, alpha, lambda_c, beta)
    }

    fn name(&self) -> String {
        let s = &self.sources;
        format!("composite:{},{},{},{}", s.lambda_m, s.alpha, s.lambda_c, s.beta)
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Fitness → parameters lookup, one row per `fx ∈ [0, n)`.
///
/// CSV schema: header `fx,lambda_m,alpha,lambda_c,beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    rows: Vec<ParameterSet>,
}

pub const TABLE_HEADER: [&str; 5] = ["fx", "lambda_m", "alpha", "lambda_c", "beta"];

impl PolicyTable {
    pub fn new(rows: Vec<ParameterSet>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::validation("policy table must have at least one row"));
        }
        for (fx, r) in rows.iter().enumerate() {
            r.validate().map_err(|e| Error::validation(format!("fx={fx}: {e}")))?;
        }
        Ok(Self { rows })
    }

    /// Tabulate any policy's (initial-state) selection for `fx ∈ [0, n)`.
    pub fn from_policy(policy: &dyn Policy, n: usize) -> Result<Self> {
        Self::new((0..n).map(|fx| policy.select(fx, n)).collect::<Result<_>>()?)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[ParameterSet] {
        &self.rows
    }

    pub fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        if n != self.rows.len() {
            return Err(Error::contract(format!("table built for n={} queried with n={n}", self.rows.len())));
        }
        check_fitness(fx, n)?;
        Ok(self.rows[fx])
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TABLE_HEADER)?;
        for (fx, r) in self.rows.iter().enumerate() {
            w.write_record(&[
                fx.to_string(),
                r.lambda_m.to_string(),
                r.alpha.to_string(),
                r.lambda_c.to_string(),
                r.beta.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != TABLE_HEADER {
            return Err(Error::validation(format!("bad header {header:?}, expected {TABLE_HEADER:?}")));
        }
        let mut entries: Vec<Option<ParameterSet>> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::validation(format!("row {row}: expected 5 fields, found {}", rec.len())));
            }
            let field = |k: usize| rec[k].trim();
            let bad = |k: usize| Error::validation(format!("row {row}: cannot parse {} = {:?}", TABLE_HEADER[k], field(k)));
            let fx: usize = field(0).parse().map_err(|_| bad(0))?;
            let ps = ParameterSet {
                lambda_m: field(1).parse().map_err(|_| bad(1))?,
                alpha: field(2).parse().map_err(|_| bad(2))?,
                lambda_c: field(3).parse().map_err(|_| bad(3))?,
                beta: field(4).parse().map_err(|_| bad(4))?,
            };
            ps.validate().map_err(|e| Error::validation(format!("row {row}: {e}")))?;
            if fx >= entries.len() {
                entries.resize(fx + 1, None);
            }
            if entries[fx].replace(ps).is_some() {
                return Err(Error::validation(format!("row {row}: duplicate fx={fx}")));
            }
        }
        if entries.is_empty() {
            return Err(Error::validation("policy table has no rows"));
        }
        let rows = entries
            .into_iter()
            .enumerate()
            .map(|(fx, e)| e.ok_or_else(|| Error::validation(format!("missing row for fx={fx}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::validation(format!("cannot open policy table {}: {e}", path.display())))?;
        Self::read_csv(file)
    }
}

#[derive(Clone, Debug)]
pub struct TablePolicy {
    name: String,
    table: Arc<PolicyTable>,
}

impl TablePolicy {
    pub fn new(table: PolicyTable, name: impl Into<String>) -> Self {
        Self { name: name.into(), table: Arc::new(table) }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self::new(PolicyTable::load(path)?, format!("table:{}", path.display())))
    }

    pub fn table(&self) -> &PolicyTable {
        &self.table
    }
}

impl Policy for TablePolicy {
    fn select(&self, fx: usize, n: usize) -> Result<ParameterSet> {
        self.table.select(fx, n)
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
