use onell_core::ddqn::NeuralPolicy;
use onell_core::ga::ParameterSet;
use onell_core::policy::{
    CompositePolicy, ConstantPolicy, DmpPolicy, PerParameterSource, Policy, SelfAdjustingPolicy, TablePolicy,
    TheoryPolicy, UShapeAlphaPolicy,
};

use crate::CliError;

pub const KNOWN: &str = "theory, dmp, ushape, irace, one_fifth[:F], constant:LM,A,LC,B, \
composite:SRC,SRC,SRC,SRC, table:PATH, model:PATH";

/// Resolve a policy identifier such as `dmp`, `one_fifth:1.5` or
/// `composite:theory,dmp,dmp,1`.
pub fn resolve(id: &str) -> Result<Box<dyn Policy>, CliError> {
    let id = id.trim();
    let (head, arg) = match id.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (id, None),
    };
    let p: Box<dyn Policy> = match (head, arg) {
        ("theory", None) => Box::new(TheoryPolicy),
        ("dmp", None) => Box::new(DmpPolicy),
        ("ushape", None) => Box::new(UShapeAlphaPolicy),
        ("irace", None) => Box::new(SelfAdjustingPolicy::irace()),
        ("one_fifth", None) => Box::new(SelfAdjustingPolicy::one_fifth(1.5)?),
        ("one_fifth", Some(f)) => {
            let f: f64 = f.parse().map_err(|_| CliError::Usage(format!("bad one_fifth factor {f:?}")))?;
            Box::new(SelfAdjustingPolicy::one_fifth(f)?)
        }
        ("constant", Some(v)) => {
            let parts: Vec<f64> = v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("bad constant policy {v:?}")))?;
            let [lm, a, lc, b] = parts[..] else {
                return Err(CliError::Usage("constant policy needs 4 values: LM,A,LC,B".into()));
            };
            if lm < 1.0 || lc < 1.0 || lm.fract() != 0.0 || lc.fract() != 0.0 {
                return Err(CliError::Validation("constant population sizes must be positive integers".into()));
            }
            Box::new(ConstantPolicy::new(ParameterSet::new(lm as u32, a, lc as u32, b)?))
        }
        ("composite", Some(s)) => Box::new(CompositePolicy::new(PerParameterSource::parse(s)?)),
        ("table", Some(path)) => Box::new(TablePolicy::load(path)?),
        ("model", Some(path)) => Box::new(NeuralPolicy::load(path)?),
        _ => return Err(CliError::Usage(format!("unknown policy {id:?}; known: {KNOWN}"))),
    };
    Ok(p)
}

/// File-name-safe rendering of a policy id.
pub fn slug(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for c in id.chars() {
        if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
            out.push(c);
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}
