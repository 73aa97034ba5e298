use std::fs;
use std::path::{Path, PathBuf};

use onell_core::bitstring::derive_seed;
use onell_core::ddqn::{
    train_repetitions, ActionMode, Param, RewardMode, TrainConfig, Trainer, TrainerSnapshot, TrainingArtifact,
};
use onell_core::policy::{Policy, PolicyTable};
use onell_core::stats::{evaluate_policy, seed_range, ComparisonTable, Evaluation};
use serde::Serialize;

use crate::manifest::{version_tag, Manifest, PolicyEntry, DEFAULT_MASTER_SEED, DEFAULT_SEEDS};
use crate::policies::{resolve, slug};
use crate::{AblateArgs, CliError, EvalArgs, TableArgs, TrainArgs};

const DEFAULT_LEVEL: f64 = 0.01;
const DEFAULT_CUTOFF_FACTOR: f64 = 0.8;

/// Composite rows of the derived-policy ablation, `λ_m, α, λ_c, β`.
pub const DERIVED_ROWS: [&str; 7] = [
    "theory,1,lambda_m,1",
    "dmp,1,lambda_m,1",
    "theory,dmp,lambda_m,1",
    "theory,1,dmp,1",
    "theory,dmp,dmp,1",
    "dmp,1,dmp,1",
    "dmp,dmp,dmp,1",
];

pub const BASELINES: [&str; 4] = ["theory", "one_fifth:1.5", "irace", "dmp"];

struct Plan {
    ns: Vec<usize>,
    policies: Vec<(String, Box<dyn Policy>, usize)>,
    master_seed: u64,
    out: PathBuf,
    parallel: usize,
    level: f64,
    cutoff_factor: f64,
}

impl Plan {
    fn cutoff(&self, n: usize) -> u64 {
        (self.cutoff_factor * (n * n) as f64).ceil() as u64
    }

    fn evaluate(&self, n: usize, id: &str, policy: &dyn Policy, seeds: usize) -> Result<Evaluation, CliError> {
        let mut e = evaluate_policy(policy, n, self.master_seed, &seed_range(seeds), self.cutoff(n), self.parallel)?;
        e.policy = id.to_string();
        Ok(e)
    }

    /// Common seed count; an error if policies disagree.
    fn paired_seeds(&self) -> Result<usize, CliError> {
        let first = self.policies[0].2;
        if let Some((id, _, s)) = self.policies.iter().find(|p| p.2 != first) {
            return Err(CliError::Validation(format!(
                "paired comparison needs equal seed counts: {} has {first}, {id} has {s}",
                self.policies[0].0
            )));
        }
        Ok(first)
    }

    fn grid(&self) -> Result<Vec<Vec<Evaluation>>, CliError> {
        let seeds = self.paired_seeds()?;
        self.ns
            .iter()
            .map(|&n| self.policies.iter().map(|(id, p, _)| self.evaluate(n, id, p.as_ref(), seeds)).collect())
            .collect()
    }
}

fn plan(args: &EvalArgs, m: &Manifest, default_policies: &[&str], default_ns: &[usize]) -> Result<Plan, CliError> {
    let ns = if !args.n.is_empty() {
        args.n.clone()
    } else if !m.n.is_empty() {
        m.n.clone()
    } else {
        default_ns.to_vec()
    };
    if ns.is_empty() {
        return Err(CliError::Usage("no problem sizes given (--n)".into()));
    }
    if let Some(bad) = ns.iter().find(|&&n| n < 1) {
        return Err(CliError::Usage(format!("problem size must be positive, got {bad}")));
    }
    let entries: Vec<PolicyEntry> = if !args.policies.is_empty() {
        args.policies.iter().cloned().map(PolicyEntry::Id).collect()
    } else if !m.policies.is_empty() {
        m.policies.clone()
    } else {
        default_policies.iter().map(|s| PolicyEntry::Id(s.to_string())).collect()
    };
    if entries.is_empty() {
        return Err(CliError::Usage("no policies given (--policy)".into()));
    }
    let base_seeds = args.seeds.or(m.seeds);
    let mut policies = Vec::with_capacity(entries.len());
    for e in &entries {
        let seeds = args.seeds.or(e.seeds()).or(base_seeds).unwrap_or(DEFAULT_SEEDS);
        if seeds == 0 {
            return Err(CliError::Usage("seed count must be positive".into()));
        }
        policies.push((e.id().to_string(), resolve(e.id())?, seeds));
    }
    let level = args.level.or(m.level).unwrap_or(DEFAULT_LEVEL);
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Validation(format!("level must lie in (0, 1), got {level}")));
    }
    let cutoff_factor = args.cutoff_factor.or(m.cutoff_factor).unwrap_or(DEFAULT_CUTOFF_FACTOR);
    if !(cutoff_factor > 0.0 && cutoff_factor.is_finite()) {
        return Err(CliError::Validation(format!("cutoff factor must be positive, got {cutoff_factor}")));
    }
    Ok(Plan {
        ns,
        policies,
        master_seed: args.master_seed.or(m.master_seed).unwrap_or(DEFAULT_MASTER_SEED),
        out: m.output_root(args.output.clone()),
        parallel: args.parallel.or(m.parallel).unwrap_or(0),
        level,
        cutoff_factor,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn table_files(dir: &Path, stem: &str, table: &ComparisonTable) -> Result<(), CliError> {
    write_text(&dir.join(format!("{stem}.txt")), &table.to_text())?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    write_json(&dir.join(format!("{stem}.json")), table)
}

#[derive(Serialize)]
struct RunFile<'a> {
    version: &'a str,
    master_seed: u64,
    cutoff: u64,
    #[serde(flatten)]
    evaluation: &'a Evaluation,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let m = Manifest::load_for(args.manifest.as_deref(), "run")?;
    let p = plan(&args, &m, &[], &[])?;
    let dir = p.out.join("run");
    let mut summary = String::from("policy,n,seeds,runs,successes,ert,normalized_ert,normalized_std\n");
    for &n in &p.ns {
        for (id, policy, seeds) in &p.policies {
            let e = p.evaluate(n, id, policy.as_ref(), *seeds)?;
            let s = &e.summary;
            let stem = format!("{}_n{n}_s{seeds}_{}", slug(id), version_tag());
            write_json(
                &dir.join(format!("{stem}.json")),
                &RunFile { version: version_tag(), master_seed: p.master_seed, cutoff: p.cutoff(n), evaluation: &e },
            )?;
            summary.push_str(&format!(
                "{id},{n},{seeds},{},{},{:.3},{:.4},{:.4}\n",
                s.runs, s.successes, s.ert, s.normalized_ert, s.normalized_std
            ));
            println!(
                "{id:<32} n={n:<6} ERT/n={:.3} ({:.2})  solved {}/{}",
                s.normalized_ert, s.normalized_std, s.successes, s.runs
            );
        }
    }
    let seeds = p.policies[0].2;
    write_text(&dir.join(format!("summary_s{seeds}_{}.csv", version_tag())), &summary)
}

pub fn compare(args: EvalArgs) -> Result<(), CliError> {
    let m = Manifest::load_for(args.manifest.as_deref(), "compare")?;
    let p = plan(&args, &m, &[], &[])?;
    let table = ComparisonTable::from_evaluations(p.grid()?, p.level)?;
    let stem = format!("compare_{}_s{}_{}", ns_tag(&p.ns), p.policies[0].2, version_tag());
    table_files(&p.out.join("compare"), &stem, &table)?;
    print!("{}", table.to_text());
    Ok(())
}

fn ns_tag(ns: &[usize]) -> String {
    let parts: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
    format!("n{}", parts.join("-"))
}

pub fn ablate(args: AblateArgs) -> Result<(), CliError> {
    let m = Manifest::load_for(args.eval.manifest.as_deref(), "ablate")?;
    if m.masks.as_ref().is_some_and(|v| v.is_empty()) || args.masks.iter().any(|s| s.trim().is_empty()) {
        return Err(CliError::Usage("empty mask list".into()));
    }
    let masks: Vec<Vec<Param>> = if !args.masks.is_empty() {
        args.masks.iter().map(|s| parse_params(s)).collect::<Result<_, _>>()?
    } else {
        m.masks.clone().unwrap_or_default()
    };
    if masks.iter().any(|mask| mask.is_empty()) {
        return Err(CliError::Usage("empty mask".into()));
    }
    let rows: Vec<String> = if !args.rows.is_empty() {
        args.rows.clone()
    } else if !m.rows.is_empty() {
        m.rows.clone()
    } else if masks.is_empty() {
        DERIVED_ROWS.iter().map(|s| s.to_string()).collect()
    } else {
        Vec::new()
    };
    let policy_ids: Vec<String> = rows.iter().map(|r| format!("composite:{r}")).collect();
    let mut eval_args = args.eval.clone();
    eval_args.policies = policy_ids.clone();
    let mut m_eval = m.clone();
    m_eval.policies.clear();
    let p = plan(&eval_args, &m_eval, &["theory"], &[])?;
    let mut csv = String::from("row,kind,n,seeds,normalized_ert,normalized_std,successes,runs\n");
    if !rows.is_empty() {
        for &n in &p.ns {
            for (row, (id, policy, seeds)) in rows.iter().zip(&p.policies) {
                let e = p.evaluate(n, id, policy.as_ref(), *seeds)?;
                let s = &e.summary;
                csv.push_str(&format!(
                    "\"{row}\",symbolic,{n},{seeds},{:.4},{:.4},{},{}\n",
                    s.normalized_ert, s.normalized_std, s.successes, s.runs
                ));
                println!("{row:<28} n={n:<6} ERT/n={:.3} ({:.2})", s.normalized_ert, s.normalized_std);
            }
        }
    }
    if !masks.is_empty() {
        let base = load_train_config(args.config.as_deref(), &m)?;
        for &n in &p.ns {
            for mask in &masks {
                let cfg = TrainConfig { n, controlled: mask.clone(), parallel: p.parallel, ..base.clone() };
                cfg.validate()?;
                let codec = cfg.codec()?;
                let (runs, best) = train_repetitions(&cfg, &codec, p.master_seed)?;
                let tag: Vec<&str> = codec.controlled().iter().map(|q| q.as_str()).collect();
                let dir = p.out.join("ablate").join(format!("mask_{}_n{n}_{}", tag.join("+"), version_tag()));
                for (r, art) in runs.iter().enumerate() {
                    art.save(dir.join(format!("rep_{r}")))?;
                }
                let s = runs[best].best_ert().cloned();
                let (ert, std, ok, total) =
                    s.map_or((f64::INFINITY, 0.0, 0, 0), |s| (s.normalized_ert, s.normalized_std, s.successes, s.runs));
                csv.push_str(&format!("\"{}\",rl,{n},{},{ert:.4},{std:.4},{ok},{total}\n", tag.join("+"), cfg.final_eval_runs));
                println!("mask {:<24} n={n:<6} ERT/n={ert:.3} ({std:.2})", tag.join("+"));
            }
        }
    }
    let seeds = p.policies.first().map_or(0, |x| x.2);
    write_text(&p.out.join("ablate").join(format!("ablation_{}_s{seeds}_{}.csv", ns_tag(&p.ns), version_tag())), &csv)
}

fn parse_params(s: &str) -> Result<Vec<Param>, CliError> {
    s.split([',', '+'])
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<Param>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

pub fn export(args: EvalArgs) -> Result<(), CliError> {
    let m = Manifest::load_for(args.manifest.as_deref(), "export")?;
    let plot_seeds = args.seeds.or(m.seeds);
    let p = plan(&args, &m, &[], &[])?;
    let dir = p.out.join("export");
    for &n in &p.ns {
        for (id, policy, _) in &p.policies {
            let table = PolicyTable::from_policy(policy.as_ref(), n)?;
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}_n{n}_{}.csv", slug(id), version_tag()));
            table.save(&path)?;
            println!("wrote {}", path.display());
        }
    }
    if let Some(seeds) = plot_seeds {
        let mut csv = String::from("policy,n,normalized_ert,normalized_std,successes,runs\n");
        for (id, policy, _) in &p.policies {
            for &n in &p.ns {
                let s = p.evaluate(n, id, policy.as_ref(), seeds)?.summary;
                csv.push_str(&format!(
                    "{id},{n},{:.4},{:.4},{},{}\n",
                    s.normalized_ert, s.normalized_std, s.successes, s.runs
                ));
            }
        }
        let path = dir.join(format!("ert_vs_n_s{seeds}_{}.csv", version_tag()));
        write_text(&path, &csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn table(args: TableArgs) -> Result<(), CliError> {
    let render = |t: &ComparisonTable| -> Result<String, CliError> {
        match args.format.as_str() {
            "text" => Ok(t.to_text()),
            "json" => Ok(serde_json::to_string_pretty(t)? + "\n"),
            "csv" => {
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                Ok(String::from_utf8_lossy(&buf).into_owned())
            }
            other => Err(CliError::Usage(format!("unknown format {other:?} (text, csv, json)"))),
        }
    };
    if let Some(path) = &args.from {
        let text = fs::read_to_string(path)?;
        let t: ComparisonTable = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        print!("{}", render(&t)?);
        return Ok(());
    }
    let m = Manifest::load_for(args.eval.manifest.as_deref(), "table")?;
    let preset = args.preset.clone().or(m.preset.clone()).unwrap_or_else(|| "baselines".into());
    let (policies, ns): (Vec<String>, Vec<usize>) = match preset.as_str() {
        "baselines" => (BASELINES.iter().map(|s| s.to_string()).collect(), vec![100, 500]),
        "derived" => (DERIVED_ROWS.iter().map(|r| format!("composite:{r}")).collect(), vec![3000]),
        other => return Err(CliError::Usage(format!("unknown preset {other:?} (baselines, derived)"))),
    };
    let refs: Vec<&str> = policies.iter().map(String::as_str).collect();
    let p = plan(&args.eval, &m, &refs, &ns)?;
    let t = ComparisonTable::from_evaluations(p.grid()?, p.level)?;
    let stem = format!("{preset}_{}_s{}_{}", ns_tag(&p.ns), p.policies[0].2, version_tag());
    table_files(&p.out.join("table"), &stem, &t)?;
    print!("{}", render(&t)?);
    Ok(())
}

fn load_train_config(path: Option<&Path>, m: &Manifest) -> Result<TrainConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))
        }
        None => Ok(m.train.clone().unwrap_or_default()),
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(field: &str, value: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| CliError::Validation(format!("invalid {field} {value:?}")))
}

#[derive(Serialize)]
struct BestOf {
    version: String,
    master_seed: u64,
    best_repetition: usize,
    best_seed: u64,
    best_step: u64,
    best_normalized_ert: Option<f64>,
    repetitions: Vec<Option<f64>>,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    if let Some(snap) = &args.resume {
        return resume(snap, args.snapshot_every);
    }
    let m = Manifest::load_for(args.manifest.as_deref(), "train")?;
    let mut cfg = load_train_config(args.config.as_deref(), &m)?;
    if let Some(n) = args.n.or(m.n.first().copied()) {
        cfg.n = n;
    }
    if let Some(v) = args.budget {
        cfg.budget = v;
    }
    if let Some(v) = args.repetitions {
        cfg.repetitions = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = &args.reward_mode {
        cfg.reward_mode = parse_enum::<RewardMode>("reward_mode", v)?;
    }
    if let Some(v) = &args.mode {
        cfg.mode = parse_enum::<ActionMode>("mode", v)?;
    }
    if !args.controlled.is_empty() {
        cfg.controlled = args.controlled.iter().map(|s| parse_params(s)).collect::<Result<Vec<_>, _>>()?.concat();
    }
    if let Some(v) = args.parallel.or(m.parallel) {
        cfg.parallel = v;
    }
    cfg.validate()?;
    let codec = cfg.codec()?;
    let master = args.master_seed.or(m.master_seed).unwrap_or(DEFAULT_MASTER_SEED);
    let snapshot_every = args.snapshot_every.or(m.snapshot_every);
    let mode = match cfg.mode {
        ActionMode::Combinatorial => "comb",
        ActionMode::Factored => "fact",
    };
    let reward = match cfg.reward_mode {
        RewardMode::Naive => "naive",
        RewardMode::AdaptiveShift => "shift",
    };
    let dir = m.output_root(args.output.clone()).join("train").join(format!(
        "n{}_{mode}_{reward}_g{}_seed{master}_{}",
        cfg.n,
        cfg.gamma,
        version_tag()
    ));
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), &cfg)?;
    let mut arts: Vec<TrainingArtifact> = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let seed = derive_seed(master, r as u64);
        let rep_dir = dir.join(format!("rep_{r}"));
        let trainer = Trainer::new(&cfg, &codec, seed)?;
        let art = drive(trainer, &rep_dir, snapshot_every)?;
        let ert = art.best_ert().map(|s| s.normalized_ert);
        println!("repetition {r}: best step {} ERT/n={}", art.best_checkpoint().step, fmt_ert(ert));
        arts.push(art);
    }
    let erts: Vec<Option<f64>> = arts.iter().map(|a| a.best_ert().map(|s| s.ert)).collect();
    let best = (0..arts.len())
        .min_by(|&a, &b| erts[a].unwrap_or(f64::INFINITY).total_cmp(&erts[b].unwrap_or(f64::INFINITY)))
        .unwrap_or(0);
    let best_dir = dir.join(format!("rep_{best}"));
    for f in ["best_model.bin", "codec.json", "best_policy.csv"] {
        fs::copy(best_dir.join(f), dir.join(f))?;
    }
    let best_ert = arts[best].best_ert().map(|s| s.normalized_ert);
    write_json(
        &dir.join("best.json"),
        &BestOf {
            version: version_tag().to_string(),
            master_seed: master,
            best_repetition: best,
            best_seed: derive_seed(master, best as u64),
            best_step: arts[best].best_checkpoint().step,
            best_normalized_ert: best_ert,
            repetitions: arts.iter().map(|a| a.best_ert().map(|s| s.normalized_ert)).collect(),
        },
    )?;
    println!("best repetition {best}: ERT/n={}  ({})", fmt_ert(best_ert), dir.display());
    Ok(())
}

fn fmt_ert(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

/// Train to completion, writing `snapshot.json` every `every` steps, and save
/// the artifact into `dir`.
fn drive(mut trainer: Trainer, dir: &Path, every: Option<u64>) -> Result<TrainingArtifact, CliError> {
    fs::create_dir_all(dir)?;
    if let Some(every) = every.filter(|&e| e > 0) {
        let budget = trainer.snapshot().config.budget;
        while trainer.step() < budget {
            let next = (trainer.step() / every + 1) * every;
            trainer.run_until(next)?;
            trainer.snapshot().save(dir.join("snapshot.json"))?;
        }
    }
    let art = trainer.finish()?;
    art.save(dir)?;
    Ok(art)
}

fn resume(snapshot: &Path, every: Option<u64>) -> Result<(), CliError> {
    let snap = TrainerSnapshot::load(snapshot)?;
    let dir = snapshot.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let from = snap.step;
    let trainer = Trainer::restore(snap)?;
    let art = drive(trainer, &dir, every)?;
    println!(
        "resumed at step {from}: best step {} ERT/n={}",
        art.best_checkpoint().step,
        fmt_ert(art.best_ert().map(|s| s.normalized_ert))
    );
    Ok(())
}
