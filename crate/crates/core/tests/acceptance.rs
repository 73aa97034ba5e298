//! Exit criteria: reference runtimes of the baseline and derived policies,
//! the learned-policy campaign, and the property suites. Prints one line per
//! criterion and exits non-zero if any fails.

mod common;

use std::time::Instant;

use common::{binom, chi_square_p, empirical_kernel, enumerate_kernel};
use onell_core::bitstring::{BitVector, RngStream, Target};
use onell_core::ddqn::{train, train_repetitions, ActionCodec, ActionMode, Param, RewardMode, TrainConfig};
use onell_core::ga::{
    biased_crossover, default_cutoff, flip_exact, run_episode_from, sample_conditional_binomial, ParameterSet,
};
use onell_core::neural_net::{NetworkParams, NetworkSpec, TrainingSample};
use onell_core::policy::{CompositePolicy, DmpPolicy, PerParameterSource, Policy, SelfAdjustingPolicy, TheoryPolicy};
use onell_core::stats::{
    evaluate_policy, holm_bonferroni, seed_range, wilcoxon_signed_rank, wilcoxon_signed_rank_normal, WilcoxonMethod,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

const MASTER: u64 = 42;
const SEEDS: usize = 1000;
/// Learned policies are judged on seeds never used during training.
const FRESH_MASTER: u64 = 0x5EED_F00D;
const RL_STEPS_PER_RUN: u64 = 40_000;

struct Report {
    results: Vec<(String, bool)>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), pass));
    }

    fn within(&mut self, name: &str, got: f64, want: f64, tol: f64) -> bool {
        let pass = (got - want).abs() <= tol;
        self.record(name, pass, format!("{got:.3} (target {want:.3} ± {tol})"));
        pass
    }
}

fn ert(policy: &dyn Policy, n: usize) -> f64 {
    let e = evaluate_policy(policy, n, MASTER, &seed_range(SEEDS), default_cutoff(n), 0).expect("evaluation");
    e.summary.normalized_ert
}

fn composite(spec: &str) -> CompositePolicy {
    CompositePolicy::new(PerParameterSource::parse(spec).expect("row"))
}

fn baselines(r: &mut Report) {
    for (n, want, tol) in [(100, 5.826, 0.15), (500, 6.474, 0.10), (2000, 6.681, 0.08)] {
        r.within(&format!("theory n={n}"), ert(&TheoryPolicy, n), want, tol);
    }
    for (n, want, tol) in [(100, 4.990, 0.15), (500, 5.478, 0.10), (2000, 5.666, 0.08)] {
        r.within(&format!("irace n={n}"), ert(&SelfAdjustingPolicy::irace(), n), want, tol);
    }
    let fifth = SelfAdjustingPolicy::one_fifth(1.5).expect("F");
    r.within("one-fifth F=1.5 n=100", ert(&fifth, 100), 6.197, 0.35);
}

fn derived(r: &mut Report) {
    let rows = [
        ("theory,1,lambda_m,1", 6.723),
        ("dmp,1,lambda_m,1", 6.353),
        ("theory,dmp,lambda_m,1", 5.905),
        ("theory,1,dmp,1", 5.891),
        ("theory,dmp,dmp,1", 5.167),
        ("dmp,1,dmp,1", 6.006),
        ("dmp,dmp,dmp,1", 4.827),
    ];
    let mut values = Vec::new();
    for (row, want) in rows {
        let got = ert(&composite(row), 3000);
        r.within(&format!("derived row [{row}] n=3000"), got, want, 0.06);
        values.push(got);
    }
    let dmp_10k = ert(&DmpPolicy, 10_000);
    r.within("dmp n=10000", dmp_10k, 4.930, 0.05);

    let gain = 1.0 - values[6] / values[0];
    r.record("dmp improves on theory by >= 25% at n=3000", gain >= 0.25, format!("{:.1}%", 100.0 * gain));

    let dmp_500 = ert(&DmpPolicy, 500);
    let all = [dmp_500, values[6], dmp_10k];
    let spread = all.iter().cloned().fold(f64::MIN, f64::max) - all.iter().cloned().fold(f64::MAX, f64::min);
    r.record(
        "dmp flat across n in {500, 3000, 10000}",
        spread < 0.3,
        format!("{dmp_500:.3}, {:.3}, {dmp_10k:.3}; spread {spread:.3} (< 0.3)", values[6]),
    );
}

fn learned(r: &mut Report) {
    let config = TrainConfig {
        n: 100,
        gamma: 0.9998,
        budget: RL_STEPS_PER_RUN,
        repetitions: 5,
        reward_mode: RewardMode::AdaptiveShift,
        mode: ActionMode::Factored,
        ..TrainConfig::default()
    };
    let codec = config.codec().expect("codec");
    let t = Instant::now();
    let (runs, best) = train_repetitions(&config, &codec, MASTER).expect("training");
    let policy = runs[best].best_policy().expect("policy");
    let summary = evaluate_policy(&policy, 100, FRESH_MASTER, &seed_range(SEEDS), config.cutoff(), 0)
        .expect("evaluation")
        .summary;
    let per_run: Vec<String> =
        runs.iter().map(|a| a.best_ert().map_or("-".into(), |s| format!("{:.3}", s.normalized_ert))).collect();
    r.record(
        "learned policy n=100 (factored, shifted reward, gamma 0.9998), best of 5",
        summary.is_finite() && summary.normalized_ert <= 5.8,
        format!(
            "{:.3} on fresh seeds (<= 5.8); per run [{}]; {} steps x 5 in {:.0?}",
            summary.normalized_ert,
            per_run.join(", "),
            RL_STEPS_PER_RUN,
            t.elapsed()
        ),
    );
}

fn ga_oracles(r: &mut Report) {
    let cases: [(&[bool], &[bool], (u32, f64, u32, f64)); 3] = [
        (&[false, false], &[true, true], (1, 1.0, 1, 1.0)),
        (&[false, false], &[true, true], (2, 1.0, 3, 1.0)),
        (&[true, false], &[true, true], (2, 0.5, 2, 1.5)),
    ];
    let mut worst = 1.0f64;
    for (i, (x, z, (lm, a, lc, b))) in cases.into_iter().enumerate() {
        let params = ParameterSet::new(lm, a, lc, b).expect("params");
        let probs = enumerate_kernel(x, z, lm as usize, a, lc as usize, b);
        let counts = empirical_kernel(x, z, params, 1_000_000, 500 + i as u64);
        worst = worst.min(chi_square_p(&counts, &probs));
    }
    r.record("n=2 transition kernel vs enumeration", worst > 0.001, format!("min χ² p = {worst:.4} over 3 kernels"));

    let mut ok = true;
    let mut rng = RngStream::new(1, 0);
    for n in [1usize, 7, 20, 64, 257] {
        let x = BitVector::sample_uniform(n, &mut rng);
        let y = BitVector::sample_uniform(n, &mut rng);
        for ell in [0, 1, n / 2, n] {
            ok &= x.hamming(&flip_exact(&x, ell, &mut rng).expect("flip")).ok() == Some(ell);
        }
        ok &= flip_exact(&x, n, &mut rng).ok() == Some(x.complement());
        ok &= flip_exact(&x, n + 1, &mut rng).is_err();
        ok &= biased_crossover(&x, &y, 0.0, &mut rng).ok() == Some(x.clone());
        ok &= biased_crossover(&x, &y, 1.0, &mut rng).ok() == Some(y.clone());
    }
    let trials = 1_000_000;
    let (n, p) = (10usize, 0.1f64);
    let mut ones = 0u64;
    for _ in 0..trials {
        let l = sample_conditional_binomial(n, p, &mut rng).expect("sample");
        ok &= l >= 1;
        ones += u64::from(l == 1);
    }
    let want = binom(n, 1) * p * (1.0 - p).powi(9) / (1.0 - (1.0 - p).powi(10));
    let got = ones as f64 / trials as f64;
    ok &= (got - want).abs() < 0.003;
    ok &= (0..100).all(|_| sample_conditional_binomial(13, 1.0, &mut rng).ok() == Some(13));
    r.record("operator laws", ok, format!("flip/crossover endpoints; P(ℓ=1 | n=10, p=0.1) = {got:.4} vs {want:.4}"));

    let mut same = true;
    for seed in 0..40u64 {
        let n = 10 + (seed as usize * 37) % 300;
        let mut g = RngStream::new(seed, 5);
        let z = Target::new(BitVector::sample_uniform(n, &mut g));
        let x0 = BitVector::sample_uniform(n, &mut g);
        let y0 = x0.xor(&z.bits().complement()).expect("xor");
        let cutoff = default_cutoff(n);
        let mut pa: Box<dyn Policy> = if seed % 2 == 0 { Box::new(TheoryPolicy) } else { Box::new(DmpPolicy) };
        let mut pb = pa.clone();
        let a = run_episode_from(pa.as_mut(), x0, &z, cutoff, &mut RngStream::new(seed, 0), true).expect("run");
        let b = run_episode_from(pb.as_mut(), y0, &Target::all_ones(n), cutoff, &mut RngStream::new(seed, 0), true)
            .expect("run");
        same &= a == b;
    }
    r.record("xor conjugation of targets", same, "40 seeded runs, identical trajectories".into());
}

fn gradient_check(r: &mut Report) {
    let spec = NetworkSpec::new(1, vec![9, 7], vec![5, 3]).expect("spec");
    let mut rng = RngStream::new(3, 0);
    let net = NetworkParams::init(&spec, &mut rng).expect("init");
    let samples: Vec<TrainingSample> = (0..6)
        .map(|_| {
            let input = vec![rng.random::<f64>()];
            let out = net.forward(&input).expect("forward");
            TrainingSample {
                input,
                targets: out.iter().map(|h| h.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect()).collect(),
                masks: out.iter().map(|h| h.iter().map(|_| rng.random::<f64>() < 0.7).collect()).collect(),
            }
        })
        .collect();
    let (_, grads) = net.huber_backward(&samples).expect("backward");
    let base: Vec<f64> = net.values().collect();
    let analytic: Vec<f64> = grads.values().collect();
    let loss_at = |v: &[f64]| NetworkParams::from_values(&spec, v).expect("values").huber_backward(&samples).expect("loss").0;
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
        let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-3);
        worst = worst.max(err);
    }
    r.record("backprop vs central differences", worst < 1e-4, format!("max relative error {worst:.2e} over {} params", base.len()));
}

fn codec_checks(r: &mut Report) {
    let mut ok = true;
    let comb = ActionCodec::full(ActionMode::Combinatorial);
    ok &= comb.joint_size() == 2401;
    let mut seen = vec![false; 2401];
    for a in 0..2401 {
        let params = comb.decode(&[a], 10, 100).expect("decode");
        let back = comb.encode(&params).expect("encode");
        ok &= back == vec![a];
        seen[a] = true;
    }
    ok &= seen.iter().all(|&s| s);
    let fact = ActionCodec::full(ActionMode::Factored);
    for a in 0..2401usize {
        let branches = vec![a / 343, a / 49 % 7, a / 7 % 7, a % 7];
        ok &= fact.encode(&fact.decode(&branches, 10, 100).expect("decode")).ok() == Some(branches);
    }
    let single = ActionCodec::new(ActionMode::Factored, &[Param::LambdaM]).expect("mask");
    for a in 0..7 {
        let p = single.decode(&[a], 50, 100).expect("decode");
        ok &= p.lambda_c == p.lambda_m && p.alpha == 1.0 && p.beta == 1.0;
    }
    let pair = ActionCodec::new(ActionMode::Combinatorial, &[Param::Alpha, Param::LambdaM]).expect("mask");
    ok &= pair.joint_size() == 49;
    r.record("action codec bijective over 2401 actions; masks", ok, "combinatorial and factored".into());
}

fn statistics(r: &mut Report) {
    let mut rng = RngStream::new(8, 0);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let a: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0) + rng.random_range(-0.6..0.6)).collect();
        let b = vec![0.0; 25];
        let exact = wilcoxon_signed_rank(&a, &b).expect("exact");
        let approx = wilcoxon_signed_rank_normal(&a, &b).expect("normal");
        if exact.method == WilcoxonMethod::Exact {
            worst = worst.max((exact.p_value - approx.p_value).abs());
        }
    }
    let five = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).expect("w");
    let exact_ok = worst <= 0.01 && (five.p_value - 0.0625).abs() < 1e-12;
    r.record("wilcoxon exact vs normal approximation", exact_ok, format!("max |Δp| = {worst:.4} at 25 pairs"));

    let normal = Normal::new(0.0, 1.0).expect("normal");
    let reps = 10_000;
    let mut rejected = 0;
    for _ in 0..reps {
        let a: Vec<f64> = (0..60).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..60).map(|_| normal.sample(&mut rng)).collect();
        rejected += usize::from(wilcoxon_signed_rank(&a, &b).expect("w").p_value <= 0.01);
    }
    let rate = rejected as f64 / reps as f64;
    r.record("wilcoxon null calibration", (0.005..=0.02).contains(&rate), format!("rejection rate {rate:.4} at level 0.01"));

    let h1 = holm_bonferroni(&[0.001, 0.02, 0.04], 0.01).expect("holm");
    let h2 = holm_bonferroni(&[0.001, 0.004], 0.01).expect("holm");
    let h3 = holm_bonferroni(&[0.009], 0.01).expect("holm");
    let ok = h1.reject == [true, false, false] && h2.reject == [true, true] && h3.reject == [true];
    r.record("holm step-down hand cases", ok, format!("{:?} {:?} {:?}", h1.reject, h2.reject, h3.reject));
}

fn determinism(r: &mut Report) {
    let policy = SelfAdjustingPolicy::one_fifth(1.5).expect("F");
    let seeds = seed_range(64);
    let a = evaluate_policy(&policy, 300, MASTER, &seeds, default_cutoff(300), 1).expect("eval");
    let b = evaluate_policy(&policy, 300, MASTER, &seeds, default_cutoff(300), 4).expect("eval");
    let config = TrainConfig {
        n: 20,
        warmup: 300,
        batch_size: 64,
        budget: 1200,
        eval_interval: 600,
        eval_runs: 10,
        final_eval_runs: 20,
        top_k: 2,
        hidden: vec![16],
        ..TrainConfig::default()
    };
    let codec = config.codec().expect("codec");
    let t1 = train(&config, &codec, 9).expect("train");
    let t2 = train(&config, &codec, 9).expect("train");
    let same_train = t1.curve == t2.curve && t1.best_checkpoint().params == t2.best_checkpoint().params;
    r.record(
        "determinism across thread counts and repeated training",
        a.runs == b.runs && same_train,
        "evaluation with 1 vs 4 threads; two identical training runs".into(),
    );
}

fn main() {
    let start = Instant::now();
    let mut report = Report { results: Vec::new() };
    ga_oracles(&mut report);
    gradient_check(&mut report);
    codec_checks(&mut report);
    statistics(&mut report);
    determinism(&mut report);
    baselines(&mut report);
    derived(&mut report);
    learned(&mut report);
    let failed: Vec<&str> = report.results.iter().filter(|(_, p)| !p).map(|(n, _)| n.as_str()).collect();
    println!(
        "\nacceptance: {} passed, {} failed in {:.0?}",
        report.results.len() - failed.len(),
        failed.len(),
        start.elapsed()
    );
    if !failed.is_empty() {
        for f in &failed {
            println!("  failed: {f}");
        }
        std::process::exit(1);
    }
}
