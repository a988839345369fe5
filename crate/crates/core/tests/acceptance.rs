//! Acceptance suite. Runs every criterion at its pinned tolerance and time
//! budget, prints one PASS/FAIL line per criterion, and exits non-zero if any
//! criterion fails.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnh::codes::{read_codes, write_codes};
use tnh::dataset::{read_features, write_features};
use tnh::experiment::{load_dataset, run_arm, run_experiment_on};
use tnh::network::{read_checkpoint, write_checkpoint};
use tnh::{
    encode_binary, hamming, mean_ap, pack, quantization_error, smooth_ternary, smooth_ternary_grad, ActivationConfig,
    ApNormalization, Arm, Cutoff, ExperimentConfig, ExperimentReport, HashActivation, LabelSet, Network, NetworkConfig,
    PackedCode, RetrievalIndex, TernaryCode, Trit,
};

const REFERENCE_CONFIG: &str = include_str!("../../../configs/reference.cfg");
const KS: [u32; 5] = [3, 5, 7, 9, 11];

struct Outcome {
    pass: bool,
    detail: String,
}

fn grid() -> Vec<f64> {
    (-200..=200).map(|i| f64::from(i) / 100.0).collect()
}

fn c1_gradient_fidelity() -> Outcome {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in KS {
        let cfg = ActivationConfig::new(0.5, k).unwrap();
        for x in grid() {
            let analytic = smooth_ternary_grad(x, &cfg).unwrap();
            let fd = (smooth_ternary(x + h, &cfg).unwrap() - smooth_ternary(x - h, &cfg).unwrap()) / (2.0 * h);
            worst = worst.max((analytic - fd).abs() / analytic.abs().max(1.0));
        }
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("max rel err {worst:.3e} (tol 1e-4)"),
    }
}

/// `ln(1 - tanh(v))` for `v > 0`, evaluated in log space so it stays finite
/// when the gap itself underflows.
fn ln_saturated_gap(v: f64) -> f64 {
    std::f64::consts::LN_2 - 2.0 * v - (-2.0 * v).exp().ln_1p()
}

fn c2_continuation_convergence() -> Outcome {
    let mut violations = Vec::new();
    let mut strict_direct = 0usize;
    let mut strict_log = 0usize;
    for x in grid() {
        if x.abs() == 0.5 {
            continue;
        }
        let gaps: Vec<f64> = KS
            .iter()
            .map(|&k| quantization_error(x, &ActivationConfig::new(0.5, k).unwrap()).unwrap())
            .collect();
        for (i, w) in gaps.windows(2).enumerate() {
            if w[1] > w[0] {
                violations.push(format!("x={x} k={}->{}: {} > {}", KS[i], KS[i + 1], w[1], w[0]));
            }
            if x == 0.0 {
                continue;
            }
            if w[1] < w[0] {
                strict_direct += 1;
            } else if w[0] == 0.0 && x.abs() > 0.5 {
                // both gaps underflow f64; compare them in log space
                let u = (x / 0.5).abs();
                let v0 = u.powi(KS[i] as i32);
                let v1 = u.powi(KS[i + 1] as i32);
                if ln_saturated_gap(v1) < ln_saturated_gap(v0) {
                    strict_log += 1;
                } else {
                    violations.push(format!("x={x} k={}->{}: not strict in log space", KS[i], KS[i + 1]));
                }
            } else {
                violations.push(format!("x={x} k={}->{}: equal gaps {}", KS[i], KS[i + 1], w[0]));
            }
        }
    }
    Outcome {
        pass: violations.is_empty(),
        detail: format!(
            "{strict_direct} strict steps resolved in f64, {strict_log} via log-space gap, {} violations{}",
            violations.len(),
            violations.first().map_or(String::new(), |v| format!(" (first: {v})"))
        ),
    }
}

fn c3_network_gradient_check() -> Outcome {
    let cfg = NetworkConfig {
        input_dim: 8,
        hidden_dims: vec![16],
        code_dim: 6,
        num_classes: 3,
        activation: ActivationConfig::default(),
        seed: 2024,
    };
    let net = Network::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = Array2::from_shape_fn((4, 8), |_| rng.random_range(-1.0..1.0));
    let labels = [0usize, 2, 1, 2];
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for k in [3, 11] {
        let act = HashActivation::Smooth(k);
        let analytic: Vec<f64> = net
            .backward(x.view(), &labels, act)
            .unwrap()
            .grads
            .values()
            .copied()
            .collect();
        let mut probe = net.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *probe.parameters_mut().nth(i).unwrap();
            *probe.parameters_mut().nth(i).unwrap() = orig + h;
            let up = probe.loss(x.view(), &labels, act).unwrap();
            *probe.parameters_mut().nth(i).unwrap() = orig - h;
            let down = probe.loss(x.view(), &labels, act).unwrap();
            *probe.parameters_mut().nth(i).unwrap() = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-5));
            checked += 1;
        }
    }
    Outcome {
        pass: worst < 1e-3,
        detail: format!("{checked} coordinates, max rel err {worst:.3e} (tol 1e-3)"),
    }
}

fn brute_hamming(a: &TernaryCode, b: &TernaryCode) -> u32 {
    encode_binary(a)
        .bytes()
        .zip(encode_binary(b).bytes())
        .filter(|(x, y)| x != y)
        .count() as u32
}

fn random_code(rng: &mut ChaCha8Rng, d: usize) -> TernaryCode {
    TernaryCode::new(
        (0..d)
            .map(|_| match rng.random_range(0..3) {
                0 => Trit::Neg,
                1 => Trit::Zero,
                _ => Trit::Pos,
            })
            .collect(),
    )
}

fn c4_distance_correctness() -> Outcome {
    let all: Vec<TernaryCode> = (0..81)
        .map(|mut n: i32| {
            let v: Vec<i8> = (0..4)
                .map(|_| {
                    let t = (n % 3) as i8 - 1;
                    n /= 3;
                    t
                })
                .collect();
            TernaryCode::from_values(&v).unwrap()
        })
        .collect();
    let mut mismatches = 0usize;
    let mut pairs = 0usize;
    for a in &all {
        for b in &all {
            pairs += 1;
            if hamming(&pack(a), &pack(b)).unwrap() != brute_hamming(a, b) {
                mismatches += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(128);
    for _ in 0..10_000 {
        let a = random_code(&mut rng, 128);
        let b = random_code(&mut rng, 128);
        pairs += 1;
        if hamming(&pack(&a), &pack(&b)).unwrap() != brute_hamming(&a, &b) {
            mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0 && pairs == 81 * 81 + 10_000,
        detail: format!("{pairs} pairs, {mismatches} mismatches"),
    }
}

/// Ranks by naive per-trit distance with a comparison sort, then computes AP
/// by direct summation.
fn oracle_map(
    index: &[TernaryCode],
    index_labels: &[u32],
    queries: &[TernaryCode],
    query_labels: &[u32],
    k: Cutoff,
) -> f64 {
    let mut total = 0.0;
    for (q, &ql) in queries.iter().zip(query_labels) {
        let mut ranked: Vec<(u32, usize)> = index
            .iter()
            .enumerate()
            .map(|(id, c)| {
                let d: u32 = c
                    .values()
                    .iter()
                    .zip(q.values())
                    .map(|(a, b)| u32::from((a - b).unsigned_abs()))
                    .sum();
                (d, id)
            })
            .collect();
        ranked.sort();
        let depth = match k {
            Cutoff::All => ranked.len(),
            Cutoff::Top(k) => k.min(ranked.len()),
        };
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (rank, &(_, id)) in ranked[..depth].iter().enumerate() {
            if index_labels[id] == ql {
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        total += if hits == 0 { 0.0 } else { sum / hits as f64 };
    }
    total / queries.len() as f64
}

fn c5_map_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 32;
    let index: Vec<TernaryCode> = (0..200).map(|_| random_code(&mut rng, d)).collect();
    let index_labels: Vec<u32> = (0..200).map(|_| rng.random_range(0..10)).collect();
    let queries: Vec<TernaryCode> = (0..50).map(|_| random_code(&mut rng, d)).collect();
    let query_labels: Vec<u32> = (0..50).map(|_| rng.random_range(0..10)).collect();

    let packed: Vec<PackedCode> = index.iter().map(pack).collect();
    let ridx = RetrievalIndex::new(&packed, index_labels.iter().map(|&l| LabelSet::single(l)).collect()).unwrap();
    let qp: Vec<PackedCode> = queries.iter().map(pack).collect();
    let ql: Vec<LabelSet> = query_labels.iter().map(|&l| LabelSet::single(l)).collect();

    let mut details = Vec::new();
    let mut pass = true;
    for k in [Cutoff::All, Cutoff::Top(20)] {
        let got = mean_ap(&ridx, &qp, &ql, k, ApNormalization::RelevantInTopK)
            .unwrap()
            .map;
        let expect = oracle_map(&index, &index_labels, &queries, &query_labels, k);
        pass &= got == expect;
        details.push(format!("K={k}: {got:.9} vs oracle {expect:.9}"));
    }
    Outcome {
        pass,
        detail: details.join(", "),
    }
}

fn reference_config(code_dim: usize) -> ExperimentConfig {
    ExperimentConfig::parse_with_overrides(REFERENCE_CONFIG, &[format!("code_dim={code_dim}")]).unwrap()
}

fn c6_quantization_trend(report: &ExperimentReport) -> Outcome {
    let stages = report.median_stage_errors();
    let ks: Vec<u32> = stages.iter().map(|s| s.0).collect();
    let monotone = stages.windows(2).all(|w| w[1].1 <= w[0].1);
    let finite = report.seeds.iter().all(|s| {
        [&s.continuation, &s.two_step].iter().all(|a| {
            a.first_loss.is_finite() && a.final_loss.is_finite() && a.stage_errors.iter().all(|e| e.1.is_finite())
        })
    });
    let loss_drops = report
        .seeds
        .iter()
        .all(|s| s.continuation.final_loss < s.continuation.first_loss);
    let text: Vec<String> = stages.iter().map(|(k, q)| format!("k{k}:{q:.4e}")).collect();
    Outcome {
        pass: ks == KS && monotone && finite && loss_drops,
        detail: format!(
            "median stage-end |f-g| {} (non-increasing: {monotone}, finite: {finite}, loss decreases: {loss_drops})",
            text.join(" ")
        ),
    }
}

fn c7_central_claim(reports: &[&ExperimentReport]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for r in reports {
        let (c, t) = (r.median_continuation_map(), r.median_two_step_map());
        pass &= c > t && r.seeds.len() == 3 && r.cutoff == Cutoff::All;
        details.push(format!("d={}: continuation {c:.4} vs two-step {t:.4}", r.code_dim));
    }
    Outcome {
        pass,
        detail: details.join("; "),
    }
}

fn c8_determinism_and_formats() -> Outcome {
    let small = ExperimentConfig::parse(
        "classes = 5\nper_class = 60\ninput_dim = 16\nspread = 0.3\ntrain_per_class = 20\n\
         hidden_dims = 32\ncode_dim = 12\nepochs = 10\nstride_epochs = 2\nlr0 = 0.01\nseeds = 4,5\n",
    )
    .unwrap();
    let mut problems = Vec::new();

    let ds_a = load_dataset(&small).unwrap();
    let ds_b = load_dataset(&small).unwrap();
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    write_features(&mut fa, &ds_a.features).unwrap();
    write_features(&mut fb, &ds_b.features).unwrap();
    if fa != fb {
        problems.push("synthetic data differs between runs");
    }
    let back = read_features(&fa[..]).unwrap();
    let mut fa2 = Vec::new();
    write_features(&mut fa2, &back).unwrap();
    if back != ds_a.features || fa2 != fa {
        problems.push("TFV1 round trip");
    }

    let r1 = run_experiment_on(&small, &ds_a).unwrap().to_text();
    let r2 = run_experiment_on(&small, &ds_b).unwrap().to_text();
    if r1 != r2 {
        problems.push("experiment report differs between runs");
    }

    let net_cfg = small.network_config(ds_a.input_dim(), ds_a.num_classes(), 4).unwrap();
    let run = run_arm(&ds_a, &net_cfg, &small.train, Arm::Continuation).unwrap();
    let mut ck = Vec::new();
    write_checkpoint(&mut ck, &run.network, &small.train.schedule).unwrap();
    let loaded = read_checkpoint(&ck[..]).unwrap();
    let mut ck2 = Vec::new();
    write_checkpoint(&mut ck2, &loaded.network, &loaded.schedule).unwrap();
    if loaded.network != run.network || loaded.schedule != small.train.schedule || ck2 != ck {
        problems.push("TNH1 round trip");
    }

    let mut codes = Vec::new();
    write_codes(&mut codes, small.code_dim, &run.codes).unwrap();
    let (d, decoded) = read_codes(&codes[..]).unwrap();
    let mut codes2 = Vec::new();
    write_codes(&mut codes2, d, &decoded).unwrap();
    if decoded != run.codes || codes2 != codes {
        problems.push("TNC1 round trip");
    }

    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "report {} bytes identical across runs; TFV1 {} B, TNH1 {} B, TNC1 {} B round-trip exactly",
                r1.len(),
                fa.len(),
                ck.len(),
                codes.len()
            )
        } else {
            problems.join(", ")
        },
    }
}

fn report(id: u32, name: &str, budget: Duration, elapsed: Duration, outcome: Outcome) -> bool {
    let in_time = elapsed <= budget;
    let pass = outcome.pass && in_time;
    println!(
        "[{}] criterion {id}: {name} | {} | {:.2?} (budget {:?}{})",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed,
        budget,
        if in_time { "" } else { ", exceeded" }
    );
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn main() {
    // `cargo test -- <filter>` passes extra arguments; the suite always runs in full.
    let mut all = true;

    let (o, t) = timed(c1_gradient_fidelity);
    all &= report(1, "activation gradient fidelity", Duration::from_secs(1), t, o);

    let (o, t) = timed(c2_continuation_convergence);
    all &= report(2, "continuation convergence", Duration::from_secs(1), t, o);

    let (o, t) = timed(c3_network_gradient_check);
    all &= report(3, "network gradient check", Duration::from_secs(10), t, o);

    let (o, t) = timed(c4_distance_correctness);
    all &= report(4, "packed Hamming distance", Duration::from_secs(5), t, o);

    let (o, t) = timed(c5_map_oracle_equivalence);
    all &= report(5, "mAP oracle equivalence", Duration::from_secs(5), t, o);

    let cfg16 = reference_config(16);
    let (r16, t16) = timed(|| {
        let ds = load_dataset(&cfg16).unwrap();
        run_experiment_on(&cfg16, &ds).unwrap()
    });
    let o = c6_quantization_trend(&r16);
    all &= report(6, "quantization-error trend", Duration::from_secs(5 * 60), t16, o);

    let cfg32 = reference_config(32);
    let (r32, t32) = timed(|| {
        let ds = load_dataset(&cfg32).unwrap();
        run_experiment_on(&cfg32, &ds).unwrap()
    });
    let o = c7_central_claim(&[&r16, &r32]);
    all &= report(
        7,
        "joint beats two-step (d=16, d=32)",
        Duration::from_secs(15 * 60),
        t16 + t32,
        o,
    );

    let (o, t) = timed(c8_determinism_and_formats);
    all &= report(8, "determinism and format round-trips", Duration::from_secs(60), t, o);

    println!("\nreference report, d=16:\n{}", r16.to_text());
    println!("reference report, d=32:\n{}", r32.to_text());

    if all {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
}
