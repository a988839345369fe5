//! End-to-end comparison of joint (continuation) training against the two-step
//! learn-then-threshold baseline.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;

use ndarray::ArrayView2;

use crate::codes::{pack, ternarize, PackedCode};
use crate::config::{DataSource, ExperimentConfig};
use crate::dataset::{gen_synthetic, make_splits, read_features, read_labels, read_splits, Dataset};
use crate::error::{Error, Result};
use crate::network::{train_with, Arm, Network, NetworkConfig, TrainConfig, TrainLog, TrainOptions};
use crate::retrieval::{mean_ap, ApNormalization, Cutoff, EvalReport, RetrievalIndex};

/// Builds the dataset a config describes: generated, or read from disk.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic { .. } => gen_synthetic(&cfg.synthetic_spec().expect("synthetic source")),
        DataSource::Files {
            features,
            labels,
            splits,
        } => {
            let features = read_features(BufReader::new(File::open(features)?))?;
            let labels = read_labels(BufReader::new(File::open(labels)?))?;
            let splits = match splits {
                Some(p) => read_splits(BufReader::new(File::open(p)?))?,
                None => make_splits(&labels, &cfg.split, cfg.data_seed)?,
            };
            Dataset::new(features, labels, splits)
        }
    }
}

/// Squashed hash features of every row, hard-thresholded at the network's
/// alpha and packed.
pub fn encode(net: &Network, features: ArrayView2<f64>) -> Result<Vec<PackedCode>> {
    let h = net.hash_features(features)?;
    let alpha = net.config().activation.alpha();
    h.outer_iter()
        .map(|row| ternarize(row.as_slice().expect("standard layout"), alpha).map(|c| pack(&c)))
        .collect()
}

/// Codes for the retrieval items (index) and query items of `ds`, evaluated
/// with the dataset's label sets. Report query ids are dataset item ids.
pub fn evaluate(ds: &Dataset, codes: &[PackedCode], cutoff: Cutoff, norm: ApNormalization) -> Result<EvalReport> {
    if codes.len() != ds.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} codes", ds.len()),
            got: codes.len().to_string(),
        });
    }
    let pick = |ids: &[usize]| ids.iter().map(|&i| codes[i].clone()).collect::<Vec<_>>();
    let s = &ds.splits;
    let index = RetrievalIndex::new(&pick(&s.retrieval), ds.labels_of(&s.retrieval))?;
    let mut report = mean_ap(&index, &pick(&s.query), &ds.labels_of(&s.query), cutoff, norm)?;
    report.query_ids = s.query.clone();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub network: Network,
    pub log: TrainLog,
    /// One code per dataset item.
    pub codes: Vec<PackedCode>,
}

fn training_labels(ds: &Dataset, num_classes: usize) -> Result<Vec<usize>> {
    ds.splits
        .train
        .iter()
        .map(|&i| {
            let l = ds.labels[i].primary() as usize;
            if l >= num_classes {
                Err(Error::OutOfRange {
                    what: "label",
                    value: l,
                    limit: num_classes,
                })
            } else {
                Ok(l)
            }
        })
        .collect()
}

/// Trains one arm on the train split, logging stage-end quantization error on
/// the retrieval split, and encodes every item.
pub fn run_arm(ds: &Dataset, net_cfg: &NetworkConfig, train_cfg: &TrainConfig, arm: Arm) -> Result<ArmResult> {
    let x = ds.rows_f64(&ds.splits.train);
    let y = training_labels(ds, net_cfg.num_classes)?;
    let monitor = ds.rows_f64(&ds.splits.retrieval);
    let opts = TrainOptions {
        arm,
        monitor: (!ds.splits.retrieval.is_empty()).then(|| monitor.view()),
    };
    let (network, log) = train_with(net_cfg, train_cfg, x.view(), &y, opts)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let codes = encode(&network, ds.rows_f64(&all).view())?;
    Ok(ArmResult { network, log, codes })
}

/// Learns features with the ternary layer replaced by the identity, then
/// thresholds them afterwards. Same hyperparameters as the joint arm.
pub fn two_step_baseline(ds: &Dataset, net_cfg: &NetworkConfig, train_cfg: &TrainConfig) -> Result<ArmResult> {
    run_arm(ds, net_cfg, train_cfg, Arm::TwoStep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub map: f64,
    /// `(k, mean |f_k − g|)` on the retrieval set at each stage end.
    pub stage_errors: Vec<(u32, f64)>,
    pub first_loss: f64,
    pub final_loss: f64,
}

impl ArmSummary {
    fn from_run(run: &ArmResult, report: &EvalReport) -> Self {
        Self {
            map: report.map,
            stage_errors: run.log.stage_errors(),
            first_loss: run.log.epochs.first().map_or(f64::NAN, |e| e.loss),
            final_loss: run.log.epochs.last().map_or(f64::NAN, |e| e.loss),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub continuation: ArmSummary,
    pub two_step: ArmSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub code_dim: usize,
    pub cutoff: Cutoff,
    /// `(k, epochs at k)` in schedule order.
    pub k_trajectory: Vec<(u32, usize)>,
    pub seeds: Vec<SeedResult>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

impl ExperimentReport {
    pub fn median_continuation_map(&self) -> f64 {
        median(&self.seeds.iter().map(|s| s.continuation.map).collect::<Vec<_>>())
    }

    pub fn median_two_step_map(&self) -> f64 {
        median(&self.seeds.iter().map(|s| s.two_step.map).collect::<Vec<_>>())
    }

    /// Per-stage median over seeds of the joint arm's retrieval-set
    /// quantization error.
    pub fn median_stage_errors(&self) -> Vec<(u32, f64)> {
        let Some(first) = self.seeds.first() else {
            return Vec::new();
        };
        (0..first.continuation.stage_errors.len())
            .map(|i| {
                let vals: Vec<f64> = self.seeds.iter().map(|s| s.continuation.stage_errors[i].1).collect();
                (first.continuation.stage_errors[i].0, median(&vals))
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        fn stages(v: &[(u32, f64)]) -> String {
            v.iter()
                .map(|(k, q)| format!("k{k}:{q:.6e}"))
                .collect::<Vec<_>>()
                .join(" ")
        }
        let mut s = String::new();
        let _ = writeln!(s, "code_dim {}", self.code_dim);
        let _ = writeln!(s, "eval_k {}", self.cutoff);
        let traj: Vec<String> = self.k_trajectory.iter().map(|(k, n)| format!("{k}x{n}")).collect();
        let _ = writeln!(s, "k_trajectory {}", traj.join(" "));
        for r in &self.seeds {
            let _ = writeln!(
                s,
                "seed {} continuation_map {:.6} two_step_map {:.6}",
                r.seed, r.continuation.map, r.two_step.map
            );
            for (name, arm) in [("continuation", &r.continuation), ("two_step", &r.two_step)] {
                let _ = writeln!(
                    s,
                    "seed {} {name} loss {:.6} -> {:.6} stage_quant_error {}",
                    r.seed,
                    arm.first_loss,
                    arm.final_loss,
                    stages(&arm.stage_errors)
                );
            }
        }
        let _ = writeln!(s, "median_stage_quant_error {}", stages(&self.median_stage_errors()));
        let _ = writeln!(
            s,
            "median continuation_map {:.6} two_step_map {:.6}",
            self.median_continuation_map(),
            self.median_two_step_map()
        );
        s
    }
}

fn k_trajectory(train: &TrainConfig) -> Result<Vec<(u32, usize)>> {
    let mut traj: Vec<(u32, usize)> = Vec::new();
    for e in 0..train.epochs {
        let k = train.schedule.k_at(e)?;
        match traj.last_mut() {
            Some((last, n)) if *last == k => *n += 1,
            _ => traj.push((k, 1)),
        }
    }
    Ok(traj)
}

/// Trains both arms for every seed on the same dataset and evaluates them on
/// the query/retrieval splits. Deterministic for a given config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    run_experiment_on(cfg, &ds)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentReport> {
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let net_cfg = cfg.network_config(ds.input_dim(), ds.num_classes(), seed)?;
        let joint = run_arm(ds, &net_cfg, &cfg.train, Arm::Continuation)?;
        let joint_report = evaluate(ds, &joint.codes, cfg.eval_k, cfg.ap_normalization)?;
        let base = two_step_baseline(ds, &net_cfg, &cfg.train)?;
        let base_report = evaluate(ds, &base.codes, cfg.eval_k, cfg.ap_normalization)?;
        seeds.push(SeedResult {
            seed,
            continuation: ArmSummary::from_run(&joint, &joint_report),
            two_step: ArmSummary::from_run(&base, &base_report),
        });
    }
    Ok(ExperimentReport {
        code_dim: cfg.code_dim,
        cutoff: cfg.eval_k,
        k_trajectory: k_trajectory(&cfg.train)?,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig::parse(
            "classes = 4\nper_class = 30\ninput_dim = 8\nspread = 0.4\ntrain_per_class = 10\n\
             hidden_dims = 16\ncode_dim = 8\nepochs = 10\nstride_epochs = 2\nbatch_size = 16\n\
             lr0 = 0.05\nseeds = 1,2\n",
        )
        .unwrap()
    }

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn experiment_is_deterministic_and_complete() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.seeds.len(), 2);
        assert_eq!(a.k_trajectory, vec![(3, 2), (5, 2), (7, 2), (9, 2), (11, 2)]);
        for r in &a.seeds {
            assert_eq!(r.continuation.stage_errors.len(), 5);
            assert!((0.0..=1.0).contains(&r.continuation.map));
            assert!((0.0..=1.0).contains(&r.two_step.map));
        }
        let text = a.to_text();
        assert!(text.contains("k_trajectory 3x2 5x2 7x2 9x2 11x2"));
        assert!(text.lines().last().unwrap().starts_with("median continuation_map"));
    }

    #[test]
    fn zero_learning_rate_evaluates_initial_codes() {
        let cfg = ExperimentConfig::parse_with_overrides(&tiny_config().to_text(), &["lr0 = 0".into()]).unwrap();
        let ds = load_dataset(&cfg).unwrap();
        let report = run_experiment_on(&cfg, &ds).unwrap();
        for r in &report.seeds {
            // both arms start from the same seeded network and never move
            let net_cfg = cfg.network_config(ds.input_dim(), ds.num_classes(), r.seed).unwrap();
            let init = Network::new(net_cfg).unwrap();
            let all: Vec<usize> = (0..ds.len()).collect();
            let codes = encode(&init, ds.rows_f64(&all).view()).unwrap();
            let expect = evaluate(&ds, &codes, cfg.eval_k, cfg.ap_normalization).unwrap().map;
            assert_eq!(r.continuation.map, expect);
            assert_eq!(r.two_step.map, expect);
        }
    }

    #[test]
    fn baseline_is_deterministic_and_differs_from_joint_arm() {
        let cfg = tiny_config();
        let ds = load_dataset(&cfg).unwrap();
        let net_cfg = cfg.network_config(ds.input_dim(), ds.num_classes(), 5).unwrap();
        let a = two_step_baseline(&ds, &net_cfg, &cfg.train).unwrap();
        let b = two_step_baseline(&ds, &net_cfg, &cfg.train).unwrap();
        assert_eq!(a.codes, b.codes);
        let joint = run_arm(&ds, &net_cfg, &cfg.train, Arm::Continuation).unwrap();
        assert_ne!(a.codes, joint.codes);
    }

    #[test]
    fn evaluate_rejects_wrong_code_count() {
        let cfg = tiny_config();
        let ds = load_dataset(&cfg).unwrap();
        assert!(evaluate(&ds, &[], Cutoff::All, ApNormalization::default()).is_err());
    }
}
