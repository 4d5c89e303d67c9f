//! The growth-and-selection training loop.
//!
//! Each instance starts from an empty network and repeatedly adds one
//! power-term block, trains it (first regularized, then unregularized),
//! rounds every parameter, and measures validation error. Growth stops at
//! `max_blocks` or as soon as a stage fails to cut validation MSE by the
//! early-stop ratio. Several instances run from different seeds and the
//! one with the lowest `mse + complexity_weight * complexity` wins.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, Dataset};
use crate::ensemble::{classify_lp, snap_integer_exponents, LpVerdict};
use crate::error::{Error, Result};
use crate::lp::{complexity, ComplexityBreakdown, LaurentPolynomial};
use crate::network::{adam_step, AdamSettings, LogFeatures, NetworkParams, OptimizerState};
use crate::seed::{self, stream};

/// Every knob of the training loop. Absent JSON keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub instances: usize,
    pub complexity_weight: f64,
    pub l1: f64,
    pub l2: f64,
    pub max_blocks: usize,
    pub epochs_per_stage: usize,
    pub rounding_precision: f64,
    pub early_stop_ratio: f64,
    pub reg_switch_fraction: f64,
    pub validation_fraction: f64,
    pub base_lr: f64,
    /// Per-epoch learning-rate factor; `None` means `0.1^(1 / epochs_per_stage)`.
    pub lr_decay: Option<f64>,
    pub batch_size: usize,
    /// Training sets up to this size are used whole for every step.
    pub full_batch_max: usize,
    pub init_scale: f64,
    pub integer_snap_tol: f64,
    pub coeff_rtol: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub master_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            instances: 4,
            complexity_weight: 1e-6,
            l1: 1e-4,
            l2: 1e-4,
            max_blocks: 4,
            epochs_per_stage: 500,
            rounding_precision: 1e-3,
            early_stop_ratio: 0.8,
            reg_switch_fraction: 0.5,
            validation_fraction: 0.2,
            base_lr: 0.01,
            lr_decay: None,
            batch_size: 32,
            full_batch_max: 0,
            init_scale: 0.5,
            integer_snap_tol: 1e-3,
            coeff_rtol: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            master_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        };
        check(self.instances >= 1, "instances must be >= 1")?;
        check(self.max_blocks >= 1, "max_blocks must be >= 1")?;
        check(self.epochs_per_stage >= 1, "epochs_per_stage must be >= 1")?;
        check(
            self.early_stop_ratio > 0.0 && self.early_stop_ratio < 1.0,
            "early_stop_ratio must lie in (0, 1)",
        )?;
        check(
            (0.0..=1.0).contains(&self.reg_switch_fraction),
            "reg_switch_fraction must lie in [0, 1]",
        )?;
        check(
            self.validation_fraction > 0.0 && self.validation_fraction < 1.0,
            "validation_fraction must lie in (0, 1)",
        )?;
        check(
            self.rounding_precision > 0.0,
            "rounding_precision must be > 0",
        )?;
        check(self.l1 >= 0.0 && self.l2 >= 0.0, "l1 and l2 must be >= 0")?;
        check(
            self.complexity_weight >= 0.0,
            "complexity_weight must be >= 0",
        )?;
        check(self.base_lr > 0.0, "base_lr must be > 0")?;
        check(
            self.lr_decay.is_none_or(|d| d > 0.0 && d <= 1.0),
            "lr_decay must lie in (0, 1]",
        )?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(self.init_scale >= 0.0, "init_scale must be >= 0")?;
        check(
            self.integer_snap_tol >= 0.0 && self.coeff_rtol >= 0.0,
            "tolerances must be >= 0",
        )?;
        Ok(())
    }

    pub fn adam(&self) -> AdamSettings {
        AdamSettings {
            base_lr: self.base_lr,
            decay: self
                .lr_decay
                .unwrap_or_else(|| 0.1f64.powf(1.0 / self.epochs_per_stage as f64)),
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Seed of instance `index` under this config's master seed.
    pub fn instance_seed(&self, index: usize) -> u64 {
        seed::derive(self.master_seed, &[index as u64])
    }
}

/// `(l1, l2)` in effect at `epoch` of a growth stage.
pub fn regularization_schedule(epoch: usize, config: &TrainConfig) -> (f64, f64) {
    let switch = config.reg_switch_fraction * config.epochs_per_stage as f64;
    if (epoch as f64) < switch {
        (config.l1, config.l2)
    } else {
        (0.0, 0.0)
    }
}

/// One trained model, read off as an equation.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationCandidate {
    pub equation: LaurentPolynomial,
    /// Validation MSE of the selected snapshot.
    pub mse: f64,
    pub complexity: ComplexityBreakdown,
    pub symbolic_error: f64,
    pub instance_id: usize,
    pub blocks_used: usize,
    /// Validation MSE after each completed growth stage.
    pub growth_trace: Vec<f64>,
    /// Set when training hit a non-finite loss.
    pub aborted: Option<String>,
}

impl EquationCandidate {
    pub fn new(
        equation: LaurentPolynomial,
        mse: f64,
        complexity_weight: f64,
        instance_id: usize,
        blocks_used: usize,
    ) -> Self {
        let complexity = complexity(&equation);
        Self {
            symbolic_error: mse + complexity_weight * f64::from(complexity.total),
            equation,
            mse,
            complexity,
            instance_id,
            blocks_used,
            growth_trace: Vec::new(),
            aborted: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub best: EquationCandidate,
    pub all_candidates: Vec<EquationCandidate>,
    pub lp_verdict: LpVerdict,
    pub config_echo: TrainConfig,
    pub wall_time: Duration,
    /// Present when every instance aborted.
    pub error: Option<String>,
}

/// Index of the candidate with the lowest symbolic error; ties go to the
/// lower complexity, then the lower instance id.
pub fn select_best(candidates: &[EquationCandidate]) -> Option<usize> {
    (0..candidates.len()).min_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        ca.symbolic_error
            .total_cmp(&cb.symbolic_error)
            .then(ca.complexity.total.cmp(&cb.complexity.total))
            .then(ca.instance_id.cmp(&cb.instance_id))
    })
}

struct Stage {
    params: NetworkParams,
    mse: f64,
}

/// Runs one growth loop from `instance_seed` and returns its best snapshot.
pub fn train_instance(
    data: &Dataset,
    config: &TrainConfig,
    instance_seed: u64,
    instance_id: usize,
) -> Result<EquationCandidate> {
    config.validate()?;
    let logs = LogFeatures::new(data.inputs(), data.ncols())?;
    let targets = data.targets();
    let (train_rows, val_rows) = split_indices(
        data.len(),
        1.0 - config.validation_fraction,
        seed::derive(instance_seed, &[stream::SPLIT]),
    )?;

    let mut init_rng = seed::rng(seed::derive(instance_seed, &[stream::INIT]));
    let mut shuffle_rng = seed::rng(seed::derive(instance_seed, &[stream::SHUFFLE]));
    let mut params = NetworkParams::empty(data.ncols());
    let mut state = OptimizerState::new(&params, config.adam());
    let mut order = train_rows.clone();
    let full_batch = train_rows.len() <= config.full_batch_max;

    let mut stages: Vec<Stage> = Vec::new();
    let mut previous_mse = f64::INFINITY;
    let mut aborted = None;

    'growth: for _ in 0..config.max_blocks {
        params.grow(config.init_scale, &mut init_rng);
        state.grow();
        let mut grads = params.zeros_like();

        for epoch in 0..config.epochs_per_stage {
            let (l1, l2) = regularization_schedule(epoch, config);
            state.epoch = epoch as u32;
            if !full_batch {
                order.shuffle(&mut shuffle_rng);
            }
            let batch = if full_batch {
                order.len()
            } else {
                config.batch_size
            };
            for rows in order.chunks(batch) {
                let loss = params.loss_and_grad_log(&logs, targets, rows, l1, l2, &mut grads);
                if !loss.is_finite() {
                    aborted = Some(format!("non-finite loss at epoch {epoch}"));
                    break 'growth;
                }
                adam_step(&mut params, &grads, &mut state);
            }
            if !params.is_finite() {
                aborted = Some(format!("non-finite parameters at epoch {epoch}"));
                break 'growth;
            }
        }

        params.round(config.rounding_precision);
        let mse = params.mse_log(&logs, targets, &val_rows);
        if !mse.is_finite() {
            aborted = Some("non-finite validation error".to_string());
            break;
        }
        stages.push(Stage {
            params: params.clone(),
            mse,
        });
        if mse > previous_mse * config.early_stop_ratio {
            break;
        }
        previous_mse = mse;
    }

    let growth_trace: Vec<f64> = stages.iter().map(|s| s.mse).collect();
    // first minimum, i.e. fewest blocks among equal errors
    let best = stages
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mse.total_cmp(&b.1.mse).then(a.0.cmp(&b.0)));
    let mut candidate = match best {
        Some((_, stage)) => {
            let equation =
                snap_integer_exponents(&stage.params.extract_equation(), config.integer_snap_tol)
                    .round_coefficients(config.rounding_precision);
            EquationCandidate::new(
                equation,
                stage.mse,
                config.complexity_weight,
                instance_id,
                stage.params.num_blocks(),
            )
        }
        None => EquationCandidate::new(
            LaurentPolynomial::zero(data.ncols()),
            f64::INFINITY,
            config.complexity_weight,
            instance_id,
            0,
        ),
    };
    candidate.growth_trace = growth_trace;
    candidate.aborted = aborted;
    Ok(candidate)
}

/// Trains `config.instances` independent instances and keeps the one with
/// the lowest symbolic error.
pub fn fit(data: &Dataset, config: &TrainConfig) -> Result<FitReport> {
    config.validate()?;
    let start = Instant::now();
    let candidates = (0..config.instances)
        .into_par_iter()
        .map(|i| train_instance(data, config, config.instance_seed(i), i))
        .collect::<Result<Vec<_>>>()?;
    let best = candidates[select_best(&candidates).expect("instances >= 1")].clone();

    let all_aborted = candidates.iter().all(|c| !c.mse.is_finite());
    let mut lp_verdict = classify_lp(&best.equation, config.integer_snap_tol);
    let error = if all_aborted {
        lp_verdict.is_lp = false;
        Some(
            best.aborted
                .clone()
                .unwrap_or_else(|| "every training instance aborted".to_string()),
        )
    } else {
        None
    };
    Ok(FitReport {
        best,
        all_candidates: candidates,
        lp_verdict,
        config_echo: config.clone(),
        wall_time: start.elapsed(),
        error,
    })
}

impl Serialize for EquationCandidate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("EquationCandidate", 8)?;
        s.serialize_field("equation", &self.equation.to_string())?;
        s.serialize_field("mse", &self.mse)?;
        s.serialize_field("complexity", &self.complexity)?;
        s.serialize_field("se", &self.symbolic_error)?;
        s.serialize_field("blocks", &self.blocks_used)?;
        s.serialize_field("instance", &self.instance_id)?;
        s.serialize_field("growth_trace", &self.growth_trace)?;
        s.serialize_field("aborted", &self.aborted)?;
        s.end()
    }
}

impl FitReport {
    /// The report document written by the CLI. `wall_ms` is zero unless
    /// timings are requested, keeping repeated runs byte-identical.
    pub fn to_json(&self, record_timings: bool) -> serde_json::Value {
        serde_json::json!({
            "best": self.best,
            "candidates": self.all_candidates,
            "lp_verdict": self.lp_verdict.is_lp,
            "offending_exponents": self.lp_verdict.offending_exponents,
            "config": self.config_echo,
            "wall_ms": if record_timings { self.wall_time.as_millis() as u64 } else { 0 },
            "error": self.error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SamplingSpec};
    use crate::lp::parse_equation;

    fn candidate(eq: &str, mse: f64, alpha: f64, id: usize) -> EquationCandidate {
        EquationCandidate::new(parse_equation(eq, 3).unwrap(), mse, alpha, id, 1)
    }

    #[test]
    fn schedule_switches_at_half() {
        let c = TrainConfig::default();
        assert_eq!(regularization_schedule(249, &c), (1e-4, 1e-4));
        assert_eq!(regularization_schedule(250, &c), (0.0, 0.0));
        let never = TrainConfig {
            reg_switch_fraction: 0.0,
            ..c
        };
        assert_eq!(regularization_schedule(0, &never), (0.0, 0.0));
    }

    #[test]
    fn config_defaults_and_json() {
        let c: TrainConfig = serde_json::from_str("{\"instances\": 2}").unwrap();
        assert_eq!(c.instances, 2);
        assert_eq!(c.max_blocks, 4);
        assert_eq!(c.epochs_per_stage, 500);
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<TrainConfig>("{\"instancez\": 2}").is_err());
        assert!((c.adam().decay.powi(500) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                instances: 0,
                ..Default::default()
            },
            TrainConfig {
                max_blocks: 0,
                ..Default::default()
            },
            TrainConfig {
                early_stop_ratio: 1.0,
                ..Default::default()
            },
            TrainConfig {
                reg_switch_fraction: 1.5,
                ..Default::default()
            },
            TrainConfig {
                validation_fraction: 0.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn symbolic_error_argmin() {
        let cands = vec![
            candidate("x1", 0.50001, 0.0, 0),
            candidate("x1", 0.4, 0.0, 1),
        ];
        assert_eq!(select_best(&cands), Some(1));

        let a = candidate("3*x1^2*x2^-1*x3", 0.5, 1e-6, 0);
        let b = candidate("x1^2*x2^-1", 0.5, 1e-6, 1);
        assert_eq!(a.complexity.total, 10);
        assert_eq!(b.complexity.total, 6);
        assert!((a.symbolic_error - 0.50001).abs() < 1e-15);
        assert!((b.symbolic_error - 0.500006).abs() < 1e-15);
        assert_eq!(select_best(&[a.clone(), b.clone()]), Some(1));
        assert_eq!(select_best(&[b, a]), Some(0));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn ties_break_on_instance_id() {
        let cands = vec![candidate("x1", 0.1, 1e-6, 3), candidate("x1", 0.1, 1e-6, 1)];
        assert_eq!(select_best(&cands), Some(1));
    }

    fn dataset(eq: &str, nvars: usize, n: usize, seed: u64) -> Dataset {
        let gt = parse_equation(eq, nvars).unwrap();
        generate(&gt, &SamplingSpec::uniform(nvars, n, seed)).unwrap()
    }

    #[test]
    fn recovers_identity() {
        let data = dataset("x1", 1, 1000, 1);
        let c = train_instance(&data, &TrainConfig::default(), 17, 0).unwrap();
        assert_eq!(c.equation.to_string(), "x1");
        assert_eq!(c.blocks_used, 1);
        assert!(c.mse < 1e-6, "mse {}", c.mse);
        assert!(c.symbolic_error >= c.mse);
    }

    #[test]
    fn early_stop_trace_holds() {
        let data = dataset("3*x1 + 2*x2", 2, 1000, 2);
        let config = TrainConfig::default();
        let c = train_instance(&data, &config, 5, 0).unwrap();
        let t = &c.growth_trace;
        assert!(t.len() <= config.max_blocks);
        if t.len() < config.max_blocks && t.len() >= 2 {
            assert!(t[t.len() - 1] > t[t.len() - 2] * config.early_stop_ratio);
        }
        assert!(c.blocks_used <= t.len());
    }

    #[test]
    fn fit_is_deterministic() {
        let data = dataset("x1^2*x2^-1", 2, 400, 3);
        let config = TrainConfig {
            epochs_per_stage: 100,
            instances: 3,
            ..Default::default()
        };
        let a = fit(&data, &config).unwrap();
        let b = fit(&data, &config).unwrap();
        assert_eq!(a.to_json(false), b.to_json(false));
        assert_eq!(a.all_candidates.len(), 3);
        let idx = select_best(&a.all_candidates).unwrap();
        assert_eq!(a.all_candidates[idx], a.best);
    }
}
