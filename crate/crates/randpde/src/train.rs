//! Full-batch L-BFGS training with periodic resampling, loss records and
//! checkpointing.
//!
//! Each outer iteration optionally refreshes the collocation points and the
//! parameter batch, runs one bounded L-BFGS call on the current batch, and
//! records the training loss plus the loss on a fixed held-out test batch
//! drawn once at startup. Checkpoints are written every 100 outer
//! iterations and at the end.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::chebyshev::SpaceTimeBasis;
use crate::domain::DomainKind;
use crate::lbfgs::{self, LbfgsOptions};
use crate::loss::{
    residual_loss, residual_loss_and_grad, sample_collocation, CollocationBatch, LossWeights,
    SamplingStrategy,
};
use crate::measures::{
    FullNnMeasure, GalerkinNnMeasure, MeasureVariant, NeuralMeasure, PceNnMeasure,
};
use crate::networks::{save_checkpoint, xavier_init, Activation, MlpArchitecture};
use crate::pce::ChaosBasis;
use crate::problems;
use crate::{Error, Result};

/// Everything a training run needs; usually parsed from a config file.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub problem: String,
    pub variant: MeasureVariant,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    /// Total chaos degree (pce_nn only).
    pub pce_degree: usize,
    /// Space-time basis degrees (galerkin_nn only); `degree_x` is ignored
    /// for ODE problems.
    pub galerkin_degree_x: usize,
    pub galerkin_degree_t: usize,
    pub optimizer: LbfgsOptions,
    pub outer_iterations: usize,
    pub domain_resample_period: usize,
    pub param_resample_period: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub n_xi: usize,
    pub n_boundary: usize,
    pub n_initial: usize,
    pub strategy: SamplingStrategy,
    pub seed_init: u64,
    pub seed_domain: u64,
    pub seed_params: u64,
    pub seed_test: u64,
    pub weights: LossWeights,
}

impl TrainConfig {
    /// Collects every violated field instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.problem.is_empty() {
            violations.push("problem: must be set".to_string());
        } else if !problems::PROBLEM_NAMES.contains(&self.problem.as_str()) {
            violations.push(format!("problem: unknown \"{}\"", self.problem));
        }
        for (name, v) in [
            ("hidden_layers", self.hidden_layers),
            ("hidden_width", self.hidden_width),
            ("outer_iterations", self.outer_iterations),
            ("domain_resample_period", self.domain_resample_period),
            ("param_resample_period", self.param_resample_period),
            ("n_x", self.n_x),
            ("n_t", self.n_t),
            ("n_xi", self.n_xi),
            ("n_boundary", self.n_boundary),
            ("n_initial", self.n_initial),
            ("optimizer.max_inner_iterations", self.optimizer.max_iterations),
            ("optimizer.history_size", self.optimizer.history_size),
        ] {
            if v < 1 {
                violations.push(format!("{name}: must be >= 1, got {v}"));
            }
        }
        if !(self.optimizer.learning_rate > 0.0) {
            violations.push(format!(
                "optimizer.learning_rate: must be > 0, got {}",
                self.optimizer.learning_rate
            ));
        }
        if let Err(e) = self.weights.validate() {
            violations.push(format!("weights: {e}"));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations })
        }
    }
}

/// Per-outer-iteration record row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecordRow {
    pub iteration: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub seconds: f64,
    pub resampled_domain: bool,
    pub resampled_params: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingRecord {
    pub rows: Vec<TrainingRecordRow>,
}

impl TrainingRecord {
    /// Full record: `iteration,train_loss,test_loss,seconds,resampled_domain,resampled_params`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "iteration,train_loss,test_loss,seconds,resampled_domain,resampled_params"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iteration,
                r.train_loss,
                r.test_loss,
                r.seconds,
                r.resampled_domain as u8,
                r.resampled_params as u8
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Timing-free subset used for bitwise determinism comparisons:
    /// `iteration,train_loss,test_loss,resampled_domain,resampled_params`.
    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "iteration,train_loss,test_loss,resampled_domain,resampled_params"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iteration,
                r.train_loss,
                r.test_loss,
                r.resampled_domain as u8,
                r.resampled_params as u8
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|_| Error::MissingArtifact(path.into()))?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| Error::CsvFormat {
            path: path.into(),
            message: "empty record".into(),
        })??;
        let has_seconds = header.contains("seconds");
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let expect = if has_seconds { 6 } else { 5 };
            if fields.len() != expect {
                return Err(Error::CsvFormat {
                    path: path.into(),
                    message: format!("expected {expect} fields, got {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::CsvFormat {
                    path: path.into(),
                    message: format!("bad number \"{s}\""),
                })
            };
            let seconds = if has_seconds { parse(fields[3])? } else { 0.0 };
            let off = if has_seconds { 1 } else { 0 };
            rows.push(TrainingRecordRow {
                iteration: parse(fields[0])? as usize,
                train_loss: parse(fields[1])?,
                test_loss: parse(fields[2])?,
                seconds,
                resampled_domain: parse(fields[3 + off])? != 0.0,
                resampled_params: parse(fields[4 + off])? != 0.0,
            });
        }
        Ok(Self { rows })
    }
}

/// Builds the configured measure with Xavier-initialized parameters.
pub fn build_measure(config: &TrainConfig) -> Result<NeuralMeasure> {
    let problem = problems::problem(&config.problem)?;
    let d_ran = problem.params.dimension();
    let d_st = match problem.domain.kind {
        DomainKind::Ode => 1,
        DomainKind::Pde1d => 2,
    };
    let mk_arch = |input, output| {
        MlpArchitecture::new(
            input,
            output,
            config.hidden_layers,
            config.hidden_width,
            config.activation,
        )
    };
    Ok(match config.variant {
        MeasureVariant::FullNn => {
            let arch = mk_arch(d_st + d_ran, 1)?;
            NeuralMeasure::FullNn(FullNnMeasure::new(
                problem.domain,
                problem.params.clone(),
                arch,
                xavier_init(&arch, config.seed_init),
            )?)
        }
        MeasureVariant::PceNn => {
            let basis = ChaosBasis::new(d_ran, config.pce_degree)?;
            let arch = mk_arch(d_st, basis.cardinality())?;
            NeuralMeasure::PceNn(PceNnMeasure::new(
                problem.domain,
                problem.params.clone(),
                arch,
                xavier_init(&arch, config.seed_init),
                basis,
            )?)
        }
        MeasureVariant::GalerkinNn => {
            let degree_x = match problem.domain.kind {
                DomainKind::Ode => 0,
                DomainKind::Pde1d => config.galerkin_degree_x,
            };
            let basis = SpaceTimeBasis::new(problem.domain, degree_x, config.galerkin_degree_t)?;
            let arch = mk_arch(d_ran, basis.cardinality())?;
            NeuralMeasure::GalerkinNn(GalerkinNnMeasure::new(
                problem.domain,
                problem.params.clone(),
                arch,
                xavier_init(&arch, config.seed_init),
                basis,
            )?)
        }
    })
}

/// Test loss on a held-out batch; identical arithmetic to the training loss.
pub fn evaluate_test_loss(
    measure: &NeuralMeasure,
    problem: &crate::domain::RandomProblem,
    test_batch: &CollocationBatch,
    weights: &LossWeights,
) -> Result<f64> {
    residual_loss(measure, problem, test_batch, weights)
}

pub struct TrainOutput {
    pub measure: NeuralMeasure,
    pub record: TrainingRecord,
    pub final_checkpoint: Option<PathBuf>,
}

const CHECKPOINT_PERIOD: usize = 100;

/// Runs the training protocol. When `output_dir` is given, the record CSVs
/// and checkpoints are written there (the directory is created).
///
/// The held-out test batch uses `seed_test` for its points and
/// `seed_test + 1` for its parameter rows. Resample draws derive from
/// `seed_domain + k` / `seed_params + k` with `k` counting refreshes, so a
/// run is fully reproducible from the four seeds.
pub fn train(config: &TrainConfig, output_dir: Option<&Path>) -> Result<TrainOutput> {
    config.validate()?;
    let problem = problems::problem(&config.problem)?;
    let mut measure = build_measure(config)?;
    let weights = config.weights;

    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir)?;
    }

    let sample_points = |sub_seed: u64| {
        sample_collocation(
            &problem,
            config.n_x,
            config.n_t,
            config.n_boundary,
            config.n_initial,
            config.strategy,
            sub_seed,
        )
    };

    let test_batch = CollocationBatch::assemble(
        sample_points(config.seed_test),
        problem.params.sample(config.n_xi, config.seed_test.wrapping_add(1)),
        &problem.params,
    )?;

    let mut domain_counter: u64 = 0;
    let mut param_counter: u64 = 0;
    let mut points = sample_points(config.seed_domain);
    let mut xi = problem.params.sample(config.n_xi, config.seed_params);
    let mut batch = CollocationBatch::assemble(points.clone(), xi.clone(), &problem.params)?;

    let mut record = TrainingRecord::default();
    let mut last_checkpoint: Option<PathBuf> = None;
    let n_params = measure.arch().parameter_count();

    let write_checkpoint = |measure: &NeuralMeasure, tag: &str| -> Result<Option<PathBuf>> {
        let Some(dir) = output_dir else {
            return Ok(None);
        };
        let path = dir.join(format!("checkpoint_{tag}.ckpt"));
        save_checkpoint(&path, measure.arch(), &measure.parameter_vector())?;
        Ok(Some(path))
    };

    let mut abort: Option<Error> = None;
    for iteration in 0..config.outer_iterations {
        let (resample_domain, resample_params) = crate::loss::resample_due(
            iteration,
            config.domain_resample_period,
            config.param_resample_period,
        );
        if resample_domain {
            domain_counter += 1;
            points = sample_points(config.seed_domain.wrapping_add(domain_counter));
        }
        if resample_params {
            param_counter += 1;
            xi = problem
                .params
                .sample(config.n_xi, config.seed_params.wrapping_add(param_counter));
        }
        if resample_domain || resample_params {
            batch = CollocationBatch::assemble(points.clone(), xi.clone(), &problem.params)?;
        }

        let started = Instant::now();
        let theta0 = measure.theta().to_vec();
        let outcome = {
            let objective = |theta: &[f64], grad: &mut [f64]| -> Result<f64> {
                if theta.iter().any(|v| !v.is_finite()) {
                    grad.fill(0.0);
                    return Ok(f64::INFINITY);
                }
                measure.set_theta(theta.to_vec())?;
                match residual_loss_and_grad(&measure, &problem, &batch, &weights, grad) {
                    Ok(l) => Ok(l),
                    Err(Error::NonFiniteResidual { .. }) => {
                        grad.fill(0.0);
                        Ok(f64::INFINITY)
                    }
                    Err(e) => Err(e),
                }
            };
            lbfgs::minimize(&config.optimizer, theta0, objective)?
        };
        debug_assert_eq!(outcome.theta.len(), n_params);
        let train_loss = outcome.loss;
        if train_loss.is_finite() {
            measure.set_theta(outcome.theta)?;
        }
        let test_loss =
            evaluate_test_loss(&measure, &problem, &test_batch, &weights).unwrap_or(f64::NAN);
        let seconds = started.elapsed().as_secs_f64();

        record.rows.push(TrainingRecordRow {
            iteration,
            train_loss,
            test_loss,
            seconds,
            resampled_domain: resample_domain,
            resampled_params: resample_params,
        });

        if !train_loss.is_finite() || !test_loss.is_finite() {
            abort = Some(Error::NonFiniteLoss {
                iteration,
                checkpoint: last_checkpoint.clone(),
            });
            break;
        }

        if (iteration + 1) % CHECKPOINT_PERIOD == 0 {
            if let Some(path) = write_checkpoint(&measure, &format!("{:06}", iteration + 1))? {
                last_checkpoint = Some(path);
            }
        }
    }

    if abort.is_none() {
        if let Some(path) = write_checkpoint(&measure, "final")? {
            last_checkpoint = Some(path);
        }
    }

    if let Some(dir) = output_dir {
        record.write_csv(&dir.join("record.csv"))?;
        record.write_loss_csv(&dir.join("loss.csv"))?;
    }

    if let Some(err) = abort {
        return Err(err);
    }

    Ok(TrainOutput {
        measure,
        record,
        final_checkpoint: last_checkpoint,
    })
}

/// Least-squares slope of a short loss-curve window.
fn window_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (v - mean_y);
        den += dx * dx;
    }
    num / den
}

/// Scans for an overfitting signature: a window where the test loss trends
/// up while the train loss trends down. Returns the first such window start.
pub fn detect_overfitting_window(record: &TrainingRecord, window: usize) -> Option<usize> {
    if record.rows.len() < window || window < 2 {
        return None;
    }
    // compare on log losses so spikes do not dominate
    let train: Vec<f64> = record.rows.iter().map(|r| r.train_loss.max(1e-300).ln()).collect();
    let test: Vec<f64> = record.rows.iter().map(|r| r.test_loss.max(1e-300).ln()).collect();
    for start in 0..=(record.rows.len() - window) {
        let ts = window_slope(&train[start..start + window]);
        let vs = window_slope(&test[start..start + window]);
        if vs > 0.0 && ts < 0.0 {
            return Some(start);
        }
    }
    None
}
