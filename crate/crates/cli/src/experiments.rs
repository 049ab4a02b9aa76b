//! Dataset generation and IO, final-layer training, generalization-gap
//! measurement, and the (N, p) grid sweep.
//!
//! All generators draw from a caller-supplied [`SeededRng`], and the sweep
//! derives one substream per grid cell and per theta draw, so every product
//! of this module is reproducible from a single master seed.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use deqcert_core::bound::{chain_from_constants, generalization_bound, BoundError, BoundReport};
use deqcert_core::constants::{estimate_constants, ConstantsError, ConstantsReport};
use deqcert_core::fixed_point::{solve, SolveConfig, SolveError};
use deqcert_core::losses::{loss_grad, loss_value, LossError, LossKind};
use deqcert_core::numerics::{extreme_eigs_sym, DenseMatrix, NumericsError, SeededRng};
use deqcert_core::operators::{
    certify, sample_certified, Activation, CertifiedParams, CertifyOptions, FamilyConfig,
    FamilyKind, FinalLayer, OperatorError, OperatorSpec, ParamSet,
};

/// `λ_min/λ_max` floor below which a sampled forward matrix counts as rank
/// deficient and is redrawn.
const FORWARD_RANK_FLOOR: f64 = 1e-8;

/// Redraw budget for rank-deficient forward matrices.
const FORWARD_REDRAWS: usize = 5;

/// Mean training loss at or above this value counts as divergence.
const DIVERGENCE_CEILING: f64 = 1e6;

/// Frobenius radius of the final-layer parameter ball; training reprojects
/// onto it after every step.
const PHI_RADIUS: f64 = 1.0;

/// Held-out sets are four times the training set, capped.
pub const HELD_OUT_FACTOR: u64 = 4;
pub const HELD_OUT_CAP: u64 = 100_000;

/// Magic numbers of the idx image and label containers.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Regression,
    Classification,
}

/// Provenance of a generated dataset: enough to regenerate or audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    pub noise_pct: f64,
    /// Forward operator of an inverse-problem dataset; `None` otherwise.
    pub forward: Option<DenseMatrix>,
}

/// A finite sample of input/target pairs with generator provenance.
///
/// Invariants (checked by [`Dataset::validate`]): equal input and target
/// counts, uniform dimensions, every entry finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.inputs.is_empty() {
            return Err(ExperimentError::InvalidDataset { reason: "no samples".into() });
        }
        if self.inputs.len() != self.targets.len() {
            return Err(ExperimentError::InvalidDataset {
                reason: format!(
                    "{} inputs vs {} targets",
                    self.inputs.len(),
                    self.targets.len()
                ),
            });
        }
        let (di, dt) = (self.input_dim(), self.target_dim());
        for (i, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if x.len() != di || y.len() != dt {
                return Err(ExperimentError::InvalidDataset {
                    reason: format!("ragged dimensions at sample {i}"),
                });
            }
            if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
                return Err(ExperimentError::InvalidDataset {
                    reason: format!("non-finite entry at sample {i}"),
                });
            }
        }
        Ok(())
    }

    /// Splits off the first `n` samples; the remainder keeps the metadata.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset), ExperimentError> {
        if n == 0 || n > self.len() {
            return Err(ExperimentError::InsufficientData { have: self.len(), need: n });
        }
        let head = Dataset {
            kind: self.kind,
            inputs: self.inputs[..n].to_vec(),
            targets: self.targets[..n].to_vec(),
            meta: self.meta.clone(),
        };
        let tail = Dataset {
            kind: self.kind,
            inputs: self.inputs[n..].to_vec(),
            targets: self.targets[n..].to_vec(),
            meta: self.meta.clone(),
        };
        Ok((head, tail))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{what} must satisfy {constraint} (got {got})")]
    BadArgument { what: &'static str, constraint: &'static str, got: String },
    #[error("forward matrix rank deficient after {attempts} draws")]
    RankDeficient { attempts: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad idx magic, expected {expected:#010x}, got {actual:#010x}")]
    IdxMagic { path: String, expected: u32, actual: u32 },
    #[error("{path}: truncated idx data, needed {needed} bytes, got {got}")]
    IdxTruncated { path: String, needed: usize, got: usize },
    #[error("{path}: {extra} trailing bytes after idx payload")]
    IdxTrailing { path: String, extra: usize },
    #[error("idx pair mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },
    #[error("cannot serialize as idx: {reason}")]
    IdxUnrepresentable { reason: String },
    #[error("invalid dataset: {reason}")]
    InvalidDataset { reason: String },
    #[error("training diverged at step {step} (mean loss {loss})")]
    Divergence { step: usize, loss: f64 },
    #[error("dataset provides {have} samples, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn require(ok: bool, what: &'static str, constraint: &'static str, got: String) -> Result<(), ExperimentError> {
    if ok {
        Ok(())
    } else {
        Err(ExperimentError::BadArgument { what, constraint, got })
    }
}

/// Draws an `m x k` matrix with i.i.d. standard normal entries and verifies
/// full column rank through the extreme eigenvalues of its gram matrix,
/// redrawing up to [`FORWARD_REDRAWS`] times.
pub fn sample_forward(
    input_dim: usize,
    state_dim: usize,
    rng: &mut SeededRng,
) -> Result<DenseMatrix, ExperimentError> {
    require(
        input_dim >= state_dim && state_dim >= 1,
        "forward dims",
        "m >= k >= 1",
        format!("m={input_dim}, k={state_dim}"),
    )?;
    for _ in 0..FORWARD_REDRAWS {
        let a = DenseMatrix::from_entries(
            input_dim,
            state_dim,
            rng.normal_vec(input_dim * state_dim),
        )?;
        let (lambda_max, lambda_min) = extreme_eigs_sym(&a.gram(), 300, rng)?;
        if lambda_min >= FORWARD_RANK_FLOOR * lambda_max {
            return Ok(a);
        }
    }
    Err(ExperimentError::RankDeficient { attempts: FORWARD_REDRAWS })
}

/// Linear inverse-problem data: ground truth `x` uniform in `[-1, 1]^k`,
/// measurements `d = Ax + η` where `η` is Gaussian per coordinate with
/// standard deviation `noise_pct · |(Ax)_j|`. Targets are the ground truth,
/// so the pair trains and evaluates reconstruction.
pub fn gen_inverse_problem(
    input_dim: usize,
    state_dim: usize,
    n_samples: usize,
    noise_pct: f64,
    rng: &mut SeededRng,
) -> Result<(Dataset, DenseMatrix), ExperimentError> {
    require(n_samples >= 1, "n_samples", ">= 1", n_samples.to_string())?;
    require(
        noise_pct.is_finite() && noise_pct >= 0.0,
        "noise_pct",
        "finite and >= 0",
        noise_pct.to_string(),
    )?;
    let seed = rng.seed();
    let a = sample_forward(input_dim, state_dim, rng)?;

    let mut inputs = Vec::with_capacity(n_samples);
    let mut targets = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..state_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let mut d = a.matvec(&x);
        for s in d.iter_mut() {
            *s += noise_pct * s.abs() * rng.standard_normal();
        }
        inputs.push(d);
        targets.push(x);
    }

    let dataset = Dataset {
        kind: DatasetKind::Regression,
        inputs,
        targets,
        meta: DatasetMeta {
            generator: "inverse_problem".into(),
            seed,
            noise_pct,
            forward: Some(a.clone()),
        },
    };
    dataset.validate()?;
    Ok((dataset, a))
}

/// Gaussian blob classification data: class centers uniform in
/// `[-4·spread, 4·spread]^m`, points `center + spread·N(0, I)` clamped per
/// coordinate to `[-10·spread, 10·spread]`, labels assigned round robin so
/// class counts differ by at most one, targets one-hot.
pub fn gen_blobs(
    input_dim: usize,
    classes: usize,
    n_samples: usize,
    spread: f64,
    rng: &mut SeededRng,
) -> Result<Dataset, ExperimentError> {
    require(input_dim >= 1, "input_dim", ">= 1", input_dim.to_string())?;
    require(classes >= 2, "classes", ">= 2", classes.to_string())?;
    require(n_samples >= 1, "n_samples", ">= 1", n_samples.to_string())?;
    require(
        spread.is_finite() && spread >= 0.0,
        "spread",
        "finite and >= 0",
        spread.to_string(),
    )?;
    let seed = rng.seed();

    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..input_dim).map(|_| rng.uniform_in(-4.0 * spread, 4.0 * spread)).collect())
        .collect();

    let mut inputs = Vec::with_capacity(n_samples);
    let mut targets = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % classes;
        let point: Vec<f64> = centers[class]
            .iter()
            .map(|&c| {
                (c + spread * rng.standard_normal()).clamp(-10.0 * spread, 10.0 * spread)
            })
            .collect();
        let mut one_hot = vec![0.0; classes];
        one_hot[class] = 1.0;
        inputs.push(point);
        targets.push(one_hot);
    }

    let dataset = Dataset {
        kind: DatasetKind::Classification,
        inputs,
        targets,
        meta: DatasetMeta { generator: "blobs".into(), seed, noise_pct: 0.0, forward: None },
    };
    dataset.validate()?;
    Ok(dataset)
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> IdxReader<'a> {
    fn open(path: &Path) -> Result<Vec<u8>, ExperimentError> {
        std::fs::read(path)
            .map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })
    }

    fn new(bytes: &'a [u8], path: &Path) -> Self {
        Self { bytes, pos: 0, path: path.display().to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ExperimentError> {
        if self.pos + n > self.bytes.len() {
            return Err(ExperimentError::IdxTruncated {
                path: self.path.clone(),
                needed: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u32(&mut self) -> Result<u32, ExperimentError> {
        let raw = self.take(4)?;
        Ok(u32::from_be_bytes(raw.try_into().expect("take(4) yields 4 bytes")))
    }

    fn expect_magic(&mut self, expected: u32) -> Result<(), ExperimentError> {
        let actual = self.read_u32()?;
        if actual != expected {
            return Err(ExperimentError::IdxMagic { path: self.path.clone(), expected, actual });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), ExperimentError> {
        if self.pos != self.bytes.len() {
            return Err(ExperimentError::IdxTrailing {
                path: self.path.clone(),
                extra: self.bytes.len() - self.pos,
            });
        }
        Ok(())
    }
}

/// Reads an idx image/label pair (the MNIST container format): big-endian
/// magic and dimensions, pixels scaled to `[0, 1]`, labels one-hot encoded
/// with `max label + 1` classes.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, ExperimentError> {
    let image_bytes = IdxReader::open(images)?;
    let mut ir = IdxReader::new(&image_bytes, images);
    ir.expect_magic(IDX_IMAGES_MAGIC)?;
    let count = ir.read_u32()? as usize;
    let rows = ir.read_u32()? as usize;
    let cols = ir.read_u32()? as usize;
    let pixel_dim = rows * cols;
    let pixels = ir.take(count * pixel_dim)?;
    ir.finish()?;

    let label_bytes = IdxReader::open(labels)?;
    let mut lr = IdxReader::new(&label_bytes, labels);
    lr.expect_magic(IDX_LABELS_MAGIC)?;
    let label_count = lr.read_u32()? as usize;
    let raw_labels = lr.take(label_count)?;
    lr.finish()?;

    if count != label_count {
        return Err(ExperimentError::IdxCountMismatch { images: count, labels: label_count });
    }
    if count == 0 {
        return Err(ExperimentError::InvalidDataset { reason: "idx pair holds no samples".into() });
    }

    let classes = raw_labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let inputs: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            pixels[i * pixel_dim..(i + 1) * pixel_dim]
                .iter()
                .map(|&p| f64::from(p) / 255.0)
                .collect()
        })
        .collect();
    let targets: Vec<Vec<f64>> = raw_labels
        .iter()
        .map(|&l| {
            let mut one_hot = vec![0.0; classes];
            one_hot[l as usize] = 1.0;
            one_hot
        })
        .collect();

    let dataset = Dataset {
        kind: DatasetKind::Classification,
        inputs,
        targets,
        meta: DatasetMeta { generator: "idx".into(), seed: 0, noise_pct: 0.0, forward: None },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes a classification dataset as an idx pair, quantizing pixels to
/// bytes (`round(p·255)`, inputs must lie in `[0, 1]`) and labels to the
/// argmax of each target. Inverse of [`load_idx`] on byte-exact data.
pub fn write_idx(data: &Dataset, images: &Path, labels: &Path) -> Result<(), ExperimentError> {
    data.validate()?;
    let count = data.len();
    let dim = data.input_dim();
    if count > u32::MAX as usize || dim > u32::MAX as usize {
        return Err(ExperimentError::IdxUnrepresentable {
            reason: format!("{count} samples of dim {dim} exceed 32-bit sizes"),
        });
    }

    let mut image_bytes =
        Vec::with_capacity(16 + count * dim);
    image_bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(count as u32).to_be_bytes());
    image_bytes.extend_from_slice(&1u32.to_be_bytes());
    image_bytes.extend_from_slice(&(dim as u32).to_be_bytes());
    for (i, x) in data.inputs.iter().enumerate() {
        for &p in x {
            if !(0.0..=1.0).contains(&p) {
                return Err(ExperimentError::IdxUnrepresentable {
                    reason: format!("pixel {p} at sample {i} outside [0, 1]"),
                });
            }
            image_bytes.push((p * 255.0).round() as u8);
        }
    }

    let mut label_bytes = Vec::with_capacity(8 + count);
    label_bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(count as u32).to_be_bytes());
    for (i, y) in data.targets.iter().enumerate() {
        let argmax = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        if argmax > u8::MAX as usize {
            return Err(ExperimentError::IdxUnrepresentable {
                reason: format!("label {argmax} at sample {i} exceeds one byte"),
            });
        }
        label_bytes.push(argmax as u8);
    }

    std::fs::write(images, &image_bytes)
        .map_err(|source| ExperimentError::Io { path: images.display().to_string(), source })?;
    std::fs::write(labels, &label_bytes)
        .map_err(|source| ExperimentError::Io { path: labels.display().to_string(), source })?;
    Ok(())
}

/// Mean loss of one certified operator over a dataset, solving each fixed
/// point from scratch.
pub fn mean_loss(
    op: &CertifiedParams,
    data: &Dataset,
    loss: LossKind,
    cfg: &SolveConfig,
) -> Result<f64, ExperimentError> {
    data.validate()?;
    let mut total = 0.0;
    for (d, y) in data.inputs.iter().zip(&data.targets) {
        let fp = solve(op, d, cfg)?;
        let pred = op.output(&fp.x_star)?;
        total += loss_value(loss, &pred, y)?;
    }
    Ok(total / data.len() as f64)
}

/// Final-layer training outcome. The returned weight satisfies
/// `‖phi‖_F <= 1`, so the trained parameter set recertifies against the
/// spec it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub phi: DenseMatrix,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps_run: usize,
}

/// Gradient descent on the final layer only, with the implicit part frozen:
/// fixed points are solved once and reused as features, the weight is
/// reprojected onto the Frobenius ball after every step, and a mean loss at
/// or above `1e6` aborts as divergence. `steps = 0` or `lr = 0` returns the
/// starting weight unchanged.
pub fn train_final_layer(
    op: &CertifiedParams,
    data: &Dataset,
    loss: LossKind,
    steps: usize,
    lr: f64,
    cfg: &SolveConfig,
) -> Result<TrainResult, ExperimentError> {
    data.validate()?;
    require(lr.is_finite() && lr >= 0.0, "lr", "finite and >= 0", lr.to_string())?;
    let mut phi = match op.params().phi.as_ref() {
        Some(phi) => phi.clone(),
        None => return Err(ExperimentError::Operator(OperatorError::PhiMissing)),
    };
    let n = data.len() as f64;
    let (out_dim, state_dim) = (phi.rows(), phi.cols());

    // psi and alpha stay frozen, so the features are step independent.
    let features = data
        .inputs
        .par_iter()
        .map(|d| solve(op, d, cfg).map(|fp| fp.x_star))
        .collect::<Result<Vec<_>, _>>()?;

    let epoch_loss = |phi: &DenseMatrix| -> Result<f64, ExperimentError> {
        let mut total = 0.0;
        for (x, y) in features.iter().zip(&data.targets) {
            total += loss_value(loss, &phi.matvec(x), y)?;
        }
        Ok(total / n)
    };

    let initial_loss = epoch_loss(&phi)?;
    let mut current_loss = initial_loss;
    for step in 0..steps {
        if current_loss >= DIVERGENCE_CEILING {
            return Err(ExperimentError::Divergence { step, loss: current_loss });
        }
        let mut grad = vec![0.0; out_dim * state_dim];
        for (x, y) in features.iter().zip(&data.targets) {
            let g = loss_grad(loss, &phi.matvec(x), y)?;
            for (row, gi) in g.iter().enumerate() {
                let offset = row * state_dim;
                for (col, xj) in x.iter().enumerate() {
                    grad[offset + col] += gi * xj;
                }
            }
        }
        let grad = DenseMatrix::from_entries(out_dim, state_dim, grad)?;
        phi = phi.add_scaled(-lr / n, &grad);
        let norm = phi.frobenius_norm();
        if norm > PHI_RADIUS {
            phi.scale_in_place(PHI_RADIUS / norm);
        }
        current_loss = epoch_loss(&phi)?;
    }
    if current_loss >= DIVERGENCE_CEILING {
        return Err(ExperimentError::Divergence { step: steps, loss: current_loss });
    }

    Ok(TrainResult { phi, initial_loss, final_loss: current_loss, steps_run: steps })
}

/// One operator's train/held-out loss pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub theta_id: usize,
    pub train_loss: f64,
    pub held_out_loss: f64,
    /// `|train_loss − held_out_loss|`.
    pub gap: f64,
}

/// Per-theta generalization gaps over a fixed dataset pair. Solver failures
/// exclude the operator from the rows and are counted instead of aborting
/// the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    pub max_gap: f64,
    pub n_train: usize,
    pub n_held_out: usize,
    pub solver_failures: usize,
}

/// Empirical generalization gaps: for every operator, the absolute
/// difference between mean train loss and mean held-out loss.
pub fn measure_gap(
    thetas: &[CertifiedParams],
    train: &Dataset,
    held_out: &Dataset,
    loss: LossKind,
    cfg: &SolveConfig,
) -> Result<GapReport, ExperimentError> {
    require(!thetas.is_empty(), "thetas", "at least one operator", "0".into())?;
    train.validate()?;
    held_out.validate()?;

    let outcomes: Vec<Result<GapRow, ExperimentError>> = thetas
        .par_iter()
        .enumerate()
        .map(|(theta_id, op)| {
            let train_loss = mean_loss(op, train, loss, cfg)?;
            let held_out_loss = mean_loss(op, held_out, loss, cfg)?;
            Ok(GapRow { theta_id, train_loss, held_out_loss, gap: (train_loss - held_out_loss).abs() })
        })
        .collect();

    let mut rows = Vec::with_capacity(thetas.len());
    let mut solver_failures = 0;
    for outcome in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(ExperimentError::Solve(SolveError::NonConvergence { .. })) => {
                solver_failures += 1
            }
            Err(other) => return Err(other),
        }
    }
    let max_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    Ok(GapReport {
        rows,
        max_gap,
        n_train: train.len(),
        n_held_out: held_out.len(),
        solver_failures,
    })
}

/// Architecture plan for sweeps: everything an [`OperatorSpec`] needs except
/// the forward matrix, which inverse-problem cells generate with their data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchPlan {
    pub family: FamilyKind,
    /// Monotonicity margin; only read for the MON family.
    pub m_mon: f64,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub final_layer: FinalLayer,
}

impl ArchPlan {
    pub fn build_spec(&self, forward: Option<&DenseMatrix>) -> Result<OperatorSpec, ExperimentError> {
        let family = match self.family {
            FamilyKind::Contractive => FamilyConfig::Contractive,
            FamilyKind::Mon => FamilyConfig::Mon { m_mon: self.m_mon },
            FamilyKind::Lgd => match forward {
                Some(a) => FamilyConfig::Lgd { forward: a.clone() },
                None => {
                    return Err(ExperimentError::BadArgument {
                        what: "forward",
                        constraint: "required for the LGD family",
                        got: "None".into(),
                    })
                }
            },
        };
        let spec = OperatorSpec {
            family,
            state_dim: self.state_dim,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            activation: self.activation,
            final_layer: self.final_layer,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Dataset source for sweeps and commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    InverseProblem { noise_pct: f64 },
    Blobs { classes: usize, spread: f64 },
    Idx { images: std::path::PathBuf, labels: std::path::PathBuf },
}

/// Full description of one sweep run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub arch: ArchPlan,
    pub generator: GeneratorConfig,
    pub n_grid: Vec<u64>,
    pub p_grid: Vec<u64>,
    pub delta: f64,
    pub loss: LossKind,
    pub seed: u64,
    /// Theta draws behind the constant estimates.
    pub n_theta: usize,
    pub with_gaps: bool,
    /// Random operators measured per cell when gaps are on.
    pub gap_thetas: usize,
    pub train_final_layer: bool,
    pub train_steps: usize,
    pub train_lr: f64,
    pub solve: SolveConfig,
}

/// One (N, p) cell of a sweep. Gap columns repeat across the p axis
/// because the measured operators do not depend on the parameter count the
/// bound is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub family: FamilyKind,
    pub n_samples: u64,
    pub param_count: u64,
    pub report: BoundReport,
    pub max_gap_random: Option<f64>,
    pub max_gap_trained: Option<f64>,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    /// One constants report per N cell, in grid order.
    pub constants: Vec<ConstantsReport>,
}

impl SweepTable {
    pub fn csv_header() -> &'static str {
        "family,N,p,term_rademacher,term_confidence,total_excess,max_gap_random,max_gap_trained"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for cell in &self.cells {
            let fmt_gap = |g: Option<f64>| g.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                cell.family,
                cell.n_samples,
                cell.param_count,
                cell.report.term_rademacher,
                cell.report.term_confidence,
                cell.report.total_excess,
                fmt_gap(cell.max_gap_random),
                fmt_gap(cell.max_gap_trained),
            ));
        }
        out
    }
}

// Substream labels of the per-cell seed derivation; each is further derived
// by the N index (and theta index where applicable).
const STREAM_DATA: u64 = 1;
const STREAM_THETA: u64 = 2;
const STREAM_GAP: u64 = 3;
const STREAM_TRAIN: u64 = 4;

/// Produces `total` samples from the configured source, plus the forward
/// matrix the spec will need: inverse problems hand over their own, the
/// other sources sample one for the LGD family.
pub fn generate_dataset(
    arch: &ArchPlan,
    generator: &GeneratorConfig,
    total: usize,
    rng: &mut SeededRng,
) -> Result<(Dataset, Option<DenseMatrix>), ExperimentError> {
    let lgd_forward = |rng: &mut SeededRng| -> Result<Option<DenseMatrix>, ExperimentError> {
        if arch.family == FamilyKind::Lgd {
            Ok(Some(sample_forward(arch.input_dim, arch.state_dim, rng)?))
        } else {
            Ok(None)
        }
    };
    match generator {
        GeneratorConfig::InverseProblem { noise_pct } => {
            let (data, a) =
                gen_inverse_problem(arch.input_dim, arch.state_dim, total, *noise_pct, rng)?;
            Ok((data, Some(a)))
        }
        GeneratorConfig::Blobs { classes, spread } => {
            let data = gen_blobs(arch.input_dim, *classes, total, *spread, rng)?;
            let forward = lgd_forward(rng)?;
            Ok((data, forward))
        }
        GeneratorConfig::Idx { images, labels } => {
            let data = load_idx(images, labels)?;
            if data.len() < total {
                return Err(ExperimentError::InsufficientData { have: data.len(), need: total });
            }
            let (head, _) = data.split_at(total)?;
            let forward = lgd_forward(rng)?;
            Ok((head, forward))
        }
    }
}

/// Evaluates the bound over the (N, p) grid. Every N cell regenerates data,
/// re-estimates constants, and (optionally) measures gaps for freshly
/// sampled operators plus one final-layer-trained operator; every p in the
/// grid then prices the same constants. Cells appear in grid order
/// (N outer, p inner) and all randomness is derived from the plan seed.
pub fn sweep(plan: &SweepPlan) -> Result<SweepTable, ExperimentError> {
    require(!plan.n_grid.is_empty(), "n_grid", "nonempty", "[]".into())?;
    require(!plan.p_grid.is_empty(), "p_grid", "nonempty", "[]".into())?;
    require(plan.n_theta >= 1, "n_theta", ">= 1", plan.n_theta.to_string())?;

    let master = SeededRng::new(plan.seed);
    let mut cells = Vec::with_capacity(plan.n_grid.len() * plan.p_grid.len());
    let mut constants_per_n = Vec::with_capacity(plan.n_grid.len());

    for (ni, &n) in plan.n_grid.iter().enumerate() {
        require(n >= 1, "N", ">= 1", n.to_string())?;
        let held = (n * HELD_OUT_FACTOR).min(HELD_OUT_CAP);
        let total = (n + held) as usize;

        let mut data_rng = master.derive(STREAM_DATA).derive(ni as u64);
        let (all_data, forward) =
            generate_dataset(&plan.arch, &plan.generator, total, &mut data_rng)?;
        let (train, held_out) = all_data.split_at(n as usize)?;
        let spec = plan.arch.build_spec(forward.as_ref())?;

        let const_rng = master.derive(STREAM_THETA).derive(ni as u64);
        let constants = estimate_constants(
            &spec,
            plan.loss,
            &train.inputs,
            &train.targets,
            plan.n_theta,
            &const_rng,
        )?;
        let chain = chain_from_constants(&constants)?;

        let (max_gap_random, max_gap_trained, solver_failures) = if plan.with_gaps {
            let gap_master = master.derive(STREAM_GAP).derive(ni as u64);
            let thetas = (0..plan.gap_thetas)
                .map(|t| {
                    let mut theta_rng = gap_master.derive(t as u64);
                    sample_certified(&spec, &CertifyOptions::default(), &mut theta_rng)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let random = measure_gap(&thetas, &train, &held_out, plan.loss, &plan.solve)?;

            let trained = if plan.train_final_layer && spec.final_layer == FinalLayer::Linear {
                let mut train_rng = master.derive(STREAM_TRAIN).derive(ni as u64);
                let start = sample_certified(&spec, &CertifyOptions::default(), &mut train_rng)?;
                let trained = train_final_layer(
                    &start,
                    &train,
                    plan.loss,
                    plan.train_steps,
                    plan.train_lr,
                    &plan.solve,
                )?;
                let params = ParamSet {
                    psi: start.params().psi.clone(),
                    phi: Some(trained.phi),
                    alpha: start.params().alpha,
                };
                let op = certify(&spec, params, &CertifyOptions::default(), &mut train_rng)?;
                let gap =
                    measure_gap(std::slice::from_ref(&op), &train, &held_out, plan.loss, &plan.solve)?;
                Some(gap.max_gap)
            } else {
                None
            };

            (Some(random.max_gap), trained, random.solver_failures)
        } else {
            (None, None, 0)
        };

        for &p in &plan.p_grid {
            let report = generalization_bound(&constants, &chain, p, n, plan.delta)?;
            cells.push(SweepCell {
                family: plan.arch.family,
                n_samples: n,
                param_count: p,
                report,
                max_gap_random,
                max_gap_trained,
                solver_failures,
            });
        }
        constants_per_n.push(constants);
    }

    Ok(SweepTable { cells, constants: constants_per_n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use deqcert_core::operators::sample_params;

    fn rng(seed: u64) -> SeededRng {
        SeededRng::new(seed)
    }

    #[test]
    fn inverse_problem_is_exact_without_noise() {
        let mut r = rng(11);
        let (data, a) = gen_inverse_problem(6, 4, 20, 0.0, &mut r).unwrap();
        assert_eq!(data.kind, DatasetKind::Regression);
        assert_eq!(data.len(), 20);
        assert_eq!(data.input_dim(), 6);
        assert_eq!(data.target_dim(), 4);
        for (d, x) in data.inputs.iter().zip(&data.targets) {
            let clean = a.matvec(x);
            assert_eq!(d, &clean);
            assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert_eq!(data.meta.forward.as_ref().unwrap(), &a);
    }

    #[test]
    fn inverse_problem_noise_ratio_tracks_the_requested_level() {
        let mut r = rng(12);
        let noise_pct = 0.05;
        let (data, a) = gen_inverse_problem(8, 5, 10_000, noise_pct, &mut r).unwrap();
        let mut noise_sq = 0.0;
        let mut signal_sq = 0.0;
        for (d, x) in data.inputs.iter().zip(&data.targets) {
            let clean = a.matvec(x);
            for (obs, s) in d.iter().zip(&clean) {
                noise_sq += (obs - s) * (obs - s);
                signal_sq += s * s;
            }
        }
        let ratio = (noise_sq / signal_sq).sqrt();
        assert!(
            (ratio / noise_pct - 1.0).abs() < 0.1,
            "noise ratio {ratio} strays from {noise_pct}"
        );
    }

    #[test]
    fn forward_matrix_has_full_column_rank() {
        let mut r = rng(13);
        let a = sample_forward(10, 7, &mut r).unwrap();
        let (lambda_max, lambda_min) = extreme_eigs_sym(&a.gram(), 300, &mut r).unwrap();
        assert!(lambda_min > FORWARD_RANK_FLOOR * lambda_max);
        assert!(matches!(
            sample_forward(4, 9, &mut r),
            Err(ExperimentError::BadArgument { .. })
        ));
    }

    #[test]
    fn blobs_balance_classes_and_respect_the_support_box() {
        let mut r = rng(14);
        let spread = 0.7;
        let data = gen_blobs(5, 3, 100, spread, &mut r).unwrap();
        assert_eq!(data.kind, DatasetKind::Classification);
        let mut counts = [0usize; 3];
        for y in &data.targets {
            let hot: Vec<usize> = y.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect();
            assert_eq!(hot.len(), 1);
            assert_eq!(y.iter().filter(|v| **v == 0.0).count(), 2);
            counts[hot[0]] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        for x in &data.inputs {
            assert!(x.iter().all(|v| v.abs() <= 10.0 * spread));
        }
    }

    #[test]
    fn blobs_with_zero_spread_sit_on_their_centers() {
        let mut r = rng(15);
        let data = gen_blobs(4, 2, 10, 0.0, &mut r).unwrap();
        for x in &data.inputs {
            assert!(x.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn hand_built_idx_pair_parses() {
        let dir = std::env::temp_dir().join(format!("deqcert-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let images = dir.join("hand-images.idx");
        let labels = dir.join("hand-labels.idx");

        // Two 3x3 images; pixel p = its index for the first, 255 − index for
        // the second. Labels 1 and 0.
        let mut image_bytes = Vec::new();
        image_bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        image_bytes.extend_from_slice(&2u32.to_be_bytes());
        image_bytes.extend_from_slice(&3u32.to_be_bytes());
        image_bytes.extend_from_slice(&3u32.to_be_bytes());
        image_bytes.extend((0..9).map(|i| i as u8));
        image_bytes.extend((0..9).map(|i| 255 - i as u8));
        let mut label_bytes = Vec::new();
        label_bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        label_bytes.extend_from_slice(&2u32.to_be_bytes());
        label_bytes.extend_from_slice(&[1u8, 0u8]);
        std::fs::write(&images, &image_bytes).unwrap();
        std::fs::write(&labels, &label_bytes).unwrap();

        let data = load_idx(&images, &labels).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.input_dim(), 9);
        assert_eq!(data.target_dim(), 2);
        assert_eq!(data.inputs[0][4], 4.0 / 255.0);
        assert_eq!(data.inputs[1][0], 1.0);
        assert_eq!(data.targets[0], vec![0.0, 1.0]);
        assert_eq!(data.targets[1], vec![1.0, 0.0]);

        // Write-then-read is the identity on byte-exact data.
        let images2 = dir.join("rt-images.idx");
        let labels2 = dir.join("rt-labels.idx");
        write_idx(&data, &images2, &labels2).unwrap();
        let back = load_idx(&images2, &labels2).unwrap();
        assert_eq!(back.inputs, data.inputs);
        assert_eq!(back.targets, data.targets);
    }

    #[test]
    fn idx_errors_name_the_defect() {
        let dir = std::env::temp_dir().join(format!("deqcert-idx-err-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let images = dir.join("bad-images.idx");
        let labels = dir.join("bad-labels.idx");

        let good_labels = {
            let mut b = Vec::new();
            b.extend_from_slice(&0x0000_0801u32.to_be_bytes());
            b.extend_from_slice(&1u32.to_be_bytes());
            b.push(0);
            b
        };

        // Wrong magic.
        let mut bad_magic = Vec::new();
        bad_magic.extend_from_slice(&0x0000_0802u32.to_be_bytes());
        bad_magic.extend_from_slice(&[0; 12]);
        std::fs::write(&images, &bad_magic).unwrap();
        std::fs::write(&labels, &good_labels).unwrap();
        match load_idx(&images, &labels) {
            Err(ExperimentError::IdxMagic { expected, actual, .. }) => {
                assert_eq!(expected, IDX_IMAGES_MAGIC);
                assert_eq!(actual, 0x0000_0802);
            }
            other => panic!("expected a magic error, got {other:?}"),
        }

        // Truncated payload: header promises one 2x2 image, delivers 3 bytes.
        let mut truncated = Vec::new();
        truncated.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        truncated.extend_from_slice(&1u32.to_be_bytes());
        truncated.extend_from_slice(&2u32.to_be_bytes());
        truncated.extend_from_slice(&2u32.to_be_bytes());
        truncated.extend_from_slice(&[7, 7, 7]);
        std::fs::write(&images, &truncated).unwrap();
        assert!(matches!(
            load_idx(&images, &labels),
            Err(ExperimentError::IdxTruncated { needed: 20, got: 19, .. })
        ));

        // Count mismatch: two images, one label.
        let mut two_images = Vec::new();
        two_images.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        two_images.extend_from_slice(&2u32.to_be_bytes());
        two_images.extend_from_slice(&1u32.to_be_bytes());
        two_images.extend_from_slice(&1u32.to_be_bytes());
        two_images.extend_from_slice(&[1, 2]);
        std::fs::write(&images, &two_images).unwrap();
        assert!(matches!(
            load_idx(&images, &labels),
            Err(ExperimentError::IdxCountMismatch { images: 2, labels: 1 })
        ));

        // Trailing garbage.
        let mut trailing = two_images.clone();
        trailing.push(99);
        std::fs::write(&images, &trailing).unwrap();
        assert!(matches!(
            load_idx(&images, &labels),
            Err(ExperimentError::IdxTrailing { extra: 1, .. })
        ));
    }

    fn contractive_spec(k: usize, m: usize, n: usize) -> OperatorSpec {
        OperatorSpec {
            family: FamilyConfig::Contractive,
            state_dim: k,
            input_dim: m,
            output_dim: n,
            activation: Activation::ReLU,
            final_layer: FinalLayer::Linear,
        }
    }

    #[test]
    fn zero_steps_and_zero_rate_leave_phi_untouched() {
        let spec = contractive_spec(6, 4, 3);
        let mut r = rng(16);
        let op = sample_certified(&spec, &CertifyOptions::default(), &mut r).unwrap();
        let data = gen_blobs(4, 3, 12, 1.0, &mut r).unwrap();
        let cfg = SolveConfig::default();

        let phi0 = op.params().phi.clone().unwrap();
        let zero_steps =
            train_final_layer(&op, &data, LossKind::CrossEntropySoftmax, 0, 0.1, &cfg).unwrap();
        assert_eq!(zero_steps.phi, phi0);
        assert_eq!(zero_steps.initial_loss, zero_steps.final_loss);

        let zero_rate =
            train_final_layer(&op, &data, LossKind::CrossEntropySoftmax, 5, 0.0, &cfg).unwrap();
        assert_eq!(zero_rate.phi, phi0);
    }

    #[test]
    fn training_improves_cross_entropy_on_separable_blobs() {
        let spec = contractive_spec(6, 4, 3);
        let mut r = rng(17);
        let op = sample_certified(&spec, &CertifyOptions::default(), &mut r).unwrap();
        let data = gen_blobs(4, 3, 60, 1.0, &mut r).unwrap();
        let result = train_final_layer(
            &op,
            &data,
            LossKind::CrossEntropySoftmax,
            100,
            0.5,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(
            result.final_loss < result.initial_loss,
            "training went from {} to {}",
            result.initial_loss,
            result.final_loss
        );
        assert!(result.phi.frobenius_norm() <= PHI_RADIUS + 1e-12);
    }

    #[test]
    fn identity_final_layer_cannot_be_trained() {
        let spec = OperatorSpec {
            final_layer: FinalLayer::Identity,
            output_dim: 6,
            ..contractive_spec(6, 4, 3)
        };
        let mut r = rng(18);
        let op = sample_certified(&spec, &CertifyOptions::default(), &mut r).unwrap();
        let data = gen_blobs(4, 6, 12, 1.0, &mut r).unwrap();
        assert!(matches!(
            train_final_layer(&op, &data, LossKind::L1, 3, 0.1, &SolveConfig::default()),
            Err(ExperimentError::Operator(OperatorError::PhiMissing))
        ));
    }

    #[test]
    fn identical_datasets_have_zero_gap() {
        let spec = contractive_spec(5, 3, 2);
        let mut r = rng(19);
        let thetas: Vec<_> = (0..4)
            .map(|_| sample_certified(&spec, &CertifyOptions::default(), &mut r).unwrap())
            .collect();
        let data = gen_blobs(3, 2, 10, 1.0, &mut r).unwrap();
        let report =
            measure_gap(&thetas, &data, &data, LossKind::CrossEntropySoftmax, &SolveConfig::default())
                .unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.max_gap, 0.0);
        assert_eq!(report.solver_failures, 0);
        for row in &report.rows {
            assert_eq!(row.train_loss, row.held_out_loss);
        }
    }

    #[test]
    fn constant_operator_gap_matches_a_scalar_recount() {
        // Zero psi blocks make the fixed point zero, so the network predicts
        // phi·0 = 0 on every sample and the gap is the difference of mean
        // losses against the constant zero prediction.
        let spec = contractive_spec(4, 3, 2);
        let mut r = rng(20);
        let mut params = sample_params(&spec, &mut r);
        if let deqcert_core::operators::PsiBlocks::Contractive { w, u, b } = &mut params.psi {
            *w = DenseMatrix::zeros(4, 4);
            *u = DenseMatrix::zeros(4, 3);
            *b = vec![0.0; 4];
        }
        let op = certify(&spec, params, &CertifyOptions::default(), &mut r).unwrap();

        let train = gen_blobs(3, 2, 8, 1.0, &mut r).unwrap();
        let held = gen_blobs(3, 2, 16, 1.0, &mut r).unwrap();
        let report = measure_gap(
            std::slice::from_ref(&op),
            &train,
            &held,
            LossKind::CrossEntropySoftmax,
            &SolveConfig::default(),
        )
        .unwrap();

        let zero_pred = vec![0.0; 2];
        let hand_mean = |data: &Dataset| {
            data.targets
                .iter()
                .map(|y| loss_value(LossKind::CrossEntropySoftmax, &zero_pred, y).unwrap())
                .sum::<f64>()
                / data.len() as f64
        };
        let expected = (hand_mean(&train) - hand_mean(&held)).abs();
        assert!((report.rows[0].gap - expected).abs() < 1e-15);
    }

    #[test]
    fn starved_solver_is_counted_not_fatal() {
        let spec = contractive_spec(5, 3, 2);
        let mut r = rng(21);
        let thetas: Vec<_> = (0..2)
            .map(|_| sample_certified(&spec, &CertifyOptions::default(), &mut r).unwrap())
            .collect();
        let data = gen_blobs(3, 2, 6, 1.0, &mut r).unwrap();
        let starved = SolveConfig { tolerance: 1e-14, max_iters: 1 };
        let report = measure_gap(&thetas, &data, &data, LossKind::L1, &starved);
        match report {
            Ok(report) => {
                assert_eq!(report.solver_failures, 2);
                assert!(report.rows.is_empty());
                assert_eq!(report.max_gap, 0.0);
            }
            Err(e) => panic!("starved solver should be tallied, got {e}"),
        }
    }

    fn small_plan() -> SweepPlan {
        SweepPlan {
            arch: ArchPlan {
                family: FamilyKind::Contractive,
                m_mon: 0.1,
                state_dim: 5,
                input_dim: 3,
                output_dim: 2,
                activation: Activation::ReLU,
                final_layer: FinalLayer::Linear,
            },
            generator: GeneratorConfig::Blobs { classes: 2, spread: 1.0 },
            n_grid: vec![40, 80],
            p_grid: vec![10, 40],
            delta: 0.05,
            loss: LossKind::CrossEntropySoftmax,
            seed: 99,
            n_theta: 5,
            with_gaps: true,
            gap_thetas: 3,
            train_final_layer: true,
            train_steps: 10,
            train_lr: 0.2,
            solve: SolveConfig::default(),
        }
    }

    #[test]
    fn sweep_covers_the_grid_in_order_with_finite_cells() {
        let table = sweep(&small_plan()).unwrap();
        assert_eq!(table.cells.len(), 4);
        assert_eq!(table.constants.len(), 2);
        let keys: Vec<(u64, u64)> =
            table.cells.iter().map(|c| (c.n_samples, c.param_count)).collect();
        assert_eq!(keys, vec![(40, 10), (40, 40), (80, 10), (80, 40)]);
        for cell in &table.cells {
            assert!(cell.report.total_excess.is_finite());
            assert!(cell.max_gap_random.unwrap() >= 0.0);
            assert!(cell.max_gap_trained.unwrap() >= 0.0);
            assert_eq!(cell.solver_failures, 0);
        }
        // More parameters widen the Rademacher term at fixed N.
        assert!(table.cells[1].report.term_rademacher > table.cells[0].report.term_rademacher);
        // More samples shrink the bound at fixed p.
        assert!(table.cells[2].report.total_excess < table.cells[0].report.total_excess);
    }

    #[test]
    fn sweep_output_is_reproducible() {
        let plan = small_plan();
        let a = sweep(&plan).unwrap();
        let b = sweep(&plan).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
