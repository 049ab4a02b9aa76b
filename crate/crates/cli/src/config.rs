//! Run configuration: per-family defaults, JSON config files, and flag
//! overrides, merged in that order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use deqcert_core::fixed_point::SolveConfig;
use deqcert_core::losses::LossKind;
use deqcert_core::operators::{Activation, FamilyKind, FinalLayer};

use crate::experiments::{ArchPlan, GeneratorConfig, SweepPlan};
use crate::CliError;

/// One fully resolved run: architecture, data source, grids, and budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: FamilyKind,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Monotonicity margin; only read for the MON family.
    pub m_mon: f64,
    pub activation: Activation,
    pub final_layer: FinalLayer,
    pub dataset: GeneratorConfig,
    /// Training-set sizes of the sweep grid.
    pub n_grid: Vec<u64>,
    /// Parameter counts the bound is priced at.
    pub p_grid: Vec<u64>,
    pub delta: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub out: PathBuf,
    /// Theta draws behind every constants estimate.
    pub n_theta: usize,
    /// Dataset size for the standalone estimate command.
    pub n_estimate: usize,
    /// Random operators measured per cell when gaps are on.
    pub gap_thetas: usize,
    pub with_gaps: bool,
    pub train_final_layer: bool,
    pub train_steps: usize,
    pub train_lr: f64,
    /// Worker threads; zero keeps the library default.
    pub threads: usize,
    pub solve_tolerance: f64,
    pub solve_max_iters: usize,
}

/// The same fields, all optional: the shape of a config file. Anything the
/// file leaves out keeps its family default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    family: Option<FamilyKind>,
    state_dim: Option<usize>,
    input_dim: Option<usize>,
    output_dim: Option<usize>,
    m_mon: Option<f64>,
    activation: Option<Activation>,
    final_layer: Option<FinalLayer>,
    dataset: Option<GeneratorConfig>,
    n_grid: Option<Vec<u64>>,
    p_grid: Option<Vec<u64>>,
    delta: Option<f64>,
    loss: Option<LossKind>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    n_theta: Option<usize>,
    n_estimate: Option<usize>,
    gap_thetas: Option<usize>,
    with_gaps: Option<bool>,
    train_final_layer: Option<bool>,
    train_steps: Option<usize>,
    train_lr: Option<f64>,
    threads: Option<usize>,
    solve_tolerance: Option<f64>,
    solve_max_iters: Option<usize>,
}

/// Command-line overrides; applied last.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Overrides {
    pub family: Option<FamilyKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_grid: Option<Vec<u64>>,
    pub p_grid: Option<Vec<u64>>,
    pub delta: Option<f64>,
    pub loss: Option<LossKind>,
    pub threads: Option<usize>,
    pub with_gaps: bool,
    pub train_final_layer: bool,
}

impl RunConfig {
    /// Desk defaults per family. The contractive bundle classifies blobs
    /// through a trained linear layer; MON runs the identity final layer on
    /// blob targets under the absolute loss; LGD reconstructs a linear
    /// inverse problem (more measurements than states, so the gram has full
    /// rank).
    pub fn family_defaults(family: FamilyKind) -> Self {
        let base = RunConfig {
            family: FamilyKind::Contractive,
            state_dim: 30,
            input_dim: 20,
            output_dim: 10,
            m_mon: 0.1,
            activation: Activation::ReLU,
            final_layer: FinalLayer::Linear,
            dataset: GeneratorConfig::Blobs { classes: 10, spread: 1.0 },
            n_grid: vec![100, 1_000, 10_000],
            p_grid: vec![100, 1_000, 10_000],
            delta: 0.01,
            loss: LossKind::CrossEntropySoftmax,
            seed: 7,
            out: PathBuf::from("out"),
            n_theta: 100,
            n_estimate: 1_000,
            gap_thetas: 100,
            with_gaps: false,
            train_final_layer: false,
            train_steps: 200,
            train_lr: 0.5,
            threads: 0,
            solve_tolerance: 1e-10,
            solve_max_iters: 50_000,
        };
        match family {
            FamilyKind::Contractive => base,
            FamilyKind::Mon => RunConfig {
                family: FamilyKind::Mon,
                output_dim: 30,
                final_layer: FinalLayer::Identity,
                dataset: GeneratorConfig::Blobs { classes: 30, spread: 1.0 },
                loss: LossKind::L1,
                ..base
            },
            FamilyKind::Lgd => RunConfig {
                family: FamilyKind::Lgd,
                state_dim: 16,
                input_dim: 24,
                output_dim: 16,
                final_layer: FinalLayer::Identity,
                dataset: GeneratorConfig::InverseProblem { noise_pct: 0.015 },
                loss: LossKind::L1,
                ..base
            },
        }
    }

    /// Resolves a run configuration: family defaults, then the config file,
    /// then flags.
    pub fn load(config_path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let partial = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                serde_json::from_str::<PartialConfig>(&text).map_err(|e| {
                    CliError::Config(format!("{}: {e}", path.display()))
                })?
            }
            None => PartialConfig::default(),
        };

        let family = overrides
            .family
            .or(partial.family)
            .unwrap_or(FamilyKind::Contractive);
        let mut cfg = Self::family_defaults(family);

        macro_rules! merge {
            ($($field:ident),* $(,)?) => {
                $(if let Some(value) = partial.$field {
                    cfg.$field = value;
                })*
            };
        }
        merge!(
            state_dim, input_dim, output_dim, m_mon, activation, final_layer, dataset,
            n_grid, p_grid, delta, loss, seed, out, n_theta, n_estimate, gap_thetas,
            with_gaps, train_final_layer, train_steps, train_lr, threads,
            solve_tolerance, solve_max_iters,
        );

        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        if let Some(n_grid) = &overrides.n_grid {
            cfg.n_grid = n_grid.clone();
        }
        if let Some(p_grid) = &overrides.p_grid {
            cfg.p_grid = p_grid.clone();
        }
        if let Some(delta) = overrides.delta {
            cfg.delta = delta;
        }
        if let Some(loss) = overrides.loss {
            cfg.loss = loss;
        }
        if let Some(threads) = overrides.threads {
            cfg.threads = threads;
        }
        if overrides.with_gaps {
            cfg.with_gaps = true;
        }
        if overrides.train_final_layer {
            cfg.train_final_layer = true;
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.state_dim == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return fail("dimensions must be nonzero".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.n_grid.is_empty() || self.p_grid.is_empty() {
            return fail("n_grid and p_grid must be nonempty".into());
        }
        if self.n_grid.iter().any(|&n| n == 0) {
            return fail("N = 0 is not a training-set size".into());
        }
        if self.p_grid.iter().any(|&p| p == 0) {
            return fail("p = 0 is not a parameter count".into());
        }
        if !(self.m_mon > 0.0 && self.m_mon < 1.0) {
            return fail(format!("m_mon must lie in (0, 1), got {}", self.m_mon));
        }
        if self.family == FamilyKind::Lgd && self.input_dim < self.state_dim {
            return fail(format!(
                "the LGD forward matrix needs input_dim >= state_dim for a full-rank gram, got {} < {}",
                self.input_dim, self.state_dim
            ));
        }
        if self.final_layer == FinalLayer::Identity && self.output_dim != self.state_dim {
            return fail(format!(
                "identity final layer needs output_dim = state_dim, got {} vs {}",
                self.output_dim, self.state_dim
            ));
        }
        match &self.dataset {
            GeneratorConfig::Blobs { classes, spread } => {
                if *classes != self.output_dim {
                    return fail(format!(
                        "blob targets are {classes}-dimensional one-hots but output_dim is {}",
                        self.output_dim
                    ));
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return fail(format!("blob spread must be finite and nonnegative, got {spread}"));
                }
            }
            GeneratorConfig::InverseProblem { noise_pct } => {
                if self.loss == LossKind::CrossEntropySoftmax {
                    return fail(
                        "cross-entropy needs one-hot targets; inverse problems are regression".into(),
                    );
                }
                if self.output_dim != self.state_dim {
                    return fail(format!(
                        "inverse-problem targets are the {}-dimensional ground truth but output_dim is {}",
                        self.state_dim, self.output_dim
                    ));
                }
                if !(noise_pct.is_finite() && *noise_pct >= 0.0) {
                    return fail(format!("noise_pct must be finite and nonnegative, got {noise_pct}"));
                }
            }
            GeneratorConfig::Idx { .. } => {}
        }
        if self.n_theta == 0 || self.gap_thetas == 0 || self.n_estimate == 0 {
            return fail("n_theta, gap_thetas, and n_estimate must be nonzero".into());
        }
        if !(self.train_lr.is_finite() && self.train_lr >= 0.0) {
            return fail(format!("train_lr must be finite and nonnegative, got {}", self.train_lr));
        }
        if !(self.solve_tolerance > 0.0) || self.solve_max_iters == 0 {
            return fail("solver needs a positive tolerance and iteration budget".into());
        }
        Ok(())
    }

    pub fn arch(&self) -> ArchPlan {
        ArchPlan {
            family: self.family,
            m_mon: self.m_mon,
            state_dim: self.state_dim,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            activation: self.activation,
            final_layer: self.final_layer,
        }
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig { tolerance: self.solve_tolerance, max_iters: self.solve_max_iters }
    }

    pub fn sweep_plan(&self) -> SweepPlan {
        SweepPlan {
            arch: self.arch(),
            generator: self.dataset.clone(),
            n_grid: self.n_grid.clone(),
            p_grid: self.p_grid.clone(),
            delta: self.delta,
            loss: self.loss,
            seed: self.seed,
            n_theta: self.n_theta,
            with_gaps: self.with_gaps,
            gap_thetas: self.gap_thetas,
            train_final_layer: self.train_final_layer,
            train_steps: self.train_steps,
            train_lr: self.train_lr,
            solve: self.solve_config(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(name: &str, contents: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("deqcert-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn family_defaults_are_coherent() {
        for family in [FamilyKind::Contractive, FamilyKind::Mon, FamilyKind::Lgd] {
            let cfg = RunConfig::family_defaults(family);
            assert_eq!(cfg.family, family);
            cfg.validate().unwrap();
        }
        let mon = RunConfig::family_defaults(FamilyKind::Mon);
        assert_eq!(mon.final_layer, FinalLayer::Identity);
        assert_eq!(mon.loss, LossKind::L1);
        let lgd = RunConfig::family_defaults(FamilyKind::Lgd);
        assert!(lgd.input_dim >= lgd.state_dim);
    }

    #[test]
    fn file_overrides_defaults_and_flags_override_the_file() {
        let path = write_config(
            "precedence.json",
            r#"{ "family": "mon", "seed": 100, "delta": 0.2, "n_grid": [50] }"#,
        );
        let cfg = RunConfig::load(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(cfg.family, FamilyKind::Mon);
        assert_eq!(cfg.seed, 100);
        assert_eq!(cfg.delta, 0.2);
        assert_eq!(cfg.n_grid, vec![50]);
        // Untouched fields keep the MON defaults.
        assert_eq!(cfg.loss, LossKind::L1);
        assert_eq!(cfg.output_dim, 30);

        let overrides = Overrides {
            seed: Some(9),
            delta: Some(0.5),
            with_gaps: true,
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&path), &overrides).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.delta, 0.5);
        assert!(cfg.with_gaps);
    }

    #[test]
    fn family_flag_selects_the_default_bundle() {
        let overrides = Overrides { family: Some(FamilyKind::Lgd), ..Overrides::default() };
        let cfg = RunConfig::load(None, &overrides).unwrap();
        assert_eq!(cfg.family, FamilyKind::Lgd);
        assert!(matches!(cfg.dataset, GeneratorConfig::InverseProblem { .. }));
    }

    #[test]
    fn zero_p_and_bad_delta_are_rejected_at_parse_time() {
        let overrides = Overrides { p_grid: Some(vec![100, 0]), ..Overrides::default() };
        let err = RunConfig::load(None, &overrides).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("p = 0"));

        let overrides = Overrides { delta: Some(1.5), ..Overrides::default() };
        assert!(RunConfig::load(None, &overrides).is_err());
    }

    #[test]
    fn unknown_fields_and_incoherent_bundles_are_rejected() {
        let path = write_config("unknown.json", r#"{ "not_a_field": 3 }"#);
        let err = RunConfig::load(Some(&path), &Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let path = write_config(
            "ce-regression.json",
            r#"{ "family": "lgd", "loss": "cross_entropy_softmax" }"#,
        );
        assert!(RunConfig::load(Some(&path), &Overrides::default()).is_err());

        let path = write_config(
            "identity-dims.json",
            r#"{ "family": "mon", "output_dim": 7 }"#,
        );
        assert!(RunConfig::load(Some(&path), &Overrides::default()).is_err());
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        let cfg = RunConfig::family_defaults(FamilyKind::Contractive);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
