//! The four subcommands behind the binary. Each writes its artifacts into
//! the configured output directory and prints a one-line summary; none of
//! them mutates its inputs, and reruns with the same configuration and seed
//! reproduce every output byte for byte.

use std::path::Path;

use deqcert_core::bound::{chain_from_constants, generalization_bound, BoundReport};
use deqcert_core::constants::{estimate_constants, ConstantsReport};
use deqcert_core::numerics::SeededRng;

use crate::config::RunConfig;
use crate::experiments::{generate_dataset, sweep, SweepTable};
use crate::svg::SvgPlot;
use crate::verify::{run_all, VerifySizes};
use crate::CliError;

// Commands derive their random streams from the run seed with the same
// labels the sweep uses per cell.
const STREAM_DATA: u64 = 1;
const STREAM_THETA: u64 = 2;

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Estimates the data- and architecture-dependent constants on a fresh
/// dataset of `n_estimate` samples and writes `constants.json` and
/// `constants.csv`.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<ConstantsReport, CliError> {
    let master = SeededRng::new(cfg.seed);
    let mut data_rng = master.derive(STREAM_DATA).derive(0);
    let (data, forward) =
        generate_dataset(&cfg.arch(), &cfg.dataset, cfg.n_estimate, &mut data_rng)?;
    let spec = cfg.arch().build_spec(forward.as_ref())?;

    let const_rng = master.derive(STREAM_THETA).derive(0);
    let report =
        estimate_constants(&spec, cfg.loss, &data.inputs, &data.targets, cfg.n_theta, &const_rng)?;

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Config(format!("constants serialization: {e}")))?;
    write_text(&cfg.out.join("constants.json"), &format!("{json}\n"))?;
    write_text(
        &cfg.out.join("constants.csv"),
        &format!("{}\n{}\n", ConstantsReport::csv_header(), report.csv_row()),
    )?;

    println!(
        "estimate: family={} N={} thetas={} c_out={:.6} c_out_T={:.6} c_ell={:.6} l_x={:.6} c_params={} -> {}",
        report.family,
        cfg.n_estimate,
        report.theta_samples,
        report.c_out,
        report.c_out_t,
        report.c_ell,
        report.l_x,
        report.c_params,
        cfg.out.join("constants.json").display(),
    );
    Ok(report)
}

/// Evaluates the bound over the configured (N, p) grid from a previously
/// saved constants report and writes `bound.csv`.
pub fn cmd_bound(cfg: &RunConfig, constants_path: &Path) -> Result<Vec<BoundReport>, CliError> {
    let text = std::fs::read_to_string(constants_path).map_err(|source| CliError::Io {
        path: constants_path.display().to_string(),
        source,
    })?;
    let report: ConstantsReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", constants_path.display())))?;
    report.validate()?;
    let chain = chain_from_constants(&report)
        .map_err(|e| CliError::Certification(e.to_string()))?;

    let mut rows = Vec::with_capacity(cfg.n_grid.len() * cfg.p_grid.len());
    let mut csv = String::from(BoundReport::csv_header());
    csv.push('\n');
    for &n in &cfg.n_grid {
        for &p in &cfg.p_grid {
            let row = generalization_bound(&report, &chain, p, n, cfg.delta)
                .map_err(|e| CliError::Config(e.to_string()))?;
            csv.push_str(&row.csv_row());
            csv.push('\n');
            rows.push(row);
        }
    }
    write_text(&cfg.out.join("bound.csv"), &csv)?;

    let tightest = rows
        .iter()
        .map(|r| r.total_excess)
        .fold(f64::INFINITY, f64::min);
    println!(
        "bound: family={} cells={} delta={} tightest_total_excess={:.6} -> {}",
        report.family,
        rows.len(),
        cfg.delta,
        tightest,
        cfg.out.join("bound.csv").display(),
    );
    Ok(rows)
}

/// Runs the full (N, p) sweep and writes `sweep.csv` plus `sweep.svg` (one
/// curve per p over N, log-scaled x, plus gap curves when measured).
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepTable, CliError> {
    let table = sweep(&cfg.sweep_plan())?;
    write_text(&cfg.out.join("sweep.csv"), &table.to_csv())?;

    let mut plot = SvgPlot::new(
        "certified excess risk over the sample-size grid",
        "N (training samples)",
        "excess risk",
    )
    .with_log_x();
    for &p in &cfg.p_grid {
        let points: Vec<(f64, f64)> = table
            .cells
            .iter()
            .filter(|c| c.param_count == p)
            .map(|c| (c.n_samples as f64, c.report.total_excess))
            .collect();
        plot.push_series(&format!("bound, p={p}"), points);
    }
    if cfg.with_gaps {
        let first_p = cfg.p_grid[0];
        let gap_points = |pick: fn(&crate::experiments::SweepCell) -> Option<f64>| {
            table
                .cells
                .iter()
                .filter(|c| c.param_count == first_p)
                .filter_map(|c| pick(c).map(|g| (c.n_samples as f64, g)))
                .collect::<Vec<_>>()
        };
        let random = gap_points(|c| c.max_gap_random);
        if !random.is_empty() {
            plot.push_series("max gap, random theta", random);
        }
        let trained = gap_points(|c| c.max_gap_trained);
        if !trained.is_empty() {
            plot.push_series("max gap, trained theta", trained);
        }
    }
    write_text(&cfg.out.join("sweep.svg"), &plot.render())?;

    let failures: usize = table.cells.iter().map(|c| c.solver_failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} operators were dropped for non-convergence");
    }
    println!(
        "sweep: family={} cells={} seed={} -> {} and {}",
        cfg.family,
        table.cells.len(),
        cfg.seed,
        cfg.out.join("sweep.csv").display(),
        cfg.out.join("sweep.svg").display(),
    );
    Ok(table)
}

/// Runs every Monte-Carlo lemma check at the default sizes, printing one
/// line per check; errors with a verification failure if any check fails.
pub fn cmd_verify(seed: u64) -> Result<(), CliError> {
    let checks = run_all(&VerifySizes::default(), seed)?;
    let mut failed = Vec::new();
    for check in &checks {
        println!(
            "{}: {} worst ratio {:.6} over {} samples ({})",
            check.name,
            if check.pass { "PASS" } else { "FAIL" },
            check.worst_ratio,
            check.samples,
            check.detail,
        );
        if !check.pass {
            failed.push(check.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("checks failed: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;
    use deqcert_core::operators::FamilyKind;
    use std::path::PathBuf;

    fn test_out(tag: &str) -> PathBuf {
        std::env::temp_dir().join(format!("deqcert-cmd-{}-{tag}", std::process::id()))
    }

    fn tiny_config(tag: &str) -> RunConfig {
        let mut cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        cfg.state_dim = 5;
        cfg.input_dim = 4;
        cfg.output_dim = 3;
        cfg.dataset = crate::experiments::GeneratorConfig::Blobs { classes: 3, spread: 1.0 };
        cfg.n_grid = vec![30, 60];
        cfg.p_grid = vec![10, 20];
        cfg.n_theta = 4;
        cfg.n_estimate = 40;
        cfg.gap_thetas = 3;
        cfg.out = test_out(tag);
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn estimate_writes_both_artifacts_and_bound_consumes_them() {
        let cfg = tiny_config("estimate");
        let report = cmd_estimate(&cfg).unwrap();
        assert!(report.c_out > 0.0);

        let json_path = cfg.out.join("constants.json");
        let csv = std::fs::read_to_string(cfg.out.join("constants.csv")).unwrap();
        assert!(csv.starts_with(ConstantsReport::csv_header()));
        assert!(csv.contains("contractive"));

        let rows = cmd_bound(&cfg, &json_path).unwrap();
        assert_eq!(rows.len(), 4);
        let bound_csv = std::fs::read_to_string(cfg.out.join("bound.csv")).unwrap();
        assert_eq!(bound_csv.lines().count(), 5);
        assert!(bound_csv.starts_with(BoundReport::csv_header()));
    }

    #[test]
    fn estimate_for_the_mon_bundle_reports_c_params_two() {
        let mut cfg = RunConfig::load(
            None,
            &Overrides { family: Some(FamilyKind::Mon), ..Overrides::default() },
        )
        .unwrap();
        cfg.state_dim = 6;
        cfg.output_dim = 6;
        cfg.input_dim = 4;
        cfg.dataset = crate::experiments::GeneratorConfig::Blobs { classes: 6, spread: 1.0 };
        cfg.n_estimate = 30;
        cfg.n_theta = 4;
        cfg.out = test_out("mon-estimate");
        let report = cmd_estimate(&cfg).unwrap();
        // Four unit-Frobenius psi blocks and no final layer.
        assert_eq!(report.c_params, 2.0);
    }

    #[test]
    fn sweep_writes_csv_and_svg_deterministically() {
        let mut cfg = tiny_config("sweep-a");
        cfg.with_gaps = true;
        cfg.train_final_layer = true;
        cfg.train_steps = 5;
        let table_a = cmd_sweep(&cfg).unwrap();
        let csv_a = std::fs::read_to_string(cfg.out.join("sweep.csv")).unwrap();
        let svg_a = std::fs::read_to_string(cfg.out.join("sweep.svg")).unwrap();

        let mut cfg_b = cfg.clone();
        cfg_b.out = test_out("sweep-b");
        let table_b = cmd_sweep(&cfg_b).unwrap();
        let csv_b = std::fs::read_to_string(cfg_b.out.join("sweep.csv")).unwrap();
        let svg_b = std::fs::read_to_string(cfg_b.out.join("sweep.svg")).unwrap();

        assert_eq!(table_a.cells.len(), table_b.cells.len());
        assert_eq!(csv_a, csv_b);
        assert_eq!(svg_a, svg_b);
        assert!(csv_a.starts_with(SweepTable::csv_header()));
        // Bound curves for both p values plus the two gap curves.
        assert_eq!(svg_a.matches("<polyline").count(), 4);
        // Gaps stay below the bound cell by cell.
        for cell in &table_a.cells {
            assert!(cell.max_gap_random.unwrap() <= cell.report.total_excess);
            assert!(cell.max_gap_trained.unwrap() <= cell.report.total_excess);
        }
    }

    #[test]
    fn bound_rejects_tampered_constants() {
        let cfg = tiny_config("tamper");
        cmd_estimate(&cfg).unwrap();
        let path = cfg.out.join("constants.json");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut report: ConstantsReport = serde_json::from_str(&text).unwrap();
        report.l_x = 1.5;
        std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
        assert!(cmd_bound(&cfg, &path).is_err());
    }
}
