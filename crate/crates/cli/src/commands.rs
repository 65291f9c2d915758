use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use pairprobit::fit::{maximize, FitConfig, GradientSource};
use pairprobit::gauss::norm_quantile;
use pairprobit::godambe::{godambe_matrices, wald_intervals};
use pairprobit::model::param_labels;
use pairprobit::numdiff::central_gradient;
use pairprobit::pairwise::{pairwise_loglik, pairwise_score};
use pairprobit::simulate::{random_sparse_correlation, run_study, sample_dataset, StudyConfig, StudyResult};
use pairprobit::{PairCounts, Theta, ThresholdSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{dataset_csv, json_bytes, read_dataset, read_toml, sidecar_path, write_all_atomic};
use crate::manifest::{RunManifest, Timer};

fn parse_cuts(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("'{v}' is not a number")))
        .collect()
}

/// Cut-points giving equal category probabilities under a standard normal.
fn equal_probability_cuts(k: usize) -> CliResult<Vec<f64>> {
    (1..k)
        .map(|i| norm_quantile(i as f64 / k as f64).map_err(CliError::from))
        .collect()
}

fn validate_menu(menu: &[Vec<f64>], k: usize) -> CliResult<()> {
    for cuts in menu {
        if cuts.len() != k - 1 {
            return Err(CliError::usage(format!(
                "threshold vector {cuts:?} has {} values; K = {k} needs {}",
                cuts.len(),
                k - 1
            )));
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::usage(format!("threshold vector {cuts:?} is not strictly increasing")));
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file with any of: q, k, n, zero_fraction, seed, threshold_menu.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of margins.
    #[arg(long)]
    q: Option<usize>,
    /// Number of categories per margin.
    #[arg(long)]
    k: Option<usize>,
    /// Number of observations.
    #[arg(long)]
    n: Option<usize>,
    /// Fraction of correlations set exactly to zero.
    #[arg(long = "zero-frac")]
    zero_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated cut-points; repeat to give a menu assigned at random
    /// to margins. Defaults to equal-probability cut-points.
    #[arg(long = "thresholds", value_parser = parse_cuts)]
    thresholds: Vec<Vec<f64>>,
    /// Dataset output (CSV).
    #[arg(long, default_value = "data.csv")]
    out: PathBuf,
    /// Truth output (JSON); defaults to `<out>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub q: Option<usize>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub zero_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub threshold_menu: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
struct ResolvedSimulate {
    q: usize,
    k: usize,
    n: usize,
    zero_fraction: f64,
    seed: u64,
    threshold_menu: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TruthFile<'a> {
    manifest: &'a RunManifest,
    q: usize,
    k: usize,
    labels: Vec<String>,
    theta: &'a [f64],
    correlation_matrix: Vec<Vec<f64>>,
    thresholds: &'a [Vec<f64>],
}

fn resolve_simulate(args: &SimulateArgs) -> CliResult<ResolvedSimulate> {
    let file = match &args.config {
        Some(p) => read_toml::<SimulateConfig>(p)?,
        None => SimulateConfig::default(),
    };
    let need = |flag: Option<usize>, cfg: Option<usize>, name: &str| {
        flag.or(cfg)
            .ok_or_else(|| CliError::usage(format!("--{name} is required (flag or config file)")))
    };
    let q = need(args.q, file.q, "q")?;
    let k = need(args.k, file.k, "k")?;
    let n = need(args.n, file.n, "n")?;
    if q < 2 {
        return Err(CliError::usage(format!("--q must be at least 2, got {q}")));
    }
    if !(2..=u16::MAX as usize).contains(&k) {
        return Err(CliError::usage(format!("--k must be at least 2, got {k}")));
    }
    if n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let zero_fraction = args.zero_frac.or(file.zero_fraction).unwrap_or(0.0);
    if !(0.0..1.0).contains(&zero_fraction) {
        return Err(CliError::usage(format!("--zero-frac must lie in [0, 1), got {zero_fraction}")));
    }
    let threshold_menu = if !args.thresholds.is_empty() {
        args.thresholds.clone()
    } else if let Some(m) = file.threshold_menu.filter(|m| !m.is_empty()) {
        m
    } else {
        vec![equal_probability_cuts(k)?]
    };
    validate_menu(&threshold_menu, k)?;
    Ok(ResolvedSimulate {
        q,
        k,
        n,
        zero_fraction,
        seed: args.seed.or(file.seed).unwrap_or(0),
        threshold_menu,
    })
}

pub fn simulate(args: &SimulateArgs, argv: &[String]) -> CliResult<()> {
    let cfg = resolve_simulate(args)?;
    let manifest = RunManifest::new("simulate", Some(cfg.seed), &cfg, argv)?;
    let mut timer = Timer::default();

    let (theta, data) = timer.phase("simulate", || -> CliResult<_> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let sigma = random_sparse_correlation(cfg.q, cfg.zero_fraction, &mut rng)?;
        let cuts = (0..cfg.q)
            .map(|_| cfg.threshold_menu[rng.random_range(0..cfg.threshold_menu.len())].clone())
            .collect();
        let thresholds = ThresholdSet::new(cuts)?;
        rng.set_stream(1);
        let data = sample_dataset(&sigma, &thresholds, cfg.n, &mut rng)?;
        Ok((Theta::from_parts(&sigma, &thresholds)?, data))
    })?;

    let (sigma, thresholds) = theta.to_parts();
    let m = sigma.matrix();
    let truth = TruthFile {
        manifest: &manifest,
        q: cfg.q,
        k: cfg.k,
        labels: param_labels(cfg.q, cfg.k),
        theta: theta.as_slice(),
        correlation_matrix: (0..cfg.q).map(|i| m.row(i).iter().copied().collect()).collect(),
        thresholds: thresholds.as_vecs(),
    };
    let truth_path = args.truth.clone().unwrap_or_else(|| {
        let mut s = args.out.as_os_str().to_owned();
        s.push(".truth.json");
        PathBuf::from(s)
    });
    let csv = dataset_csv(&data)?;
    let truth_bytes = json_bytes(&truth)?;
    let side = sidecar_path(&args.out);
    let side_bytes = json_bytes(&timer.sidecar(&manifest, &[&args.out, &truth_path]))?;
    write_all_atomic(&[(&args.out, &csv), (&truth_path, &truth_bytes), (&side, &side_bytes)])?;
    log::info!("wrote {} observations to {}", cfg.n, args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GradientArg {
    Analytic,
    Numeric,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset: headerless CSV, one row per observation, categories 1..K.
    data: PathBuf,
    /// Number of categories; defaults to the largest category in the data.
    #[arg(long)]
    k: Option<usize>,
    /// Confidence level of the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// TOML file with optimizer settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    gradient: Option<GradientArg>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    gradient_tolerance: Option<f64>,
    #[arg(long)]
    rho_bound: Option<f64>,
    /// Report output (JSON).
    #[arg(long, default_value = "fit.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct FitEcho<'a> {
    data: &'a Path,
    k: Option<usize>,
    level: f64,
    fit: &'a FitConfig,
}

#[derive(Serialize)]
struct ParameterRow {
    label: String,
    estimate: f64,
    std_error: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
}

#[derive(Serialize)]
struct GodambeReport {
    j_condition: f64,
    pseudo_inverse_used: bool,
    /// Godambe information, rows and columns in parameter order.
    g_hat: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    manifest: &'a RunManifest,
    q: usize,
    k: usize,
    n: usize,
    converged: bool,
    status: pairprobit::fit::Status,
    iterations: usize,
    loglik: f64,
    initial_loglik: f64,
    gradient_norm: f64,
    sigma_pd: bool,
    underflow_count: usize,
    level: f64,
    z: f64,
    parameters: Vec<ParameterRow>,
    godambe: Option<GodambeReport>,
    warnings: Vec<String>,
    loglik_trace: Vec<f64>,
}

pub fn fit(args: &FitArgs, argv: &[String]) -> CliResult<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let mut config = match &args.config {
        Some(p) => read_toml::<FitConfig>(p)?,
        None => FitConfig::default(),
    };
    if let Some(g) = args.gradient {
        config.gradient = match g {
            GradientArg::Analytic => GradientSource::Analytic,
            GradientArg::Numeric => GradientSource::FiniteDifference,
        };
    }
    if let Some(v) = args.max_iterations {
        config.max_iterations = v;
    }
    if let Some(v) = args.gradient_tolerance {
        config.gradient_tolerance = v;
    }
    if let Some(v) = args.rho_bound {
        config.rho_bound = v;
    }
    config.validate()?;
    let echo = FitEcho {
        data: &args.data,
        k: args.k,
        level: args.level,
        fit: &config,
    };
    let manifest = RunManifest::new("fit", None, &echo, argv)?;
    let mut timer = Timer::default();

    let data = timer.phase("read", || read_dataset(&args.data, args.k))?;
    let counts = PairCounts::from_dataset(&data);
    let result = timer.phase("optimize", || maximize(&data, &counts, &config))?;
    let mut warnings = Vec::new();
    if !result.converged {
        warnings.push(format!("optimizer did not converge ({:?})", result.status));
    }
    if !result.sigma_pd {
        warnings.push("fitted correlation matrix is not positive definite".to_string());
    }
    if result.underflow_count > 0 {
        warnings.push(format!("{} observed cells had probabilities below the floor", result.underflow_count));
    }

    let theta = &result.theta_hat;
    let labels = param_labels(data.q(), data.k());
    let z = norm_quantile(1.0 - (1.0 - args.level) / 2.0)?;
    let inference = timer.phase("godambe", || -> CliResult<_> {
        let g = godambe_matrices(theta, &data, &counts)?;
        if g.pseudo_inverse_used {
            warnings.push(format!("variability matrix ill-conditioned ({:e}); pseudo-inverse used", g.j_condition));
        }
        let ivs = wald_intervals(theta, &g.g_hat, data.n(), args.level);
        Ok((g, ivs))
    })?;
    let (g, intervals) = inference;
    let parameters = match intervals {
        Ok(ivs) => ivs
            .into_iter()
            .map(|iv| ParameterRow {
                label: iv.label,
                estimate: iv.estimate,
                std_error: Some(iv.std_error),
                lower: Some(iv.lower),
                upper: Some(iv.upper),
            })
            .collect(),
        Err(e) => {
            warnings.push(format!("no standard errors: {e}"));
            labels
                .iter()
                .zip(theta.as_slice())
                .map(|(label, &estimate)| ParameterRow {
                    label: label.clone(),
                    estimate,
                    std_error: None,
                    lower: None,
                    upper: None,
                })
                .collect()
        }
    };
    let p = theta.len();
    let report = FitReport {
        manifest: &manifest,
        q: data.q(),
        k: data.k(),
        n: data.n(),
        converged: result.converged,
        status: result.status,
        iterations: result.iterations,
        loglik: result.loglik,
        initial_loglik: result.initial_loglik,
        gradient_norm: result.gradient_norm,
        sigma_pd: result.sigma_pd,
        underflow_count: result.underflow_count,
        level: args.level,
        z,
        parameters,
        godambe: Some(GodambeReport {
            j_condition: g.j_condition,
            pseudo_inverse_used: g.pseudo_inverse_used,
            g_hat: (0..p).map(|i| g.g_hat.row(i).iter().copied().collect()).collect(),
        }),
        warnings,
        loglik_trace: result.loglik_trace.clone(),
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let bytes = json_bytes(&report)?;
    let side = sidecar_path(&args.out);
    let side_bytes = json_bytes(&timer.sidecar(&manifest, &[&args.out]))?;
    write_all_atomic(&[(&args.out, &bytes), (&side, &side_bytes)])
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study configuration (TOML).
    config: PathBuf,
    /// Report output (JSON).
    #[arg(long, default_value = "study.json")]
    out: PathBuf,
    /// Run replicates one after another.
    #[arg(long)]
    serial: bool,
}

#[derive(Serialize)]
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct StudyTables {
    mse: Table,
    mean_std_error: Table,
    coverage: Table,
}

#[derive(Serialize)]
struct StudyReport<'a> {
    manifest: &'a RunManifest,
    tables: StudyTables,
    result: &'a StudyResult,
}

fn table(result: &StudyResult, f: fn(&pairprobit::simulate::ParameterSummary) -> f64) -> Table {
    let mut columns = vec!["n".to_string()];
    columns.extend(result.labels.iter().cloned());
    let rows = result
        .scenarios
        .iter()
        .map(|s| std::iter::once(s.n as f64).chain(s.parameters.iter().map(f)).collect())
        .collect();
    Table { columns, rows }
}

pub fn study(args: &StudyArgs, argv: &[String]) -> CliResult<()> {
    let mut config: StudyConfig = read_toml(&args.config)?;
    if args.serial {
        config.parallel = false;
    }
    config.validate()?;
    let manifest = RunManifest::new("study", Some(config.seed), &config, argv)?;
    let mut timer = Timer::default();
    let result = timer.phase("study", || run_study(&config))?;
    for s in &result.scenarios {
        if s.not_converged + s.failed > 0 {
            log::warn!(
                "n = {}: {} of {} replicates excluded ({} not converged, {} failed)",
                s.n,
                s.not_converged + s.failed,
                config.replicates,
                s.not_converged,
                s.failed
            );
        }
    }
    let report = StudyReport {
        manifest: &manifest,
        tables: StudyTables {
            mse: table(&result, |p| p.mse),
            mean_std_error: table(&result, |p| p.mean_std_error),
            coverage: table(&result, |p| p.coverage),
        },
        result: &result,
    };
    let bytes = json_bytes(&report)?;
    let side = sidecar_path(&args.out);
    let side_bytes = json_bytes(&timer.sidecar(&manifest, &[&args.out]))?;
    write_all_atomic(&[(&args.out, &bytes), (&side, &side_bytes)])
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Comma-separated numbers of margins.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7,8,9,10,11,12")]
    q: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Timed repetitions per method; the median is reported.
    #[arg(long, default_value_t = 11)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing table output (CSV).
    #[arg(long, default_value = "bench.csv")]
    #[serde(skip)]
    out: PathBuf,
}

fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let s = Instant::now();
            f();
            s.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[reps / 2]
}

pub fn bench_grad(args: &BenchArgs, argv: &[String]) -> CliResult<()> {
    if args.q.is_empty() || args.q.iter().any(|&q| q < 2) {
        return Err(CliError::usage("--q needs one or more values of at least 2"));
    }
    if args.n == 0 || args.k < 2 || args.repetitions == 0 {
        return Err(CliError::usage("--n and --repetitions must be positive and --k at least 2"));
    }
    let manifest = RunManifest::new("bench-grad", Some(args.seed), args, argv)?;
    let mut timer = Timer::default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "q",
        "n",
        "k",
        "n_params",
        "analytic_median_s",
        "numeric_median_s",
        "speedup",
        "max_abs_discrepancy",
        "max_rel_discrepancy",
    ];
    let csv_err = |e: csv::Error| CliError::runtime(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    let cuts = equal_probability_cuts(args.k)?;
    for &q in &args.q {
        let row = timer.phase(&format!("q={q}"), || -> CliResult<Vec<String>> {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            rng.set_stream(q as u64);
            let sigma = random_sparse_correlation(q, 0.0, &mut rng)?;
            let thresholds = ThresholdSet::new(vec![cuts.clone(); q])?;
            let theta = Theta::from_parts(&sigma, &thresholds)?;
            let data = sample_dataset(&sigma, &thresholds, args.n, &mut rng)?;
            let counts = PairCounts::from_dataset(&data);
            let objective = |x: &[f64]| {
                Theta::new(q, args.k, x.to_vec())
                    .and_then(|t| pairwise_loglik(&t, &counts))
                    .unwrap_or(f64::NAN)
            };
            let analytic = pairwise_score(&theta, &counts)?;
            let numeric = central_gradient(objective, theta.as_slice());
            let (mut abs, mut rel) = (0.0f64, 0.0f64);
            for (a, b) in analytic.iter().zip(&numeric) {
                abs = abs.max((a - b).abs());
                rel = rel.max((a - b).abs() / b.abs().max(1.0));
            }
            let ta = median_seconds(args.repetitions, || {
                std::hint::black_box(pairwise_score(&theta, &counts).ok());
            });
            let tn = median_seconds(args.repetitions, || {
                std::hint::black_box(central_gradient(objective, theta.as_slice()));
            });
            Ok(vec![
                q.to_string(),
                args.n.to_string(),
                args.k.to_string(),
                theta.len().to_string(),
                format!("{ta:.6e}"),
                format!("{tn:.6e}"),
                format!("{:.2}", tn / ta),
                format!("{abs:.3e}"),
                format!("{rel:.3e}"),
            ])
        })?;
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
    let side = sidecar_path(&args.out);
    let side_bytes = json_bytes(&timer.sidecar(&manifest, &[&args.out]))?;
    write_all_atomic(&[(&args.out, &bytes), (&side, &side_bytes)])
}
