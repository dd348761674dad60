use std::f64::consts::PI;
use std::time::Instant;

use dropreg::noise::{DropoutConfig, NoiseModel};
use dropreg::partition::{self, EvalPoint, Family};
use dropreg::taylor::{self, Verdict};
use dropreg::train::{self, Dataset, PenaltyKind, SyntheticSpec, TraceRow, TrainConfig};
use rayon::prelude::*;
use serde_json::json;

use crate::args::*;
use crate::manifest::{self, OutputFile, RunManifest};
use crate::output::{field, num, Csv};
use crate::{CliError, Result};

/// Relative tolerance of `derivatives --check-oracle`.
pub const ORACLE_TOL: f64 = 1e-6;

struct Produced {
    files: Vec<(String, Vec<u8>)>,
    summary: String,
    failure: Option<String>,
}

impl Produced {
    fn ok(files: Vec<(String, Vec<u8>)>, summary: String) -> Self {
        Produced {
            files,
            summary,
            failure: None,
        }
    }
}

/// Runs `cli.command`, writes its outputs and manifest into `cli.out`, and
/// returns a short human-readable summary.
pub fn execute(cli: &Cli, recorded_args: &[String]) -> Result<String> {
    let start = Instant::now();
    let produced = match &cli.command {
        Command::Derivatives(a) => derivatives(a)?,
        Command::Radius(a) => radius(a)?,
        Command::Train(a) => train_cmd(a, cli.seed)?,
        Command::Compare(a) => compare(a, cli.seed)?,
        Command::Bounded(a) => bounded(a, cli.seed)?,
        Command::Replay(a) => return replay(a),
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let mut outputs = Vec::with_capacity(produced.files.len());
    for (name, bytes) in &produced.files {
        let path = cli.out.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        outputs.push(OutputFile {
            path: name.clone(),
            sha256: manifest::sha256_hex(bytes),
        });
    }
    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        args: recorded_args.to_vec(),
        config: serde_json::to_value(cli)?,
        seed: cli.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    let path = cli.out.join(RunManifest::file_name(cli.command.name()));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    match produced.failure {
        Some(f) => Err(CliError::Verification(f)),
        None => Ok(produced.summary),
    }
}

fn pretty(value: &serde_json::Value) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn derivatives(a: &DerivativesArgs) -> Result<Produced> {
    if a.k.contains(&0) {
        return Err(CliError::Usage("--k orders must be >= 1".into()));
    }
    if a.z.iter().any(|z| !z.is_finite()) {
        return Err(CliError::Usage("--z values must be finite".into()));
    }
    let mut csv = Csv::new(&["k", "z", "value", "oracle_value", "abs_diff"]);
    let mut failures = Vec::new();
    for &k in &a.k {
        let closed = if k == 1 {
            None
        } else {
            Some(partition::derivative_closed_form(k - 1)?)
        };
        let recurrence = partition::derivative_recurrence(k)?;
        for &z in &a.z {
            let at = EvalPoint::new(z)?;
            let value = match &closed {
                None => Ok(at.p()),
                Some(poly) => partition::eval_derivative(poly, &at).map(|e| e.value),
            };
            let oracle = partition::eval_derivative_exact(&recurrence, &at).to_f64();
            let (value, diff) = match value {
                Ok(v) => (v, (v - oracle).abs()),
                Err(e) => {
                    failures.push(format!("k={k} z={z}: {e}"));
                    (f64::NAN, f64::NAN)
                }
            };
            if a.check_oracle && diff > ORACLE_TOL * oracle.abs() {
                failures.push(format!("k={k} z={z}: |{value} - {oracle}| = {diff:e}"));
            }
            csv.row(&[k.to_string(), num(z), num(value), num(oracle), num(diff)]);
        }
    }
    let rows = a.k.len() * a.z.len();
    let failure = (a.check_oracle && !failures.is_empty()).then(|| failures.join("; "));
    Ok(Produced {
        files: vec![("derivatives.csv".into(), csv.into_bytes())],
        summary: format!("{rows} derivative values written"),
        failure,
    })
}

fn radius(a: &RadiusArgs) -> Result<Produced> {
    if a.max_order < 30 {
        return Err(CliError::Usage("--max-order must be >= 30".into()));
    }
    if a.z_grid.iter().any(|z| !z.is_finite()) {
        return Err(CliError::Usage("--z-grid values must be finite".into()));
    }
    let model = match a.model {
        ScalarLaw::ScalarCoupling => NoiseModel::ScalarCoupling,
        ScalarLaw::ScalarDropAll => NoiseModel::ScalarDropAll,
    };
    let configs = a
        .delta_grid
        .iter()
        .map(|&d| DropoutConfig::new(d, model))
        .collect::<dropreg::Result<Vec<_>>>()?;
    let grid: Vec<(f64, DropoutConfig)> = a
        .z_grid
        .iter()
        .flat_map(|&z| configs.iter().map(move |c| (z, *c)))
        .collect();
    let diagnostics: Vec<_> = grid
        .par_iter()
        .map(|(z, c)| taylor::diagnose_series(*z, c, a.max_order))
        .collect();
    let mut csv = Csv::new(&["z", "delta", "B", "verdict", "limit_or_onset", "root_test_tail"]);
    let mut counts = [0usize; 4];
    for ((z, c), diag) in grid.iter().zip(&diagnostics) {
        let b = z * c.odds();
        match diag {
            Ok(d) => {
                let tail = d.root_test[(a.max_order / 2).saturating_sub(2)..]
                    .iter()
                    .flatten()
                    .fold(f64::NAN, |m, &r| if m.is_nan() || r > m { r } else { m });
                let limit = match d.verdict {
                    Verdict::Diverging { onset } => onset as f64,
                    _ => *d.partial_sums.last().expect("orders >= 2"),
                };
                counts[match d.verdict {
                    Verdict::Converged { .. } => 0,
                    Verdict::Diverging { .. } => 1,
                    Verdict::Inconclusive => 2,
                }] += 1;
                csv.row(&[num(*z), num(c.delta()), num(b), d.verdict.label().into(), num(limit), num(tail)]);
            }
            Err(e) => {
                counts[3] += 1;
                let label = match e {
                    dropreg::Error::PrecisionExhausted { .. } => "PrecisionExhausted",
                    _ => "Error",
                };
                csv.row(&[num(*z), num(c.delta()), num(b), label.into(), num(f64::NAN), num(f64::NAN)]);
            }
        }
    }
    let estimates: Vec<_> = a
        .z_grid
        .par_iter()
        .map(|&z| -> dropreg::Result<_> {
            Ok((
                taylor::estimate_radius(z, a.max_order)?,
                taylor::estimate_radius(z, 2 * a.max_order)?,
            ))
        })
        .collect::<dropreg::Result<_>>()?;
    let points: Vec<_> = estimates
        .iter()
        .map(|(e, doubled)| {
            let change = (doubled.radius - e.radius) / e.radius;
            let discrepancy = e.discrepancy_from_two_pi();
            json!({
                "z": e.z,
                "radius": e.radius,
                "limsup": e.limsup,
                "tail_window": [e.window.0, e.window.1],
                "radius_at_double_order": doubled.radius,
                "relative_change_under_doubling": change,
                "stable_within_5_percent": change.abs() <= 0.05,
                "discrepancy_vs_two_pi": discrepancy,
                "relative_discrepancy_vs_two_pi": discrepancy / (2.0 * PI),
                "agrees_with_two_pi_within_5_percent": (discrepancy / (2.0 * PI)).abs() <= 0.05,
                "nearest_singularity_distance": (e.z * e.z + PI * PI).sqrt(),
            })
        })
        .collect();
    let summary = json!({
        "max_order": a.max_order,
        "two_pi": 2.0 * PI,
        "points": points,
        "verdict_counts": {
            "converged": counts[0],
            "diverging": counts[1],
            "inconclusive": counts[2],
            "errors": counts[3],
        },
    });
    Ok(Produced::ok(
        vec![
            ("radius.csv".into(), csv.into_bytes()),
            ("radius.json".into(), pretty(&summary)?),
        ],
        format!(
            "{} grid points: {} converged, {} diverging, {} inconclusive, {} errors",
            grid.len(),
            counts[0],
            counts[1],
            counts[2],
            counts[3]
        ),
    ))
}

fn load_data(data: &DataArgs, seed: u64, default_margin: Option<f64>) -> Result<Dataset> {
    if !(data.feature_scale.is_finite() && data.feature_scale != 0.0) {
        return Err(CliError::Usage("--feature-scale must be finite and non-zero".into()));
    }
    let ds = match (&data.dataset, &data.synthetic) {
        (Some(path), _) => Dataset::from_csv(path)?,
        (None, dims) => {
            let (d, n) = match dims.as_deref() {
                Some([d, n]) => (*d, *n),
                None => (2, 200),
                Some(_) => return Err(CliError::Usage("--synthetic takes D and N".into())),
            };
            let spec = SyntheticSpec {
                margin: data.separable.or(default_margin),
                classes: data.classes,
                ..SyntheticSpec::new(seed, d, n)
            };
            Dataset::synthetic(spec)?
        }
    };
    Ok(if data.feature_scale == 1.0 {
        ds
    } else {
        ds.scaled(data.feature_scale)
    })
}

fn penalty_kind(p: PenaltyArg, r: &RegimeArgs) -> PenaltyKind {
    match p {
        PenaltyArg::None => PenaltyKind::None,
        PenaltyArg::L2 => PenaltyKind::L2 { lambda: r.lambda },
        PenaltyArg::R2 => PenaltyKind::R2,
        PenaltyArg::Rk => PenaltyKind::Rk { k: r.k },
        PenaltyArg::Exact => PenaltyKind::Exact,
        PenaltyArg::McDropout => PenaltyKind::McDropout { samples: r.samples },
    }
}

fn train_config(p: PenaltyArg, r: &RegimeArgs, cap: Option<f64>, seed: u64) -> Result<TrainConfig> {
    let model = match r.model {
        ModelArg::ScalarCoupling => NoiseModel::ScalarCoupling,
        ModelArg::ScalarDropAll => NoiseModel::ScalarDropAll,
        ModelArg::IndependentCoordinates => NoiseModel::IndependentCoordinates,
    };
    let config = TrainConfig {
        penalty: penalty_kind(p, r),
        dropout: DropoutConfig::new(r.delta, model)?,
        family: match r.family {
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::Linear => Family::Linear,
        },
        learning_rate: r.lr,
        epochs: r.epochs,
        seed,
        cap,
        normalize: !r.no_normalize,
        shared_masks: r.shared_masks,
        ..TrainConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn trace_csv(trace: &[TraceRow]) -> Vec<u8> {
    let mut csv = Csv::new(&["epoch", "loss", "penalty", "beta_norm", "max_xb", "frac_B_gt_2pi"]);
    for r in trace {
        csv.row(&[
            r.epoch.to_string(),
            num(r.loss),
            num(r.penalty),
            num(r.beta_norm),
            num(r.max_xb),
            num(r.frac_b_gt_2pi),
        ]);
    }
    csv.into_bytes()
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<Produced> {
    let ds = load_data(&a.data, seed, None)?;
    let config = train_config(a.penalty, &a.regime, a.cap, seed)?;
    let run = train::train(&ds, &config)?;
    let result = json!({
        "regime": config.penalty.label(),
        "final_loss": run.final_loss,
        "params": run.params,
        "epochs_completed": run.trace.len(),
        "aborted": run.aborted,
    });
    let status = match &run.aborted {
        Some(a) => format!("aborted at epoch {}: {}", a.epoch, a.reason),
        None => format!("final loss {:.6}", run.final_loss),
    };
    Ok(Produced::ok(
        vec![
            ("trace.csv".into(), trace_csv(&run.trace)),
            ("run.json".into(), pretty(&result)?),
        ],
        format!("{}: {status}", config.penalty.label()),
    ))
}

fn compare(a: &CompareArgs, seed: u64) -> Result<Produced> {
    if a.regimes.is_empty() {
        return Err(CliError::Usage("--regimes must name at least one regime".into()));
    }
    let ds = load_data(&a.data, seed, None)?;
    let base = train_config(PenaltyArg::None, &a.regime, a.cap, seed)?;
    let kinds: Vec<PenaltyKind> = a.regimes.iter().map(|p| penalty_kind(*p, &a.regime)).collect();
    let cmp = train::compare_regimes(&ds, &base, &kinds)?;
    let p = ds.param_len();
    let mut header = vec!["regime".to_string(), "final_loss".into()];
    header.extend((1..=p).map(|i| format!("beta_{i}")));
    header.extend(
        ["cos_sim_vs_exact", "l2_dist_vs_exact", "frac_B_gt_2pi", "aborted"].map(String::from),
    );
    let mut csv = Csv::new(&header);
    for r in &cmp.rows {
        let mut cells = vec![field(&r.regime), num(r.final_loss)];
        cells.extend(r.beta.iter().map(|b| num(*b)));
        cells.push(num(r.cos_sim_vs_exact));
        cells.push(num(r.l2_dist_vs_exact));
        cells.push(num(r.frac_b_gt_2pi));
        cells.push(field(r.aborted.as_deref().unwrap_or("false")));
        csv.row(&cells);
    }
    let mut pairs = Csv::new(&["a", "b", "cos_sim", "l2_dist"]);
    for r in &cmp.pairwise {
        pairs.row(&[field(&r.a), field(&r.b), num(r.cos_sim), num(r.l2_dist)]);
    }
    let aborted = cmp.rows.iter().filter(|r| r.aborted.is_some()).count();
    Ok(Produced::ok(
        vec![
            ("comparison.csv".into(), csv.into_bytes()),
            ("pairwise.csv".into(), pairs.into_bytes()),
        ],
        format!("{} regimes compared, {aborted} aborted", cmp.rows.len()),
    ))
}

fn bounded(a: &BoundedArgs, seed: u64) -> Result<Produced> {
    let ds = load_data(&a.data, seed, Some(0.1))?;
    let base = train_config(a.penalty, &a.regime, None, seed)?;
    let report = train::bounded_weight_experiment(&ds, a.cap, &base)?;
    let constrained = report.constrained.as_ref().expect("filled by the experiment");
    let unconstrained = report.unconstrained.as_ref().expect("filled by the experiment");
    Ok(Produced::ok(
        vec![
            ("bounded.json".into(), pretty(&serde_json::to_value(&report)?)?),
            ("constrained_trace.csv".into(), trace_csv(&constrained.trace)),
            ("unconstrained_trace.csv".into(), trace_csv(&unconstrained.trace)),
        ],
        format!(
            "cap {}: max |x.beta| {:.6} (bounded by 2 pi: {}), loss gap {:.6e}",
            report.cap, report.constrained_max_abs_xb, report.bounded_throughout, report.loss_gap
        ),
    ))
}

fn replay(a: &ReplayArgs) -> Result<String> {
    let report = manifest::replay(&a.manifest)?;
    let mut lines = Vec::new();
    for (path, expected, got) in &report.files {
        let status = if expected == got { "match" } else { "MISMATCH" };
        lines.push(format!("{status} {path}"));
    }
    for path in &report.stale {
        lines.push(format!("STALE {path} (stored file differs from manifest)"));
    }
    let text = lines.join("\n");
    if report.all_match() {
        Ok(text)
    } else {
        println!("{text}");
        Err(CliError::Verification(format!("{} does not reproduce", a.manifest.display())))
    }
}
