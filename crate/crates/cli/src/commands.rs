use std::fmt::Write as _;
use std::path::Path;

use nwidth::dimension::{
    effective_dimension, fit_loglog, metric_dimension, FitMethod, RansacParams, SlopeFit, Window,
    FLAT_SLOPE_TOL,
};
use nwidth::domains::{
    generate_cantor, generate_lorenz, generate_menger, generate_sierpinski_carpet,
    generate_weierstrass, sample_sphere, LorenzParams, WeierstrassParams,
};
use nwidth::greedy::{cover_curve, greedy_widths};
use nwidth::krr::{excess_risk_experiment, ConstrainedParams, ExperimentConfig};
use nwidth::spectral::{gram_eigenvalues, ismagilov_lower_bounds};
use nwidth::verify::{preset, presets};
use nwidth::{load_points, Error, Result};
use serde::Serialize;

use crate::args::{Cli, Command, DimArgs, Domain, GenArgs, KrrArgs, SpectrumArgs, VerifyArgs, WidthsArgs};
use crate::output::{comment_block, config_json, header_lines, read_text, write_text, VERSION};
use crate::{EXIT_FAILURE, EXIT_OK};

pub fn execute(cli: &Cli, command_line: &[String]) -> Result<u8> {
    let header = header_lines(cli, command_line);
    match &cli.command {
        Command::Gen(args) => gen(args, &header),
        Command::Widths(args) => widths(args, &header),
        Command::Spectrum(args) => spectrum(args, &header),
        Command::Dim(args) => dim(cli, args),
        Command::Krr(args) => krr(args, &header),
        Command::Verify(args) => verify(args),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_text(path, text).map_err(Error::from)
}

/// Two whitespace-separated columns, skipping rows where either is not finite.
fn plot_file(header: &[String], columns: &str, rows: impl Iterator<Item = (f64, f64)>) -> String {
    let mut out = comment_block(header);
    let _ = writeln!(out, "# {columns}");
    for (x, y) in rows.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let _ = writeln!(out, "{x:?} {y:?}");
    }
    out
}

fn gen(args: &GenArgs, header: &[String]) -> Result<u8> {
    let points = match &args.domain {
        Domain::Cantor { level } => generate_cantor(*level)?,
        Domain::Carpet { level } => generate_sierpinski_carpet(*level)?,
        Domain::Menger { level } => generate_menger(*level)?,
        Domain::Weierstrass { n, a, b, terms } => {
            let a = a.unwrap_or((*b as f64).powf(-0.5));
            let mut params = WeierstrassParams::with_base(a, *b);
            if let Some(t) = terms {
                params.terms = *t;
            }
            generate_weierstrass(*n, params)?
        }
        Domain::Sphere { n, d, seed } => sample_sphere(*n, *d, *seed)?,
        Domain::Lorenz {
            n,
            dt,
            burn_in,
            init,
        } => generate_lorenz(
            *n,
            LorenzParams {
                dt: *dt,
                burn_in: *burn_in,
                init: [init[0], init[1], init[2]],
            },
        )?,
    };
    write(&args.out, &points.to_csv(header))?;
    Ok(EXIT_OK)
}

fn widths(args: &WidthsArgs, header: &[String]) -> Result<u8> {
    let points = load_points(&args.points)?;
    let run = greedy_widths(&args.kernel, &points, args.steps, args.pivot_tol)?;
    let mut out = comment_block(header);
    let _ = writeln!(out, "# points={} steps={}", points.len(), run.len());
    if let Some(t) = run.truncated_at {
        let _ = writeln!(out, "# truncated_at={t}");
    }
    out.push_str("t,w_t,selected_index\n");
    for (t, (w, i)) in run.widths.iter().zip(&run.selected).enumerate() {
        let _ = writeln!(out, "{t},{w:?},{i}");
    }
    write(&args.out, &out)?;

    if let Some(path) = &args.cover_out {
        let centers = args.cover_centers.unwrap_or(args.steps).min(points.len());
        let cover = cover_curve(&args.kernel, &points, centers)?;
        let mut text = comment_block(header);
        text.push_str("n,eps\n");
        for (n, eps) in cover.curve() {
            let _ = writeln!(text, "{n},{eps:?}");
        }
        write(path, &text)?;
    }
    if let Some(path) = &args.plot_data {
        let rows = run
            .widths
            .iter()
            .enumerate()
            .skip(1)
            .map(|(t, w)| ((t as f64).ln(), -w.ln()));
        write(path, &plot_file(header, "ln(t) -ln(w_t)", rows))?;
    }
    Ok(EXIT_OK)
}

fn spectrum(args: &SpectrumArgs, header: &[String]) -> Result<u8> {
    let points = load_points(&args.points)?;
    let spec = gram_eigenvalues(&args.kernel, &points)?;
    let nmax = args.nmax.unwrap_or(spec.len() - 1);
    let lower = ismagilov_lower_bounds(&spec, nmax)?;
    let mut out = comment_block(header);
    let _ = writeln!(
        out,
        "# M={} negatives_clipped={} trace_defect={:e} wL_0={:?}",
        spec.source_size, spec.negatives_clipped, spec.trace_defect, lower[0]
    );
    out.push_str("i,lambda_i,wL_i\n");
    for (i, wl) in lower.iter().enumerate().take(nmax + 1).skip(1) {
        let _ = writeln!(out, "{i},{:?},{wl:?}", spec.lambda(i));
    }
    write(&args.out, &out)?;
    if let Some(path) = &args.plot_data {
        let rows = (1..=nmax).map(|i| ((i as f64).ln(), -lower[i].ln()));
        write(path, &plot_file(header, "ln(i) -ln(wL_i)", rows))?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum CurveKind {
    Widths,
    Cover,
    Spectrum,
    Krr,
}

struct Curve {
    kind: CurveKind,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn parse_curve(text: &str, origin: &Path) -> Result<Curve> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut kind = None;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(k) = kind else {
            kind = Some(match fields.as_slice() {
                ["t", "w_t", ..] => CurveKind::Widths,
                ["n", "eps", ..] => CurveKind::Cover,
                ["i", "lambda_i", "wL_i", ..] => CurveKind::Spectrum,
                ["n", "mean_excess", ..] => CurveKind::Krr,
                _ => {
                    return Err(parse_err(
                        lineno,
                        format!("unrecognised column header `{line}`"),
                    ))
                }
            });
            continue;
        };
        let col = if k == CurveKind::Spectrum { 2 } else { 1 };
        let num = |j: usize| -> Result<f64> {
            let f = fields
                .get(j)
                .ok_or_else(|| parse_err(lineno, format!("missing column {}", j + 1)))?;
            f.parse()
                .map_err(|_| parse_err(lineno, format!("bad number `{f}`")))
        };
        x.push(num(0)?);
        y.push(num(col)?);
    }
    match kind {
        Some(kind) if !x.is_empty() => Ok(Curve { kind, x, y }),
        _ => Err(Error::TooFewPoints(0)),
    }
}

#[derive(Serialize)]
struct DimReport {
    version: &'static str,
    config: serde_json::Value,
    kind: CurveKind,
    slope: f64,
    intercept: f64,
    /// `null` when the fitted slope implies no finite dimension.
    dimension: Option<f64>,
    window: [usize; 2],
    method: &'static str,
    inliers: usize,
    dropped: usize,
    residual_threshold: f64,
    iterations: usize,
    seed: u64,
}

/// Effective dimension implied by an excess-risk exponent
/// `s = -(2 + d) / (2 + 2 d)`.
fn dimension_from_rate(s: f64) -> Option<f64> {
    (s < -0.5).then(|| ((2.0 + 2.0 * s) / (-2.0 * s - 1.0)).max(0.0))
}

fn dim(cli: &Cli, args: &DimArgs) -> Result<u8> {
    let text = read_text(&args.widths)?;
    let curve = parse_curve(&text, &args.widths)?;
    let method: FitMethod = match args.method {
        Some(m) => m.into(),
        None if curve.kind == CurveKind::Krr => FitMethod::Ols,
        None => FitMethod::Ransac,
    };
    let params = RansacParams {
        iterations: args.iterations,
        residual_threshold: args.threshold,
        seed: args.seed,
    };
    let len = curve.x.len();
    let window = match args.window {
        Some(w) => w.0,
        None if curve.kind == CurveKind::Krr => Window::new(0, len - 1),
        None => Window::default_for(len),
    };
    let finite = |d: f64| d.is_finite().then_some(d);
    let (fit, dimension): (SlopeFit, Option<f64>) = match curve.kind {
        CurveKind::Widths => {
            let est = effective_dimension(&curve.y, window, method, &params)?;
            (est.fit, finite(est.dimension))
        }
        CurveKind::Cover => {
            let pairs: Vec<(f64, f64)> = curve.x.iter().copied().zip(curve.y.iter().copied()).collect();
            let est = metric_dimension(&pairs, window, method, &params)?;
            (est.fit, finite(est.dimension))
        }
        CurveKind::Spectrum => {
            let inv: Vec<f64> = curve.y.iter().map(|&w| if w > 0.0 { 1.0 / w } else { 0.0 }).collect();
            let fit = fit_loglog(&curve.x, &inv, window, method, &params)?;
            let d = (fit.slope > FLAT_SLOPE_TOL).then(|| 1.0 / fit.slope);
            (fit, d)
        }
        CurveKind::Krr => {
            let fit = fit_loglog(&curve.x, &curve.y, window, method, &params)?;
            let d = dimension_from_rate(fit.slope);
            (fit, d)
        }
    };
    let report = DimReport {
        version: VERSION,
        config: config_json(cli),
        kind: curve.kind,
        slope: fit.slope,
        intercept: fit.intercept,
        dimension,
        window: [fit.window.start, fit.window.end],
        method: fit.method.name(),
        inliers: fit.inliers(),
        dropped: fit.dropped,
        residual_threshold: fit.residual_threshold,
        iterations: fit.iterations,
        seed: fit.seed,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serialises");
    json.push('\n');
    write(&args.out, &json)?;
    Ok(EXIT_OK)
}

fn krr(args: &KrrArgs, header: &[String]) -> Result<u8> {
    let cfg = ExperimentConfig {
        d: args.d,
        sizes: args.sizes.clone(),
        trials: args.trials,
        n_test: args.ntest,
        noise_amp: args.noise,
        seed: args.seed,
        constrained: ConstrainedParams {
            iters: args.iters,
            norm_tol: args.norm_tol,
            lambda_min: args.lambda_min,
            lambda_max: args.lambda_max,
        },
    };
    let curve = excess_risk_experiment(&args.kernel, &cfg)?;
    let mut out = comment_block(header);
    if curve.rows.len() >= 2 {
        if let Ok(fit) = curve.slope() {
            let _ = writeln!(out, "# ols_slope={:?}", fit.slope);
        }
    }
    out.push_str("n,mean_excess,std_excess,trials\n");
    for r in &curve.rows {
        let _ = writeln!(out, "{},{:?},{:?},{}", r.n, r.mean_excess, r.std_excess, r.trials);
    }
    write(&args.out, &out)?;
    if let Some(path) = &args.plot_data {
        let rows = curve
            .rows
            .iter()
            .map(|r| ((r.n as f64).ln(), r.mean_excess.ln()));
        write(path, &plot_file(header, "ln(n) ln(mean_excess)", rows))?;
    }
    Ok(EXIT_OK)
}

fn verify(args: &VerifyArgs) -> Result<u8> {
    if args.list {
        for p in presets() {
            println!("{}  {} T={}", p.name, p.spec, p.steps);
        }
        return Ok(EXIT_OK);
    }
    let report = preset(&args.preset)?.run(args.seed)?;
    println!("{}", report.label);
    for c in &report.checks {
        println!("{c}");
    }
    if report.passed() {
        println!("PASS {}", args.preset);
        Ok(EXIT_OK)
    } else {
        println!("FAIL {}", args.preset);
        Ok(EXIT_FAILURE)
    }
}
