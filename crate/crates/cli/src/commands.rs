use std::path::Path;

use gmt_aniso::blowup::{flatness_functional, fr_distance, rescale};
use gmt_aniso::classify::{regular_singular_partition, Verdict};
use gmt_aniso::density::{default_t_grid, density_profile, doubling_defect};
use gmt_aniso::flatness::{flatness_profile, SearchOptions};
use gmt_aniso::linalg::{dist, norm};
use gmt_aniso::measure::DiscreteMeasure;
use gmt_aniso::metric_field::MetricField;
use gmt_aniso::moments::{moment_residuals, q_min_eigenvalue, tilde_transform};
use gmt_aniso::synth::{sample, SurfaceSpec};
use gmt_aniso::verify::{run_suite, Suite};
use gmt_aniso::GmtError;
use serde_json::{json, Value};

use crate::config::{self, parse_scales};
use crate::report::{num, to_value, Report, Table};
use crate::{Analysis, CliError, Command};

/// Runs one command; `Ok(false)` means the reports were written but a
/// verification suite was violated.
pub fn run(command: Command, verbose: bool) -> Result<bool, CliError> {
    let log = |msg: &str| {
        if verbose {
            eprintln!("gmt-aniso: {msg}");
        }
    };
    match command {
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed, &log),
        Command::Density(a) => emit(density(&a, &log)?, &a.out, &log),
        Command::Flatness(a) => emit(flatness(&a, &log)?, &a.out, &log),
        Command::Moments(a) => emit(moments(&a, &log)?, &a.out, &log),
        Command::Blowup(a) => emit(blowup(&a, &log)?, &a.out, &log),
        Command::Classify {
            common,
            threshold,
            points,
        } => {
            let rep = classify(&common, threshold, points, &log)?;
            emit(rep, &common.out, &log)
        }
        Command::Verify { suite, seed, out } => verify(&suite, seed, &out, &log),
    }
}

fn emit(rep: Report, dir: &Path, log: &dyn Fn(&str)) -> Result<bool, CliError> {
    rep.write(dir)?;
    log(&format!("wrote {}/{}.json", dir.display(), rep.command));
    Ok(true)
}

fn synth(
    spec_path: &Path,
    out: &Path,
    seed: Option<u64>,
    log: &dyn Fn(&str),
) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", spec_path.display())))?;
    let mut spec: SurfaceSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let mu = sample(&spec).map_err(|e| match e {
        GmtError::InvalidInput(m) => CliError::Usage(format!("{}: {m}", spec_path.display())),
        other => other.into(),
    })?;
    mu.save(out).map_err(CliError::from)?;
    log(&format!(
        "{} atoms in R^{}, total mass {:.6}, written to {}",
        mu.len(),
        mu.dim(),
        mu.total_mass(),
        out.display()
    ));
    Ok(true)
}

/// Inputs common to the single-centre analyses.
struct Prepared {
    mu: DiscreteMeasure,
    field: Option<MetricField>,
    scales: Vec<f64>,
    center: Vec<f64>,
    n: usize,
    config: Value,
}

fn prepare(a: &Analysis, default_scales: &str, log: &dyn Fn(&str)) -> Result<Prepared, CliError> {
    let scales_arg = a.scales.as_deref().unwrap_or(default_scales);
    let scales = parse_scales(scales_arg)?;
    let (mu, input_sha256) = config::load_measure(&a.input)?;
    let d = mu.dim();
    let (field, field_spec) = config::load_field(a.field.as_deref(), d)?;
    let requested = config::center(a.center.as_deref(), d)?;
    let (idx, _) = mu
        .nearest(&requested)
        .ok_or_else(|| CliError::Usage("measure has no atoms".into()))?;
    let center = mu.point(idx).to_vec();
    let n = config::plane_dim(a.dim, d)?;
    log(&format!("{} atoms in R^{d}, scales {scales:?}", mu.len()));
    let config = json!({
        "input_sha256": input_sha256,
        "field": field_spec,
        "scales": scales_arg,
        "center": requested,
        "dim": n,
        "seed": a.seed,
    });
    Ok(Prepared {
        mu,
        field,
        scales,
        center,
        n,
        config,
    })
}

fn density(a: &Analysis, log: &dyn Fn(&str)) -> Result<Report, CliError> {
    let p = prepare(a, "0.05:0.4:1", log)?;
    let profile = density_profile(&p.mu, p.field.as_ref(), &p.center, &p.scales, p.n)?;
    let t_grid = default_t_grid();
    let mut table = Table::new(&["scale", "ratio", "doubling_defect"]);
    let mut doubling = Vec::new();
    for (&r, &ratio) in profile.scales.iter().zip(&profile.ratios) {
        let dd = doubling_defect(&p.mu, p.field.as_ref(), &p.center, r, &t_grid, p.n)?;
        table.push(vec![num(r), num(ratio), num(dd.sup_defect)]);
        doubling.push(dd.sup_defect);
    }
    let sup = profile
        .ratios
        .iter()
        .map(|q| (q - 1.0).abs())
        .fold(0.0, f64::max);
    let mut result = to_value(&profile);
    result["sup_abs_deviation"] = json!(sup);
    result["doubling_sup_defects"] = json!(doubling);
    Ok(Report {
        command: "density",
        config: p.config,
        result,
        table: Some(table),
    })
}

fn search_options(n: usize, seed: Option<u64>) -> SearchOptions {
    let base = SearchOptions::default();
    SearchOptions {
        n: Some(n),
        seed: seed.unwrap_or(base.seed),
        ..base
    }
}

fn flatness(a: &Analysis, log: &dyn Fn(&str)) -> Result<Report, CliError> {
    let p = prepare(a, "0.1:0.4:1", log)?;
    let profile = flatness_profile(
        &p.mu,
        p.field.as_ref(),
        &p.center,
        &p.scales,
        &search_options(p.n, a.seed),
    )?;
    let mut table = Table::new(&["scale", "beta", "bbeta", "bbeta_aniso", "beta2"]);
    for k in 0..profile.scales.len() {
        table.push(
            [
                profile.scales[k],
                profile.beta[k],
                profile.bbeta[k],
                profile.bbeta_aniso[k],
                profile.beta2[k],
            ]
            .map(num)
            .to_vec(),
        );
    }
    Ok(Report {
        command: "flatness",
        config: p.config,
        result: to_value(&profile),
        table: Some(table),
    })
}

fn moments(a: &Analysis, log: &dyn Fn(&str)) -> Result<Report, CliError> {
    let p = prepare(a, "0.1:0.4:1", log)?;
    let field = p
        .field
        .clone()
        .unwrap_or_else(|| MetricField::identity(p.mu.dim()));
    let frame = tilde_transform(&p.mu, &field, &p.center)?;
    let exponent = field.holder_exponent();
    let mut table = Table::new(&[
        "scale",
        "mass",
        "b_norm",
        "trQ",
        "q_min_eigenvalue",
        "max_residual",
        "fitted_constant",
        "test_points",
    ]);
    let mut rows = Vec::new();
    for &r in &p.scales {
        let t = moment_residuals(&frame, r, p.n, None, exponent, exponent)?;
        let qmin = q_min_eigenvalue(&t.moments);
        table.push(vec![
            num(r),
            num(t.moments.mass),
            num(norm(&t.moments.b)),
            num(t.moments.tr_q),
            num(qmin),
            num(t.max_lhs()),
            num(t.fitted_constant),
            t.rows.len().to_string(),
        ]);
        rows.push(json!({
            "moments": to_value(&t.moments),
            "q_min_eigenvalue": qmin,
            "max_residual": t.max_lhs(),
            "fitted_constant": t.fitted_constant,
            "trace_defect": t.trace_defect,
            "trace_ratio": t.trace_ratio,
            "test_points": t.rows.len(),
        }));
    }
    Ok(Report {
        command: "moments",
        config: p.config,
        result: json!({ "x0": frame.x0, "y0": frame.y0, "holder_exponent": exponent, "scales": rows }),
        table: Some(table),
    })
}

fn blowup(a: &Analysis, log: &dyn Fn(&str)) -> Result<Report, CliError> {
    let p = prepare(a, "0.1:0.4:1", log)?;
    let c = p.center.clone();
    let blown = p
        .scales
        .iter()
        .map(|&r| rescale(&p.mu, p.field.as_ref(), &c, r))
        .collect::<Result<Vec<_>, GmtError>>()?;
    let mut table = Table::new(&["scale", "normalizer", "functional", "f1_to_next"]);
    let mut rows = Vec::new();
    for (k, b) in blown.iter().enumerate() {
        let f = flatness_functional(&b.measure, p.n)?;
        let next = match blown.get(k + 1) {
            Some(nb) => Some(fr_distance(&b.measure, &nb.measure, 1.0)?),
            None => None,
        };
        log(&format!("scale {}: F = {:.4}", b.radius, f.value));
        table.push(vec![
            num(b.radius),
            num(b.normalizer),
            num(f.value),
            next.as_ref().map_or(String::new(), |x| num(x.value)),
        ]);
        rows.push(json!({
            "scale": b.radius,
            "anisotropic": b.anisotropic,
            "normalizer": b.normalizer,
            "atoms": b.measure.len(),
            "functional": to_value(&f),
            "f1_to_next": next.map(|x| to_value(&x)),
        }));
    }
    Ok(Report {
        command: "blowup",
        config: p.config,
        result: json!({ "center": c, "scales": rows }),
        table: Some(table),
    })
}

/// The centre atom plus `points` atoms spread evenly (by index) over the
/// annulus `2.5·min_scale ≤ |p − centre| ≤ ½·radius_about(centre)`, where
/// every ball of the ladder stays inside the data.
fn classify_centres(
    mu: &DiscreteMeasure,
    center: &[f64],
    scales: &[f64],
    points: usize,
) -> Vec<usize> {
    let (c, _) = mu.nearest(center).expect("measure is non-empty");
    let min_scale = scales.iter().copied().fold(f64::INFINITY, f64::min);
    let (lo, hi) = (2.5 * min_scale, 0.5 * mu.radius_about(center));
    let ring: Vec<usize> = (0..mu.len())
        .filter(|&i| {
            let t = dist(mu.point(i), center);
            t >= lo && t <= hi
        })
        .collect();
    let mut out = vec![c];
    if points > 0 && !ring.is_empty() {
        let step = ring.len() as f64 / points.min(ring.len()) as f64;
        out.extend((0..points.min(ring.len())).map(|k| ring[(k as f64 * step) as usize]));
    }
    out
}

fn classify(
    a: &Analysis,
    threshold: f64,
    points: usize,
    log: &dyn Fn(&str),
) -> Result<Report, CliError> {
    if !(threshold > 0.0 && threshold < std::f64::consts::FRAC_1_SQRT_2) {
        return Err(CliError::Usage(format!(
            "--threshold must lie in (0, 1/√2), got {threshold}"
        )));
    }
    let mut p = prepare(a, "0.1:0.4:1", log)?;
    p.config["threshold"] = json!(threshold);
    p.config["points"] = json!(points);
    let centres = classify_centres(&p.mu, &p.center, &p.scales, points);
    log(&format!("classifying {} atoms", centres.len()));
    let part = regular_singular_partition(&p.mu, p.field.as_ref(), threshold, &p.scales, &centres)?;
    let count = |v: Verdict| part.iter().filter(|q| q.verdict == v).count();
    let d = p.mu.dim();
    let mut header: Vec<String> = vec!["index".into()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.push("verdict".into());
    header.extend(p.scales.iter().map(|r| format!("bbeta@{}", num(*r))));
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for q in &part {
        let mut row = vec![q.index.to_string()];
        row.extend(q.point.iter().map(|v| num(*v)));
        row.push(
            to_value(&q.verdict)
                .as_str()
                .unwrap_or_default()
                .to_string(),
        );
        row.extend(q.bbeta_values.iter().map(|v| num(*v)));
        table.push(row);
    }
    Ok(Report {
        command: "classify",
        config: p.config,
        result: json!({
            "regular": count(Verdict::Regular),
            "singular": count(Verdict::Singular),
            "inconclusive": count(Verdict::Inconclusive),
            "points": to_value(&part),
        }),
        table: Some(table),
    })
}

fn verify(list: &str, seed: u64, out: &Path, log: &dyn Fn(&str)) -> Result<bool, CliError> {
    let suites = Suite::parse_list(list).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut reports = Vec::new();
    let mut table = Table::new(&["suite", "check", "value", "bound", "passed"]);
    for s in suites {
        log(&format!("suite {}", s.name()));
        let rep = run_suite(s, seed)?;
        for c in &rep.checks {
            table.push(vec![
                s.name().into(),
                c.name.clone(),
                num(c.value),
                num(c.bound),
                c.passed.to_string(),
            ]);
        }
        reports.push(rep);
    }
    let passed = reports.iter().all(|r| r.passed);
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.suite.name())
        .collect();
    let rep = Report {
        command: "verify",
        config: json!({ "suites": list, "seed": seed }),
        result: json!({ "passed": passed, "suites": to_value(&reports) }),
        table: Some(table),
    };
    emit(rep, out, log)?;
    if !passed {
        eprintln!(
            "{}",
            json!({
                "tool": "gmt-aniso",
                "version": crate::report::VERSION,
                "error": { "kind": "verification_failed", "message": format!("violated suites: {}", failed.join(", ")) },
                "exit_code": 1,
            })
        );
    }
    Ok(passed)
}
