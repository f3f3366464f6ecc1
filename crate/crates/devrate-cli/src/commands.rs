//! One runner per subcommand: validate the config, run the library, write
//! artifacts. Each runner returns the paths it wrote so the caller can emit
//! progress diagnostics.

use std::path::PathBuf;

use devrate::devlab::{
    run_concentration_ratio, run_ldp_curve, run_linearized_error, run_mdp_variance,
    ExperimentConfig, ExperimentTarget,
};
use devrate::estimators::bias_probe;
use devrate::kernels::{from_spec, verify_order};
use devrate::models::build_model;
use devrate::ratefn::{
    check_zero_target_condition, eval_lambda_n, mdp_rate, regression_rate, RateValue,
};
use devrate::schedules::BandwidthSchedule;
use devrate::{Error, Result};
use serde::Serialize;

use crate::config::{
    BiasConfig, ConditionConfig, GridConfig, LambdaConfig, MdpConfig, RateConfig,
    VerifyKernelConfig,
};
use crate::output::{config_line, fmt, fmt_opt, json_body, Csv, OutDir};

/// JSON artifact shape for commands whose library report does not already
/// embed the config.
#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    command: &'a str,
    config: &'a C,
    report: &'a R,
}

fn require_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{name} must be finite")));
    }
    Ok(())
}

/// `rate`: evaluates `J` on targets `s = r(x) + offset · direction` and
/// writes `rate_curve.csv` with one row per offset.
pub fn rate(cfg: &RateConfig, out: &OutDir) -> Result<Vec<PathBuf>> {
    let ctx = cfg.context.build()?;
    let q = ctx.model().q();
    let dir = &cfg.slice.direction;
    if dir.len() != q {
        return Err(Error::Config(format!(
            "slice direction must have {q} components, got {}",
            dir.len()
        )));
    }
    require_finite("slice direction", dir)?;
    if dir.iter().all(|&v| v == 0.0) {
        return Err(Error::Config("slice direction must be nonzero".into()));
    }
    if cfg.slice.offsets.is_empty() {
        return Err(Error::Config("slice needs at least one offset".into()));
    }
    require_finite("slice offsets", &cfg.slice.offsets)?;

    let mut columns: Vec<String> = (1..=q).map(|j| format!("s{j}")).collect();
    columns.extend(["value", "status", "minimizer_t"].map(String::from));
    let mut csv = Csv::new("rate", &config_line(cfg)?, None, &columns);
    let r = ctx.r_at_x().to_vec();
    for &offset in &cfg.slice.offsets {
        let s: Vec<f64> = (0..q).map(|j| r[j] + offset * dir[j]).collect();
        let rr = regression_rate(&ctx, &s)?;
        let (value, status) = match rr.j {
            RateValue::Finite(v) => (v, "finite"),
            RateValue::Infinite => (f64::INFINITY, "infinite"),
        };
        let mut row: Vec<String> = s.iter().map(|&v| fmt(v)).collect();
        row.push(fmt(value));
        row.push(status.to_string());
        row.push(fmt_opt(rr.minimizing_t));
        csv.row(&row);
    }
    Ok(vec![out.write("rate_curve.csv", &csv.into_bytes())?])
}

/// `mdp`: evaluates the quadratic moderate-deviation rate on each target and
/// writes `mdp_curve.csv`.
pub fn mdp(cfg: &MdpConfig, out: &OutDir) -> Result<Vec<PathBuf>> {
    let ctx = cfg.context.build()?;
    let q = ctx.model().q();
    if cfg.targets.is_empty() {
        return Err(Error::Config("need at least one target".into()));
    }
    for v in &cfg.targets {
        if v.len() != q {
            return Err(Error::Config(format!(
                "targets must have {q} components, got {}",
                v.len()
            )));
        }
        require_finite("targets", v)?;
    }

    let mut columns: Vec<String> = (1..=q).map(|j| format!("v{j}")).collect();
    columns.push("value".to_string());
    let mut csv = Csv::new("mdp", &config_line(cfg)?, None, &columns);
    for v in &cfg.targets {
        let value = mdp_rate(&ctx, v)?;
        let mut row: Vec<String> = v.iter().map(|&c| fmt(c)).collect();
        row.push(fmt(value));
        csv.row(&row);
    }
    Ok(vec![out.write("mdp_curve.csv", &csv.into_bytes())?])
}

/// `lambda`: evaluates the finite-`n` cumulant and its limit at each
/// `(u, v)` for each sample size and writes `lambda_curve.csv`.
pub fn lambda(cfg: &LambdaConfig, out: &OutDir) -> Result<Vec<PathBuf>> {
    let ctx = cfg.context.build()?;
    let q = ctx.model().q();
    let sched = BandwidthSchedule::from_spec(&cfg.schedule, ctx.model().d())?;
    if cfg.ns.is_empty() || cfg.points.is_empty() {
        return Err(Error::Config(
            "need at least one sample size and one (u, v) point".into(),
        ));
    }
    for p in &cfg.points {
        if p.u.len() != q {
            return Err(Error::Config(format!(
                "u must have {q} components, got {}",
                p.u.len()
            )));
        }
        require_finite("u", &p.u)?;
        require_finite("v", &[p.v])?;
    }

    let mut columns: Vec<String> = ["n", "h"].map(String::from).to_vec();
    columns.extend((1..=q).map(|j| format!("u{j}")));
    columns.extend(["v", "lambda", "psi", "abs_diff"].map(String::from));
    let mut csv = Csv::new("lambda", &config_line(cfg)?, None, &columns);
    for &n in &cfg.ns {
        for p in &cfg.points {
            let value = eval_lambda_n(&ctx, &p.u, p.v, n, &sched)?;
            let psi = ctx.eval_psi(&p.u, p.v);
            let mut row = vec![n.to_string(), fmt(sched.hn(n as f64))];
            row.extend(p.u.iter().map(|&c| fmt(c)));
            row.push(fmt(p.v));
            row.push(fmt(value));
            row.push(fmt(psi));
            row.push(fmt((value - psi).abs()));
            csv.row(&row);
        }
    }
    Ok(vec![out.write("lambda_curve.csv", &csv.into_bytes())?])
}

/// `simulate`: runs the Monte Carlo experiment described by the config and
/// writes `report.json`, plus `curve.csv` for targets with per-`n` rows.
pub fn simulate(cfg: &ExperimentConfig, out: &OutDir) -> Result<Vec<PathBuf>> {
    let line = config_line(cfg)?;
    let seed = Some(cfg.seed);
    let mut paths = Vec::new();
    match cfg.target {
        ExperimentTarget::LdpCurve { .. } => {
            let report = run_ldp_curve(cfg)?;
            paths.push(out.write("report.json", &json_body(&report)?)?);
            let columns = ["n", "h", "p_hat", "se", "norm_log", "norm_log_se"]
                .map(String::from)
                .to_vec();
            let mut csv = Csv::new("simulate", &line, seed, &columns);
            for row in &report.rows {
                csv.row(&[
                    row.n.to_string(),
                    fmt(row.h),
                    fmt(row.p_hat),
                    fmt(row.se),
                    fmt_opt(row.norm_log),
                    fmt_opt(row.norm_log_se),
                ]);
            }
            paths.push(out.write("curve.csv", &csv.into_bytes())?);
        }
        ExperimentTarget::MdpVariance { .. } => {
            let report = run_mdp_variance(cfg)?;
            paths.push(out.write("report.json", &json_body(&report)?)?);
        }
        ExperimentTarget::ConcentrationRatio { .. } => {
            let report = run_concentration_ratio(cfg)?;
            paths.push(out.write("report.json", &json_body(&report)?)?);
            let columns = [
                "n",
                "h",
                "p_nw",
                "p_semirec",
                "se_nw",
                "se_semirec",
                "diff",
                "se_diff",
            ]
            .map(String::from)
            .to_vec();
            let mut csv = Csv::new("simulate", &line, seed, &columns);
            for row in &report.rows {
                csv.row(&[
                    row.n.to_string(),
                    fmt(row.h),
                    fmt(row.p_nw),
                    fmt(row.p_semirec),
                    fmt(row.se_nw),
                    fmt(row.se_semirec),
                    fmt(row.diff),
                    fmt(row.se_diff),
                ]);
            }
            paths.push(out.write("curve.csv", &csv.into_bytes())?);
        }
        ExperimentTarget::LinearizedError { .. } => {
            let report = run_linearized_error(cfg)?;
            paths.push(out.write("report.json", &json_body(&report)?)?);
            let columns = [
                "n",
                "h",
                "v_n",
                "median_gap",
                "q90_gap",
                "vn_mean_bias_norm",
                "zero_density",
            ]
            .map(String::from)
            .to_vec();
            let mut csv = Csv::new("simulate", &line, seed, &columns);
            for row in &report.rows {
                csv.row(&[
                    row.n.to_string(),
                    fmt(row.h),
                    fmt(row.v_n),
                    fmt_opt(row.median_gap),
                    fmt_opt(row.q90_gap),
                    fmt(row.vn_mean_bias_norm),
                    row.zero_density.to_string(),
                ]);
            }
            paths.push(out.write("curve.csv", &csv.into_bytes())?);
        }
    }
    Ok(paths)
}

/// `verify-kernel`: checks the moment conditions for the claimed order and
/// writes `kernel_report.json`. A failed verification is a result, not an
/// error: the command exits 0 with `"pass": false` in the artifact.
pub fn verify_kernel(cfg: &VerifyKernelConfig, out: &OutDir) -> Result<Vec<PathBuf>> {
    let kernel = from_spec(&cfg.kernel)?;
    let report = verify_order(&kernel, cfg.order, cfg.tol)?;
    let body = json_body(&Report {
        command: "verify-kernel",
        config: cfg,
        report: &report,
    })?;
    Ok(vec![out.write("kernel_report.json", &body)?])
}

/// Upper bound on generated condition grids; `per_axis^q` conjugate solves
/// each cost milliseconds, so this caps a run at well under a minute.
const MAX_GRID_POINTS: usize = 20_000;

/// `condition-c`: evaluates the zero-target condition over the configured
/// grid and writes `condition_report.json` with the verdict.
pub fn condition_c(cfg: &ConditionConfig, out: &OutDir) -> Result<Vec<PathBuf>> {
    let ctx = cfg.context.build()?;
    let q = ctx.model().q();
    let grid: Vec<Vec<f64>> = match &cfg.grid {
        GridConfig::Explicit { targets } => {
            for s in targets {
                if s.len() != q {
                    return Err(Error::Config(format!(
                        "grid targets must have {q} components, got {}",
                        s.len()
                    )));
                }
                require_finite("grid targets", s)?;
            }
            targets.clone()
        }
        GridConfig::Span { radius, per_axis } => {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(Error::Config(format!(
                    "grid radius must be positive and finite, got {radius}"
                )));
            }
            if *per_axis == 0 || per_axis.pow(q as u32) > MAX_GRID_POINTS {
                return Err(Error::Config(format!(
                    "per_axis must be in 1..={} for q = {q}",
                    (MAX_GRID_POINTS as f64).powf(1.0 / q as f64).floor()
                )));
            }
            span_grid(ctx.r_at_x(), *radius, *per_axis)
        }
    };
    let report = check_zero_target_condition(&ctx, &grid)?;
    let body = json_body(&Report {
        command: "condition-c",
        config: cfg,
        report: &report,
    })?;
    Ok(vec![out.write("condition_report.json", &body)?])
}

/// Tensor grid of `per_axis` points per axis on `[c_j − radius, c_j + radius]`.
fn span_grid(center: &[f64], radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let q = center.len();
    let axis: Vec<Vec<f64>> = center
        .iter()
        .map(|&c| {
            (0..per_axis)
                .map(|i| {
                    if per_axis == 1 {
                        c
                    } else {
                        c - radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut grid = Vec::with_capacity(per_axis.pow(q as u32));
    let mut idx = vec![0usize; q];
    loop {
        grid.push((0..q).map(|j| axis[j][idx[j]]).collect());
        let mut j = 0;
        loop {
            if j == q {
                return grid;
            }
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// `bias`: tabulates the smoothing bias across sample sizes and writes
/// `bias.csv` plus `bias_report.json` with the fitted log-log slopes.
pub fn bias(cfg: &BiasConfig, out: &OutDir) -> Result<Vec<PathBuf>> {
    let model = build_model(&cfg.model)?;
    let kernel = from_spec(&cfg.kernel)?;
    let sched = BandwidthSchedule::from_spec(&cfg.schedule, model.d())?;
    let probe = bias_probe(&model, &kernel, &sched, &cfg.x, &cfg.ns)?;

    let line = config_line(cfg)?;
    let columns = ["n", "h", "m_bias", "g_bias"].map(String::from).to_vec();
    let mut csv = Csv::new("bias", &line, None, &columns);
    for row in &probe.rows {
        csv.row(&[
            row.n.to_string(),
            fmt(row.h),
            fmt(row.m_bias),
            fmt(row.g_bias),
        ]);
    }
    let body = json_body(&Report {
        command: "bias",
        config: cfg,
        report: &probe,
    })?;
    Ok(vec![
        out.write("bias.csv", &csv.into_bytes())?,
        out.write("bias_report.json", &body)?,
    ])
}
