// SPDX-License-Identifier: Apache-2.0

//! Analytic data behind the closed-form figures, one CSV per panel, μ = 1.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use llr_core::analytics::{self, LinkLoad, ServiceModel};
use llr_core::curve::{analytic_f_curve, analytic_g_curve, normalize_curve};
use llr_core::{compare_strategies, Result};

use crate::CliError;

/// C_S values drawn in the LLR, PFLL and comparison figures.
pub const FIGURE_CVS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
/// `(lambda_s, C_S)` pairs of the f/g comparison figure.
pub const FIG5_PAIRS: [(f64, f64); 4] = [(0.05, 2.0), (0.1, 1.0), (0.2, 0.5), (0.3, 0.0)];

fn svc(cv: f64) -> ServiceModel {
    ServiceModel::from_rate(1.0, cv).expect("figure C_S values are valid")
}

/// `i / points` for `i = 1, 2, ...` strictly below `limit`, then `limit`.
fn lambda_grid(points: usize, limit: f64, include_limit: bool) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..points)
        .map(|i| i as f64 / points as f64)
        .take_while(|&x| x < limit)
        .collect();
    if include_limit {
        grid.push(limit);
    }
    grid
}

fn fig2(points: usize) -> Result<Vec<(&'static str, String)>> {
    let mut delay = String::from("cs,lambda_s,mean_delay_s,one_over_lambda_s,lambda_s_plus\n");
    let mut packets = String::from("cs,lambda_s,mean_packets,lambda_s_plus\n");
    for cv in FIGURE_CVS {
        let s = svc(cv);
        let limit = analytics::llr_limit(&s);
        for ls in lambda_grid(points, 1.0, false) {
            let load = LinkLoad::new(ls, 0.0)?;
            let d = analytics::mean_delay(load, &s)?;
            let n = analytics::mean_packets(load, &s)?;
            writeln!(delay, "{cv},{ls},{d},{},{limit}", 1.0 / ls).unwrap();
            writeln!(packets, "{cv},{ls},{n},{limit}").unwrap();
        }
    }
    Ok(vec![("fig2a_mean_delay.csv", delay), ("fig2b_mean_packets.csv", packets)])
}

fn fig3(points: usize) -> Result<Vec<(&'static str, String)>> {
    let mut out = String::from("cs,lambda_s,lambda_b_plus,lambda_b_star,kappa_plus,kappa_star\n");
    for cv in FIGURE_CVS {
        let s = svc(cv);
        for ls in lambda_grid(points, analytics::llr_limit(&s), true) {
            writeln!(
                out,
                "{cv},{ls},{},{},{},{}",
                analytics::max_alloc(ls, &s)?,
                analytics::pfll_alloc(ls, &s)?,
                analytics::kappa_plus(ls, &s)?,
                analytics::kappa_star(ls, &s)?
            )
            .unwrap();
        }
    }
    Ok(vec![("fig3_pfll.csv", out)])
}

fn fig4(points: usize) -> Result<Vec<(&'static str, String)>> {
    let mut delay = String::from("cs,lambda_s,delay_at_max_s,delay_at_pfll_s,delay_ratio\n");
    let mut rate = String::from("cs,lambda_s,lambda_b_plus,lambda_b_star,throughput_ratio\n");
    for cv in FIGURE_CVS {
        let s = svc(cv);
        // The PFLL allocation vanishes at the LLR limit, where the ratios are undefined.
        for ls in lambda_grid(points, analytics::llr_limit(&s), false) {
            let c = compare_strategies(ls, &s)?;
            let (bplus, bstar) = (analytics::max_alloc(ls, &s)?, analytics::pfll_alloc(ls, &s)?);
            let d_max = analytics::mean_delay(LinkLoad::new(ls, bplus)?, &s)?;
            let d_star = analytics::mean_delay(LinkLoad::new(ls, bstar)?, &s)?;
            writeln!(delay, "{cv},{ls},{d_max},{d_star},{}", c.delay_ratio).unwrap();
            writeln!(rate, "{cv},{ls},{bplus},{bstar},{}", c.throughput_ratio).unwrap();
        }
    }
    Ok(vec![("fig4a_delay_ratio.csv", delay), ("fig4b_throughput_ratio.csv", rate)])
}

fn fig5(points: usize) -> Result<Vec<(&'static str, String)>> {
    let mut curves = String::from("lambda_s,cs,lambda_b,g_hat,f_hat\n");
    let mut slopes = String::from("lambda_s,cs,lambda_b,dg,df\n");
    let mut argmax = String::from("lambda_s,cs,argmax_g_hat,argmax_f_hat,lambda_b_star\n");
    for (ls, cv) in FIG5_PAIRS {
        let s = svc(cv);
        let g = normalize_curve(&analytic_g_curve(ls, &s, points)?)?;
        let f = normalize_curve(&analytic_f_curve(ls, &s, points)?)?;
        let bplus = analytics::max_alloc(ls, &s)?;
        let d_plus = analytics::mean_delay(LinkLoad::new(ls, bplus)?, &s)?;
        for (i, &b) in g.lambda_b_grid.iter().enumerate() {
            writeln!(curves, "{ls},{cv},{b},{},{}", g.values[i], f.values[i]).unwrap();
            let load = LinkLoad::new(ls, b)?;
            let dg = analytics::gain_derivative(load, &s)?;
            let df = d_plus - analytics::mean_delay(load, &s)? - b * analytics::mean_delay_slope(load, &s)?;
            writeln!(slopes, "{ls},{cv},{b},{dg},{df}").unwrap();
        }
        writeln!(
            argmax,
            "{ls},{cv},{},{},{}",
            g.grid_argmax(),
            f.grid_argmax(),
            analytics::pfll_alloc(ls, &s)?
        )
        .unwrap();
    }
    Ok(vec![
        ("fig5a_normalized.csv", curves),
        ("fig5b_derivatives.csv", slopes),
        ("fig5_argmax.csv", argmax),
    ])
}

/// Writes the panels of `figure` into `dir` and returns their paths.
pub fn write_figure(figure: u8, points: usize, dir: &Path) -> std::result::Result<Vec<PathBuf>, CliError> {
    let panels = match figure {
        2 => fig2(points),
        3 => fig3(points),
        4 => fig4(points),
        5 => fig5(points),
        other => return Err(CliError::Usage(format!("unknown figure {other}; choose 2, 3, 4 or 5"))),
    }?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    panels
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}
