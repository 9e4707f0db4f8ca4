use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use levygreen::cubature::CubatureConfig;
use levygreen::duhamel::{comparability_report, contraction, duhamel_sum, probe_points, DuhamelConfig, SeriesState, TransferOperator};
use levygreen::geometry::{dist, Ball, Domain};
use levygreen::grid::{CellGrid, GreenGrid};
use levygreen::kernels::{kato_modulus_scan, kato_norm_stable_constant, DriftField, ExactBallGreen, GreenKernel, SharpGreen};
use levygreen::simulate::{estimate_green_mc, exit_histogram, exit_moment, Engine, PolarPartition};
use levygreen::spectral::{
    check_scaling, logspace, sandwich_c1, sandwich_check, write_scaling_csv, Direction, ProcessSpec,
};
use levygreen::stats::chi_square;
use serde::Serialize;

use crate::{Check, CliError, CliResult, ExperimentConfig, Kind, Report, RunOptions};

fn need<T: Clone>(v: &Option<T>, name: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| CliError::Usage(format!("knob {name} is unset")))
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name)).map_err(levygreen::Error::from)?))
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    for r in rows {
        w.serialize(r).map_err(levygreen::Error::from)?;
    }
    w.flush().map_err(levygreen::Error::from)?;
    Ok(())
}

fn write_grid(dir: &Path, name: &str, g: &GreenGrid, spec: &ProcessSpec) -> CliResult<()> {
    g.write_csv(create(dir, &format!("{name}.csv"))?)?;
    let header = g.header(Some(serde_json::to_value(spec).map_err(levygreen::Error::from)?));
    let text = serde_json::to_string_pretty(&header).map_err(levygreen::Error::from)?;
    std::fs::write(dir.join(format!("{name}.json")), text + "\n").map_err(levygreen::Error::from)?;
    Ok(())
}

struct Setup {
    spec: ProcessSpec,
    domain: Domain,
    drift: DriftField,
}

impl Setup {
    fn exact_kernel(&self) -> CliResult<ExactBallGreen> {
        Ok(ExactBallGreen::for_spec(&self.spec, &self.domain)?)
    }
}

pub fn run_kind(cfg: &ExperimentConfig, dir: &Path, opts: RunOptions) -> CliResult<Report> {
    let s = Setup {
        spec: need(&cfg.process, "process")?,
        domain: need(&cfg.domain, "domain")?,
        drift: need(&cfg.drift, "drift")?,
    };
    let seed = need(&cfg.seed, "seed")?;
    match need(&cfg.kind, "kind")? {
        Kind::ScalingAudit => scaling_audit(cfg, &s, dir),
        Kind::GreenOracle => green_oracle(cfg, &s, dir, seed, opts),
        Kind::McExit => mc_exit(cfg, &s, dir, seed, opts),
        Kind::DuhamelCompare => duhamel_compare(cfg, &s, dir, seed, opts),
        Kind::KatoScan => kato_scan(cfg, &s, dir),
        Kind::SmallBallWindow => small_ball_window(cfg, &s, dir),
    }
}

fn scaling_audit(cfg: &ExperimentConfig, s: &Setup, dir: &Path) -> CliResult<Report> {
    let mut rep = Report::default();
    let grid = need(&cfg.knobs.r_grid, "r_grid")?;
    let sw = sandwich_check(&s.spec, &grid)?;
    write_rows(dir, "sandwich.csv", &sw.rows)?;
    rep.file("sandwich.csv", "spectral::sandwich_check");
    rep.metric("sandwich_min_ratio", sw.min_ratio, "spectral::sandwich_check");
    rep.metric("sandwich_max_ratio", sw.max_ratio, "spectral::sandwich_check");
    rep.checks.push(Check::hard("sandwich", sw.passed, sw.violations.len(), format!("0.5 <= h/psi <= {}", sw.c1)));

    let c1 = sandwich_c1(s.spec.dim());
    let (a, c) = s.spec.lower_scaling_global();
    let lower = check_scaling(
        |r| s.spec.v(r),
        Direction::Lower,
        a / 2.0,
        0.0,
        (c / (2.0 * c1)).sqrt(),
        &logspace(1.0, 1e3, 40),
        &logspace(1e-3, 1e3, 40),
    )?;
    let (a1, cl1) = s.spec.lower_scaling_at_infinity();
    let short = check_scaling(
        |r| s.spec.v(r),
        Direction::ShortRangeUpper,
        a1 / 2.0,
        0.0,
        (2.0 * c1 / cl1).sqrt(),
        &logspace(1e-3, 0.99, 30),
        &logspace(1e-3, 0.99, 30),
    )?;
    write_scaling_csv(lower.rows(), create(dir, "v_lower.csv")?)?;
    write_scaling_csv(short.rows(), create(dir, "v_short_range.csv")?)?;
    rep.file("v_lower.csv", "spectral::check_scaling (lower, global)");
    rep.file("v_short_range.csv", "spectral::check_scaling (short-range upper)");
    rep.checks.push(Check::hard("v_lower_scaling", lower.is_witness(), a / 2.0, (c / (2.0 * c1)).sqrt()));
    rep.checks.push(Check::hard("v_short_range_upper", short.is_witness(), a1 / 2.0, (2.0 * c1 / cl1).sqrt()));
    Ok(rep)
}

#[derive(Serialize)]
struct GreenRow {
    source: usize,
    cell: usize,
    x: f64,
    y: f64,
    delta: f64,
    mc: f64,
    sigma: f64,
    visits: u64,
    exact: f64,
    rel_err: f64,
    used: bool,
}

fn green_oracle(cfg: &ExperimentConfig, s: &Setup, dir: &Path, seed: u64, opts: RunOptions) -> CliResult<Report> {
    let k = &cfg.knobs;
    let (h, band, n, dt) = (need(&k.h, "h")?, need(&k.band, "band")?, need(&k.n, "n")?, need(&k.dt, "dt")?);
    let sources = need(&k.sources, "sources")?;
    let (min_delta, min_visits, threshold) = (need(&k.min_delta, "min_delta")?, need(&k.min_visits, "min_visits")?, need(&k.threshold, "threshold")?);
    let kernel = s.exact_kernel()?;
    let cells = CellGrid::new(&s.domain, h)?;
    if !s.drift.is_zero() {
        return Err(CliError::Usage("green-oracle compares against the drift-free kernel; set a zero drift".into()));
    }
    let mc = estimate_green_mc(&s.spec, &s.domain, None, &sources, cells.clone(), band, n, Engine::euler(dt), seed, opts.shards)?;
    let exact = GreenGrid::from_kernel(
        &s.domain,
        cells.clone(),
        sources.clone(),
        band,
        |x, y| kernel.green(&x, &y),
        CubatureConfig { rel_tol: 1e-8, ..CubatureConfig::for_alpha(kernel.alpha()) },
    )?;
    let counts = mc.counts.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let (mut worst, mut used) = (0.0_f64, 0usize);
    for si in 0..sources.len() {
        for (c, cell) in cells.cells().iter().enumerate() {
            let e = exact.values[si][c];
            let rel = (mc.values[si][c] - e).abs() / e;
            let ok = cell.delta >= min_delta && counts[si][c] >= min_visits;
            if ok {
                worst = worst.max(rel);
                used += 1;
            }
            rows.push(GreenRow {
                source: si,
                cell: c,
                x: cell.center[0],
                y: cell.center[1],
                delta: cell.delta,
                mc: mc.values[si][c],
                sigma: mc.sigma[si][c],
                visits: counts[si][c],
                exact: e,
                rel_err: rel,
                used: ok,
            });
        }
    }
    write_rows(dir, "green.csv", &rows)?;
    let mut rep = Report::default();
    rep.file("green.csv", "simulate::estimate_green_mc against grid::GreenGrid::from_kernel(kernels::ExactBallGreen)");
    rep.metric("max_rel_err", worst, "simulate::estimate_green_mc vs kernels::ExactBallGreen cell averages");
    rep.metric("cells_compared", used, "grid::CellGrid");
    rep.checks.push(Check::hard("max_rel_err", used > 0 && worst <= threshold, worst, threshold));

    // the sharp two-sided estimate on lattice pairs, for reference
    let sharp = SharpGreen::new(&s.spec, &s.domain)?;
    let pts = s.domain.interior_grid(h, band)?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for x in &pts {
        for y in &pts {
            if dist(x, y) >= band {
                let r = kernel.green(x, y) / sharp.green(x, y);
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    let envelope = hi.max(1.0 / lo);
    rep.metric("sharp_envelope", envelope, "kernels::ExactBallGreen / kernels::SharpGreen on interior lattice pairs");
    rep.checks.push(Check::soft("sharp_envelope_finite", envelope.is_finite(), envelope, "finite"));
    Ok(rep)
}

#[derive(Serialize)]
struct MomentRow {
    x0: String,
    n: u64,
    mean: f64,
    std_err: f64,
    oracle: Option<f64>,
    rel_err: Option<f64>,
}

#[derive(Serialize)]
struct HistRow {
    set: usize,
    rho0: f64,
    rho1: f64,
    theta0: f64,
    theta1: f64,
    count: u64,
    expected: f64,
}

fn mc_exit(cfg: &ExperimentConfig, s: &Setup, dir: &Path, seed: u64, opts: RunOptions) -> CliResult<Report> {
    let k = &cfg.knobs;
    let (n, x0, threshold) = (need(&k.n, "n")?, need(&k.x0, "x0")?, need(&k.threshold, "threshold")?);
    let engine = match need(&k.engine, "engine")?.as_str() {
        "euler" => Engine::euler(need(&k.dt, "dt")?),
        _ => Engine::Wos { eps_b: k.eps_b, max_steps: 100_000_000 },
    };
    let drift = (!s.drift.is_zero()).then_some(&s.drift);
    let est = exit_moment(&s.spec, &s.domain, drift, &x0, n, engine, seed, opts.shards)?;
    let oracle = match (s.spec.stable_alpha(), s.domain.as_ball(), drift) {
        (Some(a), Some(b), None) => Some(levygreen::kernels::stable_exit_moment(a, s.spec.dim(), b, &x0)),
        _ => None,
    };
    let rel = oracle.map(|o| (est.mean() - o).abs() / o);
    let mut rep = Report::default();
    write_rows(
        dir,
        "moments.csv",
        &[MomentRow { x0: format!("{x0:?}"), n, mean: est.mean(), std_err: est.std_err(), oracle, rel_err: rel }],
    )?;
    rep.file("moments.csv", "simulate::exit_moment");
    rep.metric("mean_exit_time", est.mean(), "simulate::exit_moment");
    rep.metric("std_err", est.std_err(), "stats::Estimator");
    if let (Some(o), Some(r)) = (oracle, rel) {
        rep.metric("oracle", o, "kernels::stable_exit_moment");
        rep.metric("rel_err", r, "simulate::exit_moment vs kernels::stable_exit_moment");
        rep.checks.push(Check::hard("exit_moment_rel_err", r <= threshold, r, threshold));
    }

    if let (Some(alpha), Some(ball), 2) = (s.spec.stable_alpha(), s.domain.as_ball(), s.spec.dim()) {
        let wos = Engine::Wos { eps_b: Some(need(&k.eps_b, "eps_b")?), max_steps: 100_000_000 };
        let mut radii: Vec<f64> = need(&k.partition, "partition")?.iter().map(|f| f * ball.radius).collect();
        radii.push(f64::INFINITY);
        let part = PolarPartition { center: [ball.center[0], ball.center[1]], radii, sectors: need(&k.sectors, "sectors")? };
        let widths = need(&k.shell_widths, "shell_widths")?;
        let hist = exit_histogram(&s.spec, &s.domain, None, &x0, &part, &widths, n, wos, seed)?;
        let probs = part.stable_probabilities(alpha, ball, &x0)?;
        let assigned: u64 = hist.counts.iter().sum();
        let rows: Vec<HistRow> = (0..part.len())
            .map(|i| {
                let ((r0, r1), (t0, t1)) = part.bounds(i);
                HistRow { set: i, rho0: r0, rho1: r1, theta0: t0, theta1: t1, count: hist.counts[i], expected: probs[i] * assigned as f64 }
            })
            .collect();
        write_rows(dir, "exit_histogram.csv", &rows)?;
        write_rows(dir, "shell_mass.csv", &hist.shell_mass)?;
        rep.file("exit_histogram.csv", "simulate::exit_histogram (walk-on-spheres) with kernels::ball_exit_sector_probability");
        rep.file("shell_mass.csv", "simulate::exit_histogram");
        let chi = chi_square(&hist.counts, &probs)?;
        let level = need(&k.level, "level")?;
        rep.metric("chi2", chi.statistic, "stats::chi_square");
        rep.metric("chi2_p", chi.p_value, "stats::chi_square");
        rep.metric("forced", hist.forced, "simulate::exit_histogram");
        rep.checks.push(Check::hard("exit_law_chi2", chi.passes(level), chi.p_value, level));
        let mass: Vec<f64> = hist.shell_mass.iter().map(|m| m.1).collect();
        let mut order: Vec<(f64, f64)> = hist.shell_mass.clone();
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        let monotone = order.windows(2).all(|w| w[1].1 <= w[0].1);
        rep.checks.push(Check::hard("shell_mass_monotone", monotone, mass, "non-increasing as the width shrinks"));
    }
    Ok(rep)
}

#[derive(Serialize)]
struct TermRow {
    n: usize,
    max_ratio: f64,
}

#[derive(Serialize)]
struct AgreeRow {
    source: usize,
    cell: usize,
    mc: f64,
    mc_sigma: f64,
    series: f64,
    series_err: f64,
    within: bool,
}

fn duhamel_compare(cfg: &ExperimentConfig, s: &Setup, dir: &Path, seed: u64, opts: RunOptions) -> CliResult<Report> {
    let k = &cfg.knobs;
    let (h, band, n_max, tol, n) = (need(&k.h, "h")?, need(&k.band, "band")?, need(&k.n_max, "n_max")?, need(&k.tol, "tol")?, need(&k.n, "n")?);
    let sources = need(&k.sources, "sources")?;
    let kernel = s.exact_kernel()?;
    let cells = CellGrid::new(&s.domain, h)?;
    let op = TransferOperator::build(&kernel, &s.drift, &cells, &sources, band, DuhamelConfig::for_alpha(kernel.alpha()))?;
    let mut st = SeriesState::new(op, None);
    let sum = duhamel_sum(&mut st, n_max, tol)?;
    write_grid(dir, "green_base", st.base(), &s.spec)?;
    write_grid(dir, "green_series", &sum.g_tilde, &s.spec)?;
    let terms: Vec<TermRow> = (0..=sum.terms).map(|i| TermRow { n: i, max_ratio: st.term_ratio(i) }).collect();
    write_rows(dir, "terms.csv", &terms)?;
    let cmp = comparability_report(st.base(), &sum.g_tilde)?;
    write_rows(dir, "ratio_histogram.csv", &cmp.histogram)?;
    let mut rep = Report::default();
    rep.file("green_base.csv", "duhamel::TransferOperator::build (cell averages of the exact kernel)");
    rep.file("green_series.csv", "duhamel::duhamel_sum");
    rep.file("terms.csv", "duhamel::SeriesState::term_ratio");
    rep.file("ratio_histogram.csv", "duhamel::comparability_report");
    rep.metric("terms", sum.terms, "duhamel::duhamel_sum");
    rep.metric("observed_ratio", sum.observed_ratio, "duhamel::duhamel_sum");
    rep.metric("min_ratio", cmp.min_ratio, "duhamel::comparability_report");
    rep.metric("max_ratio", cmp.max_ratio, "duhamel::comparability_report");
    rep.metric("envelope", cmp.envelope, "duhamel::comparability_report");
    rep.checks.push(Check::hard("envelope_finite", cmp.envelope.is_finite(), cmp.envelope, "finite"));

    if n > 0 {
        let dt = need(&k.dt, "dt")?;
        let threshold = need(&k.threshold, "threshold")?;
        let mc = estimate_green_mc(&s.spec, &s.domain, Some(&s.drift), &sources, cells.clone(), band, n, Engine::euler(dt), seed, opts.shards)?;
        let mut rows = Vec::new();
        for si in 0..sources.len() {
            for c in 0..cells.len() {
                let m = mc.values[si][c];
                if !mc.off_band(si, c) || !(m > 0.0) || mc.sigma[si][c] > 0.25 * m {
                    continue;
                }
                let err = sum.remainder[si][c] + sum.g_tilde.sigma[si][c].abs();
                let series = sum.g_tilde.values[si][c];
                rows.push(AgreeRow {
                    source: si,
                    cell: c,
                    mc: m,
                    mc_sigma: mc.sigma[si][c],
                    series,
                    series_err: err,
                    within: (m - series).abs() <= 2.0 * mc.sigma[si][c] + err,
                });
            }
        }
        write_rows(dir, "mc_agreement.csv", &rows)?;
        rep.file("mc_agreement.csv", "simulate::estimate_green_mc (drifted) vs duhamel::duhamel_sum");
        let frac = rows.iter().filter(|r| r.within).count() as f64 / rows.len().max(1) as f64;
        rep.metric("mc_agreement", frac, "simulate::estimate_green_mc vs duhamel::duhamel_sum");
        rep.checks.push(Check::hard("mc_agreement", !rows.is_empty() && frac >= threshold, frac, threshold));
    }
    Ok(rep)
}

#[derive(Serialize)]
struct KatoOut {
    r: f64,
    k: f64,
    error: f64,
    closed_form: Option<f64>,
}

fn kato_scan(cfg: &ExperimentConfig, s: &Setup, dir: &Path) -> CliResult<Report> {
    let k = &cfg.knobs;
    let (radii, points, tol, threshold) = (need(&k.radii, "radii")?, need(&k.points, "points")?, need(&k.tol, "tol")?, need(&k.threshold, "threshold")?);
    let scan = kato_modulus_scan(&s.spec, &s.drift, &radii, &points, tol)?;
    let closed = |r: f64| match (s.spec.stable_alpha(), s.drift.constant_magnitude()) {
        (Some(a), Some(m)) => Some(kato_norm_stable_constant(a, s.spec.dim(), m, r)),
        _ => None,
    };
    let rows: Vec<KatoOut> = scan.rows.iter().map(|r| KatoOut { r: r.r, k: r.k, error: r.error, closed_form: closed(r.r) }).collect();
    write_rows(dir, "kato.csv", &rows)?;
    let mut rep = Report::default();
    rep.file("kato.csv", "kernels::kato_modulus_scan");
    rep.metric("k_smallest_radius", scan.rows.last().map(|r| r.k), "kernels::kato_norm");
    rep.checks.push(Check::hard("monotone", scan.monotone, scan.monotone, "non-increasing as r decreases"));
    rep.checks.push(Check::hard("vanishing", scan.certified, scan.rows.last().map(|r| r.k), tol));
    let dev = rows
        .iter()
        .filter_map(|r| r.closed_form.map(|c| (r.k - c).abs() / c))
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    if let Some(d) = dev {
        rep.metric("closed_form_rel_dev", d, "kernels::kato_norm vs kernels::kato_norm_stable_constant");
        rep.checks.push(Check::hard("closed_form", d <= threshold, d, threshold));
    }
    Ok(rep)
}

#[derive(Serialize)]
struct WindowOut {
    r: f64,
    c0: f64,
    kappa_max: f64,
    kappa_hat_max: f64,
    q: f64,
    min_ratio: f64,
    max_ratio: f64,
    in_window: bool,
    terms: String,
}

fn small_ball_window(cfg: &ExperimentConfig, s: &Setup, dir: &Path) -> CliResult<Report> {
    let k = &cfg.knobs;
    let (radii, per, n_max) = (need(&k.radii, "radii")?, need(&k.cells_per_radius, "cells_per_radius")?, need(&k.n_max, "n_max")?);
    let alpha = s
        .spec
        .stable_alpha()
        .filter(|_| s.spec.dim() == 2)
        .ok_or_else(|| levygreen::Error::Unsupported("the window scan needs a planar stable process".into()))?;
    let mut rows = Vec::new();
    let mut decay_ok = true;
    for &r in &radii {
        let ball = Ball::new(vec![0.0, 0.0], r);
        let dom = Domain::union(vec![ball.clone()])?;
        let kernel = ExactBallGreen::new(alpha, 2, &ball)?;
        let fr: Vec<f64> = (1..=13).map(|i| 1.0 - 0.75_f64.powi(i)).collect();
        let kpts = probe_points(&dom, &[0.3, 0.6, 0.85, 0.95], 8);
        let q = contraction(&kernel, &s.drift, &probe_points(&dom, &fr, 24), &kpts, CubatureConfig { rel_tol: 1e-4, ..CubatureConfig::for_alpha(alpha) })?;
        let h = r / per as f64;
        let cells = CellGrid::new(&dom, h)?;
        let sources = [[0.0, 0.0], [0.4 * r, 0.2 * r], [-0.7 * r, 0.0]];
        let op = TransferOperator::build(&kernel, &s.drift, &cells, &sources, h, DuhamelConfig::for_alpha(alpha))?;
        let mut st = SeriesState::new(op, Some(q.q));
        let sum = duhamel_sum(&mut st, n_max, 0.0)?;
        let cmp = comparability_report(st.base(), &sum.g_tilde)?;
        let ratios: Vec<f64> = (1..=sum.terms).map(|n| st.term_ratio(n)).collect();
        if q.q < 0.25 {
            decay_ok &= ratios.iter().enumerate().all(|(i, t)| *t <= 1.1 * q.q.powi(i as i32 + 1));
        }
        rows.push(WindowOut {
            r,
            c0: q.c0,
            kappa_max: q.kappa_max,
            kappa_hat_max: q.kappa_hat_max,
            q: q.q,
            min_ratio: cmp.min_ratio,
            max_ratio: cmp.max_ratio,
            in_window: cmp.min_ratio >= 2.0 / 3.0 - 0.05 && cmp.max_ratio <= 4.0 / 3.0 + 0.05,
            terms: ratios.iter().map(|t| format!("{t:.6e}")).collect::<Vec<_>>().join(" "),
        });
    }
    write_rows(dir, "window.csv", &rows)?;
    let mut rep = Report::default();
    rep.file("window.csv", "duhamel::contraction, duhamel::duhamel_sum, duhamel::comparability_report");
    let regime: Vec<&WindowOut> = rows.iter().filter(|w| w.q < 0.25).collect();
    rep.metric("q_by_radius", rows.iter().map(|w| (w.r, w.q)).collect::<Vec<_>>(), "duhamel::contraction");
    rep.checks.push(Check::hard("q_below_quarter_reached", !regime.is_empty(), rows.last().map(|w| w.q), 0.25));
    rep.checks.push(Check::hard("window_in_regime", regime.iter().all(|w| w.in_window), regime.len(), "[2/3 - 0.05, 4/3 + 0.05]"));
    rep.checks.push(Check::hard("term_decay_in_regime", decay_ok, regime.len(), "max |G_n|/G <= 1.1 q^n"));
    Ok(rep)
}
