//! Command line driver: regime classification over parameter grids,
//! certificate runs, fixed-point reports, Monte Carlo sampling and
//! figure-data emission.
//!
//! Exit codes: 0 success, 2 invalid parameters, 3 internal inconsistency.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wrtree::config::parse_config;
use wrtree::dynamics::make_kernel;
use wrtree::fields::{
    discontinuity_certificate, fixed_points_inner, fixed_points_outer, ht_of, inner_map,
    BoundaryFieldState,
};
use wrtree::model::ModelParams;
use wrtree::percolation::{self, mc_cluster_stats};
use wrtree::regime::{self, ClassifyOptions, GridSpec};
use wrtree::tree::{read_configuration, Spin, SpinConfiguration, TreeTruncation};
use wrtree::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wrtree",
    about = "Soft-core Widom-Rowlinson model on Cayley trees: boundary laws, spin-flip \
             dynamics, boundary-field certificates and regime classification",
    version
)]
struct Cli {
    /// Key-value parameter file (`beta=...`, `lambda=...`, `d=...`); command
    /// line flags override file values. Must precede the subcommand.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Master seed for all Monte Carlo streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Evolution time t > 0.
    #[arg(long = "time")]
    time: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify one (beta, lambda, t, d, s) point into a Gibbsianness regime.
    Classify {
        #[command(flatten)]
        point: PointArgs,
        /// Conditioning-window depth for the badness certificate.
        #[arg(long)]
        depth: Option<u32>,
        /// Outer iterations for the certificate boundary (default adaptive).
        #[arg(long)]
        margin: Option<u32>,
    },
    /// Classify a grid of points; CSV output, resumable per point.
    Scan {
        #[arg(long)]
        d: Option<u32>,
        #[arg(long)]
        s: Option<u32>,
        /// Axis spec: comma list `a,b,c` or range `lo:hi:count[:log]`.
        #[arg(long)]
        betas: Option<String>,
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long)]
        times: Option<String>,
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Emit figure data as CSV.
    Figure {
        #[arg(long, value_enum)]
        which: FigureKind,
        #[command(flatten)]
        point: PointArgs,
        /// Dynamic field h^t for the inner-map figure (overrides --time;
        /// 0 is the limiting case).
        #[arg(long)]
        ht: Option<f64>,
        /// Truncation depth for the boundary-fields run.
        #[arg(long)]
        depth: Option<u32>,
        /// Subtree sign for the generated boundary-fields configuration.
        #[arg(long, default_value = "minus")]
        sign: SignArg,
        /// Use this configuration file for the boundary-fields run instead
        /// of the generated s-subtree.
        #[arg(long, value_name = "FILE")]
        eta: Option<PathBuf>,
        /// Grid axes for `--which phase-diagram`.
        #[arg(long)]
        betas: Option<String>,
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long)]
        times: Option<String>,
    },
    /// Apply the spin-flip time evolution to a configuration file and write
    /// the evolved configuration in the same text format.
    Evolve {
        /// Input configuration (text format).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Evolution time t > 0.
        #[arg(long = "time")]
        time: Option<f64>,
    },
    /// Fixed points of the inner or outer boundary-field map.
    FixedPoints {
        #[arg(long, value_enum, default_value = "inner")]
        map: MapArg,
        #[command(flatten)]
        point: PointArgs,
        /// Dynamic field h^t directly (overrides --time; 0 is the limit case).
        #[arg(long)]
        ht: Option<f64>,
    },
    /// Essential-discontinuity certificate for a configuration file.
    Certify {
        /// Configuration eta in the text format (header `d n`, then
        /// `index parent spin` lines). Needs depth >= depth+2.
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[command(flatten)]
        point: PointArgs,
        /// Conditioning-window depth n.
        #[arg(long)]
        depth: Option<u32>,
        /// Outer iterations m standing in for the far annuli (default adaptive).
        #[arg(long)]
        margin: Option<u32>,
        /// Dump per-edge fields of the plus-boundary window run as CSV.
        #[arg(long, value_name = "FILE")]
        emit_fields: Option<PathBuf>,
    },
    /// Monte Carlo cluster statistics from root-down sampling.
    Sample {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Galton-Watson lower-bound recursion report.
    Gw {
        #[arg(long)]
        d: Option<u32>,
        #[arg(long)]
        s: Option<u32>,
        #[arg(long)]
        u: Option<f64>,
    },
    /// Activity thresholds lambda_g and lambda_b at fixed (beta, d).
    Thresholds {
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        d: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureKind {
    BoundaryFields,
    InnerMap,
    PhaseDiagram,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Inner,
    Outer,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

impl SignArg {
    fn spin(self) -> Spin {
        match self {
            SignArg::Plus => Spin::Plus,
            SignArg::Minus => Spin::Minus,
        }
    }
}

/// Parameter resolution: flag beats config file beats default; everything
/// that was used ends up in the `resolved` echo map.
struct Resolver {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&PathBuf>) -> Result<Self> {
        let file = match config {
            Some(path) => parse_config(&fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        Ok(Resolver { file, resolved: BTreeMap::new() })
    }

    fn lookup<T: std::str::FromStr + std::fmt::Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: Option<T>,
    ) -> Result<T> {
        let value = if let Some(v) = flag {
            v
        } else if let Some(raw) = self.file.get(key) {
            raw.parse().map_err(|_| {
                Error::invalid(format!("config key `{key}`: cannot parse `{raw}`"))
            })?
        } else if let Some(v) = default {
            v
        } else {
            return Err(Error::invalid(format!(
                "missing parameter `{key}` (pass --{key} or set it in the config file)"
            )));
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }
}

fn out_writer(out: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn write_json<T: Serialize>(
    out: Option<&PathBuf>,
    resolved: &BTreeMap<String, String>,
    payload: &T,
) -> Result<()> {
    let doc = serde_json::json!({ "resolved_params": resolved, "result": payload });
    let mut w = out_writer(out)?;
    serde_json::to_writer_pretty(&mut w, &doc)
        .map_err(|e| Error::internal(format!("json encoding failed: {e}")))?;
    writeln!(w)?;
    Ok(())
}

fn write_config_header(w: &mut dyn Write, resolved: &BTreeMap<String, String>) -> Result<()> {
    for (k, v) in resolved {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// Axis spec: `a,b,c` literal values, or `lo:hi:count[:log|:lin]`.
fn parse_axis(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() >= 3 {
        let lo: f64 = parts[0].parse().map_err(|_| Error::invalid(format!("bad axis `{spec}`")))?;
        let hi: f64 = parts[1].parse().map_err(|_| Error::invalid(format!("bad axis `{spec}`")))?;
        let count: usize =
            parts[2].parse().map_err(|_| Error::invalid(format!("bad axis `{spec}`")))?;
        let log = match parts.get(3) {
            None | Some(&"log") => true,
            Some(&"lin") => false,
            Some(other) => return Err(Error::invalid(format!("bad axis scale `{other}`"))),
        };
        if count < 1 || (log && (lo <= 0.0 || hi <= 0.0)) || hi < lo {
            return Err(Error::invalid(format!("bad axis `{spec}`")));
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        let vals = (0..count)
            .map(|i| {
                let f = i as f64 / (count - 1) as f64;
                if log {
                    10f64.powf(lo.log10() + f * (hi.log10() - lo.log10()))
                } else {
                    lo + f * (hi - lo)
                }
            })
            .collect();
        return Ok(vals);
    }
    spec.split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::invalid(format!("bad axis value `{v}`"))))
        .collect()
}

fn scan_csv_row(row: &regime::ScanRow, d: u32, s: u32) -> String {
    match (&row.report, &row.error) {
        (Some(r), _) => format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},ok,",
            row.key,
            d,
            s,
            row.beta,
            row.lambda,
            row.t,
            r.u,
            r.rho_occ,
            r.u2,
            r.dobrushin_gibbs,
            r.extinction_as_gibbs,
            r.kesten_stigum_nonextremal,
            r.subtree_badness_certified,
            r.badness_gap.map(|g| g.to_string()).unwrap_or_default(),
            r.fully_occupied_bad,
            r.fully_occupied_gap.map(|g| g.to_string()).unwrap_or_default(),
            r.gw_limit.map(|g| g.to_string()).unwrap_or_default(),
            r.classification,
        ),
        (None, Some(e)) => format!(
            "{},{},{},{},{},{},,,,,,,,,,,,,error,{}",
            row.key,
            d,
            s,
            row.beta,
            row.lambda,
            row.t,
            e.replace(',', ";")
        ),
        (None, None) => unreachable!("scan row without report or error"),
    }
}

const SCAN_HEADER: &str = "key,d,s,beta,lambda,t,u,rho_occ,u2,dobrushin_gibbs,\
extinction_as_gibbs,kesten_stigum_nonextremal,subtree_badness_certified,badness_gap,\
fully_occupied_bad,fully_occupied_gap,gw_limit,classification,status,error";

fn run_scan(
    d: u32,
    s: u32,
    grid: &GridSpec,
    opts: &ClassifyOptions,
    out: Option<&PathBuf>,
    resolved: &BTreeMap<String, String>,
) -> Result<()> {
    // Resumability: reuse rows whose key already exists in the output file.
    let mut existing: BTreeMap<String, String> = BTreeMap::new();
    if let Some(path) = out {
        if path.exists() {
            for line in fs::read_to_string(path)?.lines() {
                if line.starts_with('#') || line.starts_with("key,") || line.trim().is_empty() {
                    continue;
                }
                if let Some(key) = line.split(',').next() {
                    existing.insert(key.to_string(), line.to_string());
                }
            }
        }
    }
    let points = grid.points();
    // Only absent points are recomputed; existing rows are reused verbatim,
    // which keeps re-runs with finer grids byte-stable at shared points.
    let missing: Vec<(f64, f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(b, l, t)| !existing.contains_key(&regime::point_key(d, s, b, l, t)))
        .collect();
    let fresh: Vec<regime::ScanRow> = {
        use rayon::prelude::*;
        missing
            .par_iter()
            .map(|&(beta, lambda, t)| {
                let key = regime::point_key(d, s, beta, lambda, t);
                match ModelParams::new(d, beta, lambda)
                    .and_then(|params| regime::classify(&params, t, s, opts))
                {
                    Ok(report) => regime::ScanRow {
                        key,
                        beta,
                        lambda,
                        t,
                        report: Some(report),
                        error: None,
                    },
                    Err(e) => regime::ScanRow {
                        key,
                        beta,
                        lambda,
                        t,
                        report: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    };
    let mut fresh_by_key: BTreeMap<String, String> = fresh
        .iter()
        .map(|row| (row.key.clone(), scan_csv_row(row, d, s)))
        .collect();

    let mut w = out_writer(out)?;
    write_config_header(&mut w, resolved)?;
    writeln!(w, "{SCAN_HEADER}")?;
    for (beta, lambda, t) in points {
        let key = regime::point_key(d, s, beta, lambda, t);
        if let Some(line) = existing.get(&key) {
            writeln!(w, "{line}")?;
        } else if let Some(line) = fresh_by_key.remove(&key) {
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn emit_fields_csv(
    state: &BoundaryFieldState,
    out: Option<&PathBuf>,
    resolved: &BTreeMap<String, String>,
) -> Result<()> {
    let tree = state.tree();
    let ht = state.kernel().ht;
    let mut w = out_writer(out)?;
    write_config_header(&mut w, resolved)?;
    writeln!(w, "child,parent,field,field_plus_timefield")?;
    for v in 1..tree.vertex_count() {
        let parent = tree.parent(v).expect("non-root");
        let f = state.field_toward_root(v);
        let with_time = f + ht * state.second_layer().spin(v).value();
        writeln!(w, "{v},{parent},{f},{with_time}")?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    let mut rv = Resolver::new(cli.config.as_ref())?;
    let out = cli.out.as_ref();

    match cli.command {
        Command::Classify { point, depth, margin } => {
            let d = rv.lookup("d", point.d, None)?;
            let s = rv.lookup("s", point.s, Some(if d > 1 { d - 1 } else { 1 }))?;
            let beta = rv.lookup("beta", point.beta, None)?;
            let lambda = rv.lookup("lambda", point.lambda, None)?;
            let t = rv.lookup("time", point.time, None)?;
            let n = rv.lookup("depth", depth, Some(6))?;
            let seed = rv.lookup("seed", cli.seed, Some(0))?;
            let _ = seed; // classification is deterministic; echoed for the record
            let opts = ClassifyOptions {
                certificate_depth: n,
                outer_steps: margin,
                ..Default::default()
            };
            let params = ModelParams::new(d, beta, lambda)?;
            let report = regime::classify(&params, t, s, &opts)?;
            write_json(out, &rv.resolved, &report)
        }
        Command::Scan { d, s, betas, lambdas, times, depth } => {
            let d = rv.lookup("d", d, None)?;
            let s = rv.lookup("s", s, Some(if d > 1 { d - 1 } else { 1 }))?;
            let betas = parse_axis(&rv.lookup("betas", betas, None::<String>)?)?;
            let lambdas = parse_axis(&rv.lookup("lambdas", lambdas, None::<String>)?)?;
            let times = parse_axis(&rv.lookup("times", times, None::<String>)?)?;
            let n = rv.lookup("depth", depth, Some(6))?;
            let grid = GridSpec { betas, lambdas, times };
            let opts = ClassifyOptions { certificate_depth: n, ..Default::default() };
            run_scan(d, s, &grid, &opts, out, &rv.resolved)
        }
        Command::Figure { which, point, ht, depth, sign, eta, betas, lambdas, times } => match which
        {
            FigureKind::BoundaryFields => {
                let beta = rv.lookup("beta", point.beta, Some(2.0))?;
                let t = rv.lookup("time", point.time, Some(0.2))?;
                let lambda = rv.lookup("lambda", point.lambda, Some(1.0))?;
                let kernel = make_kernel(t)?;
                // Either a supplied configuration or the generated s-subtree.
                let (tree, spins) = match &eta {
                    Some(path) => {
                        rv.resolved.insert("eta".into(), path.display().to_string());
                        let text = fs::read_to_string(path)?;
                        read_configuration(text.as_bytes())?
                    }
                    None => {
                        let d = rv.lookup("d", point.d, Some(4))?;
                        let s = rv.lookup("s", point.s, Some(3))?;
                        let n = rv.lookup("depth", depth, Some(6))?;
                        let tree = TreeTruncation::new(d, n)?;
                        let spins =
                            SpinConfiguration::s_subtree(&tree, s, sign.spin())?.into_spins();
                        (tree, spins)
                    }
                };
                let d = tree.order();
                let params = ModelParams::new(d, beta, lambda)?;
                let cfg = SpinConfiguration::new(&tree, spins)?;
                let f_prime = fixed_points_outer(d, beta, kernel.ht)?
                    .largest_positive()
                    .ok_or_else(|| Error::internal("outer map lost its fixed point"))?;
                let mut state = BoundaryFieldState::new(params, kernel, cfg)?;
                state.run_recursion(f_prime);
                emit_fields_csv(&state, out, &rv.resolved)
            }
            FigureKind::InnerMap => {
                let d = rv.lookup("d", point.d, Some(8))?;
                let s = rv.lookup("s", point.s, Some(7))?;
                let beta = rv.lookup("beta", point.beta, Some(1.1))?;
                let ht = match (ht, point.time) {
                    (Some(h), _) => h,
                    (None, Some(t)) => {
                        rv.resolved.insert("time".into(), t.to_string());
                        make_kernel(t)?.ht
                    }
                    (None, None) => rv.lookup("ht", None, Some(0.0))?,
                };
                rv.resolved.insert("ht".into(), ht.to_string());
                let report = fixed_points_inner(d, s, beta, ht)?;
                let map = inner_map(d, s, beta, ht);
                let mut w = out_writer(out)?;
                write_config_header(&mut w, &rv.resolved)?;
                writeln!(w, "x,map_x,is_fixed_point")?;
                let (lo, hi) = report.search_interval;
                let samples = 2000;
                for i in 0..=samples {
                    let x = lo + (hi - lo) * i as f64 / samples as f64;
                    writeln!(w, "{x},{},0", map(x))?;
                }
                for r in &report.fixed_points {
                    writeln!(w, "{},{},1", r.x, map(r.x))?;
                }
                w.flush()?;
                Ok(())
            }
            FigureKind::PhaseDiagram => {
                let d = rv.lookup("d", point.d, None)?;
                let s = rv.lookup("s", point.s, Some(if d > 1 { d - 1 } else { 1 }))?;
                let betas = parse_axis(&rv.lookup("betas", betas, None::<String>)?)?;
                let lambdas = parse_axis(&rv.lookup("lambdas", lambdas, None::<String>)?)?;
                let times = parse_axis(&rv.lookup("times", times, None::<String>)?)?;
                let n = rv.lookup("depth", depth, Some(6))?;
                let grid = GridSpec { betas, lambdas, times };
                let opts = ClassifyOptions { certificate_depth: n, ..Default::default() };
                run_scan(d, s, &grid, &opts, out, &rv.resolved)
            }
        },
        Command::FixedPoints { map, point, ht } => {
            let d = rv.lookup("d", point.d, None)?;
            let ht = match (ht, point.time) {
                (Some(h), _) => {
                    rv.resolved.insert("ht".into(), h.to_string());
                    h
                }
                (None, Some(t)) => {
                    rv.resolved.insert("time".into(), t.to_string());
                    ht_of(t)
                }
                (None, None) => rv.lookup("ht", None, Some(0.0))?,
            };
            let beta = rv.lookup("beta", point.beta, None)?;
            let report = match map {
                MapArg::Inner => {
                    let s = rv.lookup("s", point.s, None)?;
                    fixed_points_inner(d, s, beta, ht)?
                }
                MapArg::Outer => fixed_points_outer(d, beta, ht)?,
            };
            write_json(out, &rv.resolved, &report)
        }
        Command::Certify { config, point, depth, margin, emit_fields } => {
            let text = fs::read_to_string(&config)?;
            let (tree, spins) = read_configuration(text.as_bytes())?;
            let eta = SpinConfiguration::new(&tree, spins)?;
            let d = tree.order();
            rv.resolved.insert("configuration".into(), config.display().to_string());
            let s = rv.lookup("s", point.s, None)?;
            let beta = rv.lookup("beta", point.beta, None)?;
            let lambda = rv.lookup("lambda", point.lambda, Some(1.0))?;
            let t = rv.lookup("time", point.time, None)?;
            let n = rv.lookup("depth", depth, None)?;
            let params = ModelParams::new(d, beta, lambda)?;
            let kernel = make_kernel(t)?;
            let cert = discontinuity_certificate(&eta, &params, &kernel, s, n, margin)?;
            if let Some(path) = &emit_fields {
                let window = TreeTruncation::new(d, n)?;
                let spins = eta.spins()[..window.vertex_count()].to_vec();
                let cfg = SpinConfiguration::new(&window, spins)?;
                let mut state = BoundaryFieldState::new(params, kernel, cfg)?;
                state.run_recursion(cert.boundary_field);
                emit_fields_csv(&state, Some(path), &rv.resolved)?;
            }
            write_json(out, &rv.resolved, &cert)
        }
        Command::Sample { point, depth, samples } => {
            let d = rv.lookup("d", point.d, None)?;
            let s = rv.lookup("s", point.s, Some(if d > 1 { d - 1 } else { 1 }))?;
            let beta = rv.lookup("beta", point.beta, None)?;
            let lambda = rv.lookup("lambda", point.lambda, None)?;
            let t = rv.lookup("time", point.time, None)?;
            let depth = rv.lookup("depth", depth, Some(6))?;
            let samples = rv.lookup("samples", samples, Some(10_000))?;
            let seed = rv.lookup("seed", cli.seed, Some(0))?;
            let params = ModelParams::new(d, beta, lambda)?;
            let kernel = make_kernel(t)?;
            let stats = mc_cluster_stats(&params, &kernel, depth, samples, seed, s)?;
            let mut w = out_writer(out)?;
            write_config_header(&mut w, &rv.resolved)?;
            writeln!(w, "d,s,beta,lambda,t,depth,samples,seed,metric,estimate,stderr")?;
            let prefix = format!("{d},{s},{beta},{lambda},{t},{depth},{samples},{seed}");
            let root_se =
                (stats.root_occ_frequency * (1.0 - stats.root_occ_frequency) / samples as f64)
                    .sqrt();
            writeln!(w, "{prefix},root_occupation,{},{root_se}", stats.root_occ_frequency)?;
            writeln!(w, "{prefix},child_occupation_u,{},{}", stats.u_hat, stats.u_stderr)?;
            writeln!(
                w,
                "{prefix},subtree_frequency,{},{}",
                stats.subtree_frequency, stats.subtree_stderr
            )?;
            writeln!(w, "{prefix},gw_prediction,{},0", stats.gw_prediction)?;
            writeln!(w, "{prefix},gw_naive,{},0", stats.gw_naive)?;
            writeln!(w, "{prefix},u_exact,{},0", stats.u_exact)?;
            writeln!(w, "{prefix},rho_occ_exact,{},0", stats.rho_occ_exact)?;
            w.flush()?;
            Ok(())
        }
        Command::Evolve { config, time } => {
            let text = fs::read_to_string(&config)?;
            let (tree, spins) = read_configuration(text.as_bytes())?;
            let cfg = SpinConfiguration::new(&tree, spins)?;
            rv.resolved.insert("configuration".into(), config.display().to_string());
            let t = rv.lookup("time", time, None)?;
            let seed = rv.lookup("seed", cli.seed, Some(0))?;
            let kernel = make_kernel(t)?;
            let evolved = wrtree::dynamics::evolve(&cfg, &kernel, seed);
            let mut w = out_writer(out)?;
            evolved.write_to(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Gw { d, s, u } => {
            let d = rv.lookup("d", d, None)?;
            let s = rv.lookup("s", s, Some(if d > 1 { d - 1 } else { 1 }))?;
            let u = rv.lookup("u", u, None)?;
            let report = percolation::gw_iterate(d, s, u)?;
            write_json(out, &rv.resolved, &report)
        }
        Command::Thresholds { beta, d } => {
            let beta = rv.lookup("beta", beta, None)?;
            let d = rv.lookup("d", d, None)?;
            let report = percolation::lambda_thresholds(beta, d)?;
            if report.lambda_b_estimate.is_none() {
                eprintln!("warning: {}", report.note);
            }
            write_json(out, &rv.resolved, &report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidParameter(_) | Error::Parse(_) => ExitCode::from(2),
                Error::Internal(_) => ExitCode::from(3),
                Error::Io(_) => ExitCode::from(1),
            }
        }
    }
}
