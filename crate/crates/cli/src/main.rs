use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use currents_cli::plotdata::emit_plotdata;
use currents_cli::run::boundary_options;
use currents_cli::scenario::SolveBoundaryOp;
use currents_cli::{
    read_current, read_scenario, requested_threads, run_scenario, serialize_current, CliError,
    ReportBundle, Result,
};
use metric_currents::boundary_solver::{assemble, verify_boundary};
use metric_currents::complex_ops::{classify_bidimension, ProbeOptions};
use metric_currents::fixtures::{by_name, FixtureParams, FIXTURE_NAMES};
use metric_currents::king::{assemble_variety, KingOptions};
use metric_currents::slicing::{slice_points_regular, SliceOptions};
use metric_currents::{CoordinateProjection, Current, Expr, ExpressionMap, MetricForm, QuadOptions, C64};

/// Rectifiable currents: evaluation, slicing, reconstruction and the
/// boundary problem.
#[derive(Parser)]
#[command(name = "currents", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Quad {
    /// Gauss-Legendre order per axis.
    #[arg(long, default_value_t = 16)]
    order: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fixture generators.
    Fixtures {
        #[command(subcommand)]
        cmd: FixturesCmd,
    },
    /// Evaluate a current on (f, pi_1, ..., pi_k).
    Eval {
        current: PathBuf,
        /// Function, as an s-expression in z1..zn.
        #[arg(long)]
        f: String,
        /// One s-expression per differential slot.
        #[arg(long = "pi")]
        pis: Vec<String>,
        #[command(flatten)]
        quad: Quad,
    },
    /// Mass by tensor quadrature.
    Mass {
        current: PathBuf,
        #[command(flatten)]
        quad: Quad,
    },
    /// Write the boundary current.
    Boundary {
        current: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Push a current forward through an ambient map.
    Pushforward {
        current: PathBuf,
        /// One s-expression in z1..zn per output coordinate.
        #[arg(long = "map", required = true)]
        map: Vec<String>,
        #[command(flatten)]
        out: Output,
    },
    /// Slice by a coordinate projection at a base point.
    Slice {
        current: PathBuf,
        /// 1-based coordinates, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        indices: Vec<usize>,
        /// Base point as re,im pairs, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        point: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Probe the bidimension (p, q).
    Classify {
        current: PathBuf,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 10)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Vanishing threshold.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        quad: Quad,
    },
    /// Reconstruct the defining polynomials of a holomorphic chain.
    KingReconstruct {
        current: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Solve the boundary problem for a closed curve.
    SolveBoundary {
        cycle: PathBuf,
        /// Coordinates kept; defaults to all.
        #[arg(long)]
        trunc: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        smax: Option<usize>,
        /// Moment quadrature order.
        #[arg(long)]
        quadrature: Option<usize>,
        #[arg(long, default_value_t = 50)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report file (JSON).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Branch table (CSV: face,sheet,re_z,im_z,re_f,im_f).
        #[arg(long)]
        branches: Option<PathBuf>,
    },
    /// Run a scenario and write its report bundle.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Emit a CSV table from a report bundle.
    Emit {
        bundle: PathBuf,
        selector: String,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Subcommand)]
enum FixturesCmd {
    /// Write a named fixture in the interchange format.
    Gen {
        name: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        multiplicity: Option<i64>,
        #[command(flatten)]
        out: Output,
    },
    /// List fixture names.
    List,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            use std::io::Write;
            // A closed pipe (`| head`) is not an error.
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
                _ => Ok(()),
            }
        }
    }
}

fn json_line(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn parse_expr(s: &str) -> Result<Expr> {
    Expr::parse(s).map_err(|e| CliError::Usage(format!("`{s}`: {e}")))
}

/// Runs a subcommand; the returned code is 0 or 2 (numeric failure).
fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Fixtures { cmd: FixturesCmd::List } => {
            write_out(None, &(FIXTURE_NAMES.join("\n") + "\n"))?;
            Ok(0)
        }
        Cmd::Fixtures {
            cmd: FixturesCmd::Gen { name, n, radius, multiplicity, out },
        } => {
            let (t, tail) = by_name(&name, &FixtureParams { n, radius, multiplicity })
                .map_err(|e| CliError::Usage(e.to_string()))?;
            write_out(out.output.as_deref(), &serialize_current(&t, tail.as_ref()))?;
            Ok(0)
        }
        Cmd::Eval { current, f, pis, quad } => {
            let t = read_current(&current)?.current;
            let pis = pis.iter().map(|s| parse_expr(s)).collect::<Result<Vec<_>>>()?;
            let v = t.evaluate(&MetricForm::new(parse_expr(&f)?, pis), &QuadOptions::order(quad.order))?;
            write_out(None, &json_line(&serde_json::json!({"value": [v.re, v.im]})))?;
            Ok(0)
        }
        Cmd::Mass { current, quad } => {
            let t = read_current(&current)?.current;
            write_out(None, &json_line(&t.mass(&QuadOptions::order(quad.order))))?;
            Ok(0)
        }
        Cmd::Boundary { current, out } => {
            let t = read_current(&current)?.current;
            write_out(out.output.as_deref(), &serialize_current(&t.boundary()?, None))?;
            Ok(0)
        }
        Cmd::Pushforward { current, map, out } => {
            let t = read_current(&current)?.current;
            let outs = map.iter().map(|s| parse_expr(s)).collect::<Result<Vec<_>>>()?;
            let p = t.pushforward(&ExpressionMap::new(2 * t.ambient.n, outs)?)?;
            write_out(out.output.as_deref(), &serialize_current(&p, None))?;
            Ok(0)
        }
        Cmd::Slice { current, indices, point, seed } => {
            let t = read_current(&current)?.current;
            if indices.contains(&0) || point.len() != 2 * indices.len() {
                return Err(CliError::Usage(
                    "--indices are 1-based and --point needs one re,im pair per index".into(),
                ));
            }
            let proj = CoordinateProjection::new(indices.iter().map(|i| i - 1).collect());
            let x: Vec<C64> = point.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            let so = SliceOptions { seed, ..Default::default() };
            write_out(None, &json_line(&slice_points_regular(&t, &proj, &x, &so)?))?;
            Ok(0)
        }
        Cmd::Classify { current, p, q, probes, seed, tol, quad } => {
            let t = read_current(&current)?.current;
            let o = ProbeOptions {
                count: probes,
                seed,
                tol: Some(tol),
                quad: QuadOptions::order(quad.order),
            };
            let rep = classify_bidimension(&t, p, q, &o)?;
            write_out(None, &json_line(&rep))?;
            Ok(if rep.passed() { 0 } else { 2 })
        }
        Cmd::KingReconstruct { current, seed, out } => {
            let t = read_current(&current)?.current;
            let o = KingOptions {
                seed,
                slice: SliceOptions { seed, ..Default::default() },
                ..Default::default()
            };
            let v = assemble_variety(&t, &o)?;
            write_out(out.output.as_deref(), &json_line(&v))?;
            Ok(if v.support_residual <= 1e-8 { 0 } else { 2 })
        }
        Cmd::SolveBoundary { cycle, trunc, grid, smax, quadrature, probes, seed, output, branches } => {
            let cf = read_current(&cycle)?;
            let m = cf.current;
            let op = SolveBoundaryOp {
                name: None,
                current: String::new(),
                trunc,
                grid,
                smax,
                raster: None,
                quadrature,
                probes,
                verify_panels: 1,
                verify: true,
            };
            let bo = boundary_options(&op, seed);
            let sol = assemble(&m, trunc.unwrap_or(m.ambient.n), cf.tail.as_ref(), &bo)?;
            let vq = QuadOptions::order(bo.quad_order);
            let r = verify_boundary(&sol.current, &m, probes, seed, &vq)?;
            let report = serde_json::json!({
                "n_trunc": sol.n_trunc,
                "validation": sol.validation,
                "tail_bound": sol.tail_bound,
                "tail_bound_sq": sol.tail_bound_sq,
                "mass": sol.mass.total,
                "graph_sheets": sol.graph_sheets,
                "faces": sol.faces.iter().map(|f| serde_json::json!({
                    "face": f.face,
                    "winding": f.winding,
                    "sheets": f.sheets,
                    "unbounded": f.unbounded,
                    "fits": f.fits,
                    "fit_residual": f.fit_residual,
                })).collect::<Vec<_>>(),
                "verify": r,
            });
            write_out(output.as_deref(), &json_line(&report))?;
            if let Some(path) = branches {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(Vec::new());
                let f = |x: f64| format!("{x:.16e}");
                w.write_record(["face", "sheet", "re_z", "im_z", "re_f", "im_f"]).expect("in-memory write");
                for face in &sol.faces {
                    for (z, per_sheet) in face.grid.iter().zip(&face.branches) {
                        for (h, coords) in per_sheet.iter().enumerate() {
                            let v = coords.get(1).copied().unwrap_or_default();
                            w.write_record([
                                face.face.to_string(),
                                h.to_string(),
                                f(z.re),
                                f(z.im),
                                f(v.re),
                                f(v.im),
                            ])
                            .expect("in-memory write");
                        }
                    }
                }
                let bytes = w.into_inner().expect("in-memory flush");
                std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            }
            Ok(if r.passed && sol.validation.passed { 0 } else { 2 })
        }
        Cmd::Run { scenario, out } => {
            let s = read_scenario(&scenario)?;
            let bundle = run_scenario(&s);
            write_out(out.output.as_deref(), &bundle.to_json())?;
            for r in &bundle.ops {
                eprintln!(
                    "[{}] ops[{}] {} ({:?})",
                    if r.ok { "ok" } else { "FAIL" },
                    r.index,
                    r.op,
                    r.status
                );
            }
            eprintln!("wall time {:.3} s", bundle.wall_time.as_secs_f64());
            Ok(bundle.exit_code())
        }
        Cmd::Emit { bundle, selector, out } => {
            let text = std::fs::read_to_string(&bundle).map_err(|e| CliError::io(&bundle, e))?;
            let b = ReportBundle::from_json(&text)?;
            write_out(out.output.as_deref(), &emit_plotdata(&b, &selector)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 1; help and version go through clap.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let threads = match requested_threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("global pool is configured once");
    }
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
