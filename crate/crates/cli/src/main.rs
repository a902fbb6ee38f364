//! `grfn`: translate Fortran into function networks and analyse them.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use grfn::analysis::{
    comparison_dot, sobol_indices, structural_compare, top_pair_surface, Bounds, ClassCounts,
};
use grfn::equation::{parse_latex, tex_lines, SymbolHints};
use grfn::fortran::{parse_sources, read_source};
use grfn::grfn::{lower_in, FunctionKind, Grfn};
use grfn::grounding::{
    comment_records, grfn_variables, ground, match_equation, parse_mentions_tsv,
    EquationMatchReport,
};
use grfn::ir::{validate, PairProgram, UnitKind};
use grfn::modgraph::{build_dependency_graph, schedule};

#[derive(Parser)]
#[command(
    name = "grfn",
    version,
    about = "Fortran to grounded function networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower one program unit to a function network.
    Translate {
        /// Fortran sources; names resolve across all of them.
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Unit to lower. Defaults to the only non-module unit, then the PROGRAM.
        #[arg(long)]
        unit: Option<String>,
    },
    /// Wavefront schedule of the module dependency graph.
    Schedule {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Attach comment and text groundings to a network.
    Ground {
        grfn: PathBuf,
        #[arg(long, required = true)]
        comments: Vec<PathBuf>,
        #[arg(long)]
        mentions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        threshold: f64,
    },
    /// Match each LaTeX equation against the network's assignments.
    Equation {
        tex: PathBuf,
        #[arg(long)]
        grfn: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Known identifiers, one per line. Defaults to the network's variable names.
        #[arg(long)]
        hints: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        threshold: f64,
    },
    /// Classify the nodes of two networks against their shared variables.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        threshold: f64,
    },
    /// Sobol indices of one output over uniform input bounds.
    Sensitivity {
        grfn: PathBuf,
        #[arg(long)]
        output: String,
        #[arg(long)]
        bounds: PathBuf,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        surface: Option<PathBuf>,
    },
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

/// Bad input: malformed or inconsistent files. Exits with 2.
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Invalid>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::Translate {
            sources,
            out,
            dot,
            unit,
        } => {
            let program = parse_program(&sources)?;
            let name = pick_unit(&program, unit.as_deref())?;
            let g = lower_in(&program, &name)?;
            let mut files = vec![(out.clone(), g.to_json())];
            if let Some(d) = dot {
                files.push((d, grfn::grfn::to_dot(&g)));
            }
            write_all(&files)?;
            let assigns = g.functions_of_kind(FunctionKind::Assign).count();
            Ok(format!(
                "translate: {name} -> {} ({} variables, {} functions, {assigns} assign)",
                out.display(),
                g.variables.len(),
                g.functions.len()
            ))
        }
        Command::Schedule { sources, out, dot } => {
            let program = parse_program(&sources)?;
            let graph = build_dependency_graph(&program)?;
            let s = schedule(&graph);
            for w in &graph.warnings {
                eprintln!("warning: {w}");
            }
            let json = serde_json::json!({
                "levels": s.levels,
                "depth": s.depth,
                "warnings": graph.warnings,
            });
            let mut files = vec![(out.clone(), pretty(&json))];
            if let Some(d) = dot {
                files.push((d, grfn::modgraph::to_dot(&graph)));
            }
            write_all(&files)?;
            Ok(format!(
                "schedule: {} units in {} levels -> {}",
                graph.nodes.len(),
                s.depth,
                out.display()
            ))
        }
        Command::Ground {
            grfn,
            comments,
            mentions,
            out,
            threshold,
        } => {
            let g = read_grfn(&grfn)?;
            let program = parse_program(&comments)?;
            let records = comment_records(&program);
            let mentions = match mentions {
                Some(p) => {
                    let text = read(&p)?;
                    parse_mentions_tsv(&text).map_err(|e| {
                        invalid(format!("{}:{}: {}", p.display(), e.line, e.message))
                    })?
                }
                None => Vec::new(),
            };
            let (grounded, report) = ground(&g, &records, &mentions, threshold);
            for u in &report.unresolved {
                eprintln!("warning: unresolved {}: {}", u.symbol, u.reason);
            }
            write_all(&[(out.clone(), grounded.to_json())])?;
            Ok(format!(
                "ground: {} attached, {} unresolved -> {}",
                report.attached,
                report.unresolved.len(),
                out.display()
            ))
        }
        Command::Equation {
            tex,
            grfn,
            out,
            hints,
            threshold,
        } => {
            let g = read_grfn(&grfn)?;
            let hints = match hints {
                Some(p) => SymbolHints::new(
                    read(&p)?
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && !l.starts_with('%')),
                ),
                None => SymbolHints::new(grfn_variables(&g).into_iter().map(|v| v.name)),
            };
            let lines = tex_lines(&read(&tex)?);
            if lines.is_empty() {
                return Err(invalid(format!("{}: no equations", tex.display())));
            }
            let mut results = Vec::new();
            for l in &lines {
                let eq = parse_latex(&l.latex, &hints)
                    .map_err(|e| invalid(format!("{}:{}: {e}", tex.display(), l.line)))?;
                let report = match_equation(&eq, &g, &hints, threshold)?;
                results.push(EquationResult {
                    line: l.line,
                    report,
                });
            }
            write_all(&[(out.clone(), pretty(&results))])?;
            let verdicts: Vec<String> = results
                .iter()
                .map(|r| {
                    format!(
                        "{}:{:?}",
                        r.report.lhs.as_deref().unwrap_or("?"),
                        r.report.verdict
                    )
                })
                .collect();
            Ok(format!(
                "equation: {} -> {}",
                verdicts.join(" "),
                out.display()
            ))
        }
        Command::Compare {
            a,
            b,
            out,
            dot,
            threshold,
        } => {
            let ga = read_grfn(&a)?;
            let gb = read_grfn(&b)?;
            let report = structural_compare(&ga, &gb, threshold);
            let mut files = vec![(out.clone(), pretty(&report))];
            if let Some(d) = dot {
                files.push((d, comparison_dot(&ga, &gb, &report)));
            }
            write_all(&files)?;
            let counts =
                |c: &ClassCounts| format!("{}/{}/{}/{}", c.shared, c.path, c.control, c.isolated);
            Ok(format!(
                "compare: {} shared pairs; shared/path/control/isolated {} {}, {} {} -> {}",
                report.shared.len(),
                report.a.scope,
                counts(&report.a.counts),
                report.b.scope,
                counts(&report.b.counts),
                out.display()
            ))
        }
        Command::Sensitivity {
            grfn,
            output,
            bounds,
            n,
            seed,
            grid,
            out,
            surface,
        } => {
            let g = read_grfn(&grfn)?;
            let b = Bounds::from_json(&read(&bounds)?)
                .map_err(|e| invalid(format!("{}: {e}", bounds.display())))?;
            let mut report = sobol_indices(&g, &output, &b, n, seed)?;
            let mut files = Vec::new();
            if let Some(p) = surface {
                let s = top_pair_surface(&g, &output, &b, &report, grid)?;
                files.push((p, s.to_csv()));
                report.surface = Some(s);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            files.insert(0, (out.clone(), pretty(&report)));
            write_all(&files)?;
            let top = report
                .top_pair
                .as_ref()
                .map(|(x, y)| format!("top pair {x}, {y}"))
                .unwrap_or_else(|| "no pair".into());
            Ok(format!(
                "sensitivity: {} over {} inputs, {} evaluations, {top} -> {}",
                report.output,
                report.indices.len(),
                report.evaluations,
                out.display()
            ))
        }
    }
}

#[derive(Serialize)]
struct EquationResult {
    line: usize,
    #[serde(flatten)]
    report: EquationMatchReport,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_grfn(path: &Path) -> Result<Grfn> {
    Grfn::from_json(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Parse and validate; any problem with the sources is bad input.
fn parse_program(paths: &[PathBuf]) -> Result<PairProgram> {
    let mut files = Vec::new();
    for p in paths {
        let text = read_source(p).with_context(|| format!("reading {}", p.display()))?;
        files.push((p.display().to_string(), text));
    }
    let program = parse_sources(&files).map_err(|e| invalid(e.to_string()))?;
    let errors: Vec<String> = validate(&program)
        .into_iter()
        .filter(|d| d.is_error())
        .map(|d| match &d.location {
            Some(loc) => format!("{loc}: {}", d.message),
            None => d.message,
        })
        .collect();
    if !errors.is_empty() {
        return Err(invalid(errors.join("\n")));
    }
    Ok(program)
}

fn pick_unit(program: &PairProgram, unit: Option<&str>) -> Result<String> {
    if let Some(u) = unit {
        return program
            .container(u)
            .map(|c| c.name.clone())
            .ok_or_else(|| invalid(format!("no program unit named {u}")));
    }
    let runnable: Vec<_> = program
        .containers
        .iter()
        .filter(|c| c.kind != UnitKind::Module)
        .collect();
    if let [only] = runnable.as_slice() {
        return Ok(only.name.clone());
    }
    let programs: Vec<_> = runnable
        .iter()
        .filter(|c| c.kind == UnitKind::Program)
        .collect();
    if let [only] = programs.as_slice() {
        return Ok(only.name.clone());
    }
    let names: Vec<&str> = runnable.iter().map(|c| c.name.as_str()).collect();
    Err(invalid(format!(
        "choose a unit with --unit (one of: {})",
        names.join(", ")
    )))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Write every file to a temporary sibling first, then rename them all, so
/// an error never leaves a half-written output behind.
fn write_all(files: &[(PathBuf, String)]) -> Result<()> {
    let mut staged = Vec::new();
    for (path, text) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .with_context(|| format!("writing {}", path.display()))?;
        tmp.write_all(text.as_bytes())
            .and_then(|_| tmp.as_file().sync_all())
            .with_context(|| format!("writing {}", path.display()))?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .map_err(|e| anyhow!("writing {}: {}", path.display(), e.error))?;
    }
    Ok(())
}
