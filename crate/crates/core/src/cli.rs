//! Command-line front end. Exit codes: 0 success, 1 negative verdict,
//! 2 usage, IO or parse error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::calculus::{Rule, RuleSet};
use crate::eliminator::{eliminate_subst, ElimConfig, ElimError, Strategy};
use crate::gtc::{check_gtc, GtcVerdict};
use crate::proofgraph::{materialize, validate, PreProof};
use crate::proofio::{parse_proof_bytes, parse_substitution, print_proof};
use crate::psc::{psc, psc_bound, ClosureInput};
use crate::syntax::{Name, Signature, Substitution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Closures with a larger bound are not enumerated by `psc`.
const PSC_LIMIT: u128 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "cyclop", version, about = "Checker and transformer for cyclic proofs with inductive predicates")]
struct Cli {
    /// Report style: prose, or one key=value record per line.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Lines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Eager,
    Bound,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a proof and decide the global trace condition.
    Check { file: PathBuf },
    /// Decide the global trace condition and optionally print the witness.
    Gtc {
        file: PathBuf,
        /// Print the proof with its loop certificate when the condition holds.
        #[arg(long)]
        certificate: bool,
        /// Print the proof with the failing lasso when the condition fails.
        #[arg(long)]
        counterexample: bool,
    },
    /// Remove all substitution nodes.
    ElimSubst {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Eager)]
        strategy: StrategyArg,
        /// Rule set of the output (full, cutfree, freshl, section4); defaults to the input's.
        #[arg(long)]
        rules: Option<String>,
        /// Lifting depth limit; the worst-case bound by default.
        #[arg(long)]
        depth_cap: Option<usize>,
        /// Re-check the output (trace condition and trace transport).
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        stats: bool,
    },
    /// Print the tree unfolding down to a depth.
    Unfold {
        file: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the partial-substitution closure of a proof's substitutions or of given ones.
    Psc {
        file: Option<PathBuf>,
        /// Base substitution such as "[x := y]"; repeatable.
        #[arg(long = "base")]
        base: Vec<String>,
        /// Comma-separated variables; defaults to the free variables of the proof or base.
        #[arg(long, value_delimiter = ',')]
        vars: Vec<String>,
    },
}

/// Collected results: prose lines and key=value records.
struct Report {
    format: Format,
    lines: Vec<String>,
}

impl Report {
    fn new(format: Format) -> Self {
        Report { format, lines: Vec::new() }
    }

    fn field(&mut self, key: &str, value: impl ToString, human: impl FnOnce() -> Option<String>) {
        match self.format {
            Format::Lines => self.lines.push(format!("{key}={}", value.to_string())),
            Format::Human => self.lines.extend(human()),
        }
    }

    fn text(&mut self, s: impl Into<String>) {
        if self.format == Format::Human {
            self.lines.push(s.into());
        }
    }
}

enum Failure {
    Usage(String),
    Negative(String),
}

type Outcome = Result<i32, Failure>;

/// Runs the tool on `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let mut report = Report::new(cli.format);
    let result = dispatch(cli.command, &mut report, out);
    for l in &report.lines {
        let _ = writeln!(out, "{l}");
    }
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
        Err(Failure::Negative(msg)) => {
            let _ = writeln!(err, "{msg}");
            EXIT_NEGATIVE
        }
    }
}

fn resolve_path(p: &Path) -> PathBuf {
    if p.is_relative() && !p.exists() {
        if let Some(dir) = std::env::var_os("CYCLOP_CORPUS") {
            let q = Path::new(&dir).join(p);
            if q.exists() {
                return q;
            }
        }
    }
    p.to_path_buf()
}

fn load(p: &Path) -> Result<PreProof, Failure> {
    let path = resolve_path(p);
    let bytes = std::fs::read(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_proof_bytes(&bytes).map_err(|e| Failure::Usage(format!("{}:{e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Usage(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(output: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match output {
        Some(p) => write_atomic(p, text),
        None => out.write_all(text.as_bytes()).map_err(|e| Failure::Usage(e.to_string())),
    }
}

fn path_str(path: &[usize]) -> String {
    path.iter().map(|n| format!("n{n}")).collect::<Vec<_>>().join(" ")
}

fn witness_comments(v: &GtcVerdict) -> String {
    let mut s = String::new();
    match v {
        GtcVerdict::Holds(c) => {
            for l in &c.loops {
                s.push_str(&format!("# loop at n{}: {} progresses on slot {}\n", l.node, path_str(&l.path), l.slot));
            }
        }
        GtcVerdict::Fails(l) => {
            s.push_str(&format!("# stem: {}\n# cycle: {}\n", path_str(&l.stem), path_str(&l.cycle)));
        }
    }
    s
}

fn dispatch(cmd: Command, r: &mut Report, out: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Check { file } => {
            let p = load(&file)?;
            r.field("command", "check", || None);
            if let Err(e) = validate(&p) {
                r.field("valid", false, || None);
                return Err(Failure::Negative(format!("invalid pre-proof: {e}")));
            }
            r.field("valid", true, || None);
            r.field("nodes", p.len(), || None);
            let v = check_gtc(&p).map_err(|e| Failure::Negative(e.to_string()))?;
            r.field("gtc", if v.holds() { "holds" } else { "fails" }, || {
                Some(format!("valid cyclic pre-proof; GTC {}", if v.holds() { "holds" } else { "fails" }))
            });
            if let GtcVerdict::Fails(l) = &v {
                r.field("stem", path_str(&l.stem), || Some(format!("stem: {}", path_str(&l.stem))));
                r.field("cycle", path_str(&l.cycle), || Some(format!("cycle: {}", path_str(&l.cycle))));
                return Ok(EXIT_NEGATIVE);
            }
            Ok(EXIT_OK)
        }
        Command::Gtc { file, certificate, counterexample } => {
            let p = load(&file)?;
            let v = check_gtc(&p).map_err(|e| Failure::Negative(format!("invalid pre-proof: {e}")))?;
            r.field("command", "gtc", || None);
            r.field("gtc", if v.holds() { "holds" } else { "fails" }, || {
                Some(format!("GTC {}", if v.holds() { "holds" } else { "fails" }))
            });
            match &v {
                GtcVerdict::Holds(c) => {
                    r.field("loops", c.loops.len(), || None);
                    if certificate {
                        emit(None, &format!("{}{}", print_proof(&p), witness_comments(&v)), out)?;
                    }
                    Ok(EXIT_OK)
                }
                GtcVerdict::Fails(l) => {
                    r.field("stem", path_str(&l.stem), || Some(format!("stem: {}", path_str(&l.stem))));
                    r.field("cycle", path_str(&l.cycle), || Some(format!("cycle: {}", path_str(&l.cycle))));
                    if counterexample {
                        emit(None, &format!("{}{}", print_proof(&p), witness_comments(&v)), out)?;
                    }
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        Command::ElimSubst { file, output, strategy, rules, depth_cap, verify, stats } => {
            let rules = match rules {
                Some(name) => Some(RuleSet::preset(&name).ok_or_else(|| Failure::Usage(format!("unknown rule set '{name}'")))?),
                None => None,
            };
            let p = load(&file)?;
            let cfg = ElimConfig {
                strategy: match strategy {
                    StrategyArg::Eager => Strategy::Eager,
                    StrategyArg::Bound => Strategy::WorstCaseBound,
                },
                rules,
                depth_cap,
                verify,
                ..Default::default()
            };
            let report = eliminate_subst(&p, &cfg).map_err(|e| match e {
                ElimError::InvalidInput(_) | ElimError::RuleSetTooWeak | ElimError::CompositeSubstitution(_) => {
                    Failure::Negative(e.to_string())
                }
                _ => Failure::Negative(format!("elimination failed: {e}")),
            })?;
            let text = print_proof(&report.output);
            match &output {
                Some(path) => write_atomic(path, &text)?,
                None => emit(None, &text, out)?,
            }
            r.field("command", "elim-subst", || None);
            let subst = (0..report.output.len()).filter(|&i| matches!(report.output.rule(i), Some(Rule::Subst { .. }))).count();
            r.field("subst_nodes", subst, || None);
            if let Some(path) = &output {
                r.field("output", path.display(), || Some(format!("wrote {}", path.display())));
            }
            if stats {
                let s = &report.stats;
                r.field("nodes", report.output.len(), || None);
                r.field("buds", s.buds, || None);
                r.field("depth_reached", s.depth_reached, || None);
                r.field("depth_bound", s.depth_bound, || None);
                r.field("closure_bound", s.closure_bound, || None);
                r.field("closure_size", s.closure_size.map_or("-".into(), |n| n.to_string()), || None);
                r.field("nodes_generated", s.nodes_generated, || None);
                r.text(format!(
                    "{} nodes, {} buds; lifted to depth {} (bound {}), {} nodes generated; closure size {} (bound {})",
                    report.output.len(),
                    s.buds,
                    s.depth_reached,
                    s.depth_bound,
                    s.nodes_generated,
                    s.closure_size.map_or("not computed".into(), |n| n.to_string()),
                    s.closure_bound
                ));
            }
            if let Some(v) = &report.verification {
                r.field("gtc", if v.holds() { "holds" } else { "fails" }, || {
                    Some(format!("output GTC {}", if v.holds() { "holds" } else { "fails" }))
                });
                let transport = matches!(report.transport, Some(Ok(())));
                r.field("transport", transport, || Some(format!("trace transport {}", if transport { "verified" } else { "broken" })));
                if !v.holds() || !transport {
                    if let Some(Err(msg)) = &report.transport {
                        return Err(Failure::Negative(msg.clone()));
                    }
                    return Ok(EXIT_NEGATIVE);
                }
            }
            Ok(EXIT_OK)
        }
        Command::Unfold { file, depth, output } => {
            let p = load(&file)?;
            validate(&p).map_err(|e| Failure::Negative(format!("invalid pre-proof: {e}")))?;
            let m = materialize(&p, depth);
            emit(output.as_deref(), &print_proof(&m.proof), out)?;
            r.field("command", "unfold", || None);
            r.field("nodes", m.proof.len(), || None);
            if let Some(path) = &output {
                r.field("output", path.display(), || Some(format!("wrote {} nodes to {}", m.proof.len(), path.display())));
            }
            Ok(EXIT_OK)
        }
        Command::Psc { file, base, vars } => {
            let (sig, mut subs, mut fv) = match &file {
                Some(f) => {
                    let p = load(f)?;
                    let subs: Vec<Substitution> = (0..p.len())
                        .filter_map(|i| match p.rule(i) {
                            Some(Rule::Subst { subst }) => Some(subst.clone()),
                            _ => None,
                        })
                        .collect();
                    let fv = p.nodes().iter().flat_map(|n| n.sequent.free_vars()).collect::<Vec<_>>();
                    (p.defs.signature().clone(), subs, fv)
                }
                None => (Signature::new(), Vec::new(), Vec::new()),
            };
            for b in &base {
                let s = parse_substitution(b, &sig).map_err(|e| Failure::Usage(format!("--base {b}: {e}")))?;
                if file.is_none() {
                    fv.extend(s.vars());
                }
                subs.push(s);
            }
            if !vars.is_empty() {
                fv = vars.iter().map(|v| Name::from(v.trim())).collect();
            }
            let input = ClosureInput::new(subs, fv);
            let bound = psc_bound(&input).map_err(|e| Failure::Negative(e.to_string()))?;
            r.field("command", "psc", || None);
            r.field("bound", bound, || Some(format!("bound {bound}")));
            if bound > PSC_LIMIT {
                r.text("closure too large to enumerate");
                return Ok(EXIT_OK);
            }
            let c = psc(&input).map_err(|e| Failure::Negative(e.to_string()))?;
            r.field("size", c.len(), || Some(format!("{} elements", c.len())));
            for e in c.elements() {
                r.field("element", e, || Some(e.to_string()));
            }
            Ok(EXIT_OK)
        }
    }
}
