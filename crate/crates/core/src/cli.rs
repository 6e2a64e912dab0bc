//! The `ssparse` command line.
//!
//! Exit codes: 0 success, 1 parse or decision failure, 2 input or
//! knowledge-base error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::chart::{enumerate_parses, render_tree, viterbi_parse, ParseError, TreeFormat, DEFAULT_ENUMERATION_CAP};
use crate::grammar::{load_grammar, Pcfg};
use crate::mebn::{load_mtheory, query_posterior, GroundedVar, MTheory, MebnError, DEFAULT_DEPTH_LIMIT};
use crate::ssparser::{Mode, SemanticError, SemanticOptions, SemanticParser};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ssparse", version, about = "Probabilistic CYK parsing with knowledge-base PP attachment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a grammar and/or an MTheory; prints OK when both are clean.
    Validate {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        mtheory: Option<PathBuf>,
    },
    /// Viterbi parse.
    Parse {
        #[command(flatten)]
        input: SentenceArgs,
        /// Print every parse, most probable first.
        #[arg(long)]
        all: bool,
    },
    /// Parse with knowledge-base attachment decisions.
    Sparse {
        #[command(flatten)]
        input: SentenceArgs,
        #[arg(long)]
        mtheory: PathBuf,
        #[arg(long, default_value = "literal")]
        mode: Mode,
        /// Append the decision trace as JSON.
        #[arg(long)]
        trace: bool,
        #[arg(long, env = "SSPARSE_DEPTH_LIMIT", default_value_t = DEFAULT_DEPTH_LIMIT, value_parser = depth_limit)]
        depth_limit: usize,
    },
    /// Posterior of one grounded variable, e.g. `hasProbability(d, r)`.
    Query {
        #[arg(long)]
        mtheory: PathBuf,
        variable: String,
        /// Arguments, when not given inline as `name(a, b)`.
        args: Vec<String>,
        /// Observation `var(a, b)=STATE`; repeatable.
        #[arg(long)]
        evidence: Vec<String>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Tree)]
        format: OutputFormat,
        #[arg(long, env = "SSPARSE_DEPTH_LIMIT", default_value_t = DEFAULT_DEPTH_LIMIT, value_parser = depth_limit)]
        depth_limit: usize,
    },
}

#[derive(Debug, Args)]
pub struct SentenceArgs {
    #[arg(long)]
    pub grammar: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tree)]
    pub format: OutputFormat,
    /// One sentence per line; blank lines are skipped.
    #[arg(long, conflicts_with = "sentence")]
    pub batch: Option<PathBuf>,
    /// Whitespace-separated tokens.
    #[arg(required_unless_present = "batch")]
    pub sentence: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Tree,
    Bracket,
    Json,
}

fn depth_limit(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("depth limit must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

/// Six significant digits.
pub fn format_probability(p: f64) -> String {
    format!("{p:.5e}")
}

/// Text written to stdout and stderr plus the exit code.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Outcome {
    fn fail(code: i32, msg: impl std::fmt::Display) -> Self {
        Outcome { stdout: String::new(), stderr: format!("error: {msg}\n"), code }
    }

    fn absorb(&mut self, other: Outcome) {
        self.stdout.push_str(&other.stdout);
        self.stderr.push_str(&other.stderr);
        self.code = self.code.max(other.code);
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let outcome = match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                Outcome { stderr: text, code, ..Outcome::default() }
            } else {
                Outcome { stdout: text, code, ..Outcome::default() }
            }
        }
    };
    // Broken pipes are not worth a different exit code.
    let _ = out.write_all(outcome.stdout.as_bytes());
    let _ = err.write_all(outcome.stderr.as_bytes());
    outcome.code
}

pub fn execute(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { grammar, mtheory } => cmd_validate(grammar.as_deref(), mtheory.as_deref()),
        Command::Parse { input, all } => {
            let grammar = match read_grammar(&input.grammar) {
                Ok(g) => g,
                Err(o) => return o,
            };
            over_sentences(input, |tokens| cmd_parse(&grammar, tokens, input.format, *all))
        }
        Command::Sparse { input, mtheory, mode, trace, depth_limit } => {
            let grammar = match read_grammar(&input.grammar) {
                Ok(g) => g,
                Err(o) => return o,
            };
            let theory = match read_mtheory(mtheory) {
                Ok(t) => t,
                Err(o) => return o,
            };
            let parser = match SemanticParser::new(&grammar, &theory) {
                Ok(p) => p,
                Err(e) => return Outcome::fail(EXIT_INPUT, e),
            };
            let options = SemanticOptions { mode: *mode, depth_limit: *depth_limit, symmetric: false };
            over_sentences(input, |tokens| cmd_sparse(&parser, tokens, &options, input.format, *trace))
        }
        Command::Query { mtheory, variable, args, evidence, format, depth_limit } => {
            let theory = match read_mtheory(mtheory) {
                Ok(t) => t,
                Err(o) => return o,
            };
            cmd_query(&theory, variable, args, evidence, *format, *depth_limit)
        }
    }
}

fn read(path: &Path) -> Result<String, Outcome> {
    std::fs::read_to_string(path).map_err(|e| Outcome::fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn read_grammar(path: &Path) -> Result<Pcfg, Outcome> {
    load_grammar(&read(path)?).map_err(|e| Outcome::fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn read_mtheory(path: &Path) -> Result<MTheory, Outcome> {
    load_mtheory(&read(path)?).map_err(|e| Outcome::fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// Normalization problems and MTheory violations are reported with exit 1;
/// unreadable or malformed files exit 2.
pub fn cmd_validate(grammar: Option<&Path>, mtheory: Option<&Path>) -> Outcome {
    if grammar.is_none() && mtheory.is_none() {
        return Outcome::fail(EXIT_INPUT, "nothing to validate: pass --grammar and/or --mtheory");
    }
    let mut problems = Vec::new();
    if let Some(path) = grammar {
        let g = match read_grammar(path) {
            Ok(g) => g,
            Err(o) => return o,
        };
        problems.extend(g.validate_normalization().iter().map(|v| format!("{}: {v}", path.display())));
    }
    if let Some(path) = mtheory {
        match load_mtheory(&match read(path) {
            Ok(t) => t,
            Err(o) => return o,
        }) {
            Ok(_) => {}
            Err(MebnError::Invalid(vs)) => problems.extend(vs.iter().map(|v| format!("{}: {v}", path.display()))),
            Err(e) => return Outcome::fail(EXIT_INPUT, format!("{}: {e}", path.display())),
        }
    }
    if problems.is_empty() {
        Outcome { stdout: "OK\n".into(), ..Outcome::default() }
    } else {
        let mut stdout = String::new();
        for p in &problems {
            let _ = writeln!(stdout, "{p}");
        }
        Outcome { stdout, code: EXIT_FAILURE, ..Outcome::default() }
    }
}

/// Runs `f` on the positional sentence or on every non-blank batch line.
/// Batch lines are independent and processed in parallel; output keeps
/// file order.
fn over_sentences(input: &SentenceArgs, f: impl Fn(&[&str]) -> Outcome + Sync) -> Outcome {
    let Some(path) = &input.batch else {
        let joined = input.sentence.join(" ");
        let tokens: Vec<&str> = joined.split_whitespace().collect();
        return f(&tokens);
    };
    let text = match read(path) {
        Ok(t) => t,
        Err(o) => return o,
    };
    let lines: Vec<(usize, &str)> =
        text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| (i + 1, l)).collect();
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(lines.len().max(1));
    let chunk = lines.len().div_ceil(workers).max(1);
    let results: Vec<Outcome> = thread::scope(|s| {
        let handles: Vec<_> = lines
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || {
                    part.iter()
                        .map(|(n, line)| {
                            let tokens: Vec<&str> = line.split_whitespace().collect();
                            let mut o = f(&tokens);
                            if !o.stderr.is_empty() {
                                o.stderr = format!("line {n}: {}", o.stderr.trim_start_matches("error: "));
                            }
                            o
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("batch worker panicked")).collect()
    });
    let mut total = Outcome::default();
    for r in results {
        total.absorb(r);
    }
    total
}

fn parse_failure(e: &ParseError) -> Outcome {
    Outcome::fail(EXIT_FAILURE, e)
}

fn render(tree: &crate::chart::ParseTree, probability: f64, format: OutputFormat, out: &mut String) {
    match format {
        OutputFormat::Json => unreachable!("json output is assembled by the caller"),
        OutputFormat::Tree => {
            let _ = write!(out, "{}", render_tree(tree, TreeFormat::Ascii));
            if !out.ends_with('\n') {
                out.push('\n');
            }
        }
        OutputFormat::Bracket => {
            let _ = writeln!(out, "{}", render_tree(tree, TreeFormat::Bracketed));
        }
    }
    let _ = writeln!(out, "probability: {}", format_probability(probability));
}

fn tree_json(tree: &crate::chart::ParseTree) -> serde_json::Value {
    serde_json::from_str(&render_tree(tree, TreeFormat::Json)).expect("tree JSON is well formed")
}

pub fn cmd_parse(grammar: &Pcfg, tokens: &[&str], format: OutputFormat, all: bool) -> Outcome {
    let parses = if all {
        enumerate_parses(grammar, tokens, DEFAULT_ENUMERATION_CAP)
    } else {
        viterbi_parse(grammar, tokens).map(|p| vec![p])
    };
    let parses = match parses {
        Ok(p) => p,
        Err(e) => return parse_failure(&e),
    };
    let mut stdout = String::new();
    if format == OutputFormat::Json {
        let items: Vec<_> = parses.iter().map(|(t, p)| json!({"tree": tree_json(t), "probability": p})).collect();
        let value = if all { serde_json::Value::Array(items) } else { items.into_iter().next().unwrap_or_default() };
        let _ = writeln!(stdout, "{value}");
    } else {
        for (k, (tree, p)) in parses.iter().enumerate() {
            if all {
                let _ = writeln!(stdout, "# parse {}", k + 1);
            }
            render(tree, *p, format, &mut stdout);
        }
    }
    Outcome { stdout, ..Outcome::default() }
}

pub fn cmd_sparse(
    parser: &SemanticParser<'_>,
    tokens: &[&str],
    options: &SemanticOptions,
    format: OutputFormat,
    trace: bool,
) -> Outcome {
    let result = match parser.parse(tokens, options) {
        Ok(r) => r,
        Err(e @ (SemanticError::Query { .. } | SemanticError::Bridge(_))) => return Outcome::fail(EXIT_INPUT, e),
        Err(e) => return Outcome::fail(EXIT_FAILURE, e),
    };
    let trace_json = serde_json::to_value(&result.trace).expect("trace serializes");
    let mut stdout = String::new();
    if format == OutputFormat::Json {
        let mut value = json!({"tree": tree_json(&result.tree), "probability": result.probability});
        if trace {
            value["trace"] = trace_json;
        }
        let _ = writeln!(stdout, "{value}");
    } else {
        render(&result.tree, result.probability, format, &mut stdout);
        if trace {
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&trace_json).expect("trace serializes"));
        }
    }
    Outcome { stdout, ..Outcome::default() }
}

fn parse_evidence(text: &str) -> Result<(GroundedVar, String), MebnError> {
    let (var, state) = text
        .rsplit_once('=')
        .ok_or_else(|| MebnError::Syntax(format!("evidence '{text}' is not of the form var(args)=STATE")))?;
    let state = state.trim();
    if state.is_empty() {
        return Err(MebnError::Syntax(format!("evidence '{text}' has no state")));
    }
    Ok((var.parse()?, state.to_string()))
}

pub fn cmd_query(
    theory: &MTheory,
    variable: &str,
    args: &[String],
    evidence: &[String],
    format: OutputFormat,
    depth_limit: usize,
) -> Outcome {
    let result = (|| {
        let mut query: GroundedVar = variable.parse()?;
        if !args.is_empty() {
            if !query.args.is_empty() {
                return Err(MebnError::Syntax("arguments given both inline and separately".into()));
            }
            query.args = args.to_vec();
        }
        let evidence = evidence.iter().map(|e| parse_evidence(e)).collect::<Result<Vec<_>, _>>()?;
        let (states, dist) = query_posterior(theory, &query, &evidence, depth_limit)?;
        Ok((query, states, dist))
    })();
    let (query, states, dist) = match result {
        Ok(r) => r,
        Err(e) => return Outcome::fail(EXIT_INPUT, e),
    };
    let mut stdout = String::new();
    if format == OutputFormat::Json {
        let value = json!({"variable": query.to_string(), "states": states, "posterior": dist});
        let _ = writeln!(stdout, "{value}");
    } else {
        let _ = writeln!(stdout, "{query}");
        for (s, p) in states.iter().zip(&dist) {
            let _ = writeln!(stdout, "{s}\t{}", format_probability(*p));
        }
    }
    Outcome { stdout, ..Outcome::default() }
}
