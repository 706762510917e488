//! Command-line front end: disassemble, trace, scan, generate policies,
//! load under a policy, explain policy entries and measure overhead.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pickleward::cache::ClassCache;
use pickleward::container::read_pickle;
use pickleward::name::qn;
use pickleward::opcode::{self, OpcodeStream};
use pickleward::policy::{read_policy, write_policy, Policy};
use pickleward::tracer::{self, Denylist, Verdict};
use pickleward::vm::{assert_no_stubs, execute, VmConfig};
use pickleward::{bench, gen, index};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 2;
const EXIT_FLAGGED: u8 = 3;
const EXIT_VIOLATION: u8 = 4;
const EXIT_STUBS: u8 = 5;

/// Environment variable naming a user class-cache directory, used when
/// `gen-policy` is run without `--cache`.
const CACHE_ENV: &str = "PICKLEWARD_CACHE";

#[derive(Parser)]
#[command(name = "pickleward", version, about = "Policy-enforcing pickle loader and policy generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Print an opcode listing.
    Disassemble {
        file: PathBuf,
        /// Pickle member to read from a ZIP container.
        #[arg(long)]
        member: Option<String>,
    },
    /// Statically list the callables pickles import and invoke.
    Trace {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        member: Option<String>,
    },
    /// Check pickles against a denylist of callables.
    Scan {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Denylist file; the built-in baseline list when omitted.
        #[arg(long)]
        denylist: Option<PathBuf>,
        #[arg(long)]
        member: Option<String>,
    },
    /// Generate a loading policy from library sources.
    GenPolicy {
        /// Directory holding the package sources.
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        package: String,
        /// Qualified name of the root model class.
        #[arg(long)]
        class: String,
        /// Directory of user-supplied class-cache entries.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Load a pickle in the restricted machine under a policy.
    Load {
        file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Also fail when the loaded object contains stubs.
        #[arg(long)]
        strict: bool,
        /// Write the canonical dump of the loaded object here.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        member: Option<String>,
    },
    /// Print how a name came to be allowed by a policy.
    Explain {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Compare restricted and unrestricted load times.
    Bench {
        file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        #[arg(long)]
        member: Option<String>,
    },
}

/// A failure that ends the command with the given exit status.
struct Exit(u8, String);

fn fail(e: impl std::fmt::Display) -> Exit {
    Exit(EXIT_ERROR, e.to_string())
}

/// Writes to stdout; a closed pipe (as with `| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn read_stream(path: &Path, member: Option<&str>) -> Result<OpcodeStream, Exit> {
    let raw = read_pickle(path, member).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    opcode::parse(&raw).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path) -> Result<Policy, Exit> {
    read_policy(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<u8, Exit> {
    match command {
        Command::Disassemble { file, member } => {
            let stream = read_stream(&file, member.as_deref())?;
            emit(&opcode::disassemble(&stream));
            Ok(EXIT_OK)
        }
        Command::Trace { files, format, member } => {
            let many = files.len() > 1;
            let mut docs = Vec::new();
            for file in &files {
                let report = tracer::trace(&read_stream(file, member.as_deref())?);
                match format {
                    Format::Text if many => emit(&format!("== {}\n{}", file.display(), report.to_text())),
                    Format::Text => emit(&report.to_text()),
                    Format::Structured => docs.push(report.to_json().trim_end().to_string()),
                }
            }
            match docs.len() {
                0 => {}
                1 => emit(&format!("{}\n", docs[0])),
                _ => emit(&format!("[\n{}\n]\n", docs.join(",\n"))),
            }
            Ok(EXIT_OK)
        }
        Command::Scan { files, denylist, member } => {
            let list = match denylist {
                Some(p) => Denylist::read(&p).map_err(|e| fail(format!("{}: {e}", p.display())))?,
                None => Denylist::baseline(),
            };
            let many = files.len() > 1;
            let mut code = EXIT_OK;
            for file in &files {
                let prefix = if many { format!("{}: ", file.display()) } else { String::new() };
                match tracer::scan(&read_stream(file, member.as_deref())?, &list) {
                    Verdict::Clean => emit(&format!("{prefix}clean\n")),
                    Verdict::Flagged(names) => {
                        code = EXIT_FLAGGED;
                        for n in names {
                            emit(&format!("{prefix}flagged: {n}\n"));
                        }
                    }
                }
            }
            Ok(code)
        }
        Command::GenPolicy { library, package, class, cache, output } => {
            let cache = match cache.or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from)) {
                Some(dir) => ClassCache::with_user_dir(&dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?,
                None => ClassCache::standard(),
            };
            let index = index::index_library(&library, &package).map_err(fail)?;
            for e in &index.errors {
                eprintln!("warning: {}:{}: {}", e.path, e.line, e.message);
            }
            let policy = gen::generate(&index, &cache, &qn(&class)).map_err(fail)?;
            for w in policy.warnings() {
                eprintln!("warning: {w}");
            }
            write_policy(&policy, &output).map_err(|e| fail(format!("{}: {e}", output.display())))?;
            Ok(EXIT_OK)
        }
        Command::Load { file, policy, strict, dump, member } => {
            let stream = read_stream(&file, member.as_deref())?;
            let policy = load_policy(&policy)?;
            let outcome = match execute(&stream, &VmConfig::restricted(&policy)) {
                Ok(o) => o,
                Err(f) if f.error.is_security_violation() => {
                    return Err(Exit(EXIT_VIOLATION, format!("{}: {}", f.error.class_name(), f.error)));
                }
                Err(f) => return Err(Exit(EXIT_ERROR, format!("{}: {}", f.error.class_name(), f.error))),
            };
            let stubs = outcome.list_stubs();
            for (path, name) in &stubs {
                eprintln!("stub: {path} -> {name}");
            }
            if strict {
                assert_no_stubs(&outcome).map_err(|e| Exit(EXIT_STUBS, format!("StubsPresent: {e}")))?;
            }
            if let Some(path) = dump {
                std::fs::write(&path, outcome.canonical_dump()).map_err(|e| fail(format!("{}: {e}", path.display())))?;
            }
            emit(&format!(
                "loaded: {} opcodes, {} stub(s), {} invocation(s)\n",
                outcome.stats.opcodes_executed,
                stubs.len(),
                outcome.trace.invocations.len()
            ));
            Ok(EXIT_OK)
        }
        Command::Explain { policy, name } => {
            let policy = load_policy(&policy)?;
            emit(&gen::explain_text(&policy, &qn(&name)).map_err(fail)?);
            Ok(EXIT_OK)
        }
        Command::Bench { file, policy, iterations, member } => {
            let stream = read_stream(&file, member.as_deref())?;
            let policy = load_policy(&policy)?;
            let report = bench::bench(&stream, &policy, iterations.max(1)).map_err(|f| {
                let code = if f.error.is_security_violation() { EXIT_VIOLATION } else { EXIT_ERROR };
                Exit(code, format!("{}: {}", f.error.class_name(), f.error))
            })?;
            emit(&report.to_text());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
