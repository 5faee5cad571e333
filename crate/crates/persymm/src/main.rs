use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use persymm::cache::{DistCache, OracleMemo};
use persymm::oracle::{
    enumerate_unbounded, measure_throughput, oracle_count_solutions, EnumerationBudget,
};
use persymm::report::{emit, rows_for, Format};
use persymm::verify::{default_grid, Verifier, VerifyReport};
use persymm_core::extension::extend_free_rows;
use persymm_core::reduction::{reduction_chain, resolve_closed_form, Resolved};
use persymm_core::registry::{Evaluation, RankOrigin, RegistryError, TablePolicy};
use persymm_core::solcount::{count_solutions, quadratic_system_expansion};
use persymm_core::{EquationSystemSpec, RankDistribution, Registry, StackedShape, TripleInstance};

#[derive(Parser)]
#[command(
    name = "persymm",
    version,
    about = "Exact rank distributions of stacked persymmetric matrices over GF(2)"
)]
struct Cli {
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BudgetArgs {
    /// Largest state space the oracle may enumerate, as N or 2^N.
    #[arg(long, global = true, value_parser = parse_count)]
    max_states: Option<u64>,
    /// Worker threads for enumeration.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Oracle cache file (defaults to $PERSYMM_CACHE, else none).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Rank distribution of SHAPE.
    Dist {
        #[arg(long)]
        shape: String,
        #[arg(long, value_enum, default_value_t = Method::Oracle)]
        method: Method,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
        /// Enumerate even past --max-states.
        #[arg(long)]
        force: bool,
    },
    /// Compare closed forms with the oracle or with reduction chains.
    Verify {
        /// Family id, or a shape with a registered closed form.
        #[arg(long, required_unless_present = "all", conflicts_with = "all")]
        family: Option<String>,
        #[arg(long)]
        all: bool,
        /// Column range such as 1..10 (inclusive) or a single value.
        #[arg(long, value_parser = parse_range)]
        k: Option<RangeInclusive<i64>>,
        /// Family parameter range.
        #[arg(long, value_parser = parse_range)]
        l: Option<RangeInclusive<i64>>,
        /// Oracle budget for this run, as N or 2^N (overrides --max-states).
        #[arg(long, value_parser = parse_count)]
        budget: Option<u64>,
        /// Print only failures and the summary.
        #[arg(long)]
        quiet: bool,
    },
    /// R_q from the rank distribution.
    SolveCount {
        #[arg(long)]
        shape: String,
        #[arg(long)]
        q: usize,
        /// Where the distribution comes from; `auto` uses a closed form when
        /// one is registered and the oracle otherwise.
        #[arg(long, value_enum, default_value_t = DistMethod::Auto)]
        method: DistMethod,
    },
    /// R_q by enumerating every coefficient tuple.
    OracleSolve {
        #[arg(long)]
        shape: String,
        #[arg(long)]
        q: usize,
        /// Also print the coefficient-level quadratic system.
        #[arg(long)]
        expand: bool,
    },
    /// Family listing, evaluated tables, symbolic pieces and the typo ledger.
    Table {
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        k: Option<i64>,
        #[arg(long)]
        l: Option<i64>,
        #[arg(long)]
        symbolic: bool,
        #[arg(long)]
        typos: bool,
        #[arg(long, value_enum, default_value_t = OutFormat::Md)]
        format: OutFormat,
    },
    /// Trace the reduction chain of rank I of a triple.
    Reduce {
        /// Triple as s,m,l.
        #[arg(long = "smL", value_parser = parse_sml, required_unless_present = "shape")]
        sml: Option<(usize, usize, usize)>,
        /// Triple as a shape, e.g. "[3;3;3+2]x12".
        #[arg(long, conflicts_with = "sml")]
        shape: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        i: usize,
    },
    /// Single-worker oracle throughput in states per second.
    Bench {
        #[arg(long)]
        shape: String,
        /// States to time, as N or 2^N.
        #[arg(long, value_parser = parse_count, default_value = "2^24")]
        states: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Oracle,
    Formula,
    Extension,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistMethod {
    Auto,
    Oracle,
    Formula,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Text,
    Md,
    Csv,
    Json,
}

/// Bad input (exit 2) or a failed computation or check (exit 1).
enum Failure {
    Usage(anyhow::Error),
    Failed(anyhow::Error),
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Failed(e)
    }
}

fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Some(e) = s.strip_prefix("2^") {
        let e: u32 = e.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
        return 1u64
            .checked_shl(e)
            .filter(|_| e < 64)
            .ok_or_else(|| format!("{s} does not fit in 64 bits"));
    }
    let n: u64 = s.parse().map_err(|_| format!("expected N or 2^N, got {s:?}"))?;
    if n == 0 {
        return Err("must be at least 1".into());
    }
    Ok(n)
}

fn parse_range(s: &str) -> Result<RangeInclusive<i64>, String> {
    let bad = || format!("expected A..B or a single integer, got {s:?}");
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let a: i64 = a.trim().parse().map_err(|_| bad())?;
    let b: i64 = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok(a..=b)
}

fn parse_sml(s: &str) -> Result<(usize, usize, usize), String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected s,m,l, got {s:?}"))?;
    match v[..] {
        [s, m, l] if s >= 1 => Ok((s, m, l)),
        _ => Err(format!("expected s,m,l with s >= 1, got {s:?}")),
    }
}

fn parse_shape(text: &str) -> Result<StackedShape, Failure> {
    StackedShape::parse(text).map_err(|e| usage(anyhow!("{e}")))
}

fn registry_failure(e: RegistryError) -> Failure {
    match e {
        RegistryError::UnknownFamily(_)
        | RegistryError::ParamRequired { .. }
        | RegistryError::UnexpectedParam { .. }
        | RegistryError::ParamOutOfRange { .. }
        | RegistryError::FixedColumns { .. } => usage(e),
        other => Failure::Failed(other.into()),
    }
}

struct Session {
    budget: EnumerationBudget,
    memo: Option<OracleMemo>,
    cache_path: Option<PathBuf>,
}

impl Session {
    fn new(args: &BudgetArgs) -> Result<Self, Failure> {
        let mut budget = EnumerationBudget::default();
        if let Some(m) = args.max_states {
            budget = budget.with_max_states(m);
        }
        if let Some(w) = args.workers {
            if w == 0 {
                return Err(usage(anyhow!("--workers must be at least 1")));
            }
            budget = budget.with_workers(w);
        }
        let cache_path = args
            .cache
            .clone()
            .or_else(|| std::env::var_os(persymm::cache::CACHE_ENV).map(PathBuf::from))
            .filter(|p| !p.as_os_str().is_empty());
        Ok(Self {
            budget,
            memo: None,
            cache_path,
        })
    }

    fn memo(&mut self) -> anyhow::Result<OracleMemo> {
        if let Some(m) = self.memo.take() {
            return Ok(m);
        }
        let disk = match &self.cache_path {
            Some(p) => Some(DistCache::open(p)?),
            None => None,
        };
        Ok(OracleMemo::new(disk))
    }

    fn oracle(&mut self, shape: &StackedShape) -> anyhow::Result<RankDistribution> {
        let mut memo = self.memo()?;
        let r = memo.distribution(shape, &self.budget);
        self.memo = Some(memo);
        Ok(r?)
    }
}

fn origin_label(o: &RankOrigin) -> String {
    match o {
        RankOrigin::Table { anchor } => anchor.clone(),
        RankOrigin::Piece { line, anchor } => format!("{anchor} (families.txt:{line})"),
        RankOrigin::Complement => "complement of the lower ranks".into(),
    }
}

fn anchors(e: &Evaluation) -> Vec<String> {
    e.origins.iter().map(origin_label).collect()
}

fn print_dist(dist: &RankDistribution, anchors: Option<&[String]>, format: OutFormat) {
    let rows = rows_for(dist, anchors);
    match format {
        OutFormat::Text => {
            println!("{} ({})", dist.shape_str(), dist.source());
            let w = rows.iter().map(|r| r.count.len()).max().unwrap_or(1);
            for r in &rows {
                if r.anchor.is_empty() {
                    println!("{:>3}  {:>w$}", r.i, r.count);
                } else {
                    println!("{:>3}  {:>w$}  {}", r.i, r.count, r.anchor);
                }
            }
            println!("sum  {}", dist.total());
        }
        OutFormat::Md => print!("{}", emit(&rows, Format::Md)),
        OutFormat::Csv => print!("{}", emit(&rows, Format::Csv)),
        OutFormat::Json => print!("{}", emit(&rows, Format::Json)),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let registry = Registry::builtin();
    let mut ctx = Session::new(&cli.budget)?;
    match cli.command {
        Command::Dist {
            shape,
            method,
            format,
            force,
        } => {
            let shape = parse_shape(&shape)?;
            match method {
                Method::Oracle => {
                    let d = if force {
                        enumerate_unbounded(&shape, ctx.budget.workers, ctx.budget.chunk_bits)
                            .context("enumeration failed")?
                    } else {
                        ctx.oracle(&shape)?
                    };
                    print_dist(&d, None, format);
                }
                Method::Formula => {
                    let e = registry.eval_shape(&shape).map_err(registry_failure)?;
                    print_dist(&e.dist, Some(&anchors(&e)), format);
                }
                Method::Extension => {
                    let (base, t) = shape.split_trailing_free().ok_or_else(|| {
                        usage(anyhow!(
                            "{shape} has no trailing free block to extend by"
                        ))
                    })?;
                    let base_dist = match registry.eval_shape(&base) {
                        Ok(e) => e.dist,
                        Err(_) => ctx.oracle(&base)?,
                    };
                    let d = extend_free_rows(&base_dist, t, shape.cols())
                        .map_err(|e| anyhow!("{e}"))?;
                    print_dist(&d, None, format);
                }
            }
        }
        Command::Verify {
            family,
            all,
            k,
            l,
            budget,
            quiet,
        } => {
            if let Some(b) = budget {
                ctx.budget = ctx.budget.with_max_states(b);
            }
            let memo = ctx.memo()?;
            let mut verifier = Verifier::new(&registry, ctx.budget, memo);
            let report = if all {
                verifier.verify_all()
            } else {
                let target = family.expect("clap requires --family without --all");
                verify_target(&registry, &mut verifier, &target, k, l)?
            };
            print_report(&report, quiet);
            if !report.is_clean() {
                return Err(Failure::Failed(anyhow!(
                    "{} point(s) failed verification",
                    report.failure_count()
                )));
            }
        }
        Command::SolveCount { shape, q, method } => {
            let shape = parse_shape(&shape)?;
            let spec = EquationSystemSpec::new(shape.clone(), q).map_err(usage)?;
            let dist = match method {
                DistMethod::Formula => registry.eval_shape(&shape).map_err(registry_failure)?.dist,
                DistMethod::Oracle => ctx.oracle(&shape)?,
                DistMethod::Auto => match registry.eval_shape(&shape) {
                    Ok(e) => e.dist,
                    Err(_) => ctx.oracle(&shape)?,
                },
            };
            let r = count_solutions(&spec, &dist).map_err(|e| anyhow!("{e}"))?;
            println!("{r}");
        }
        Command::OracleSolve { shape, q, expand } => {
            let shape = parse_shape(&shape)?;
            let spec = EquationSystemSpec::new(shape, q).map_err(usage)?;
            if expand {
                for eq in quadratic_system_expansion(&spec) {
                    println!("{eq}");
                }
            }
            let r = oracle_count_solutions(&spec, &ctx.budget).map_err(|e| anyhow!("{e}"))?;
            println!("{r}");
        }
        Command::Table {
            family,
            k,
            l,
            symbolic,
            typos,
            format,
        } => table(&registry, family, k, l, symbolic, typos, format)?,
        Command::Reduce { sml, shape, k, i } => {
            let inst = match (sml, shape) {
                (Some((s, m, l)), _) => {
                    let k = k.ok_or_else(|| usage(anyhow!("--smL needs --k")))?;
                    TripleInstance::new(s, m, l, k)
                }
                (None, Some(text)) => {
                    let shape = parse_shape(&text)?;
                    persymm::verify::triple_of(&shape).ok_or_else(|| {
                        usage(anyhow!("{shape} is not a triple of non-decreasing heights"))
                    })?
                }
                (None, None) => unreachable!("clap requires one of --smL, --shape"),
            };
            reduce(&registry, &mut ctx, inst, i)?;
        }
        Command::Bench { shape, states } => {
            let shape = parse_shape(&shape)?;
            let rate = measure_throughput(&shape, states).map_err(|e| anyhow!("{e}"))?;
            println!("{shape}: {rate} states/s per worker");
        }
    }
    Ok(())
}

fn verify_target(
    registry: &Registry,
    verifier: &mut Verifier<'_>,
    target: &str,
    k: Option<RangeInclusive<i64>>,
    l: Option<RangeInclusive<i64>>,
) -> Result<VerifyReport, Failure> {
    if registry.family(target).is_none() {
        // a shape: verify the closed form registered for it
        let shape = StackedShape::parse(target)
            .map_err(|_| usage(anyhow!("unknown family or shape {target:?}")))?;
        let Some(&(fam, fk, fp)) = registry.lookup_shape(&shape).first() else {
            return Err(usage(anyhow!("no registered closed form for {shape}")));
        };
        let id = fam.id.clone();
        return Ok(verifier.verify_family(&id, [fk], &[fp]));
    }
    let (_, default_ks, default_ps) = default_grid(registry)
        .into_iter()
        .find(|(id, _, _)| id == target)
        .expect("every family has a default grid");
    let fam = registry.family(target).expect("checked above");
    let ks: Vec<i64> = k.map_or(default_ks, Iterator::collect);
    let ps: Vec<Option<i64>> = match (&fam.param, l) {
        (None, Some(_)) => return Err(usage(anyhow!("family {target} takes no parameter"))),
        (None, None) => vec![None],
        (Some(_), Some(r)) => r.map(Some).collect(),
        (Some(_), None) => default_ps,
    };
    Ok(verifier.verify_family(target, ks, &ps))
}

fn print_report(report: &VerifyReport, quiet: bool) {
    for p in &report.points {
        if !quiet || p.is_failure() {
            println!("{p}");
        }
    }
    println!(
        "{} verified, {} skipped, {} failed",
        report.verified_count(),
        report.skipped_count(),
        report.failure_count()
    );
}

fn table(
    registry: &Registry,
    family: Option<String>,
    k: Option<i64>,
    l: Option<i64>,
    symbolic: bool,
    typos: bool,
    format: OutFormat,
) -> Result<(), Failure> {
    if typos {
        let notes: Vec<_> = registry
            .typos()
            .iter()
            .filter(|t| family.as_ref().is_none_or(|f| &t.family == f))
            .collect();
        println!("| family | location | printed | stored | basis |");
        println!("|---|---|---|---|---|");
        for t in notes {
            println!(
                "| {} | {} | {} | {} | {} |",
                t.family, t.location, t.printed, t.stored, t.basis
            );
        }
        return Ok(());
    }
    let Some(id) = family else {
        for fam in registry.families() {
            let param = fam
                .param
                .as_ref()
                .map(|p| match p.max {
                    Some(m) => format!(" {}={}..{}", p.name, p.min, m),
                    None => format!(" {}>={}", p.name, p.min),
                })
                .unwrap_or_default();
            println!("{:<20} {}{}  {}", fam.id, fam.template.as_str(), param, fam.about);
        }
        return Ok(());
    };
    let fam = registry
        .family(&id)
        .ok_or_else(|| usage(anyhow!("unknown family {id:?}")))?;
    if symbolic {
        let text = registry.render_symbolic(&id, l).map_err(registry_failure)?;
        print!("{text}");
        return Ok(());
    }
    let k = match (k, fam.template.fixed_cols()) {
        (Some(k), _) => k,
        (None, Some(c)) => c,
        (None, None) => return Err(usage(anyhow!("family {id} needs --k (or --symbolic)"))),
    };
    let e = registry
        .evaluate(&id, k, l, TablePolicy::Prefer)
        .map_err(registry_failure)?;
    print_dist(&e.dist, Some(&anchors(&e)), format);
    Ok(())
}

fn resolved_label(r: &Resolved) -> String {
    match r {
        Resolved::ClosedForm { family } => format!("closed form {family}"),
        Resolved::FreeRows => "free rows".into(),
        Resolved::External => "oracle".into(),
    }
}

fn reduce(
    registry: &Registry,
    ctx: &mut Session,
    inst: TripleInstance,
    i: usize,
) -> Result<(), Failure> {
    let chain = reduction_chain(inst, i);
    if chain.is_empty() {
        println!("no reduction rule moves G_{i}({inst})");
    }
    for step in &chain {
        println!("{step}");
    }
    let (base, base_i, log2) = chain.last().map_or((inst, i, 0), |last| {
        let log2 = chain.iter().map(|s| s.multiplier_log2).sum();
        (last.target, last.target_i, log2)
    });
    let shape = base.shape().map_err(|e| usage(anyhow!("{e}")))?;
    let value = match resolve_closed_form(registry, base, base_i) {
        Some((v, origin)) => Some((v, resolved_label(&origin))),
        None if ctx.budget.allows(shape.free_param_count()) => {
            Some((ctx.oracle(&shape)?.get(base_i), "oracle".into()))
        }
        None => None,
    };
    match value {
        Some((v, how)) => {
            println!("base G_{base_i}({base}) = {v}   [{how}]");
            println!("G_{i}({inst}) = 2^{log2} * {v} = {}", &v << log2);
        }
        None => println!("base G_{base_i}({base}) has no closed form and exceeds the budget"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
