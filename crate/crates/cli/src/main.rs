use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use clinspan::corpus::{
    label_distribution, split, validate, write_doccano, Corpus, Fraction, IngestOptions,
    OverlapPolicy, SplitAssignment, SplitName, SplitSpec,
};
use clinspan::evaluate::ComparisonReport;
use clinspan::gazetteer::{load_dictionary, CompiledMatcher, DictionaryWarning};
use clinspan::pipeline::{self, PipelineError};
use clinspan::predict::write_entities;
use clinspan::preprocess::PassConfig;
use clinspan::report::{self, Format};
use clinspan::tagcodec::{export_conll, import_conll};

/// Clinical NER corpus toolkit: ingest Doccano exports, preprocess with
/// offset maps, convert to and from CoNLL, tag with a dictionary, aggregate
/// model predictions and evaluate with strict entity matching.
///
/// Exit status: 0 on success, 1 when input data is invalid, 2 on usage
/// errors (bad flags, missing files).
#[derive(Parser)]
#[command(name = "clinspan", version)]
struct Cli {
    /// Worker threads for per-document work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct IngestArgs {
    /// Doccano JSONL export.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// On overlapping gold spans keep the longer one instead of failing.
    #[arg(long)]
    keep_longer: bool,
    /// Drop spans with labels outside the label set instead of failing.
    #[arg(long)]
    ignore_unknown_labels: bool,
}

impl IngestArgs {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            overlaps: if self.keep_longer {
                OverlapPolicy::KeepLonger
            } else {
                OverlapPolicy::Abort
            },
            ignore_unknown_labels: self.ignore_unknown_labels,
        }
    }
}

#[derive(Args)]
struct PassArgs {
    /// Preprocessing passes: `all`, `none`, or a comma list of
    /// nfc,spaces,dehyphenate,newlines,bullets,staging.
    #[arg(long, default_value = "all", value_parser = parse_passes)]
    passes: PassConfig,
}

fn parse_passes(s: &str) -> Result<PassConfig, String> {
    s.parse()
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertTarget {
    Conll,
    Doccano,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Md,
    Txt,
}

impl From<TableFormat> for Format {
    fn from(f: TableFormat) -> Self {
        match f {
            TableFormat::Csv => Format::Csv,
            TableFormat::Md => Format::Markdown,
            TableFormat::Txt => Format::Text,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a Doccano export; optionally write it back normalized.
    Ingest {
        #[command(flatten)]
        ingest: IngestArgs,
        /// Where to write the normalized corpus.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Check a corpus and list every broken invariant.
    Validate {
        #[command(flatten)]
        ingest: IngestArgs,
    },
    /// Gold span counts per label, optionally per split.
    Stats {
        /// Whole corpus (when no split files are given).
        #[arg(long = "in", value_name = "FILE", required_unless_present = "train")]
        input: Option<PathBuf>,
        #[arg(long, value_name = "FILE", requires_all = ["val", "test"])]
        train: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        val: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        test: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "txt")]
        format: TableFormat,
    },
    /// Split a corpus into train, validation and test files.
    Split {
        #[command(flatten)]
        ingest: IngestArgs,
        /// Fractions as decimals (`0.25`) or ratios (`1/4`); must sum to 1.
        #[arg(long, default_value = "0.5")]
        train: Fraction,
        #[arg(long, default_value = "0.25")]
        val: Fraction,
        #[arg(long, default_value = "0.25")]
        test: Fraction,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Ignore document categories when splitting.
        #[arg(long)]
        no_stratify: bool,
        /// Output directory (default: next to the input), files
        /// `<stem>.train.jsonl`, `<stem>.validation.jsonl`, `<stem>.test.jsonl`.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Normalize texts and project gold spans onto the clean text.
    Preprocess {
        #[command(flatten)]
        ingest: IngestArgs,
        #[command(flatten)]
        passes: PassArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Convert between Doccano JSONL and two-column CoNLL.
    Convert {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Output format; the input is the other one.
        #[arg(long, value_enum, default_value = "conll")]
        to: ConvertTarget,
    },
    /// Tag a corpus with a dictionary.
    Tag {
        /// CSV with header `surface,label,category_path`.
        #[arg(long, value_name = "FILE")]
        dict: PathBuf,
        #[command(flatten)]
        ingest: IngestArgs,
        #[command(flatten)]
        passes: PassArgs,
        /// Predicted entities, one JSON object per document.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Turn model token predictions into entities.
    Aggregate {
        /// Prediction interchange file.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Corpus the predictions refer to; required for clean coordinates.
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        passes: PassArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Strict evaluation against a gold corpus; writes DIR/evaluation.json.
    Evaluate {
        /// Gold Doccano corpus.
        #[arg(long, value_name = "FILE")]
        gold: PathBuf,
        /// Predicted entities.
        #[arg(long, value_name = "FILE", required_unless_present = "interchange")]
        pred: Option<PathBuf>,
        /// Token predictions; adds word accuracy and loss, and supplies the
        /// entities when `--pred` is absent.
        #[arg(long, value_name = "FILE")]
        interchange: Option<PathBuf>,
        #[command(flatten)]
        passes: PassArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Real / correct / incorrect counts and the hit fraction.
    Compare {
        #[arg(
            long,
            value_name = "FILE",
            requires = "pred",
            conflicts_with = "tallies"
        )]
        gold: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        pred: Option<PathBuf>,
        /// CSV `label,real,correct,incorrect` of externally counted results.
        #[arg(long, value_name = "FILE", required_unless_present = "gold")]
        tallies: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "txt")]
        format: TableFormat,
        /// Also write chart data here.
        #[arg(long, value_name = "DIR")]
        charts: Option<PathBuf>,
    },
    /// Render tables and chart data from an evaluation directory.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "txt")]
        format: TableFormat,
        /// Write the tables here instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        charts: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Data(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{}: no such file", path.display())))
    }
}

fn require_dir(path: &Path) -> Outcome {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{}: no such directory",
            path.display()
        )))
    }
}

fn load(ingest: &IngestArgs) -> Result<Corpus, Failure> {
    require_file(&ingest.input)?;
    let (corpus, warnings) = pipeline::read_corpus(&ingest.input, &ingest.options())?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(corpus)
}

fn write_corpus(path: &Path, corpus: &Corpus) -> Outcome {
    pipeline::write_file(path, |w| write_doccano(corpus, w))?;
    Ok(())
}

fn ingest(args: &IngestArgs, out: Option<&Path>) -> Outcome {
    let corpus = load(args)?;
    let violations = validate(&corpus);
    if let Some(v) = violations.first() {
        return Err(Failure::Data(anyhow!("{v}")));
    }
    if let Some(out) = out {
        write_corpus(out, &corpus)?;
    }
    eprintln!("{} documents, {} spans", corpus.len(), corpus.span_count());
    Ok(())
}

fn validate_cmd(args: &IngestArgs) -> Outcome {
    let corpus = load(args)?;
    let violations = validate(&corpus);
    for v in &violations {
        eprintln!("{v}");
    }
    if violations.is_empty() {
        eprintln!(
            "ok: {} documents, {} spans",
            corpus.len(),
            corpus.span_count()
        );
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("{} violation(s)", violations.len())))
    }
}

fn read_plain(path: &Path) -> Result<Corpus, Failure> {
    require_file(path)?;
    Ok(pipeline::read_corpus(path, &IngestOptions::default())?.0)
}

fn stats(input: Option<&Path>, parts: Option<[&Path; 3]>, format: TableFormat) -> Outcome {
    let dist = match (input, parts) {
        (_, Some(paths)) => {
            let mut docs = Vec::new();
            let mut pairs = Vec::new();
            for (name, path) in SplitName::ALL.iter().zip(paths) {
                let part = read_plain(path)?;
                pairs.extend(part.documents.iter().map(|d| (d.id().to_string(), *name)));
                docs.extend(part.documents);
            }
            let assignment =
                SplitAssignment::from_pairs(pairs.iter().map(|(id, n)| (id.as_str(), *n)));
            label_distribution(&Corpus::new(docs), Some(&assignment))
                .map_err(|e| Failure::Data(e.into()))?
        }
        (Some(path), None) => {
            label_distribution(&read_plain(path)?, None).map_err(|e| Failure::Data(e.into()))?
        }
        (None, None) => return Err(Failure::Usage("give --in or --train/--val/--test".into())),
    };
    print!(
        "{}",
        report::distribution_table(&dist).render(format.into())
    );
    Ok(())
}

fn split_cmd(args: &IngestArgs, spec: SplitSpec, out_dir: Option<&Path>) -> Outcome {
    spec.check().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = load(args)?;
    let parts = split(&corpus, &spec).map_err(|e| Failure::Data(e.into()))?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| args.input.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let stem = args
        .input
        .file_stem()
        .map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned());
    for name in SplitName::ALL {
        let path = dir.join(format!("{stem}.{name}.jsonl"));
        write_corpus(&path, parts.get(name))?;
        eprintln!("{}: {} documents", path.display(), parts.get(name).len());
    }
    Ok(())
}

fn preprocess_cmd(args: &IngestArgs, passes: &PassConfig, out: &Path) -> Outcome {
    let corpus = load(args)?;
    let (clean, dropped) = pipeline::preprocess_corpus(&corpus, passes);
    for (id, s) in &dropped {
        eprintln!(
            "warning: document `{id}`: span [{}, {}, {}] does not survive preprocessing",
            s.start, s.end, s.label
        );
    }
    write_corpus(out, &clean)
}

fn convert(input: &Path, out: &Path, to: ConvertTarget) -> Outcome {
    require_file(input)?;
    match to {
        ConvertTarget::Conll => {
            let corpus = read_plain(input)?;
            let (seqs, warnings) = pipeline::corpus_to_conll(&corpus)?;
            if warnings.partial_tokens > 0 || warnings.lost_spans > 0 {
                eprintln!(
                    "warning: {} partially covered token(s) expanded, {} span(s) without tokens",
                    warnings.partial_tokens, warnings.lost_spans
                );
            }
            pipeline::write_file(out, |w| export_conll(&seqs, w))?;
        }
        ConvertTarget::Doccano => {
            let seqs = import_conll(pipeline::open(input)?)
                .with_context(|| input.display().to_string())?;
            write_corpus(out, &pipeline::conll_to_corpus(&seqs))?;
        }
    }
    Ok(())
}

fn tag(dict: &Path, args: &IngestArgs, passes: &PassConfig, out: &Path) -> Outcome {
    require_file(dict)?;
    let (dictionary, warnings) =
        load_dictionary(pipeline::open(dict)?).with_context(|| dict.display().to_string())?;
    for DictionaryWarning::Merged {
        line,
        surface,
        label,
    } in warnings
    {
        eprintln!(
            "warning: {}:{line}: duplicate `{surface}` ({label}) merged",
            dict.display()
        );
    }
    let matcher = CompiledMatcher::new(&dictionary).map_err(|e| Failure::Data(e.into()))?;
    let corpus = load(args)?;
    let docs = pipeline::tag_corpus(&matcher, &corpus, passes);
    pipeline::write_file(out, |w| write_entities(&docs, w))?;
    Ok(())
}

fn aggregate(input: &Path, corpus: Option<&Path>, passes: &PassConfig, out: &Path) -> Outcome {
    require_file(input)?;
    let corpus = corpus.map(read_plain).transpose()?;
    let sets = pipeline::read_predictions(input)?;
    let docs = pipeline::entities_from_predictions(&sets, corpus.as_ref(), passes)?;
    pipeline::write_file(out, |w| write_entities(&docs, w))?;
    Ok(())
}

fn evaluate_cmd(
    gold: &Path,
    pred: Option<&Path>,
    interchange: Option<&Path>,
    passes: &PassConfig,
    out: &Path,
) -> Outcome {
    let corpus = read_plain(gold)?;
    let sets = match interchange {
        Some(p) => {
            require_file(p)?;
            Some(pipeline::read_predictions(p)?)
        }
        None => None,
    };
    let entities = match (pred, &sets) {
        (Some(p), _) => {
            require_file(p)?;
            pipeline::read_entities(p)?
        }
        (None, Some(sets)) => pipeline::entities_from_predictions(sets, Some(&corpus), passes)?,
        (None, None) => return Err(Failure::Usage("give --pred or --interchange".into())),
    };
    let scores = sets
        .as_ref()
        .map(|s| pipeline::word_scores(s, &corpus, passes))
        .transpose()?;
    let eval = pipeline::evaluate_entities(&corpus, &entities, scores)?;
    pipeline::write_evaluation(out, &eval)?;
    eprint!("{}", report::summary(&eval));
    Ok(())
}

fn read_tallies(path: &Path) -> Result<ComparisonReport, Failure> {
    require_file(path)?;
    let mut reader = csv::Reader::from_reader(pipeline::open(path)?);
    let mut rows: Vec<(String, u64, u64, u64)> = Vec::new();
    for record in reader.deserialize() {
        let row: (String, u64, u64, u64) =
            record.with_context(|| format!("{}: bad tally row", path.display()))?;
        rows.push(row);
    }
    let borrowed: Vec<(&str, u64, u64, u64)> = rows
        .iter()
        .map(|(n, a, b, c)| (n.as_str(), *a, *b, *c))
        .collect();
    Ok(ComparisonReport::from_tallies(&borrowed))
}

fn print_charts(dir: &Path, comparison: &ComparisonReport) -> Outcome {
    for notice in pipeline::write_charts(dir, comparison)? {
        eprintln!("notice: {notice}");
    }
    Ok(())
}

fn compare(
    gold: Option<&Path>,
    pred: Option<&Path>,
    tallies: Option<&Path>,
    format: TableFormat,
    charts: Option<&Path>,
) -> Outcome {
    let comparison = match (gold, pred, tallies) {
        (Some(g), Some(p), None) => {
            let corpus = read_plain(g)?;
            require_file(p)?;
            let entities = pipeline::read_entities(p)?;
            pipeline::evaluate_entities(&corpus, &entities, None)?.comparison
        }
        (None, None, Some(t)) => read_tallies(t)?,
        _ => {
            return Err(Failure::Usage(
                "give --gold and --pred, or --tallies".into(),
            ))
        }
    };
    let mut stdout = io::stdout().lock();
    write!(
        stdout,
        "{}",
        report::comparison_table(&comparison).render(format.into())
    )?;
    match comparison
        .hit_ratio()
        .and_then(|(h, t)| report::pie_tenths(h, t).map(|p| (h, t, p)))
    {
        Some((h, t, (hit, miss))) => writeln!(
            stdout,
            "hits {h}/{t}: {}.{}% hits, {}.{}% misses",
            hit / 10,
            hit % 10,
            miss / 10,
            miss % 10
        )?,
        None => writeln!(stdout, "hit fraction: n/a")?,
    }
    if let Some(dir) = charts {
        print_charts(dir, &comparison)?;
    }
    Ok(())
}

fn report_cmd(
    input: &Path,
    format: TableFormat,
    out: Option<&Path>,
    charts: Option<&Path>,
) -> Outcome {
    require_dir(input)?;
    let eval = pipeline::read_evaluation(input)?;
    let tables = report::render_tables(&eval, format.into());
    match out {
        Some(path) => pipeline::write_file(path, |w| w.write_all(tables.as_bytes()))?,
        None => io::stdout().lock().write_all(tables.as_bytes())?,
    }
    if let Some(dir) = charts {
        print_charts(dir, &eval.comparison)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Data(e.into()))?;
    }
    match &cli.command {
        Command::Ingest { ingest: a, out } => ingest(a, out.as_deref()),
        Command::Validate { ingest: a } => validate_cmd(a),
        Command::Stats {
            input,
            train,
            val,
            test,
            format,
        } => {
            let parts = match (train, val, test) {
                (Some(a), Some(b), Some(c)) => Some([a.as_path(), b.as_path(), c.as_path()]),
                (None, None, None) => None,
                _ => {
                    return Err(Failure::Usage(
                        "give all of --train, --val and --test".into(),
                    ))
                }
            };
            stats(input.as_deref(), parts, *format)
        }
        Command::Split {
            ingest: a,
            train,
            val,
            test,
            seed,
            no_stratify,
            out_dir,
        } => {
            let mut spec = SplitSpec::new(*train, *val, *test, *seed);
            spec.stratify_by_category = !no_stratify;
            split_cmd(a, spec, out_dir.as_deref())
        }
        Command::Preprocess {
            ingest: a,
            passes,
            out,
        } => preprocess_cmd(a, &passes.passes, out),
        Command::Convert { input, out, to } => convert(input, out, *to),
        Command::Tag {
            dict,
            ingest: a,
            passes,
            out,
        } => tag(dict, a, &passes.passes, out),
        Command::Aggregate {
            input,
            corpus,
            passes,
            out,
        } => aggregate(input, corpus.as_deref(), &passes.passes, out),
        Command::Evaluate {
            gold,
            pred,
            interchange,
            passes,
            out,
        } => evaluate_cmd(
            gold,
            pred.as_deref(),
            interchange.as_deref(),
            &passes.passes,
            out,
        ),
        Command::Compare {
            gold,
            pred,
            tallies,
            format,
            charts,
        } => compare(
            gold.as_deref(),
            pred.as_deref(),
            tallies.as_deref(),
            *format,
            charts.as_deref(),
        ),
        Command::Report {
            input,
            format,
            out,
            charts,
        } => report_cmd(input, *format, out.as_deref(), charts.as_deref()),
    }
}

// Error chain on one line; library errors already embed their source in
// their own message, so repeated text is skipped.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
