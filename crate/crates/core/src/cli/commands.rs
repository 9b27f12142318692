use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{
    CliError, RunConfig, SynthArgs, EXIT_DATA, EXIT_FINGERPRINT, EXIT_MISSING_INPUT, EXIT_RANGE,
    EXIT_USAGE,
};
use crate::dataset::{
    read_records_file, AttackTaxonomy, DatasetError, LabelClass, RecordReader, RecordSchema,
};
use crate::detection::{
    detect_records, detect_stream, DetectionConfig, DetectionError, EngineWarning, MatchEngine,
    WeightTable,
};
use crate::encoding::{fit_encoder, EncoderModel, EncodingError, NucleotideSequence};
use crate::parallel::Executor;
use crate::reporting::{
    score_run, series_csv, series_from_verdicts, write_alert_log, write_series_csv, AlertWriter,
    ReportError,
};
use crate::signatures::{build_database, build_group_database, SignatureDatabase, SignatureError};
use crate::synth::{write_corpus, SynthConfig};

#[derive(Debug, Clone, Copy)]
pub(super) enum Kind {
    Build,
    Detect,
    Evaluate,
    Encode,
}

pub(super) fn dispatch(kind: Kind, config: &RunConfig) -> Result<(), CliError> {
    match kind {
        Kind::Build => cmd_build(config),
        Kind::Detect => cmd_detect(config),
        Kind::Evaluate => cmd_evaluate(config),
        Kind::Encode => cmd_encode(config),
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::new(EXIT_DATA, e.to_string())
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::MissingFile(_) => EXIT_MISSING_INPUT,
            DatasetError::OutOfRange { .. } => EXIT_RANGE,
            _ => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<EncodingError> for CliError {
    fn from(e: EncodingError) -> Self {
        let code = match e {
            EncodingError::MissingFile(_) => EXIT_MISSING_INPUT,
            _ => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SignatureError> for CliError {
    fn from(e: SignatureError) -> Self {
        let code = match e {
            SignatureError::MissingFile(_) => EXIT_MISSING_INPUT,
            SignatureError::FingerprintMismatch(..) => EXIT_FINGERPRINT,
            _ => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        match e {
            DetectionError::Dataset(inner) => inner.into(),
            DetectionError::Encoding(inner) => inner.into(),
            DetectionError::FingerprintMismatch { .. } => CliError::new(EXIT_FINGERPRINT, e.to_string()),
            DetectionError::MissingFile(_) => CliError::new(EXIT_MISSING_INPUT, e.to_string()),
            _ => data(e),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Detection(inner) => inner.into(),
            ReportError::OutOfRange { .. } => CliError::new(EXIT_RANGE, e.to_string()),
            _ => data(e),
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    data(format!("{}: {e}", path.display()))
}

/// A required input path: absent flag is a usage error, absent file exit 2.
fn input<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let p = path
        .as_deref()
        .ok_or_else(|| CliError::new(EXIT_USAGE, format!("--{flag} is required")))?;
    if !p.exists() {
        return Err(CliError::new(
            EXIT_MISSING_INPUT,
            format!("missing input --{flag} {}", p.display()),
        ));
    }
    Ok(p)
}

fn output<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::new(EXIT_USAGE, format!("--{flag} is required")))
}

fn load_schema(config: &RunConfig) -> Result<RecordSchema, CliError> {
    match &config.schema {
        Some(_) => Ok(RecordSchema::load(input(&config.schema, "schema")?)?),
        None => Ok(RecordSchema::kdd_default()),
    }
}

fn load_taxonomy(config: &RunConfig) -> Result<AttackTaxonomy, CliError> {
    match &config.taxonomy {
        Some(_) => Ok(AttackTaxonomy::load(input(&config.taxonomy, "taxonomy")?)?),
        None => Ok(AttackTaxonomy::kdd_default()),
    }
}

fn detection_config(config: &RunConfig) -> Result<DetectionConfig, CliError> {
    let weights = match &config.weights {
        Some(_) => WeightTable::load(input(&config.weights, "weights")?)?,
        None => WeightTable::default(),
    };
    Ok(DetectionConfig {
        mode: config.mode,
        tau: config.tau,
        class_priority: config.priority,
        weights,
    })
}

/// Loads encoder + database and checks that they belong together.
fn load_model_and_db(config: &RunConfig) -> Result<(EncoderModel, SignatureDatabase), CliError> {
    let model = EncoderModel::load(input(&config.encoder, "encoder")?)?;
    let db = SignatureDatabase::load(input(&config.db, "db")?)?;
    if model.fingerprint() != db.encoder_fingerprint {
        return Err(CliError::new(
            EXIT_FINGERPRINT,
            format!(
                "signature database was built for encoder {} but the encoder model is {}",
                db.encoder_fingerprint,
                model.fingerprint()
            ),
        ));
    }
    Ok((model, db))
}

fn build_engine(config: &RunConfig, db: &SignatureDatabase) -> Result<MatchEngine, CliError> {
    let engine = MatchEngine::build(db, detection_config(config)?)?;
    for w in engine.warnings() {
        match w {
            EngineWarning::EmptyDatabase => {
                eprintln!("warning: signature database is empty; every session will be normal")
            }
        }
    }
    Ok(engine)
}

fn open_lines(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_error(path, e))
}

pub(super) fn cmd_build(config: &RunConfig) -> Result<(), CliError> {
    let train = input(&config.train, "train")?;
    let encoder_out = output(&config.encoder, "encoder")?;
    let db_out = output(&config.db, "db")?;
    let schema = load_schema(config)?;
    let taxonomy = load_taxonomy(config)?;
    let exec = Executor::new(config.workers);
    let start = Instant::now();

    let (records, skipped) = read_records_file(train, &schema, Some(&taxonomy), config.skip_bad)?;
    let stats = crate::dataset::feature_stats(&records, &schema)?;
    let model = fit_encoder(&stats, &schema, config.levels)?;

    let encoded = exec
        .map(&records, |r| model.encode_record(r).map(|(seq, _)| seq))
        .into_iter()
        .zip(&records)
        .map(|(seq, r)| Ok((seq?, r.label_class.expect("taxonomy applied"))))
        .collect::<Result<Vec<(NucleotideSequence, LabelClass)>, EncodingError>>()?;

    let db = if config.group_signatures {
        let spans: Vec<_> = model.group_spans(&schema).into_iter().map(|(_, r)| r).collect();
        build_group_database(encoded, &spans, model.fingerprint(), config.policy)?
    } else {
        build_database(encoded, model.fingerprint(), config.policy)?
    };

    model.save(encoder_out)?;
    db.save(db_out)?;

    println!("records: {} (skipped {skipped})", records.len());
    println!(
        "encoder: {} (sequence length {})",
        model.fingerprint(),
        model.total_length()
    );
    let counts = db.class_counts();
    let per_class: Vec<String> = counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
    println!("signatures: {} total={}", per_class.join(" "), db.len());
    println!("conflicts: {} (policy {})", db.conflict_count, db.policy.as_str());
    println!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub(super) fn cmd_detect(config: &RunConfig) -> Result<(), CliError> {
    let test = input(&config.test, "test")?;
    let (model, db) = load_model_and_db(config)?;
    let schema = load_schema(config)?;
    let engine = build_engine(config, &db)?;
    let exec = Executor::new(config.workers);
    let start = Instant::now();

    let mut reader = RecordReader::new(open_lines(test)?, &schema).skip_bad(config.skip_bad);
    let (mut attacks, mut normals) = (0u64, 0u64);
    {
        let sink: Box<dyn Write> = match &config.out_log {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        let mut alerts = AlertWriter::new(sink);
        for verdict in detect_stream(reader.by_ref(), &model, &engine, &exec)? {
            let verdict = verdict?;
            if verdict.outcome.is_attack() {
                attacks += 1;
            } else {
                normals += 1;
            }
            alerts.write(&verdict).map_err(data)?;
        }
        alerts.finish().map_err(data)?;
    }

    let total = attacks + normals;
    let pct = |n: u64| if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 };
    let summary = format!(
        "total: {total} (skipped {})\nattack: {attacks} ({:.2}%)\nnormal: {normals} ({:.2}%)\nelapsed: {:.3}s",
        reader.skipped(),
        pct(attacks),
        pct(normals),
        start.elapsed().as_secs_f64()
    );
    if config.out_log.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

pub(super) fn cmd_evaluate(config: &RunConfig) -> Result<(), CliError> {
    let test = input(&config.test, "test")?;
    let (model, db) = load_model_and_db(config)?;
    let schema = load_schema(config)?;
    let taxonomy = load_taxonomy(config)?;
    let engine = build_engine(config, &db)?;
    let exec = Executor::new(config.workers);

    let (records, skipped) = read_records_file(test, &schema, Some(&taxonomy), config.skip_bad)?;
    let sizes = config.sizes.clone().unwrap_or_else(|| vec![records.len()]);
    if let Some(&n) = sizes.iter().find(|&&n| n > records.len()) {
        return Err(CliError::new(
            EXIT_RANGE,
            format!("size {n} exceeds dataset length {}", records.len()),
        ));
    }
    let truths: Vec<LabelClass> = records
        .iter()
        .map(|r| r.label_class.expect("taxonomy applied"))
        .collect();
    let verdicts = detect_records(&records, &model, &engine, &exec)?;
    let series = series_from_verdicts(&verdicts, &truths, &sizes)?;
    let counts = score_run(&verdicts, &truths)?;

    match &config.out_series {
        Some(p) => write_series_csv(&series, p)?,
        None => print!("{}", series_csv(&series)),
    }
    if let Some(p) = &config.out_log {
        write_alert_log(&verdicts, p)?;
    }
    let summary = format!("records: {} (skipped {skipped})\n{counts}", records.len());
    if config.out_series.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

pub(super) fn cmd_encode(config: &RunConfig) -> Result<(), CliError> {
    let source = if config.test.is_some() {
        input(&config.test, "test")?
    } else {
        input(&config.train, "test")?
    };
    let model = EncoderModel::load(input(&config.encoder, "encoder")?)?;
    let schema = load_schema(config)?;
    let reader = RecordReader::new(open_lines(source)?, &schema).skip_bad(config.skip_bad);
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for rec in reader.take(config.limit.unwrap_or(usize::MAX)) {
        let rec = rec?;
        let (seq, unknown) = model.encode_record(&rec)?;
        writeln!(out, "{}\t{seq}\t{unknown}", rec.source_index).map_err(data)?;
    }
    out.flush().map_err(data)?;
    Ok(())
}

pub(super) fn synth(args: &SynthArgs) -> Result<(), CliError> {
    write_corpus(&args.out, SynthConfig::new(args.seed, args.rows))
        .map_err(|e| io_error(&args.out, e))?;
    println!("wrote {} records to {}", args.rows, args.out.display());
    Ok(())
}
