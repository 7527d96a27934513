use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command};

use serde_json::{json, Value};
use tiltlab::features::FeatureConfig;
use tiltlab::parser::{train_parser, ParserConfig};
use tiltlab::probe::{train_probes, ProbeConfig, ProbeDataset, ProbeEncoder, ProbeResult};
use tiltlab::report::{self, sha256_hex, GroupKey, RunManifest};
use tiltlab::tagger::{majority_baseline, train_pos, TaggerConfig};
use tiltlab::train::PretrainOutcome;
use tiltlab::{profile, Objective, Schedule, TokenCorpus, TrainConfig, TrainLog};
use tiltlab_core::corpstats::corpus_report;
use tiltlab_core::corpusio::{build_vocab, fit_length_distribution};
use tiltlab_core::langgen::{
    CorpusGenerator, GenConfig, LengthDistribution, Rendering, PRETRAIN_MAX_LEN, PRETRAIN_MIN_LEN,
};

use crate::data::{self, Source, ENCODER_KEYS};
use crate::failure::{Failure, Outcome};
use crate::settings::{override_seed, Settings};
use crate::{GenArgs, IngestArgs, PretrainArgs, ProbeArgs, ReportArgs, StatsArgs, TransferArgs, TreebankArgs};

const TRAIN_KEYS: &[&str] = &["preset", "objective", "steps", "batch_size", "warmup", "lr", "seed"];
const FEATURE_KEYS: &[&str] = &["word_dim", "char_dim", "char_hidden", "word_cap", "dropout"];

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_id(out: &Path) -> String {
    out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn create(path: &Path) -> Outcome<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))
}

struct Labels<'a> {
    command: &'a str,
    language: String,
    architecture: String,
    objective: String,
}

#[allow(clippy::too_many_arguments)]
fn manifest(
    out: &Path,
    labels: Labels,
    config: &Value,
    seeds: Vec<u64>,
    checkpoints: Vec<PathBuf>,
    metrics: BTreeMap<String, f64>,
    deterministic: bool,
) -> RunManifest {
    RunManifest {
        run_id: run_id(out),
        command: labels.command.into(),
        language: labels.language,
        architecture: labels.architecture,
        objective: labels.objective,
        config_sha256: sha256_hex(&serde_json::to_vec(config).expect("config serializes")),
        seeds,
        checkpoints: checkpoints.iter().map(|p| p.display().to_string()).collect(),
        metrics,
        deterministic,
    }
}

fn write_losses(path: &Path, log: &TrainLog) -> Outcome<()> {
    let mut w = create(path)?;
    writeln!(w, "step,loss")?;
    for (i, l) in log.losses.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1)?;
    }
    w.flush()?;
    Ok(())
}

fn path_setting(flag: &Option<PathBuf>, s: &Settings, section: &str, key: &str) -> Outcome<PathBuf> {
    flag.clone()
        .or_else(|| s.get(section, key).map(PathBuf::from))
        .ok_or_else(|| Failure::usage(format!("missing --{key} (or [{section}] {key} in the config)")))
}

pub fn gen(a: GenArgs) -> Outcome<()> {
    let mut config = match (&a.common.config, &a.language) {
        (Some(p), None) => GenConfig::from_ini(&fs::read_to_string(p)?)?,
        (None, Some(lang)) => GenConfig::preset(lang, a.size, 0, a.sentences)?,
        _ => return Err(Failure::usage("gen needs --config or --language")),
    };
    config.seed = override_seed(a.common.seed, config.seed)?;
    let digest = config.digest();
    let corpus = CorpusGenerator::new(config.clone())?.generate_with_threads(a.jobs)?;
    let mut w = create(&a.out)?;
    corpus.write(&mut w, Some(&digest))?;
    let metrics = BTreeMap::from([
        ("sentences".to_string(), corpus.len() as f64),
        ("tokens".to_string(), corpus.token_count() as f64),
    ]);
    let labels = Labels {
        command: "gen",
        language: data::language_name(&config),
        architecture: String::new(),
        objective: String::new(),
    };
    let cfg = json!({ "genconfig_sha256": digest });
    manifest(&a.out, labels, &cfg, vec![config.seed], vec![], metrics, a.common.deterministic)
        .write_to(&sibling(&a.out, ".manifest.json"))?;
    log::info!("wrote {} sentences to {}", corpus.len(), a.out.display());
    Ok(())
}

pub fn stats(a: StatsArgs) -> Outcome<()> {
    let corpus = data::read_artificial(&a.corpus, a.vocab_size)?;
    let structured = a.check.is_some() || corpus.vocabulary.rendering() == Rendering::PairBracketed;
    let ptb = LengthDistribution::ptb_default();
    let report = corpus_report(&corpus, structured, a.ptb_lengths.then_some(&ptb));
    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(out) => {
            let mut w = create(out)?;
            writeln!(w, "{text}")?;
            w.flush()?;
            let mut metrics = BTreeMap::new();
            let fields = serde_json::to_value(&report)?;
            for (k, v) in fields.as_object().into_iter().flatten() {
                if let Some(x) = v.as_f64() {
                    metrics.insert(k.clone(), x);
                }
            }
            let labels = Labels {
                command: "stats",
                language: String::new(),
                architecture: String::new(),
                objective: String::new(),
            };
            let cfg = json!({ "corpus": a.corpus, "check": a.check, "ptb_lengths": a.ptb_lengths });
            manifest(out, labels, &cfg, vec![], vec![], metrics, a.common.deterministic)
                .write_to(&sibling(out, ".manifest.json"))?;
        }
        None => println!("{text}"),
    }
    let (name, rate) = match a.check.as_deref() {
        Some("nested") => ("nested", report.nested_rate),
        Some("balanced") => ("balanced", report.balanced_rate),
        _ => return Ok(()),
    };
    match rate {
        Some(r) if r == 1.0 => Ok(()),
        r => Err(Failure::data(format!(
            "{name} check failed: rate {:.6}",
            r.unwrap_or(0.0)
        ))),
    }
}

pub fn ingest(a: IngestArgs) -> Outcome<()> {
    let s = Settings::load(a.common.config.as_deref(), &[("ingest", &["vocab_cap", "min_len", "max_len"])])?;
    let cap = a.vocab_cap.map_or_else(|| s.parse_or("ingest", "vocab_cap", profile::VOCAB), Ok)?;
    let min_len = s.parse_or("ingest", "min_len", PRETRAIN_MIN_LEN)?;
    let max_len = s.parse_or("ingest", "max_len", PRETRAIN_MAX_LEN)?;
    let lines = data::read_lines(&a.input)?;
    let lines: Vec<&String> = lines.iter().filter(|l| !l.trim().is_empty()).collect();
    let vocab = build_vocab(lines.iter(), cap)?;
    fs::create_dir_all(&a.out)?;
    let mut w = create(&a.out.join("vocab.tsv"))?;
    vocab.write(&mut w)?;
    let lengths = fit_length_distribution(lines.iter(), min_len, max_len)?;
    let mut w = create(&a.out.join("lengths.txt"))?;
    for (len, p) in lengths.support() {
        writeln!(w, "{len} {p}")?;
    }
    w.flush()?;
    let corpus = TokenCorpus::from_lines(lines.iter(), &vocab);
    let oov = corpus.sentences.iter().flatten().filter(|&&t| t as usize == corpus.oov()).count();
    let metrics = BTreeMap::from([
        ("sentences".to_string(), corpus.len() as f64),
        ("tokens".to_string(), corpus.token_count() as f64),
        ("vocab".to_string(), vocab.len() as f64),
        ("oov_rate".to_string(), oov as f64 / corpus.token_count().max(1) as f64),
    ]);
    let labels = Labels {
        command: "ingest",
        language: run_id(&a.input),
        architecture: String::new(),
        objective: String::new(),
    };
    let cfg = json!({ "input": a.input, "vocab_cap": cap, "min_len": min_len, "max_len": max_len });
    manifest(&a.out, labels, &cfg, vec![], vec![], metrics, a.common.deterministic).save(&a.out)?;
    Ok(())
}

fn parse_objective(s: &str) -> Outcome<Objective> {
    match s {
        "clm" => Ok(Objective::Clm),
        "mlm" => Ok(Objective::Mlm),
        other => Err(Failure::data(format!("unknown objective '{other}'"))),
    }
}

/// `[train]` settings over the desk profile (or the paper recipe with
/// `preset = paper`).
fn train_config(s: &Settings, objective: Objective, seed: u64) -> Outcome<TrainConfig> {
    let mut c = match s.get("train", "preset").unwrap_or("desk") {
        "desk" => profile::pretrain(objective, seed),
        "paper" => TrainConfig::paper(objective, seed),
        other => return Err(Failure::data(format!("unknown training preset '{other}'"))),
    };
    c.objective = objective;
    c.total_steps = s.parse_or("train", "steps", c.total_steps)?;
    c.batch_size = s.parse_or("train", "batch_size", c.batch_size)?;
    if let Some(w) = s.parse("train", "warmup")? {
        c.schedule = Schedule::Noam { warmup: w };
    }
    if let Some(lr) = s.parse("train", "lr")? {
        c.schedule = Schedule::Constant { lr };
    }
    c.validate()?;
    Ok(c)
}

pub fn pretrain(a: PretrainArgs) -> Outcome<()> {
    if !a.seeds.is_empty() {
        return fan_out(&a);
    }
    let s = Settings::load(
        a.common.config.as_deref(),
        &[
            ("run", &["language"]),
            ("data", &["corpus", "vocab", "vocab_size", "max_sentences"]),
            ("encoder", ENCODER_KEYS),
            ("train", TRAIN_KEYS),
        ],
    )?;
    let seed = s.seed("train", a.common.seed, 0)?;
    let objective = parse_objective(s.get("train", "objective").unwrap_or("clm"))?;
    let config = train_config(&s, objective, seed)?;
    let encoder = data::encoder_config(&s)?;
    let corpus_path = path_setting(&a.corpus, &s, "data", "corpus")?;
    let mut corpus = data::read_training_corpus(&corpus_path, s.get("data", "vocab"), s.parse("data", "vocab_size")?)?;
    if let Some(n) = s.parse("data", "max_sentences")? {
        corpus = corpus.truncated(n);
    }
    let language = s.get("run", "language").map(String::from).unwrap_or_else(|| run_id(&corpus_path));
    let PretrainOutcome { mut checkpoint, log } = tiltlab::pretrain(&encoder, &corpus, &config)?;
    if let Some(m) = checkpoint.meta.as_object_mut() {
        m.insert("language".into(), json!(language));
    }
    fs::create_dir_all(&a.out)?;
    let ckpt_path = a.out.join("encoder.ckpt");
    checkpoint.save(&ckpt_path)?;
    write_losses(&a.out.join("losses.csv"), &log)?;
    let metrics = BTreeMap::from([
        ("initial_loss".to_string(), log.losses[..log.losses.len().min(50)].iter().map(|&x| x as f64).sum::<f64>() / log.losses.len().clamp(1, 50) as f64),
        ("final_loss".to_string(), log.tail_mean(50)),
        ("steps".to_string(), log.losses.len() as f64),
        ("epochs".to_string(), log.epochs as f64),
    ]);
    let labels = Labels {
        command: "pretrain",
        language,
        architecture: encoder.architecture.name().into(),
        objective: objective.name().into(),
    };
    let cfg = json!({ "encoder": encoder, "train": config, "corpus": corpus_path, "vocab": s.get("data", "vocab") });
    manifest(&a.out, labels, &cfg, vec![seed], vec![ckpt_path], metrics, a.common.deterministic).save(&a.out)?;
    log::info!("pretraining finished: final loss {:.4}", log.tail_mean(50));
    Ok(())
}

/// One `pretrain` subprocess per seed, at most `--jobs` at a time.
fn fan_out(a: &PretrainArgs) -> Outcome<()> {
    let exe = std::env::current_exe()?;
    let jobs = a.jobs.max(1);
    let mut running: Vec<(u64, Child)> = Vec::new();
    let mut worst = 0;
    let wait = |(seed, mut child): (u64, Child)| -> Outcome<i32> {
        let status = child.wait()?;
        let code = status.code().unwrap_or(2);
        if code != 0 {
            log::error!("seed {seed} failed with exit code {code}");
        }
        Ok(code)
    };
    for &seed in &a.seeds {
        if running.len() >= jobs {
            worst = worst.max(wait(running.remove(0))?);
        }
        let mut cmd = Command::new(&exe);
        cmd.arg("pretrain").arg("--seed").arg(seed.to_string());
        cmd.arg("--out").arg(a.out.join(format!("seed-{seed}")));
        if let Some(c) = &a.common.config {
            cmd.arg("--config").arg(c);
        }
        if let Some(c) = &a.corpus {
            cmd.arg("--corpus").arg(c);
        }
        if a.common.deterministic {
            cmd.arg("--deterministic");
        }
        running.push((seed, cmd.spawn()?));
    }
    for r in running {
        worst = worst.max(wait(r)?);
    }
    match worst {
        0 => Ok(()),
        3 => Err(Failure::Numerical(anyhow::anyhow!("a seed run hit a numerical failure"))),
        1 => Err(Failure::usage("a seed run rejected its arguments")),
        _ => Err(Failure::data("a seed run failed")),
    }
}

fn source_labels(command: &'static str, src: &Source) -> Labels<'static> {
    Labels {
        command,
        language: src.language.clone(),
        architecture: src.source.config().architecture.name().into(),
        objective: src.objective.clone().unwrap_or_else(|| "none".into()),
    }
}

fn encoder_seed(s: &Settings, seed: u64) -> Outcome<u64> {
    s.parse_or("encoder", "seed", seed)
}

const SOURCE_ENCODER_KEYS: &[&str] = &[
    "preset",
    "architecture",
    "layers",
    "model_size",
    "lstm_hidden",
    "ff_size",
    "heads",
    "dropout",
    "seed",
];

pub fn transfer_lm(a: TransferArgs) -> Outcome<()> {
    let s = Settings::load(
        a.common.config.as_deref(),
        &[
            ("run", &["language"]),
            ("data", &["train", "eval", "vocab", "max_train", "max_eval"]),
            ("encoder", SOURCE_ENCODER_KEYS),
            ("train", TRAIN_KEYS),
        ],
    )?;
    let seed = s.seed("train", a.common.seed, 0)?;
    let src = a.source.resolve(&s, encoder_seed(&s, seed)?)?;
    let config = train_config(&s, Objective::Clm, seed)?;
    let train_path = path_setting(&a.train, &s, "data", "train")?;
    let eval_path = path_setting(&a.eval, &s, "data", "eval")?;
    let mut train_lines = data::read_lines(&train_path)?;
    let mut eval_lines = data::read_lines(&eval_path)?;
    // the vocabulary comes from the training sentences actually used
    if let Some(n) = s.parse("data", "max_train")? {
        train_lines.truncate(n);
    }
    if let Some(n) = s.parse("data", "max_eval")? {
        eval_lines.truncate(n);
    }
    let vocab_spec = s.get("data", "vocab").map(String::from).unwrap_or_else(|| format!("cap:{}", profile::VOCAB));
    let vocab = data::natural_vocab(&vocab_spec, &train_lines)?;
    let train = TokenCorpus::from_lines(train_lines.iter(), &vocab);
    let eval = TokenCorpus::from_lines(eval_lines.iter(), &vocab);
    let out = tiltlab::transfer_lm(&src.source, &train, &eval, &config)?;
    fs::create_dir_all(&a.out)?;
    write_losses(&a.out.join("losses.csv"), &out.log)?;
    let metrics = BTreeMap::from([
        ("ppl".to_string(), out.perplexity),
        ("final_loss".to_string(), out.log.tail_mean(50)),
    ]);
    let cfg = json!({
        "encoder": src.source.config(),
        "checkpoint": src.checkpoint,
        "train": config,
        "data": { "train": train_path, "eval": eval_path, "vocab": vocab_spec },
        "encoder_sha256": out.encoder_sha256,
    });
    manifest(
        &a.out,
        source_labels("transfer-lm", &src),
        &cfg,
        vec![src.pretrain_seed, seed],
        src.checkpoint.iter().cloned().collect(),
        metrics,
        a.common.deterministic,
    )
    .save(&a.out)?;
    println!("{}", json!({ "ppl": out.perplexity }));
    Ok(())
}

fn feature_config(s: &Settings) -> Outcome<FeatureConfig> {
    let d = FeatureConfig::default();
    Ok(FeatureConfig {
        word_dim: s.parse_or("features", "word_dim", d.word_dim)?,
        char_dim: s.parse_or("features", "char_dim", d.char_dim)?,
        char_hidden: s.parse_or("features", "char_hidden", d.char_hidden)?,
        word_cap: s.parse_or("features", "word_cap", d.word_cap)?,
        dropout: s.parse_or("features", "dropout", d.dropout)?,
    })
}

struct TreebankRun {
    settings: Settings,
    seed: u64,
    source: Source,
    train: tiltlab_core::corpusio::Treebank,
    dev: tiltlab_core::corpusio::Treebank,
    paths: Value,
}

fn treebank_run(a: &TreebankArgs, section: &'static str, keys: &'static [&'static str]) -> Outcome<TreebankRun> {
    let s = Settings::load(
        a.common.config.as_deref(),
        &[
            ("run", &["language"]),
            ("data", &["train", "dev", "max_train", "max_dev"]),
            ("encoder", SOURCE_ENCODER_KEYS),
            ("features", FEATURE_KEYS),
            (section, keys),
        ],
    )?;
    let seed = s.seed(section, a.common.seed, 0)?;
    let source = a.source.resolve(&s, encoder_seed(&s, seed)?)?;
    let train_path = path_setting(&a.train, &s, "data", "train")?;
    let dev_path = path_setting(&a.dev, &s, "data", "dev")?;
    let train = data::treebank(&train_path, s.parse("data", "max_train")?)?;
    let dev = data::treebank(&dev_path, s.parse("data", "max_dev")?)?;
    Ok(TreebankRun {
        paths: json!({ "train": train_path, "dev": dev_path, "train_sentences": train.len(), "dev_sentences": dev.len() }),
        settings: s,
        seed,
        source,
        train,
        dev,
    })
}

pub fn parse(a: TreebankArgs) -> Outcome<()> {
    let keys: &'static [&'static str] = &["epochs", "batch_size", "lr", "arc_dim", "label_dim", "decoder", "seed"];
    let run = treebank_run(&a, "parser", keys)?;
    let s = &run.settings;
    let d = ParserConfig::default();
    let config = ParserConfig {
        features: feature_config(s)?,
        arc_dim: s.parse_or("parser", "arc_dim", d.arc_dim)?,
        label_dim: s.parse_or("parser", "label_dim", d.label_dim)?,
        epochs: s.parse_or("parser", "epochs", d.epochs)?,
        batch_size: s.parse_or("parser", "batch_size", d.batch_size)?,
        lr: s.parse_or("parser", "lr", d.lr)?,
        decoder: match s.get("parser", "decoder") {
            Some(v) => serde_json::from_value(json!(v)).map_err(|_| Failure::data(format!("unknown decoder '{v}'")))?,
            None => d.decoder,
        },
        seed: run.seed,
        ..d
    };
    let out = train_parser(&run.source.source, &run.train, &run.dev, &config)?;
    let metrics = BTreeMap::from([
        ("uas".to_string(), out.dev.uas),
        ("las".to_string(), out.dev.las),
        ("tokens".to_string(), out.dev.tokens as f64),
    ]);
    let cfg = json!({
        "encoder": run.source.source.config(),
        "checkpoint": run.source.checkpoint,
        "parser": config,
        "data": run.paths,
        "encoder_sha256": out.encoder_sha256,
    });
    manifest(
        &a.out,
        source_labels("parse", &run.source),
        &cfg,
        vec![run.source.pretrain_seed, run.seed],
        run.source.checkpoint.iter().cloned().collect(),
        metrics,
        a.common.deterministic,
    )
    .save(&a.out)?;
    println!("{}", json!({ "uas": out.dev.uas, "las": out.dev.las }));
    Ok(())
}

pub fn pos(a: TreebankArgs) -> Outcome<()> {
    let keys: &'static [&'static str] = &["epochs", "batch_size", "lr", "seed"];
    let run = treebank_run(&a, "tagger", keys)?;
    let s = &run.settings;
    let d = TaggerConfig::default();
    let config = TaggerConfig {
        features: feature_config(s)?,
        epochs: s.parse_or("tagger", "epochs", d.epochs)?,
        batch_size: s.parse_or("tagger", "batch_size", d.batch_size)?,
        lr: s.parse_or("tagger", "lr", d.lr)?,
        seed: run.seed,
        ..d
    };
    let out = train_pos(&run.source.source, &run.train, &run.dev, &config)?;
    let baseline = majority_baseline(&run.train, &run.dev);
    let metrics = BTreeMap::from([
        ("accuracy".to_string(), out.dev.accuracy),
        ("majority_baseline".to_string(), baseline.accuracy),
        ("tokens".to_string(), out.dev.tokens as f64),
    ]);
    let cfg = json!({
        "encoder": run.source.source.config(),
        "checkpoint": run.source.checkpoint,
        "tagger": config,
        "data": run.paths,
        "encoder_sha256": out.encoder_sha256,
    });
    manifest(
        &a.out,
        source_labels("pos", &run.source),
        &cfg,
        vec![run.source.pretrain_seed, run.seed],
        run.source.checkpoint.iter().cloned().collect(),
        metrics,
        a.common.deterministic,
    )
    .save(&a.out)?;
    println!("{}", json!({ "accuracy": out.dev.accuracy, "majority_baseline": baseline.accuracy }));
    Ok(())
}

pub fn probe(a: ProbeArgs) -> Outcome<()> {
    let s = Settings::load(
        a.common.config.as_deref(),
        &[
            ("run", &["language"]),
            ("encoder", SOURCE_ENCODER_KEYS),
            (
                "probe",
                &[
                    "mode",
                    "positions",
                    "max_epochs",
                    "patience",
                    "batch_size",
                    "lr",
                    "train_size",
                    "valid_size",
                    "test_size",
                    "data_seed",
                    "seed",
                ],
            ),
        ],
    )?;
    let seed = s.seed("probe", a.common.seed, 0)?;
    let src = a.source.resolve(&s, encoder_seed(&s, seed)?)?;
    let mode = a
        .mode
        .as_deref()
        .or(src.objective.as_deref())
        .or(s.get("probe", "mode"))
        .unwrap_or("clm");
    let mode = parse_objective(mode)?;
    let mut config = ProbeConfig::for_mode(mode);
    if let Some(p) = s.get("probe", "positions") {
        config.positions = p
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| Failure::data(format!("bad probe position '{x}'"))))
            .collect::<Outcome<_>>()?;
    }
    config.max_epochs = s.parse_or("probe", "max_epochs", config.max_epochs)?;
    config.patience = s.parse_or("probe", "patience", config.patience)?;
    config.batch_size = s.parse_or("probe", "batch_size", config.batch_size)?;
    config.lr = s.parse_or("probe", "lr", config.lr)?;
    config.seed = seed;
    let sizes = (
        s.parse_or("probe", "train_size", tiltlab::probe::TRAIN_SIZE)?,
        s.parse_or("probe", "valid_size", tiltlab::probe::VALID_SIZE)?,
        s.parse_or("probe", "test_size", tiltlab::probe::TEST_SIZE)?,
    );
    let data_seed = s.parse_or("probe", "data_seed", 0u64)?;
    let dataset = ProbeDataset::generate_sized(data_seed, sizes.0, sizes.1, sizes.2);
    let id = run_id(&a.out);
    let result = train_probes(&id, &ProbeEncoder::Frozen(src.source.clone()), &dataset, &config)?;
    fs::create_dir_all(&a.out)?;
    ProbeResult::write_csv(std::slice::from_ref(&result), create(&a.out.join("probe.csv"))?)?;
    let mut metrics = BTreeMap::new();
    for (i, &p) in result.positions.iter().enumerate() {
        metrics.insert(format!("acc@{p}"), result.test_accuracy[i]);
        metrics.insert(format!("train_acc@{p}"), result.train_accuracy[i]);
    }
    metrics.insert("valid_accuracy".into(), result.valid_accuracy);
    let cfg = json!({
        "encoder": src.source.config(),
        "checkpoint": src.checkpoint,
        "probe": config,
        "data": { "seed": data_seed, "sizes": [sizes.0, sizes.1, sizes.2] },
    });
    let mut labels = source_labels("probe", &src);
    labels.objective = mode.name().into();
    manifest(
        &a.out,
        labels,
        &cfg,
        vec![src.pretrain_seed, seed],
        src.checkpoint.iter().cloned().collect(),
        metrics,
        a.common.deterministic,
    )
    .save(&a.out)?;
    Ok(())
}

pub fn report(a: ReportArgs) -> Outcome<()> {
    let keys: Vec<GroupKey> = a.group_by.iter().map(|k| GroupKey::parse(k)).collect::<Result<_, _>>()?;
    let runs = report::load_runs(&a.runs)?;
    let rows = report::aggregate(&runs, &a.metric, &keys, a.by_pretrain_seed)?;
    match &a.out {
        Some(out) => report::write_aggregates(&rows, &keys, create(out)?)?,
        None => report::write_aggregates(&rows, &keys, std::io::stdout().lock())?,
    }
    let mut metrics = BTreeMap::new();
    if let Some(pair) = &a.compare {
        let (x, y) = pair
            .split_once(':')
            .ok_or_else(|| Failure::usage("--compare expects a:b"))?;
        let key = GroupKey::parse(&a.compare_key)?;
        let c = report::compare(&runs, &a.metric, key, x, y, a.by_pretrain_seed)?;
        println!("{}", serde_json::to_string(&c)?);
        metrics.insert("welch_t".to_string(), c.welch.t);
        metrics.insert("welch_p".to_string(), c.welch.p_two_sided);
    }
    if let Some(out) = &a.out {
        let labels = Labels {
            command: "report",
            language: String::new(),
            architecture: String::new(),
            objective: String::new(),
        };
        let cfg = json!({
            "runs": a.runs, "metric": a.metric, "group_by": a.group_by,
            "compare": a.compare, "by_pretrain_seed": a.by_pretrain_seed,
        });
        manifest(out, labels, &cfg, vec![], vec![], metrics, a.common.deterministic)
            .write_to(&sibling(out, ".manifest.json"))?;
    }
    Ok(())
}
