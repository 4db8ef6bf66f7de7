use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use errsup::autodiff::Checkpoint;
use errsup::corpus::{
    parse_alignment, save_corpus, write_lines, SyntheticTask, SyntheticTaskSpec, Vocabulary, EOS_TOKEN,
};
use errsup::decoding::decode_corpus;
use errsup::metrics::{paired_bootstrap, score_corpus, CorpusScores, Metric, Winner};
use errsup::models::{Discriminator, DiscriminatorConfig, Seq2Seq, Seq2SeqConfig};
use errsup::negatives::ErrorType;
use errsup::parallel::Execution;
use errsup::training::{
    train_discriminator, train_mle, train_rl, RewardSpec, SelectMetric, TrainReport,
};
use errsup::ParallelCorpus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::experiment::{require, Experiment};
use crate::{Cli, Command, Global};

/// Rows of the results table, in display order.
pub const REPORT_ROWS: [&str; 6] = ["MLE", "RL-D_REP", "RL-D_DROP", "RL-GLEU", "RL-GLEU-D_REP", "RL-GLEU-D_DROP"];

const DEV_SEED_OFFSET: u64 = 1000;

fn resolve_config(g: &Global) -> Result<ExperimentConfig> {
    let existing = g.out.join("config.json");
    let mut cfg = match (&g.config, existing.exists()) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, true) => ExperimentConfig::load(&existing)?,
        (None, false) => ExperimentConfig::default(),
    };
    let seed = g.seed.unwrap_or(cfg.seed);
    cfg.apply_seed(seed);
    if let Some(b) = g.beam {
        if b == 0 {
            bail!("--beam must be at least 1");
        }
        cfg.decode.beam = b;
    }
    if let Some(m) = g.max_len {
        if m == 0 {
            bail!("--max-len must be at least 1");
        }
        cfg.decode.max_len = Some(m);
        cfg.rl.max_len = Some(m);
    }
    if let Some(l) = g.lambda_mixed {
        cfg.rl.lambda_mixed = l;
    }
    if let Some(l) = g.lambda_rl {
        cfg.rl.reward = RewardSpec { lambda_rl: l };
    }
    if let Some(k) = g.error_type {
        cfg.disc.corrupter.kind = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let exp = Experiment::open(&cli.global.out, cfg)?;
    if !exp.path("config.json").exists() {
        fs::write(exp.path("config.json"), serde_json::to_string_pretty(&exp.config)? + "\n")?;
    }
    match cli.command {
        Command::GenData => gen_data(&exp),
        Command::Corrupt { input, output } => corrupt(&exp, input, output),
        Command::TrainMle => train_mle_cmd(&exp),
        Command::TrainDisc => train_disc_cmd(&exp),
        Command::TrainRl => train_rl_cmd(&exp, cli.global.select_metric),
        Command::Decode { model, input, output } => decode_cmd(&exp, &model, input, output),
        Command::Score {
            reference,
            hypothesis,
            alignment,
            name,
        } => score_cmd(&exp, &reference, &hypothesis, alignment.as_deref(), &name),
        Command::Compare {
            reference,
            hyp_a,
            hyp_b,
            metric,
        } => compare_cmd(&exp, &reference, &hyp_a, &hyp_b, &metric),
        Command::Report => report_cmd(&exp),
    }
}

fn gen_data(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    let mut inputs = Vec::new();
    let spec = match &cfg.task_spec {
        Some(p) => {
            inputs.push(p.clone());
            SyntheticTaskSpec::load(p)?.with_seed(cfg.seed)
        }
        None => SyntheticTaskSpec::random(
            cfg.task.vocab_size,
            cfg.task.min_len,
            cfg.task.max_len,
            cfg.task.two_fraction,
            cfg.seed,
        ),
    };
    let task = SyntheticTask::new(spec.clone())?;
    let dev_task = SyntheticTask::new(spec.with_seed(cfg.seed.wrapping_add(DEV_SEED_OFFSET)))?;
    let mut outputs = vec![exp.path("data/task.json")];
    spec.save(&outputs[0])?;
    for (split, corpus) in [("train", task.generate(cfg.train_size)), ("dev", dev_task.generate(cfg.dev_size))] {
        let (s, t, a) = exp.split_paths(split);
        save_corpus(&corpus.to_text(&task.source_vocab, &task.target_vocab), &s, &t, Some(&a))?;
        outputs.extend([s, t, a]);
    }
    let (sv, tv) = exp.vocab_paths();
    fs::write(&sv, serde_json::to_string(&task.source_vocab)? + "\n")?;
    fs::write(&tv, serde_json::to_string(&task.target_vocab)? + "\n")?;
    outputs.extend([sv, tv]);
    exp.record("gen-data", &inputs, &outputs, json!({}))?;
    println!(
        "{}",
        json!({"train": cfg.train_size, "dev": cfg.dev_size, "source_vocab": task.source_vocab.len(), "target_vocab": task.target_vocab.len()})
    );
    Ok(())
}

fn read_token_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(|l| l.split_whitespace().map(str::to_string).collect()).collect())
}

fn corrupt(exp: &Experiment, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let kind = exp.config.disc.corrupter.kind;
    let input = input.unwrap_or_else(|| exp.path("data/train.tgt"));
    let output = output.unwrap_or_else(|| exp.path(&format!("data/train.{kind}.tgt")));
    let lines = read_token_lines(&input)?;
    let corrupter = exp.config.disc.corrupter;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.config.seed);
    let out: Vec<String> = lines
        .iter()
        .enumerate()
        .map(|(k, toks)| {
            corrupter
                .apply(toks, EOS_TOKEN.to_string(), &mut rng)
                .map(|e| e.join(" "))
                .map_err(|e| anyhow!("{}:{}: {e}", input.display(), k + 1))
        })
        .collect::<Result<_>>()?;
    write_lines(&output, &out)?;
    exp.record(&format!("corrupt-{kind}"), &[input], std::slice::from_ref(&output), json!({"error_type": kind}))?;
    println!("{}", json!({"lines": out.len(), "output": output.display().to_string()}));
    Ok(())
}

struct Data {
    sv: Vocabulary,
    tv: Vocabulary,
    train: ParallelCorpus,
    dev: ParallelCorpus,
    inputs: Vec<PathBuf>,
}

fn load_data(exp: &Experiment) -> Result<Data> {
    let (sv, tv) = exp.vocabularies()?;
    let (train, mut inputs) = exp.corpus("train", &sv, &tv)?;
    let (dev, dev_inputs) = exp.corpus("dev", &sv, &tv)?;
    inputs.extend(dev_inputs);
    Ok(Data {
        sv,
        tv,
        train,
        dev,
        inputs,
    })
}

fn write_log(exp: &Experiment, name: &str, report: &TrainReport) -> Result<PathBuf> {
    let path = exp.path(&format!("logs/{name}.jsonl"));
    fs::write(&path, report.to_jsonl())?;
    Ok(path)
}

fn load_generator(path: &Path, data_vocab: (&Vocabulary, &Vocabulary)) -> Result<Seq2Seq> {
    require(path)?;
    let model = Seq2Seq::from_checkpoint(&Checkpoint::load(path)?)
        .with_context(|| format!("loading {}", path.display()))?;
    let (sv, tv) = data_vocab;
    if model.config.src_vocab != sv.len() || model.config.tgt_vocab != tv.len() {
        bail!(
            "checkpoint {} expects vocabularies of {}/{} tokens, data has {}/{}",
            path.display(),
            model.config.src_vocab,
            model.config.tgt_vocab,
            sv.len(),
            tv.len()
        );
    }
    Ok(model)
}

fn train_mle_cmd(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    let data = load_data(exp)?;
    let mcfg = Seq2SeqConfig {
        src_vocab: data.sv.len(),
        tgt_vocab: data.tv.len(),
        dim: cfg.generator.dim,
        layers: cfg.generator.layers,
    };
    let mut model = Seq2Seq::new(mcfg, cfg.generator.init(), &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let report = train_mle(&mut model, &data.train, &data.dev, &cfg.mle)?;
    let ckpt = exp.path("models/mle.ckpt");
    model.to_checkpoint().save(&ckpt)?;
    let log = write_log(exp, "mle", &report)?;
    exp.record("train-mle", &data.inputs, &[ckpt, log], json!({}))?;
    println!(
        "{}",
        json!({"model": "MLE", "iterations": report.iterations, "best_iter": report.best_iter, "dev_ppl": report.best_metric})
    );
    Ok(())
}

fn disc_path(exp: &Experiment, kind: ErrorType) -> PathBuf {
    exp.path(&format!("models/disc-{kind}.ckpt"))
}

fn train_disc_cmd(exp: &Experiment) -> Result<()> {
    let cfg = &exp.config;
    let kind = cfg.disc.corrupter.kind;
    let data = load_data(exp)?;
    let dcfg = DiscriminatorConfig {
        src_vocab: data.sv.len(),
        tgt_vocab: data.tv.len(),
        dim: cfg.discriminator.dim,
        layers: cfg.discriminator.layers,
    };
    let mut d = Discriminator::new(dcfg, cfg.discriminator.init(), &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let report = train_discriminator(&mut d, &data.train, &data.dev, &cfg.disc)?;
    let ckpt = disc_path(exp, kind);
    d.to_checkpoint().save(&ckpt)?;
    let log = write_log(exp, &format!("disc-{kind}"), &report)?;
    exp.record(&format!("train-disc-{kind}"), &data.inputs, &[ckpt, log], json!({"error_type": kind}))?;
    println!(
        "{}",
        json!({"model": format!("D_{}", kind.label()), "iterations": report.iterations, "best_iter": report.best_iter, "dev_accuracy": report.best_metric})
    );
    Ok(())
}

/// Table row produced by an RL run with this reward.
pub fn rl_row(lambda_rl: f64, kind: ErrorType) -> String {
    if lambda_rl == 0.0 {
        "RL-GLEU".to_string()
    } else if lambda_rl == 1.0 {
        format!("RL-D_{}", kind.label())
    } else {
        format!("RL-GLEU-D_{}", kind.label())
    }
}

fn slug(row: &str) -> String {
    row.to_lowercase()
}

fn default_select(lambda_rl: f64, kind: ErrorType) -> SelectMetric {
    match (lambda_rl == 1.0, kind) {
        (true, ErrorType::Repeat) => SelectMetric::Erep,
        (true, ErrorType::Drop) => SelectMetric::Drop,
        (false, _) => SelectMetric::Bleu,
    }
}

fn train_rl_cmd(exp: &Experiment, select: Option<SelectMetric>) -> Result<()> {
    let kind = exp.config.disc.corrupter.kind;
    let lambda_rl = exp.config.rl.reward.lambda_rl;
    let mut rcfg = exp.config.rl.clone();
    rcfg.select = select.unwrap_or_else(|| default_select(lambda_rl, kind));
    let row = rl_row(lambda_rl, kind);
    let data = load_data(exp)?;
    let mle_path = exp.path("models/mle.ckpt");
    let mut model = load_generator(&mle_path, (&data.sv, &data.tv))?;
    let mut inputs = data.inputs.clone();
    inputs.push(mle_path);
    let disc = if rcfg.reward.needs_discriminator() {
        let p = disc_path(exp, kind);
        require(&p).with_context(|| format!("{row} needs a trained D_{} (run train-disc first)", kind.label()))?;
        let d = Discriminator::from_checkpoint(&Checkpoint::load(&p)?)?;
        if d.config.src_vocab != data.sv.len() || d.config.tgt_vocab != data.tv.len() {
            bail!("discriminator {} does not match the data vocabularies", p.display());
        }
        inputs.push(p);
        Some(d)
    } else {
        None
    };
    let (report, baseline) = train_rl(&mut model, disc.as_ref(), &data.train, &data.dev, &rcfg)?;
    let name = slug(&row);
    let ckpt = exp.path(&format!("models/{name}.ckpt"));
    model.to_checkpoint().save(&ckpt)?;
    let base = exp.path(&format!("models/{name}.baseline.json"));
    fs::write(&base, serde_json::to_string(&json!({"weights": baseline.weights, "bias": baseline.bias}))? + "\n")?;
    let log = write_log(exp, &name, &report)?;
    exp.record(
        &format!("train-rl-{name}"),
        &inputs,
        &[ckpt, base, log],
        json!({"row": row, "lambda_rl": lambda_rl, "lambda_mixed": rcfg.lambda_mixed, "select_metric": rcfg.select}),
    )?;
    println!(
        "{}",
        json!({"model": row, "iterations": report.iterations, "best_iter": report.best_iter, "select_metric": rcfg.select, "best": report.best_metric})
    );
    Ok(())
}

fn model_path(exp: &Experiment, model: &str) -> (PathBuf, String) {
    if model.ends_with(".ckpt") || model.contains('/') {
        let p = PathBuf::from(model);
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
        (p, stem)
    } else {
        let name = slug(model);
        (exp.path(&format!("models/{name}.ckpt")), name)
    }
}

fn decode_lines(exp: &Experiment, model: &Seq2Seq, sv: &Vocabulary, tv: &Vocabulary, sources: &[Vec<String>]) -> Result<Vec<String>> {
    let ids: Vec<_> = sources.iter().map(|s| sv.encode(s)).collect();
    let hyps = decode_corpus(model, &ids, &exp.config.decode, Execution::Parallel)?;
    Ok(hyps.iter().map(|h| tv.decode(&h.tokens).join(" ")).collect())
}

fn decode_cmd(exp: &Experiment, model: &str, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let (sv, tv) = exp.vocabularies()?;
    let (path, name) = model_path(exp, model);
    let m = load_generator(&path, (&sv, &tv))?;
    let input = input.unwrap_or_else(|| exp.path("data/dev.src"));
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let output = output.unwrap_or_else(|| exp.path(&format!("decode/{name}.{stem}.hyp")));
    let sources = read_token_lines(&input)?;
    let lines = decode_lines(exp, &m, &sv, &tv, &sources)?;
    write_lines(&output, &lines)?;
    exp.record(
        &format!("decode-{name}-{stem}"),
        &[path, input],
        std::slice::from_ref(&output),
        json!({"beam": exp.config.decode.beam, "max_len": exp.config.decode.max_len}),
    )?;
    println!("{}", json!({"sentences": lines.len(), "output": output.display().to_string()}));
    Ok(())
}

fn read_alignments(path: &Path) -> Result<Vec<Vec<(usize, usize)>>> {
    require(path)?;
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .map(|(k, l)| Ok(parse_alignment(l, k + 1)?))
        .collect()
}

fn totals_json(s: &CorpusScores) -> serde_json::Value {
    json!({"erep": s.erep, "drop": s.drop, "bleu": s.bleu, "bp": s.bp, "gleu": s.gleu, "rouge_l": s.rouge_l})
}

/// Writes `scores/<name>.json` and the per-sentence file next to it.
fn write_scores(exp: &Experiment, name: &str, s: &CorpusScores) -> Result<Vec<PathBuf>> {
    let totals = exp.path(&format!("scores/{name}.json"));
    let per = exp.path(&format!("scores/{name}.sentences.jsonl"));
    fs::write(&totals, serde_json::to_string_pretty(&totals_json(s))? + "\n")?;
    let lines: Vec<String> = s.sentences.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    write_lines(&per, &lines)?;
    Ok(vec![totals, per])
}

fn score_cmd(exp: &Experiment, reference: &Path, hypothesis: &Path, alignment: Option<&Path>, name: &str) -> Result<()> {
    let refs = read_token_lines(reference)?;
    let hyps = read_token_lines(hypothesis)?;
    if refs.len() != hyps.len() {
        bail!("{} has {} lines but {} has {}", reference.display(), refs.len(), hypothesis.display(), hyps.len());
    }
    let mut inputs = vec![reference.to_path_buf(), hypothesis.to_path_buf()];
    let aligns = match alignment {
        Some(p) => {
            inputs.push(p.to_path_buf());
            Some(read_alignments(p)?)
        }
        None => None,
    };
    let scores = score_corpus(&refs, &hyps, aligns.as_deref())?;
    let outputs = write_scores(exp, name, &scores)?;
    exp.record(&format!("score-{name}"), &inputs, &outputs, json!({}))?;
    println!("{}", totals_json(&scores));
    Ok(())
}

fn compare_cmd(exp: &Experiment, reference: &Path, hyp_a: &Path, hyp_b: &Path, metric: &str) -> Result<()> {
    let metric: Metric = metric.parse().map_err(|e: String| anyhow!(e))?;
    let refs = read_token_lines(reference)?;
    let a = read_token_lines(hyp_a)?;
    let b = read_token_lines(hyp_b)?;
    let score = |r: &[&Vec<String>], h: &[&Vec<String>]| metric.score(r, h);
    let res = paired_bootstrap(score, metric.higher_is_better(), &refs, &a, &b, &exp.config.bootstrap)?;
    let significant = res.significant(0.05);
    let winner = match res.winner {
        Winner::A => "A",
        Winner::B => "B",
        Winner::Tie => "tie",
    };
    let out = exp.path(&format!("scores/compare-{metric:?}.json").to_lowercase());
    let body = json!({
        "metric": metric,
        "score_a": res.score_a,
        "score_b": res.score_b,
        "winner": winner,
        "p_value": res.p_value,
        "n_resamples": res.n_resamples,
        "significant": significant,
    });
    fs::write(&out, serde_json::to_string_pretty(&body)? + "\n")?;
    exp.record(
        &format!("compare-{metric:?}").to_lowercase(),
        &[reference.to_path_buf(), hyp_a.to_path_buf(), hyp_b.to_path_buf()],
        &[out],
        json!({"metric": metric}),
    )?;
    println!(
        "{} (winner {winner}, p = {:.4}, {metric:?} {:.2} vs {:.2})",
        if significant { "significant" } else { "not significant" },
        res.p_value,
        res.score_a,
        res.score_b
    );
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

fn report_cmd(exp: &Experiment) -> Result<()> {
    let (sv, tv) = exp.vocabularies()?;
    let (dev, mut inputs) = exp.corpus("dev", &sv, &tv)?;
    let sources = read_token_lines(&exp.path("data/dev.src"))?;
    let refs: Vec<Vec<String>> = dev.targets().iter().map(|t| tv.decode(t)).collect();
    let aligns: Option<Vec<Vec<(usize, usize)>>> =
        dev.has_alignments().then(|| dev.iter().map(|e| e.alignment.clone().unwrap()).collect());
    let mut tsv = vec!["system\teREP\tDROP\tBLEU (BP)\tGLEU".to_string()];
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for row in REPORT_ROWS {
        let (path, name) = model_path(exp, row);
        if !path.exists() {
            continue;
        }
        let model = load_generator(&path, (&sv, &tv))?;
        inputs.push(path);
        let hyp_lines = decode_lines(exp, &model, &sv, &tv, &sources)?;
        let hyp_path = exp.path(&format!("decode/{name}.dev.hyp"));
        write_lines(&hyp_path, &hyp_lines)?;
        let hyps: Vec<Vec<String>> = hyp_lines.iter().map(|l| l.split_whitespace().map(str::to_string).collect()).collect();
        let s = score_corpus(&refs, &hyps, aligns.as_deref())?;
        let files = write_scores(exp, &format!("{name}.dev"), &s)?;
        tsv.push(format!(
            "{row}\t{:.2}\t{}\t{:.2} ({:.3})\t{:.2}",
            s.erep,
            fmt_opt(s.drop),
            s.bleu,
            s.bp,
            s.gleu
        ));
        let mut entry = totals_json(&s);
        entry["system"] = json!(row);
        entry["sentences"] = json!(files[1].strip_prefix(&exp.root).unwrap_or(&files[1]).display().to_string());
        rows.push(entry);
        outputs.push(hyp_path);
        outputs.extend(files);
    }
    if rows.is_empty() {
        bail!("no trained generators under {}", exp.path("models").display());
    }
    let tsv_path = exp.path("report.tsv");
    let json_path = exp.path("report.json");
    write_lines(&tsv_path, &tsv)?;
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&json!({"decode": exp.config.decode, "rows": rows}))? + "\n",
    )?;
    outputs.extend([tsv_path, json_path]);
    exp.record("report", &inputs, &outputs, json!({"beam": exp.config.decode.beam}))?;
    println!("{}", tsv.join("\n"));
    Ok(())
}
