use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use gpr_core::decoder::read_catalog_jsonl;
use gpr_core::decoder::write_catalog_jsonl;
use gpr_core::hepo::write_reports_csv;
use gpr_core::pipeline::{evaluate, run_hepo, run_supervised, Checkpoint, EvalReport, Stage};
use gpr_core::policy::{read_policy, read_value, write_policy, write_value};
use gpr_core::quantizer::io::{load_corpus, read_corpus_csv, write_corpus_csv, write_emb1, write_rqk1};
use gpr_core::quantizer::{metric_collision, metric_cur_l1, metric_pas, rqkp_fit, rqkp_init, Assignments, RqkpModel};
use gpr_core::rng;
use gpr_core::schema::{read_events_jsonl, write_events_jsonl};
use gpr_core::simenv::{
    examples_from_events, generate_world, hierarchical_corpus, OracleConfig, RankingOracle, SimUser, World, WorldConfig,
};
use gpr_core::training::{EpochReport, LossKind, TrainingExample};
use gpr_core::{EmbeddingCorpus, PolicyParams, ValueParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{check_marker, sha256_file, write_atomic, write_marker, Manifest, MarkerStatus, StageMarker};

/// Files a data directory holds, in hashing order.
pub const DATA_FILES: [&str; 6] = [
    "world.json",
    "oracle.json",
    "items.csv",
    "catalog.jsonl",
    "users.jsonl",
    "events.jsonl",
];

/// A resolved config bound to an output directory.
#[derive(Clone, Debug)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, out: Option<&Path>) -> CliResult<Self> {
        let out = cfg.out_dir(out);
        let cfg = cfg.resolved();
        let hash = cfg.hash()?;
        Ok(Context { cfg, hash, out })
    }

    fn manifest(&self, command: &str, stage: Option<&str>) -> Manifest {
        Manifest::new(command, stage, &self.hash, &self.cfg.seeds)
    }

    /// Writes the resolved config next to the outputs.
    fn write_config(&self) -> CliResult<PathBuf> {
        let path = self.out.join("config.resolved.toml");
        write_atomic(&path, self.cfg.to_toml()?.as_bytes())?;
        Ok(path)
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: String,
    pub outputs: Vec<PathBuf>,
}

fn open_input(path: &Path, what: &str) -> CliResult<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            Err(CliError::config(format!("missing {what} at {}", path.display())))
        }
        Err(e) => Err(e.into()),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CliResult<T> {
    serde_json::from_reader(open_input(path, what)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn emit(files: &mut Vec<PathBuf>, path: PathBuf, bytes: &[u8]) -> CliResult<()> {
    write_atomic(&path, bytes)?;
    files.push(path);
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn path_string(codes: &[u32]) -> String {
    codes.iter().map(u32::to_string).collect::<Vec<_>>().join("-")
}

fn finish(ctx: &Ctx<'_>, mut files: Vec<PathBuf>, summary: String) -> CliResult<Outcome> {
    files.push(ctx.0.write_config()?);
    let mut m = ctx.0.manifest(ctx.1, ctx.2);
    m.record(&ctx.0.out, &files)?;
    files.push(m.write(&ctx.0.out)?);
    Ok(Outcome { summary, outputs: files })
}

/// Context, command name, manifest suffix.
struct Ctx<'a>(&'a Context, &'a str, Option<&'a str>);

// ---------------------------------------------------------------- synth-data

pub fn synth_data(ctx: &Context) -> CliResult<Outcome> {
    let dir = ctx.cfg.data_dir(&ctx.out);
    fs::create_dir_all(&dir)?;
    let world = generate_world(&ctx.cfg.world)?;
    let corpus = hierarchical_corpus(&ctx.cfg.tokenizer.corpus)?;
    let mut files = Vec::new();

    emit(&mut files, dir.join("world.json"), &json_bytes(&world.cfg)?)?;
    emit(&mut files, dir.join("oracle.json"), &json_bytes(world.oracle.config())?)?;
    let mut buf = Vec::new();
    write_corpus_csv(&world.items, &mut buf)?;
    emit(&mut files, dir.join("items.csv"), &buf)?;
    let mut buf = Vec::new();
    write_catalog_jsonl(&world.catalog, &mut buf)?;
    emit(&mut files, dir.join("catalog.jsonl"), &buf)?;
    let mut buf = Vec::new();
    for u in &world.users {
        serde_json::to_writer(&mut buf, u)?;
        buf.push(b'\n');
    }
    emit(&mut files, dir.join("users.jsonl"), &buf)?;
    let events = world.event_log()?;
    let n_events = events.len();
    let mut buf = Vec::new();
    write_events_jsonl(&events, &mut buf)?;
    emit(&mut files, dir.join("events.jsonl"), &buf)?;
    let mut buf = Vec::new();
    write_emb1(&corpus, &mut buf)?;
    emit(&mut files, dir.join("corpus.emb"), &buf)?;

    let summary = format!(
        "synth-data: {} items, {} users, {n_events} events, tokenizer corpus {}x{} in {}",
        world.catalog.len(),
        world.users.len(),
        corpus.len(),
        corpus.dim(),
        dir.display()
    );
    finish(&Ctx(ctx, "synth-data", None), files, summary)
}

/// Rebuilds the world that `synth-data` wrote.
pub fn load_world(dir: &Path) -> CliResult<World> {
    let cfg: WorldConfig = read_json(&dir.join("world.json"), "world config")?;
    let ocfg: OracleConfig = read_json(&dir.join("oracle.json"), "oracle config")?;
    let items = read_corpus_csv(open_input(&dir.join("items.csv"), "item embeddings")?)?;
    let catalog = read_catalog_jsonl(open_input(&dir.join("catalog.jsonl"), "catalog")?)?;
    let mut users = Vec::new();
    for (n, line) in open_input(&dir.join("users.jsonl"), "users")?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let u: SimUser =
            serde_json::from_str(&line).map_err(|e| CliError::Data(format!("users line {}: {e}", n + 1)))?;
        users.push(u);
    }
    let oracle = RankingOracle::new(ocfg, &items)?;
    Ok(World {
        cfg,
        items,
        catalog,
        users,
        oracle,
    })
}

fn load_examples(world: &World, dir: &Path, num_heads: usize) -> CliResult<Vec<TrainingExample>> {
    let events = read_events_jsonl(open_input(&dir.join("events.jsonl"), "event log")?)?;
    Ok(examples_from_events(
        events,
        &world.catalog,
        &world.targeting_map(),
        &world.featurizer(),
        &world.cfg.level_sizes,
        num_heads,
    )?)
}

/// Config hash combined with the hashes of the data files, so checkpoints
/// are tied to the data they were trained on.
fn run_hash(config_hash: &str, data: &Path) -> CliResult<String> {
    let mut h = Sha256::new();
    h.update(config_hash.as_bytes());
    for name in DATA_FILES {
        let path = data.join(name);
        if !path.exists() {
            return Err(CliError::config(format!("missing {name} in {}; run synth-data first", data.display())));
        }
        h.update(name.as_bytes());
        h.update(sha256_file(&path)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

// ------------------------------------------------------------------ tokenize

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerRow {
    pub method: String,
    pub items: usize,
    pub collision: f64,
    pub cur_l1: f64,
    pub pas: f64,
}

fn score_tokenizer(method: &str, model: &RqkpModel, test: &EmbeddingCorpus, k1: usize) -> CliResult<(TokenizerRow, Assignments)> {
    let a = model.assign(test)?;
    let row = TokenizerRow {
        method: method.to_string(),
        items: a.len(),
        collision: metric_collision(&a)?,
        cur_l1: metric_cur_l1(&a, k1)?,
        pas: metric_pas(&a, test)?,
    };
    Ok((row, a))
}

pub fn tokenize(ctx: &Context) -> CliResult<Outcome> {
    let tc = &ctx.cfg.tokenizer;
    let path = ctx.cfg.corpus_path(&ctx.out);
    if !path.exists() {
        return Err(CliError::config(format!("missing embedding corpus at {}", path.display())));
    }
    let corpus = load_corpus(&path)?;
    let (train, test) = corpus.split(tc.train_fraction, rng::derive_seed(ctx.cfg.seeds.global, 7))?;
    let plain = rqkp_init(&train, &tc.level_sizes, tc.fit.seed)?;
    let (refined, trace) = rqkp_fit(&plain, &train, &tc.fit)?;
    let k1 = tc.level_sizes[0];
    let (r0, a0) = score_tokenizer("rq_kmeans", &plain, &test, k1)?;
    let (r1, a1) = score_tokenizer("rq_kmeans_plus", &refined, &test, k1)?;

    let dir = ctx.out.join("tokenizer");
    let mut files = Vec::new();
    let mut buf = Vec::new();
    write_rqk1(&plain, &mut buf)?;
    emit(&mut files, dir.join("rq_kmeans.rqk1"), &buf)?;
    let mut buf = Vec::new();
    write_rqk1(&refined, &mut buf)?;
    emit(&mut files, dir.join("rq_kmeans_plus.rqk1"), &buf)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(&r0)?;
    w.serialize(&r1)?;
    emit(&mut files, dir.join("metrics.csv"), &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["item_id", "method", "path"])?;
    for (method, a) in [("rq_kmeans", &a0), ("rq_kmeans_plus", &a1)] {
        for (id, p) in a {
            w.write_record([id.as_str(), method, &path_string(p.codes())])?;
        }
    }
    emit(&mut files, dir.join("assignments.csv"), &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "reconstruction", "codebook", "commitment", "total"])?;
    for (i, l) in trace.iter().enumerate() {
        w.write_record([
            i.to_string(),
            l.reconstruction.to_string(),
            l.codebook.to_string(),
            l.commitment.to_string(),
            l.total().to_string(),
        ])?;
    }
    emit(&mut files, dir.join("fit_loss.csv"), &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;

    let summary = format!(
        "tokenize: {} train / {} test items; collision {:.4} -> {:.4}, CUR_L1 {:.4} -> {:.4}, PAS {:.4} -> {:.4}",
        train.len(),
        test.len(),
        r0.collision,
        r1.collision,
        r0.cur_l1,
        r1.cur_l1,
        r0.pas,
        r1.pas
    );
    finish(&Ctx(ctx, "tokenize", None), files, summary)
}

// -------------------------------------------------------------- run-pipeline

pub fn enabled_stages(ctx: &Context) -> Vec<Stage> {
    let p = &ctx.cfg.pipeline;
    let mut v = vec![Stage::Mtp];
    if p.run_vaft {
        v.push(Stage::Vaft);
    }
    if p.run_hepo {
        v.push(Stage::Hepo);
    }
    v
}

fn checkpoint_names(stage: Stage) -> [String; 2] {
    [format!("{}.gprp", stage.name()), format!("{}.gprv", stage.name())]
}

fn load_checkpoint(policy_path: &Path) -> CliResult<(PolicyParams, ValueParams)> {
    let policy = read_policy(open_input(policy_path, "policy checkpoint")?)?;
    let vpath = policy_path.with_extension("gprv");
    let vparams = if vpath.exists() {
        read_value(open_input(&vpath, "value checkpoint")?)?
    } else {
        ValueParams::new()
    };
    Ok((policy, vparams))
}

fn supervised_csv(reports: &[EpochReport]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let heads = reports
        .iter()
        .flat_map(|r| r.batches.first())
        .map(|b| b.per_head.len())
        .next()
        .unwrap_or(0);
    let mut header = vec!["epoch".to_string(), "step".to_string(), "loss".to_string()];
    header.extend((0..heads).map(|j| format!("head{j}")));
    w.write_record(&header)?;
    for (e, r) in reports.iter().enumerate() {
        for b in &r.batches {
            let mut rec = vec![e.to_string(), b.step.to_string(), b.loss.to_string()];
            rec.extend(b.per_head.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

struct StageOutput {
    policy: PolicyParams,
    vparams: ValueParams,
    report: Vec<u8>,
    summary: String,
}

fn run_stage(
    ctx: &Context,
    world: &World,
    data: &Path,
    stage: Stage,
    start: (PolicyParams, ValueParams),
    examples: &mut Option<Vec<TrainingExample>>,
) -> CliResult<StageOutput> {
    let p = &ctx.cfg.pipeline;
    match stage {
        Stage::Mtp | Stage::Vaft => {
            if examples.is_none() {
                *examples = Some(load_examples(world, data, p.num_heads)?);
            }
            let ex = examples.as_deref().unwrap_or_default();
            let (kind, epochs, lr, stream) = match stage {
                Stage::Mtp => (LossKind::Mtp, p.mtp_epochs, p.mtp_lr, 1),
                _ => (LossKind::Vaft, p.vaft_epochs, p.vaft_lr, 2),
            };
            let (policy, reports) =
                run_supervised(&start.0, ex, kind, epochs, lr, &p.train, rng::derive_seed(p.train_seed, stream))?;
            let last = reports.last().map_or(0.0, EpochReport::mean_loss);
            Ok(StageOutput {
                policy,
                vparams: start.1,
                report: supervised_csv(&reports)?,
                summary: format!("{} examples, {epochs} epochs, final mean loss {last:.4}", ex.len()),
            })
        }
        Stage::Hepo => {
            let env = world.environment(p.reward.clone(), p.beam.clone())?;
            let (state, reports) = run_hepo(world, &env, &start.0, &start.1, p)?;
            let mut buf = Vec::new();
            write_reports_csv(&reports, &mut buf)?;
            let last = reports.last().map_or(0.0, |r| r.mean_normalized);
            Ok(StageOutput {
                policy: state.policy,
                vparams: state.vparams,
                report: buf,
                summary: format!("{} iterations, last mean normalized value {last:.4}", reports.len()),
            })
        }
    }
}

pub fn run_pipeline(ctx: &Context, only: Option<Stage>) -> CliResult<Outcome> {
    let data = ctx.cfg.data_dir(&ctx.out);
    let hash = run_hash(&ctx.hash, &data)?;
    let world = load_world(&data)?;
    let enabled = enabled_stages(ctx);
    let targets = match only {
        Some(s) if !enabled.contains(&s) => {
            return Err(CliError::config(format!("stage {} is disabled in this config", s.name())));
        }
        Some(s) => vec![s],
        None => enabled.clone(),
    };
    let ck_dir = ctx.out.join("checkpoints");
    let mut files = Vec::new();
    let mut lines = Vec::new();
    let mut examples = None;
    for &stage in &targets {
        let name = stage.name();
        if check_marker(&ctx.out, name, &hash, &ck_dir)? == MarkerStatus::Done {
            log::info!("stage {name} already complete under this config; skipping");
            lines.push(format!("{name}: already complete"));
            continue;
        }
        let pos = enabled.iter().position(|&s| s == stage).unwrap_or(0);
        let start = match pos.checked_sub(1).map(|i| enabled[i]) {
            None => (
                PolicyParams::new(ctx.cfg.pipeline.num_heads, world.cfg.level_sizes.clone())?,
                ValueParams::new(),
            ),
            Some(prev) => {
                if check_marker(&ctx.out, prev.name(), &hash, &ck_dir)? != MarkerStatus::Done {
                    return Err(CliError::config(format!(
                        "stage {name} starts from stage {} which has not been run",
                        prev.name()
                    )));
                }
                load_checkpoint(&ck_dir.join(format!("{}.gprp", prev.name())))?
            }
        };
        log::info!("running stage {name}");
        let outcome = run_stage(ctx, &world, &data, stage, start, &mut examples).map_err(|e| e.in_stage(name))?;
        let [pname, vname] = checkpoint_names(stage);
        let mut buf = Vec::new();
        write_policy(&outcome.policy, &mut buf)?;
        emit(&mut files, ck_dir.join(&pname), &buf)?;
        let mut buf = Vec::new();
        write_value(&outcome.vparams, &mut buf)?;
        emit(&mut files, ck_dir.join(&vname), &buf)?;
        emit(&mut files, ctx.out.join("reports").join(format!("{name}_train.csv")), &outcome.report)?;
        let mut checkpoint = BTreeMap::new();
        for n in [pname, vname] {
            checkpoint.insert(n.clone(), sha256_file(&ck_dir.join(&n))?);
        }
        write_marker(
            &ctx.out,
            &StageMarker {
                stage: name.to_string(),
                config_hash: hash.clone(),
                checkpoint,
            },
        )?;
        lines.push(format!("{name}: {}", outcome.summary));
    }

    let done = completed_stages(ctx, &hash)?;
    // every completed stage is listed, including ones skipped by this run
    files.clear();
    for s in &done {
        for n in checkpoint_names(*s) {
            files.push(ck_dir.join(n));
        }
        files.push(ctx.out.join("reports").join(format!("{}_train.csv", s.name())));
        files.push(crate::manifest::marker_path(&ctx.out, s.name()));
    }
    let rows = evaluate_stages(ctx, &world, &done)?;
    let (eval_files, table) = write_eval(&ctx.out, "eval", &rows)?;
    files.extend(eval_files);
    lines.push(table);
    let suffix = only.map(Stage::name);
    finish(&Ctx(ctx, "run-pipeline", suffix), files, lines.join("\n"))
}

fn completed_stages(ctx: &Context, hash: &str) -> CliResult<Vec<Stage>> {
    let ck_dir = ctx.out.join("checkpoints");
    let mut done = Vec::new();
    for s in enabled_stages(ctx) {
        if check_marker(&ctx.out, s.name(), hash, &ck_dir)? == MarkerStatus::Done {
            done.push(s);
        }
    }
    Ok(done)
}

// ---------------------------------------------------------------------- eval

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub label: String,
    pub requests: usize,
    pub hitrate: f64,
    pub ndcg: f64,
    pub opr: f64,
    pub mean_normalized: f64,
    pub max_normalized: f64,
    pub degenerate: bool,
    pub greedy_value: f64,
    pub optimum_value: f64,
}

impl EvalRow {
    fn new(label: &str, r: &EvalReport) -> Self {
        EvalRow {
            label: label.to_string(),
            requests: r.requests,
            hitrate: r.hitrate,
            ndcg: r.ndcg,
            opr: r.opr,
            mean_normalized: r.mean_normalized,
            max_normalized: r.max_normalized,
            degenerate: r.degenerate,
            greedy_value: r.greedy_value,
            optimum_value: r.optimum_value,
        }
    }
}

fn evaluate_checkpoints(ctx: &Context, world: &World, cks: Vec<(String, Checkpoint)>) -> CliResult<Vec<EvalRow>> {
    if cks.is_empty() {
        return Ok(Vec::new());
    }
    let p = &ctx.cfg.pipeline;
    let env = world.environment(p.reward.clone(), p.beam.clone())?;
    let heldout = world.heldout(p.eval.heldout_seed)?;
    let (labels, cks): (Vec<String>, Vec<Checkpoint>) = cks.into_iter().unzip();
    let reports = evaluate(&env, &cks, &heldout, &p.eval)?;
    Ok(labels.iter().zip(&reports).map(|(l, r)| EvalRow::new(l, r)).collect())
}

fn evaluate_stages(ctx: &Context, world: &World, stages: &[Stage]) -> CliResult<Vec<EvalRow>> {
    let ck_dir = ctx.out.join("checkpoints");
    let mut cks = Vec::new();
    for &s in stages {
        let (policy, vparams) = load_checkpoint(&ck_dir.join(format!("{}.gprp", s.name())))?;
        cks.push((
            s.name().to_string(),
            Checkpoint {
                stage: s,
                policy,
                vparams,
            },
        ));
    }
    evaluate_checkpoints(ctx, world, cks)
}

/// Writes `reports/<name>.csv` and, for two or more rows, the
/// stage-over-stage deltas in `reports/<name>_deltas.csv`.
fn write_eval(out: &Path, name: &str, rows: &[EvalRow]) -> CliResult<(Vec<PathBuf>, String)> {
    let dir = out.join("reports");
    let mut files = Vec::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    emit(&mut files, dir.join(format!("{name}.csv")), &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
    if rows.len() >= 2 {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["from", "to", "d_hitrate", "d_ndcg", "d_opr", "d_mean_normalized", "d_greedy_value"])?;
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            w.write_record([
                a.label.clone(),
                b.label.clone(),
                (b.hitrate - a.hitrate).to_string(),
                (b.ndcg - a.ndcg).to_string(),
                (b.opr - a.opr).to_string(),
                (b.mean_normalized - a.mean_normalized).to_string(),
                (b.greedy_value - a.greedy_value).to_string(),
            ])?;
        }
        emit(
            &mut files,
            dir.join(format!("{name}_deltas.csv")),
            &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?,
        )?;
    }
    Ok((files, eval_table(rows)))
}

fn eval_table(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<16} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10}",
        "checkpoint", "hitrate", "ndcg", "opr", "mean_norm", "greedy", "optimum"
    );
    for r in rows {
        s.push_str(&format!(
            "\n{:<16} {:>8.4} {:>8.4} {:>8.4} {:>10.4} {:>10.4} {:>10.4}",
            r.label, r.hitrate, r.ndcg, r.opr, r.mean_normalized, r.greedy_value, r.optimum_value
        ));
    }
    s
}

pub fn eval(ctx: &Context, stage: Option<Stage>, checkpoint: Option<&Path>) -> CliResult<Outcome> {
    let data = ctx.cfg.data_dir(&ctx.out);
    let hash = run_hash(&ctx.hash, &data)?;
    let world = load_world(&data)?;
    let (name, rows) = match (stage, checkpoint) {
        (Some(_), Some(_)) => return Err(CliError::config("pass either --stage or --checkpoint, not both")),
        (None, Some(path)) => {
            if !path.exists() {
                return Err(CliError::config(format!("missing checkpoint at {}", path.display())));
            }
            let label = path.file_stem().map_or("checkpoint".into(), |s| s.to_string_lossy().into_owned());
            let (policy, vparams) = load_checkpoint(path)?;
            let ck = Checkpoint {
                stage: label.parse().unwrap_or(Stage::Hepo),
                policy,
                vparams,
            };
            let rows = evaluate_checkpoints(ctx, &world, vec![(label.clone(), ck)])?;
            (format!("eval_{label}"), rows)
        }
        (Some(s), None) => {
            let ck_dir = ctx.out.join("checkpoints");
            if check_marker(&ctx.out, s.name(), &hash, &ck_dir)? != MarkerStatus::Done {
                return Err(CliError::config(format!("no checkpoint for stage {}; run it first", s.name())));
            }
            (format!("eval_{}", s.name()), evaluate_stages(ctx, &world, &[s])?)
        }
        (None, None) => {
            let done = completed_stages(ctx, &hash)?;
            if done.is_empty() {
                return Err(CliError::config("no completed stages to evaluate; run run-pipeline first"));
            }
            ("eval".to_string(), evaluate_stages(ctx, &world, &done)?)
        }
    };
    let (files, table) = write_eval(&ctx.out, &name, &rows)?;
    let suffix = name.strip_prefix("eval_").map(str::to_string);
    finish(&Ctx(ctx, "eval", suffix.as_deref()), files, table)
}

// -------------------------------------------------------------------- report

/// Reads numeric columns by header name; `None` when the file is absent.
fn read_columns(path: &Path, cols: &[&str]) -> CliResult<Option<Vec<Vec<f64>>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| CliError::Data(format!("{} has no column {c}", path.display())))
        })
        .collect::<CliResult<_>>()?;
    let mut out = vec![Vec::new(); cols.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| CliError::Data(format!("{}: bad number {:?}", path.display(), &rec[i])))?;
            out[k].push(v);
        }
    }
    Ok(Some(out))
}

pub fn report(ctx: &Context) -> CliResult<Outcome> {
    let reports = ctx.out.join("reports");
    let eval_path = reports.join("eval.csv");
    if !eval_path.exists() {
        return Err(CliError::config(format!(
            "missing evaluation report at {}; run run-pipeline first",
            eval_path.display()
        )));
    }
    let mut rows: Vec<EvalRow> = Vec::new();
    for r in csv::Reader::from_path(&eval_path)?.deserialize() {
        rows.push(r?);
    }

    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(["source", "label", "metric", "value"])?;
    for r in &rows {
        for (m, v) in [
            ("hitrate", r.hitrate),
            ("ndcg", r.ndcg),
            ("opr", r.opr),
            ("mean_normalized", r.mean_normalized),
            ("max_normalized", r.max_normalized),
            ("greedy_value", r.greedy_value),
            ("optimum_value", r.optimum_value),
        ] {
            summary.write_record(["eval", r.label.as_str(), m, &v.to_string()])?;
        }
    }
    let tok_path = ctx.out.join("tokenizer").join("metrics.csv");
    let mut tok_rows: Vec<TokenizerRow> = Vec::new();
    if tok_path.exists() {
        for r in csv::Reader::from_path(&tok_path)?.deserialize() {
            tok_rows.push(r?);
        }
    }
    for t in &tok_rows {
        for (m, v) in [("collision", t.collision), ("cur_l1", t.cur_l1), ("pas", t.pas)] {
            summary.write_record(["tokenizer", t.method.as_str(), m, &v.to_string()])?;
        }
    }

    let mut plot = csv::Writer::from_writer(Vec::new());
    plot.write_record(["series", "x", "y"])?;
    for stage in ["mtp", "vaft"] {
        if let Some(cols) = read_columns(&reports.join(format!("{stage}_train.csv")), &["loss"])? {
            for (i, y) in cols[0].iter().enumerate() {
                plot.write_record([format!("{stage}_loss"), i.to_string(), y.to_string()])?;
            }
        }
    }
    let hepo_cols = ["mean_r", "mean_normalized", "clip_fraction", "approx_kl", "policy_loss", "value_loss"];
    if let Some(cols) = read_columns(&reports.join("hepo_train.csv"), &hepo_cols)? {
        for (name, col) in hepo_cols.iter().zip(&cols) {
            for (i, y) in col.iter().enumerate() {
                plot.write_record([format!("hepo_{name}"), i.to_string(), y.to_string()])?;
            }
        }
    }
    if let Some(cols) = read_columns(&ctx.out.join("tokenizer").join("fit_loss.csv"), &["total"])? {
        for (i, y) in cols[0].iter().enumerate() {
            plot.write_record(["tokenizer_loss".to_string(), i.to_string(), y.to_string()])?;
        }
    }
    for (i, r) in rows.iter().enumerate() {
        plot.write_record(["eval_ndcg".to_string(), i.to_string(), r.ndcg.to_string()])?;
        plot.write_record(["eval_mean_normalized".to_string(), i.to_string(), r.mean_normalized.to_string()])?;
    }

    let mut files = Vec::new();
    emit(
        &mut files,
        reports.join("summary.csv"),
        &summary.into_inner().map_err(|e| CliError::Data(e.to_string()))?,
    )?;
    emit(
        &mut files,
        reports.join("plot_data.csv"),
        &plot.into_inner().map_err(|e| CliError::Data(e.to_string()))?,
    )?;
    let mut text = eval_table(&rows);
    for t in &tok_rows {
        text.push_str(&format!(
            "\ntokenizer {:<15} collision {:.4} cur_l1 {:.4} pas {:.4}",
            t.method, t.collision, t.cur_l1, t.pas
        ));
    }
    finish(&Ctx(ctx, "report", None), files, text)
}
