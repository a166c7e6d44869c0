//! Subcommand bodies. Each reads and writes files only and stamps its
//! output directory with a `run.json` manifest.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use tableseq::decode::{bench_decode, write_bench_csv};
use tableseq::imgproc::{enhance, NormStats};
use tableseq::metrics::{evaluate, Metric};
use tableseq::nn::{load_checkpoint, save_checkpoint, write_curve_csv, MicroModel};
use tableseq::synth::{make_dataset, AugmentProfile};
use tableseq::table::{emit_markup, write_jsonl, AnnotationRecord};
use tableseq::targets::{build_targets, write_tsqt};
use tableseq::{Image, QuantSpec, Table, Vocab};

use crate::args::*;
use crate::config::{parse_list, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::*;
use crate::plot::{render_svg, CsvTable};
use crate::sweep::{keybias_grid, keybias_sweep, quant_sweep, write_rows};

/// Reproducibility stamp written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub argv: &'a [String],
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
}

fn write_manifest(out: &Path, command: &str, argv: &[String], cfg: &RunConfig, outputs: &[&str]) -> CliResult<()> {
    let m = RunManifest {
        command,
        argv,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

/// Defaults, then the config file, then global flags.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.data.seed = s;
        cfg.train.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(u) = cli.grid_unit {
        cfg.data.quant = QuantSpec::new(u)?;
    }
    Ok(cfg)
}

pub fn run(cli: Cli, argv: &[String]) -> CliResult<()> {
    let mut cfg = resolve_config(&cli)?;
    if cfg.jobs > 0 {
        // Fails only if a pool already exists, e.g. when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(&mut cfg, a, argv),
        Command::Enhance(a) => cmd_enhance(&cfg, a, argv),
        Command::Targets(a) => cmd_targets(&cfg, a, argv),
        Command::Train(a) => cmd_train(&mut cfg, a, argv),
        Command::Decode(a) => cmd_decode(&mut cfg, a, argv, cli.grid_unit.is_some()),
        Command::Eval(a) => cmd_eval(&cfg, a, argv),
        Command::SweepKeybias(a) => cmd_sweep_keybias(&mut cfg, a, argv, cli.grid_unit.is_some()),
        Command::SweepQuant(a) => cmd_sweep_quant(&mut cfg, a, argv),
        Command::Plot(a) => cmd_plot(&cfg, a, argv),
        Command::PrintConfig => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn create_dir(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

pub fn cmd_synth(cfg: &mut RunConfig, a: SynthArgs, argv: &[String]) -> CliResult<()> {
    if let Some(n) = a.count {
        cfg.data.count = n;
    }
    if let Some(v) = a.val_fraction {
        cfg.data.val_fraction = v;
    }
    if let Some(name) = &a.aug_profile {
        let d = &cfg.data;
        cfg.data.augment = AugmentProfile::by_name(name, d.rows.1, d.cols.1, d.max_span)
            .ok_or_else(|| CliError::Config(format!("unknown augmentation profile `{name}`")))?;
    }
    cfg.validate()?;
    create_dir(&a.out)?;
    let summary = make_dataset(&cfg.data, &a.out)?;
    info!("wrote {} samples to {}", summary.records.len(), a.out.display());
    write_manifest(&a.out, "synth", argv, cfg, &["manifest.jsonl", "images/", "targets/"])
}

fn is_pnm(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm" | "pnm"))
}

pub fn cmd_enhance(cfg: &RunConfig, a: EnhanceArgs, argv: &[String]) -> CliResult<()> {
    cfg.enhance.validate()?;
    require_path(&a.input)?;
    create_dir(&a.out)?;
    let run_one = |src: &Path, dst: &Path| -> CliResult<()> {
        enhance(&Image::read_pnm(src)?, &cfg.enhance)?.write_pnm(dst)?;
        Ok(())
    };
    if a.input.extension().is_some_and(|e| e == "jsonl") {
        let base = manifest_base(&a.input);
        let mut records = read_manifest(&a.input)?;
        create_dir(&a.out.join("images"))?;
        records.par_iter_mut().enumerate().try_for_each(|(i, r)| -> CliResult<()> {
            let src = base.join(&r.image);
            let ext = src.extension().and_then(|e| e.to_str()).unwrap_or("pgm").to_string();
            let name = format!("images/{i:05}.{ext}");
            run_one(&src, &a.out.join(&name))?;
            r.image = name;
            if let Some(t) = &r.targets {
                r.targets = Some(absolute(&base.join(t))?);
            }
            Ok(())
        })?;
        write_jsonl(a.out.join("manifest.jsonl"), &records)?;
    } else if a.input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&a.input)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| is_pnm(p)).collect();
        files.sort();
        files.par_iter().try_for_each(|p| run_one(p, &a.out.join(p.file_name().expect("listed file has a name"))))?;
    } else {
        run_one(&a.input, &a.out.join(a.input.file_name().ok_or_else(|| CliError::PathMissing(a.input.clone()))?))?;
    }
    write_manifest(&a.out, "enhance", argv, cfg, &["images"])
}

fn absolute(p: &Path) -> CliResult<String> {
    Ok(std::fs::canonicalize(p).map_err(|_| CliError::PathMissing(p.to_path_buf()))?.display().to_string())
}

pub fn cmd_targets(cfg: &RunConfig, a: TargetsArgs, argv: &[String]) -> CliResult<()> {
    let base = manifest_base(&a.manifest);
    let mut records = read_manifest(&a.manifest)?;
    create_dir(&a.out.join("targets"))?;
    records.par_iter_mut().enumerate().try_for_each(|(i, r)| -> CliResult<()> {
        let maps = build_targets(&r.to_table()?, &cfg.data.ridge)?;
        let name = format!("targets/{i:05}.tsqt");
        write_tsqt(a.out.join(&name), &maps)?;
        r.image = absolute(&base.join(&r.image))?;
        r.targets = Some(name);
        Ok(())
    })?;
    write_jsonl(a.out.join("manifest.jsonl"), &records)?;
    info!("wrote targets for {} records", records.len());
    write_manifest(&a.out, "targets", argv, cfg, &["manifest.jsonl", "targets/"])
}

pub fn cmd_train(cfg: &mut RunConfig, a: TrainArgs, argv: &[String]) -> CliResult<()> {
    if let Some(s) = a.steps {
        cfg.set_steps(s);
    }
    if let Some(h) = a.mtp_heads {
        cfg.set_mtp_heads(h);
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(n) = a.count {
        cfg.data.count = n;
    }
    let vocab = Vocab::default();
    cfg.model.vocab = vocab.len();
    cfg.validate()?;
    let real = a.data.as_deref().map(load_labeled).transpose()?.unwrap_or_default();
    let synth = match (&a.synth, &a.data) {
        (Some(p), _) => load_labeled(p)?,
        (None, None) => synth_labeled(&cfg.data)?,
        (None, Some(_)) => Vec::new(),
    };
    let all: Vec<LabeledImage> = synth.iter().chain(&real).cloned().collect();
    let stats = gray_stats(&all)?;
    let prep = |items: &[LabeledImage]| prepare(items, &stats, &cfg.model, &vocab, cfg.data.quant, &cfg.data.ridge);
    let (synth_s, real_s) = (prep(&synth)?, prep(&real)?);
    info!("training on {} synthetic and {} real samples for {} steps", synth_s.len(), real_s.len(), cfg.train.steps);
    let every = (cfg.train.steps / 20).max(1);
    let (model, curve) = train_model(cfg, &synth_s, &real_s, &vocab, |m| {
        if m.step % every == 0 {
            info!("step {:>6}  loss {:.4}  seq {:.4}  prior {:.4}  lr {:.2e}", m.step, m.total, m.loss_seq, m.loss_prior, m.lr);
        }
    })?;
    create_dir(&a.out)?;
    save_checkpoint(a.out.join("model.tsqm"), &model)?;
    stats.save(a.out.join("stats.json"))?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml())?;
    write_curve_csv(a.out.join("curve.csv"), &curve)?;
    write_manifest(&a.out, "train", argv, cfg, &["model.tsqm", "stats.json", "config.toml", "curve.csv"])
}

/// A trained model with the normalization and run settings saved beside it.
pub struct ModelDir {
    pub model: MicroModel<f32>,
    pub stats: NormStats,
    pub config: RunConfig,
}

pub fn load_model_dir(dir: &Path) -> CliResult<ModelDir> {
    require_path(dir)?;
    let model = load_checkpoint(dir.join("model.tsqm"))?;
    let stats = NormStats::load(dir.join("stats.json"))?;
    let config = match dir.join("config.toml") {
        p if p.exists() => RunConfig::load(&p)?,
        _ => RunConfig::default(),
    };
    let vocab = Vocab::default();
    if model.cfg.vocab != vocab.len() {
        return Err(CliError::Config(format!("checkpoint vocabulary has {} entries, expected {}", model.cfg.vocab, vocab.len())));
    }
    Ok(ModelDir { model, stats, config })
}

fn model_inputs(items: &[LabeledImage], md: &ModelDir) -> CliResult<Vec<Vec<f32>>> {
    items.par_iter().map(|x| model_input(&x.image, &md.model.cfg, &md.stats)).collect()
}

pub fn cmd_decode(cfg: &mut RunConfig, a: DecodeArgs, argv: &[String], unit_flag: bool) -> CliResult<()> {
    let md = load_model_dir(&a.model)?;
    // The grid unit is a property of the trained vocabulary usage.
    let quant = if unit_flag { cfg.data.quant } else { md.config.data.quant };
    cfg.data.quant = quant;
    cfg.model = md.model.cfg.clone();
    if let Some(n) = a.block_n {
        cfg.decode.block_n = n;
    }
    if let Some(m) = a.max_tokens {
        cfg.decode.max_tokens = m;
    }
    cfg.train.mtp_weights = vec![1.0 / cfg.model.mtp_heads as f64; cfg.model.mtp_heads];
    cfg.validate()?;
    let vocab = Vocab::default();
    let items = load_labeled(&a.manifest)?;
    let inputs = model_inputs(&items, &md)?;
    let b = budget(&md.model.cfg, cfg.decode.max_tokens, cfg.decode.block_n, &vocab);
    let decoded = decode_all(&md.model, &inputs, &b, &vocab, quant);

    create_dir(&a.out)?;
    let mut records = Vec::with_capacity(items.len());
    let mut log = BufWriter::new(File::create(a.out.join("decode.csv"))?);
    writeln!(log, "key,tokens,outer_steps,forward_passes,wall_seconds,stopped,repairs,failure")?;
    let mut failures = 0;
    for (x, d) in items.iter().zip(&decoded) {
        let markup = emit_markup(&d.table, d.table.has_all_boxes(), quant)?;
        records.push(AnnotationRecord::from_table(&d.table, x.key.clone(), markup));
        let (tokens, steps, passes, wall, stopped) =
            d.trace.as_ref().map_or((0, 0, 0, 0.0, false), |t| (t.emitted.len(), t.outer_steps, t.forward_passes, t.wall_seconds, t.stopped(b.stop)));
        failures += usize::from(d.failure.is_some());
        let fail = d.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(log, "{},{tokens},{steps},{passes},{wall:.6},{stopped},{},{fail}", x.key, d.repairs.len())?;
    }
    log.flush()?;
    write_jsonl(a.out.join("pred.jsonl"), &records)?;
    if failures > 0 {
        log::warn!("{failures} of {} images could not be decoded into a table", items.len());
    }
    let mut outputs = vec!["pred.jsonl", "decode.csv"];
    if a.bench {
        let budgets: Vec<_> = cfg.decode.bench_n.iter().filter(|&&n| n <= md.model.cfg.mtp_heads).map(|&n| budget(&md.model.cfg, cfg.decode.max_tokens, n, &vocab)).collect();
        let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
        let rows = bench_decode(&md.model, &refs, &budgets)?;
        write_bench_csv(BufWriter::new(File::create(a.out.join("bench.csv"))?), &rows)?;
        outputs.push("bench.csv");
    }
    write_manifest(&a.out, "decode", argv, cfg, &outputs)
}

pub fn cmd_eval(cfg: &RunConfig, a: EvalArgs, argv: &[String]) -> CliResult<()> {
    let gold = read_manifest(&a.gold)?;
    let pred: HashMap<String, AnnotationRecord> = read_manifest(&a.pred)?.into_iter().map(|r| (r.image.clone(), r)).collect();
    let mut pairs = Vec::with_capacity(gold.len());
    let mut missing = 0;
    for g in &gold {
        let p = match pred.get(&g.image) {
            Some(r) => r.to_table()?,
            None => {
                missing += 1;
                placeholder_table()
            }
        };
        pairs.push((p, g.to_table()?));
    }
    if missing > 0 {
        log::warn!("{missing} gold samples have no prediction and score as blank tables");
    }
    let metrics: Vec<Metric> = if a.metric.is_empty() {
        let boxed = pairs.iter().all(|(_, g)| g.has_all_boxes());
        Metric::ALL.into_iter().filter(|m| boxed || !matches!(m, Metric::Car | Metric::Ap50)).collect()
    } else {
        a.metric.iter().map(|m| Metric::parse(m)).collect::<Result<_, _>>()?
    };
    let report = evaluate(&pairs, &metrics)?;
    create_dir(&a.out)?;
    let keys: Vec<String> = gold.iter().map(|g| g.image.clone()).collect();
    report.write_csv(BufWriter::new(File::create(a.out.join("eval.csv"))?), Some(&keys))?;
    let summary = report.summary_json()?;
    std::fs::write(a.out.join("summary.json"), &summary)?;
    println!("{summary}");
    write_manifest(&a.out, "eval", argv, cfg, &["eval.csv", "summary.json"])
}

pub fn cmd_sweep_keybias(cfg: &mut RunConfig, a: SweepKeybiasArgs, argv: &[String], unit_flag: bool) -> CliResult<()> {
    let md = load_model_dir(&a.model)?;
    let quant = if unit_flag { cfg.data.quant } else { md.config.data.quant };
    cfg.data.quant = quant;
    // A list given alone selects only its own block.
    match (&a.lambda0, &a.gamma) {
        (None, None) => {}
        (l, g) => {
            cfg.sweep.lambda0 = l.as_deref().map(parse_list).transpose()?.unwrap_or_default();
            cfg.sweep.gamma = g.as_deref().map(parse_list).transpose()?.unwrap_or_default();
        }
    }
    cfg.sweep.full_grid |= a.full_grid;
    if let Some(m) = a.max_tokens {
        cfg.decode.max_tokens = m;
    }
    let vocab = Vocab::default();
    let items = load_labeled(&a.manifest)?;
    let inputs = model_inputs(&items, &md)?;
    let gold: Vec<Table> = items.iter().map(|x| x.table.clone()).collect();
    let grid = keybias_grid(&md.model.cfg.keybias, &cfg.sweep.lambda0, &cfg.sweep.gamma, cfg.sweep.full_grid);
    if grid.is_empty() {
        return Err(CliError::Config("the sweep grid is empty".into()));
    }
    let rows = keybias_sweep(&md.model, &inputs, &gold, &grid, cfg.decode.max_tokens, &vocab, quant)?;
    create_dir(&a.out)?;
    write_rows(File::create(a.out.join("keybias.csv"))?, &rows)?;
    write_manifest(&a.out, "sweep-keybias", argv, cfg, &["keybias.csv"])
}

pub fn cmd_sweep_quant(cfg: &mut RunConfig, a: SweepQuantArgs, argv: &[String]) -> CliResult<()> {
    if let Some(u) = &a.units {
        cfg.sweep.units = parse_list(u)?;
    }
    if let Some(n) = a.count {
        cfg.data.count = n;
    }
    if let Some(s) = a.steps {
        cfg.sweep.quant_steps = s;
    }
    let vocab = Vocab::default();
    cfg.model.vocab = vocab.len();
    cfg.validate()?;
    let rows = quant_sweep(cfg, &cfg.sweep.units, cfg.sweep.quant_steps, &vocab, |m| info!("{m}"))?;
    create_dir(&a.out)?;
    write_rows(File::create(a.out.join("quant.csv"))?, &rows)?;
    write_manifest(&a.out, "sweep-quant", argv, cfg, &["quant.csv"])
}

pub fn cmd_plot(cfg: &RunConfig, a: PlotArgs, argv: &[String]) -> CliResult<()> {
    let table = CsvTable::read(&a.csv)?;
    let title = if a.title.is_empty() { a.csv.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string() } else { a.title };
    let svg = render_svg(&table, a.x.as_deref(), &a.y, a.kind, &title)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    std::fs::write(&a.out, svg)?;
    let dir = a.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = a.out.file_name().and_then(|s| s.to_str()).unwrap_or("plot.svg");
    write_manifest(dir, "plot", argv, cfg, &[name])
}
