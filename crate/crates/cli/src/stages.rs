//! Pipeline stages. Each one checks its inputs, skips work whose stamp
//! matches, and writes its artifacts atomically under the run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use autocw::acoustics::wav::{read_ir, write_ir, WavFormat};
use autocw::acoustics::{avg_xcorr_envelope, image_method_ir, side_energy_ratio, Absorption};
use autocw::compose::{
    autocw_search_with_profile, composed_windows, evaluate_window, grid_search, probe_profile,
    scw_search, SearchConfig,
};
use autocw::features::io::{load_features, load_labels, save_features, save_labels};
use autocw::features::{
    apply_normalizer, fit_normalizer_set, rho_cw, ContextWindowSpec, FrameMatrix,
};
use autocw::nn::io::save_model;
use autocw::nn::{frame_error_rate, init_model, train_sgd, MlpConfig};
use autocw::probe::GradientProfile;
use autocw::rng::{derive_seed, seeded};
use autocw::synthdata::{
    contaminate, corpus_features, gen_corpus, load_corpus, save_corpus, split_corpus, Corpus,
    CorpusConfig, NamedIr,
};
use autocw::task::ir_set;
use autocw::{ImpulseResponse, RoomSpec, Signal};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, IrKind, RawConfig};
use crate::run::{write_atomic, MissingInputs, RunDir};

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

pub struct Ctx {
    pub run: RunDir,
    pub cfg: ExperimentConfig,
    pub raw: RawConfig,
    pub jobs: usize,
}

/// Independent seed for a named stage.
pub fn stage_seed(base: u64, name: &str) -> u64 {
    let h = Sha256::digest(name.as_bytes());
    let mut tag = [0u8; 8];
    tag.copy_from_slice(&h[..8]);
    derive_seed(base, u64::from_le_bytes(tag))
}

fn t60_tag(t60: f64) -> u64 {
    (t60 * 1000.0).round() as u64
}

impl Ctx {
    fn cond(&self, t60: f64) -> PathBuf {
        self.run.path(ExperimentConfig::condition_name(t60))
    }

    fn clean_corpus_dir(&self) -> PathBuf {
        self.run.path("corpus")
    }

    /// The clean corpus stands in for the `T60 = 0` condition.
    fn corpus_dir(&self, t60: f64) -> PathBuf {
        if t60 > 0.0 {
            self.cond(t60).join("corpus")
        } else {
            self.clean_corpus_dir()
        }
    }

    fn features_dir(&self, t60: f64) -> PathBuf {
        self.cond(t60).join("features")
    }

    fn seed(&self, name: &str) -> u64 {
        stage_seed(self.cfg.seed, name)
    }

    pub fn config_text(&self, sections: &[&str], extra: &str) -> String {
        format!("{}{extra}", self.raw.section_text(sections))
    }

    fn search_config(&self) -> SearchConfig {
        let seed = self.seed("search");
        let mut sc = SearchConfig::new(self.cfg.cw_min, self.cfg.cw_max);
        sc.hidden_dims = self.cfg.hidden.clone();
        sc.n_classes = Some(self.cfg.corpus.n_classes);
        sc.train = self.cfg.train.clone();
        sc.train.seed = seed;
        sc.probe_batch_size = self.cfg.probe_batch_size;
        sc.seed = seed;
        sc.grid_side_limit = self.cfg.grid_side_limit;
        sc.jobs = self.jobs.max(1);
        sc
    }

    fn reverberant(&self) -> Vec<f64> {
        self.cfg.t60s.iter().copied().filter(|&t| t > 0.0).collect()
    }
}

pub fn gen(ctx: &Ctx) -> Result<()> {
    let out = ctx.clean_corpus_dir();
    let digest = ctx.run.input_digest(
        "gen",
        &ctx.config_text(&["global", "corpus", "features"], ""),
        &[],
    )?;
    ctx.run.produce("gen", &out, &digest, |p| {
        let corpus = gen_corpus(&CorpusConfig {
            seed: ctx.seed("gen"),
            ..ctx.cfg.corpus.clone()
        })?;
        let (tr, dv, te) = split_corpus(&corpus, ctx.cfg.split, ctx.seed("split"))?;
        for (name, part) in SPLITS.iter().zip([tr, dv, te]) {
            save_corpus(p.join(name), &part, WavFormat::Float32)?;
        }
        Ok(())
    })?;
    Ok(())
}

fn room_irs(ctx: &Ctx, prefix: &str, t60: f64, seed: u64) -> Result<Vec<NamedIr>> {
    let mut rng = seeded(seed);
    let dims = ctx.cfg.room;
    (0..ctx.cfg.irs_per_set)
        .map(|k| {
            let mut pos = || [0, 1, 2].map(|i| rng.random_range(0.5..(dims[i] - 0.5).max(0.51)));
            let (src, mic) = (pos(), pos());
            let mut room = RoomSpec::new(
                dims,
                src,
                mic,
                Absorption::TargetT60(t60),
                ctx.cfg.corpus.sample_rate,
            );
            room.max_reflection_order = ctx
                .cfg
                .room_order
                .unwrap_or_else(|| room.order_for_duration(t60 * ctx.cfg.ir_length_factor));
            let ir = image_method_ir(&room)
                .with_context(|| format!("image-method IR {prefix}{k} at T60 {t60} s"))?;
            Ok(NamedIr::new(format!("{prefix}{k}"), ir))
        })
        .collect()
}

pub fn ir(ctx: &Ctx) -> Result<()> {
    for t60 in ctx.reverberant() {
        let out = ctx
            .run
            .path("irs")
            .join(ExperimentConfig::condition_name(t60));
        let digest = ctx.run.input_digest(
            "ir",
            &ctx.config_text(&["global", "acoustics"], &format!("t60={t60}\n")),
            &[],
        )?;
        ctx.run.produce("ir", &out, &digest, |p| {
            let base = derive_seed(ctx.seed("ir"), t60_tag(t60));
            let mut sets = Vec::new();
            for (prefix, tag) in [("a", 1u64), ("b", 2u64)] {
                let seed = derive_seed(base, tag);
                let irs = match ctx.cfg.ir_kind {
                    IrKind::Exp => ir_set(
                        prefix,
                        t60,
                        ctx.cfg.irs_per_set,
                        ctx.cfg.corpus.sample_rate,
                        ctx.cfg.ir_length_factor,
                        ctx.cfg.tail_std,
                        seed,
                    )?,
                    IrKind::Image => room_irs(ctx, prefix, t60, seed)?,
                };
                sets.extend(irs);
            }
            let mut csv = String::from("id,set,t60_target,t60_estimate,direct_path_index,len\n");
            for named in &sets {
                write_ir(p.join(format!("{}.wav", named.id)), &named.ir)?;
                let est = named
                    .ir
                    .t60_estimate
                    .map(|t| format!("{t:.4}"))
                    .unwrap_or_else(|| "NA".into());
                writeln!(
                    csv,
                    "{},{},{t60},{est},{},{}",
                    named.id,
                    &named.id[..1],
                    named.ir.direct_path_index(),
                    named.ir.len()
                )?;
            }
            write_atomic(&p.join("irs.csv"), csv.as_bytes())
        })?;
    }
    Ok(())
}

fn load_ir_set(dir: &Path, prefix: &str) -> Result<Vec<NamedIr>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(prefix) && n.ends_with(".wav"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(MissingInputs(vec![dir.join(format!("{prefix}*.wav"))]).into());
    }
    names
        .into_iter()
        .map(|n| {
            let ir: ImpulseResponse = read_ir(dir.join(&n))?;
            Ok(NamedIr::new(n.trim_end_matches(".wav"), ir))
        })
        .collect()
}

pub fn contaminate_stage(ctx: &Ctx) -> Result<()> {
    for t60 in ctx.reverberant() {
        let clean = ctx.clean_corpus_dir();
        let irs = ctx
            .run
            .path("irs")
            .join(ExperimentConfig::condition_name(t60));
        let out = ctx.corpus_dir(t60);
        let digest = ctx.run.input_digest(
            "contaminate",
            &ctx.config_text(&["global"], &format!("snr_db={:?}\n", ctx.cfg.snr_db)),
            &[&clean, &irs],
        )?;
        ctx.run.produce("contaminate", &out, &digest, |p| {
            let (a, b) = (load_ir_set(&irs, "a")?, load_ir_set(&irs, "b")?);
            let base = derive_seed(ctx.seed("contaminate"), t60_tag(t60));
            for (k, name) in SPLITS.iter().enumerate() {
                let corpus = load_corpus(clean.join(name))?;
                let set = if *name == "train" { &a } else { &b };
                let rev = contaminate(&corpus, set, ctx.cfg.snr_db, derive_seed(base, k as u64))?;
                save_corpus(p.join(name), &rev, WavFormat::Float32)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn save_set(dir: &Path, set: &[FrameMatrix], corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::new();
    for (m, u) in set.iter().zip(&corpus.utterances) {
        save_features(dir.join(format!("{}.cwf", u.id)), &m.data)?;
        save_labels(
            dir.join(format!("{}.lab", u.id)),
            m.labels.as_deref().unwrap_or_default(),
        )?;
        index.push_str(&u.id);
        index.push('\n');
    }
    write_atomic(&dir.join("index.txt"), index.as_bytes())
}

pub fn load_set(dir: &Path) -> Result<Vec<FrameMatrix>> {
    let index = dir.join("index.txt");
    if !index.exists() {
        return Err(MissingInputs(vec![index]).into());
    }
    fs::read_to_string(&index)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|id| {
            let data = load_features(dir.join(format!("{id}.cwf")))?;
            let labels = load_labels(dir.join(format!("{id}.lab")))?;
            Ok(FrameMatrix::new(data).with_labels(labels)?)
        })
        .collect()
}

pub fn features(ctx: &Ctx) -> Result<()> {
    for &t60 in &ctx.cfg.t60s {
        let corpus_dir = ctx.corpus_dir(t60);
        let out = ctx.features_dir(t60);
        let digest = ctx.run.input_digest(
            "features",
            &ctx.config_text(&["features"], ""),
            &[&corpus_dir],
        )?;
        ctx.run.produce("features", &out, &digest, |p| {
            let corpora: Vec<Corpus> = SPLITS
                .iter()
                .map(|s| load_corpus(corpus_dir.join(s)))
                .collect::<autocw::Result<_>>()?;
            let raw: Vec<Vec<FrameMatrix>> = corpora
                .iter()
                .map(|c| corpus_features(c, &ctx.cfg.features))
                .collect::<autocw::Result<_>>()?;
            let norm = fit_normalizer_set(&raw[0])?;
            for ((name, set), corpus) in SPLITS.iter().zip(&raw).zip(&corpora) {
                let normed: Vec<FrameMatrix> = set
                    .iter()
                    .map(|m| apply_normalizer(m, &norm))
                    .collect::<autocw::Result<_>>()?;
                save_set(&p.join(name), &normed, corpus)?;
            }
            let mut csv = String::from("dim,mean,std\n");
            for (i, (m, s)) in norm.mean.iter().zip(norm.std.iter()).enumerate() {
                writeln!(csv, "{i},{m:.9e},{s:.9e}")?;
            }
            write_atomic(&p.join("norm.csv"), csv.as_bytes())
        })?;
    }
    Ok(())
}

struct Sets {
    train: Vec<FrameMatrix>,
    dev: Vec<FrameMatrix>,
    test: Vec<FrameMatrix>,
}

fn load_sets(dir: &Path) -> Result<Sets> {
    Ok(Sets {
        train: load_set(&dir.join("train"))?,
        dev: load_set(&dir.join("dev"))?,
        test: load_set(&dir.join("test"))?,
    })
}

pub fn train(ctx: &Ctx) -> Result<()> {
    for &t60 in &ctx.cfg.t60s {
        let feats = ctx.features_dir(t60);
        let out = ctx.cond(t60).join("train");
        let digest = ctx.run.input_digest(
            "train",
            &ctx.config_text(&["global", "nn", "train", "search"], ""),
            &[&feats],
        )?;
        ctx.run.produce("train", &out, &digest, |p| {
            let sets = load_sets(&feats)?;
            let sc = ctx.search_config();
            let spec = ctx
                .cfg
                .train_window
                .unwrap_or_else(|| sc.probe_window());
            let (x, y) = autocw::features::assemble_set(&sets.train, spec)?;
            let model = init_model(&MlpConfig {
                input_dim: x.ncols(),
                hidden_dims: sc.hidden_dims.clone(),
                n_classes: ctx.cfg.corpus.n_classes,
                seed: sc.seed,
            })?;
            let (model, report) = train_sgd(model, x.view(), &y, &sc.train)?;
            let fer = |set: &[FrameMatrix]| -> Result<f64> {
                let (x, y) = autocw::features::assemble_set(set, spec)?;
                Ok(frame_error_rate(&model, x.view(), &y)?)
            };
            let (dev, test) = (fer(&sets.dev)?, fer(&sets.test)?);
            save_model(p.join("model.cwm"), &model)?;
            write_atomic(&p.join("train_report.csv"), report.to_csv().as_bytes())?;
            let metrics = format!(
                "window,epochs,best_epoch,stop_reason,dev_fer,test_fer\n{spec},{},{},{},{dev:.4},{test:.4}\n",
                report.epochs,
                report.best_epoch,
                report.stop_reason.as_str()
            );
            write_atomic(&p.join("metrics.csv"), metrics.as_bytes())
        })?;
    }
    Ok(())
}

pub fn probe(ctx: &Ctx) -> Result<()> {
    for &t60 in &ctx.cfg.t60s {
        let feats = ctx.features_dir(t60);
        let out = ctx.cond(t60).join("probe");
        let digest = ctx.run.input_digest(
            "probe",
            &ctx.config_text(&["global", "nn", "train", "search"], ""),
            &[&feats],
        )?;
        ctx.run.produce("probe", &out, &digest, |p| {
            let train = load_set(&feats.join("train"))?;
            let profile = probe_profile(&train, &ctx.search_config())?;
            write_atomic(&p.join("profile.csv"), profile.to_csv().as_bytes())
        })?;
    }
    Ok(())
}

fn read_profile(dir: &Path) -> Result<GradientProfile> {
    let path = dir.join("profile.csv");
    if !path.exists() {
        return Err(MissingInputs(vec![path]).into());
    }
    Ok(GradientProfile::from_csv(&fs::read_to_string(&path)?)?)
}

pub fn compose(ctx: &Ctx) -> Result<()> {
    for &t60 in &ctx.cfg.t60s {
        let probe_dir = ctx.cond(t60).join("probe");
        let out = ctx.cond(t60).join("compose");
        let digest =
            ctx.run
                .input_digest("compose", &ctx.config_text(&["search"], ""), &[&probe_dir])?;
        ctx.run.produce("compose", &out, &digest, |p| {
            let profile = read_profile(&probe_dir)?;
            let mut csv = String::from("cw_len,n_past,n_future,rho_cw\n");
            for s in composed_windows(&profile, ctx.cfg.cw_min, ctx.cfg.cw_max)? {
                let rho = rho_cw(s)
                    .map(|r| format!("{r:.4}"))
                    .unwrap_or_else(|_| "NA".into());
                writeln!(csv, "{},{},{},{rho}", s.len(), s.n_past, s.n_future)?;
            }
            write_atomic(&p.join("windows.csv"), csv.as_bytes())
        })?;
    }
    Ok(())
}

fn test_fer_line(sets: &Sets, spec: ContextWindowSpec, sc: &SearchConfig) -> Result<String> {
    let r = evaluate_window(&sets.train, &sets.test, spec, sc)?;
    Ok(format!("test_fer,{spec},{:.4}\n", r.dev_fer))
}

pub fn autocw_stage(ctx: &Ctx) -> Result<()> {
    for &t60 in &ctx.cfg.t60s {
        let feats = ctx.features_dir(t60);
        let probe_dir = ctx.cond(t60).join("probe");
        let out = ctx.cond(t60).join("autocw");
        let digest = ctx.run.input_digest(
            "autocw",
            &ctx.config_text(&["global", "nn", "train", "search"], ""),
            &[&feats, &probe_dir],
        )?;
        ctx.run.produce("autocw", &out, &digest, |p| {
            let sets = load_sets(&feats)?;
            let profile = read_profile(&probe_dir)?;
            let sc = ctx.search_config();
            let result = autocw_search_with_profile(&sets.train, &sets.dev, profile, &sc)?;
            write_atomic(
                &p.join("search.csv"),
                result.to_csv(ctx.cfg.timings).as_bytes(),
            )?;
            let mut best = format!("{}\n", result.summary_line());
            best.push_str(&test_fer_line(&sets, result.best().spec, &sc)?);
            if ctx.cfg.scw_baseline {
                let scw = scw_search(&sets.train, &sets.dev, &sc)?;
                write_atomic(&p.join("scw.csv"), scw.to_csv(ctx.cfg.timings).as_bytes())?;
            }
            write_atomic(&p.join("best.txt"), best.as_bytes())
        })?;
    }
    Ok(())
}

pub fn grid(ctx: &Ctx) -> Result<()> {
    for &t60 in &ctx.cfg.t60s {
        let feats = ctx.features_dir(t60);
        let out = ctx.cond(t60).join("grid");
        let digest = ctx.run.input_digest(
            "grid",
            &ctx.config_text(&["global", "nn", "train", "search"], ""),
            &[&feats],
        )?;
        ctx.run.produce("grid", &out, &digest, |p| {
            let sets = load_sets(&feats)?;
            let sc = ctx.search_config();
            let result = grid_search(&sets.train, &sets.dev, &sc)?;
            write_atomic(
                &p.join("search.csv"),
                result.to_csv(ctx.cfg.timings).as_bytes(),
            )?;
            let mut best = format!("{}\n", result.summary_line());
            best.push_str(&test_fer_line(&sets, result.best().spec, &sc)?);
            write_atomic(&p.join("best.txt"), best.as_bytes())
        })?;
    }
    Ok(())
}

pub fn xcorr(ctx: &Ctx) -> Result<()> {
    for &t60 in &ctx.cfg.t60s {
        let clean = ctx.clean_corpus_dir();
        let rev = ctx.corpus_dir(t60);
        let out = ctx.cond(t60).join("xcorr");
        let digest =
            ctx.run
                .input_digest("xcorr", &ctx.config_text(&["xcorr"], ""), &[&clean, &rev])?;
        ctx.run.produce("xcorr", &out, &digest, |p| {
            let c = load_corpus(clean.join("dev"))?;
            let r = load_corpus(rev.join("dev"))?;
            let signals = |c: &Corpus| -> Vec<Signal> {
                c.utterances.iter().map(|u| u.signal.clone()).collect()
            };
            let env = avg_xcorr_envelope(
                &signals(&c),
                &signals(&r),
                ctx.cfg.xcorr_window_ms,
                ctx.cfg.xcorr_hop_ms,
            )?;
            let fs = c.sample_rate as f64;
            let mut csv = String::from("lag_ms,value\n");
            for (lag, v) in env.lags() {
                writeln!(csv, "{:.4},{v:.9e}", lag as f64 * 1000.0 / fs)?;
            }
            write_atomic(&p.join("envelope.csv"), csv.as_bytes())?;
            let ratio = side_energy_ratio(&env)?;
            write_atomic(
                &p.join("ratio.csv"),
                format!("side_energy_ratio\n{ratio:.6}\n").as_bytes(),
            )
        })?;
    }
    Ok(())
}
