//! End-to-end preparation of a labeled, normalized toy task at one
//! reverberation time.

use crate::acoustics::exp_decay_ir_with_level;
use crate::acoustics::EXP_TAIL_STD;
use crate::error::{invalid, Result};
use crate::features::{
    apply_normalizer, fit_normalizer_set, FeatureConfig, FrameMatrix, NormStats,
};
use crate::rng::derive_seed;
use crate::synthdata::{
    contaminate, corpus_features, gen_corpus, split_corpus, Corpus, CorpusConfig, NamedIr,
};

const TAG_CORPUS: u64 = 0x636f_7270;
const TAG_SPLIT: u64 = 0x7370_6c74;
const TAG_IR_TRAIN: u64 = 0x6972_5f61;
const TAG_IR_EVAL: u64 = 0x6972_5f62;
const TAG_NOISE: u64 = 0x6e6f_6973;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub corpus: CorpusConfig,
    /// Train, dev and test fractions.
    pub split: (f64, f64, f64),
    /// 0 keeps the clean corpus.
    pub t60: f64,
    pub irs_per_set: usize,
    /// IR duration as a multiple of `t60`.
    pub ir_length_factor: f64,
    pub tail_std: f64,
    pub snr_db: Option<f64>,
    pub features: FeatureConfig,
    pub seed: u64,
}

impl TaskConfig {
    /// Ten short-segment classes, 200 two-second utterances, FBANK input.
    pub fn desk(t60: f64, seed: u64) -> Self {
        Self {
            corpus: CorpusConfig::desk(),
            split: (0.6, 0.2, 0.2),
            t60,
            irs_per_set: 3,
            ir_length_factor: 1.2,
            tail_std: EXP_TAIL_STD,
            snr_db: None,
            features: FeatureConfig::fbank(),
            seed,
        }
    }
}

impl CorpusConfig {
    pub fn desk() -> Self {
        Self {
            n_classes: 10,
            n_utterances: 200,
            utterance_len_s: 2.0,
            segment_len_ms: (20.0, 60.0),
            ..Self::default()
        }
    }
}

/// Normalized feature sets; statistics come from the training part.
#[derive(Debug, Clone)]
pub struct Task {
    pub train: Vec<FrameMatrix>,
    pub dev: Vec<FrameMatrix>,
    pub test: Vec<FrameMatrix>,
    pub norm: NormStats,
    pub n_classes: usize,
    pub train_corpus: Corpus,
    pub dev_corpus: Corpus,
    pub test_corpus: Corpus,
}

/// `n` exponential-decay IRs named `<prefix><k>`.
pub fn ir_set(
    prefix: &str,
    t60: f64,
    n: usize,
    fs: u32,
    length_factor: f64,
    tail_std: f64,
    seed: u64,
) -> Result<Vec<NamedIr>> {
    (0..n)
        .map(|k| {
            let ir = exp_decay_ir_with_level(
                t60,
                fs,
                t60 * length_factor,
                tail_std,
                derive_seed(seed, k as u64),
            )?;
            Ok(NamedIr::new(format!("{prefix}{k}"), ir))
        })
        .collect()
}

/// Train is contaminated with IR set A, dev and test with a disjoint set B.
pub fn prepare_task(cfg: &TaskConfig) -> Result<Task> {
    if !(cfg.t60 >= 0.0) {
        return invalid(format!("t60 must be non-negative, got {}", cfg.t60));
    }
    let corpus = gen_corpus(&CorpusConfig {
        seed: derive_seed(cfg.seed, TAG_CORPUS),
        ..cfg.corpus.clone()
    })?;
    let (mut train, mut dev, mut test) =
        split_corpus(&corpus, cfg.split, derive_seed(cfg.seed, TAG_SPLIT))?;
    if cfg.t60 > 0.0 {
        if cfg.irs_per_set == 0 {
            return invalid("need at least one IR per set");
        }
        let fs = corpus.sample_rate;
        let set = |prefix, tag| {
            ir_set(
                prefix,
                cfg.t60,
                cfg.irs_per_set,
                fs,
                cfg.ir_length_factor,
                cfg.tail_std,
                derive_seed(cfg.seed, tag),
            )
        };
        let (a, b) = (set("a", TAG_IR_TRAIN)?, set("b", TAG_IR_EVAL)?);
        let noise = derive_seed(cfg.seed, TAG_NOISE);
        train = contaminate(&train, &a, cfg.snr_db, noise)?;
        dev = contaminate(&dev, &b, cfg.snr_db, derive_seed(noise, 1))?;
        test = contaminate(&test, &b, cfg.snr_db, derive_seed(noise, 2))?;
    }
    let raw_train = corpus_features(&train, &cfg.features)?;
    let norm = fit_normalizer_set(&raw_train)?;
    let apply = |ms: Vec<FrameMatrix>| -> Result<Vec<FrameMatrix>> {
        ms.iter().map(|m| apply_normalizer(m, &norm)).collect()
    };
    Ok(Task {
        train: apply(raw_train)?,
        dev: apply(corpus_features(&dev, &cfg.features)?)?,
        test: apply(corpus_features(&test, &cfg.features)?)?,
        n_classes: corpus.n_classes,
        norm,
        train_corpus: train,
        dev_corpus: dev,
        test_corpus: test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(t60: f64) -> TaskConfig {
        let mut cfg = TaskConfig::desk(t60, 3);
        cfg.corpus.n_utterances = 10;
        cfg.corpus.utterance_len_s = 0.5;
        cfg
    }

    #[test]
    fn clean_task_shapes() {
        let t = prepare_task(&tiny(0.0)).unwrap();
        assert_eq!((t.train.len(), t.dev.len(), t.test.len()), (6, 2, 2));
        assert_eq!(t.train[0].n_features(), 40);
        assert!(t.train_corpus.ir_ids().is_empty());
    }

    #[test]
    fn reverberant_sets_are_disjoint() {
        let t = prepare_task(&tiny(0.3)).unwrap();
        let a = t.train_corpus.ir_ids();
        let b = t.dev_corpus.ir_ids();
        assert!(!a.is_empty() && !b.is_empty());
        assert!(a.is_disjoint(&b));
        assert!(a.is_disjoint(&t.test_corpus.ir_ids()));
    }

    #[test]
    fn deterministic() {
        let a = prepare_task(&tiny(0.3)).unwrap();
        let b = prepare_task(&tiny(0.3)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}
