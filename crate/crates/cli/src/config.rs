//! Sectioned `key = value` experiment configuration with includes and
//! command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use autocw::features::{ContextWindowSpec, FeatureConfig, FeatureKind};
use autocw::synthdata::CorpusConfig;
use autocw::TrainConfig;

const MAX_INCLUDE_DEPTH: usize = 16;

/// Every recognised key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    ("global.seed", "0"),
    ("corpus.n_classes", "10"),
    ("corpus.n_utterances", "200"),
    ("corpus.utterance_len_s", "2.0"),
    ("corpus.segment_min_ms", "20"),
    ("corpus.segment_max_ms", "60"),
    ("corpus.voiced_fraction", "0.5"),
    ("corpus.sample_rate", "16000"),
    ("corpus.split", "0.6, 0.2, 0.2"),
    ("acoustics.ir", "exp"),
    ("acoustics.t60", "0, 0.25, 0.5, 0.78, 1.0"),
    ("acoustics.irs_per_set", "3"),
    ("acoustics.ir_length_factor", "1.2"),
    ("acoustics.tail_std", "0.02"),
    ("acoustics.snr_db", "none"),
    ("acoustics.room", "6, 5, 3"),
    ("acoustics.room_order", "auto"),
    ("features.kind", "fbank"),
    ("features.frame_len_ms", "25"),
    ("features.hop_ms", "10"),
    ("features.n_mels", "40"),
    ("features.n_cepstra", "13"),
    ("features.delta_order", "0"),
    ("nn.hidden", "64, 64"),
    ("train.lr", "0.008"),
    ("train.batch_size", "32"),
    ("train.max_epochs", "8"),
    ("train.validation_fraction", "0.1"),
    ("train.halve_threshold", "0.5"),
    ("train.stop_threshold", "0.1"),
    ("train.window", "auto"),
    ("search.cw_min", "3"),
    ("search.cw_max", "13"),
    ("search.probe_batch_size", "128"),
    ("search.grid_side_limit", "none"),
    ("search.scw_baseline", "true"),
    ("search.run_grid", "false"),
    ("search.timings", "false"),
    ("xcorr.window_ms", "200"),
    ("xcorr.hop_ms", "100"),
    ("output.dir", "none"),
];

/// Raw `section.key -> value` pairs after includes and overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
    pub source: Option<PathBuf>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        Self {
            entries: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            source: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::defaults();
        cfg.read_file(path, 0)?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::defaults();
        cfg.read_text(text, base, "<string>", 0)?;
        Ok(cfg)
    }

    fn read_file(&mut self, path: &Path, depth: usize) -> Result<()> {
        if depth > MAX_INCLUDE_DEPTH {
            bail!(
                "include depth exceeds {MAX_INCLUDE_DEPTH} at {}",
                path.display()
            );
        }
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.read_text(&text, base, &path.display().to_string(), depth)
    }

    fn read_text(&mut self, text: &str, base: &Path, name: &str, depth: usize) -> Result<()> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{name}:{}", i + 1);
            if let Some(rest) = line.strip_prefix('[') {
                let s = rest
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("{}: unterminated section header", at()))?;
                section = s.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}: expected `key = value`", at()))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "include" {
                let p = base.join(v);
                self.read_file(&p, depth + 1)
                    .with_context(|| format!("included from {}", at()))?;
                continue;
            }
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            self.set(&key, v).with_context(at)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.entries.contains_key(key) {
            bail!("unknown config key `{key}`");
        }
        self.entries
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{kv}` is not `section.key=value`"))?;
        self.set(k.trim(), v)
    }

    pub fn get(&self, key: &str) -> &str {
        self.entries
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key} missing from defaults"))
    }

    /// Canonical text of the given sections, used for stage digests.
    pub fn section_text(&self, sections: &[&str]) -> String {
        self.entries
            .iter()
            .filter(|(k, _)| sections.iter().any(|s| k.split('.').next() == Some(*s)))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Fully resolved configuration in the input format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (k, v) in &self.entries {
            let (s, key) = k.split_once('.').unwrap_or(("", k));
            if s != current {
                out.push_str(&format!("\n[{s}]\n"));
                current = s;
            }
            out.push_str(&format!("{key} = {v}\n"));
        }
        out.trim_start().to_string()
    }
}

fn strip_comment(line: &str) -> &str {
    let t = line.trim_start();
    if t.starts_with('#') || t.starts_with(';') {
        return "";
    }
    match line.find(" #") {
        Some(i) => &line[..i],
        None => line,
    }
}

fn num<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<T> {
    let v = raw.get(key);
    v.parse()
        .map_err(|_| anyhow!("config `{key}`: cannot parse `{v}`"))
}

fn list<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Vec<T>> {
    raw.get(key)
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| anyhow!("config `{key}`: cannot parse `{s}`"))
        })
        .collect()
}

fn optional<T: std::str::FromStr>(raw: &RawConfig, key: &str, none: &str) -> Result<Option<T>> {
    if raw.get(key) == none {
        Ok(None)
    } else {
        num(raw, key).map(Some)
    }
}

fn flag(raw: &RawConfig, key: &str) -> Result<bool> {
    match raw.get(key) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => bail!("config `{key}`: expected true/false, got `{v}`"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrKind {
    Exp,
    Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub split: (f64, f64, f64),
    pub ir_kind: IrKind,
    pub t60s: Vec<f64>,
    pub irs_per_set: usize,
    pub ir_length_factor: f64,
    pub tail_std: f64,
    pub snr_db: Option<f64>,
    pub room: [f64; 3],
    pub room_order: Option<usize>,
    pub features: FeatureConfig,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// `None` trains the symmetric `cw_max` window.
    pub train_window: Option<ContextWindowSpec>,
    pub cw_min: usize,
    pub cw_max: usize,
    pub probe_batch_size: usize,
    pub grid_side_limit: Option<usize>,
    pub scw_baseline: bool,
    pub run_grid: bool,
    pub timings: bool,
    pub xcorr_window_ms: f64,
    pub xcorr_hop_ms: f64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let split: Vec<f64> = list(raw, "corpus.split")?;
        if split.len() != 3 {
            bail!("config `corpus.split` needs three fractions");
        }
        let t60s: Vec<f64> = list(raw, "acoustics.t60")?;
        if t60s.is_empty() || t60s.iter().any(|t| !t.is_finite() || *t < 0.0) {
            bail!("config `acoustics.t60` must list non-negative values");
        }
        let mut sorted = t60s.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() != t60s.len() {
            bail!("config `acoustics.t60` has duplicate values");
        }
        let room: Vec<f64> = list(raw, "acoustics.room")?;
        let room: [f64; 3] = room
            .try_into()
            .map_err(|_| anyhow!("config `acoustics.room` needs three dimensions"))?;
        let features = FeatureConfig {
            frame_len_ms: num(raw, "features.frame_len_ms")?,
            hop_ms: num(raw, "features.hop_ms")?,
            n_mels: num(raw, "features.n_mels")?,
            n_cepstra: num(raw, "features.n_cepstra")?,
            kind: match raw.get("features.kind") {
                "fbank" => FeatureKind::Fbank,
                "mfcc" => FeatureKind::Mfcc,
                v => bail!("config `features.kind`: expected fbank or mfcc, got `{v}`"),
            },
            delta_order: num(raw, "features.delta_order")?,
            fft_size: None,
        };
        let seed: u64 = num(raw, "global.seed")?;
        let corpus = CorpusConfig {
            n_classes: num(raw, "corpus.n_classes")?,
            n_utterances: num(raw, "corpus.n_utterances")?,
            utterance_len_s: num(raw, "corpus.utterance_len_s")?,
            segment_len_ms: (
                num(raw, "corpus.segment_min_ms")?,
                num(raw, "corpus.segment_max_ms")?,
            ),
            sample_rate: num(raw, "corpus.sample_rate")?,
            voiced_fraction: num(raw, "corpus.voiced_fraction")?,
            seed,
            frame_len_ms: features.frame_len_ms,
            hop_ms: features.hop_ms,
        };
        corpus.validate()?;
        features.validate(corpus.sample_rate)?;
        let train_window = match raw.get("train.window") {
            "auto" => None,
            v => Some(
                v.parse::<ContextWindowSpec>()
                    .map_err(|e| anyhow!("config `train.window`: {e}"))?,
            ),
        };
        let cfg = Self {
            seed,
            corpus,
            split: (split[0], split[1], split[2]),
            ir_kind: match raw.get("acoustics.ir") {
                "exp" => IrKind::Exp,
                "image" => IrKind::Image,
                v => bail!("config `acoustics.ir`: expected exp or image, got `{v}`"),
            },
            t60s,
            irs_per_set: num(raw, "acoustics.irs_per_set")?,
            ir_length_factor: num(raw, "acoustics.ir_length_factor")?,
            tail_std: num(raw, "acoustics.tail_std")?,
            snr_db: optional(raw, "acoustics.snr_db", "none")?,
            room,
            room_order: optional(raw, "acoustics.room_order", "auto")?,
            features,
            hidden: list(raw, "nn.hidden")?,
            train: TrainConfig {
                initial_lr: num(raw, "train.lr")?,
                halve_threshold: num(raw, "train.halve_threshold")?,
                stop_threshold: num(raw, "train.stop_threshold")?,
                batch_size: num(raw, "train.batch_size")?,
                max_epochs: num(raw, "train.max_epochs")?,
                validation_fraction: num(raw, "train.validation_fraction")?,
                seed: 0,
            },
            train_window,
            cw_min: num(raw, "search.cw_min")?,
            cw_max: num(raw, "search.cw_max")?,
            probe_batch_size: num(raw, "search.probe_batch_size")?,
            grid_side_limit: optional(raw, "search.grid_side_limit", "none")?,
            scw_baseline: flag(raw, "search.scw_baseline")?,
            run_grid: flag(raw, "search.run_grid")?,
            timings: flag(raw, "search.timings")?,
            xcorr_window_ms: num(raw, "xcorr.window_ms")?,
            xcorr_hop_ms: num(raw, "xcorr.hop_ms")?,
            output_dir: match raw.get("output.dir") {
                "none" => None,
                v => Some(PathBuf::from(v)),
            },
        };
        if cfg.cw_min == 0 || cfg.cw_min > cfg.cw_max || cfg.cw_max.is_multiple_of(2) {
            bail!(
                "search range [{}, {}] needs 1 <= cw_min <= cw_max with cw_max odd",
                cfg.cw_min,
                cfg.cw_max
            );
        }
        if cfg.irs_per_set == 0 {
            bail!("config `acoustics.irs_per_set` must be positive");
        }
        Ok(cfg)
    }

    /// Directory name of one sweep point, e.g. `t60_0780ms`.
    pub fn condition_name(t60: f64) -> String {
        format!("t60_{:04}ms", (t60 * 1000.0).round() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = ExperimentConfig::from_raw(&RawConfig::defaults()).unwrap();
        assert_eq!(cfg.t60s, vec![0.0, 0.25, 0.5, 0.78, 1.0]);
        assert_eq!(cfg.hidden, vec![64, 64]);
        assert_eq!(cfg.corpus.n_classes, 10);
        assert_eq!(ExperimentConfig::condition_name(0.78), "t60_0780ms");
    }

    #[test]
    fn sections_includes_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("base.cfg"), "[corpus]\nn_classes = 4\n").unwrap();
        fs::write(
            dir.path().join("main.cfg"),
            "include = base.cfg\n# comment\n[search]\ncw_max = 9  # inline\n[corpus]\nn_utterances = 12\n",
        )
        .unwrap();
        let mut raw = RawConfig::load(&dir.path().join("main.cfg")).unwrap();
        raw.apply_override("corpus.n_classes=6").unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.corpus.n_classes, 6);
        assert_eq!(cfg.corpus.n_utterances, 12);
        assert_eq!(cfg.cw_max, 9);
        assert!(raw.to_text().contains("[search]\n"));
    }

    #[test]
    fn rejects_malformed() {
        let base = Path::new(".");
        assert!(RawConfig::parse_str("[corpus\n", base).is_err());
        assert!(RawConfig::parse_str("[corpus]\nbogus = 1\n", base).is_err());
        assert!(RawConfig::parse_str("no equals sign\n", base).is_err());
        let raw = RawConfig::parse_str("[search]\ncw_max = 8\n", base).unwrap();
        assert!(ExperimentConfig::from_raw(&raw).is_err());
        let raw = RawConfig::parse_str("[acoustics]\nt60 = 0, -1\n", base).unwrap();
        assert!(ExperimentConfig::from_raw(&raw).is_err());
    }
}
