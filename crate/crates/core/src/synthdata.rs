//! Labeled toy corpora of resonant "phone" segments and their reverberated
//! (optionally noisy) counterparts.
//!
//! Each class is a fixed pair of resonances (a 4th-order all-pole filter).
//! Voiced classes are driven by impulse trains, unvoiced ones by white noise.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::acoustics::wav::{read_signal, write_signal, WavFormat};
use crate::acoustics::{convolve, mix_noise_at_snr, ImpulseResponse, Signal};
use crate::error::{invalid, Error, Result};
use crate::features::frame_count;
use crate::features::io::{load_labels, save_labels};
use crate::features::{extract_features, FeatureConfig, FrameMatrix};
use crate::rng::{derive_seed, seeded, Rng};

const PITCH_HZ: (f64, f64) = (80.0, 250.0);
const F1_HZ: (f64, f64) = (250.0, 1000.0);
const F2_HZ: (f64, f64) = (1000.0, 3500.0);
const BANDWIDTH_HZ: (f64, f64) = (60.0, 250.0);
const GAIN_DB: f64 = 6.0;
const GAIN_IR_LEN: usize = 4096;

const TAG_CLASSES: u64 = 1;
const TAG_UTTERANCES: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub n_classes: usize,
    pub n_utterances: usize,
    pub utterance_len_s: f64,
    /// Segment durations are drawn uniformly from this range.
    pub segment_len_ms: (f64, f64),
    pub sample_rate: u32,
    /// Share of classes excited by impulse trains.
    pub voiced_fraction: f64,
    pub seed: u64,
    /// Framing used for the label track.
    pub frame_len_ms: f64,
    pub hop_ms: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_classes: 4,
            n_utterances: 10,
            utterance_len_s: 2.0,
            segment_len_ms: (60.0, 200.0),
            sample_rate: 16_000,
            voiced_fraction: 0.5,
            seed: 0,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return invalid(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.n_utterances == 0 {
            return invalid("need at least one utterance");
        }
        let (lo, hi) = self.segment_len_ms;
        if !(self.utterance_len_s > 0.0 && lo > 0.0 && hi >= lo && hi.is_finite()) {
            return invalid("durations must be positive with a non-empty segment range");
        }
        if !(0.0..=1.0).contains(&self.voiced_fraction) {
            return invalid(format!(
                "voiced_fraction {} outside [0, 1]",
                self.voiced_fraction
            ));
        }
        if self.sample_rate == 0 || !(self.frame_len_ms > 0.0 && self.hop_ms > 0.0) {
            return invalid("sample rate and framing must be positive");
        }
        if self.utterance_samples() < self.frame_len() {
            return invalid("utterance shorter than one frame");
        }
        Ok(())
    }

    pub fn utterance_samples(&self) -> usize {
        (self.utterance_len_s * self.sample_rate as f64).round() as usize
    }

    pub fn frame_len(&self) -> usize {
        (self.frame_len_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn n_voiced(&self) -> usize {
        (self.voiced_fraction * self.n_classes as f64).round() as usize
    }
}

/// Second-order resonator `y[n] = x[n] + a1 y[n-1] + a2 y[n-2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

impl Resonance {
    fn coefficients(&self, fs: u32) -> (f64, f64) {
        let r = (-PI * self.bandwidth_hz / fs as f64).exp();
        let theta = 2.0 * PI * self.freq_hz / fs as f64;
        (2.0 * r * theta.cos(), -r * r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub voiced: bool,
    pub resonances: [Resonance; 2],
    /// Scales the excitation so the filtered output has roughly unit power.
    pub gain: f64,
}

impl ClassSpec {
    fn draw(voiced: bool, fs: u32, rng: &mut Rng) -> Self {
        let mut uni = |(lo, hi): (f64, f64)| rng.random_range(lo..hi);
        let resonances = [
            Resonance {
                freq_hz: uni(F1_HZ),
                bandwidth_hz: uni(BANDWIDTH_HZ),
            },
            Resonance {
                freq_hz: uni(F2_HZ),
                bandwidth_hz: uni(BANDWIDTH_HZ),
            },
        ];
        let mut spec = Self {
            voiced,
            resonances,
            gain: 1.0,
        };
        let mut impulse = vec![0.0; GAIN_IR_LEN];
        impulse[0] = 1.0;
        let energy: f64 = AllPole::new(&spec, fs)
            .run(&impulse)
            .iter()
            .map(|v| v * v)
            .sum();
        spec.gain = 1.0 / energy.sqrt();
        spec
    }

    /// A standalone rendering of this class with a fixed pitch.
    pub fn render(&self, n_samples: usize, fs: u32, seed: u64) -> Result<Signal> {
        let mut rng = seeded(seed);
        let pitch = rng.random_range(PITCH_HZ.0..PITCH_HZ.1);
        let mut phase = 0.0;
        let exc = excitation(self, n_samples, fs, pitch, &mut phase, &mut rng);
        Signal::new(AllPole::new(self, fs).run(&exc), fs)
    }
}

/// Cascade of the two class resonators, with state carried across calls.
struct AllPole {
    coeffs: [(f64, f64); 2],
    state: [[f64; 2]; 2],
}

impl AllPole {
    fn new(class: &ClassSpec, fs: u32) -> Self {
        Self {
            coeffs: [
                class.resonances[0].coefficients(fs),
                class.resonances[1].coefficients(fs),
            ],
            state: [[0.0; 2]; 2],
        }
    }

    fn set_class(&mut self, class: &ClassSpec, fs: u32) {
        self.coeffs = [
            class.resonances[0].coefficients(fs),
            class.resonances[1].coefficients(fs),
        ];
    }

    fn run(&mut self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let mut v = v;
                for ((a1, a2), st) in self.coeffs.iter().zip(self.state.iter_mut()) {
                    let y = v + a1 * st[0] + a2 * st[1];
                    st[1] = st[0];
                    st[0] = y;
                    v = y;
                }
                v
            })
            .collect()
    }
}

fn excitation(
    class: &ClassSpec,
    n: usize,
    fs: u32,
    pitch_hz: f64,
    phase: &mut f64,
    rng: &mut Rng,
) -> Vec<f64> {
    if class.voiced {
        let period = fs as f64 / pitch_hz;
        let amp = class.gain * period.sqrt();
        (0..n)
            .map(|_| {
                let pulse = if *phase < 1.0 { amp } else { 0.0 };
                *phase += 1.0;
                if *phase >= period {
                    *phase -= period;
                }
                pulse
            })
            .collect()
    } else {
        *phase = 0.0;
        (0..n)
            .map(|_| class.gain * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Clean,
    Rev,
    RevNoise,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Clean => "clean",
            Condition::Rev => "rev",
            Condition::RevNoise => "rev_noise",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Condition::Clean),
            "rev" => Ok(Condition::Rev),
            "rev_noise" => Ok(Condition::RevNoise),
            other => Err(Error::Format(format!("unknown condition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub signal: Signal,
    /// One class per frame, taken at the frame center.
    pub labels: Vec<usize>,
    pub ir_id: Option<String>,
    pub snr_db: Option<f64>,
}

/// An impulse response with a stable identifier for provenance records.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedIr {
    pub id: String,
    pub ir: ImpulseResponse,
}

impl NamedIr {
    pub fn new(id: impl Into<String>, ir: ImpulseResponse) -> Self {
        Self { id: id.into(), ir }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub condition: Condition,
    pub n_classes: usize,
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop_len: usize,
    pub classes: Vec<ClassSpec>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn n_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.labels.len()).sum()
    }

    /// IR ids used by any utterance.
    pub fn ir_ids(&self) -> BTreeSet<&str> {
        self.utterances
            .iter()
            .filter_map(|u| u.ir_id.as_deref())
            .collect()
    }

    pub fn label_alphabet(&self) -> BTreeSet<usize> {
        self.utterances
            .iter()
            .flat_map(|u| u.labels.iter().copied())
            .collect()
    }

    /// Checks label-track lengths and that provenance agrees with the
    /// condition tag.
    pub fn validate(&self) -> Result<()> {
        for u in &self.utterances {
            let expect = frame_count(u.signal.len(), self.frame_len, self.hop_len).unwrap_or(0);
            if u.labels.len() != expect {
                return Err(Error::Shape(format!(
                    "{}: {} labels for {expect} frames",
                    u.id,
                    u.labels.len()
                )));
            }
            if let Some(&l) = u.labels.iter().find(|&&l| l >= self.n_classes) {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    n_classes: self.n_classes,
                });
            }
            let ok = match self.condition {
                Condition::Clean => u.ir_id.is_none() && u.snr_db.is_none(),
                Condition::Rev => u.ir_id.is_some() && u.snr_db.is_none(),
                Condition::RevNoise => u.ir_id.is_some() && u.snr_db.is_some(),
            };
            if !ok {
                return Err(Error::Format(format!(
                    "{}: provenance does not match condition {}",
                    u.id, self.condition
                )));
            }
        }
        Ok(())
    }

    fn with_utterances(&self, utterances: Vec<Utterance>) -> Corpus {
        Corpus {
            utterances,
            condition: self.condition,
            n_classes: self.n_classes,
            sample_rate: self.sample_rate,
            frame_len: self.frame_len,
            hop_len: self.hop_len,
            classes: self.classes.clone(),
        }
    }
}

/// Draws the class filters from the corpus seed; voiced classes come first.
pub fn class_specs(cfg: &CorpusConfig) -> Result<Vec<ClassSpec>> {
    cfg.validate()?;
    let mut rng = seeded(derive_seed(cfg.seed, TAG_CLASSES));
    let n_voiced = cfg.n_voiced();
    Ok((0..cfg.n_classes)
        .map(|c| ClassSpec::draw(c < n_voiced, cfg.sample_rate, &mut rng))
        .collect())
}

pub fn gen_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    let classes = class_specs(cfg)?;
    let fs = cfg.sample_rate;
    let n = cfg.utterance_samples();
    let (frame, hop) = (cfg.frame_len(), cfg.hop_len());
    let n_frames = frame_count(n, frame, hop).ok_or(Error::Empty("frames"))?;
    let seg_lo = (cfg.segment_len_ms.0 * fs as f64 / 1000.0).round().max(1.0) as usize;
    let seg_hi = (cfg.segment_len_ms.1 * fs as f64 / 1000.0).round().max(1.0) as usize;

    let utterances = (0..cfg.n_utterances)
        .map(|i| {
            let mut rng = seeded(derive_seed(derive_seed(cfg.seed, TAG_UTTERANCES), i as u64));
            // (start sample, class) per segment
            let mut segments = Vec::new();
            let mut samples = Vec::with_capacity(n);
            let mut filter = AllPole::new(&classes[0], fs);
            let mut phase = 0.0;
            let mut prev = None;
            while samples.len() < n {
                let mut class = rng.random_range(0..cfg.n_classes);
                if Some(class) == prev {
                    class = (class + 1 + rng.random_range(0..cfg.n_classes - 1)) % cfg.n_classes;
                }
                prev = Some(class);
                let len = rng.random_range(seg_lo..=seg_hi).min(n - samples.len());
                let pitch = rng.random_range(PITCH_HZ.0..PITCH_HZ.1);
                let gain = 10f64.powf(rng.random_range(-GAIN_DB..GAIN_DB) / 20.0);
                segments.push((samples.len(), class));
                filter.set_class(&classes[class], fs);
                let exc: Vec<f64> =
                    excitation(&classes[class], len, fs, pitch, &mut phase, &mut rng)
                        .into_iter()
                        .map(|v| v * gain)
                        .collect();
                samples.extend(filter.run(&exc));
            }
            let labels = (0..n_frames)
                .map(|k| {
                    let center = k * hop + frame / 2;
                    let seg = segments.partition_point(|&(start, _)| start <= center) - 1;
                    segments[seg].1
                })
                .collect();
            Ok(Utterance {
                id: format!("utt{i:05}"),
                signal: Signal::new(samples, fs)?,
                labels,
                ir_id: None,
                snr_db: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Corpus {
        utterances,
        condition: Condition::Clean,
        n_classes: cfg.n_classes,
        sample_rate: fs,
        frame_len: frame,
        hop_len: hop,
        classes,
    })
}

/// Convolves every utterance with an IR assigned round-robin over a seeded
/// permutation of `irs`. Outputs keep the clean length plus the direct-path
/// delay, and labels move by that delay rounded to whole frames.
pub fn contaminate(
    corpus: &Corpus,
    irs: &[NamedIr],
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<Corpus> {
    if corpus.condition != Condition::Clean {
        return Err(Error::AlreadyContaminated(corpus.condition.to_string()));
    }
    if irs.is_empty() {
        return Err(Error::Empty("impulse responses"));
    }
    if let Some(s) = snr_db {
        if s.is_nan() {
            return invalid("snr_db is NaN");
        }
    }
    let mut order: Vec<usize> = (0..irs.len()).collect();
    order.shuffle(&mut seeded(noise_seed));

    let utterances = corpus
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let named = &irs[order[i % order.len()]];
            let ir = &named.ir;
            let direct = ir.direct_path_index();
            let len = u.signal.len() + direct;
            let mut y = convolve(&u.signal, ir)?.resized(len);
            if let Some(snr) = snr_db {
                let mut rng = seeded(derive_seed(noise_seed, i as u64 + 1));
                let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
                y = mix_noise_at_snr(&y, &Signal::new(noise, y.sample_rate())?, snr)?;
            }
            let shift = (direct as f64 / corpus.hop_len as f64).round() as usize;
            let n_frames = frame_count(len, corpus.frame_len, corpus.hop_len).unwrap_or(0);
            let last = u.labels.len() - 1;
            let labels = (0..n_frames)
                .map(|k| u.labels[k.saturating_sub(shift).min(last)])
                .collect();
            Ok(Utterance {
                id: u.id.clone(),
                signal: y,
                labels,
                ir_id: Some(named.id.clone()),
                snr_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = corpus.with_utterances(utterances);
    out.condition = if snr_db.is_some() {
        Condition::RevNoise
    } else {
        Condition::Rev
    };
    Ok(out)
}

/// Largest-remainder apportionment of `n` items over `fracs`.
pub fn apportion(n: usize, fracs: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = n.saturating_sub(sizes.iter().sum());
    let mut by_remainder: Vec<usize> = (0..fracs.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Seeded utterance-level train/dev/test partition.
pub fn split_corpus(
    corpus: &Corpus,
    fracs: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    let (a, b, c) = fracs;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return invalid(format!(
            "split fractions {fracs:?} must be in [0,1] and sum to 1"
        ));
    }
    if corpus.len() < 3 {
        return invalid(format!("cannot split {} utterances", corpus.len()));
    }
    let sizes = apportion(corpus.len(), &[a, b, c]);
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut seeded(seed));
    let mut parts = Vec::with_capacity(3);
    let mut start = 0;
    for size in sizes {
        let mut chosen = idx[start..start + size].to_vec();
        chosen.sort_unstable();
        start += size;
        parts.push(
            corpus.with_utterances(
                chosen
                    .into_iter()
                    .map(|i| corpus.utterances[i].clone())
                    .collect(),
            ),
        );
    }
    let test = parts.pop().unwrap();
    let dev = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok((train, dev, test))
}

/// Features of every utterance with the label track attached. Frame counts
/// are reconciled by truncating to the shorter of the two.
pub fn corpus_features(corpus: &Corpus, cfg: &FeatureConfig) -> Result<Vec<FrameMatrix>> {
    corpus
        .utterances
        .iter()
        .map(|u| {
            let mut m = extract_features(&u.signal, cfg)?;
            let n = m.n_frames().min(u.labels.len());
            m.truncate(n);
            m.with_labels(u.labels[..n].to_vec())
        })
        .collect()
}

const MANIFEST: &str = "manifest.txt";

pub fn manifest_path(dir: impl AsRef<Path>) -> PathBuf {
    dir.as_ref().join(MANIFEST)
}

/// Writes `<id>.wav`, `<id>.lab` (CWL1) and a tab-separated manifest.
pub fn save_corpus(dir: impl AsRef<Path>, corpus: &Corpus, format: WavFormat) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = format!(
        "# condition={} n_classes={} sample_rate={} frame_len={} hop_len={}\n\
         # utterance\twav\tlabels\tcondition\tir\tsnr_db\n",
        corpus.condition, corpus.n_classes, corpus.sample_rate, corpus.frame_len, corpus.hop_len
    );
    for u in &corpus.utterances {
        let wav = format!("{}.wav", u.id);
        let lab = format!("{}.lab", u.id);
        write_signal(dir.join(&wav), &u.signal, format)?;
        save_labels(dir.join(&lab), &u.labels)?;
        manifest.push_str(&format!(
            "{}\t{wav}\t{lab}\t{}\t{}\t{}\n",
            u.id,
            corpus.condition,
            u.ir_id.as_deref().unwrap_or("none"),
            u.snr_db
                .map(|s| s.to_string())
                .unwrap_or_else(|| "none".into())
        ));
    }
    fs::write(manifest_path(dir), manifest)?;
    Ok(())
}

/// Reads a corpus written by [`save_corpus`]. Class filters are not stored
/// on disk, so `classes` comes back empty.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(manifest_path(dir))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| Error::Format("manifest header missing".into()))?;
    let mut condition = None;
    let (mut n_classes, mut fs, mut frame_len, mut hop_len) = (None, None, None, None);
    for kv in header.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field {kv:?}")))?;
        let num = || {
            v.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad value for {k}: {v:?}")))
        };
        match k {
            "condition" => condition = Some(v.parse::<Condition>()?),
            "n_classes" => n_classes = Some(num()?),
            "sample_rate" => fs = Some(num()? as u32),
            "frame_len" => frame_len = Some(num()?),
            "hop_len" => hop_len = Some(num()?),
            _ => {}
        }
    }
    let missing = |f: &str| Error::Format(format!("manifest header lacks {f}"));
    let condition = condition.ok_or_else(|| missing("condition"))?;
    let sample_rate = fs.ok_or_else(|| missing("sample_rate"))?;

    let mut utterances = Vec::new();
    for line in lines.filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::Format(format!(
                "manifest row has {} columns",
                cols.len()
            )));
        }
        let signal = read_signal(dir.join(cols[1]))?;
        if signal.sample_rate() != sample_rate {
            return Err(Error::SampleRateMismatch(signal.sample_rate(), sample_rate));
        }
        let opt = |s: &str| (s != "none").then(|| s.to_string());
        let snr_db = opt(cols[5])
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad snr {s:?}")))
            })
            .transpose()?;
        utterances.push(Utterance {
            id: cols[0].to_string(),
            signal,
            labels: load_labels(dir.join(cols[2]))?,
            ir_id: opt(cols[4]),
            snr_db,
        });
    }
    let corpus = Corpus {
        utterances,
        condition,
        n_classes: n_classes.ok_or_else(|| missing("n_classes"))?,
        sample_rate,
        frame_len: frame_len.ok_or_else(|| missing("frame_len"))?,
        hop_len: hop_len.ok_or_else(|| missing("hop_len"))?,
        classes: Vec::new(),
    };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{autocorr_effective_length, power};

    fn small(n_utt: usize) -> CorpusConfig {
        CorpusConfig {
            n_utterances: n_utt,
            utterance_len_s: 0.5,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = gen_corpus(&small(3)).unwrap();
        let b = gen_corpus(&small(3)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let c = gen_corpus(&CorpusConfig {
            seed: 1,
            ..small(3)
        })
        .unwrap();
        assert_ne!(a.utterances[0].signal, c.utterances[0].signal);
    }

    #[test]
    fn label_track_length_follows_framing() {
        let c = gen_corpus(&CorpusConfig::default()).unwrap();
        assert_eq!(c.len(), 10);
        for u in &c.utterances {
            assert_eq!(u.signal.len(), 32_000);
            assert_eq!(u.labels.len(), (32_000 - 400) / 160 + 1);
        }
        assert!(c.label_alphabet().len() >= 3);
    }

    #[test]
    fn voiced_classes_correlate_longer() {
        let cfg = CorpusConfig {
            voiced_fraction: 0.5,
            n_classes: 6,
            ..CorpusConfig::default()
        };
        let classes = class_specs(&cfg).unwrap();
        let lengths: Vec<(bool, f64)> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let s = c.render(8000, 16_000, i as u64).unwrap();
                (c.voiced, autocorr_effective_length(&s, 0.5).unwrap())
            })
            .collect();
        let min_voiced = lengths
            .iter()
            .filter(|l| l.0)
            .map(|l| l.1)
            .fold(f64::MAX, f64::min);
        let max_unvoiced = lengths
            .iter()
            .filter(|l| !l.0)
            .map(|l| l.1)
            .fold(0.0, f64::max);
        assert!(min_voiced > max_unvoiced, "{lengths:?}");
    }

    #[test]
    fn identity_ir_keeps_signals_and_labels() {
        let c = gen_corpus(&small(4)).unwrap();
        let irs = [NamedIr::new("id", ImpulseResponse::identity(16_000))];
        let r = contaminate(&c, &irs, None, 3).unwrap();
        assert_eq!(r.condition, Condition::Rev);
        for (a, b) in c.utterances.iter().zip(&r.utterances) {
            assert_eq!(a.signal, b.signal);
            assert_eq!(a.labels, b.labels);
            assert_eq!(b.ir_id.as_deref(), Some("id"));
        }
        r.validate().unwrap();
        assert!(matches!(
            contaminate(&r, &irs, None, 3),
            Err(Error::AlreadyContaminated(_))
        ));
        assert!(contaminate(&c, &[], None, 3).is_err());
    }

    #[test]
    fn direct_path_shifts_one_frame() {
        let c = gen_corpus(&small(2)).unwrap();
        let ir = ImpulseResponse::with_direct_path(Signal::impulse(161, 160, 16_000).unwrap(), 160)
            .unwrap();
        let r = contaminate(&c, &[NamedIr::new("d160", ir)], None, 0).unwrap();
        r.validate().unwrap();
        for (a, b) in c.utterances.iter().zip(&r.utterances) {
            assert_eq!(b.labels.len(), a.labels.len() + 1);
            assert_eq!(&b.labels[1..], &a.labels[..]);
            for (x, y) in b.signal.samples()[160..].iter().zip(a.signal.samples()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn noise_hits_target_snr() {
        let c = gen_corpus(&small(3)).unwrap();
        let irs = [NamedIr::new("id", ImpulseResponse::identity(16_000))];
        let rev = contaminate(&c, &irs, None, 9).unwrap();
        let noisy = contaminate(&c, &irs, Some(10.0), 9).unwrap();
        assert_eq!(noisy.condition, Condition::RevNoise);
        for (clean, mixed) in rev.utterances.iter().zip(&noisy.utterances) {
            let s = clean.signal.samples();
            let n: Vec<f64> = mixed
                .signal
                .samples()
                .iter()
                .zip(s)
                .map(|(m, c)| m - c)
                .collect();
            let snr = 10.0 * (power(s) / power(&n)).log10();
            assert!((snr - 10.0).abs() < 0.01, "{snr}");
        }
    }

    #[test]
    fn round_robin_covers_irs_evenly() {
        let c = gen_corpus(&small(6)).unwrap();
        let irs: Vec<NamedIr> = (0..3)
            .map(|k| NamedIr::new(format!("a{k}"), ImpulseResponse::identity(16_000)))
            .collect();
        let r = contaminate(&c, &irs, None, 5).unwrap();
        for id in ["a0", "a1", "a2"] {
            let n = r
                .utterances
                .iter()
                .filter(|u| u.ir_id.as_deref() == Some(id))
                .count();
            assert_eq!(n, 2);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let c = gen_corpus(&CorpusConfig {
            n_utterances: 20,
            utterance_len_s: 0.1,
            ..CorpusConfig::default()
        })
        .unwrap();
        let (tr, dv, te) = split_corpus(&c, (0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!((tr.len(), dv.len(), te.len()), (16, 2, 2));
        let mut ids: Vec<_> = tr
            .utterances
            .iter()
            .chain(&dv.utterances)
            .chain(&te.utterances)
            .map(|u| u.id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 20);
        let again = split_corpus(&c, (0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!(again.0, tr);
        let (all, none1, none2) = split_corpus(&c, (1.0, 0.0, 0.0), 4).unwrap();
        assert_eq!((all.len(), none1.len(), none2.len()), (20, 0, 0));
        assert!(split_corpus(&c, (0.5, 0.2, 0.2), 4).is_err());
        let tiny = c.with_utterances(c.utterances[..2].to_vec());
        assert!(split_corpus(&tiny, (1.0, 0.0, 0.0), 0).is_err());
    }

    #[test]
    fn apportion_largest_remainder() {
        assert_eq!(apportion(10, &[0.34, 0.33, 0.33]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[0.5, 0.5, 0.0]), vec![4, 3, 0]);
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = gen_corpus(&small(2)).unwrap();
        let irs = [NamedIr::new("x", ImpulseResponse::identity(16_000))];
        let r = contaminate(&c, &irs, Some(20.0), 1).unwrap();
        save_corpus(dir.path(), &r, WavFormat::Float32).unwrap();
        let back = load_corpus(dir.path()).unwrap();
        assert_eq!(back.condition, Condition::RevNoise);
        assert_eq!(back.len(), 2);
        for (a, b) in r.utterances.iter().zip(&back.utterances) {
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.ir_id, b.ir_id);
            assert_eq!(a.snr_db, b.snr_db);
            for (x, y) in a.signal.samples().iter().zip(b.signal.samples()) {
                assert!((x - y).abs() < 1e-6 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn features_carry_labels() {
        let c = gen_corpus(&small(2)).unwrap();
        let f = corpus_features(&c, &FeatureConfig::mfcc()).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].labels.as_ref().unwrap(), &c.utterances[0].labels);
    }
}
