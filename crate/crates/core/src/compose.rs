//! Greedy context-window composition from a gradient profile, the linear
//! AutoCW length sweep, and the exhaustive grid-search oracle.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::features::{assemble_set, rho_cw, ContextWindowSpec, FrameMatrix};
use crate::nn::{frame_error_rate, init_model, train_sgd, MlpConfig, TrainConfig};
use crate::probe::{gradient_profile, GradientProfile};

/// Grows a window of `cw_len` frames around `p = 0`, adding at each step
/// the past or future frame with the larger gradient norm. Ties go to the
/// future side; once one side of the profile is used up the other side
/// takes the remaining frames.
pub fn compose_window(profile: &GradientProfile, cw_len: usize) -> Result<ContextWindowSpec> {
    if cw_len == 0 || cw_len > profile.cw_max() {
        return invalid(format!("cw_len {cw_len} outside [1, {}]", profile.cw_max()));
    }
    let (mut n_past, mut n_future) = (0usize, 0usize);
    for _ in 1..cw_len {
        let past = profile.norm(-(n_past as i64) - 1);
        let future = profile.norm(n_future as i64 + 1);
        match (past, future) {
            (Some(p), Some(f)) if p > f => n_past += 1,
            (Some(_), Some(_)) | (None, Some(_)) => n_future += 1,
            (Some(_), None) => n_past += 1,
            (None, None) => unreachable!("cw_len bounded by profile width"),
        }
    }
    Ok(ContextWindowSpec::new(n_past, n_future))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub cw_min: usize,
    /// Odd; the probe model uses the symmetric window of this length.
    pub cw_max: usize,
    pub hidden_dims: Vec<usize>,
    /// Derived from the labels when `None`.
    pub n_classes: Option<usize>,
    pub train: TrainConfig,
    pub probe_batch_size: usize,
    /// Weight-initialization seed shared by every candidate.
    pub seed: u64,
    /// Largest `N_p` or `N_f` the grid may try; `None` leaves sides
    /// unbounded (every split of every length).
    pub grid_side_limit: Option<usize>,
    /// Worker threads for independent candidate trainings.
    pub jobs: usize,
}

impl SearchConfig {
    pub fn new(cw_min: usize, cw_max: usize) -> Self {
        Self {
            cw_min,
            cw_max,
            hidden_dims: vec![256; 4],
            n_classes: None,
            train: TrainConfig::default(),
            probe_batch_size: 128,
            seed: 0,
            grid_side_limit: None,
            jobs: 1,
        }
    }

    pub fn probe_window(&self) -> ContextWindowSpec {
        ContextWindowSpec::symmetric((self.cw_max - 1) / 2)
    }

    fn validate(&self) -> Result<()> {
        if self.cw_min == 0 || self.cw_min > self.cw_max {
            return invalid(format!(
                "need 1 <= cw_min <= cw_max, got [{}, {}]",
                self.cw_min, self.cw_max
            ));
        }
        if self.cw_max.is_multiple_of(2) {
            return invalid(format!("cw_max {} must be odd", self.cw_max));
        }
        if self.probe_batch_size == 0 || self.jobs == 0 {
            return invalid("probe batch size and jobs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRecord {
    pub cw_len: usize,
    pub spec: ContextWindowSpec,
    /// Dev-set frame error rate, percent.
    pub dev_fer: f64,
    pub train_seconds: f64,
    pub epochs: usize,
}

impl SearchRecord {
    pub fn rho_cw(&self) -> Option<f64> {
        rho_cw(self.spec).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub records: Vec<SearchRecord>,
    best: usize,
    pub n_full_trainings: usize,
    pub n_probe_epochs: usize,
    pub profile: Option<GradientProfile>,
}

impl SearchResult {
    fn from_records(
        records: Vec<SearchRecord>,
        n_probe_epochs: usize,
        profile: Option<GradientProfile>,
    ) -> Result<Self> {
        let best = best_index(&records).ok_or(Error::Empty("search records"))?;
        Ok(Self {
            n_full_trainings: records.len(),
            records,
            best,
            n_probe_epochs,
            profile,
        })
    }

    pub fn best(&self) -> &SearchRecord {
        &self.records[self.best]
    }

    /// `cw_len,n_past,n_future,rho_cw,dev_fer,train_seconds`; timings are
    /// written as `NA` unless requested, which keeps the file reproducible.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut s = String::from("cw_len,n_past,n_future,rho_cw,dev_fer,train_seconds\n");
        for r in &self.records {
            let rho = r
                .rho_cw()
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "NA".into());
            let secs = if timings {
                format!("{:.3}", r.train_seconds)
            } else {
                "NA".into()
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{:.4},{}",
                r.cw_len, r.spec.n_past, r.spec.n_future, rho, r.dev_fer, secs
            );
        }
        s
    }

    /// One-line summary in `a-1-b` notation.
    pub fn summary_line(&self) -> String {
        let b = self.best();
        let rho = b
            .rho_cw()
            .map(|v| format!("{v:.2}%"))
            .unwrap_or_else(|| "NA".into());
        format!(
            "best CW {} (len {}, rho_cw {}, dev FER {:.2}%) after {} trainings + {} probe epoch(s)",
            b.spec, b.cw_len, rho, b.dev_fer, self.n_full_trainings, self.n_probe_epochs
        )
    }
}

/// Lowest FER; ties go to the shorter window, then to more past frames.
fn best_index(records: &[SearchRecord]) -> Option<usize> {
    (0..records.len()).min_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.dev_fer
            .total_cmp(&rb.dev_fer)
            .then(ra.cw_len.cmp(&rb.cw_len))
            .then(rb.spec.n_past.cmp(&ra.spec.n_past))
    })
}

fn n_classes(cfg: &SearchConfig, sets: [&[FrameMatrix]; 2]) -> Result<usize> {
    if let Some(k) = cfg.n_classes {
        return Ok(k);
    }
    let mut max = None;
    for set in sets {
        for m in set {
            let labels = m
                .labels
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("unlabeled feature matrix".into()))?;
            max = max.max(labels.iter().copied().max());
        }
    }
    max.map(|m| m + 1).ok_or(Error::Empty("labels"))
}

/// Trains one model on `train` with window `spec` and scores it on `dev`.
pub fn evaluate_window(
    train: &[FrameMatrix],
    dev: &[FrameMatrix],
    spec: ContextWindowSpec,
    cfg: &SearchConfig,
) -> Result<SearchRecord> {
    let start = Instant::now();
    let k = n_classes(cfg, [train, dev])?;
    let (tx, ty) = assemble_set(train, spec)?;
    let (dx, dy) = assemble_set(dev, spec)?;
    let model = init_model(&MlpConfig {
        input_dim: tx.ncols(),
        hidden_dims: cfg.hidden_dims.clone(),
        n_classes: k,
        seed: cfg.seed,
    })?;
    let (model, report) = train_sgd(model, tx.view(), &ty, &cfg.train)?;
    let dev_fer = frame_error_rate(&model, dx.view(), &dy)?;
    Ok(SearchRecord {
        cw_len: spec.len(),
        spec,
        dev_fer,
        train_seconds: start.elapsed().as_secs_f64(),
        epochs: report.epochs,
    })
}

fn evaluate_all(
    train: &[FrameMatrix],
    dev: &[FrameMatrix],
    specs: &[ContextWindowSpec],
    cfg: &SearchConfig,
) -> Result<Vec<SearchRecord>> {
    if cfg.jobs <= 1 {
        return specs
            .iter()
            .map(|&s| evaluate_window(train, dev, s, cfg))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| {
        specs
            .par_iter()
            .map(|&s| evaluate_window(train, dev, s, cfg))
            .collect()
    })
}

/// Trains the symmetric `cw_max` model for one epoch and returns its
/// gradient profile on the training data.
pub fn probe_profile(train: &[FrameMatrix], cfg: &SearchConfig) -> Result<GradientProfile> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let k = n_classes(cfg, [train, &[]])?;
    let spec = cfg.probe_window();
    let (x, y) = assemble_set(train, spec)?;
    let model = init_model(&MlpConfig {
        input_dim: x.ncols(),
        hidden_dims: cfg.hidden_dims.clone(),
        n_classes: k,
        seed: cfg.seed,
    })?;
    let one_epoch = TrainConfig {
        max_epochs: 1,
        ..cfg.train.clone()
    };
    let (model, _) = train_sgd(model, x.view(), &y, &one_epoch)?;
    gradient_profile(&model, x.view(), &y, spec, cfg.probe_batch_size)
}

/// Windows composed from `profile` for every length in `[cw_min, cw_max]`.
pub fn composed_windows(
    profile: &GradientProfile,
    cw_min: usize,
    cw_max: usize,
) -> Result<Vec<ContextWindowSpec>> {
    (cw_min..=cw_max)
        .map(|len| compose_window(profile, len))
        .collect()
}

/// One probe epoch, then one full training per window length.
pub fn autocw_search(
    train: &[FrameMatrix],
    dev: &[FrameMatrix],
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("train or dev data"));
    }
    let profile = probe_profile(train, cfg)?;
    autocw_search_with_profile(train, dev, profile, cfg)
}

/// The length sweep of [`autocw_search`] on an already computed profile.
pub fn autocw_search_with_profile(
    train: &[FrameMatrix],
    dev: &[FrameMatrix],
    profile: GradientProfile,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("train or dev data"));
    }
    if profile.cw_max() != cfg.cw_max {
        return invalid(format!(
            "profile spans {} frames, search expects {}",
            profile.cw_max(),
            cfg.cw_max
        ));
    }
    let specs = composed_windows(&profile, cfg.cw_min, cfg.cw_max)?;
    let records = evaluate_all(train, dev, &specs, cfg)?;
    SearchResult::from_records(records, 1, Some(profile))
}

/// Every `(N_p, N_f)` split of every length in `[cw_min, cw_max]`, ordered
/// by length and then by decreasing `N_p`.
pub fn grid_candidates(
    cw_min: usize,
    cw_max: usize,
    side_limit: Option<usize>,
) -> Vec<ContextWindowSpec> {
    let limit = side_limit.unwrap_or(usize::MAX);
    (cw_min.max(1)..=cw_max)
        .flat_map(|len| {
            (0..len)
                .rev()
                .map(move |np| ContextWindowSpec::new(np, len - 1 - np))
        })
        .filter(|s| s.n_past <= limit && s.n_future <= limit)
        .collect()
}

/// Exhaustive search over all window splits.
pub fn grid_search(
    train: &[FrameMatrix],
    dev: &[FrameMatrix],
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("train or dev data"));
    }
    let specs = grid_candidates(cfg.cw_min, cfg.cw_max, cfg.grid_side_limit);
    let records = evaluate_all(train, dev, &specs, cfg)?;
    SearchResult::from_records(records, 0, None)
}

/// Symmetric baseline: one training per odd length in range.
pub fn scw_search(
    train: &[FrameMatrix],
    dev: &[FrameMatrix],
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    let specs: Vec<_> = (cfg.cw_min..=cfg.cw_max)
        .filter(|l| l % 2 == 1)
        .map(|l| ContextWindowSpec::symmetric((l - 1) / 2))
        .collect();
    if specs.is_empty() {
        return invalid("no odd window length in range");
    }
    let records = evaluate_all(train, dev, &specs, cfg)?;
    SearchResult::from_records(records, 0, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(pairs: &[(i64, f64)]) -> GradientProfile {
        GradientProfile::from_pairs(pairs).unwrap()
    }

    #[test]
    fn length_one_is_current_frame() {
        let p = profile(&[(-1, 1.0), (0, 2.0), (1, 3.0)]);
        assert_eq!(compose_window(&p, 1).unwrap(), ContextWindowSpec::new(0, 0));
        assert!(compose_window(&p, 0).is_err());
        assert!(compose_window(&p, 4).is_err());
    }

    #[test]
    fn hand_simulated_examples() {
        let p = profile(&[
            (-3, 8.0),
            (-2, 9.0),
            (-1, 10.0),
            (0, 12.0),
            (1, 6.0),
            (2, 5.0),
            (3, 4.0),
        ]);
        assert_eq!(compose_window(&p, 4).unwrap(), ContextWindowSpec::new(3, 0));
        let p = profile(&[
            (-3, 5.0),
            (-2, 7.0),
            (-1, 9.0),
            (0, 10.0),
            (1, 8.0),
            (2, 6.0),
            (3, 4.0),
        ]);
        assert_eq!(compose_window(&p, 5).unwrap(), ContextWindowSpec::new(2, 2));
    }

    #[test]
    fn ties_and_exhaustion() {
        let flat = profile(&[(-2, 1.0), (-1, 1.0), (0, 1.0), (1, 1.0), (2, 1.0)]);
        assert_eq!(
            compose_window(&flat, 2).unwrap(),
            ContextWindowSpec::new(0, 1)
        );
        assert_eq!(
            compose_window(&flat, 5).unwrap(),
            ContextWindowSpec::new(2, 2)
        );
        let past = profile(&[(-2, 9.0), (-1, 9.0), (0, 1.0), (1, 0.0), (2, 0.0)]);
        assert_eq!(
            compose_window(&past, 4).unwrap(),
            ContextWindowSpec::new(2, 1)
        );
        assert_eq!(
            compose_window(&past, 5).unwrap(),
            ContextWindowSpec::new(2, 2)
        );
    }

    #[test]
    fn grid_counts() {
        assert_eq!(grid_candidates(11, 25, None).len(), 270);
        assert_eq!(
            grid_candidates(3, 3, None),
            vec![
                ContextWindowSpec::new(2, 0),
                ContextWindowSpec::new(1, 1),
                ContextWindowSpec::new(0, 2)
            ]
        );
        let bounded = grid_candidates(1, 5, Some(2));
        assert!(bounded.iter().all(|s| s.n_past <= 2 && s.n_future <= 2));
        assert_eq!(bounded.len(), 1 + 2 + 3 + 2 + 1);
    }

    #[test]
    fn best_tie_breaks() {
        let rec = |np, nf, fer| SearchRecord {
            cw_len: np + nf + 1,
            spec: ContextWindowSpec::new(np, nf),
            dev_fer: fer,
            train_seconds: 0.0,
            epochs: 1,
        };
        let records = vec![
            rec(2, 2, 10.0),
            rec(1, 1, 10.0),
            rec(0, 2, 10.0),
            rec(2, 0, 10.0),
        ];
        let r = SearchResult::from_records(records, 1, None).unwrap();
        assert_eq!(r.best().spec, ContextWindowSpec::new(2, 0));
        assert!(r.summary_line().starts_with("best CW 2-1-0"));
        let csv = r.to_csv(false);
        assert!(csv.lines().nth(1).unwrap().ends_with(",NA"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::new(3, 4).validate().is_err());
        assert!(SearchConfig::new(0, 5).validate().is_err());
        assert!(SearchConfig::new(7, 5).validate().is_err());
        assert!(SearchConfig::new(1, 1).validate().is_ok());
    }
}
