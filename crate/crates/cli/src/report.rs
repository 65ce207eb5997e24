//! Collects per-condition artifacts into figure/table CSVs and a plain-text
//! summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use autocw::features::ContextWindowSpec;

use crate::config::ExperimentConfig;
use crate::run::{write_atomic, MissingInputs};
use crate::stages::Ctx;

#[derive(Debug, Clone)]
struct Row {
    cw_len: usize,
    spec: ContextWindowSpec,
    rho: String,
    fer: f64,
}

fn read_search(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() < 5 {
                return Err(anyhow!("{}: malformed row `{l}`", path.display()));
            }
            let np: usize = c[1].parse()?;
            let nf: usize = c[2].parse()?;
            Ok(Row {
                cw_len: c[0].parse()?,
                spec: ContextWindowSpec::new(np, nf),
                rho: c[3].to_string(),
                fer: c[4].parse()?,
            })
        })
        .collect()
}

/// Same ordering as the search: FER, then length, then more past frames.
fn best(rows: &[Row]) -> Option<&Row> {
    rows.iter().min_by(|a, b| {
        a.fer
            .total_cmp(&b.fer)
            .then(a.cw_len.cmp(&b.cw_len))
            .then(b.spec.n_past.cmp(&a.spec.n_past))
    })
}

fn read_test_fer(best_txt: &Path) -> Option<String> {
    fs::read_to_string(best_txt).ok()?.lines().find_map(|l| {
        let c: Vec<&str> = l.split(',').collect();
        (c.len() == 3 && c[0] == "test_fer").then(|| c[2].to_string())
    })
}

fn pct(v: &str) -> String {
    v.parse::<f64>()
        .map(|x| format!("{x:.2}%"))
        .unwrap_or_else(|_| v.to_string())
}

struct Condition {
    t60: f64,
    dir: PathBuf,
}

impl Condition {
    fn file(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let conds: Vec<Condition> = ctx
        .cfg
        .t60s
        .iter()
        .map(|&t60| Condition {
            t60,
            dir: ctx.run.path(ExperimentConfig::condition_name(t60)),
        })
        .collect();
    let mut required = vec![
        "probe/profile.csv",
        "autocw/search.csv",
        "xcorr/envelope.csv",
    ];
    if ctx.cfg.scw_baseline {
        required.push("autocw/scw.csv");
    }
    if ctx.cfg.run_grid {
        required.push("grid/search.csv");
    }
    let missing: Vec<PathBuf> = conds
        .iter()
        .flat_map(|c| required.iter().map(move |r| c.file(r)))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(MissingInputs(missing).into());
    }

    let out = ctx.run.path("report");
    let inputs: Vec<PathBuf> = conds
        .iter()
        .flat_map(|c| ["probe", "autocw", "grid", "xcorr"].map(|d| c.file(d)))
        .filter(|p| p.exists())
        .collect();
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let digest = ctx.run.input_digest(
        "report",
        &ctx.config_text(&["acoustics", "search"], ""),
        &input_refs,
    )?;
    ctx.run
        .produce("report", &out, &digest, |p| build(ctx, &conds, p))?;
    print!("{}", fs::read_to_string(out.join("summary.txt"))?);
    Ok(())
}

fn build(ctx: &Ctx, conds: &[Condition], out: &Path) -> Result<()> {
    let mut profiles = String::from("t60,p,norm\n");
    let mut envelope = String::from("t60,lag_ms,value\n");
    let mut ratios = String::from("t60,side_energy_ratio\n");
    let mut fer_len = String::from("t60,cw_len,acw_window,acw_fer,scw_window,scw_fer\n");
    let mut cw_t60 = String::from("t60,best_window,cw_len,n_past,n_future,rho_cw,dev_fer\n");
    let mut summary_csv = String::from(
        "t60,autocw_window,autocw_dev_fer,autocw_test_fer,autocw_trainings,scw_window,scw_dev_fer,grid_window,grid_dev_fer,grid_test_fer,grid_trainings\n",
    );
    let mut summary = String::from("Context-window search summary\n\n");

    for c in conds {
        let t = c.t60;
        let prof = fs::read_to_string(c.file("probe/profile.csv"))?;
        for line in prof.lines().skip(1) {
            writeln!(profiles, "{t},{line}")?;
        }
        let env = fs::read_to_string(c.file("xcorr/envelope.csv"))?;
        for line in env.lines().skip(1) {
            writeln!(envelope, "{t},{line}")?;
        }
        let ratio = fs::read_to_string(c.file("xcorr/ratio.csv"))?;
        writeln!(ratios, "{t},{}", ratio.lines().nth(1).unwrap_or("NA"))?;

        let acw = read_search(&c.file("autocw/search.csv"))?;
        let scw = if ctx.cfg.scw_baseline {
            read_search(&c.file("autocw/scw.csv"))?
        } else {
            Vec::new()
        };
        for r in &acw {
            let s = scw.iter().find(|s| s.cw_len == r.cw_len);
            writeln!(
                fer_len,
                "{t},{},{},{:.4},{},{}",
                r.cw_len,
                r.spec,
                r.fer,
                s.map(|s| s.spec.to_string()).unwrap_or_else(|| "NA".into()),
                s.map(|s| format!("{:.4}", s.fer))
                    .unwrap_or_else(|| "NA".into())
            )?;
        }
        let b = best(&acw).ok_or_else(|| anyhow!("empty AutoCW results for T60 {t}"))?;
        writeln!(
            cw_t60,
            "{t},{},{},{},{},{},{:.4}",
            b.spec, b.cw_len, b.spec.n_past, b.spec.n_future, b.rho, b.fer
        )?;
        let acw_test = read_test_fer(&c.file("autocw/best.txt")).unwrap_or_else(|| "NA".into());
        let sb = best(&scw);
        let grid = if ctx.cfg.run_grid || c.file("grid/search.csv").exists() {
            read_search(&c.file("grid/search.csv"))?
        } else {
            Vec::new()
        };
        let gb = best(&grid);
        let grid_test = read_test_fer(&c.file("grid/best.txt")).unwrap_or_else(|| "NA".into());
        let na = || "NA".to_string();
        writeln!(
            summary_csv,
            "{t},{},{:.4},{acw_test},{},{},{},{},{},{},{}",
            b.spec,
            b.fer,
            acw.len(),
            sb.map(|s| s.spec.to_string()).unwrap_or_else(na),
            sb.map(|s| format!("{:.4}", s.fer)).unwrap_or_else(na),
            gb.map(|g| g.spec.to_string()).unwrap_or_else(na),
            gb.map(|g| format!("{:.4}", g.fer)).unwrap_or_else(na),
            if gb.is_some() {
                grid_test.clone()
            } else {
                na()
            },
            if gb.is_some() {
                grid.len().to_string()
            } else {
                na()
            },
        )?;

        let label = if t > 0.0 {
            format!("T60 {:.0} ms (Rev)", t * 1000.0)
        } else {
            "T60 0 ms (Clean)".to_string()
        };
        writeln!(
            summary,
            "{label}: AutoCW best {} (rho_cw {}, dev FER {:.2}%, test FER {}) from {} trainings + 1 probe epoch",
            b.spec,
            pct(&b.rho),
            b.fer,
            pct(&acw_test),
            acw.len()
        )?;
        if let Some(s) = sb {
            writeln!(summary, "  SCW best {} (dev FER {:.2}%)", s.spec, s.fer)?;
        }
        match gb {
            Some(g) => writeln!(
                summary,
                "  grid best {} (dev FER {:.2}%, test FER {}) from {} trainings",
                g.spec,
                g.fer,
                pct(&grid_test),
                grid.len()
            )?,
            None => writeln!(summary, "  grid search: not run")?,
        }
    }
    if conds.iter().all(|c| c.t60 == 0.0) {
        summary.push_str("\nReverberant (Rev) conditions: not run\n");
    }

    for (name, text) in [
        ("gradient_profiles.csv", &profiles),
        ("xcorr_envelope.csv", &envelope),
        ("xcorr_ratio.csv", &ratios),
        ("fer_vs_cw_len.csv", &fer_len),
        ("cw_vs_t60.csv", &cw_t60),
        ("summary.csv", &summary_csv),
        ("summary.txt", &summary),
    ] {
        write_atomic(&out.join(name), text.as_bytes())?;
    }
    Ok(())
}
