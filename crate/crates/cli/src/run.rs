//! Run-directory bookkeeping: content digests, stage stamps, atomic writes
//! and the append-only run log.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

const STAMP: &str = ".stamp";
const PARTIAL: &str = ".partial";

/// Required stage inputs that are absent; maps to exit code 3.
#[derive(Debug)]
pub struct MissingInputs(pub Vec<PathBuf>);

impl fmt::Display for MissingInputs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing inputs:")?;
        for p in &self.0 {
            write!(f, " {}", p.display())?;
        }
        Ok(())
    }
}

impl std::error::Error for MissingInputs {}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// Digest of a file, or of a directory as the sorted list of
/// `(relative path, file digest)` pairs. Stamps and partial outputs are
/// skipped.
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_file() {
        let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(sha256_bytes(&data));
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let d = digest_path(&path.join(&rel))?;
        h.update(rel.to_string_lossy().as_bytes());
        h.update(b"\0");
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    Ok(hex(&h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = entry?.path();
        let name = p.file_name().unwrap_or_default().to_string_lossy();
        if name == STAMP || name.ends_with(PARTIAL) || name.ends_with(".tmp") {
            continue;
        }
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root)?.to_path_buf());
        }
    }
    Ok(())
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().unwrap_or_default().to_string_lossy()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn require(paths: &[&Path]) -> Result<()> {
    let missing: Vec<PathBuf> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.to_path_buf())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(MissingInputs(missing).into())
    }
}

pub struct RunDir {
    pub root: PathBuf,
    pub force: bool,
}

/// Outcome of checking a stage output against its stamp.
#[derive(Debug, PartialEq, Eq)]
pub enum Freshness {
    UpToDate,
    Missing,
}

impl RunDir {
    pub fn new(root: PathBuf, force: bool) -> Result<Self> {
        fs::create_dir_all(&root)
            .with_context(|| format!("creating run directory {}", root.display()))?;
        Ok(Self { root, force })
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    /// Digest binding a stage to its config text and input artifacts.
    pub fn input_digest(&self, stage: &str, config: &str, inputs: &[&Path]) -> Result<String> {
        require(inputs)?;
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update(b"\0");
        h.update(config.as_bytes());
        for p in inputs {
            h.update(b"\0");
            h.update(digest_path(p)?.as_bytes());
        }
        Ok(hex(&h.finalize()))
    }

    /// A complete output with a matching stamp is up to date; a mismatching
    /// stamp is a stale artifact and an error unless `--force` was given.
    pub fn check(&self, out_dir: &Path, digest: &str) -> Result<Freshness> {
        let stamp = out_dir.join(STAMP);
        if !stamp.exists() {
            return Ok(Freshness::Missing);
        }
        let recorded = fs::read_to_string(&stamp)?;
        if recorded.trim() == digest {
            return Ok(Freshness::UpToDate);
        }
        if self.force {
            fs::remove_dir_all(out_dir)?;
            return Ok(Freshness::Missing);
        }
        bail!(
            "stale artifact {}: input digest changed (recorded {}, now {}); rerun with --force",
            out_dir.display(),
            recorded.trim(),
            digest
        )
    }

    /// Runs `build` into `<out_dir>.partial`, stamps it, then renames it into
    /// place and logs the artifact.
    pub fn produce(
        &self,
        stage: &str,
        out_dir: &Path,
        digest: &str,
        build: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<bool> {
        if self.check(out_dir, digest)? == Freshness::UpToDate {
            eprintln!("[{stage}] up to date: {}", self.rel(out_dir));
            return Ok(false);
        }
        let partial = PathBuf::from(format!("{}{PARTIAL}", out_dir.display()));
        if partial.exists() {
            fs::remove_dir_all(&partial)?;
        }
        if out_dir.exists() {
            fs::remove_dir_all(out_dir)?;
        }
        fs::create_dir_all(&partial)?;
        build(&partial)?;
        write_atomic(&partial.join(STAMP), format!("{digest}\n").as_bytes())?;
        fs::rename(&partial, out_dir)?;
        let out_digest = digest_path(out_dir)?;
        self.log(&format!(
            "stage={stage} artifact={} sha256={out_digest} inputs={digest}",
            self.rel(out_dir)
        ))?;
        eprintln!("[{stage}] wrote {}", self.rel(out_dir));
        Ok(true)
    }

    pub fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .display()
            .to_string()
    }

    pub fn log(&self, line: &str) -> Result<()> {
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path("run.log"))?;
        writeln!(f, "{line}")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn produce_is_idempotent_and_detects_stale_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path().to_path_buf(), false).unwrap();
        let input = run.path("in.txt");
        fs::write(&input, "a").unwrap();
        let out = run.path("stage");
        let d1 = run.input_digest("s", "cfg", &[&input]).unwrap();
        let build = |p: &Path| write_atomic(&p.join("x.csv"), b"1,2\n");
        assert!(run.produce("s", &out, &d1, build).unwrap());
        assert!(!run.produce("s", &out, &d1, build).unwrap());
        fs::write(&input, "b").unwrap();
        let d2 = run.input_digest("s", "cfg", &[&input]).unwrap();
        assert!(run.produce("s", &out, &d2, build).is_err());
        let forced = RunDir::new(dir.path().to_path_buf(), true).unwrap();
        assert!(forced.produce("s", &out, &d2, build).unwrap());
        let log = fs::read_to_string(run.path("run.log")).unwrap();
        assert_eq!(log.lines().count(), 2);
    }

    #[test]
    fn missing_inputs_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path().to_path_buf(), false).unwrap();
        let err = run.input_digest("s", "", &[&run.path("nope")]).unwrap_err();
        assert!(err.downcast_ref::<MissingInputs>().is_some());
    }

    #[test]
    fn directory_digest_ignores_stamps() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a"), "1").unwrap();
        let d1 = digest_path(dir.path()).unwrap();
        fs::write(dir.path().join(STAMP), "x").unwrap();
        assert_eq!(digest_path(dir.path()).unwrap(), d1);
        fs::write(dir.path().join("b"), "2").unwrap();
        assert_ne!(digest_path(dir.path()).unwrap(), d1);
    }
}
