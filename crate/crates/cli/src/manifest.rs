use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    pub config: C,
}

/// Output directory that refuses to clobber existing files unless forced.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    force: bool,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: &Path, force: bool) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_owned(),
            force,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Check every name up front so a run fails before doing any work.
    pub fn claim(&mut self, names: &[String]) -> CliResult<()> {
        for name in names {
            let path = self.root.join(name);
            if path.exists() && !self.force {
                return Err(CliError::Exists { path });
            }
        }
        Ok(())
    }

    fn path(&self, name: &str) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(path)
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.path(name)?;
        self.written.push(name.to_owned());
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w).and_then(|()| w.flush()).map_err(|e| CliError::io(&path, e))
    }

    /// Written last; lists every file produced before it.
    pub fn write_manifest<C: Serialize>(&mut self, manifest: Manifest<C>) -> CliResult<()> {
        let manifest = Manifest {
            outputs: self.written.clone(),
            ..manifest
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        self.write_with("manifest.json", |w| writeln!(w, "{text}"))
    }
}
