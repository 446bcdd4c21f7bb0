//! Output routing: files in an output directory (each written atomically and
//! listed in a run manifest) or standard output.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use autocat::io::write_atomic;
use autocat::model::ParamsConfig;
use autocat::{Error, Result};
use serde::Serialize;

/// File name of the manifest inside the output directory.
pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one completed run. It is written last, so its presence marks the
/// output directory as complete.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params_echo: Option<ParamsConfig>,
    pub seed: Option<u64>,
    /// Output files, relative to the directory holding the manifest.
    pub outputs: Vec<String>,
    pub tool_version: String,
    /// The two species were exchanged so that `kappa_1 <= kappa_2` for the
    /// closed-form evaluation.
    pub relabelled: bool,
    /// Resolved settings and run diagnostics.
    pub details: serde_json::Value,
}

pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Result<Sink> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|source| Error::Io {
                path: d.clone(),
                source,
            })?;
        }
        Ok(Sink { dir, written: Vec::new() })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `bytes` to `name` in the output directory, or to standard output
    /// when there is none.
    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        match &self.dir {
            Some(d) => {
                write_atomic(&d.join(name), bytes)?;
                self.written.push(name.to_string());
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)
                    .and_then(|()| out.flush())
                    .map_err(|source| Error::Io {
                        path: PathBuf::from("<stdout>"),
                        source,
                    })?;
            }
        }
        Ok(())
    }

    /// Writes the manifest (output directory only).
    pub fn finish(self, mut manifest: RunManifest) -> Result<()> {
        let Some(d) = self.dir else { return Ok(()) };
        manifest.outputs = self.written;
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&d.join(MANIFEST_NAME), &bytes)
    }
}
