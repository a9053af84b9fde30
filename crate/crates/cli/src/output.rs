use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// 17 significant digits, no locale.
pub fn f17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Single writer for all artifacts of one command.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> std::io::Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Sink { dir })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Written to `<dir>/<name>` or, without a directory, to stdout.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), csv::Error> {
        let buf: Box<dyn Write> = match &self.dir {
            Some(d) => Box::new(std::fs::File::create(d.join(name))?),
            None => Box::new(std::io::stdout().lock()),
        };
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Only written when a directory is set.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), crate::commands::CliError> {
        if let Some(d) = &self.dir {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            std::fs::write(d.join(name), text)?;
        }
        Ok(())
    }
}
