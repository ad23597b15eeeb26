//! Atomic file output and plot scripts.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `path` through a temporary file in the same directory and renames
/// it into place, so readers never see a truncated file.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

/// Gnuplot script plotting column `column` of `csv_name` against the first
/// column on a logarithmic y axis.
pub fn gnuplot_script(csv_name: &str, column: &str, title: &str) -> String {
    let png = Path::new(csv_name).with_extension("png");
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale y\n\
         set xlabel 't'\n\
         set ylabel '{column}'\n\
         set title '{title}'\n\
         set terminal pngcairo size 900,600\n\
         set output '{}'\n\
         plot '{csv_name}' using 1:'{column}' with lines\n",
        png.display()
    )
}
