//! Artifact files. Every CSV starts with `#` provenance lines: config hash,
//! the serialised run configuration, grid, normalisation and smoothing.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use stdgm::spectra::FrequencyGrid;

pub struct Provenance {
    pub config_hash: String,
    pub config_json: String,
    pub grid: FrequencyGrid,
    pub normalisation: &'static str,
    pub half_widths: (u32, u32, u32),
    pub labels: Vec<String>,
}

impl Provenance {
    pub fn grid_text(&self) -> String {
        let g = &self.grid;
        format!(
            "p=0..{} q={}..{} u={}..{} T={} include_dc={}",
            g.p_max, g.q_min, g.q_max, g.u_min, g.u_max, g.t_steps, g.include_dc
        )
    }

    pub fn smoothing_text(&self) -> String {
        let (hp, hq, hu) = self.half_widths;
        format!("daniell h=({hp},{hq},{hu})")
    }

    fn header(&self, extra: &[(&str, String)]) -> String {
        let labels: Vec<String> = self.labels.iter().enumerate().map(|(k, l)| format!("{}={l}", k + 1)).collect();
        let mut s = format!(
            "# tool: stdgm {}\n# config_hash: {}\n# config: {}\n# grid: {}\n# normalisation: {}\n# smoothing: {}\n# labels: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.config_hash,
            self.config_json,
            self.grid_text(),
            self.normalisation,
            self.smoothing_text(),
            labels.join(";")
        );
        for (k, v) in extra {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s
    }
}

/// Writes `name` in `dir`: provenance lines, then the CSV header (if any) and rows.
pub fn write_csv(
    dir: &Path,
    name: &str,
    prov: &Provenance,
    extra: &[(&str, String)],
    columns: &str,
    rows: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| stdgm::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    let io = |e: io::Error| stdgm::Error::Io {
        path: path.clone(),
        source: e,
    };
    w.write_all(prov.header(extra).as_bytes()).map_err(io)?;
    if !columns.is_empty() {
        writeln!(w, "{columns}").map_err(io)?;
    }
    rows(&mut w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(path)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| stdgm::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

/// Quotes a CSV field when needed.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Zero-based indices as a 1-based `a+b` set.
pub fn type_set(v: &[usize]) -> String {
    v.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join("+")
}
