//! Files written by a run. Every CSV starts with a `# config_sha256=` line
//! and every JSON document carries a `config_sha256` field.

use crate::cce::GcceResult;
use crate::eseem::{DecayFit, SpectralPeak};
use crate::sweep::SweepTable;
use crate::{Error, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CURVES_FILE: &str = "curves.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const CONVERGENCE_FILE: &str = "convergence.json";
pub const CENSUS_FILE: &str = "census.json";
pub const ABLATION_FILE: &str = "ablations.json";
pub const PROVENANCE_FILE: &str = "provenance.json";

pub const CURVES_HEADER: [&str; 7] = ["series", "point", "order", "t_us", "re", "im", "abs"];
pub const SWEEP_HEADER: [&str; 5] = ["point", "T2_us", "stretch_n", "region", "degraded_fraction"];
pub const SPECTRA_HEADER: [&str; 4] = ["series", "point", "frequency_mhz", "weight"];

/// Curves of one simulated point, tagged for the curves file.
pub struct CurveSet<'a> {
    /// `base`, `sweep` or `ablation:<variant>`.
    pub series: String,
    pub point: f64,
    pub result: &'a GcceResult,
}

/// Spectrum of one point, tagged like [`CurveSet`].
pub struct SpectrumSet<'a> {
    pub series: String,
    pub point: f64,
    pub peaks: &'a [SpectralPeak],
}

pub struct OutputWriter {
    dir: PathBuf,
    config_sha256: String,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    config_sha256: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Format for T2 in the sweep table: `inf` when no decay was resolved, `nan`
/// for failed points.
fn t2_cells(fit: Option<&DecayFit>) -> (String, String) {
    match fit {
        Some(DecayFit::Fitted(f)) => (format!("{}", f.t2_us), format!("{}", f.stretch_n)),
        Some(DecayFit::NoDecayResolved { .. }) => ("inf".into(), "nan".into()),
        None => ("nan".into(), "nan".into()),
    }
}

impl OutputWriter {
    pub fn create(dir: &Path, config_sha256: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputWriter { dir: dir.to_path_buf(), config_sha256: config_sha256.to_string() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn csv(&self, name: &str, header: &[&str]) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
        let path = self.dir.join(name);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut buf = std::io::BufWriter::new(f);
        writeln!(buf, "# config_sha256={}", self.config_sha256).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        Ok(w)
    }

    /// One row per time, order and curve set; `order` is 1, 2, ... for the
    /// per-order factors and `total` for the product.
    pub fn write_curves(&self, sets: &[CurveSet<'_>]) -> Result<PathBuf> {
        let mut w = self.csv(CURVES_FILE, &CURVES_HEADER)?;
        for s in sets {
            let r = s.result;
            let mut series: Vec<(String, &[faer::c64])> =
                r.per_order.iter().enumerate().map(|(k, c)| ((k + 1).to_string(), c.values.as_slice())).collect();
            series.push(("total".into(), r.total.values.as_slice()));
            for (order, values) in series {
                for (t, v) in r.total.times.iter().zip(values) {
                    w.write_record([
                        s.series.clone(),
                        s.point.to_string(),
                        order.clone(),
                        t.to_string(),
                        v.re.to_string(),
                        v.im.to_string(),
                        v.norm().to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(self.dir.join(CURVES_FILE), e))?;
        Ok(self.dir.join(CURVES_FILE))
    }

    pub fn write_sweep(&self, table: &SweepTable) -> Result<PathBuf> {
        let mut w = self.csv(SWEEP_FILE, &SWEEP_HEADER)?;
        for row in &table.rows {
            let (t2, n) = t2_cells(row.fit.as_ref());
            w.write_record([row.point.to_string(), t2, n, row.region.label().to_string(), row.degraded_fraction.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(self.dir.join(SWEEP_FILE), e))?;
        Ok(self.dir.join(SWEEP_FILE))
    }

    pub fn write_spectra(&self, sets: &[SpectrumSet<'_>]) -> Result<PathBuf> {
        let mut w = self.csv(SPECTRA_FILE, &SPECTRA_HEADER)?;
        for s in sets {
            for p in s.peaks {
                w.write_record([s.series.clone(), s.point.to_string(), p.frequency_mhz.to_string(), p.weight.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(self.dir.join(SPECTRA_FILE), e))?;
        Ok(self.dir.join(SPECTRA_FILE))
    }

    /// Writes `body` with the config hash added as a top-level field.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut buf = std::io::BufWriter::new(f);
        serde_json::to_writer_pretty(&mut buf, &Tagged { config_sha256: &self.config_sha256, body })?;
        writeln!(buf).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Reads the `config_sha256` line of a CSV written by [`OutputWriter`].
pub fn csv_config_hash(path: &Path) -> Result<Option<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().next().and_then(|l| l.strip_prefix("# config_sha256=")).map(str::to_string))
}
