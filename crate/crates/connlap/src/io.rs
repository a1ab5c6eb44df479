//! Dataset, report, and manifest persistence.
//!
//! Formats are plain text and diff-able:
//! - point clouds: comma-delimited rows plus a key=value sidecar (`.meta`);
//! - reports: one `row ...` record per line with name=value pairs, plus one
//!   two-column `<metric>.dat` plot file per metric;
//! - run manifests: key=value, including a SHA-256 digest of the canonical
//!   config text;
//! - configs: flat key=value text.
//!
//! Numbers are serialized with 17 significant digits so binary64 values
//! round-trip exactly. All writes go through a temp-file-then-rename step.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::ConvergenceReport;
use crate::manifolds::{DensitySpec, ManifoldModel, PointCloud};
use crate::scalar::Scalar;

/// 17 significant digits: exact binary64 round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write-temp-then-rename.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// SHA-256 hex digest of the canonical key=value form of a config.
pub fn config_digest(pairs: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in pairs {
        hasher.update(k.as_bytes());
        hasher.update(b"=");
        hasher.update(v.as_bytes());
        hasher.update(b"\n");
    }
    let out = hasher.finalize();
    out.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

/// Save `points.csv` + `points.meta` under `dir`; returns the file names.
pub fn save_cloud<T: Scalar>(cloud: &PointCloud<T>, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = String::new();
    for row in cloud.rows() {
        let cols: Vec<String> = row.iter().map(|v| fmt_f64(v.as_f64())).collect();
        csv.push_str(&cols.join(","));
        csv.push('\n');
    }
    let csv_path = dir.join("points.csv");
    atomic_write(&csv_path, &csv)?;

    let mut meta = String::new();
    meta.push_str("format=connlap-cloud-v1\n");
    meta.push_str(&format!(
        "manifold={}\n",
        cloud.manifold.map_or("none", |m| m.name())
    ));
    meta.push_str(&format!(
        "density={}\n",
        cloud.density.map_or("none", |d| d.name())
    ));
    meta.push_str(&format!("n={}\n", cloud.len()));
    meta.push_str(&format!("p={}\n", cloud.ambient_dim()));
    meta.push_str(&format!("seed={}\n", cloud.seed));
    let meta_path = dir.join("points.meta");
    atomic_write(&meta_path, &meta)?;
    Ok(vec![csv_path, meta_path])
}

/// Load a cloud saved by [`save_cloud`]; `path` may be the directory, the
/// csv file, or the meta file. Round-trips values to full stored precision.
pub fn load_cloud(path: &Path) -> Result<PointCloud<f64>> {
    let (csv_path, meta_path) = if path.is_dir() {
        (path.join("points.csv"), path.join("points.meta"))
    } else if path.extension().is_some_and(|e| e == "meta") {
        (path.with_extension("csv"), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.with_extension("meta"))
    };
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta = parse_kv(&meta_text, &meta_path)?;
    let expect = |k: &str| -> Result<&String> {
        meta.get(k).ok_or_else(|| Error::MalformedInput {
            path: meta_path.display().to_string(),
            line: 0,
            what: format!("missing key `{k}`"),
        })
    };
    if expect("format")? != "connlap-cloud-v1" {
        return Err(Error::MalformedInput {
            path: meta_path.display().to_string(),
            line: 1,
            what: "unknown format".into(),
        });
    }
    let n: usize = expect("n")?.parse().map_err(|_| Error::MalformedInput {
        path: meta_path.display().to_string(),
        line: 0,
        what: "bad n".into(),
    })?;
    let p: usize = expect("p")?.parse().map_err(|_| Error::MalformedInput {
        path: meta_path.display().to_string(),
        line: 0,
        what: "bad p".into(),
    })?;
    let seed: u64 = expect("seed")?.parse().unwrap_or(0);

    let csv_text = fs::read_to_string(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut points = Vec::with_capacity(n * p);
    let mut rows = 0usize;
    for (lineno, line) in csv_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != p {
            return Err(Error::MalformedInput {
                path: csv_path.display().to_string(),
                line: lineno + 1,
                what: format!("expected {p} columns, found {}", cols.len()),
            });
        }
        for c in cols {
            let v: f64 = c.trim().parse().map_err(|_| Error::MalformedInput {
                path: csv_path.display().to_string(),
                line: lineno + 1,
                what: format!("bad number `{c}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedInput {
                    path: csv_path.display().to_string(),
                    line: lineno + 1,
                    what: "non-finite value".into(),
                });
            }
            points.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::MalformedInput {
            path: csv_path.display().to_string(),
            line: rows,
            what: format!("meta promised n={n}, file has {rows} rows"),
        });
    }
    let mut cloud = PointCloud::from_rows(points, n, p)?;
    cloud.seed = seed;
    if let Ok(model) = ManifoldModel::parse(expect("manifold")?) {
        cloud.manifold = Some(model);
        if let Ok(density) = DensitySpec::parse(expect("density")?) {
            cloud.density = Some(density);
            let vals = (0..n)
                .map(|i| density_value(model, density, cloud.point(i)))
                .collect();
            cloud.density_values = Some(vals);
        }
    }
    Ok(cloud)
}

/// True sampling density of a catalogued (model, spec) pair at a point.
pub fn density_value(model: ManifoldModel, density: DensitySpec, x: &[f64]) -> f64 {
    match density {
        DensitySpec::Uniform => 1.0 / model.volume(),
        DensitySpec::S1TwoPlusSin => {
            let theta = x[1].atan2(x[0]);
            (2.0 + theta.sin()) / (4.0 * std::f64::consts::PI)
        }
    }
}

fn parse_kv(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::MalformedInput {
            path: path.display().to_string(),
            line: lineno + 1,
            what: "expected key=value".into(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Flat key=value config file.
pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_kv(&text, path)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Save `report.txt` plus one `<metric>.dat` two-column plot file per metric.
pub fn save_report(report: &ConvergenceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut text = String::new();
    for (k, v) in &report.provenance {
        text.push_str(&format!("# {k}={v}\n"));
    }
    for row in &report.rows {
        text.push_str(&format!(
            "row n={} h={} metric={} value={}\n",
            row.n,
            fmt_f64(row.h),
            row.metric,
            fmt_f64(row.value)
        ));
    }
    for v in &report.verdicts {
        text.push_str(&format!("verdict name={} pass={}\n", v.name, v.pass));
    }
    let report_path = dir.join("report.txt");
    atomic_write(&report_path, &text)?;
    let mut files = vec![report_path];

    let mut metrics: Vec<&str> = report.rows.iter().map(|r| r.metric.as_str()).collect();
    metrics.sort_unstable();
    metrics.dedup();
    for metric in metrics {
        let mut data = String::new();
        for row in report.rows.iter().filter(|r| r.metric == metric) {
            data.push_str(&format!("{} {}\n", row.n, fmt_f64(row.value)));
        }
        let path = dir.join(format!("{metric}.dat"));
        atomic_write(&path, &data)?;
        files.push(path);
    }
    Ok(files)
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// Provenance record written next to every command's outputs. The digest is
/// over the canonical resolved configuration, so a reader can verify and
/// re-run the command identically; wall time is informational and excluded
/// from the determinism contract.
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub wall_ms: u128,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let mut text = String::new();
        text.push_str(&format!("command={}\n", self.command));
        text.push_str(&format!("config_digest={}\n", config_digest(&self.config)));
        for (k, v) in &self.config {
            text.push_str(&format!("config.{k}={v}\n"));
        }
        text.push_str(&format!(
            "seeds={}\n",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        text.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
        text.push_str(&format!("wall_time_ms={}\n", self.wall_ms));
        let names: Vec<String> = self
            .outputs
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        text.push_str(&format!("outputs={}\n", names.join(",")));
        let path = dir.join("manifest.txt");
        atomic_write(&path, &text)?;
        Ok(path)
    }

    /// Re-read a manifest and confirm the stored digest matches the stored
    /// config.
    pub fn verify(path: &Path) -> Result<bool> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut stored_digest = String::new();
        let mut config = BTreeMap::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("config_digest=") {
                stored_digest = rest.to_string();
            } else if let Some(rest) = line.strip_prefix("config.") {
                if let Some((k, v)) = rest.split_once('=') {
                    config.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(config_digest(&config) == stored_digest)
    }
}
