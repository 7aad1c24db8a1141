//! Directory layout:
//!
//! ```text
//! <dir>/manifest            TOML: model, dimensions, units, configs, split, record hashes
//! <dir>/records/<i>.csv     t,xi_0,...,xi_{dx-1}   one row per sample, ascending t
//! <dir>/records/<i>.ctrl.csv  k,omega_0,...,omega_{du-1}
//! ```
//!
//! Floats use the shortest decimal that parses back to the same value.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Manifest, RecordEntry, TrajectoryRecord, FORMAT_VERSION};
use crate::controls::PiecewiseConstantControl;
use crate::error::{Error, Result};
use crate::util::{push_f64, sha256_hex};

pub const MANIFEST_FILE: &str = "manifest";

fn header(first: &str, prefix: &str, n: usize) -> String {
    let mut s = first.to_string();
    for i in 0..n {
        s.push_str(&format!(",{prefix}_{i}"));
    }
    s.push('\n');
    s
}

fn record_csv(r: &TrajectoryRecord, dim: usize) -> String {
    let mut s = header("t", "xi", dim);
    for (t, x) in r.times.iter().zip(&r.states) {
        push_f64(&mut s, *t);
        for v in x {
            s.push(',');
            push_f64(&mut s, *v);
        }
        s.push('\n');
    }
    s
}

fn control_csv(u: &PiecewiseConstantControl) -> String {
    let mut s = header("k", "omega", u.dim());
    for (k, w) in u.values().iter().enumerate() {
        s.push_str(&k.to_string());
        for v in w {
            s.push(',');
            push_f64(&mut s, *v);
        }
        s.push('\n');
    }
    s
}

fn record_paths(dir: &Path, i: usize) -> (PathBuf, PathBuf) {
    let records = dir.join("records");
    (records.join(format!("{i}.csv")), records.join(format!("{i}.ctrl.csv")))
}

impl Dataset {
    /// Manifest text with record hashes for the current contents.
    pub fn manifest_text(&self) -> Result<String> {
        let mut m = self.manifest.clone();
        m.records = self
            .records
            .iter()
            .map(|r| RecordEntry {
                id: r.id,
                samples: r.len(),
                sha256: sha256_hex(record_csv(r, m.state_dim).as_bytes()),
                ctrl_sha256: sha256_hex(control_csv(&r.control).as_bytes()),
            })
            .collect();
        toml::to_string(&m).map_err(|e| Error::contract(format!("manifest serialisation: {e}")))
    }

    /// Writes the dataset into `dir`, which must not exist or be empty.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        if dir.exists() && fs::read_dir(dir)?.next().is_some() {
            return Err(Error::contract(format!("{} is not empty", dir.display())));
        }
        fs::create_dir_all(dir.join("records"))?;
        for (i, r) in self.records.iter().enumerate() {
            let (data, ctrl) = record_paths(dir, i);
            fs::write(data, record_csv(r, self.manifest.state_dim))?;
            fs::write(ctrl, control_csv(&r.control))?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.manifest_text()?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)?;
        let mut manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::format(
                &path,
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        let entries = std::mem::take(&mut manifest.records);
        let mut records = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let (data_path, ctrl_path) = record_paths(dir, i);
            let data = fs::read_to_string(&data_path)?;
            let ctrl = fs::read_to_string(&ctrl_path)?;
            if sha256_hex(data.as_bytes()) != e.sha256 {
                return Err(Error::format(&data_path, "hash does not match the manifest"));
            }
            if sha256_hex(ctrl.as_bytes()) != e.ctrl_sha256 {
                return Err(Error::format(&ctrl_path, "hash does not match the manifest"));
            }
            let rows = parse_table(&data, "t", "xi", manifest.state_dim, &data_path)?;
            let values = parse_table(&ctrl, "k", "omega", manifest.input_dim, &ctrl_path)?;
            for (k, row) in values.iter().enumerate() {
                if row.0 != k as f64 {
                    return Err(Error::format(&ctrl_path, format!("row {k} has index {}", row.0)));
                }
            }
            if rows.len() != e.samples {
                return Err(Error::format(&data_path, "sample count does not match the manifest"));
            }
            if rows.first().is_none_or(|r| r.0 != 0.0) {
                return Err(Error::format(&data_path, "first row must be t = 0"));
            }
            let control = PiecewiseConstantControl::new(
                manifest.generation.delta,
                values.into_iter().map(|r| r.1).collect(),
            )
            .map_err(|err| Error::format(&ctrl_path, err.to_string()))?;
            let (times, states): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
            records.push(TrajectoryRecord {
                id: e.id,
                x0: states[0].clone(),
                control,
                times,
                states,
            });
        }
        let ds = Dataset { manifest, records };
        ds.validate().map_err(|err| Error::format(dir, err.to_string()))?;
        Ok(ds)
    }
}

fn parse_table(
    text: &str,
    first: &str,
    prefix: &str,
    dim: usize,
    path: &Path,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut lines = text.lines();
    let expected = header(first, prefix, dim);
    if lines.next() != Some(expected.trim_end()) {
        return Err(Error::format(path, format!("expected header {:?}", expected.trim_end())));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let fields: Result<Vec<f64>> = line
                .split(',')
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))
                })
                .collect();
            let fields = fields?;
            if fields.len() != dim + 1 {
                return Err(Error::format(
                    path,
                    format!("line {}: expected {} fields, found {}", n + 2, dim + 1, fields.len()),
                ));
            }
            Ok((fields[0], fields[1..].to_vec()))
        })
        .collect()
}
