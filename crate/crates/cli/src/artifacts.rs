//! Output-directory plumbing: CSV and JSON writers, minimal native SVG line
//! plots, and the run manifest with content hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sgwn_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Fixed float format for CSV artifacts: 17 significant digits, enough to
/// round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// RFC-4180 quoting: quote when the field contains a comma, quote, or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Collects files written under one run's output directory and finishes by
/// writing `manifest.json` with a content hash per file.
pub struct RunDir {
    root: PathBuf,
    command: String,
    files: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> Result<RunDir> {
        std::fs::create_dir_all(root)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves a possibly relative artifact path against the run directory.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.resolve(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Registers a file that was produced through a writer that streams to
    /// disk itself (for example the dataset and checkpoint serializers).
    pub fn register(&mut self, rel: &str) -> Result<()> {
        let bytes = std::fs::read(self.resolve(rel))?;
        self.files.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut out = String::new();
        out.push_str(&header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
        out.push_str("\r\n");
        for row in rows {
            if row.len() != header.len() {
                return Err(Error::Validation(format!(
                    "csv row has {} fields, header has {}",
                    row.len(),
                    header.len()
                )));
            }
            out.push_str(&row.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
            out.push_str("\r\n");
        }
        self.write_bytes(rel, out.as_bytes())?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())?;
        Ok(())
    }

    /// Writes `manifest.json`: the command, the resolved config, and every
    /// produced file with its SHA-256. The manifest itself is not listed.
    pub fn finish<C: Serialize>(self, config: &C) -> Result<()> {
        #[derive(Serialize)]
        struct FileEntry {
            path: String,
            sha256: String,
        }
        #[derive(Serialize)]
        struct Manifest<'a, C: Serialize> {
            command: &'a str,
            config: &'a C,
            files: Vec<FileEntry>,
        }
        let manifest = Manifest {
            command: &self.command,
            config,
            files: self
                .files
                .iter()
                .map(|(path, sha256)| FileEntry { path: path.clone(), sha256: sha256.clone() })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(())
    }
}

/// One named curve for the SVG plot helper.
pub struct Series<'a> {
    pub name: String,
    pub points: &'a [(f64, f64)],
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Renders a minimal multi-series line plot. No external dependencies; the
/// output is deterministic for identical inputs.
pub fn svg_line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if xmax - xmin < 1e-300 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-300 {
        ymax = ymin + 1.0;
    }
    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| mt + ph - (y - ymin) / (ymax - ymin) * ph;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{}</text>\n",
        w / 2.0,
        title
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{0}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw
    ));
    for i in 0..=4 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{:.4}</text>\n",
            sx(fx),
            mt + ph + 18.0,
            fx
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"11\">{:.4}</text>\n",
            ml - 6.0,
            sy(fy) + 4.0,
            fy
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">{}</text>\n",
        ml + pw / 2.0,
        h - 10.0,
        xlabel
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
        mt + ph / 2.0,
        ylabel
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{}</text>\n",
            ml + pw - 150.0,
            mt + 16.0 + 16.0 * i as f64,
            s.name
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, -1.5, std::f64::consts::PI, 1e-300, 123456.789012345678] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn manifest_lists_files_with_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path(), "test").unwrap();
        run.write_csv("t.csv", &["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        run.write_json("t.json", &serde_json::json!({"x": 1})).unwrap();
        run.finish(&serde_json::json!({})).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        let files = manifest["files"].as_array().unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0]["path"], "t.csv");
        assert_eq!(files[0]["sha256"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn svg_contains_series() {
        let pts = [(0.0, 0.0), (1.0, 1.0)];
        let svg = svg_line_plot(
            "t",
            "x",
            "y",
            &[Series { name: "curve".into(), points: &pts }],
        );
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("curve"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
