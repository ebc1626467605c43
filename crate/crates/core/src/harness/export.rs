//! Episode-length distributions as CSV and SVG histograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::matches::EvalReport;
use crate::error::{Error, Result};

pub const LENGTHS_FILE: &str = "episode_lengths.csv";
pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSample {
    pub setting: String,
    /// `win` or `loss`.
    pub outcome: String,
    pub length: u64,
}

pub fn setting_name(r: &EvalReport) -> String {
    format!("{}_vs_{}", r.agent, r.opponent)
}

pub fn length_samples(reports: &[EvalReport]) -> Vec<LengthSample> {
    let mut out = Vec::new();
    for r in reports {
        let setting = setting_name(r);
        for (outcome, lengths) in [("win", &r.win_lengths), ("loss", &r.loss_lengths)] {
            out.extend(lengths.iter().map(|&length| LengthSample { setting: setting.clone(), outcome: outcome.into(), length }));
        }
    }
    out
}

pub fn write_lengths_csv(samples: &[LengthSample], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["setting", "outcome", "length"])?;
    for s in samples {
        w.write_record([s.setting.as_str(), s.outcome.as_str(), &s.length.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_lengths_csv(path: &Path) -> Result<Vec<LengthSample>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Counts of `xs` in `bins` equal-width bins over `[lo, hi]`; the last bin
/// is closed on the right and values outside the range are dropped.
pub fn histogram(xs: &[u64], bins: usize, lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        let x = x as f64;
        if x < lo || x > hi || !(width > 0.0) {
            continue;
        }
        let i = (((x - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
}

/// Overlaid win (blue) and loss (red) histograms sharing one axis.
pub fn histogram_svg(title: &str, wins: &[u64], losses: &[u64], bins: usize) -> String {
    let hi = wins.iter().chain(losses).copied().max().unwrap_or(1).max(1) as f64;
    let hw = histogram(wins, bins, 0.0, hi);
    let hl = histogram(losses, bins, 0.0, hi);
    let peak = hw.iter().chain(&hl).copied().max().unwrap_or(0).max(1) as f64;
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let bw = (w - 2.0 * pad) / bins as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="20">{}</text>"#, xml_escape(title));
    for (counts, color, shift) in [(&hw, "#3465a4", 0.0), (&hl, "#cc0000", bw / 2.0)] {
        for (i, &c) in counts.iter().enumerate() {
            let bh = (h - 2.0 * pad) * c as f64 / peak;
            let x = pad + i as f64 * bw + shift;
            let _ = writeln!(s, r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="{color}" fill-opacity="0.7"/>"#, h - pad - bh, bw / 2.0);
        }
    }
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, h - pad, w - pad);
    let _ = writeln!(s, r#"<text x="{pad}" y="{}">0</text>"#, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{hi} steps</text>"#, w - pad, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="end">win {} / loss {}</text>"#, w - pad, wins.len(), losses.len());
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn file_stem(setting: &str) -> String {
    setting.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes the combined CSV plus one SVG per setting into `dir`; returns
/// every file written.
pub fn export_histograms(reports: &[EvalReport], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let samples = length_samples(reports);
    let csv_path = dir.join(LENGTHS_FILE);
    write_lengths_csv(&samples, &csv_path)?;
    let mut written = vec![csv_path];
    written.extend(export_sample_histograms(&samples, dir, DEFAULT_BINS)?);
    Ok(written)
}

/// One SVG per setting found in `samples`, written into `dir`.
pub fn export_sample_histograms(samples: &[LengthSample], dir: &Path, bins: usize) -> Result<Vec<PathBuf>> {
    if bins == 0 {
        return Err(Error::InvalidConfig("histograms need at least one bin".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut by_setting: BTreeMap<&str, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for s in samples {
        let e = by_setting.entry(&s.setting).or_default();
        if s.outcome == "win" {
            e.0.push(s.length);
        } else {
            e.1.push(s.length);
        }
    }
    let mut written = Vec::new();
    for (setting, (wins, losses)) in by_setting {
        let path = dir.join(format!("{}.svg", file_stem(setting)));
        std::fs::write(&path, histogram_svg(setting, &wins, &losses, bins)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
