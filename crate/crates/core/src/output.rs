//! Report serialization: JSON and CSV with round-trippable floats
//! (17 significant digits), atomic file writes, and exports for path bundles
//! and node tables.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{MertonError, Result};
use crate::sde::{PathBundle, Scheme};
use crate::stats::SampleStats;

/// Decimal with 17 significant digits; non-finite values as `NaN`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Pretty JSON formatter writing floats with 17 significant digits.
/// serde_json already maps non-finite floats to `null`.
struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |e: io::Error| MertonError::InvalidConfig(format!("{}: {e}", path.display()));
    let name = path.file_name().ok_or_else(|| {
        MertonError::InvalidConfig(format!("not a file path: {}", path.display()))
    })?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV write");
    for row in rows {
        w.write_record(&row).expect("in-memory CSV write");
    }
    w.into_inner().expect("in-memory CSV flush")
}

/// CSV of numeric rows.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> Vec<u8> {
    csv_bytes(
        header,
        rows.iter().map(|r| r.iter().map(|&v| fmt_f64(v)).collect()),
    )
}

/// Long-format path export: `path_id, t, X, c, Y`.
pub fn paths_csv(bundle: &PathBundle) -> Vec<u8> {
    let rows = (0..bundle.paths).flat_map(|p| {
        let (x, c, y) = (
            bundle.wealth_path(p),
            bundle.consumption_path(p),
            bundle.deflator_path(p),
        );
        bundle.times.iter().enumerate().map(move |(k, t)| {
            vec![
                p.to_string(),
                fmt_f64(*t),
                fmt_f64(x[k]),
                fmt_f64(c[k]),
                fmt_f64(y[k]),
            ]
        })
    });
    csv_bytes(&["path_id", "t", "X", "c", "Y"], rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let s = SampleStats::from_slice(xs);
        Self {
            mean: s.mean,
            std_dev: s.std_dev,
            stderr: s.stderr,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub terminal_wealth: Moments,
    pub terminal_log_wealth: Moments,
    /// `Y_T X_T + int_0^T Y c ds`
    pub martingale_terminal: Moments,
    pub deflated_consumption: Moments,
    pub clip_events: usize,
    pub paths_with_clips: usize,
}

impl PathSummary {
    pub fn of(bundle: &PathBundle) -> Self {
        let terminal = bundle.terminal_wealth();
        let logs: Vec<f64> = terminal.iter().map(|x| x.ln()).collect();
        Self {
            paths: bundle.paths,
            steps: bundle.times.len() - 1,
            horizon: *bundle.times.last().unwrap(),
            seed: bundle.seed,
            scheme: bundle.scheme,
            terminal_wealth: Moments::of(&terminal),
            terminal_log_wealth: Moments::of(&logs),
            martingale_terminal: Moments::of(&bundle.martingale_terminal()),
            deflated_consumption: Moments::of(&bundle.deflated_consumption_integral),
            clip_events: bundle.total_clips(),
            paths_with_clips: bundle.clip_events.iter().filter(|&&c| c > 0).count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::ProportionalStrategy;
    use crate::model::ModelSpec;
    use crate::sde::{simulate, SimConfig};

    #[test]
    fn floats_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -1_111.111_111_111_111_2,
            1e-300,
            6.02e23,
            0.0,
        ] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn json_uses_fixed_precision() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
            n: u32,
            bad: f64,
        }
        let s = to_json_string(&S {
            a: 0.1,
            b: vec![4.0],
            n: 3,
            bad: f64::NAN,
        });
        assert!(s.contains("\"a\": 1.0000000000000001e-1"));
        assert!(s.contains("4.0000000000000000e0"));
        assert!(s.contains("\"n\": 3"));
        assert!(s.contains("\"bad\": null"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn path_export_shape() {
        let spec = ModelSpec::from_parts(0.0, 0.0, 0.2, 1.0, 2.0).unwrap();
        let strat = ProportionalStrategy::new(0.5, 0.0).unwrap();
        let cfg = SimConfig::new(1.0, 100, 2, 7, Scheme::ExactLog).unwrap();
        let bundle = simulate(&spec, &strat, 1.0, &cfg).unwrap();
        let text = String::from_utf8(paths_csv(&bundle)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,t,X,c,Y");
        assert_eq!(lines.len(), 1 + 2 * 101);
        let last: Vec<&str> = lines[101].split(',').collect();
        let x1: f64 = last[2].parse().unwrap();
        assert!((x1 - (-0.5f64).exp()).abs() < 1e-15);
        let summary = PathSummary::of(&bundle);
        assert_eq!(summary.clip_events, 0);
        assert!((summary.martingale_terminal.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
