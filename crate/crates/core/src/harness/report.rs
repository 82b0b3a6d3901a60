use std::io::Write;

use super::{fmt_sig, mean_std};
use crate::error::{Error, Result};

/// A half-open range of episodes `[start, end)`, or a fraction of the run.
#[derive(Debug, Clone, PartialEq)]
pub enum Window {
    FirstQuarter,
    LastQuarter,
    All,
    Range { start: u64, end: u64 },
}

impl Window {
    pub fn label(&self) -> String {
        match self {
            Window::FirstQuarter => "first-quarter".into(),
            Window::LastQuarter => "last-quarter".into(),
            Window::All => "all".into(),
            Window::Range { start, end } => format!("{start}:{end}"),
        }
    }

    pub fn bounds(&self, len: u64) -> Result<(u64, u64)> {
        let (s, e) = match *self {
            Window::FirstQuarter => (0, len / 4),
            Window::LastQuarter => (len - len / 4, len),
            Window::All => (0, len),
            Window::Range { start, end } => (start, end),
        };
        if s >= e || e > len {
            return Err(Error::Config(format!("window {} is empty or exceeds a run of {len} episodes", self.label())));
        }
        Ok((s, e))
    }

    /// Parses a comma-separated list of `first-quarter`, `last-quarter`,
    /// `all` and `start:end`.
    pub fn parse_list(spec: &str) -> Result<Vec<Window>> {
        spec.split(',')
            .map(|w| match w.trim() {
                "first-quarter" => Ok(Window::FirstQuarter),
                "last-quarter" => Ok(Window::LastQuarter),
                "all" => Ok(Window::All),
                other => {
                    let (a, b) = other
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("unknown window `{other}`")))?;
                    let p = |x: &str| x.trim().parse::<u64>().map_err(|_| Error::Config(format!("bad window bound `{x}`")));
                    Ok(Window::Range { start: p(a)?, end: p(b)? })
                }
            })
            .collect()
    }
}

/// Default windows: learning speed, final performance, whole run.
pub fn default_windows() -> Vec<Window> {
    vec![Window::FirstQuarter, Window::LastQuarter, Window::All]
}

/// Average reward of one window, per seed and across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSummary {
    pub label: String,
    pub config_id: String,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
}

/// One reward stream to be summarized.
pub struct Series<'a> {
    pub config_id: &'a str,
    pub seed: u64,
    pub rewards: &'a [f64],
}

pub fn window_mean(rewards: &[f64], window: &Window) -> Result<f64> {
    let (s, e) = window.bounds(rewards.len() as u64)?;
    let xs = &rewards[s as usize..e as usize];
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Summarizes every window for every config, grouping series by config id
/// in order of first appearance.
pub fn report_windows(series: &[Series<'_>], windows: &[Window]) -> Result<Vec<WindowSummary>> {
    if series.is_empty() {
        return Err(Error::Config("no series to report".into()));
    }
    let mut ids: Vec<&str> = Vec::new();
    for s in series {
        if !ids.contains(&s.config_id) {
            ids.push(s.config_id);
        }
    }
    let mut out = Vec::new();
    for id in ids {
        for w in windows {
            let mut per_seed = Vec::new();
            for s in series.iter().filter(|s| s.config_id == id) {
                per_seed.push((s.seed, window_mean(s.rewards, w)?));
            }
            let vals: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
            let (mean, std) = mean_std(&vals);
            out.push(WindowSummary { label: w.label(), config_id: id.to_string(), per_seed, mean, std });
        }
    }
    Ok(out)
}

/// Summary CSV: per-seed rows followed by one `mean` row per window.
pub fn write_summary<W: Write>(summaries: &[WindowSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_id", "window", "seed", "mean_reward", "std_reward", "n_seeds", "note"])?;
    for s in summaries {
        for (seed, m) in &s.per_seed {
            w.write_record([s.config_id.as_str(), &s.label, &seed.to_string(), &fmt_sig(*m), "", "1", ""])?;
        }
        let note = if s.per_seed.len() == 1 { "single-seed-std" } else { "" };
        w.write_record([
            s.config_id.as_str(),
            &s.label,
            "mean",
            &fmt_sig(s.mean),
            &fmt_sig(s.std),
            &s.per_seed.len().to_string(),
            note,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `reward` column of metrics CSVs, grouped as
/// `(config_id, seed, rewards)` per file.
pub fn read_metrics(path: &std::path::Path) -> Result<(String, u64, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed(format!("{}: missing column `{name}`", path.display())))
    };
    let (rc, sc, ic) = (col("reward")?, col("seed")?, col("config_id")?);
    let mut rewards = Vec::new();
    let mut meta: Option<(String, u64)> = None;
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::Malformed(format!("{}: bad row {:?}", path.display(), rec.position().map(|p| p.line())));
        rewards.push(rec.get(rc).and_then(|x| x.parse().ok()).ok_or_else(bad)?);
        if meta.is_none() {
            let seed = rec.get(sc).and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            meta = Some((rec.get(ic).ok_or_else(bad)?.to_string(), seed));
        }
    }
    let (id, seed) = meta.ok_or_else(|| Error::Malformed(format!("{}: no rows", path.display())))?;
    Ok((id, seed, rewards))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(rewards: &[f64]) -> Vec<Series<'_>> {
        vec![Series { config_id: "x", seed: 0, rewards }]
    }

    #[test]
    fn constant_stream_reports_constant() {
        let r = vec![0.5; 400];
        for s in report_windows(&one(&r), &default_windows()).unwrap() {
            assert_eq!(s.mean, 0.5);
            assert_eq!(s.std, 0.0);
        }
    }

    #[test]
    fn whole_run_is_global_mean() {
        let r: Vec<f64> = (0..100).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let s = report_windows(&one(&r), &[Window::All]).unwrap();
        assert_eq!(s[0].mean, r.iter().sum::<f64>() / 100.0);
    }

    #[test]
    fn improving_run_orders_windows() {
        let r: Vec<f64> = (0..1000).map(|i| if i % 10 < i / 100 { 1.0 } else { -1.0 }).collect();
        let s = report_windows(&one(&r), &[Window::FirstQuarter, Window::LastQuarter]).unwrap();
        assert!(s[1].mean > s[0].mean);
    }

    #[test]
    fn windows_must_fit() {
        let r = vec![1.0; 10];
        assert!(report_windows(&one(&r), &[Window::Range { start: 5, end: 11 }]).is_err());
        assert!(report_windows(&one(&r), &[Window::Range { start: 5, end: 5 }]).is_err());
        assert_eq!(
            Window::parse_list("first-quarter, 3:7").unwrap(),
            vec![Window::FirstQuarter, Window::Range { start: 3, end: 7 }]
        );
        assert!(Window::parse_list("middle").is_err());
    }

    #[test]
    fn cross_seed_statistics() {
        let a = vec![1.0; 8];
        let b = vec![-1.0; 8];
        let series = vec![
            Series { config_id: "x", seed: 0, rewards: &a },
            Series { config_id: "x", seed: 1, rewards: &b },
        ];
        let s = report_windows(&series, &[Window::All]).unwrap();
        assert_eq!(s[0].mean, 0.0);
        assert!((s[0].std - 2f64.sqrt()).abs() < 1e-15);
    }
}
