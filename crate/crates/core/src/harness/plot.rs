use std::fmt::Write as _;
use std::path::Path;

use super::mean_std;
use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const MAX_POINTS: usize = 1000;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One learning curve with its ±1 std band.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub episode: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Loads curves from metrics CSVs (grouped across seeds by `config_id`)
/// and aggregated sweep CSVs, in order of first appearance.
pub fn load_curves<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<Curve>> {
    // label -> (episodes, per-seed moving averages)
    let mut metrics: Vec<(String, Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    let mut order: Vec<(bool, usize)> = Vec::new();
    let mut aggregated: Vec<Curve> = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let malformed = |what: &str| Error::Malformed(format!("{}: {what}", path.display()));
        let id_col = col("config_id").ok_or_else(|| malformed("missing column `config_id`"))?;
        let ep_col = col("episode").ok_or_else(|| malformed("missing column `episode`"))?;
        let num = |rec: &csv::StringRecord, c: usize| -> Result<f64> {
            rec.get(c).and_then(|x| x.parse().ok()).ok_or_else(|| malformed("non-numeric field"))
        };
        if let Some(ma_col) = col("reward_ma") {
            let mut label = None;
            let (mut ep, mut ma) = (Vec::new(), Vec::new());
            for rec in r.records() {
                let rec = rec?;
                let id = rec.get(id_col).unwrap_or_default().to_string();
                if label.get_or_insert_with(|| id.clone()) != &id {
                    return Err(malformed("several config ids in one metrics file"));
                }
                ep.push(num(&rec, ep_col)?);
                ma.push(num(&rec, ma_col)?);
            }
            let label = label.ok_or_else(|| malformed("no rows"))?;
            match metrics.iter_mut().position(|m| m.0 == label) {
                Some(i) => {
                    if metrics[i].1 != ep {
                        return Err(malformed("episode axis differs from other seeds of the same config"));
                    }
                    metrics[i].2.push(ma);
                }
                None => {
                    order.push((true, metrics.len()));
                    metrics.push((label, ep, vec![ma]));
                }
            }
        } else if let (Some(m_col), Some(s_col)) = (col("mean_reward_ma"), col("std_reward_ma")) {
            for rec in r.records() {
                let rec = rec?;
                let id = rec.get(id_col).unwrap_or_default().to_string();
                let i = match aggregated.iter().position(|c| c.label == id) {
                    Some(i) => i,
                    None => {
                        order.push((false, aggregated.len()));
                        aggregated.push(Curve { label: id, episode: vec![], mean: vec![], std: vec![] });
                        aggregated.len() - 1
                    }
                };
                let c = &mut aggregated[i];
                c.episode.push(num(&rec, ep_col)?);
                c.mean.push(num(&rec, m_col)?);
                c.std.push(num(&rec, s_col)?);
            }
        } else {
            return Err(malformed("neither a metrics nor an aggregated sweep CSV"));
        }
    }
    let mut out = Vec::new();
    for (is_metrics, i) in order {
        if is_metrics {
            let (label, ep, runs) = &metrics[i];
            let mut mean = Vec::with_capacity(ep.len());
            let mut std = Vec::with_capacity(ep.len());
            let mut col = Vec::with_capacity(runs.len());
            for t in 0..ep.len() {
                col.clear();
                col.extend(runs.iter().map(|r| r[t]));
                let (m, s) = mean_std(&col);
                mean.push(m);
                std.push(s);
            }
            out.push(Curve { label: label.clone(), episode: ep.clone(), mean, std });
        } else {
            out.push(aggregated[i].clone());
        }
    }
    Ok(out)
}

fn thin(len: usize) -> Vec<usize> {
    let stride = len.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

/// Renders curves to SVG text. Output depends only on the input values.
pub fn render_svg(curves: &[Curve]) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::Config("nothing to plot".into()));
    }
    for c in curves {
        if c.episode.is_empty() || c.mean.len() != c.episode.len() || c.std.len() != c.episode.len() {
            return Err(Error::Malformed(format!("curve `{}` is empty or ragged", c.label)));
        }
    }
    let x_min = curves.iter().flat_map(|c| c.episode.first()).cloned().fold(f64::INFINITY, f64::min);
    let x_max = curves.iter().flat_map(|c| c.episode.last()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let (y_min, y_max) = (-1.0, 1.0);
    let px = |x: f64| MARGIN + (x - x_min) / span * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y.clamp(y_min, y_max) - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    for y in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{y}</text>"#, l - 6.0, py(y) + 4.0);
    }
    for x in [x_min, x_max] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{x}</text>"#, px(x), b + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">episode</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{:.2}" font-size="12" transform="rotate(-90 15 {:.2})" text-anchor="middle">average reward</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);

    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let idx = thin(c.episode.len());
        let mut band = String::new();
        for &i in &idx {
            let _ = write!(band, "{:.2},{:.2} ", px(c.episode[i]), py(c.mean[i] + c.std[i]));
        }
        for &i in idx.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(c.episode[i]), py(c.mean[i] - c.std[i]));
        }
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = idx.iter().map(|&i| format!("{:.2},{:.2}", px(c.episode[i]), py(c.mean[i]))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = t + 14.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{}</text>"#, l + 10.0, ly + 10.0, escape(&c.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Loads `inputs`, renders them and writes `output`. Nothing is written on
/// error.
pub fn plot<P: AsRef<Path>>(inputs: &[P], output: &Path) -> Result<()> {
    let svg = render_svg(&load_curves(inputs)?)?;
    std::fs::write(output, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(n: usize) -> Curve {
        Curve {
            label: "a<b".into(),
            episode: (0..n).map(|i| i as f64).collect(),
            mean: (0..n).map(|i| i as f64 / n as f64).collect(),
            std: vec![0.1; n],
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_svg(&[]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.svg");
        assert!(plot::<&Path>(&[], &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn single_series_structure() {
        let svg = render_svg(&[curve(3)]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("<polyline points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 3);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn deterministic_and_thinned() {
        let c = [curve(5000), curve(7)];
        assert_eq!(render_svg(&c).unwrap(), render_svg(&c).unwrap());
        let svg = render_svg(&c).unwrap();
        let pts = svg.split("<polyline points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert!(pts.split(' ').count() <= MAX_POINTS + 1);
    }

    #[test]
    fn loads_metrics_across_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |name: &str, seed: u64, ma: [f64; 2]| {
            let p = dir.path().join(name);
            std::fs::write(
                &p,
                format!("episode,reward,reward_ma,seed,config_id,wall_ms\n0,1,{},{seed},x,0\n1,1,{},{seed},x,0\n", ma[0], ma[1]),
            )
            .unwrap();
            p
        };
        let a = mk("a.csv", 0, [1.0, 0.0]);
        let b = mk("b.csv", 1, [-1.0, 0.0]);
        let curves = load_curves(&[a, b]).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].mean, vec![0.0, 0.0]);
        assert!((curves[0].std[0] - 2f64.sqrt()).abs() < 1e-15);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "foo,bar\n1,2\n").unwrap();
        assert!(load_curves(&[bad]).is_err());
    }
}
