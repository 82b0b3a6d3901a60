//! Experiment driver: configs, training runs, seed sweeps, window reports
//! and SVG learning curves.

pub mod config;
pub mod plot;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{Algorithm, Preset, RunConfig};
pub use run::{run, Learner, RunOutput};
pub use sweep::{sweep, Axis, Sweep};

/// Formats with 9 significant digits, in the style of C's `%.9g`.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // The exponent comes from the rounded form, which may carry into the next decade.
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, e) = sci.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap();
    if (-5..DIGITS).contains(&e) {
        let decimals = (DIGITS - 1 - e).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-1.0), "-1");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(0.123456789123), "0.123456789");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666666667");
        assert_eq!(fmt_sig(123456.7891), "123456.789");
        assert_eq!(fmt_sig(1e-7), "1e-07");
        assert_eq!(fmt_sig(9.9999999999), "10");
        assert_eq!(fmt_sig(1.5e12), "1.5e+12");
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
