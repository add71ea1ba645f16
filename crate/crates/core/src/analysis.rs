//! Paired comparison of two strategies: Wilcoxon signed-rank test, box-plot
//! statistics and the plot-data report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::error::{Error, Result};

/// Largest effective sample size tested with the exact distribution.
pub const EXACT_MAX_N: usize = 25;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("all paired differences are zero; the signed-rank test is undefined")]
    NoNonzeroDifferences,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// min(W+, W-).
    pub w_statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: Method,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided test on paired samples, differences taken as `a - b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    wilcoxon_from_differences(&d)
}

pub fn wilcoxon_from_differences(d: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if d.is_empty() {
        return Err(StatsError::Empty);
    }
    let nonzero: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(StatsError::NoNonzeroDifferences);
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|x| x.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    // Average ranks are multiples of one half, so doubled ranks are integers.
    let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
    let total2: u64 = doubled.iter().sum();
    let plus2: u64 = nonzero
        .iter()
        .zip(&doubled)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let minus2 = total2 - plus2;
    let w2 = plus2.min(minus2);

    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&doubled, w2), Method::Exact)
    } else {
        (
            normal_p(&magnitudes, n, w2 as f64 / 2.0),
            Method::NormalApprox,
        )
    };
    Ok(WilcoxonResult {
        w_statistic: w2 as f64 / 2.0,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        p_value,
        n_effective: n,
        method,
    })
}

/// P(min(S, T - S) <= w) where S is the sum of a uniformly random subset of
/// the doubled ranks, counted by dynamic programming over subset sums.
fn exact_p(doubled: &[u64], w2: u64) -> f64 {
    let total: u64 = doubled.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as u64).min(total - *s as u64) <= w2)
        .map(|(_, c)| c)
        .sum();
    (hits as f64 / (1u64 << doubled.len()) as f64).min(1.0)
}

fn normal_p(magnitudes: &[f64], n: usize, w: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics at position
/// `(n - 1) p` of the sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(series: &[f64]) -> Result<BoxStats, StatsError> {
    if series.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || {
        sorted
            .iter()
            .copied()
            .filter(|x| *x >= lo_fence && *x <= hi_fence)
    };
    let whisker_low = inside().next().unwrap_or(q1);
    let whisker_high = inside().next_back().unwrap_or(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|x| *x < lo_fence || *x > hi_fence)
        .collect();
    Ok(BoxStats {
        n: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        q1,
        median,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub ppt_a: f64,
    pub ppt_b: f64,
}

pub const TRIALS_HEADER: &str = "trial,seed,ppt_a,ppt_b";

pub fn write_trials(rows: &[TrialRow]) -> String {
    let mut out = String::from(TRIALS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.trial, r.seed, r.ppt_a, r.ppt_b);
    }
    out
}

pub fn parse_trials(text: &str, origin: &str) -> Result<Vec<TrialRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRIALS_HEADER => {}
        _ => {
            return Err(Error::parse(
                origin,
                1,
                format!("expected header `{TRIALS_HEADER}`"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(origin, i + 1, msg);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let real = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad number `{s}`")))
        };
        rows.push(TrialRow {
            trial: f[0]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad trial `{}`", f[0])))?,
            seed: f[1]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad seed `{}`", f[1])))?,
            ppt_a: real(f[2])?,
            ppt_b: real(f[3])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::parse(origin, 1, "no trial rows"));
    }
    Ok(rows)
}

/// `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    ADominates,
    BDominates,
    NoSignificantDifference,
}

impl Verdict {
    pub fn text(&self) -> &'static str {
        match self {
            Verdict::ADominates => "A dominates",
            Verdict::BDominates => "B dominates",
            Verdict::NoSignificantDifference => "no significant difference",
        }
    }
}

pub fn verdict(test: Option<&WilcoxonResult>) -> Verdict {
    match test {
        Some(t) if t.p_value < SIGNIFICANCE && t.w_plus > t.w_minus => Verdict::ADominates,
        Some(t) if t.p_value < SIGNIFICANCE && t.w_minus > t.w_plus => Verdict::BDominates,
        _ => Verdict::NoSignificantDifference,
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub box_a: BoxStats,
    pub box_b: BoxStats,
    pub test: Option<WilcoxonResult>,
    pub verdict: Verdict,
    pub rows: Vec<TrialRow>,
}

impl Report {
    pub fn from_rows(rows: Vec<TrialRow>) -> Result<Self> {
        let a: Vec<f64> = rows.iter().map(|r| r.ppt_a).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.ppt_b).collect();
        let test = match wilcoxon_signed_rank(&a, &b) {
            Ok(t) => Some(t),
            Err(StatsError::NoNonzeroDifferences) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Report {
            box_a: box_stats(&a)?,
            box_b: box_stats(&b)?,
            verdict: verdict(test.as_ref()),
            test,
            rows,
        })
    }

    pub fn box_csv(b: &BoxStats) -> String {
        let mut out = String::from("field,value\n");
        for (k, v) in [
            ("n", b.n as f64),
            ("mean", b.mean),
            ("q1", b.q1),
            ("median", b.median),
            ("q3", b.q3),
            ("whisker_low", b.whisker_low),
            ("whisker_high", b.whisker_high),
        ] {
            let _ = writeln!(out, "{k},{v}");
        }
        for o in &b.outliers {
            let _ = writeln!(out, "outlier,{o}");
        }
        out
    }

    /// Paired points; `diagonal` is the y = x reference at each point's x.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("trial,ppt_a,ppt_b,diagonal\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.trial, r.ppt_a, r.ppt_b, r.ppt_a);
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.rows.len());
        let _ = writeln!(out, "mean_a = {}", sig6(self.box_a.mean));
        let _ = writeln!(out, "mean_b = {}", sig6(self.box_b.mean));
        let _ = writeln!(out, "median_a = {}", sig6(self.box_a.median));
        let _ = writeln!(out, "median_b = {}", sig6(self.box_b.median));
        match &self.test {
            Some(t) => {
                let method = match t.method {
                    Method::Exact => "exact",
                    Method::NormalApprox => "normal approximation",
                };
                let _ = writeln!(out, "n_effective = {}", t.n_effective);
                let _ = writeln!(out, "W = {}", sig6(t.w_statistic));
                let _ = writeln!(out, "W_plus = {}", sig6(t.w_plus));
                let _ = writeln!(out, "W_minus = {}", sig6(t.w_minus));
                let _ = writeln!(out, "p = {}", sig6(t.p_value));
                let _ = writeln!(out, "method = {method}");
            }
            None => {
                let _ = writeln!(out, "n_effective = 0");
                let _ = writeln!(out, "W = undefined (all differences zero)");
                let _ = writeln!(out, "p = undefined");
            }
        }
        let _ = writeln!(out, "alpha = {SIGNIFICANCE}");
        let _ = writeln!(out, "verdict = {}", self.verdict.text());
        out
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let files = [
            ("box_a.csv", Self::box_csv(&self.box_a)),
            ("box_b.csv", Self::box_csv(&self.box_b)),
            ("scatter.csv", self.scatter_csv()),
            ("summary.txt", self.summary_text()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::file(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Reads `trials` and writes the report bundle into `out_dir`.
pub fn report(trials: &Path, out_dir: &Path) -> Result<Report> {
    let text = fs::read_to_string(trials).map_err(|e| Error::file(trials, e))?;
    let rows = parse_trials(&text, &trials.display().to_string())?;
    let r = Report::from_rows(rows)?;
    r.write(out_dir)?;
    Ok(r)
}
