use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::schedule::StepMode;
use crate::error::{Error, Result};
use crate::exchange::Price;
use crate::traders::StrategyKind;

pub const TRADERS_PER_SIDE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One thread per trader, plus clock and exchange threads.
    Threaded,
    /// Single-threaded virtual clock; bit-reproducible.
    Lockstep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Threaded => "threaded",
            Mode::Lockstep => "lockstep",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "threaded" => Ok(Mode::Threaded),
            "lockstep" => Ok(Mode::Lockstep),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Strategy counts for one side, in trader order.
pub type Population = Vec<(StrategyKind, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub duration: f64,
    pub buyers: Population,
    pub sellers: Population,
    pub seed: u64,
    pub mode: Mode,
    pub range_low: Price,
    pub range_high: Price,
    pub issue_interval: f64,
    pub stepmode: StepMode,
    /// Virtual seconds per scheduling tick.
    pub tick: f64,
    /// Wall-clock microseconds per tick in threaded mode.
    pub realtime_tick_us: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            duration: 3600.0,
            buyers: vec![(StrategyKind::Zic, TRADERS_PER_SIDE)],
            sellers: vec![(StrategyKind::Zic, TRADERS_PER_SIDE)],
            seed: 0,
            mode: Mode::Lockstep,
            range_low: 50,
            range_high: 150,
            issue_interval: 30.0,
            stepmode: StepMode::Jittered,
            tick: 0.1,
            realtime_tick_us: 100,
        }
    }
}

pub fn format_population(p: &[(StrategyKind, usize)]) -> String {
    p.iter()
        .map(|(k, n)| format!("{k}:{n}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses `ZIC:10,AA:10`.
pub fn parse_population(s: &str) -> Result<Population> {
    s.split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            let (name, count) = part.split_once(':').ok_or_else(|| {
                Error::Config(format!("expected STRATEGY:COUNT, got `{}`", part.trim()))
            })?;
            let kind: StrategyKind = name.parse()?;
            let count = count
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad trader count `{}`", count.trim())))?;
            Ok((kind, count))
        })
        .collect()
}

/// Strategy of each trader on a side, in order.
pub fn expand_population(p: &[(StrategyKind, usize)]) -> Vec<StrategyKind> {
    p.iter()
        .flat_map(|&(k, n)| std::iter::repeat_n(k, n))
        .collect()
}

impl SessionConfig {
    pub fn with_population(buyers: Population, sellers: Population, seed: u64) -> Self {
        SessionConfig {
            buyers,
            sellers,
            seed,
            ..SessionConfig::default()
        }
    }

    pub fn needs_model(&self) -> bool {
        self.buyers
            .iter()
            .chain(&self.sellers)
            .any(|(k, n)| *k == StrategyKind::Dtx && *n > 0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("duration must be positive".into()));
        }
        for (name, side) in [("buyers", &self.buyers), ("sellers", &self.sellers)] {
            let total: usize = side.iter().map(|(_, n)| n).sum();
            if total != TRADERS_PER_SIDE {
                return Err(Error::Config(format!(
                    "{name} must total {TRADERS_PER_SIDE} traders, got {total}"
                )));
            }
        }
        if self.range_low < 1 || self.range_low > self.range_high {
            return Err(Error::Config(format!(
                "price range ({}, {}) must satisfy 1 <= low <= high",
                self.range_low, self.range_high
            )));
        }
        if self.issue_interval.is_nan() || self.issue_interval <= 0.0 {
            return Err(Error::Config("issue_interval must be positive".into()));
        }
        if self.tick.is_nan() || self.tick <= 0.0 || self.tick > self.issue_interval {
            return Err(Error::Config(
                "tick must be positive and no longer than issue_interval".into(),
            ));
        }
        Ok(())
    }

    /// Key-value text: `key = value` per line, `#` comments.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = SessionConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::parse(origin, n + 1, msg);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| err(format!("bad number `{v}` for {key}")))
            };
            let int = |v: &str| {
                v.parse::<i64>()
                    .map_err(|_| err(format!("bad integer `{v}` for {key}")))
            };
            let wrap = |e: Error| err(e.to_string());
            match key {
                "duration" => cfg.duration = num(value)?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| err(format!("bad seed `{value}`")))?
                }
                "mode" => cfg.mode = value.parse().map_err(wrap)?,
                "buyers" => cfg.buyers = parse_population(value).map_err(wrap)?,
                "sellers" => cfg.sellers = parse_population(value).map_err(wrap)?,
                "range_low" => cfg.range_low = int(value)?,
                "range_high" => cfg.range_high = int(value)?,
                "issue_interval" => cfg.issue_interval = num(value)?,
                "stepmode" => cfg.stepmode = value.parse().map_err(wrap)?,
                "tick" => cfg.tick = num(value)?,
                "realtime_tick_us" => {
                    cfg.realtime_tick_us = value
                        .parse()
                        .map_err(|_| err(format!("bad integer `{value}`")))?
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        format!(
            "duration = {}\nseed = {}\nmode = {}\nbuyers = {}\nsellers = {}\nrange_low = {}\nrange_high = {}\n\
             issue_interval = {}\nstepmode = {}\ntick = {}\nrealtime_tick_us = {}\n",
            self.duration,
            self.seed,
            self.mode,
            format_population(&self.buyers),
            format_population(&self.sellers),
            self.range_low,
            self.range_high,
            self.issue_interval,
            self.stepmode,
            self.tick,
            self.realtime_tick_us
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = SessionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.duration, 3600.0);
        assert_eq!((cfg.range_low, cfg.range_high), (50, 150));
        assert_eq!(cfg.stepmode, StepMode::Jittered);
        assert!(!cfg.needs_model());
    }

    #[test]
    fn parses_documented_keys() {
        let text = "# market\nduration = 600\nseed = 42\nmode = threaded\nbuyers = ZIC:10, DTX:10\n\
                    sellers = AA:20\nrange_low = 60\nrange_high = 140\nissue_interval = 20\nstepmode = fixed\n";
        let cfg = SessionConfig::parse(text, "cfg").unwrap();
        assert_eq!(cfg.duration, 600.0);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.mode, Mode::Threaded);
        assert_eq!(
            cfg.buyers,
            vec![(StrategyKind::Zic, 10), (StrategyKind::Dtx, 10)]
        );
        assert_eq!(cfg.sellers, vec![(StrategyKind::Aa, 20)]);
        assert_eq!((cfg.range_low, cfg.range_high), (60, 140));
        assert_eq!(cfg.stepmode, StepMode::Fixed);
        assert!(cfg.needs_model());
        assert_eq!(SessionConfig::parse(&cfg.to_text(), "again").unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let e = SessionConfig::parse("buyers = SHVR:20\n", "c").unwrap_err();
        assert!(e.to_string().contains("c:1"), "{e}");
        assert!(e.to_string().contains("SHVR"));
        assert!(SessionConfig::parse("speed = 3\n", "c").is_err());
        assert!(SessionConfig::parse("buyers = ZIC:19\n", "c").is_err());
        assert!(SessionConfig::parse("duration = 0\n", "c").is_err());
        assert!(SessionConfig::parse("range_low = 0\n", "c").is_err());
    }

    #[test]
    fn population_expands_in_order() {
        let p = parse_population("ZIP:2,GVWY:1").unwrap();
        assert_eq!(
            expand_population(&p),
            vec![StrategyKind::Zip, StrategyKind::Zip, StrategyKind::Giveaway]
        );
        assert_eq!(format_population(&p), "ZIP:2,GVWY:1");
    }
}
