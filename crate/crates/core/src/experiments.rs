//! Balanced-group and one-to-many experiments between two strategies.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::analysis::TrialRow;
use crate::error::{Error, Result};
use crate::neural::ModelParams;
use crate::session::{derive_seed, run_session, Population, SessionConfig, TRADERS_PER_SIDE};
use crate::traders::StrategyKind;

/// Trials that share one batch seed.
pub const BATCH_SIZE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Each side split evenly between A and B.
    Bgt,
    /// One B trader per side among A traders.
    Otm,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Bgt => "bgt",
            ExperimentKind::Otm => "otm",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bgt" => Ok(ExperimentKind::Bgt),
            "otm" => Ok(ExperimentKind::Otm),
            other => Err(Error::Config(format!("unknown experiment kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub strategy_a: StrategyKind,
    pub strategy_b: StrategyKind,
    pub trials: usize,
    pub base_seed: u64,
    /// Duration, mode and schedule settings; population and seed are overwritten.
    pub template: SessionConfig,
}

impl ExperimentSpec {
    pub fn new(
        kind: ExperimentKind,
        a: StrategyKind,
        b: StrategyKind,
        trials: usize,
        base_seed: u64,
    ) -> Self {
        ExperimentSpec {
            kind,
            strategy_a: a,
            strategy_b: b,
            trials,
            base_seed,
            template: SessionConfig::default(),
        }
    }

    pub fn needs_model(&self) -> bool {
        self.strategy_a == StrategyKind::Dtx || self.strategy_b == StrategyKind::Dtx
    }

    pub fn population(&self) -> Result<(Population, Population)> {
        build_population(self.kind, self.strategy_a, self.strategy_b)
    }

    pub fn session_config(&self, trial: usize) -> Result<SessionConfig> {
        let (buyers, sellers) = self.population()?;
        Ok(SessionConfig {
            buyers,
            sellers,
            seed: trial_seed(self.base_seed, trial),
            ..self.template.clone()
        })
    }
}

/// The eight named presets: BGT and OTM of DTX against each legacy strategy.
pub fn presets() -> Vec<(String, ExperimentSpec)> {
    let mut out = Vec::new();
    for kind in [ExperimentKind::Bgt, ExperimentKind::Otm] {
        for a in [
            StrategyKind::Zic,
            StrategyKind::Zip,
            StrategyKind::Gdx,
            StrategyKind::Aa,
        ] {
            let name = format!("{kind}-{}", a.name().to_ascii_lowercase());
            out.push((
                name,
                ExperimentSpec::new(kind, a, StrategyKind::Dtx, BATCH_SIZE, 0),
            ));
        }
    }
    out
}

pub fn preset(name: &str) -> Option<ExperimentSpec> {
    presets()
        .into_iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, s)| s)
}

/// Buyer and seller populations; the two sides are identical.
pub fn build_population(
    kind: ExperimentKind,
    a: StrategyKind,
    b: StrategyKind,
) -> Result<(Population, Population)> {
    if a == b {
        return Err(Error::Config(format!(
            "experiment needs two different strategies, got {a} twice"
        )));
    }
    let side = match kind {
        ExperimentKind::Bgt => vec![(a, TRADERS_PER_SIDE / 2), (b, TRADERS_PER_SIDE / 2)],
        ExperimentKind::Otm => vec![(a, TRADERS_PER_SIDE - 1), (b, 1)],
    };
    Ok((side.clone(), side))
}

/// Seed shared by the batch of [`BATCH_SIZE`] trials containing `trial`.
pub fn batch_seed(base_seed: u64, trial: usize) -> u64 {
    base_seed.wrapping_add((trial / BATCH_SIZE) as u64)
}

/// Session seed for one trial: its batch seed, split by position in the batch.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    derive_seed(batch_seed(base_seed, trial), (trial % BATCH_SIZE) as u64)
}

/// Runs all trials; row `i` holds the PPTs of A and B from trial `i`.
pub fn run_experiment<F: Fn(&TrialRow) + Sync>(
    spec: &ExperimentSpec,
    model: Option<&Arc<ModelParams>>,
    progress: F,
) -> Result<Vec<TrialRow>> {
    if spec.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if spec.needs_model() && model.is_none() {
        return Err(Error::Config(
            "experiment includes DTX; a model is required".into(),
        ));
    }
    spec.population()?;
    (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let cfg = spec.session_config(trial)?;
            let seed = cfg.seed;
            let r = run_session(&cfg, model).map_err(|e| Error::Session {
                seed,
                source: Box::new(e),
            })?;
            let missing = |k| Error::Config(format!("strategy {k} missing from session results"));
            let row = TrialRow {
                trial,
                seed,
                ppt_a: r
                    .ppt(spec.strategy_a)
                    .ok_or_else(|| missing(spec.strategy_a))?,
                ppt_b: r
                    .ppt(spec.strategy_b)
                    .ok_or_else(|| missing(spec.strategy_b))?,
            };
            progress(&row);
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::write_trials;
    use crate::session::expand_population;

    #[test]
    fn balanced_population() {
        let (buyers, sellers) =
            build_population(ExperimentKind::Bgt, StrategyKind::Zic, StrategyKind::Dtx).unwrap();
        assert_eq!(
            buyers,
            vec![(StrategyKind::Zic, 10), (StrategyKind::Dtx, 10)]
        );
        assert_eq!(buyers, sellers);
    }

    #[test]
    fn one_to_many_population() {
        let (buyers, sellers) =
            build_population(ExperimentKind::Otm, StrategyKind::Aa, StrategyKind::Dtx).unwrap();
        assert_eq!(buyers, vec![(StrategyKind::Aa, 19), (StrategyKind::Dtx, 1)]);
        assert_eq!(
            expand_population(&buyers).len() + expand_population(&sellers).len(),
            40
        );
        assert!(build_population(ExperimentKind::Otm, StrategyKind::Aa, StrategyKind::Aa).is_err());
    }

    #[test]
    fn eight_presets() {
        let p = presets();
        assert_eq!(p.len(), 8);
        assert!(p.iter().all(|(_, s)| s.strategy_b == StrategyKind::Dtx));
        assert_eq!(preset("OTM-GDX").unwrap().kind, ExperimentKind::Otm);
        assert!(preset("bgt-shvr").is_none());
    }

    #[test]
    fn seeds_follow_batches() {
        assert_eq!(batch_seed(100, 0), 100);
        assert_eq!(batch_seed(100, 49), 100);
        assert_eq!(batch_seed(100, 50), 101);
        let seeds: std::collections::HashSet<u64> = (0..500).map(|t| trial_seed(7, t)).collect();
        assert_eq!(seeds.len(), 500);
    }

    #[test]
    fn legacy_experiment_is_reproducible() {
        let mut spec = ExperimentSpec::new(
            ExperimentKind::Bgt,
            StrategyKind::Zic,
            StrategyKind::Zip,
            4,
            3,
        );
        spec.template.duration = 120.0;
        let a = run_experiment(&spec, None, |_| {}).unwrap();
        let b = run_experiment(&spec, None, |_| {}).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(write_trials(&a), write_trials(&b));
        assert!(a
            .iter()
            .enumerate()
            .all(|(i, r)| r.trial == i && r.seed == trial_seed(3, i)));
    }

    #[test]
    fn dtx_requires_model() {
        let spec = ExperimentSpec::new(
            ExperimentKind::Bgt,
            StrategyKind::Zic,
            StrategyKind::Dtx,
            2,
            0,
        );
        assert!(matches!(
            run_experiment(&spec, None, |_| {}),
            Err(Error::Config(_))
        ));
    }
}
