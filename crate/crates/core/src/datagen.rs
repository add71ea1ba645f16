//! Training-corpus generation: trader-proportion schedules, batched sessions
//! of legacy traders, the corpus manifest and normalization statistics.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{read_snapshots, FeatureRecord, NormStats};
use crate::session::{run_session, Population, SessionConfig, SessionResult, TRADERS_PER_SIDE};
use crate::traders::StrategyKind;

/// Trader counts for (ZIC, ZIP, GDX, AA, GVWY) on one side.
pub type ProportionTuple = [usize; 5];

pub const STRATEGY_ORDER: [StrategyKind; 5] = [
    StrategyKind::Zic,
    StrategyKind::Zip,
    StrategyKind::Gdx,
    StrategyKind::Aa,
    StrategyKind::Giveaway,
];

/// The ten base proportions used to build the training schedules.
pub const BASE_TUPLES: [ProportionTuple; 10] = [
    [5, 5, 5, 5, 0],
    [8, 4, 4, 4, 0],
    [8, 8, 2, 2, 0],
    [10, 4, 4, 2, 0],
    [12, 4, 2, 2, 0],
    [14, 2, 2, 2, 0],
    [16, 2, 2, 0, 0],
    [16, 4, 0, 0, 0],
    [18, 2, 0, 0, 0],
    [20, 0, 0, 0, 0],
];

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const NORM_FILE: &str = "norm.csv";
pub const MANIFEST_HEADER: &str = "file,rows,seed,schedule,ppt_zic,ppt_zip,ppt_gdx,ppt_aa,ppt_gvwy";

/// One population, identical on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Schedule(pub ProportionTuple);

impl Schedule {
    pub fn population(&self) -> Population {
        STRATEGY_ORDER
            .iter()
            .zip(self.0)
            .filter(|(_, n)| *n > 0)
            .map(|(k, n)| (*k, n))
            .collect()
    }

    pub fn label(&self) -> String {
        self.0.map(|n| n.to_string()).join("/")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .split(['/', ','])
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 5 {
            return Err(Error::Config(format!("schedule `{s}` needs five counts")));
        }
        let mut t = [0usize; 5];
        for (slot, p) in t.iter_mut().zip(parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Config(format!("bad count `{p}` in schedule `{s}`")))?;
        }
        check_tuple(&t)?;
        Ok(Schedule(t))
    }
}

fn check_tuple(t: &ProportionTuple) -> Result<()> {
    let sum: usize = t.iter().sum();
    if sum != TRADERS_PER_SIDE {
        return Err(Error::Config(format!(
            "proportions {t:?} sum to {sum}, expected {TRADERS_PER_SIDE}"
        )));
    }
    Ok(())
}

/// Next lexicographic permutation in place; false after the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len())
        .rev()
        .find(|&j| v[j] > v[i - 1])
        .expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Distinct orderings of one tuple, in lexicographic order.
pub fn distinct_permutations(t: &ProportionTuple) -> Vec<ProportionTuple> {
    let mut v = *t;
    v.sort_unstable();
    let mut out = vec![v];
    while next_permutation(&mut v) {
        out.push(v);
    }
    out
}

/// All distinct position assignments of every base tuple, first occurrence kept.
pub fn enumerate_schedules(bases: &[ProportionTuple]) -> Result<Vec<Schedule>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in bases {
        check_tuple(t)?;
        for p in distinct_permutations(t) {
            if seen.insert(p) {
                out.push(Schedule(p));
            }
        }
    }
    Ok(out)
}

/// `count` schedules spread evenly over `all`, in order.
pub fn select_evenly(all: &[Schedule], count: usize) -> Vec<Schedule> {
    if count >= all.len() {
        return all.to_vec();
    }
    (0..count).map(|i| all[i * all.len() / count]).collect()
}

/// Base tuples from text: one `a,b,c,d,e` (or `a/b/c/d/e`) per line.
pub fn parse_tuples(text: &str, origin: &str) -> Result<Vec<ProportionTuple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let s = Schedule::parse(line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        out.push(s.0);
    }
    if out.is_empty() {
        return Err(Error::parse(origin, 1, "no proportion tuples"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GenPlan {
    pub schedules: Vec<Schedule>,
    pub trials_per_schedule: usize,
    pub base_seed: u64,
    /// Duration, mode and schedule settings; population and seed are overwritten.
    pub template: SessionConfig,
}

impl GenPlan {
    pub fn sessions(&self) -> usize {
        self.schedules.len() * self.trials_per_schedule
    }

    /// Schedule, seed and file name of session `index`.
    pub fn session(&self, index: usize) -> (Schedule, u64, String) {
        let schedule = self.schedules[index / self.trials_per_schedule];
        (
            schedule,
            self.base_seed.wrapping_add(index as u64),
            format!("session_{index:05}.csv"),
        )
    }

    pub fn session_config(&self, index: usize) -> SessionConfig {
        let (schedule, seed, _) = self.session(index);
        let pop = schedule.population();
        SessionConfig {
            buyers: pop.clone(),
            sellers: pop,
            seed,
            ..self.template.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.schedules.is_empty() {
            return Err(Error::Config("plan has no schedules".into()));
        }
        if self.trials_per_schedule == 0 {
            return Err(Error::Config(
                "trials per schedule must be at least 1".into(),
            ));
        }
        let unique: HashSet<_> = self.schedules.iter().collect();
        if unique.len() != self.schedules.len() {
            return Err(Error::Config("plan schedules must be unique".into()));
        }
        for s in &self.schedules {
            check_tuple(&s.0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub file: String,
    pub rows: usize,
    pub seed: u64,
    pub schedule: Schedule,
    /// PPT per strategy in [`STRATEGY_ORDER`]; `None` when absent.
    pub ppt: [Option<f64>; 5],
}

impl ManifestRow {
    fn from_result(file: String, schedule: Schedule, r: &SessionResult) -> Self {
        ManifestRow {
            file,
            rows: r.snapshots.len(),
            seed: r.seed,
            schedule,
            ppt: STRATEGY_ORDER.map(|k| r.ppt(k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            let ppt: Vec<String> = r
                .ppt
                .iter()
                .map(|p| p.map_or(String::new(), |v| v.to_string()))
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.file,
                r.rows,
                r.seed,
                r.schedule.label(),
                ppt.join(",")
            );
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
            _ => {
                return Err(Error::parse(
                    origin,
                    1,
                    format!("expected header `{MANIFEST_HEADER}`"),
                ))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::parse(origin, i + 1, msg);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(err(format!("expected 9 fields, found {}", f.len())));
            }
            let mut ppt = [None; 5];
            for (slot, s) in ppt.iter_mut().zip(&f[4..]) {
                if !s.trim().is_empty() {
                    *slot = Some(
                        s.trim()
                            .parse()
                            .map_err(|_| err(format!("bad ppt `{s}`")))?,
                    );
                }
            }
            rows.push(ManifestRow {
                file: f[0].to_string(),
                rows: f[1]
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad row count `{}`", f[1])))?,
                seed: f[2]
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad seed `{}`", f[2])))?,
                schedule: Schedule::parse(f[3]).map_err(|e| err(e.to_string()))?,
                ppt,
            });
        }
        Ok(Manifest { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn total_rows(&self) -> usize {
        self.rows.iter().map(|r| r.rows).sum()
    }
}

/// Runs every session of `plan`, writing one snapshot file per session and
/// `manifest.csv` into `out_dir`. `progress` is called as sessions finish.
pub fn generate<F: Fn(usize, &ManifestRow) + Sync>(
    plan: &GenPlan,
    out_dir: &Path,
    progress: F,
) -> Result<Manifest> {
    plan.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, "").map_err(|e| Error::file(&manifest_path, e))?;

    let rows = (0..plan.sessions())
        .into_par_iter()
        .map(|index| {
            let (schedule, seed, file) = plan.session(index);
            let result =
                run_session(&plan.session_config(index), None).map_err(|e| Error::Session {
                    seed,
                    source: Box::new(e),
                })?;
            result.write_snapshots(&out_dir.join(&file))?;
            let row = ManifestRow::from_result(file, schedule, &result);
            progress(index, &row);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest { rows };
    fs::write(&manifest_path, manifest.to_csv()).map_err(|e| Error::file(&manifest_path, e))?;
    Ok(manifest)
}

fn corpus_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// Records of every session listed in a manifest, one vector per file.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<Vec<FeatureRecord>>> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = corpus_dir(manifest_path);
    manifest
        .rows
        .iter()
        .map(|r| read_snapshots(&dir.join(&r.file)))
        .collect()
}

/// Per-field min and max over every listed file; written to `norm.csv` next
/// to the manifest.
pub fn fit_norm_stats(manifest_path: &Path) -> Result<NormStats> {
    let sessions = load_corpus(manifest_path)?;
    let stats = norm_stats_of(&sessions)?;
    stats.save(&corpus_dir(manifest_path).join(NORM_FILE))?;
    Ok(stats)
}

pub fn norm_stats_of(sessions: &[Vec<FeatureRecord>]) -> Result<NormStats> {
    let mut stats = NormStats::default();
    for r in sessions.iter().flatten() {
        stats.observe(&r.to_array());
    }
    if stats.is_empty() {
        return Err(Error::Config("corpus has no rows".into()));
    }
    Ok(stats)
}
