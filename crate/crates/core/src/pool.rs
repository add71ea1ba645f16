//! Worker pool sizing.

use crate::error::{Error, Result};

pub const WORKERS_ENV: &str = "DTX_WORKERS";

/// Caps the global worker pool at `$DTX_WORKERS` when set and returns the
/// pool size in effect.
pub fn init_from_env() -> Result<usize> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(rayon::current_num_threads());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{WORKERS_ENV} must be a positive integer, got `{raw}`"
        ))
    })?;
    // a second call keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(rayon::current_num_threads())
}
