//! Thread-count control for the data-parallel parts of the crate.

use log::warn;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "WHITEBENCH_THREADS";

/// Parsed value of [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            warn!("ignoring {THREADS_ENV}={raw:?}: expected a positive integer");
            None
        }
    }
}

/// Runs `f` inside a rayon pool honoring [`THREADS_ENV`].
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match thread_cap() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                warn!("could not build a {n}-thread pool ({e}); using the global pool");
                f()
            }
        },
        None => f(),
    }
}
