//! FDFD ground truth and a cross-shaped Fourier neural operator surrogate for
//! multi-mode interference photonic devices.

pub mod devices;
pub mod encoding;
pub mod model;
pub mod nold;
pub mod solver;
pub mod tensor;
pub mod workbench;

/// Environment variable capping worker parallelism.
pub const THREADS_ENV: &str = "NEUROLIGHT_THREADS";

/// Worker count: `NEUROLIGHT_THREADS` if set to a positive integer, else the
/// available hardware parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
