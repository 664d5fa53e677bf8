//! Bounded worker pool with index-ordered results.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

/// Worker count honoring a predictor's concurrency limit (0 = unlimited).
pub fn effective_workers(jobs: usize, max_concurrency: usize) -> usize {
    let jobs = jobs.max(1);
    if max_concurrency == 0 {
        jobs
    } else {
        jobs.min(max_concurrency)
    }
}

/// Logical CPUs, falling back to 1.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Failure of a [`try_parallel_map`] run.
#[derive(Debug)]
pub struct Aborted<E> {
    pub error: E,
    /// Tasks that finished successfully before the pool stopped.
    pub completed: usize,
}

/// Evaluates `f(0..n)` on up to `workers` threads and returns the results in
/// index order. The first failure stops new tasks from starting; among the
/// failures observed, the lowest index wins.
pub fn try_parallel_map<T, E, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>, Aborted<E>>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    let workers = workers.max(1).min(n.max(1));
    if workers == 1 {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            match f(i) {
                Ok(v) => out.push(v),
                Err(error) => {
                    return Err(Aborted {
                        error,
                        completed: out.len(),
                    })
                }
            }
        }
        return Ok(out);
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let failures: Mutex<Vec<(usize, E)>> = Mutex::new(Vec::new());
    let completed = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                match f(i) {
                    Ok(v) => {
                        *slots[i].lock().unwrap() = Some(v);
                        completed.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        failures.lock().unwrap().push((i, e));
                    }
                }
            });
        }
    });

    let mut failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        failures.sort_by_key(|(i, _)| *i);
        let (_, error) = failures.swap_remove(0);
        return Err(Aborted {
            error,
            completed: completed.into_inner(),
        });
    }
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every task ran"))
        .collect())
}
