//! Minimal scoped-thread fan-out for per-level grid work.

/// Maps `f` over `0..count`, chunked across `threads` OS threads. Results
/// come back in index order, so callers are deterministic regardless of the
/// thread count.
pub fn par_map<R: Send, F: Fn(usize) -> R + Sync>(threads: usize, count: usize, f: F) -> Vec<R> {
    if threads <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let mut results: Vec<Option<R>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(threads.min(count));
    std::thread::scope(|s| {
        for (t, slice) in results.chunks_mut(chunk).enumerate() {
            let f = &f;
            s.spawn(move || {
                for (off, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f(t * chunk + off));
                }
            });
        }
    });
    results.into_iter().map(|o| o.expect("all slots filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::par_map;

    #[test]
    fn ordered_and_complete() {
        for threads in [1, 2, 3, 8] {
            let out = par_map(threads, 17, |i| i * i);
            assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
        }
    }
}
