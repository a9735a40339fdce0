//! Bounded fan-out with results delivered in input order.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

/// Applies `work` to every item on up to `concurrency` threads and hands the
/// results to `sink` strictly in index order, on the calling thread.
///
/// If `sink` fails, no new items are started and the error is returned once
/// in-flight items finish.
pub fn ordered_map<T, R, E, W, S>(items: &[T], concurrency: usize, work: W, mut sink: S) -> Result<(), E>
where
    T: Sync,
    R: Send,
    W: Fn(usize, &T) -> R + Sync,
    S: FnMut(usize, R) -> Result<(), E>,
{
    let workers = concurrency.clamp(1, items.len().max(1));
    if workers == 1 {
        for (i, item) in items.iter().enumerate() {
            sink(i, work(i, item))?;
        }
        return Ok(());
    }

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, R)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, work) = (&next, &stop, &work);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                if tx.send((i, work(i, item))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut emit = 0;
        let mut failure = None;
        for (i, r) in rx {
            if failure.is_some() {
                continue;
            }
            pending.insert(i, r);
            while let Some(r) = pending.remove(&emit) {
                if let Err(e) = sink(emit, r) {
                    stop.store(true, Ordering::SeqCst);
                    failure = Some(e);
                    break;
                }
                emit += 1;
            }
        }
        failure.map_or(Ok(()), Err)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_under_concurrency() {
        let items: Vec<u64> = (0..50).collect();
        let mut seen = Vec::new();
        ordered_map(
            &items,
            4,
            |_, x| {
                std::thread::sleep(std::time::Duration::from_micros((50 - x) * 20));
                x * 2
            },
            |i, r| {
                seen.push((i, r));
                Ok::<_, ()>(())
            },
        )
        .unwrap();
        assert_eq!(seen, (0..50).map(|i| (i as usize, i * 2)).collect::<Vec<_>>());
    }

    #[test]
    fn sink_error_stops() {
        let items: Vec<u32> = (0..20).collect();
        let mut count = 0;
        let err = ordered_map(&items, 3, |_, x| *x, |i, _| {
            count += 1;
            if i == 5 {
                Err("full")
            } else {
                Ok(())
            }
        });
        assert_eq!(err, Err("full"));
        assert_eq!(count, 6);
    }

    #[test]
    fn empty_input() {
        let items: Vec<u32> = Vec::new();
        ordered_map(&items, 4, |_, x| *x, |_, _| Err::<(), _>("never")).unwrap();
    }
}
