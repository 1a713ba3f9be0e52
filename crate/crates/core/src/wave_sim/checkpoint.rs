//! Binomial checkpointing for reverse sweeps over a time-stepping loop.
//!
//! With `s` free snapshot slots and `r` allowed recomputations per step, a
//! sweep of up to `C(s + r, s)` steps can be reversed. The split point of each
//! recursive segment follows that recurrence.

use crate::error::{Error, Result};

/// Largest recomputation count a schedule may need.
pub const MAX_REPETITIONS: usize = 32;

pub trait Reversible {
    type State: Clone;

    /// Advance `state` from step `n` to step `n + 1`.
    fn advance(&mut self, state: &mut Self::State, n: usize);

    /// Adjoint of step `n`, given the forward state at step `n`. Called with
    /// strictly decreasing `n`.
    fn reverse(&mut self, state: &Self::State, n: usize);
}

/// `C(s + r, s)`, saturating.
pub fn binomial_capacity(slots: usize, reps: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=slots.min(reps) as u128 {
        c = c * (slots.max(reps) as u128 + i) / i;
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

/// Minimal number of recomputations to reverse `steps` steps with `slots` free snapshots.
pub fn repetitions(steps: usize, slots: usize) -> usize {
    if steps <= 1 {
        return 0;
    }
    if slots == 0 {
        return steps - 1;
    }
    let mut r = 0;
    while binomial_capacity(slots, r) < steps {
        r += 1;
    }
    r
}

/// Checks that `budget` stored states (including the initial one) suffice.
pub fn check_feasible(steps: usize, budget: usize) -> Result<usize> {
    if budget == 0 {
        return Err(Error::Schedule("snapshot budget must be at least 1".into()));
    }
    let r = repetitions(steps, budget - 1);
    if r > MAX_REPETITIONS {
        return Err(Error::Schedule(format!(
            "{steps} steps with {budget} snapshots need {r} recomputations per step (limit {MAX_REPETITIONS})"
        )));
    }
    Ok(r)
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SweepStats {
    pub advances: usize,
    pub max_live_snapshots: usize,
}

/// Reverses `steps` steps starting from `initial`, storing at most `budget`
/// states at once (the initial state counts as one).
pub fn reverse_sweep<R: Reversible>(r: &mut R, initial: R::State, steps: usize, budget: usize) -> Result<SweepStats> {
    check_feasible(steps, budget)?;
    let mut stats = SweepStats { advances: 0, max_live_snapshots: 1 };
    if steps > 0 {
        segment(r, &initial, 0, steps, budget - 1, 1, &mut stats);
    }
    Ok(stats)
}

fn segment<R: Reversible>(
    r: &mut R,
    start: &R::State,
    a: usize,
    b: usize,
    free: usize,
    live: usize,
    stats: &mut SweepStats,
) {
    stats.max_live_snapshots = stats.max_live_snapshots.max(live);
    if b - a == 1 {
        r.reverse(start, a);
        return;
    }
    if free == 0 {
        for k in (a..b).rev() {
            let mut st = start.clone();
            for j in a..k {
                r.advance(&mut st, j);
                stats.advances += 1;
            }
            r.reverse(&st, k);
        }
        return;
    }
    let reps = repetitions(b - a, free);
    let left = binomial_capacity(free, reps.saturating_sub(1)).clamp(1, b - a - 1);
    let m = a + left;
    let mut st = start.clone();
    for j in a..m {
        r.advance(&mut st, j);
        stats.advances += 1;
    }
    segment(r, &st, m, b, free - 1, live + 1, stats);
    drop(st);
    segment(r, start, a, m, free, live, stats);
}
