//! Random legal command sequences against a [`Session`].
//!
//! Every command is one a client could issue; rejected commands are simply
//! dropped, so the resulting log is whatever a real (possibly erratic)
//! participant could have produced.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stresslab_core::session::{Phase, Session, Trigger};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverStats {
    pub commands: usize,
    pub rejected: usize,
}

/// Play up to `max_commands` random commands on a fresh session.
pub fn random_session(seed: u64, max_commands: usize) -> (Session, DriverStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Session::create(&format!("R{seed}"), rng.random(), 0);
    let mut now = 0u64;
    let mut stats = DriverStats { commands: 0, rejected: 0 };
    let abandon_after = if rng.random_bool(0.2) {
        rng.random_range(1..max_commands.max(2))
    } else {
        max_commands
    };

    while s.phase() != Phase::Done && stats.commands < abandon_after {
        stats.commands += 1;
        now = now.max(s.last_event_ms());
        let step: u64 = if rng.random_bool(0.05) {
            rng.random_range(0..250_000)
        } else {
            rng.random_range(0..6_000)
        };
        let ok = match rng.random_range(0..6u8) {
            0 => {
                now += step;
                s.sync(now).is_ok()
            }
            1 => {
                now += step;
                s.advance(Trigger::UserAction, now).is_ok()
            }
            2 => {
                let deadline = s.phase_started_at() + s.phase_duration_ms().unwrap_or(0);
                now = now.max(deadline);
                s.advance(Trigger::TimerExpired, now).is_ok()
            }
            3 => s.next_question(now).is_ok(),
            4 => match s.live_question().cloned() {
                Some(live) => {
                    let t = rng.random_range(now..=live.deadline_ms.max(now));
                    let value = if rng.random_bool(0.8) {
                        let right = live.question.correct_answer;
                        Some(if rng.random_bool(0.6) { right } else { right + rng.random_range(-5..=5) })
                    } else {
                        None
                    };
                    now = t;
                    s.submit_answer(value, now).is_ok()
                }
                None => false,
            },
            _ => match s.live_question().cloned() {
                Some(live) if !live.hurry_up_shown => {
                    now = now.max(live.hurry_up_at_ms());
                    s.mark_hurry_up(now).is_ok()
                }
                _ => false,
            },
        };
        if !ok {
            stats.rejected += 1;
        }
    }
    (s, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn some_runs_finish() {
        let done = (0..40)
            .filter(|&seed| random_session(seed, 5_000).0.phase() == Phase::Done)
            .count();
        assert!(done > 10, "{done} of 40 finished");
    }
}
