//! Wall-clock pacing of simulation ticks.

use std::thread;
use std::time::{Duration, Instant};

use ccsim_core::sim::Simulation;

use crate::Result;

/// Absolute-deadline scheduler: deadlines advance by exactly one period, so
/// a late tick does not shift the ones after it.
#[derive(Debug, Clone)]
pub struct Pacer {
    period: Duration,
    next: Instant,
}

impl Pacer {
    pub fn new(period: Duration) -> Self {
        Self {
            period,
            next: Instant::now() + period,
        }
    }

    pub fn period(&self) -> Duration {
        self.period
    }

    pub fn deadline(&self) -> Instant {
        self.next
    }

    /// Restarts the schedule one period from now.
    pub fn reset(&mut self) {
        self.next = Instant::now() + self.period;
    }

    pub fn is_due(&self) -> bool {
        Instant::now() >= self.next
    }

    /// Marks the current deadline consumed. Falling more than a period
    /// behind resynchronizes instead of bursting to catch up.
    pub fn advance(&mut self) {
        self.next += self.period;
        let now = Instant::now();
        if now > self.next + self.period {
            self.next = now + self.period;
        }
    }

    /// Sleeps until the next deadline and returns the wake-up instant.
    pub fn wait(&mut self) -> Instant {
        let now = Instant::now();
        if self.next > now {
            thread::sleep(self.next - now);
        }
        let woke = Instant::now();
        self.advance();
        woke
    }
}

/// Largest deviation of consecutive intervals in `times` from `period`.
pub fn max_jitter(times: &[Instant], period: Duration) -> Duration {
    times
        .windows(2)
        .map(|w| (w[1] - w[0]).abs_diff(period))
        .max()
        .unwrap_or_default()
}

/// Runs `ticks` ticks at the chamber's tick period, calling `on_tick` after
/// each. Returns the wall time at which each tick started.
pub fn run_paced(
    sim: &mut Simulation,
    ticks: usize,
    mut on_tick: impl FnMut(&mut Simulation) -> Result<()>,
) -> Result<Vec<Instant>> {
    let mut pacer = Pacer::new(Duration::from_secs_f64(sim.config().chamber.tick));
    let mut times = Vec::with_capacity(ticks);
    for _ in 0..ticks {
        times.push(pacer.wait());
        sim.tick()?;
        on_tick(sim)?;
    }
    Ok(times)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_of_even_schedule_is_zero() {
        let t0 = Instant::now();
        let p = Duration::from_millis(200);
        let times: Vec<Instant> = (0..5).map(|i| t0 + p * i).collect();
        assert_eq!(max_jitter(&times, p), Duration::ZERO);
        let mut skewed = times.clone();
        skewed[2] += Duration::from_millis(15);
        assert_eq!(max_jitter(&skewed, p), Duration::from_millis(15));
    }

    #[test]
    fn pacer_keeps_period() {
        let p = Duration::from_millis(20);
        let mut pacer = Pacer::new(p);
        let times: Vec<Instant> = (0..10).map(|_| pacer.wait()).collect();
        assert!(max_jitter(&times, p) < Duration::from_millis(10));
        let total = times[9] - times[0];
        assert!(total >= p * 9 - Duration::from_millis(1));
    }
}
