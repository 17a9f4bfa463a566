//! Request-rate and concurrency bounds shared by all workers.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Admits at most `max_requests` starts within any sliding `window`.
#[derive(Debug)]
pub struct RateLimiter {
    max_requests: usize,
    window: Duration,
    starts: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(max_requests: usize, window: Duration) -> Self {
        assert!(max_requests > 0, "rate limit must be positive");
        Self {
            max_requests,
            window,
            starts: Mutex::new(VecDeque::with_capacity(max_requests)),
        }
    }

    pub fn per_minute(rpm: u32) -> Self {
        Self::new(rpm as usize, Duration::from_secs(60))
    }

    /// Blocks until a request may start.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut starts = self.starts.lock().unwrap();
                let now = Instant::now();
                while starts.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                    starts.pop_front();
                }
                if starts.len() < self.max_requests {
                    starts.push_back(now);
                    return;
                }
                self.window - now.duration_since(*starts.front().unwrap())
            };
            thread::sleep(wait);
        }
    }
}

/// Counting semaphore bounding in-flight provider calls.
#[derive(Debug)]
pub struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    pub fn new(limit: usize) -> Self {
        assert!(limit > 0, "in-flight bound must be positive");
        Self {
            limit,
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut used = self.used.lock().unwrap();
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap();
        }
        *used += 1;
        InFlightPermit { owner: self }
    }
}

pub struct InFlightPermit<'a> {
    owner: &'a InFlight,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut used = self.owner.used.lock().unwrap();
        *used -= 1;
        self.owner.freed.notify_one();
    }
}
