use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, CompletionRequest, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    pub multiplier: f64,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base * multiplier^retry.
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.mul_f64(self.multiplier.powi(retry as i32))
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Records requested sleeps instead of sleeping.
#[derive(Default, Clone)]
pub struct FakeClock {
    delays: Arc<Mutex<Vec<Duration>>>,
}

impl FakeClock {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().unwrap().clone()
    }
}

impl Sleeper for FakeClock {
    fn sleep(&self, duration: Duration) {
        self.delays.lock().unwrap().push(duration);
    }
}

/// Retries transient failures with exponential backoff.
pub struct RetryingBackend<B> {
    inner: B,
    policy: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
}

impl<B: CompletionBackend> RetryingBackend<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Result<Self, LlmError> {
        Self::with_sleeper(inner, policy, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(
        inner: B,
        policy: RetryPolicy,
        sleeper: Arc<dyn Sleeper>,
    ) -> Result<Self, LlmError> {
        if policy.max_attempts == 0 {
            return Err(LlmError::InvalidRequest(
                "max_attempts must be at least 1".into(),
            ));
        }
        Ok(Self {
            inner,
            policy,
            sleeper,
        })
    }
}

impl<B: CompletionBackend> CompletionBackend for RetryingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.inner.complete(request) {
                Ok(texts) => return Ok(texts),
                Err(err) if !err.is_transient() => return Err(err),
                Err(err) if attempt >= self.policy.max_attempts => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt,
                        last: Box::new(err),
                    })
                }
                Err(_) => self.sleeper.sleep(self.policy.delay(attempt - 1)),
            }
        }
    }
}
