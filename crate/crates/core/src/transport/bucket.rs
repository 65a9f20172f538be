/// Slack for floating point refill arithmetic when checking whether a full
/// datagram fits.
const TOKEN_EPSILON: f64 = 1e-6;

/// Byte token bucket driven by an explicit clock.
///
/// The bucket starts empty at its creation time and refills at `rate` bytes
/// per second up to `depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenBucket {
    rate: f64,
    depth: f64,
    tokens: f64,
    last_refill: f64,
}

impl TokenBucket {
    pub fn new(rate: f64, depth: f64, now: f64) -> Self {
        Self {
            rate,
            depth,
            tokens: 0.0,
            last_refill: now,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }

    pub fn refill(&mut self, now: f64) {
        if now > self.last_refill {
            self.tokens = (self.tokens + self.rate * (now - self.last_refill)).min(self.depth);
            self.last_refill = now;
        }
    }

    /// Debits `bytes` if the bucket holds at least that many tokens.
    pub fn try_consume(&mut self, bytes: usize) -> bool {
        let need = bytes as f64;
        if self.tokens + TOKEN_EPSILON >= need {
            self.tokens = (self.tokens - need).max(0.0);
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_empty_and_caps_at_depth() {
        let mut b = TokenBucket::new(1000.0, 5000.0, 0.0);
        assert!(!b.try_consume(1));
        b.refill(1.0);
        assert!(b.try_consume(1000));
        assert!(!b.try_consume(1));
        b.refill(100.0);
        assert_eq!(b.tokens(), 5000.0);
    }

    #[test]
    fn tick_refills_accumulate() {
        let mut b = TokenBucket::new(1000.0, 5000.0, 0.0);
        for i in 1..=10 {
            b.refill(i as f64 * 0.1);
        }
        assert!(b.try_consume(1000));
    }

    #[test]
    fn clock_going_backwards_is_ignored() {
        let mut b = TokenBucket::new(10.0, 100.0, 5.0);
        b.refill(4.0);
        assert_eq!(b.tokens(), 0.0);
        b.refill(6.0);
        assert_eq!(b.tokens(), 10.0);
    }
}
