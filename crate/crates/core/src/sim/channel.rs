use rand::Rng;

use super::scenario::ChannelConfig;
use crate::propagation::shannon_capacity;

/// Capacity-limited, SNR-dependent lossy link model.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    pub config: ChannelConfig,
}

impl ChannelModel {
    pub fn new(config: ChannelConfig) -> Self {
        Self { config }
    }

    /// Drop probability: 1 at or below `loss_snr_lo`, 0 at or above
    /// `loss_snr_hi`, linear in between.
    pub fn loss_probability(&self, snr: f64) -> f64 {
        let (lo, hi) = (self.config.loss_snr_lo, self.config.loss_snr_hi);
        if snr <= lo {
            1.0
        } else if snr >= hi {
            0.0
        } else {
            (hi - snr) / (hi - lo)
        }
    }

    /// Bytes a link may carry in one tick.
    pub fn tick_budget(&self, bandwidth: f64, snr: f64, tick: f64) -> f64 {
        let cap = shannon_capacity(bandwidth, snr.max(0.0)).unwrap_or(0.0);
        self.config.efficiency * cap / 8.0 * tick
    }

    /// Decides one hop with a pre-drawn uniform `u` in `[0, 1)`. A datagram
    /// that fits the remaining budget debits it and survives iff
    /// `u >= loss_probability(snr)`. One that does not fit is dropped and
    /// closes the link for the rest of the tick, so a larger budget always
    /// admits a superset of datagrams.
    pub fn deliver_with(&self, bytes: usize, snr: f64, budget: &mut f64, u: f64) -> bool {
        let need = bytes as f64;
        if need > *budget {
            *budget = 0.0;
            return false;
        }
        *budget -= need;
        u >= self.loss_probability(snr)
    }

    /// Like [`deliver_with`](Self::deliver_with), drawing exactly one
    /// uniform from `rng` whatever the outcome.
    pub fn deliver<R: Rng>(&self, bytes: usize, snr: f64, budget: &mut f64, rng: &mut R) -> bool {
        let u: f64 = rng.gen();
        self.deliver_with(bytes, snr, budget, u)
    }
}
