use serde::{Deserialize, Serialize};

/// Sampling temperature that rises while the search stagnates.
///
/// `current() = min(cap, base + step * floor(stagnation / interval))`, where
/// `stagnation` counts generations since the best length last strictly
/// decreased.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureState {
    pub base: f64,
    pub stagnation: u64,
    pub step: f64,
    pub interval: u64,
    pub cap: f64,
}

impl Default for TemperatureState {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl TemperatureState {
    /// +0.05 every 20 stagnant generations, capped at 2.0.
    pub fn new(base: f64) -> Self {
        Self { base, stagnation: 0, step: 0.05, interval: 20, cap: 2.0 }
    }

    pub fn current(&self) -> f64 {
        let steps = (self.stagnation / self.interval.max(1)) as f64;
        (self.base + self.step * steps).min(self.cap)
    }

    pub fn advance(self, improved: bool) -> Self {
        advance_temperature(self, improved)
    }
}

pub fn advance_temperature(state: TemperatureState, improved: bool) -> TemperatureState {
    TemperatureState { stagnation: if improved { 0 } else { state.stagnation.saturating_add(1) }, ..state }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn after(stagnant: u64) -> TemperatureState {
        (0..stagnant).fold(TemperatureState::new(1.0), |s, _| s.advance(false))
    }

    #[test]
    fn holds_until_the_interval_completes() {
        for s in 0..20 {
            assert_eq!(after(s).current(), 1.0);
        }
    }

    #[test]
    fn steps_at_twenty() {
        assert_eq!(after(20).current(), 1.05);
    }

    #[test]
    fn caps_at_two() {
        assert_eq!(after(500).current(), 2.0);
    }

    #[test]
    fn improvement_resets() {
        let s = after(45).advance(true);
        assert_eq!(s.stagnation, 0);
        assert_eq!(s.current(), 1.0);
    }
}
