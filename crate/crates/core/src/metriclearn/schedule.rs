use crate::error::Result;

/// One-cycle cosine schedule: cosine warm-up from `lr_start` to `lr_peak`
/// over `warm_epochs`, then cosine decay to `lr_min` at `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OneCycleSchedule {
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_min: f64,
    pub warm_epochs: u32,
    pub total_epochs: u32,
}

impl Default for OneCycleSchedule {
    fn default() -> Self {
        Self {
            lr_start: 1e-4,
            lr_peak: 1e-2,
            lr_min: 1e-7,
            warm_epochs: 30,
            total_epochs: 100,
        }
    }
}

impl OneCycleSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_start && self.lr_start <= self.lr_peak) {
            bail!(InvalidArgument, "need 0 < lr_min <= lr_start <= lr_peak");
        }
        if self.warm_epochs == 0 || self.warm_epochs >= self.total_epochs {
            bail!(InvalidArgument, "need 0 < warm_epochs < total_epochs");
        }
        Ok(())
    }

    /// Learning rate at `epoch` (0 ..= total_epochs).
    pub fn lr(&self, epoch: u32) -> Result<f64> {
        self.validate()?;
        if epoch > self.total_epochs {
            bail!(
                InvalidArgument,
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs
            );
        }
        // Written as a convex combination so both endpoints are exact.
        let (from, to, frac) = if epoch <= self.warm_epochs {
            (self.lr_start, self.lr_peak, epoch as f64 / self.warm_epochs as f64)
        } else {
            (
                self.lr_peak,
                self.lr_min,
                (epoch - self.warm_epochs) as f64 / (self.total_epochs - self.warm_epochs) as f64,
            )
        };
        let keep = 0.5 * (1.0 + crate::math::cos(core::f64::consts::PI * frac));
        Ok(from * keep + to * (1.0 - keep))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_values_exact() {
        let s = OneCycleSchedule::default();
        assert_eq!(s.lr(0).unwrap(), 1e-4);
        assert_eq!(s.lr(30).unwrap(), 1e-2);
        assert_eq!(s.lr(100).unwrap(), 1e-7);
    }

    #[test]
    fn warmup_midpoint() {
        let s = OneCycleSchedule::default();
        assert!((s.lr(15).unwrap() - 5.05e-3).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_epoch() {
        assert!(OneCycleSchedule::default().lr(101).is_err());
    }

    #[test]
    fn rises_then_falls() {
        let s = OneCycleSchedule::default();
        let lrs: alloc::vec::Vec<f64> = (0..=100).map(|e| s.lr(e).unwrap()).collect();
        assert!(lrs[..=30].windows(2).all(|w| w[1] > w[0]));
        assert!(lrs[30..].windows(2).all(|w| w[1] < w[0]));
        // no jumps larger than the steepest cosine slope allows
        let max_step = lrs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(max_step < 1e-2 * core::f64::consts::PI / 2.0 / 30.0 * 1.01);
    }
}
