//! Smoothed ternary activation `tanh((x/α)^k)`, its hard-threshold limit, and
//! the continuation schedule that sharpens `k` during training.
//!
//! For odd `k` the smoothed function is odd in `x` and converges pointwise to
//! the hard ternary function as `k` grows: `|x| > α` is pushed to `±1` and
//! `|x| < α` to `0`.

use crate::error::{Error, Result};

/// Default scale/threshold; features are squashed to (-1, 1) before use.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// A single ternary digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(i8)]
pub enum Trit {
    Neg = -1,
    Zero = 0,
    Pos = 1,
}

impl Trit {
    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn from_i8(v: i8) -> Option<Trit> {
        match v {
            -1 => Some(Trit::Neg),
            0 => Some(Trit::Zero),
            1 => Some(Trit::Pos),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationConfig {
    alpha: f64,
    k: u32,
}

impl ActivationConfig {
    pub fn new(alpha: f64, k: u32) -> Result<Self> {
        validate_alpha(alpha)?;
        validate_k(k)?;
        Ok(Self { alpha, k })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Same alpha, different sharpness.
    pub fn with_k(&self, k: u32) -> Result<Self> {
        Self::new(self.alpha, k)
    }
}

impl Default for ActivationConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            k: 3,
        }
    }
}

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("alpha must be finite and > 0, got {alpha}")))
    }
}

pub(crate) fn validate_k(k: u32) -> Result<()> {
    if k >= 3 && k % 2 == 1 {
        Ok(())
    } else {
        Err(Error::config(format!("k must be odd and >= 3, got {k}")))
    }
}

fn check_finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(x))
    }
}

/// `sign(u) * |u|^k` through exp/ln. Overflow yields ±inf, which tanh
/// saturates to the correct limit.
#[inline]
fn odd_power(u: f64, k: u32) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let mag = (f64::from(k) * u.abs().ln()).exp();
    mag.copysign(u)
}

/// sech²(v) without the cancellation of `1 - tanh²(v)`.
#[inline]
fn sech_sq(v: f64) -> f64 {
    let e = (-2.0 * v.abs()).exp();
    let d = 1.0 + e;
    4.0 * e / (d * d)
}

#[inline]
pub(crate) fn smooth_value(x: f64, alpha: f64, k: u32) -> f64 {
    odd_power(x / alpha, k).tanh()
}

#[inline]
pub(crate) fn smooth_grad(x: f64, alpha: f64, k: u32) -> f64 {
    let u = x / alpha;
    if u == 0.0 {
        return 0.0;
    }
    let s = sech_sq(odd_power(u, k));
    if s == 0.0 {
        return 0.0;
    }
    // (k - 1) is even, so this factor is non-negative.
    let pow = ((f64::from(k) - 1.0) * u.abs().ln()).exp();
    s * f64::from(k) * pow / alpha
}

#[inline]
pub(crate) fn hard_value(x: f64, alpha: f64) -> Trit {
    if x >= alpha {
        Trit::Pos
    } else if x <= -alpha {
        Trit::Neg
    } else {
        Trit::Zero
    }
}

#[inline]
pub(crate) fn gap_value(x: f64, alpha: f64, k: u32) -> f64 {
    let v = odd_power(x / alpha, k);
    match hard_value(x, alpha) {
        Trit::Zero => v.tanh().abs(),
        // 1 - tanh(|v|) = 2e^{-2|v|} / (1 + e^{-2|v|})
        _ => {
            let e = (-2.0 * v.abs()).exp();
            2.0 * e / (1.0 + e)
        }
    }
}

/// `tanh((x/α)^k)`.
pub fn smooth_ternary(x: f64, cfg: &ActivationConfig) -> Result<f64> {
    Ok(smooth_value(check_finite(x)?, cfg.alpha, cfg.k))
}

/// Exact derivative of [`smooth_ternary`] with respect to `x`:
/// `sech²(u^k) · k · u^(k-1) / α` with `u = x/α`.
pub fn smooth_ternary_grad(x: f64, cfg: &ActivationConfig) -> Result<f64> {
    Ok(smooth_grad(check_finite(x)?, cfg.alpha, cfg.k))
}

/// Hard ternary threshold. Both boundaries are inclusive: `x = α` maps to
/// `+1` and `x = -α` to `-1`.
pub fn hard_ternary(x: f64, alpha: f64) -> Result<Trit> {
    validate_alpha(alpha)?;
    Ok(hard_value(check_finite(x)?, alpha))
}

/// `|smooth_ternary(x) - hard_ternary(x)|`, evaluated without cancellation in
/// the saturated regions so the gap stays resolvable down to ~1e-308.
pub fn quantization_error(x: f64, cfg: &ActivationConfig) -> Result<f64> {
    Ok(gap_value(check_finite(x)?, cfg.alpha, cfg.k))
}

/// Piecewise-constant schedule for `k`: `k_start` for the first
/// `stride_epochs` epochs, then `+2` every `stride_epochs`, clamped at
/// `k_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContinuationSchedule {
    k_start: u32,
    k_end: u32,
    stride_epochs: usize,
    total_epochs: usize,
}

impl ContinuationSchedule {
    pub fn new(k_start: u32, k_end: u32, stride_epochs: usize, total_epochs: usize) -> Result<Self> {
        validate_k(k_start)?;
        validate_k(k_end)?;
        if k_start > k_end {
            return Err(Error::config(format!(
                "k_start ({k_start}) must not exceed k_end ({k_end})"
            )));
        }
        if stride_epochs == 0 || total_epochs == 0 {
            return Err(Error::config("stride_epochs and total_epochs must be positive"));
        }
        Ok(Self {
            k_start,
            k_end,
            stride_epochs,
            total_epochs,
        })
    }

    pub fn k_start(&self) -> u32 {
        self.k_start
    }

    pub fn k_end(&self) -> u32 {
        self.k_end
    }

    pub fn stride_epochs(&self) -> usize {
        self.stride_epochs
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// Same k range and stride over a different number of epochs.
    pub fn with_total_epochs(&self, total_epochs: usize) -> Result<Self> {
        Self::new(self.k_start, self.k_end, self.stride_epochs, total_epochs)
    }

    pub fn k_at(&self, epoch: usize) -> Result<u32> {
        if epoch >= self.total_epochs {
            return Err(Error::OutOfRange {
                what: "epoch",
                value: epoch,
                limit: self.total_epochs,
            });
        }
        let steps = epoch / self.stride_epochs;
        let max_steps = ((self.k_end - self.k_start) / 2) as usize;
        Ok(self.k_start + 2 * steps.min(max_steps) as u32)
    }

    /// True on the last epoch that uses a given `k`.
    pub fn is_stage_end(&self, epoch: usize) -> bool {
        match (self.k_at(epoch), self.k_at(epoch + 1)) {
            (Ok(_), Err(_)) => true,
            (Ok(a), Ok(b)) => a != b,
            _ => false,
        }
    }
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self {
            k_start: 3,
            k_end: 11,
            stride_epochs: 30,
            total_epochs: 150,
        }
    }
}

/// `min(k_end, k_start + 2·floor(epoch / stride))`.
pub fn schedule_k(epoch: usize, sched: &ContinuationSchedule) -> Result<u32> {
    sched.k_at(epoch)
}
