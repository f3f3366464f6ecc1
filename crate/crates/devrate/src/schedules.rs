//! Bandwidth schedules and deviation speed sequences.
//!
//! A schedule is `h_n = c n^{-a} L(n)` with `c > 0`, `a ∈ (0, 1/d)` and `L`
//! either constant or a log power `(ln n)^b`; this is the regularly varying
//! family the asymptotics are stated for. The module also provides the
//! regular-variation Cesàro sums `(1/n) Σ (h_i/h_n)^e → 1/(1 - a e)` that
//! control the recursive estimator's limits, and the admissibility check for
//! moderate-deviation speeds `v_n = n^γ`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Slowly varying factor of a bandwidth schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlowlyVarying {
    /// Constant factor 1.
    None,
    /// `(ln n)^b`, with the logarithm clamped at 1 for `n < e` so small
    /// sample sizes stay well defined.
    LogPower(f64),
}

impl SlowlyVarying {
    fn eval(self, n: f64) -> f64 {
        match self {
            SlowlyVarying::None => 1.0,
            SlowlyVarying::LogPower(b) => n.ln().max(1.0).powf(b),
        }
    }

    /// Exponent of the log factor, for symbolic growth comparison.
    fn log_power(self) -> f64 {
        match self {
            SlowlyVarying::None => 0.0,
            SlowlyVarying::LogPower(b) => b,
        }
    }
}

impl Serialize for SlowlyVarying {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            SlowlyVarying::None => s.serialize_str("none"),
            SlowlyVarying::LogPower(b) => {
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("log_power", b)?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for SlowlyVarying {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Helper {
            Tag(String),
            LogPower { log_power: f64 },
        }
        match Helper::deserialize(d)? {
            Helper::Tag(tag) if tag == "none" => Ok(SlowlyVarying::None),
            Helper::Tag(tag) => Err(serde::de::Error::custom(format!(
                "unknown slowly varying factor {tag:?}, expected \"none\" or {{\"log_power\": b}}"
            ))),
            Helper::LogPower { log_power } => Ok(SlowlyVarying::LogPower(log_power)),
        }
    }
}

/// Serializable schedule description: `{"c": .., "a": .., "sv": ..}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub c: f64,
    pub a: f64,
    pub sv: SlowlyVarying,
}

/// Regularly varying bandwidth sequence `h_n = c n^{-a} L(n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandwidthSchedule {
    c: f64,
    a: f64,
    sv: SlowlyVarying,
}

impl BandwidthSchedule {
    /// Validates `c > 0` and `a ∈ (0, 1/d)` for the given ambient dimension.
    pub fn new(c: f64, a: f64, sv: SlowlyVarying, d: usize) -> Result<BandwidthSchedule> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::config(format!(
                "bandwidth scale c must be positive and finite, got {c}"
            )));
        }
        let upper = 1.0 / d as f64;
        if !(a.is_finite() && a > 0.0 && a < upper) {
            return Err(Error::config(format!(
                "bandwidth exponent a must lie in (0, {upper}), got {a}"
            )));
        }
        if let SlowlyVarying::LogPower(b) = sv {
            if !b.is_finite() {
                return Err(Error::config("log power must be finite"));
            }
        }
        Ok(BandwidthSchedule { c, a, sv })
    }

    pub fn from_spec(spec: &ScheduleSpec, d: usize) -> Result<BandwidthSchedule> {
        BandwidthSchedule::new(spec.c, spec.a, spec.sv, d)
    }

    pub fn spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            c: self.c,
            a: self.a,
            sv: self.sv,
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn sv(&self) -> SlowlyVarying {
        self.sv
    }

    /// Bandwidth at (real-valued) sample size `n >= 1`.
    pub fn hn(&self, n: f64) -> f64 {
        debug_assert!(n >= 1.0);
        self.c * n.powf(-self.a) * self.sv.eval(n)
    }

    /// Cesàro sum `(1/n) Σ_{i=1}^n (h_i/h_n)^e`, computed by direct
    /// summation. Converges to `1/(1 - a e)` when `a e < 1`; an error is
    /// returned when `a e >= 1` since the limit is infinite.
    pub fn regvar_sum(&self, exponent: f64, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::input("regular-variation sum needs n >= 1"));
        }
        if self.a * exponent >= 1.0 {
            return Err(Error::config(format!(
                "regular-variation sum diverges: a * e = {} >= 1",
                self.a * exponent
            )));
        }
        let hn = self.hn(n as f64);
        let mut acc = 0.0;
        for i in 1..=n {
            acc += (self.hn(i as f64) / hn).powf(exponent);
        }
        Ok(acc / n as f64)
    }

    /// Limit of [`Self::regvar_sum`] as `n → ∞`.
    pub fn regvar_limit(&self, exponent: f64) -> Result<f64> {
        if self.a * exponent >= 1.0 {
            return Err(Error::config(format!(
                "regular-variation limit diverges: a * e = {} >= 1",
                self.a * exponent
            )));
        }
        Ok(1.0 / (1.0 - self.a * exponent))
    }
}

/// Power-law deviation speed `v_n = n^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedSequence {
    pub gamma: f64,
}

impl SpeedSequence {
    pub fn new(gamma: f64) -> Result<SpeedSequence> {
        if !gamma.is_finite() {
            return Err(Error::config("speed exponent must be finite"));
        }
        Ok(SpeedSequence { gamma })
    }

    pub fn vn(&self, n: f64) -> f64 {
        n.powf(self.gamma)
    }
}

/// Growth rate `n^power (ln n)^log_power`, compared lexicographically.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Growth {
    power: f64,
    log_power: f64,
}

impl Growth {
    fn strictly_slower_than(self, other: Growth) -> bool {
        self.power < other.power
            || (self.power == other.power && self.log_power < other.log_power)
    }
}

/// Checks that a speed is admissible for the moderate deviations regime:
/// `v_n → ∞` and `v_n^2 / (n h_n^d) → 0`. Both comparisons are symbolic on
/// the `(power, log power)` exponents, so slowly varying factors are decided
/// exactly rather than by sampling.
pub fn check_speed(
    speed: &SpeedSequence,
    schedule: &BandwidthSchedule,
    d: usize,
) -> Result<()> {
    let gamma = speed.gamma;
    let one = Growth {
        power: 0.0,
        log_power: 0.0,
    };
    let vn = Growth {
        power: gamma,
        log_power: 0.0,
    };
    if !one.strictly_slower_than(vn) {
        return Err(Error::config(format!(
            "speed v_n = n^{gamma} does not tend to infinity"
        )));
    }
    let d = d as f64;
    let nhd = Growth {
        power: 1.0 - schedule.a * d,
        log_power: schedule.sv.log_power() * d,
    };
    let vn_sq = Growth {
        power: 2.0 * gamma,
        log_power: 0.0,
    };
    if !vn_sq.strictly_slower_than(nhd) {
        return Err(Error::config(format!(
            "speed v_n = n^{gamma} is too fast: v_n^2 must be o(n h_n^d), but \
             n h_n^d grows like n^{} (ln n)^{}",
            nhd.power, nhd.log_power
        )));
    }
    Ok(())
}
