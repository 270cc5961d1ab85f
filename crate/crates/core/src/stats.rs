//! Small numeric helpers shared by the simulation modules: compensated
//! summation, running moments, and binomial confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        if !self.sum.is_finite() {
            return self.sum;
        }
        self.sum + self.compensation
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        s.extend(iter);
        s
    }
}

/// Compensated sum of an iterator of floats.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().total()
}

/// Serde adapter for floats that may be non-finite: those are written as
/// the strings "inf", "-inf" and "NaN" (JSON has no literal for them).
pub mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
        Null(()),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Null(()) => Ok(f64::NAN),
            Repr::Text(t) => t
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("not a number: {t}"))),
        }
    }
}

/// Sample mean and (n-1) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    #[serde(with = "nonfinite")]
    pub mean: f64,
    #[serde(with = "nonfinite")]
    pub std_dev: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Moments {
                count,
                mean: f64::NAN,
                std_dev: f64::NAN,
            };
        }
        let mean = compensated_sum(values.iter().copied()) / count as f64;
        let std_dev = if count > 1 {
            let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
            (ss / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Moments {
            count,
            mean,
            std_dev,
        }
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.std_dev / (self.count as f64).sqrt()
        }
    }
}

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(successes: usize, trials: usize, confidence: f64) -> (f64, f64) {
    assert!(successes <= trials, "successes exceed trials");
    if trials == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let k = successes as f64;
    let n = trials as f64;
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .expect("valid beta parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("valid beta parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower, upper)
}

/// Upper-tail standard normal quantile: z such that P(Z > z) = tail.
pub fn normal_upper_quantile(tail: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - tail)
}

/// Upper-tail standard normal probability P(Z > z).
pub fn normal_upper_tail(z: f64) -> f64 {
    1.0 - Normal::standard().cdf(z)
}

/// Which side of the threshold a frequency must fall on to pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

/// Empirical frequency of an event with a 95% Clopper-Pearson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrequency {
    pub successes: usize,
    pub trials: usize,
    #[serde(with = "nonfinite")]
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub threshold: f64,
    pub direction: Direction,
    pub pass: bool,
}

impl EventFrequency {
    pub fn new(successes: usize, trials: usize, threshold: f64, direction: Direction) -> Self {
        let frequency = if trials == 0 {
            f64::NAN
        } else {
            successes as f64 / trials as f64
        };
        let (ci_low, ci_high) = clopper_pearson(successes, trials, 0.95);
        let pass = trials > 0
            && match direction {
                Direction::AtLeast => frequency >= threshold,
                Direction::AtMost => frequency <= threshold,
            };
        Self {
            successes,
            trials,
            frequency,
            ci_low,
            ci_high,
            threshold,
            direction,
            pass,
        }
    }

    pub fn from_flags(flags: impl IntoIterator<Item = bool>, threshold: f64, direction: Direction) -> Self {
        let (mut hits, mut total) = (0, 0);
        for f in flags {
            total += 1;
            hits += usize::from(f);
        }
        Self::new(hits, total, threshold, direction)
    }
}
