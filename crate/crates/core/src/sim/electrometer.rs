use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrometerModel {
    pub sampling_period_s: f64,
    pub median_rank: u32,
}

impl ElectrometerModel {
    pub fn new(sampling_period_s: f64, median_rank: u32) -> Self {
        Self {
            sampling_period_s,
            median_rank,
        }
    }

    pub fn window_len(&self) -> usize {
        2 * self.median_rank as usize + 1
    }

    /// Time spanned by the median window, (2R+1)·Ts.
    pub fn window_s(&self) -> f64 {
        self.window_len() as f64 * self.sampling_period_s
    }

    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if !(self.sampling_period_s > 0.0 && self.sampling_period_s <= 1.0) {
            errors.push(FieldError::new(
                format!("{prefix}.sampling_period_s"),
                "must lie in (0, 1] s",
            ));
        }
        if self.median_rank > 50 {
            errors.push(FieldError::new(format!("{prefix}.median_rank"), "must not exceed 50"));
        }
        errors
    }
}

impl Default for ElectrometerModel {
    fn default() -> Self {
        Self::new(0.2, 5)
    }
}

/// Running median over the last 2R+1 raw readings.
///
/// Until the window fills, the median is taken over what is available
/// (mean of the two middle values for an even count).
#[derive(Debug, Clone)]
pub struct MedianWindow {
    capacity: usize,
    values: VecDeque<f64>,
    scratch: Vec<f64>,
}

impl MedianWindow {
    pub fn new(rank: u32) -> Self {
        let capacity = 2 * rank as usize + 1;
        Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
            scratch: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contents(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn push(&mut self, raw: f64) -> f64 {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(raw);
        self.median()
    }

    pub fn median(&mut self) -> f64 {
        self.scratch.clear();
        self.scratch.extend(self.values.iter().copied());
        self.scratch.sort_by(f64::total_cmp);
        let n = self.scratch.len();
        match n {
            0 => 0.0,
            _ if n % 2 == 1 => self.scratch[n / 2],
            _ => 0.5 * (self.scratch[n / 2 - 1] + self.scratch[n / 2]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_zero_passes_through() {
        let mut w = MedianWindow::new(0);
        for x in [1.0, -3.0, 7.5, 1e-9] {
            assert_eq!(w.push(x), x);
        }
    }

    #[test]
    fn constant_stream_is_unchanged() {
        let mut w = MedianWindow::new(5);
        for _ in 0..40 {
            assert_eq!(w.push(2.5e-9), 2.5e-9);
        }
    }

    #[test]
    fn single_outlier_is_rejected() {
        let mut stream = vec![1e-9; 30];
        stream[14] = 101e-9;
        let mut w = MedianWindow::new(5);
        for (i, x) in stream.iter().enumerate() {
            let got = w.push(*x);
            // brute force over the same window
            let lo = i.saturating_sub(10);
            let mut win: Vec<f64> = stream[lo..=i].to_vec();
            win.sort_by(f64::total_cmp);
            let n = win.len();
            let oracle = if n % 2 == 1 {
                win[n / 2]
            } else {
                0.5 * (win[n / 2 - 1] + win[n / 2])
            };
            assert_eq!(got, oracle);
            assert_eq!(got, 1e-9);
        }
    }

    #[test]
    fn window_never_exceeds_capacity() {
        let mut w = MedianWindow::new(2);
        for i in 0..20 {
            w.push(i as f64);
            assert!(w.len() <= 5);
        }
    }

    #[test]
    fn window_width() {
        let m = ElectrometerModel::new(0.2, 5);
        assert!((m.window_s() - 2.2).abs() < 1e-12);
    }
}
