//! Steady-state detection over the 1 Hz current record.
//!
//! `trace[j - 1]` holds the sample taken `j` seconds after the voltage was
//! applied. A check at second `k` compares the mean of the `Nw` samples
//! ending at `k` with the mean of the `Nw` samples ending at `k - Np`.

use super::params::SteadyStateParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckOutcome {
    /// Not enough samples recorded for both windows.
    NotReady,
    Steady {
        delta_a: f64,
    },
    Unsteady {
        delta_a: f64,
    },
}

impl CheckOutcome {
    pub fn is_steady(&self) -> bool {
        matches!(self, CheckOutcome::Steady { .. })
    }
}

fn windows(trace: &[f64], np: usize, nw: usize, k: usize) -> Option<(&[f64], &[f64])> {
    if np == 0 || nw == 0 || k < np + nw || trace.len() < k {
        return None;
    }
    Some((&trace[k - nw..k], &trace[k - np - nw..k - np]))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// |mean(recent window) − mean(window Np earlier)|, or `None` if not ready.
pub fn window_mean_difference(trace: &[f64], np: u32, nw: u32, k: u32) -> Option<f64> {
    let (recent, earlier) = windows(trace, np as usize, nw as usize, k as usize)?;
    Some((mean(recent) - mean(earlier)).abs())
}

/// The same quantity computed as a mean of pairwise differences.
pub fn mean_window_difference(trace: &[f64], np: u32, nw: u32, k: u32) -> Option<f64> {
    let (recent, earlier) = windows(trace, np as usize, nw as usize, k as usize)?;
    let sum: f64 = recent.iter().zip(earlier).map(|(a, b)| a - b).sum();
    Some((sum / nw as f64).abs())
}

pub fn steady_state_check(trace: &[f64], params: &SteadyStateParams, k: u32) -> CheckOutcome {
    match window_mean_difference(trace, params.np_s, params.nw_s, k) {
        None => CheckOutcome::NotReady,
        Some(delta_a) if delta_a <= params.threshold_a => CheckOutcome::Steady { delta_a },
        Some(delta_a) => CheckOutcome::Unsteady { delta_a },
    }
}

/// Scans a complete record at the Np boundaries, returning the first steady check.
pub fn first_detection(trace: &[f64], params: &SteadyStateParams) -> Option<u32> {
    let mut k = params.first_check_s();
    while (k as usize) <= trace.len() {
        if steady_state_check(trace, params, k).is_steady() {
            return Some(k);
        }
        k += params.np_s;
    }
    None
}

/// Mean of the `nm` samples following the detection at second `k`.
pub fn measure_steady_current(trace: &[f64], k: u32, nm: u32) -> Option<f64> {
    let start = k as usize;
    let end = start + nm as usize;
    if nm == 0 || trace.len() < end {
        return None;
    }
    Some(mean(&trace[start..end]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(s: f64) -> SteadyStateParams {
        SteadyStateParams {
            threshold_a: s,
            ..SteadyStateParams::default()
        }
    }

    #[test]
    fn constant_trace_is_steady() {
        let trace = vec![4.2e-8; 30];
        for s in [1e-15, 3e-9, 1.0] {
            assert!(steady_state_check(&trace, &params(s), 10).is_steady());
        }
    }

    #[test]
    fn ramp_is_not_steady() {
        let trace: Vec<f64> = (1..=40).map(|j| j as f64 * 1e-9).collect();
        match steady_state_check(&trace, &params(3e-9), 20) {
            CheckOutcome::Unsteady { delta_a } => assert!((delta_a - 5e-9).abs() < 1e-18),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_trace_is_not_ready() {
        let trace = vec![0.0; 9];
        assert_eq!(steady_state_check(&trace, &params(3e-9), 10), CheckOutcome::NotReady);
        assert_eq!(steady_state_check(&trace, &params(3e-9), 5), CheckOutcome::NotReady);
    }

    #[test]
    fn exponential_decay_detects_at_closed_form_boundary() {
        // Window means of A·exp(−j/τ) are geometric sums.
        let (amp, tau) = (200e-9, 30.0);
        let trace: Vec<f64> = (1..=600).map(|j| amp * (-(j as f64) / tau).exp()).collect();
        let p = params(3e-9);
        let window_mean = |end: u32| {
            let q = (-1.0 / tau).exp();
            let first = end - p.nw_s + 1;
            amp * q.powi(first as i32) * (1.0 - q.powi(p.nw_s as i32)) / (1.0 - q) / p.nw_s as f64
        };
        let mut expected = None;
        let mut k = p.first_check_s();
        while k <= 600 {
            if (window_mean(k) - window_mean(k - p.np_s)).abs() <= p.threshold_a {
                expected = Some(k);
                break;
            }
            k += p.np_s;
        }
        assert_eq!(first_detection(&trace, &p), expected);
        assert!(expected.is_some());
    }

    #[test]
    fn measurement_is_mean_of_following_samples() {
        let trace: Vec<f64> = (1..=30).map(|j| j as f64).collect();
        // samples at t = 11..=20 are trace[10..20]
        assert_eq!(measure_steady_current(&trace, 10, 10), Some(15.5));
        assert_eq!(measure_steady_current(&trace, 10, 1), Some(11.0));
        assert_eq!(measure_steady_current(&trace, 25, 10), None);
        let flat = vec![7e-9; 20];
        assert!((measure_steady_current(&flat, 5, 10).unwrap() - 7e-9).abs() < 1e-22);
    }

    proptest! {
        #[test]
        fn both_forms_agree(trace in prop::collection::vec(-1e-6f64..1e-6, 30..60), np in 1u32..8, nw in 1u32..8) {
            let k = np + nw + 10;
            let a = window_mean_difference(&trace, np, nw, k).unwrap();
            let b = mean_window_difference(&trace, np, nw, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (a.abs() + 1e-6));
        }

        #[test]
        fn raising_threshold_never_delays_detection(trace in prop::collection::vec(-1e-7f64..1e-7, 20..120), lo in 1e-10f64..5e-8, factor in 1.0f64..10.0) {
            let low = first_detection(&trace, &params(lo));
            let high = first_detection(&trace, &params(lo * factor));
            match (low, high) {
                (Some(l), Some(h)) => prop_assert!(h <= l),
                (Some(_), None) => prop_assert!(false, "higher threshold lost a detection"),
                _ => {}
            }
        }
    }
}
