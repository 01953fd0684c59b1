//! Voltage sequences for down-up-down and up-down-up scans.

use serde::{Deserialize, Serialize};

use super::params::{steps_between, ScanMode, ScanPlan};
use crate::error::PlanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Which leg of a scan a point was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "descending-1")]
    Descending1,
    #[serde(rename = "ascending")]
    Ascending,
    #[serde(rename = "descending-2")]
    Descending2,
    #[serde(rename = "ascending-1")]
    Ascending1,
    #[serde(rename = "descending")]
    Descending,
    #[serde(rename = "ascending-2")]
    Ascending2,
}

impl Branch {
    pub const ALL: [Branch; 6] = [
        Branch::Descending1,
        Branch::Ascending,
        Branch::Descending2,
        Branch::Ascending1,
        Branch::Descending,
        Branch::Ascending2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Branch::Descending1 => "descending-1",
            Branch::Ascending => "ascending",
            Branch::Descending2 => "descending-2",
            Branch::Ascending1 => "ascending-1",
            Branch::Descending => "descending",
            Branch::Ascending2 => "ascending-2",
        }
    }

    pub fn legs(mode: ScanMode) -> [Branch; 3] {
        match mode {
            ScanMode::Dud => [Branch::Descending1, Branch::Ascending, Branch::Descending2],
            ScanMode::Udu => [Branch::Ascending1, Branch::Descending, Branch::Ascending2],
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Branch::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| format!("unknown branch `{s}`"))
    }
}

/// Rounds to the nanovolt so grid voltages print and compare cleanly.
pub fn snap_voltage(v: f64) -> f64 {
    let snapped = (v * 1e9).round() / 1e9;
    if snapped == 0.0 {
        0.0
    } else {
        snapped
    }
}

/// Arithmetic sequence from `from_v` to `to_v` inclusive.
pub fn generate_sweep(from_v: f64, to_v: f64, v_step: f64, direction: Direction) -> Result<Vec<f64>, PlanError> {
    if !(v_step > 0.0 && v_step.is_finite()) {
        return Err(PlanError::NonPositiveStep(v_step));
    }
    let (sign, name) = match direction {
        Direction::Up => (1.0, "up"),
        Direction::Down => (-1.0, "down"),
    };
    if (to_v - from_v) * sign < -super::params::VOLTAGE_EPS {
        return Err(PlanError::Direction {
            direction: name,
            from: from_v,
            to: to_v,
        });
    }
    let n = steps_between(from_v, to_v, v_step).ok_or(PlanError::NotMultiple {
        span: (to_v - from_v).abs(),
        step: v_step,
    })?;
    Ok((0..=n)
        .map(|i| snap_voltage(from_v + sign * i as f64 * v_step))
        .collect())
}

/// The full chained sequence of a scan, shared endpoints visited once.
pub fn plan_voltages(plan: &ScanPlan) -> Result<Vec<(Branch, f64)>, PlanError> {
    let legs = match plan.mode {
        ScanMode::Dud => [
            (plan.v_start, plan.v_min, Direction::Down),
            (plan.v_min, plan.v_max, Direction::Up),
            (plan.v_max, plan.v_end, Direction::Down),
        ],
        ScanMode::Udu => [
            (plan.v_start, plan.v_max, Direction::Up),
            (plan.v_max, plan.v_min, Direction::Down),
            (plan.v_min, plan.v_end, Direction::Up),
        ],
    };
    let branches = Branch::legs(plan.mode);
    let mut out = Vec::new();
    for (leg, ((from, to, dir), branch)) in legs.into_iter().zip(branches).enumerate() {
        let sweep = generate_sweep(from, to, plan.v_step, dir)?;
        let skip = usize::from(leg > 0);
        out.extend(sweep.into_iter().skip(skip).map(|v| (branch, v)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn down_sweep() {
        assert_eq!(
            generate_sweep(0.0, -0.3, 0.1, Direction::Down).unwrap(),
            vec![0.0, -0.1, -0.2, -0.3]
        );
    }

    #[test]
    fn wrong_direction_is_a_plan_error() {
        assert!(matches!(
            generate_sweep(0.0, 0.3, 0.1, Direction::Down),
            Err(PlanError::Direction { .. })
        ));
        assert!(generate_sweep(0.0, 0.3, 0.0, Direction::Up).is_err());
        assert!(generate_sweep(0.0, 0.25, 0.1, Direction::Up).is_err());
    }

    #[test]
    fn dud_chain_deduplicates_endpoints() {
        let plan = ScanPlan {
            v_start: 0.0,
            v_min: -0.2,
            v_max: 0.2,
            v_end: 0.0,
            v_step: 0.1,
            mode: ScanMode::Dud,
        };
        let v: Vec<f64> = plan_voltages(&plan).unwrap().into_iter().map(|(_, v)| v).collect();
        assert_eq!(v, vec![0.0, -0.1, -0.2, -0.1, 0.0, 0.1, 0.2, 0.1, 0.0]);
    }

    #[test]
    fn udu_mirrors_dud() {
        let dud = ScanPlan {
            v_start: 0.0,
            v_min: -0.3,
            v_max: 0.3,
            v_end: 0.0,
            v_step: 0.05,
            mode: ScanMode::Dud,
        };
        let udu = ScanPlan {
            mode: ScanMode::Udu,
            ..dud
        };
        let a = plan_voltages(&dud).unwrap();
        let b = plan_voltages(&udu).unwrap();
        assert_eq!(a.len(), b.len());
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            assert_eq!(*x, -*y);
        }
        assert_eq!(b[1].0, Branch::Ascending1);
    }

    #[test]
    fn dud_count_matches_enumeration() {
        // Brute force: walk the three legs one step at a time.
        for (start, min, max, end, step) in [
            (0.0, -0.6, 0.6, 0.0, 0.01),
            (0.1, -0.2, 0.4, -0.1, 0.05),
            (-0.2, -0.2, 0.2, 0.2, 0.1),
        ] {
            let plan = ScanPlan {
                v_start: start,
                v_min: min,
                v_max: max,
                v_end: end,
                v_step: step,
                mode: ScanMode::Dud,
            };
            let mut walk = vec![start];
            let mut v = start;
            while v > min + 1e-9 {
                v -= step;
                walk.push(v);
            }
            while v < max - 1e-9 {
                v += step;
                walk.push(v);
            }
            while v > end + 1e-9 {
                v -= step;
                walk.push(v);
            }
            let got = plan_voltages(&plan).unwrap();
            assert_eq!(got.len(), walk.len());
            let formula =
                ((start - min) / step).round() + ((max - min) / step).round() + ((max - end) / step).round() + 1.0;
            assert_eq!(got.len(), formula as usize);
            for ((_, a), b) in got.iter().zip(&walk) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn branch_labels_round_trip() {
        for b in Branch::ALL {
            assert_eq!(b.label().parse::<Branch>().unwrap(), b);
        }
    }
}
