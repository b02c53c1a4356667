//! Desk-scale replicas of the two flight experiments. Numerology, power and
//! hardware figures stay at the reference values so bin sizes and the
//! link budget are unchanged; only geometry and duration are synthetic.

use super::{Beam, ClutterObject, Impairments, RcsModel, Scenario, Target, TddMask, Trajectory};
use crate::linkbudget::{db_to_linear, LinkBudgetParams};

const WAYPOINT_STEP_S: f64 = 0.05;

/// Straight leg with a trapezoidal speed profile (accelerate, cruise,
/// decelerate to rest), sampled every `WAYPOINT_STEP_S`. The first sample at
/// `t_start` is omitted so legs can be chained.
fn leg(from: [f64; 3], to: [f64; 3], t_start: f64, cruise: f64, accel: f64) -> Vec<[f64; 4]> {
    let d: Vec<f64> = (0..3).map(|k| to[k] - from[k]).collect();
    let length = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let (v_peak, t_ramp) = if length < cruise * cruise / accel {
        let v = (length * accel).sqrt();
        (v, v / accel)
    } else {
        (cruise, cruise / accel)
    };
    let ramp_dist = 0.5 * accel * t_ramp * t_ramp;
    let t_cruise = (length - 2.0 * ramp_dist) / v_peak;
    let total = 2.0 * t_ramp + t_cruise;
    let distance_at = |t: f64| {
        if t < t_ramp {
            0.5 * accel * t * t
        } else if t < t_ramp + t_cruise {
            ramp_dist + v_peak * (t - t_ramp)
        } else {
            let td = (total - t).max(0.0);
            length - 0.5 * accel * td * td
        }
    };
    let steps = (total / WAYPOINT_STEP_S).ceil() as usize;
    (1..=steps)
        .map(|i| {
            let t = (i as f64 * WAYPOINT_STEP_S).min(total);
            let u = if length > 0.0 { distance_at(t) / length } else { 1.0 };
            [t_start + t, from[0] + u * d[0], from[1] + u * d[1], from[2] + u * d[2]]
        })
        .collect()
}

fn polar(range: f64, az_deg: f64) -> [f64; 3] {
    let az = az_deg.to_radians();
    [range * az.cos(), range * az.sin(), 0.0]
}

fn chain(start: [f64; 3], t0: f64, stops: &[[f64; 3]], cruise: f64, accel: f64) -> Vec<[f64; 4]> {
    let mut waypoints = vec![[t0, start[0], start[1], start[2]]];
    let mut from = start;
    for &to in stops {
        let t = waypoints.last().unwrap()[0];
        waypoints.extend(leg(from, to, t, cruise, accel));
        from = to;
    }
    waypoints
}

/// Close-range experiment: a closed loop within 90 m, observed through a
/// sweep over six beams of 50 ms each (300 ms per sweep).
pub fn make_experiment1_scenario() -> Scenario {
    let params = LinkBudgetParams::fr2_reference();
    let g = params.g_tx;
    let beams = [(35, -14.0), (38, -7.0), (41, 0.0), (44, 7.0), (47, 14.0), (50, 21.0)]
        .into_iter()
        .map(|(id, az)| Beam::new(id, az, g, 0.05))
        .collect();

    let start = polar(50.0, 0.0);
    let loop_points = [
        polar(70.0, 5.0),
        polar(86.0, 6.0),
        polar(88.0, -4.0),
        polar(65.0, -8.0),
        polar(42.0, -5.0),
        start,
    ];
    // One second of hover before the loop starts.
    let mut waypoints = vec![[0.0, start[0], start[1], start[2]]];
    waypoints.extend(chain(start, 1.0, &loop_points, 6.0, 2.0));
    let target = Target {
        id: 1,
        trajectory: Trajectory { waypoints },
        rcs_mean: db_to_linear(-17.0),
        rcs_model: RcsModel::Constant,
    };

    // Combined coupling loss of the scene matches C_total = 85 dB.
    let mut clutter = vec![
        ClutterObject { range: 18.0, coupling_loss: db_to_linear(95.0), doppler: 0.0, phase_jitter_std: 0.0 },
        ClutterObject { range: 62.0, coupling_loss: db_to_linear(100.0), doppler: 0.0, phase_jitter_std: 0.0 },
        ClutterObject { range: 140.0, coupling_loss: db_to_linear(105.0), doppler: 0.0, phase_jitter_std: 0.0 },
    ];
    let rest: f64 = clutter.iter().map(|c| 1.0 / c.coupling_loss).sum();
    clutter.insert(
        0,
        ClutterObject {
            range: 30.0,
            coupling_loss: 1.0 / (1.0 / params.c_total - rest),
            doppler: 0.0,
            phase_jitter_std: 0.0,
        },
    );

    Scenario {
        name: "experiment-1".into(),
        frame_duration: 0.01,
        symbols_per_frame: 1120,
        dl_mask: TddMask::fr2_default(),
        targets: vec![target],
        clutter,
        beams,
        duration: 30.0,
        rng_seed: 0x15AC_0001,
        impairments: Impairments::default(),
        params,
    }
}

/// Long-range experiment: a straight route between 250 m and 500 m flown
/// approach / depart / approach with turn-arounds, a single fixed beam, a
/// dominant reflector at 30 m and a building band at 250-300 m.
pub fn make_experiment2_scenario() -> Scenario {
    let params = LinkBudgetParams::fr2_reference();
    let beam = Beam::new(0, 0.0, params.g_tx, 0.01);

    // Near end sits at the beam edge (half the azimuth HPBW).
    let near = polar(250.0, 7.0);
    let far = polar(500.0, 0.0);
    let at = |u: f64| [0, 1, 2].map(|k| near[k] + u * (far[k] - near[k]));
    let range_of = |p: [f64; 3]| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if range_of(at(mid)) < 375.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let central = at(0.5 * (lo + hi));

    let mut waypoints = vec![[0.0, central[0], central[1], central[2]]];
    waypoints.extend(chain(central, 0.5, &[near, far, central], 12.0, 3.0));
    let end = waypoints.last().unwrap()[0];
    let target = Target {
        id: 1,
        trajectory: Trajectory { waypoints },
        rcs_mean: db_to_linear(-17.0),
        rcs_model: RcsModel::Constant,
    };

    let mut clutter: Vec<ClutterObject> = (0..11)
        .map(|i| ClutterObject {
            range: 250.0 + 5.0 * i as f64,
            coupling_loss: db_to_linear(120.0),
            doppler: 0.0,
            phase_jitter_std: 0.0,
        })
        .collect();
    let band: f64 = clutter.iter().map(|c| 1.0 / c.coupling_loss).sum();
    clutter.insert(
        0,
        ClutterObject {
            range: 30.0,
            coupling_loss: 1.0 / (1.0 / params.c_total - band),
            doppler: 0.0,
            phase_jitter_std: 0.0,
        },
    );

    Scenario {
        name: "experiment-2".into(),
        frame_duration: 0.01,
        symbols_per_frame: 1120,
        dl_mask: TddMask::fr2_default(),
        targets: vec![target],
        clutter,
        beams: vec![beam],
        duration: (end + 0.5).ceil(),
        rng_seed: 0x15AC_0002,
        impairments: Impairments::default(),
        params,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkbudget::linear_to_db;
    use approx::assert_relative_eq;

    fn range_extent(s: &Scenario) -> (f64, f64) {
        let traj = &s.targets[0].trajectory;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut t = 0.0;
        while t <= s.duration {
            let r = traj.kinematics(t).range;
            lo = lo.min(r);
            hi = hi.max(r);
            t += 0.01;
        }
        (lo, hi)
    }

    #[test]
    fn experiment1_geometry() {
        let s = make_experiment1_scenario();
        s.validate().unwrap();
        assert_relative_eq!(s.sweep_period(), 0.3, max_relative = 1e-12);
        assert_eq!(s.beams.len(), 6);
        let (lo, hi) = range_extent(&s);
        assert!(lo > 20.0 && hi <= 90.0, "{lo} {hi}");
        let traj = &s.targets[0].trajectory;
        let first = traj.position(0.0);
        let last = traj.position(traj.end_time());
        assert!((0..3).all(|k| (first[k] - last[k]).abs() < 1e-9), "closed loop");
        assert_relative_eq!(linear_to_db(s.combined_coupling_loss().unwrap()), 85.0, epsilon = 1e-9);
    }

    #[test]
    fn experiment2_geometry() {
        let s = make_experiment2_scenario();
        s.validate().unwrap();
        let (lo, hi) = range_extent(&s);
        assert_relative_eq!(lo, 250.0, epsilon = 1e-3);
        assert_relative_eq!(hi, 500.0, epsilon = 1e-3);
        assert_relative_eq!(linear_to_db(s.combined_coupling_loss().unwrap()), 85.0, epsilon = 1e-9);
        let dominant = s
            .clutter
            .iter()
            .min_by(|a, b| a.coupling_loss.total_cmp(&b.coupling_loss))
            .unwrap();
        assert_eq!(dominant.range, 30.0);
    }

    #[test]
    fn experiment2_speed_crosses_zero_at_turnarounds() {
        let s = make_experiment2_scenario();
        let traj = &s.targets[0].trajectory;
        let mut sign_changes = 0;
        let mut prev = 0.0f64;
        let mut t = 0.6;
        while t < traj.end_time() {
            let v = traj.kinematics(t).range_rate;
            if v.abs() > 0.5 {
                if prev != 0.0 && v.signum() != prev.signum() {
                    sign_changes += 1;
                }
                prev = v;
            }
            t += 0.01;
        }
        assert_eq!(sign_changes, 2);
    }

    #[test]
    fn leg_reaches_endpoint() {
        let w = leg([0.0; 3], [100.0, 0.0, 0.0], 2.0, 10.0, 2.0);
        let last = w.last().unwrap();
        assert_relative_eq!(last[1], 100.0, epsilon = 1e-9);
        assert_relative_eq!(last[0], 2.0 + 15.0, epsilon = 1e-9);
    }
}
