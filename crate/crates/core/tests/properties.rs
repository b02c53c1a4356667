use approx::assert_relative_eq;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use isac_core::detect::{cfar_hits, CfarConfig, Detection, DetectionFlags};
use isac_core::dsp::{
    eca_c_remove, estimate_channel, estimate_noise_floor, periodogram, ChannelEstimate, EcaBasis, EcaConfig,
    NoiseRegion, Numerology, PeriodogramConfig, Window, DEFAULT_DIVISION_EPSILON,
};
use isac_core::linkbudget::{db_to_linear, expected_sinr_at_range, max_range, r_star, LinkBudgetParams, SinrModel};
use isac_core::scene::{synthesize_frame, Impairments, RcsModel, Scenario, Target, TddMask, Trajectory};
use isac_core::track::{TrackState, Tracker, TrackerConfig};

fn numerology() -> Numerology {
    Numerology::from_scenario(&Scenario::empty(LinkBudgetParams::fr2_reference(), 0.01, 0))
}

fn random_channel(seed: u64, n: usize, mask: &TddMask) -> ChannelEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Array2::from_shape_fn((n, mask.len()), |(_, m)| {
        if mask.is_dl(m) {
            Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    ChannelEstimate { grid, dl_mask: mask.clone(), frame_index: 0, zeroed_cells: 0 }
}

fn unpadded() -> PeriodogramConfig {
    PeriodogramConfig { range_pad: 1, doppler_pad: 1, window: Window::Rect }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval(seed in any::<u64>(), n in 4usize..40, dl in 2usize..12, ul in 0usize..6) {
        let mask = TddMask::periodic(dl, ul, 2);
        let ch = random_channel(seed, n, &mask);
        let p = periodogram(&ch, &numerology(), &unpadded()).unwrap();
        let cells = (n * mask.len()) as f64;
        assert_relative_eq!(p.total_power(), cells * ch.energy(), max_relative = 1e-9);
    }

    #[test]
    fn linearity(seed in any::<u64>(), re in -3.0..3.0f64, im in 0.1..3.0f64) {
        let mask = TddMask::periodic(6, 2, 3);
        let ch = random_channel(seed, 16, &mask);
        let alpha = Complex64::new(re, im);
        let mut scaled = ch.clone();
        scaled.grid.mapv_inplace(|z| z * alpha);
        let cfg = PeriodogramConfig::default();
        let a = periodogram(&ch, &numerology(), &cfg).unwrap();
        let b = periodogram(&scaled, &numerology(), &cfg).unwrap();
        for (x, y) in a.power.iter().zip(b.power.iter()) {
            prop_assert!((y - alpha.norm_sqr() * x).abs() <= 1e-9 * alpha.norm_sqr() * a.argmax().2);
        }
        prop_assert_eq!(a.argmax().0, b.argmax().0);
        prop_assert_eq!(a.argmax().1, b.argmax().1);
    }

    #[test]
    fn eca_idempotent(seed in any::<u64>(), degree in 0usize..6, half_width in 0usize..3) {
        let mask = TddMask::periodic(20, 6, 4);
        let ch = random_channel(seed, 8, &mask);
        for cfg in [EcaConfig { basis: EcaBasis::Polynomial { degree } }, EcaConfig { basis: EcaBasis::Harmonic { half_width } }] {
            let once = eca_c_remove(&ch, &cfg).unwrap();
            let twice = eca_c_remove(&once, &cfg).unwrap();
            let diff: f64 = once.grid.iter().zip(twice.grid.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
            prop_assert!(diff <= 1e-24 * ch.energy());
            for m in (0..mask.len()).filter(|&m| !mask.is_dl(m)) {
                prop_assert!(once.grid.column(m).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
            }
        }
    }

    #[test]
    fn cfar_is_scale_invariant(seed in any::<u64>(), scale_db in -60.0..60.0f64) {
        let mask = TddMask::full_dl(64);
        let ch = random_channel(seed, 64, &mask);
        let p = periodogram(&ch, &numerology(), &PeriodogramConfig::default()).unwrap();
        let cfg = CfarConfig { pfa: 1e-3, ..CfarConfig::default() };
        let a: Vec<(usize, usize)> = cfar_hits(&p, &cfg).unwrap().iter().map(|h| (h.range_bin, h.doppler_bin)).collect();
        let b: Vec<(usize, usize)> = cfar_hits(&p.scaled(db_to_linear(scale_db)), &cfg).unwrap().iter().map(|h| (h.range_bin, h.doppler_bin)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sinr_falls_with_range(r in 100.0..1300.0f64, dr in 1.0..30.0f64) {
        let p = LinkBudgetParams::fr2_reference();
        let near = expected_sinr_at_range(&p, r, SinrModel::Unwindowed).unwrap();
        if let Ok(far) = expected_sinr_at_range(&p, r + dr, SinrModel::Unwindowed) {
            prop_assert!(far < near);
        }
    }

    #[test]
    fn fourth_root_law(power_db in -20.0..20.0f64) {
        let p = LinkBudgetParams::fr2_reference();
        let mut q = p.clone();
        q.gamma_min *= db_to_linear(power_db);
        let ratio = r_star(&p).unwrap() / r_star(&q).unwrap();
        assert_relative_eq!(ratio, db_to_linear(power_db / 4.0), max_relative = 1e-12);
    }

    #[test]
    fn tracker_is_deterministic_and_transitions_forward(
        frames in proptest::collection::vec(proptest::collection::vec((50.0..60.0f64, -3.0..3.0f64), 0..4), 1..80)
    ) {
        let run = || {
            let mut t = Tracker::new(TrackerConfig::default());
            let mut states: Vec<Vec<(u64, TrackState, u32)>> = Vec::new();
            for (k, dets) in frames.iter().enumerate() {
                let dets: Vec<Detection> = dets.iter().map(|&(r, v)| detection(k as u64, r, v)).collect();
                t.update(&dets, k as u64);
                states.push(t.active().iter().map(|tr| (tr.id, tr.state, tr.consecutive_misses)).collect());
            }
            (states, t.into_tracks())
        };
        let (states, tracks) = run();
        prop_assert_eq!(&tracks, &run().1);
        for frame in &states {
            for &(_, state, misses) in frame {
                prop_assert!(state != TrackState::Retired);
                prop_assert!(misses <= 12);
            }
        }
        for t in &tracks {
            let order: Vec<TrackState> = t.history.iter().map(|p| p.state).collect();
            prop_assert!(order.windows(2).all(|w| rank(w[0]) <= rank(w[1])));
            if let (Some(v), Some(r)) = (t.validated_frame, t.retired_frame) {
                prop_assert!(v <= r);
            }
        }
    }
}

fn rank(s: TrackState) -> u8 {
    match s {
        TrackState::Candidate => 0,
        TrackState::Valid => 1,
        TrackState::Retired => 2,
    }
}

fn detection(frame: u64, range_m: f64, velocity_mps: f64) -> Detection {
    Detection {
        frame_index: frame,
        range_m,
        velocity_mps,
        doppler_hz: 0.0,
        peak_power: 1.0,
        sinr_db: 20.0,
        bin: (0, 0),
        flags: DetectionFlags::default(),
    }
}

#[test]
fn fourth_root_examples() {
    // Intermodulation grows as P_Tx cubed, so the power law needs a
    // thermal-limited link.
    let mut p = LinkBudgetParams::fr2_reference();
    p.oip3_tx = 1e30;
    p.iip3_rx = 1e30;
    let mut louder = p.clone();
    louder.p_tx *= 16.0;
    assert_relative_eq!(r_star(&louder).unwrap() / r_star(&p).unwrap(), 2.0, max_relative = 1e-9);
    let p = LinkBudgetParams::fr2_reference();
    let mut hotter = p.clone();
    hotter.p_tx *= 16.0;
    assert!(r_star(&hotter).unwrap() < r_star(&p).unwrap());
    let mut stricter = p.clone();
    stricter.gamma_min *= db_to_linear(12.0);
    assert_relative_eq!(r_star(&p).unwrap() / r_star(&stricter).unwrap(), db_to_linear(3.0), max_relative = 1e-12);
}

#[test]
fn r_max_decreases_with_threshold() {
    let mut last = f64::INFINITY;
    for step in 0..=20 {
        let mut p = LinkBudgetParams::fr2_reference();
        p.gamma_min = db_to_linear(10.0 + 0.5 * step as f64);
        let r = max_range(&p).unwrap().r_max;
        assert!(r < last, "gamma {} dB gives {r} m", 10.0 + 0.5 * step as f64);
        last = r;
    }
}

#[test]
fn noise_floor_of_white_noise() {
    let mask = TddMask::full_dl(256);
    let s2 = 2.0;
    let mut ch = random_channel(7, 400, &mask);
    ch.grid.mapv_inplace(|z| z * (s2 / 2.0f64).sqrt());
    let mut p = periodogram(&ch, &numerology(), &unpadded()).unwrap();
    let floor = estimate_noise_floor(&mut p, &NoiseRegion::everything()).unwrap();
    let expected = (400 * 256) as f64 * s2;
    assert!((floor / expected - 1.0).abs() < 0.05, "{floor} vs {expected}");
    assert_eq!(p.noise_floor_estimate, Some(floor));
}

fn one_target(range_m: f64, velocity_mps: f64) -> Scenario {
    let mut s = Scenario::empty(LinkBudgetParams::fr2_reference(), 0.01, 9);
    s.impairments = Impairments::none();
    s.targets.push(Target {
        id: 1,
        trajectory: Trajectory {
            waypoints: vec![[0.0, range_m, 0.0, 0.0], [1.0, range_m + velocity_mps, 0.0, 0.0]],
        },
        rcs_mean: s.params.rcs,
        rcs_model: RcsModel::Constant,
    });
    s
}

#[test]
fn channel_of_one_target_is_a_steering_product() {
    let s = one_target(450.0, 5.0);
    let f = synthesize_frame(&s, 0, None).unwrap();
    let ch = estimate_channel(&f.tx, &f.rx, DEFAULT_DIVISION_EPSILON).unwrap();
    let c = 299_792_458.0;
    let delay = 2.0 * 450.0 / c;
    let doppler = -2.0 * 5.0 * s.params.f_c / c;
    let t0 = s.symbol_duration();
    let h0 = ch.grid[[0, 0]];
    let mut worst: f64 = 0.0;
    for n in (0..ch.n_subcarriers()).step_by(37) {
        for m in s.dl_mask.dl_symbols().step_by(13) {
            let phase = -2.0 * std::f64::consts::PI * (n as f64 * s.params.delta_f * delay - doppler * m as f64 * t0);
            let want = h0 * Complex64::from_polar(1.0, phase);
            worst = worst.max((ch.grid[[n, m]] - want).norm() / h0.norm());
        }
    }
    assert!(worst < 1e-12, "{worst}");
    for m in (0..s.symbols_per_frame).filter(|&m| !s.dl_mask.is_dl(m)) {
        assert!(f.rx.grid.column(m).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }
}

#[test]
fn target_peak_lands_on_its_bins() {
    let s = one_target(450.0, 5.0);
    let f = synthesize_frame(&s, 0, None).unwrap();
    let ch = estimate_channel(&f.tx, &f.rx, DEFAULT_DIVISION_EPSILON).unwrap();
    let p = periodogram(&ch, &Numerology::from_scenario(&s), &PeriodogramConfig::default()).unwrap();
    assert!((p.range_resolution_m() - 0.789).abs() < 1e-3);
    assert!((p.velocity_resolution_mps() - 0.543).abs() < 1e-3);
    let (r, d, _) = p.argmax();
    assert!((r as f64 - 450.0 / p.range_bin_m).abs() <= 1.0);
    let want = p.doppler_bin_of_velocity(5.0);
    let dd = (d as f64 - want).rem_euclid(p.n_doppler() as f64);
    assert!(dd.min(p.n_doppler() as f64 - dd) <= 1.0);
    assert!((p.velocity_mps(d as f64) - 5.0).abs() < p.velocity_bin_mps);
}
