use proptest::prelude::*;

use seasim::event_camera::{decode_events_binary, encode_events_binary, generate_events, init_state, EbcConfig, Event};
use seasim::io::{decode_raw_grid, encode_raw_grid};
use seasim::rng::{mix, NoiseStream};
use seasim::thrusters::{rotor_step, thrust_and_torque, RotorDynamics, ThrustGeneration, ThrusterState};

fn quiet(c: f64, refractory: f64) -> EbcConfig<f64> {
    EbcConfig {
        contrast_threshold_pos: c,
        contrast_threshold_neg: c,
        threshold_noise_stddev: 0.0,
        refractory_period: refractory,
        ..EbcConfig::default()
    }
}

proptest! {
    #[test]
    fn quadratic_thrust_is_odd(ct in 1e-4f64..1.0, w in -500.0f64..500.0) {
        let g = ThrustGeneration::Quadratic { ct };
        prop_assert_eq!(thrust_and_torque(&g, -w, 0.0).0, -thrust_and_torque(&g, w, 0.0).0);
    }

    #[test]
    fn deadband_is_continuous_and_monotone(
        lo in -20.0f64..0.0, hi in 0.0f64..20.0, fwd in 1e-4f64..1.0, rev in 1e-4f64..1.0, w in -100.0f64..100.0,
    ) {
        let g = ThrustGeneration::Deadband { deadband_lo: lo, deadband_hi: hi, ct_fwd: fwd, ct_rev: rev };
        let t = |x: f64| thrust_and_torque(&g, x, 0.0).0;
        prop_assert_eq!(t(lo), 0.0);
        prop_assert_eq!(t(hi), 0.0);
        prop_assert!(t(hi + 1e-9).abs() < 1e-12 && t(lo - 1e-9).abs() < 1e-12);
        prop_assert!(t(w + 0.5) >= t(w));
    }

    #[test]
    fn linear_table_hits_nodes_and_clamps(
        steps in prop::collection::vec((0.1f64..10.0, -50.0f64..50.0), 2..8), x in -200.0f64..200.0,
    ) {
        let mut w = -100.0;
        let table: Vec<(f64, f64)> = steps.iter().map(|&(dw, t)| { w += dw; (w, t) }).collect();
        let g = ThrustGeneration::LinearInterp { table: table.clone() };
        for &(w, t) in &table {
            prop_assert_eq!(thrust_and_torque(&g, w, 0.0).0, t);
        }
        let y = thrust_and_torque(&g, x, 0.0).0;
        let (lo, hi) = table.iter().fold((f64::MAX, f64::MIN), |(a, b), r| (a.min(r.1), b.max(r.1)));
        prop_assert!(y >= lo - 1e-9 && y <= hi + 1e-9);
        if x < table[0].0 { prop_assert_eq!(y, table[0].1); }
        if x > table[table.len() - 1].0 { prop_assert_eq!(y, table[table.len() - 1].1); }
    }

    #[test]
    fn first_order_rotor_never_overshoots(tau in 0.05f64..2.0, u in -50.0f64..50.0, dt in 1e-4f64..0.05) {
        let r = RotorDynamics::FirstOrder { tau };
        let mut s = ThrusterState::default();
        for _ in 0..200 {
            let next = rotor_step(&r, s, u, 0.0, dt).unwrap();
            prop_assert!((next.omega - u).abs() <= (s.omega - u).abs() + 1e-12);
            s = next;
        }
    }

    #[test]
    fn noise_streams_are_pure_functions(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let s = NoiseStream::new(seed);
        prop_assert_eq!(s.normal(&[a, b]).to_bits(), NoiseStream::new(seed).normal(&[a, b]).to_bits());
        let u = s.uniform(&[a, b]);
        prop_assert!((0.0..1.0).contains(&u));
        prop_assert_eq!(mix(seed, &[a, b]), mix(seed, &[a, b]));
    }

    #[test]
    fn raw_grid_roundtrips(w in 1usize..20, h in 1usize..20, fill in -1e6f32..1e6) {
        let data: Vec<f32> = (0..w * h).map(|i| fill + i as f32).collect();
        let (dw, dh, back) = decode_raw_grid(&encode_raw_grid(w, h, &data)).unwrap();
        prop_assert_eq!((dw, dh), (w, h));
        prop_assert_eq!(back, data);
    }

    #[test]
    fn event_binary_roundtrips(raw in prop::collection::vec((0.0f64..100.0, any::<u16>(), any::<u16>(), any::<bool>()), 0..50)) {
        let events: Vec<Event<f64>> =
            raw.iter().map(|&(t, x, y, p)| Event { t, x, y, polarity: if p { 1 } else { -1 } }).collect();
        prop_assert_eq!(decode_events_binary(&encode_events_binary(&events)).unwrap(), events);
    }

    #[test]
    fn events_are_ordered_and_signed(
        pixels in prop::collection::vec((-3.0f64..1.0, -3.0f64..1.0), 1..16),
        c in 0.05f64..0.5,
        refractory in 0.0f64..0.01,
    ) {
        let cfg = quiet(c, refractory);
        let prev: Vec<f64> = pixels.iter().map(|p| p.0).collect();
        let cur: Vec<f64> = pixels.iter().map(|p| p.1).collect();
        let mut state = init_state(&prev, &cfg);
        let events = generate_events(pixels.len(), &prev, &cur, 0.0, 0.1, &cfg, &mut state, 0).unwrap();
        prop_assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
        for (i, &(a, b)) in pixels.iter().enumerate() {
            let mine: Vec<_> = events.iter().filter(|e| e.x as usize == i).collect();
            let bound = ((b - a).abs() / c).floor() as usize;
            prop_assert!(mine.len() <= bound);
            if refractory == 0.0 { prop_assert_eq!(mine.len(), bound); }
            for e in &mine {
                prop_assert!(e.t > 0.0 && e.t <= 0.1);
                prop_assert_eq!(e.polarity as f64, (b - a).signum());
            }
            for w in mine.windows(2) {
                prop_assert!(w[1].t - w[0].t > refractory);
            }
        }
    }
}

#[test]
fn core_runs_in_single_precision() {
    let r = RotorDynamics::FirstOrder { tau: 0.5f32 };
    let mut s = ThrusterState::<f32>::default();
    for _ in 0..500 {
        s = rotor_step(&r, s, 1.0, 0.0, 1e-3).unwrap();
    }
    assert!((s.omega - (1.0 - (-1.0f32).exp())).abs() < 1e-5);
}
