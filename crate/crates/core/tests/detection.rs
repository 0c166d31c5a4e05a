use roadsense_core::drivesim::{
    default_drive, evaluate_detections, generate_drive, DetectionScore, InjectedEvent, InjectedKind, NoiseSpec, Scenario,
};
use roadsense_core::kinematics::{classify_events, detect_axis_spikes, SpikeConfig};

const TOL_MS: i64 = 250;

fn score(s: &Scenario) -> DetectionScore {
    let d = generate_drive(s).unwrap();
    let spikes = detect_axis_spikes(&d.streams.samples, &SpikeConfig::default()).unwrap();
    evaluate_detections(&d.truth, &classify_events(&spikes), TOL_MS)
}

#[test]
fn noisy_default_drives_meet_precision_and_recall() {
    for seed in 0..20 {
        let s = score(&default_drive(seed));
        assert!(s.precision >= 0.9 && s.recall >= 0.9, "seed {seed}: {s:?}");
        assert_eq!(s.lane_changes_as_pothole, 0, "seed {seed}");
    }
}

#[test]
fn clean_default_drives_are_exact() {
    for seed in 0..20 {
        let mut s = default_drive(seed);
        s.noise = NoiseSpec { accel_sigma: 0.0, gyro_sigma: 0.0 };
        let sc = score(&s);
        assert_eq!((sc.precision, sc.recall), (1.0, 1.0), "seed {seed}: {sc:?}");
    }
}

#[test]
fn pothole_only_scenario_is_labelled_pothole() {
    let mut s = Scenario::quiet(42, 30.0);
    s.noise = NoiseSpec { accel_sigma: 0.0, gyro_sigma: 0.0 };
    s.events.push(InjectedEvent { t_ms: 12_000, kind: InjectedKind::Pothole, magnitude: 2.0 });
    let sc = score(&s);
    assert_eq!((sc.detections, sc.matched), (1, 1));
}
