use beamsplit::apparatus::{detect, dead_time_filter, ApparatusConfig, DetectionRun, PhysicsModel};
use beamsplit::source::{generate_emissions, SourceConfig};
use beamsplit::timetag::Channel;

fn sparse_source(seed: u64) -> SourceConfig {
    SourceConfig {
        mean_emission_rate: 100.0,
        run_duration: 500.0,
        rng_seed: seed,
        ..SourceConfig::default()
    }
}

fn run(model: PhysicsModel, transmittance: f64, seed: u64) -> (usize, DetectionRun) {
    let pairs = generate_emissions(&sparse_source(seed)).unwrap();
    let config = ApparatusConfig {
        physics_model: model,
        splitter_transmittance: transmittance,
        ..ApparatusConfig::default()
    };
    (pairs.len(), detect(&pairs, &config, seed).unwrap())
}

/// Per pair: which channels fired at least once.
fn fired(n: usize, run: &DetectionRun) -> Vec<[bool; 3]> {
    let mut f = vec![[false; 3]; n];
    for e in &run.events {
        f[e.pair_id as usize][e.channel.index()] = true;
    }
    f
}

fn within_sigmas(observed: f64, expected: f64, n: f64, k: f64) -> bool {
    let se = (expected * (1.0 - expected) / n).sqrt();
    (observed - expected).abs() <= k * se
}

#[test]
fn copenhagen_routing_is_binomial() {
    let t = 0.3;
    let (n, run) = run(PhysicsModel::Copenhagen, t, 1);
    let f = fired(n, &run);
    let d0 = f.iter().filter(|x| x[0]).count() as f64;
    assert!(within_sigmas(d0 / n as f64, 0.95, n as f64, 5.0));
    let d1 = f.iter().filter(|x| x[1]).count() as f64;
    let d2 = f.iter().filter(|x| x[2]).count() as f64;
    assert!(within_sigmas(d1 / n as f64, t * 0.9, n as f64, 5.0), "{}", d1 / n as f64);
    assert!(within_sigmas(d2 / n as f64, (1.0 - t) * 0.9, n as f64, 5.0), "{}", d2 / n as f64);
    assert!(f.iter().all(|x| !(x[1] && x[2])));
}

#[test]
fn copenhagen_one_event_per_detector_per_pair() {
    let (n, run) = run(PhysicsModel::Copenhagen, 0.5, 2);
    let mut seen = vec![[0u8; 3]; n];
    for e in &run.events {
        seen[e.pair_id as usize][e.channel.index()] += 1;
    }
    assert!(seen.iter().flatten().all(|&c| c <= 1));
}

#[test]
fn planck_detectors_fire_independently() {
    let (n, run) = run(PhysicsModel::Planck, 0.5, 3);
    let f = fired(n, &run);
    let nf = n as f64;
    let p1 = f.iter().filter(|x| x[1]).count() as f64 / nf;
    let p2 = f.iter().filter(|x| x[2]).count() as f64 / nf;
    let p12 = f.iter().filter(|x| x[1] && x[2]).count() as f64 / nf;
    assert!(p1 > 0.1 && p2 > 0.1, "{p1} {p2}");
    assert!(within_sigmas(p12, p1 * p2, nf, 5.0), "p12 {p12} vs {}", p1 * p2);
}

#[test]
fn planck_symmetric_splitter_gives_equal_rates() {
    let (n, run) = run(PhysicsModel::Planck, 0.5, 4);
    let c = run.streams.counts();
    let (a, b) = (c[1] as f64, c[2] as f64);
    assert!((a - b).abs() < 5.0 * (a + b).sqrt(), "{a} {b} of {n}");
}

#[test]
fn planck_never_creates_energy() {
    let (_, run) = run(PhysicsModel::Planck, 0.5, 5);
    for account in run.energy.unwrap() {
        assert!(account.max_fill_ratio <= 1.0 + 1e-12);
    }
}

#[test]
fn full_transmission_starves_d2() {
    for model in [PhysicsModel::Copenhagen, PhysicsModel::Planck] {
        let (_, run) = run(model, 1.0, 6);
        assert_eq!(run.streams.channel(Channel::D2).len(), 0);
        assert!(!run.streams.channel(Channel::D1).is_empty());
    }
}

#[test]
fn dead_time_enforces_minimum_gap() {
    let pairs = generate_emissions(&SourceConfig {
        mean_emission_rate: 1e7,
        run_duration: 1e-3,
        ..SourceConfig::default()
    })
    .unwrap();
    let dt = 50e-9;
    let config = ApparatusConfig {
        dead_time: [dt; 3],
        ..ApparatusConfig::default()
    };
    let run = detect(&pairs, &config, 7).unwrap();
    for ch in Channel::ALL {
        let ts = run.streams.channel(ch);
        assert!(ts.windows(2).all(|w| w[1] - w[0] >= dt));
        assert_eq!(dead_time_filter(ts, dt).unwrap(), ts);
    }
}
