mod common;

use beamsplit::source::{expected_overlap_probability, generate_emissions, EnvelopeSpec, SourceConfig};

fn config(rate: f64, duration: f64, seed: u64) -> SourceConfig {
    SourceConfig {
        mean_emission_rate: rate,
        run_duration: duration,
        rng_seed: seed,
        ..SourceConfig::default()
    }
}

#[test]
fn gaps_are_exponential() {
    let rate = 1e4;
    let pairs = generate_emissions(&config(rate, 10.0, 11)).unwrap();
    let mut gaps: Vec<f64> = pairs.windows(2).map(|w| w[1].emission_time - w[0].emission_time).collect();
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let d = gaps
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-rate * x).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov critical value at the 1% level
    assert!(d < 1.628 / n.sqrt(), "KS D = {d}");
}

#[test]
fn count_within_five_sigma() {
    for seed in 0..5 {
        let c = config(2_000.0, 50.0, seed);
        let n = generate_emissions(&c).unwrap().len() as f64;
        let mean = c.mean_emission_rate * c.run_duration;
        assert!((n - mean).abs() < 5.0 * mean.sqrt(), "seed {seed}: {n}");
    }
}

#[test]
fn emissions_sorted_with_sequential_ids_inside_run() {
    let c = config(5_000.0, 30.0, 3);
    let pairs = generate_emissions(&c).unwrap();
    assert!(pairs.windows(2).all(|w| w[0].emission_time < w[1].emission_time));
    assert!(pairs.iter().enumerate().all(|(i, p)| p.pair_id == i as u64));
    assert!(pairs.iter().all(|p| p.emission_time >= 0.0 && p.emission_time <= c.run_duration));
}

#[test]
fn independent_of_thread_count() {
    let c = config(3e5, 1.0, 9);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| generate_emissions(&c).unwrap());
    let b = four.install(|| generate_emissions(&c).unwrap());
    assert_eq!(a, b);
}

#[test]
fn empirical_overlap_matches_p0() {
    let c = config(2e5, 5.0, 21);
    let alpha = 10e-9;
    let reach = 2.0 * alpha + c.packet_support();
    let t: Vec<f64> = generate_emissions(&c).unwrap().iter().map(|p| p.emission_time).collect();
    // skip the edges, where neighbours are cut off by the run boundaries
    let inner: Vec<usize> = (0..t.len()).filter(|&i| t[i] > 1e-3 && t[i] < c.run_duration - 1e-3).collect();
    let close = inner
        .iter()
        .filter(|&&i| (i > 0 && t[i] - t[i - 1] <= reach) || (i + 1 < t.len() && t[i + 1] - t[i] <= reach))
        .count() as f64;
    let n = inner.len() as f64;
    let observed = close / n;
    let p0 = expected_overlap_probability(&c, alpha).unwrap();
    let se = (p0 * (1.0 - p0) / n).sqrt();
    assert!((observed - p0).abs() < 5.0 * se, "observed {observed}, p0 {p0}");
}

#[test]
fn energy_matches_quadrature() {
    for (sigma, a) in [(1e-9, 1.0), (3e-12, 2.5), (0.7, 0.3)] {
        let e = EnvelopeSpec::gaussian(sigma, a).energy();
        let q = common::gaussian_energy_by_quadrature(sigma, a, 100_000);
        assert!((e - q).abs() < 1e-9 * q, "{e} vs {q}");
    }
    let r = EnvelopeSpec::rectangular(4e-9, 2.0);
    assert!((r.energy() - 16e-9).abs() < 1e-24);
}

#[test]
fn sampled_offsets_follow_profile() {
    use rand::SeedableRng;
    let env = EnvelopeSpec::gaussian(1.0, 1.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| env.sample_offset(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(xs.iter().all(|x| x.abs() <= 4.0));
    assert!(mean.abs() < 5.0 / (n as f64).sqrt());
    assert!((var - env.profile_variance()).abs() < 0.02);
}
