//! Statistical checks of the channel generator and the front end against
//! closed-form moments.

use mdfeat_core::channel::{self, GeometryConfig, Location, Ray, ScenarioConfig};
use mdfeat_core::frontend::{self, SignalConfig};
use mdfeat_core::rng::rng_from_seed;
use num_complex::Complex;
use rand::Rng as _;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn target_cloud_is_centred() {
    let g = GeometryConfig::default();
    let mut rng = rng_from_seed(11);
    let pts: Vec<Location<f64>> = (0..100_000).map(|_| channel::sample_target_with(&mut rng, &g)).collect();
    for axis in [|p: &Location<f64>| p.x, |p: &Location<f64>| p.y, |p: &Location<f64>| p.z] {
        let m = mean(&pts.iter().map(axis).collect::<Vec<_>>());
        assert!(m.abs() < 0.05, "axis mean {m}");
    }
    assert!(pts.iter().all(|p| g.is_target_location(p)));
}

#[test]
fn cluster_counts_are_poisson() {
    let g = GeometryConfig::default();
    let mut rng = rng_from_seed(12);
    let res = ScenarioConfig::residential();
    let counts: Vec<f64> =
        (0..100_000).map(|_| channel::place_clusters_with::<f64>(&mut rng, &res, &g).len() as f64).collect();
    assert!((mean(&counts) - 3.0).abs() < 0.05, "{}", mean(&counts));

    let out = ScenarioConfig::outdoor();
    let counts: Vec<f64> =
        (0..100_000).map(|_| channel::place_clusters_with::<f64>(&mut rng, &out, &g).len() as f64).collect();
    assert!((var(&counts) - 12.0).abs() < 0.5, "{}", var(&counts));
}

#[test]
fn shadowing_is_zero_mean_in_db() {
    let mut rng = rng_from_seed(13);
    let db: Vec<f64> = (0..100_000).map(|_| channel::draw_shadowing_db(&mut rng, 3.0)).collect();
    assert!(mean(&db).abs() < 0.02, "{}", mean(&db));
    assert!((var(&db) - 3.0).abs() < 0.06);
}

#[test]
fn nakagami_mean_square_and_scaling() {
    let sc = ScenarioConfig::residential();
    let draw = |omega: f64| {
        let mut rng = rng_from_seed(14);
        (0..100_000)
            .map(|_| {
                let m = channel::draw_nakagami_shape(&mut rng, &sc);
                assert!(m >= 0.5);
                channel::draw_nakagami(&mut rng, m, omega).powi(2)
            })
            .collect::<Vec<f64>>()
    };
    let unit = draw(1.0);
    assert!((mean(&unit) - 1.0).abs() < 0.02, "{}", mean(&unit));
    let scaled = draw(9.0);
    assert!((mean(&scaled) / mean(&unit) - 9.0).abs() < 1e-9);
}

#[test]
fn ray_gaps_have_the_configured_mean() {
    let mut rng = rng_from_seed(15);
    let mut gaps = Vec::with_capacity(100_000);
    while gaps.len() < 100_000 {
        let t = channel::draw_ray_offsets(&mut rng, 11, 1.5);
        assert_eq!(t[0], 0.0);
        gaps.extend(t.windows(2).map(|w| (w[1] - w[0]) * 1e9));
    }
    assert!((mean(&gaps) - 1.5).abs() < 0.02, "{}", mean(&gaps));
}

#[test]
fn noise_variance_per_sample() {
    let sig = SignalConfig::default();
    let mut rng = rng_from_seed(16);
    let sigma2 = 3.7e-9;
    let mut acc = 0.0;
    let mut n = 0usize;
    while n < 1_000_000 {
        let w = channel::synthesize_with_pulse::<f64>(&[], &[Complex::new(1.0, 0.0)], &sig, sigma2, &mut rng).unwrap();
        acc += w.iter().map(|s| s.norm_sqr()).sum::<f64>();
        n += w.len();
    }
    let est = acc / n as f64;
    assert!((est / sigma2 - 1.0).abs() < 0.01, "{est}");
}

#[test]
fn energy_detector_noise_floor() {
    let sig = SignalConfig::default();
    let mut rng = rng_from_seed(17);
    let sigma2 = 2.0;
    let mut bins = Vec::new();
    while bins.len() < 100_000 {
        let w = channel::synthesize_with_pulse::<f64>(&[], &[Complex::new(1.0, 0.0)], &sig, sigma2, &mut rng).unwrap();
        bins.extend(frontend::energy_detect(&w, &sig).unwrap().0);
    }
    let expected = sig.integration * sigma2;
    assert!((mean(&bins) / expected - 1.0).abs() < 0.01);
}

fn ray_at(delay: f64, amplitude: f64, phase: f64) -> Ray<f64> {
    Ray { path: 0, ray: 0, path_delay: 0.0, ray_delay: 0.0, delay, mean_power: 1.0, amplitude, phase }
}

#[test]
fn energies_decompose_over_separated_rays() {
    let sig = SignalConfig::default();
    let ts = 1.0 / sig.sample_rate();
    let rays: Vec<Ray<f64>> = [(3, 0.7), (40, 1.3), (41, 0.2), (555, 2.0)]
        .iter()
        .map(|&(j, a)| ray_at(j as f64 * ts, a, 1.1 * j as f64))
        .collect();
    let mut rng = rng_from_seed(0);
    let w = channel::synthesize_with_pulse(&rays, &[Complex::new(1.0, 0.0)], &sig, 0.0, &mut rng).unwrap();
    let pdp = frontend::energy_detect(&w, &sig).unwrap();
    let expect: f64 = rays.iter().map(|r| r.amplitude.powi(2)).sum::<f64>() / sig.sample_rate();
    assert!((pdp.total() - expect).abs() < 1e-15 * expect.max(1.0));

    // one bin later
    let shifted: Vec<Ray<f64>> = rays.iter().map(|r| ray_at(r.delay + sig.integration, r.amplitude, r.phase)).collect();
    let w2 = channel::synthesize_with_pulse(&shifted, &[Complex::new(1.0, 0.0)], &sig, 0.0, &mut rng).unwrap();
    let pdp2 = frontend::energy_detect(&w2, &sig).unwrap();
    assert_eq!(pdp2.0[0], 0.0);
    for n in 1..pdp.len() {
        assert!((pdp2.0[n] - pdp.0[n - 1]).abs() <= 1e-15 * pdp.0[n - 1].max(1e-30));
    }
}

#[test]
fn matched_filter_gain_over_energy_detector() {
    let sig = SignalConfig::default();
    let len = 8;
    let pulse: Vec<Complex<f64>> = (0..len).map(|_| Complex::new(1.0 / (len as f64).sqrt(), 0.0)).collect();
    let a = 1.0;
    let sigma2 = a * a / 10f64.powf(0.5);
    let spb = sig.samples_per_bin().unwrap();
    let peak_bin = 20;
    let mut rng = rng_from_seed(18);
    let (mut ed_ratio, mut mf_ratio) = (0.0, 0.0);
    let trials = 1000;
    for _ in 0..trials {
        let ray = ray_at((peak_bin * spb) as f64 / sig.sample_rate(), a, rng.random::<f64>() * std::f64::consts::TAU);
        let w = channel::synthesize_with_pulse(&[ray], &pulse, &sig, sigma2, &mut rng).unwrap();
        for (pdp, acc) in [
            (frontend::energy_detect(&w, &sig).unwrap(), &mut ed_ratio),
            (frontend::matched_filter_detect(&w, &pulse, &sig).unwrap(), &mut mf_ratio),
        ] {
            let e = pdp.as_slice();
            let noise = e[50..].iter().sum::<f64>() / (e.len() - 50) as f64;
            *acc += e[peak_bin] / noise;
        }
    }
    assert!(mf_ratio >= ed_ratio, "MF {} < ED {}", mf_ratio / trials as f64, ed_ratio / trials as f64);
}

#[test]
fn calibration_scales_with_reference_power() {
    let g = GeometryConfig::default();
    let sc = ScenarioConfig::residential();
    let louder = ScenarioConfig { ref_power: sc.ref_power + 10.0 * 2f64.log10(), ..sc.clone() };
    let a: f64 = frontend::calibrate_noise(15.0, &g, &sc, 2000, 5).unwrap();
    let b: f64 = frontend::calibrate_noise(15.0, &g, &louder, 2000, 5).unwrap();
    assert!((b / a - 2.0).abs() < 1e-12);
    let unit: f64 = frontend::calibrate_noise(0.0, &g, &sc, 2000, 5).unwrap();
    assert!((unit / a - 10f64.powf(1.5)).abs() < 1e-9);
}

#[test]
fn removing_los_lowers_the_leading_bin() {
    let g = GeometryConfig::default();
    let sig = SignalConfig::default();
    let los = ScenarioConfig::residential();
    let nlos = los.clone().with_los(false);
    let (mut e_los, mut e_nlos) = (0.0, 0.0);
    for i in 0..300u64 {
        let target: Location<f64> = channel::sample_target(1000 + i, &g);
        let lead = |sc: &ScenarioConfig| {
            let ch = channel::draw_channel(i, &target, &g, sc).unwrap();
            if ch.max_delay() >= sig.frame {
                return 0.0;
            }
            let w = channel::synthesize_received(&ch, &sig, 0.0, i).unwrap();
            let pdp = frontend::energy_detect(&w[0], &sig).unwrap();
            let bin = (ch.sensors[0].distance / channel::SPEED_OF_LIGHT / sig.integration) as usize;
            pdp.0[bin]
        };
        e_los += lead(&los);
        e_nlos += lead(&nlos);
    }
    assert!(e_nlos < e_los, "{e_nlos} >= {e_los}");
}

#[test]
fn channel_and_waveform_are_deterministic() {
    let g = GeometryConfig::default();
    let sc = ScenarioConfig::outdoor();
    let sig = SignalConfig::default();
    let t: Location<f64> = channel::sample_target(3, &g);
    let a = channel::draw_channel(9, &t, &g, &sc).unwrap();
    let b = channel::draw_channel(9, &t, &g, &sc).unwrap();
    assert_eq!(a, b);
    if a.max_delay() < sig.frame {
        let wa = channel::synthesize_received(&a, &sig, 1e-9, 4).unwrap();
        let wb = channel::synthesize_received(&b, &sig, 1e-9, 4).unwrap();
        assert_eq!(wa, wb);
    }
}
