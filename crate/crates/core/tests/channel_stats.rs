use morph::channel::{add_awgn, add_awgn_with, complex_gaussian, noise_variance};
use morph::codec::morph::{morph_symbol, SfSet};
use morph::features::augment_with_draw;
use morph::harness::{run_ser_sweep, Scheme, SweepConfig};
use morph::phy::{base_upchirp, ChirpConfig, gen_chirp, Sweep, DEFAULT_BW};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

// Upper 1% point of the chi-square distribution with 15 degrees of freedom.
const CHI2_15_P01: f64 = 30.578;

fn chi_square(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[test]
fn awgn_measured_snr_within_a_fifth_of_a_db() {
    let sig = gen_chirp(&ChirpConfig::new(12, DEFAULT_BW).unwrap().with_value(1234).unwrap(), Sweep::Up).unwrap();
    for seed in 0..100 {
        for target in [-30.0, -10.0, 5.0] {
            let rx = add_awgn(&sig, target, seed);
            let noise_power = rx
                .samples()
                .iter()
                .zip(sig.samples())
                .map(|(r, s)| (r - s).norm_sqr())
                .sum::<f64>()
                / sig.len() as f64;
            let measured = db(sig.power() / noise_power);
            assert!((measured - target).abs() <= 0.2, "seed {seed}: {measured} vs {target}");
        }
    }
}

#[test]
fn complex_noise_is_circular() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = complex_gaussian(200_000, 2.0, &mut rng);
    let len = n.len() as f64;
    let re2 = n.iter().map(|c| c.re * c.re).sum::<f64>() / len;
    let im2 = n.iter().map(|c| c.im * c.im).sum::<f64>() / len;
    let cross = n.iter().map(|c| c.re * c.im).sum::<f64>() / len;
    assert!((re2 - 1.0).abs() < 0.02 && (im2 - 1.0).abs() < 0.02);
    assert!(cross.abs() < 0.02);
    assert_eq!(noise_variance(2.0, 3.0), 2.0 / 10f64.powf(0.3));
}

#[test]
fn reference_power_sets_the_noise_level() {
    // an all-zero stream still gets noise referenced to the given power
    let zeros = morph::IqBuffer::zeros(50_000, DEFAULT_BW);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rx = add_awgn_with(&zeros, 1.0, -20.0, &mut rng);
    assert!((db(rx.power()) - 20.0).abs() < 0.1);
}

#[test]
fn dechirp_near_chance_at_minus_forty_db() {
    let curve = run_ser_sweep(&Scheme::Dechirp { sf: 12 }, &[-40.0], &SweepConfig::new(500, 4)).unwrap();
    assert!(curve.points[0].ser > 0.95, "SER {}", curve.points[0].ser);
}

#[test]
fn augmentation_phase_is_uniform() {
    let sym = morph_symbol(2, SfSet::SH9_12, DEFAULT_BW).unwrap();
    let short = sym.slice(0..64);
    let mut bins = [0usize; 16];
    for seed in 0..10_000 {
        let (_, d) = augment_with_draw(&short, (0.0, 0.0), seed).unwrap();
        assert!((0.0..2.0 * PI).contains(&d.phase_rad));
        bins[(d.phase_rad / (2.0 * PI) * 16.0) as usize] += 1;
    }
    let x2 = chi_square(&bins);
    assert!(x2 < CHI2_15_P01, "chi2 {x2}");
}

#[test]
fn augmentation_snr_is_uniform() {
    let sym = base_upchirp(7, DEFAULT_BW).unwrap();
    let mut bins = [0usize; 16];
    for seed in 0..10_000 {
        let (_, d) = augment_with_draw(&sym, (-50.0, 20.0), seed).unwrap();
        assert!((-50.0..20.0).contains(&d.snr_db));
        bins[((d.snr_db + 50.0) / 70.0 * 16.0) as usize] += 1;
    }
    let x2 = chi_square(&bins);
    assert!(x2 < CHI2_15_P01, "chi2 {x2}");
}

#[test]
fn augmentation_applies_the_drawn_phase() {
    let sym = base_upchirp(8, DEFAULT_BW).unwrap();
    let (out, d) = augment_with_draw(&sym, (300.0, 300.0), 21).unwrap();
    // at 300 dB the noise is negligible; the rotation is all that is left
    let rot: Complex64 = out.samples().iter().zip(sym.samples()).map(|(o, s)| o * s.conj()).sum();
    let diff = (rot.arg() - d.phase_rad + PI).rem_euclid(2.0 * PI) - PI;
    assert!(diff.abs() < 1e-9);
}
