//! Library results against independent reference computations.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ssmcodec_core::entropy::{estimate_rate, gaussian_bin_mass, gaussian_masses, FactorizedPrior, SYMBOL_LIMIT};
use ssmcodec_core::metrics::{psnr_u8, quantize_deviation};
use ssmcodec_core::range_coder::CdfTable;
use ssmcodec_core::transforms::TransformConfig;
use ssmcodec_core::weights::Initializer;
use ssmcodec_core::Tensor;

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

#[test]
fn gaussian_mass_matches_numerical_integration() {
    for &sigma in &[0.11, 0.5, 1.0, 3.7, 40.0] {
        let pdf = |x: f64| (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        for k in -6..=6 {
            let want = simpson(pdf, k as f64 - 0.5, k as f64 + 0.5, 2000);
            let got = gaussian_bin_mass(k, sigma);
            assert!((got - want).abs() < 1e-10, "σ={sigma} k={k}: {got} vs {want}");
        }
    }
}

#[test]
fn gaussian_table_covers_the_alphabet() {
    for &sigma in &[0.11, 1.0, 256.0] {
        let m = gaussian_masses(sigma);
        assert_eq!(m.len(), (2 * SYMBOL_LIMIT + 1) as usize);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn factorized_mass_is_the_cdf_difference() {
    let mut src = Initializer::new(11, TransformConfig::tiny());
    let prior = FactorizedPrior::build(&mut src, "prior", 4).unwrap();
    for c in 0..4 {
        // Density by central differences integrates back to the bin mass.
        let h = 1e-4;
        let density = |x: f64| (prior.cdf(c, x + h) - prior.cdf(c, x - h)) / (2.0 * h);
        for k in -5..=5 {
            let want = simpson(density, k as f64 - 0.5, k as f64 + 0.5, 200);
            let got = prior.bin_mass(c, k);
            assert!((got - want).abs() < 1e-6, "c={c} k={k}: {got} vs {want}");
        }
        // The CDF is monotone.
        let mut last = 0.0;
        for i in -400..=400 {
            let v = prior.cdf(c, i as f64 * 0.05);
            assert!(v >= last);
            last = v;
        }
    }
}

#[test]
fn rate_estimate_matches_compensated_sum() {
    let mut rng = StdRng::seed_from_u64(3);
    let tables: Vec<CdfTable> = [0.2, 1.0, 9.0]
        .iter()
        .map(|&s| CdfTable::from_masses(-SYMBOL_LIMIT, &gaussian_masses(s)).unwrap())
        .collect();
    let ctx: Vec<&CdfTable> = (0..20_000).map(|i| &tables[i % 3]).collect();
    let syms: Vec<i32> = (0..20_000).map(|i| rng.random_range(-3..=3) * (i % 3)).collect();
    let got = estimate_rate(&syms, &ctx).unwrap();
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (&s, t) in syms.iter().zip(&ctx) {
        let lo = t.cdf()[(s - t.min_symbol()) as usize];
        let hi = t.cdf()[(s - t.min_symbol()) as usize + 1];
        let term = -((hi - lo) as f64 / 65536.0).log2() - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    assert!((got - sum).abs() < 1e-6 * sum, "{got} vs {sum}");
}

#[test]
fn psnr_matches_integer_oracle() {
    let mut rng = StdRng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(1..500);
        let a: Vec<u8> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<u8> = a.iter().map(|&v| v.saturating_add(rng.random_range(0..4))).collect();
        let sse: u64 = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64)
            .sum();
        let got = psnr_u8(&a, &b).unwrap();
        if sse == 0 {
            assert!(got.is_infinite());
        } else {
            let want = 10.0 * ((255.0f64 * 255.0 * n as f64) / sse as f64).log10();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn deviation_map_matches_direct_sum() {
    let mut rng = StdRng::seed_from_u64(5);
    let (h, w, c) = (5, 7, 6);
    let y = Tensor::from_fn([h, w, c], |_| rng.random_range(-4.0f32..4.0));
    let y_hat = y.map(|v| v.round());
    let dev = quantize_deviation(&y, &y_hat).unwrap();
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            let mut s = 0.0;
            for k in 0..c {
                let idx = (i * w + j) * c + k;
                s += (y.data()[idx] as f64 - y_hat.data()[idx] as f64).abs();
            }
            assert!((dev.map[i * w + j] - s / c as f64).abs() < 1e-12);
            total += s / c as f64;
        }
    }
    assert!((dev.mean - total / (h * w) as f64).abs() < 1e-12);
    let scaled = dev.scaled();
    assert!(scaled.iter().all(|v| (0.0..=1.0).contains(v)));
}
