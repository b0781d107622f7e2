use integral_sampler::arith::{load_parameter_set, GaussianParams};
use integral_sampler::rng::BitSource;
use integral_sampler::sampler_ky::{build_probability_matrix, ky_sample_many};
use integral_sampler::sampler_zig::{build_ziggurat_table, zig_sample_many};
use integral_sampler::stats::{
    chi_square, format_samples, moment_check, parse_samples, tv_distance, validate, EmpiricalHistogram,
    StatsError, TargetDistribution, DEFAULT_MIN_EXPECTED,
};
use proptest::prelude::*;

/// `exp(-v^2 / 2 sigma^2)` normalised over the support in plain f64.
fn f64_oracle(sigma: f64, max_value: i64) -> Vec<f64> {
    let rho: Vec<f64> = (-max_value..=max_value)
        .map(|v| (-((v * v) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = rho.iter().sum();
    rho.iter().map(|r| r / total).collect()
}

fn custom_target(probs: Vec<f64>) -> TargetDistribution {
    let max_value = (probs.len() as u64 - 1) / 2;
    TargetDistribution {
        sigma: 1.0,
        max_value,
        fixed: vec![0; probs.len()],
        probs,
    }
}

fn histogram(counts: Vec<u64>) -> EmpiricalHistogram {
    let total = counts.iter().sum();
    EmpiricalHistogram {
        max_value: (counts.len() as u64 - 1) / 2,
        counts,
        total,
    }
}

#[test]
fn target_matches_f64_oracle() {
    for name in ["LP", "BLISS"] {
        let g = load_parameter_set(name).unwrap().gauss;
        let t = TargetDistribution::new(&g);
        let oracle = f64_oracle(g.sigma, g.max_value as i64);
        assert_eq!(t.probs.len(), oracle.len());
        for (p, o) in t.probs.iter().zip(&oracle) {
            assert!((p - o).abs() <= 1e-12 * o.max(1e-300), "{name}: {p} vs {o}");
        }
    }
}

#[test]
fn target_on_thirty_value_support_sums_to_one() {
    // Tail factor chosen so that floor(tail * 3.33) = 30.
    let g = GaussianParams::new(3.33, 9.01, 64).unwrap();
    assert_eq!(g.max_value, 30);
    let t = TargetDistribution::new(&g);
    assert_eq!(t.fixed.len(), 61);
    let sum: u128 = t.fixed.iter().sum();
    assert!(sum <= 1u128 << 127);
    // Each floor loses < 1 unit of 2^-127; 61 units is far below 2^(127-100).
    assert!((1u128 << 127) - sum < 1u128 << 27);
    assert_eq!(t.deficit_fixed(), (1u128 << 127) - sum);
}

#[test]
fn target_is_symmetric_and_fixed_agrees_with_float() {
    let t = TargetDistribution::new(&load_parameter_set("LP").unwrap().gauss);
    let n = t.fixed.len();
    for i in 0..n {
        assert_eq!(t.fixed[i], t.fixed[n - 1 - i]);
        let from_fixed = t.fixed[i] as f64 / 2f64.powi(127);
        assert!((from_fixed - t.probs[i]).abs() <= 1e-15 * t.probs[i].max(1e-300));
    }
}

#[test]
fn tv_extremal_case_is_half() {
    let t = custom_target(vec![0.5, 0.0, 0.5]);
    let h = histogram(vec![10, 0, 0]);
    assert_eq!(tv_distance(&h, &t).unwrap(), 0.5);
}

#[test]
fn tv_zero_for_exact_proportions() {
    let t = custom_target(vec![0.25, 0.5, 0.25]);
    assert_eq!(tv_distance(&histogram(vec![4, 8, 4]), &t).unwrap(), 0.0);
}

#[test]
fn empty_and_mismatched_histograms_rejected() {
    let t = custom_target(vec![0.25, 0.5, 0.25]);
    assert!(matches!(tv_distance(&histogram(vec![0, 0, 0]), &t), Err(StatsError::EmptyHistogram)));
    assert!(matches!(
        tv_distance(&histogram(vec![1, 1, 1, 1, 1]), &t),
        Err(StatsError::SupportMismatch)
    ));
    assert!(matches!(
        chi_square(&histogram(vec![1, 1, 1]), &t, 100.0),
        Err(StatsError::InsufficientBins)
    ));
}

#[test]
fn symmetric_histogram_has_zero_mean() {
    let t = TargetDistribution::new(&load_parameter_set("LP").unwrap().gauss);
    let mut counts = vec![0u64; 59];
    for v in 0..30usize {
        counts[29 + v] = 1000 - 30 * v as u64;
        counts[29 - v] = 1000 - 30 * v as u64;
    }
    let m = moment_check(&histogram(counts), &t).unwrap();
    assert_eq!(m.mean, 0.0);
    assert_eq!(m.z_mean, 0.0);
}

#[test]
fn histogram_merge_equals_whole() {
    let samples: Vec<i64> = (0..1000).map(|i| (i % 7) - 3).collect();
    let whole = EmpiricalHistogram::from_samples(&samples, 5).unwrap();
    let mut merged = EmpiricalHistogram::from_samples(&samples[..400], 5).unwrap();
    merged.merge(&EmpiricalHistogram::from_samples(&samples[400..], 5).unwrap()).unwrap();
    assert_eq!(merged, whole);
    assert_eq!(whole.counts.iter().sum::<u64>(), whole.total);
    assert!(EmpiricalHistogram::from_samples(&[6], 5).is_err());
}

#[test]
fn sample_text_round_trip() {
    let samples = vec![0, -29, 29, 5, -1];
    assert_eq!(parse_samples(&format_samples(&samples)).unwrap(), samples);
    assert!(parse_samples("1\nx\n").is_err());
}

#[test]
fn ky_lp_million_samples() {
    let g = load_parameter_set("LP").unwrap().gauss;
    let pm = build_probability_matrix(&g).unwrap();
    let samples = ky_sample_many(&pm, &mut BitSource::new(1), 1_000_000).unwrap();
    let h = EmpiricalHistogram::from_samples(&samples, g.max_value).unwrap();
    let t = TargetDistribution::new(&g);
    let report = validate(&h, &t).unwrap();
    assert!(report.tv < 2e-3, "tv {}", report.tv);
    assert!(report.chi2.p > 1e-3, "{:?}", report.chi2);
}

#[test]
fn chi_square_detects_wrong_sigma() {
    let g = load_parameter_set("LP").unwrap().gauss;
    let pm = build_probability_matrix(&g).unwrap();
    let samples = ky_sample_many(&pm, &mut BitSource::new(4), 1_000_000).unwrap();
    let h = EmpiricalHistogram::from_samples(&samples, g.max_value).unwrap();
    // Same support [-29, 29], sigma 4.0.
    let wrong = GaussianParams::new(4.0, 7.25, 64).unwrap();
    assert_eq!(wrong.max_value, g.max_value);
    let chi = chi_square(&h, &TargetDistribution::new(&wrong), DEFAULT_MIN_EXPECTED).unwrap();
    assert!(chi.p < 1e-6, "{chi:?}");
}

#[test]
fn zig_bliss_moments() {
    let g = load_parameter_set("BLISS").unwrap().gauss;
    let table = build_ziggurat_table(&g, 64).unwrap();
    let samples = zig_sample_many(&table, &mut BitSource::new(1), 1_000_000).unwrap();
    let h = EmpiricalHistogram::from_samples(&samples, g.max_value).unwrap();
    let m = moment_check(&h, &TargetDistribution::new(&g)).unwrap();
    // 5 sigma / sqrt(10^6).
    assert!(m.mean.abs() < 5.0 * 215.73 / 1000.0, "{m:?}");
    assert!((m.std / m.target_std - 1.0).abs() < 0.01, "{m:?}");
}

fn weights() -> impl Strategy<Value = Vec<u64>> {
    (1usize..6).prop_flat_map(|k| prop::collection::vec(1u64..50, 2 * k + 1))
}

proptest! {
    #[test]
    fn tv_symmetric_between_normalised_pairs(a in weights(), seed: u64) {
        let mut src = BitSource::new(seed);
        let b: Vec<u64> = a.iter().map(|_| 1 + src.uniform_below(48)).collect();
        let norm = |w: &[u64]| {
            let s: u64 = w.iter().sum();
            w.iter().map(|&x| x as f64 / s as f64).collect::<Vec<_>>()
        };
        let ab = tv_distance(&histogram(a.clone()), &custom_target(norm(&b))).unwrap();
        let ba = tv_distance(&histogram(b.clone()), &custom_target(norm(&a))).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12, "{} {}", ab, ba);
    }

    #[test]
    fn chi_square_zero_iff_proportional(w in weights(), scale in 20u64..200, bump in 0usize..11) {
        let total: u64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|&x| x as f64 / total as f64).collect();
        let t = custom_target(probs);
        let counts: Vec<u64> = w.iter().map(|&x| x * scale).collect();
        let exact = chi_square(&histogram(counts.clone()), &t, 5.0).unwrap();
        prop_assert!(exact.stat < 1e-9, "{:?}", exact);

        // Move one sample between the first and last value, which never share a merged bin
        // because each value expects at least `scale >= 20` counts.
        let mut moved = counts;
        let last = moved.len() - 1;
        let (from, to) = if bump % 2 == 0 { (0, last) } else { (last, 0) };
        moved[from] -= 1;
        moved[to] += 1;
        let shifted = chi_square(&histogram(moved), &t, 5.0).unwrap();
        prop_assert!(shifted.stat > 1e-6, "{:?}", shifted);
    }
}
