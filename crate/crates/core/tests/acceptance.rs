//! Acceptance gate. Each test prints one `PASS`/`FAIL` line, then asserts.
//!
//! Tests hold a shared lock so wall-clock limits are measured without
//! interference from the other criteria.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use integral_sampler::arith::{ceil_log2, load_parameter_set, GaussianParams, ParameterSet, RingParams};
use integral_sampler::datapath::{
    run_integrated_with, run_standalone_with, Algorithm, Component, Datapath, SamplerTables,
};
use integral_sampler::ntt::{schoolbook_negacyclic, NttPlan, Polynomial};
use integral_sampler::rlwe::{Hooks, KeyPair, Rlwe};
use integral_sampler::rng::BitSource;
use integral_sampler::sampler_ky::{
    build_probability_matrix, ky_sample, ky_sample_exhaustive_check, ky_sample_many, ky_sample_with, KyError,
    KyOptions, NativeKy, ProbabilityMatrix,
};
use integral_sampler::sampler_zig::{build_ziggurat_table, zig_sample_many, NativeZig, SigmaClass, ZigguratTable};
use integral_sampler::stats::{chi_square, tv_distance, EmpiricalHistogram, TargetDistribution, DEFAULT_MIN_EXPECTED};
use num_rational::Ratio;

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written to the stdout handle rather than `println!`, so the line survives output capture.
fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stdout().lock(), "\n{line}");
    assert!(pass, "{id} failed: {detail}");
}

fn set(name: &str) -> ParameterSet {
    load_parameter_set(name).unwrap()
}

// Thresholds.
const C1_PAIRS: usize = 200;
const C1_LIMIT: Duration = Duration::from_secs(60);
const C2_RANDOM_K: usize = 1000;
const C4_LIMIT: Duration = Duration::from_secs(120);
const C4_COUNT: usize = 10_000;
const DIST_SAMPLES: usize = 1_000_000;
const DIST_SEEDS: u64 = 20;
const DIST_TV: f64 = 3e-3;
const DIST_P: f64 = 1e-3;
const DIST_MIN_PASSING: usize = 19;
const DIST_LIMIT: Duration = Duration::from_secs(600);
const C7_TV: f64 = 3e-3;
const C9_STEPS: u64 = 1_000_000;
const C9_TRIALS: u64 = 10_000;
const C10_TRIALS: usize = 1000;
const C10_RATE: f64 = 0.99;

#[test]
fn c1_ntt_matches_schoolbook() {
    let _g = gate();
    let start = Instant::now();
    let mut mismatches = 0;
    let mut cases = 0;
    for n in [8usize, 64, 256, 512] {
        for q in [4093u64, 12289] {
            let plan = NttPlan::new(&RingParams::new(n, q).unwrap());
            let mut src = BitSource::new((n as u64) << 32 | q);
            for _ in 0..C1_PAIRS {
                let a = Polynomial {
                    q,
                    coeffs: (0..n).map(|_| src.uniform_below(q - 1)).collect(),
                };
                let b = Polynomial {
                    q,
                    coeffs: (0..n).map(|_| src.uniform_below(q - 1)).collect(),
                };
                mismatches += usize::from(plan.poly_mul(&a, &b).unwrap() != schoolbook_negacyclic(&a, &b));
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "C1",
        mismatches == 0 && elapsed < C1_LIMIT,
        format!("{cases} products over n in {{8,64,256,512}} x q in {{4093,12289}}, {mismatches} mismatches, {elapsed:.1?}"),
    );
}

#[test]
fn c2_wide_mul_fidelity() {
    let _g = gate();
    let mut wrong = 0;
    let mut bad_counts = 0;
    let mut calls = 0;
    for name in ["LP", "BLISS"] {
        let s = set(name);
        let mut dp = Datapath::new(&s.ring);
        dp.configure_for_zig(ceil_log2(s.gauss.max_value + 1)).unwrap();
        let mut src = BitSource::new(2);
        for x in 0..=31u64 {
            for _ in 0..C2_RANDOM_K {
                let k = src.next_bits(64) as u64;
                let before = dp.report().get(Component::SamplerControl).clone();
                wrong += usize::from(dp.wide_mul(k, x).unwrap() != k as u128 * x as u128);
                let after = dp.report().get(Component::SamplerControl);
                if name == "LP" && (after.mul_ops - before.mul_ops, after.add_ops - before.add_ops) != (6, 5) {
                    bad_counts += 1;
                }
                calls += 1;
            }
        }
    }
    verdict(
        "C2",
        wrong == 0 && bad_counts == 0,
        format!("{calls} wide multiplies (x in 0..=31, {C2_RANDOM_K} k each, LP and BLISS plans), {wrong} wrong, {bad_counts} LP calls not 6 mul + 5 add"),
    );
}

#[test]
fn c3_multiplier_offload() {
    let _g = gate();
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["LP", "BLISS"] {
        let s = set(name);
        let zig = SamplerTables::build(Algorithm::Zig, &s, 64).unwrap();
        let (_, integrated) = run_integrated_with(&zig, &s.ring, 10_000, 1).unwrap();
        let (_, standalone) = run_standalone_with(&zig, 10_000, 1).unwrap();
        let zi = integrated.get(Component::SamplerControl).dedicated_muls;
        let zs = standalone.get(Component::SamplerControl).dedicated_muls;
        let ky = SamplerTables::build(Algorithm::Ky, &s, 64).unwrap();
        let (_, ky_report) = run_integrated_with(&ky, &s.ring, 10_000, 1).unwrap();
        let ky_muls: u64 = ky_report.components.values().map(|u| u.mul_ops).sum();
        pass &= zi == 0 && zs > 0 && ky_muls == 0;
        lines.push(format!("{name}: zig dedicated integrated {zi} / standalone {zs}, ky mul ops {ky_muls}"));
    }
    verdict("C3", pass, lines.join("; "));
}

#[test]
fn c4_integrated_bit_exact() {
    let _g = gate();
    let start = Instant::now();
    let mut triples = 0;
    let mut differing = Vec::new();
    for name in ["LP", "BLISS"] {
        let s = set(name);
        for alg in [Algorithm::Ky, Algorithm::Zig] {
            let tables = SamplerTables::build(alg, &s, 64).unwrap();
            for seed in 1..=5u64 {
                let (a, _) = run_integrated_with(&tables, &s.ring, C4_COUNT, seed).unwrap();
                let (b, _) = run_standalone_with(&tables, C4_COUNT, seed).unwrap();
                if a != b {
                    differing.push(format!("{alg:?}/{name}/{seed}"));
                }
                triples += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "C4",
        triples >= 20 && differing.is_empty() && elapsed < C4_LIMIT,
        format!("{triples} (alg, params, seed) triples of {C4_COUNT} samples, differing {differing:?}, {elapsed:.1?}"),
    );
}

struct DistResult {
    worst_tv: f64,
    tv_seed1: f64,
    passing_chi: usize,
}

fn distribution_sweep(name: &str, mut draw: impl FnMut(u64) -> Vec<i64>) -> DistResult {
    let g = set(name).gauss;
    let t = TargetDistribution::new(&g);
    let mut res = DistResult {
        worst_tv: 0.0,
        tv_seed1: f64::NAN,
        passing_chi: 0,
    };
    for seed in 1..=DIST_SEEDS {
        let h = EmpiricalHistogram::from_samples(&draw(seed), g.max_value).unwrap();
        let tv = tv_distance(&h, &t).unwrap();
        if seed == 1 {
            res.tv_seed1 = tv;
        }
        res.worst_tv = res.worst_tv.max(tv);
        let chi = chi_square(&h, &t, DEFAULT_MIN_EXPECTED).unwrap();
        res.passing_chi += usize::from(chi.p > DIST_P);
    }
    res
}

fn distribution_verdict(id: &str, results: &[(&str, DistResult)], elapsed: Duration) {
    let mut pass = elapsed < DIST_LIMIT;
    let mut parts = Vec::new();
    for (name, r) in results {
        pass &= r.worst_tv < DIST_TV && r.passing_chi >= DIST_MIN_PASSING;
        parts.push(format!(
            "{name}: TV seed 1 {:.5}, worst TV {:.5} (< {DIST_TV}), chi2 p > {DIST_P} in {}/{DIST_SEEDS}",
            r.tv_seed1, r.worst_tv, r.passing_chi
        ));
    }
    parts.push(format!("{elapsed:.1?}"));
    verdict(id, pass, parts.join("; "));
}

#[test]
fn c5_knuth_yao_distribution() {
    let _g = gate();
    let start = Instant::now();
    let mut results = Vec::new();
    for name in ["LP", "BLISS"] {
        let pm = build_probability_matrix(&set(name).gauss).unwrap();
        let r = distribution_sweep(name, |seed| ky_sample_many(&pm, &mut BitSource::new(seed), DIST_SAMPLES).unwrap());
        results.push((name, r));
    }
    distribution_verdict("C5", &results, start.elapsed());
}

#[test]
fn c6_ziggurat_distribution() {
    let _g = gate();
    let start = Instant::now();
    let mut results = Vec::new();
    for name in ["LP", "BLISS"] {
        let table = build_ziggurat_table(&set(name).gauss, 64).unwrap();
        let r = distribution_sweep(name, |seed| zig_sample_many(&table, &mut BitSource::new(seed), DIST_SAMPLES).unwrap());
        results.push((name, r));
    }
    distribution_verdict("C6", &results, start.elapsed());
}

fn small_matrices() -> Vec<(String, ProbabilityMatrix)> {
    let mut out = Vec::new();
    for (sigma, tail, lambda) in [(1.0, 3.0, 8), (1.5, 4.0, 10), (2.0, 3.5, 12)] {
        let g = GaussianParams::new(sigma, tail, lambda).unwrap();
        out.push((format!("sigma {sigma} lambda {lambda}"), build_probability_matrix(&g).unwrap()));
    }
    let hand: [&[&str]; 2] = [
        &["0110", "0101", "0001"],
        &["011111111111", "001000000000", "000100000000", "000010000000", "000000000001"],
    ];
    for rows in hand {
        out.push((format!("hand {}x{}", rows.len(), rows[0].len()), ProbabilityMatrix::from_bit_strings(rows).unwrap()));
    }
    out
}

#[test]
fn c7_knuth_yao_small_oracle() {
    let _g = gate();
    let mut pass = true;
    let mut parts = Vec::new();
    let matrices = small_matrices();
    for (label, pm) in &matrices {
        assert!(pm.n_rows() <= 8 && pm.lambda <= 12);
        let exact = ky_sample_exhaustive_check(pm, 4000).unwrap();
        let samples = ky_sample_many(pm, &mut BitSource::new(7), DIST_SAMPLES).unwrap();
        let mv = pm.max_value() as i64;
        let mut counts = vec![0u64; exact.len()];
        for v in samples {
            counts[(v + mv) as usize] += 1;
        }
        let tv = 0.5
            * counts
                .iter()
                .zip(&exact)
                .map(|(&c, &p)| (c as f64 / DIST_SAMPLES as f64 - p).abs())
                .sum::<f64>();
        pass &= tv < C7_TV;
        parts.push(format!("{label}: TV {tv:.5}"));
    }
    verdict(
        "C7",
        pass && matrices.len() >= 5,
        format!("{} matrices, 10^6 draws each vs exhaustive walk (< {C7_TV}): {}", matrices.len(), parts.join(", ")),
    );
}

type Q = Ratio<i128>;

/// Decision for one tuple, evaluated on exact rationals in units of the peak height.
fn rational_decision(t: &ZigguratTable, i: usize, x: u64, b: u8, y: u64) -> bool {
    let scale = Q::from_integer(1i128 << t.lambda);
    let r = |raw: u128| Q::from_integer(raw as i128) / scale;
    let yb = |j: usize| r(t.y_bar[j]);
    let curve = if x == 0 { Q::from_integer(1) } else { r(t.px[x as usize]) };
    // Height of the point above the rectangle floor.
    let h = Q::from_integer(y as i128) / scale * (yb(i - 1) - yb(i));
    let under = curve >= yb(i) && h <= curve - yb(i);

    let (xa, xb) = (t.x_floor[i - 1], t.x_floor[i]);
    if 0 < x && x <= xa {
        return true;
    }
    if x == 0 {
        return b == 0 && (i > 1 || under);
    }
    if xa == xb {
        return under;
    }
    let top = if i == 1 { Q::from_integer(1) } else { yb(i - 1) };
    let dx = (xb - xa) as i128;
    // Integer slope of the chord in raw units, truncated toward zero.
    let k = ((yb(i) - top) * scale / Q::from_integer(dx)).trunc();
    let line = -k * Q::from_integer((xb - x) as i128) / scale;
    match t.sigma_class[i - 1] {
        SigmaClass::Concave => h <= line || under,
        SigmaClass::Convex => {
            let over_a = t.px[xa as usize].saturating_sub(t.y_bar[i - 1]);
            let over_b = t.px[xb as usize].saturating_sub(t.y_bar[i]);
            let lift = r(over_a.max(over_b) + dx as u128 + 2);
            h < line + lift && under
        }
        SigmaClass::Straddle => under,
    }
}

/// The point lies on or under the stored curve; zero with `b = 1` is the mirrored duplicate.
fn under_curve_truth(t: &ZigguratTable, i: usize, x: u64, b: u8, y: u64) -> bool {
    if x == 0 && b == 1 {
        return false;
    }
    let curve = if x == 0 { 1u128 << t.lambda } else { t.px[x as usize] };
    curve >= t.y_bar[i] && y as u128 * (t.y_bar[i - 1] - t.y_bar[i]) <= (curve - t.y_bar[i]) << t.lambda
}

#[test]
fn c8_ziggurat_decision_oracle() {
    let _g = gate();
    let g = GaussianParams::new(1.2, 9.0, 16).unwrap();
    let t = build_ziggurat_table(&g, 4).unwrap();
    let lp = set("LP");
    let mut dp = Datapath::new(&lp.ring);
    dp.configure_for_zig(ceil_log2(t.max_value() + 1)).unwrap();
    let (mut tuples, mut vs_rational, mut vs_datapath, mut vs_truth) = (0u64, 0u64, 0u64, 0u64);
    for i in 1..=t.m {
        for x in 0..=t.x_floor[i] {
            for b in 0..2u8 {
                for y in 0..1u64 << t.lambda {
                    let d = t.decide(i, x, b, y, &mut NativeZig).unwrap();
                    vs_rational += u64::from(d != rational_decision(&t, i, x, b, y));
                    vs_datapath += u64::from(d != t.decide(i, x, b, y, &mut dp).unwrap());
                    vs_truth += u64::from(d != under_curve_truth(&t, i, x, b, y));
                    tuples += 1;
                }
            }
        }
    }
    verdict(
        "C8",
        vs_rational == 0 && vs_datapath == 0 && vs_truth == 0,
        format!(
            "{tuples} (i, x, y', b) tuples on sigma 1.2, m 4, lambda 16 (x_floor {:?}): {vs_rational} differ from the rational evaluation, {vs_datapath} from the datapath run, {vs_truth} from the under-curve test",
            t.x_floor
        ),
    );
}

#[test]
fn c9_register_bound_and_early_stop() {
    let _g = gate();
    let s = set("BLISS");
    let pm = build_probability_matrix(&s.gauss).unwrap();
    let mut steps = 0u64;
    let mut violations = 0u64;
    let mut src = BitSource::new(9);
    while steps < C9_STEPS {
        match ky_sample(&pm, &mut src) {
            Ok(sample) => steps += sample.steps,
            Err(KyError::WalkBound { .. }) => violations += 1,
            Err(e) => panic!("{e}"),
        }
    }
    // The same walk on the d_width-bit cascaded register.
    let mut dp = Datapath::new(&s.ring);
    dp.configure_for_ky().unwrap();
    let mut dp_steps = 0u64;
    let mut dp_src = BitSource::new(9);
    while dp_steps < C9_STEPS {
        match ky_sample_with(&pm, &mut dp_src, &mut dp, KyOptions::default()) {
            Ok(sample) => dp_steps += sample.steps,
            Err(_) => violations += 1,
        }
    }
    let mut differing = 0u64;
    for trial in 0..C9_TRIALS {
        let with = ky_sample_with(&pm, &mut BitSource::new(trial), &mut NativeKy, KyOptions { early_stop: true }).unwrap();
        let without =
            ky_sample_with(&pm, &mut BitSource::new(trial), &mut NativeKy, KyOptions { early_stop: false }).unwrap();
        differing += u64::from(with.value != without.value);
    }
    verdict(
        "C9",
        violations == 0 && differing == 0,
        format!(
            "{steps} native + {dp_steps} datapath column steps at BLISS (hd_sum {}, d_width {}), {violations} bound violations; early-stop differential: {differing}/{C9_TRIALS} trials differ",
            pm.hd_sum, pm.d_width
        ),
    );
}

#[test]
fn c10_rlwe_round_trip() {
    let _g = gate();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["LP", "BLISS"] {
        let params = set(name);
        let tables = SamplerTables::build(Algorithm::Ky, &params, 64).unwrap();
        let r = Rlwe::new(params, tables);
        let mut src = BitSource::new(1);
        let (mut ok, mut bad_keys) = (0usize, 0usize);
        for _ in 0..C10_TRIALS {
            let (public, secret, e) = r.make_rlwe_sample(&mut src, Hooks::NONE).unwrap();
            bad_keys += usize::from(public.b.sub(&schoolbook_negacyclic(&public.a, &secret)) != e);
            let keys = KeyPair { public, secret };
            let m = r.random_message(&mut src);
            let ct = r.encrypt(&keys.public, &m, &mut src, Hooks::NONE).unwrap();
            ok += usize::from(r.decrypt(&keys.secret, &ct).unwrap() == m);
        }
        let rate = ok as f64 / C10_TRIALS as f64;
        pass &= rate >= C10_RATE && bad_keys == 0;
        parts.push(format!("{name}: {ok}/{C10_TRIALS} round trips (>= {C10_RATE}), {bad_keys} keygens with b - a s != e"));
    }
    verdict("C10", pass, parts.join("; "));
}
