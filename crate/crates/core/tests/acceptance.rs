//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use lorenc_core::attacks::{
    build_observations, finetune_recovery, least_squares_recovery, make_samples, spectral_detuning,
    suggested_learning_rate, FinetuneConfig, Scenario, SdtConfig,
};
use lorenc_core::container::{
    assemble_protected, read_container, split_artifacts, write_container, Container, ContainerError, ProtectedModel,
};
use lorenc_core::linalg::{gaussian_matrix, relative_fro_error, svd, Matrix};
use lorenc_core::metrics::{gram_offdiag_mass, overhead_report, w_error, LayerSet};
use lorenc_core::pipeline::{compensate, encrypt_adapter, extract_spectral_key, protect_layer, reparameterize};
use lorenc_core::synth::{gaussian_adapter, generate_model, spiked_weight, ModelSpec, Spike, SyntheticLayer};
use lorenc_core::{LoraAdapter, ProtectedLayer, Seed};

const R: usize = 8;
const DELTA_R: usize = 4;
const K: usize = 5;
const CONFIGS: u64 = 20;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

struct Config {
    name: String,
    w: Matrix,
    adapters: Vec<LoraAdapter>,
}

/// The shared random configurations: m, n ∈ [32, 128], r = 8, K = 5.
fn configs() -> Vec<Config> {
    (0..CONFIGS)
        .map(|i| {
            let mut rng = Seed(10_000 + i).rng();
            let m = rng.random_range(32..=128);
            let n = rng.random_range(32..=128);
            let w = spiked_weight(m, n, Some(Spike::default()), &mut rng).unwrap();
            let adapters = (0..K).map(|_| gaussian_adapter(m, n, R, 1.0, &mut rng)).collect();
            Config {
                name: format!("cfg{i:02}"),
                w,
                adapters,
            }
        })
        .collect()
}

fn protect(c: &Config, seed: u64) -> ProtectedLayer {
    protect_layer(&c.name, &c.w, &c.adapters, DELTA_R, Seed(seed)).unwrap()
}

/// Worst restore and forward errors of one protected layer against its baseline.
fn integrity_errors(c: &Config, layer: &ProtectedLayer, rng: &mut impl Rng) -> (f64, f64) {
    let mut worst_restore = 0.0f64;
    let mut worst_forward = 0.0f64;
    for (k, ad) in c.adapters.iter().enumerate() {
        let expected = c.w.add(&ad.product()).unwrap();
        let restored = layer.restore_merged(k).unwrap();
        worst_restore = worst_restore.max(relative_fro_error(&restored, &expected).unwrap());
        for _ in 0..3 {
            let x: Vec<f64> = gaussian_matrix(c.w.cols(), 1, 1.0, rng).into_vec();
            let y = layer.forward_authorized(k, &x).unwrap();
            let y_ref = expected.matvec(&x).unwrap();
            let num: f64 = y.iter().zip(&y_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = y_ref.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            worst_forward = worst_forward.max(num / den);
        }
    }
    (worst_restore, worst_forward)
}

fn integrity(configs: &[Config], layers: &[ProtectedLayer]) -> (f64, f64) {
    let mut rng = Seed(77).rng();
    configs.iter().zip(layers).fold((0.0f64, 0.0f64), |(r, f), (c, l)| {
        let (r2, f2) = integrity_errors(c, l, &mut rng);
        (r.max(r2), f.max(f2))
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfgs = configs();
    let layers: Vec<ProtectedLayer> = cfgs.iter().enumerate().map(|(i, c)| protect(c, i as u64)).collect();
    let (restore, forward) = integrity(&cfgs, &layers);
    let elapsed = start.elapsed();
    Outcome::new(
        restore <= 1e-10 && forward <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("max restore rel err {restore:.2e} (≤1e-10), max forward rel err {forward:.2e} (≤1e-9), {elapsed:.2?} (<10s)"),
    )
}

/// `Σ_{i∈S} s_i u_i v_iᵀ`, built entry by entry.
fn component_sum(u: &Matrix, s: &[f64], v: &Matrix, subset: &[usize]) -> Matrix {
    Matrix::from_fn(u.rows(), v.rows(), |i, j| {
        subset.iter().map(|&c| s[c] * u.get(i, c) * v.get(j, c)).sum()
    })
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut failures = 0;
    let mut checked = 0;
    for i in 0..20 {
        let x = gaussian_matrix(8, 6, 1.0, &mut Seed(20_000 + i).rng());
        let f = svd(&x).unwrap();
        for delta_r in 1..=3 {
            let top: Vec<usize> = (0..delta_r).collect();
            let best = component_sum(&f.u, &f.s, &f.v, &top).frobenius_norm();
            let beaten = subsets(6, delta_r)
                .iter()
                .any(|s| component_sum(&f.u, &f.s, &f.v, s).frobenius_norm() > best * (1.0 + 1e-12));
            checked += 1;
            if beaten {
                failures += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        failures == 0 && elapsed < Duration::from_secs(5),
        format!("{checked} (matrix, Δr) cases, {failures} where a non-top subset won, {elapsed:.2?} (<5s)"),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for c in configs() {
        let (w_trunc, _) = extract_spectral_key(&c.w, DELTA_R).unwrap();
        let removed = c.w.sub(&w_trunc).unwrap().frobenius_norm_sq();
        let top: f64 = svd(&c.w).unwrap().s[..DELTA_R].iter().map(|s| s * s).sum();
        worst = worst.max((removed - top).abs() / top);
    }
    Outcome::new(worst <= 1e-9, format!("max rel deviation {worst:.2e} (≤1e-9)"))
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for c in configs() {
        let (_, key) = extract_spectral_key(&c.w, DELTA_R).unwrap();
        let l = key.product();
        for ad in &c.adapters {
            let (enc, rkey) = encrypt_adapter(&compensate(ad, &key).unwrap()).unwrap();
            let got = enc.product().add(&rkey.product()).unwrap();
            let want = l.add(&ad.product()).unwrap();
            worst = worst.max(relative_fro_error(&got, &want).unwrap());
        }
    }
    Outcome::new(
        worst <= 1e-10,
        format!(
            "max rel err {worst:.2e} over {} adapters (≤1e-10)",
            CONFIGS as usize * K
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut worst_pre = 0.0f64;
    let mut rotated_visible = 0;
    let mut worst_product = 0.0f64;
    let trials = 100u64;
    for s in 0..trials {
        let mut rng = Seed(30_000 + s).rng();
        let w = spiked_weight(48, 40, Some(Spike::default()), &mut rng).unwrap();
        let ad = gaussian_adapter(48, 40, R, 1.0, &mut rng);
        let (_, key) = extract_spectral_key(&w, DELTA_R).unwrap();
        let (enc, _) = encrypt_adapter(&compensate(&ad, &key).unwrap()).unwrap();
        worst_pre = worst_pre.max(gram_offdiag_mass(&enc.b));
        let rot = reparameterize(&enc, Seed(s)).unwrap();
        if gram_offdiag_mass(&rot.b) > 1e-6 {
            rotated_visible += 1;
        }
        worst_product = worst_product.max(relative_fro_error(&rot.product(), &enc.product()).unwrap());
    }
    Outcome::new(
        worst_pre <= 1e-10 && rotated_visible >= 99 && worst_product <= 1e-12,
        format!(
            "pre-rotation max mass {worst_pre:.2e} (≤1e-10), {rotated_visible}/{trials} rotated > 1e-6 (≥99), \
             max product drift {worst_product:.2e} (≤1e-12)"
        ),
    )
}

fn sdt_w_error(layer: &SyntheticLayer, scenario: Scenario, cfg: &SdtConfig) -> (f64, Matrix) {
    let obs = build_observations(&layer.name, &layer.w, &layer.adapters, scenario, 4, Seed(0)).unwrap();
    let result = spectral_detuning(&obs, cfg, None).unwrap();
    let err = w_error(&LayerSet::single(layer.w.clone(), result.w_hat.clone()).unwrap());
    (err, result.w_hat)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let spec = ModelSpec {
        layers: 1,
        m: 64,
        n: 64,
        rank: 4,
        adapters: 12,
        spike: Some(Spike::default()),
        adapter_std: 1.0,
    };
    let layer = generate_model(&spec, Seed(0)).unwrap().remove(0);
    let cfg = SdtConfig {
        n_iters: 300,
        sched_start_rank: 1,
        sched_end_rank: 4,
    };
    let (unprotected, _) = sdt_w_error(&layer, Scenario::Unprotected, &cfg);
    let (random_key, _) = sdt_w_error(&layer, Scenario::RandomKey, &cfg);
    let (self_derived, _) = sdt_w_error(&layer, Scenario::SelfDerivedKey, &cfg);
    let (lorenc, w_hat) = sdt_w_error(&layer, Scenario::Lorenc, &cfg);

    let (w_trunc, key) = extract_spectral_key(&layer.w, 4).unwrap();
    let floor = (0.5 * key.product().frobenius_norm_sq() / (64.0 * 64.0)).log10();
    let d_trunc = w_hat.sub(&w_trunc).unwrap().frobenius_norm();
    let d_true = w_hat.sub(&layer.w).unwrap().frobenius_norm();
    let elapsed = start.elapsed();

    let ordering = unprotected < random_key && random_key <= self_derived && self_derived < lorenc;
    let passed = ordering && lorenc >= floor && d_trunc < d_true && elapsed < Duration::from_secs(60);
    Outcome::new(
        passed,
        format!(
            "W-Error unprotected {unprotected:.3}, random-key {random_key:.3}, self-derived {self_derived:.3}, \
             LoREnc {lorenc:.3}; ordering unprotected<random≤self<LoREnc {}; floor {floor:.3} {}; \
             ‖Ŵ−W̃‖={d_trunc:.2e} vs ‖Ŵ−W‖={d_true:.2e}; {elapsed:.2?} (<60s)",
            if ordering { "holds" } else { "VIOLATED" },
            if lorenc >= floor { "respected" } else { "VIOLATED" },
        ),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        0.5 * (xs[mid - 1] + xs[mid])
    } else {
        xs[mid]
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let n = 32;
    let w = spiked_weight(n, n, Some(Spike::default()), &mut Seed(40_000).rng()).unwrap();
    let (w_trunc, key) = extract_spectral_key(&w, DELTA_R).unwrap();
    let withheld = key.product().frobenius_norm() / w.frobenius_norm();

    let counts = [0, n / 4, n / 2];
    let mut medians = Vec::new();
    for &count in &counts {
        let errs = (0..20u64)
            .map(|t| {
                let samples = make_samples(&w, count, &mut Seed(41_000 + t).rng());
                let lr = suggested_learning_rate(&samples, 0.0).unwrap();
                let cfg = FinetuneConfig {
                    steps: 500,
                    learning_rate: lr,
                    ridge: 0.0,
                };
                let est = finetune_recovery(&w_trunc, &samples, &cfg).unwrap();
                relative_fro_error(&est, &w).unwrap()
            })
            .collect();
        medians.push(median(errs));
    }
    let monotone = medians.windows(2).all(|p| p[1] <= p[0]);
    let zero_ok = (medians[0] - withheld).abs() <= 1e-12;
    let exact = (0..20u64)
        .map(|t| {
            let samples = make_samples(&w, n, &mut Seed(42_000 + t).rng());
            relative_fro_error(&least_squares_recovery(&w_trunc, &samples, 0.0).unwrap(), &w).unwrap()
        })
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    Outcome::new(
        monotone && zero_ok && exact <= 1e-6 && elapsed < Duration::from_secs(30),
        format!(
            "median rel err at N={counts:?}: [{:.3e}, {:.3e}, {:.3e}] {}; N=0 vs ‖L‖/‖W‖={withheld:.6e} {}; \
             exact solve at N=n worst {exact:.2e} (≤1e-6); {elapsed:.2?} (<30s)",
            medians[0],
            medians[1],
            medians[2],
            if monotone { "non-increasing" } else { "NOT monotone" },
            if zero_ok { "match" } else { "MISMATCH" },
        ),
    )
}

fn criterion_8() -> Outcome {
    let single = overhead_report(&[(100, 100)], 8, 4);
    let multi = overhead_report(&[(64, 32), (128, 256)], 8, 4);
    let single_ok = single.base_params == 10_000
        && single.adapter_params == 1_600
        && single.added_params == 800
        && single.base_flops_per_token == 20_000
        && single.added_flops == 1_600
        && single.params_pct == 8.0
        && single.flops_pct == 8.0;
    let multi_ok = multi.base_params == 34_816
        && multi.adapter_params == 3_840
        && multi.added_params == 1_920
        && multi.base_flops_per_token == 69_632
        && multi.added_flops == 3_840;
    Outcome::new(
        single_ok && multi_ok,
        format!(
            "100×100: added {} / base {} params, {} / {} FLOPs; 64×32+128×256: added {} / base {}",
            single.added_params,
            single.base_params,
            single.added_flops,
            single.base_flops_per_token,
            multi.added_params,
            multi.base_params
        ),
    )
}

/// Flips every payload byte of `c` in turn; returns how many flips went unnoticed.
fn undetected_flips(c: &Container, stride: usize) -> (usize, usize) {
    let bytes = c.to_bytes().unwrap();
    let payload: u64 = c.manifest.tensors.iter().map(|t| t.byte_length).sum();
    let start = bytes.len() - payload as usize;
    let mut tried = 0;
    let mut missed = 0;
    for pos in (start..bytes.len()).step_by(stride) {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x01;
        tried += 1;
        if !matches!(Container::from_bytes(&bad), Err(ContainerError::CrcMismatch { .. })) {
            missed += 1;
        }
    }
    (tried, missed)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfgs = configs();
    let layers: Vec<(String, ProtectedLayer)> = cfgs
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.clone(), protect(c, i as u64)))
        .collect();
    let model = ProtectedModel::new(Seed(5), DELTA_R, layers);
    let (deploy, keys) = split_artifacts(&model);
    write_container(&dir.path().join("deploy.lren"), &deploy).unwrap();
    write_container(&dir.path().join("keys.lren"), &keys).unwrap();
    let deploy_back = read_container(&dir.path().join("deploy.lren")).unwrap();
    let keys_back = read_container(&dir.path().join("keys.lren")).unwrap();
    let restored = assemble_protected(&deploy_back, Some(&keys_back)).unwrap();

    let bit_exact = restored.layers.iter().zip(&model.layers).all(|((na, a), (nb, b))| {
        na == nb
            && a.w_trunc()
                .as_slice()
                .iter()
                .zip(b.w_trunc().as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits())
            && a == b
    }) && deploy_back.to_bytes().unwrap() == deploy.to_bytes().unwrap()
        && keys_back.to_bytes().unwrap() == keys.to_bytes().unwrap();

    let reread: Vec<ProtectedLayer> = restored.layers.into_iter().map(|(_, l)| l).collect();
    let (restore, forward) = integrity(&cfgs, &reread);
    let integrity_ok = restore <= 1e-10 && forward <= 1e-9;

    // Every byte of a small container, and a strided sweep over the large one.
    let small = Config {
        name: "small".into(),
        w: spiked_weight(10, 9, Some(Spike { rank: 2, ratio: 10.0 }), &mut Seed(50_000).rng()).unwrap(),
        adapters: (0..2)
            .map(|k| gaussian_adapter(10, 9, 3, 1.0, &mut Seed(50_001 + k).rng()))
            .collect(),
    };
    let small_layer = protect_layer(&small.name, &small.w, &small.adapters, 2, Seed(1)).unwrap();
    let (small_deploy, small_keys) = split_artifacts(&ProtectedModel::new(
        Seed(1),
        2,
        vec![(small.name.clone(), small_layer)],
    ));
    let mut tried = 0;
    let mut missed = 0;
    for (c, stride) in [(&small_deploy, 1), (&small_keys, 1), (&deploy, 97), (&keys, 13)] {
        let (t, m) = undetected_flips(c, stride);
        tried += t;
        missed += m;
    }
    Outcome::new(
        bit_exact && integrity_ok && missed == 0,
        format!(
            "round trip bit-exact: {bit_exact}; re-read integrity restore {restore:.2e} forward {forward:.2e}; \
             {missed}/{tried} single-byte payload corruptions undetected"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("integrity", criterion_1),
        ("top-Δr subset maximality", criterion_2),
        ("Eckart–Young identity", criterion_3),
        ("key-splitting exactness", criterion_4),
        ("stealthiness", criterion_5),
        ("SDT resilience ordering", criterion_6),
        ("fine-tuning attack trend", criterion_7),
        ("overhead formulas", criterion_8),
        ("persistence", criterion_9),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {} [{status}] {name}: {}", i + 1, outcome.detail);
        if !outcome.passed {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
