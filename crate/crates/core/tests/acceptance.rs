//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use corp::fixtures::{generate_fixture, Fixture, FixtureRng, FixtureSpec, InitMode};
use corp::io::{decode_pgm, decode_tensor, encode_pgm, encode_tensor, AnyTensor};
use corp::losses::grad_check_iou;
use corp::metrics::{e_measure_mean, f_measure_curve, mae, s_measure, DEFAULT_BETA_SQ};
use corp::oracle;
use corp::pcs::{correlation_transform, score_all, search_corepresentation};
use corp::rpp::run_pipeline_with_gt;
use corp::types::{LossReduction, DEFAULT_ALPHA, DEFAULT_BETA};
use corp::{run_pipeline, MapGroup, PipelineConfig, ReferenceDecoder, Tensor};

const ORACLE_INSTANCES: u64 = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const BOUND_CHECKS: u64 = 10_000;
const BOUND_TOL: f64 = 1e-5;
const PROXY_NORM_TOL: f64 = 1e-6;
const PURITY_SEEDS: u64 = 50;
const FIXED_POINT_FIXTURES: u64 = 20;
const FIXED_POINT_ITERS: usize = 40;
const GRAD_POINTS: usize = 100;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const METRIC_TOL: f64 = 1e-6;
const METRIC_PAIRS: u64 = 100;
const F_EXAMPLE: f64 = 0.565;
const F_EXAMPLE_TOL: f64 = 1e-3;
const PERF_BUDGET: Duration = Duration::from_secs(1);
const ROUNDTRIPS: u64 = 100;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    for seed in 0..ORACLE_INSTANCES {
        check_oracle_instance(seed).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    let took = start.elapsed();
    if took >= ORACLE_BUDGET {
        return Err(format!("took {took:?}, budget {ORACLE_BUDGET:?}"));
    }
    Ok(format!("{ORACLE_INSTANCES} instances in {took:.2?}"))
}

fn c2_bounds() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut rng = FixtureRng::new(0xB0);
    for i in 0..BOUND_CHECKS {
        let (n, d, h, w) = (
            rng.range(1, 3),
            rng.range(1, 8),
            rng.range(1, 6),
            rng.range(1, 6),
        );
        let k = rng.range(1, (n * h * w).min(8));
        let f = random_group(&mut rng, n, d, h, w);
        let m = random_maps(&mut rng, n, h, w);
        let p = corp::compute_proxy(&f, &m, 1e-12).map_err(|e| e.to_string())?;
        if !p.is_degenerate() {
            worst_norm = worst_norm.max((p.norm() - 1.0).abs());
        }
        let scores = score_all(&f, &p).map_err(|e| e.to_string())?;
        let c = search_corepresentation(&f, &p, k).map_err(|e| e.to_string())?;
        let a = correlation_transform(&f, &p, &c).map_err(|e| e.to_string())?;
        let s_max = scores.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        worst = worst.max(f64::from(s_max)).max(f64::from(a.max_abs()));
        if worst > 1.0 + BOUND_TOL || worst_norm > PROXY_NORM_TOL {
            return Err(format!(
                "check {i}: max |value| {worst}, proxy norm error {worst_norm:e}"
            ));
        }
    }
    Ok(format!(
        "{BOUND_CHECKS} checks, max |value| {worst:.6}, proxy norm error {worst_norm:.1e}"
    ))
}

pub fn purity_family(seed: u64) -> FixtureSpec {
    FixtureSpec::separable(seed, 8, 16, 16, 16, 0.5, 0.0625)
        .with_init(InitMode::Dilated { radius: 2 })
}

fn c3_purification() -> Outcome {
    let cfg = PipelineConfig {
        k: 32,
        iters: 3,
        ..Default::default()
    };
    for seed in 0..PURITY_SEEDS {
        let spec = purity_family(seed);
        if spec.separation_margin < 0.5 || spec.noise_sigma > spec.separation_margin / 8.0 {
            return Err(format!("seed {seed}: fixture outside the separable family"));
        }
        let fx = generate_fixture(&spec).map_err(|e| format!("seed {seed}: {e}"))?;
        let trace = run_pipeline_with_gt(
            &fx.features,
            &fx.init_maps,
            Some(&fx.gt),
            &cfg,
            &ReferenceDecoder,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let purity: Vec<f64> = trace
            .iterations()
            .iter()
            .map(|r| r.purity.unwrap())
            .collect();
        let monotone = purity.windows(2).all(|w| w[1] >= w[0]);
        if !monotone || purity[1..].iter().any(|&p| p != 1.0) {
            return Err(format!("seed {seed}: purity {purity:?}"));
        }
    }
    Ok(format!(
        "{PURITY_SEEDS} fixtures, purity non-decreasing and 1.0 from t = 2"
    ))
}

fn small_fixture(seed: u64) -> Result<Fixture, String> {
    let spec = FixtureSpec::separable(seed, 4, 8, 12, 12, 0.5, 0.0625).with_init(InitMode::Noisy {
        radius: 1,
        level: 0.3,
    });
    generate_fixture(&spec).map_err(|e| e.to_string())
}

fn c4_fixed_point() -> Outcome {
    let one = PipelineConfig {
        k: 16,
        iters: 1,
        ..Default::default()
    };
    let mut converged = 0;
    let mut settled_fixtures = 0;
    for seed in 0..FIXED_POINT_FIXTURES {
        let fx = small_fixture(seed)?;
        let long = run_pipeline(
            &fx.features,
            &fx.init_maps,
            &PipelineConfig {
                iters: FIXED_POINT_ITERS,
                ..one.clone()
            },
            &ReferenceDecoder,
        )
        .map_err(|e| e.to_string())?;
        let its = long.iterations();
        for t in 1..its.len() {
            // Restarting from M^t with an independently built copy must give M^{t+1}.
            let copy = MapGroup::new(
                its[t - 1]
                    .maps
                    .maps()
                    .iter()
                    .map(|m| Tensor::new(m.dims().to_vec(), m.data().to_vec()).unwrap())
                    .collect(),
            )
            .unwrap();
            let again = run_pipeline(&fx.features, &copy, &one, &ReferenceDecoder)
                .map_err(|e| e.to_string())?;
            if bits(&again.iterations()[0].maps) != bits(&its[t].maps) {
                return Err(format!("seed {seed}: restart from t = {t} diverged"));
            }
        }
        // Wherever the trace has settled, the next iterate must match bit for bit.
        let before = converged;
        for t in 1..its.len() - 1 {
            if bits(&its[t].maps) == bits(&its[t - 1].maps) {
                converged += 1;
                if bits(&its[t + 1].maps) != bits(&its[t].maps) {
                    return Err(format!(
                        "seed {seed}: left the fixed point at t = {}",
                        t + 2
                    ));
                }
            }
        }
        settled_fixtures += usize::from(converged > before);
    }
    if converged == 0 {
        return Err("no trace reached a fixed point to check".into());
    }
    Ok(format!(
        "{FIXED_POINT_FIXTURES} fixtures restarted at every t; {settled_fixtures} settled within {FIXED_POINT_ITERS} iterations and stayed ({converged} pairs)"
    ))
}

fn c5_grad_check() -> Outcome {
    let mut rng = FixtureRng::new(0x6AD);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < GRAD_POINTS {
        let (n, h, w) = (rng.range(1, 3), rng.range(1, 5), rng.range(1, 5));
        let gen = |rng: &mut FixtureRng, f: &dyn Fn(&mut FixtureRng) -> f64| -> MapGroup<f64> {
            MapGroup::new(
                (0..n)
                    .map(|_| Tensor::new(vec![h, w], (0..h * w).map(|_| f(rng)).collect()).unwrap())
                    .collect(),
            )
            .unwrap()
        };
        let pred = gen(&mut rng, &|r| 0.02 + 0.96 * r.uniform());
        let gt = if rng.uniform() < 0.5 {
            gen(&mut rng, &|r| if r.uniform() < 0.5 { 1.0 } else { 0.0 })
        } else {
            gen(&mut rng, &|r| r.uniform())
        };
        for reduction in [LossReduction::Mean, LossReduction::Sum] {
            let r = grad_check_iou(&pred, &gt, reduction, GRAD_STEP, GRAD_TOL)
                .map_err(|e| e.to_string())?;
            if r.precondition.is_some() {
                break;
            }
            if !r.passed {
                return Err(format!(
                    "point {checked} ({reduction:?}): rel error {:.3e}",
                    r.max_rel_error
                ));
            }
            worst = worst.max(r.max_rel_error);
            if reduction == LossReduction::Sum {
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{GRAD_POINTS} points, both reductions, max rel error {worst:.2e}"
    ))
}

fn c6_metrics() -> Outcome {
    let mut rng = FixtureRng::new(0x6E7);
    let err = |e: corp::CorpError| e.to_string();
    for i in 0..METRIC_PAIRS {
        // Alternate dense and sparse foregrounds; sparse blocks stress the ratio terms.
        let gt = if i % 2 == 0 {
            random_binary_maps(&mut rng, 3, 8, 8)
        } else {
            sparse_binary_maps(&mut rng, 3, 8, 8)
        };
        let ideal = [
            ("mae", mae(&gt, &gt).map_err(err)?, 0.0),
            (
                "f_max",
                f_measure_curve(&gt, &gt, DEFAULT_BETA_SQ)
                    .map_err(err)?
                    .f_max,
                1.0,
            ),
            ("s", s_measure(&gt, &gt, 0.5).map_err(err)?, 1.0),
            ("e", e_measure_mean(&gt, &gt).map_err(err)?, 1.0),
        ];
        for (name, got, want) in ideal {
            if (got - want).abs() > METRIC_TOL {
                return Err(format!("pair {i}: ideal {name} = {got}"));
            }
        }
        let pred = random_maps(&mut rng, 3, 8, 8);
        let (po, go) = (maps_to_oracle(&pred), maps_to_oracle(&gt));
        let f = f_measure_curve(&pred, &gt, DEFAULT_BETA_SQ).map_err(err)?;
        let fo = oracle::oracle_f_curve(&po, &go, DEFAULT_BETA_SQ);
        let fo_max = fo.iter().copied().fold(0.0, f64::max);
        let fo_avg = fo.iter().sum::<f64>() / fo.len() as f64;
        let pairs = [
            (
                "mae",
                mae(&pred, &gt).map_err(err)?,
                oracle::oracle_mae(&po, &go),
            ),
            ("f_max", f.f_max, fo_max),
            ("f_avg", f.f_avg, fo_avg),
            (
                "s",
                s_measure(&pred, &gt, 0.5).map_err(err)?,
                oracle::oracle_s_measure(&po, &go, 0.5),
            ),
            (
                "e",
                e_measure_mean(&pred, &gt).map_err(err)?,
                oracle::oracle_e_measure(&po, &go),
            ),
        ];
        for (name, got, want) in pairs {
            if (got - want).abs() > METRIC_TOL {
                return Err(format!("pair {i}: {name} {got} vs oracle {want}"));
            }
        }
    }
    for seed in 0..10 {
        let gt = generate_fixture(&purity_family(seed))
            .map_err(|e| e.to_string())?
            .gt;
        let (s, e) = (
            s_measure(&gt, &gt, 0.5).map_err(err)?,
            e_measure_mean(&gt, &gt).map_err(err)?,
        );
        if (s - 1.0).abs() > METRIC_TOL || (e - 1.0).abs() > METRIC_TOL {
            return Err(format!(
                "fixture {seed} ground truth: ideal s = {s}, e = {e}"
            ));
        }
    }
    let pred = MapGroup::new(vec![
        Tensor::new(vec![2, 2], vec![0.9, 0.9, 0.1, 0.1]).unwrap()
    ])
    .unwrap();
    let gt = MapGroup::new(vec![
        Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap()
    ])
    .unwrap();
    let f = f_measure_curve(&pred, &gt, DEFAULT_BETA_SQ)
        .map_err(err)?
        .curve[128];
    if (f - F_EXAMPLE).abs() > F_EXAMPLE_TOL {
        return Err(format!("F at P = 0.5, R = 1 is {f}"));
    }
    Ok(format!(
        "{METRIC_PAIRS} ideal and oracle pairs, 10 fixture ideals, hand example F = {f:.4}"
    ))
}

fn c7_defaults() -> Outcome {
    let cfg = PipelineConfig::default();
    if (cfg.k, cfg.iters, cfg.alpha, cfg.beta) != (32, 3, 0.8, 0.2)
        || (DEFAULT_ALPHA, DEFAULT_BETA) != (0.8, 0.2)
    {
        return Err(format!(
            "defaults are K={} T={} alpha={} beta={}",
            cfg.k, cfg.iters, cfg.alpha, cfg.beta
        ));
    }
    let fx = generate_fixture(&purity_family(7)).map_err(|e| e.to_string())?;
    for iters in 1..=6 {
        let c = PipelineConfig {
            iters,
            ..cfg.clone()
        };
        let t = run_pipeline(&fx.features, &fx.init_maps, &c, &ReferenceDecoder)
            .map_err(|e| format!("T={iters}: {e}"))?;
        if t.len() != iters {
            return Err(format!("T={iters} produced {} iterations", t.len()));
        }
    }
    for k in [16, 24, 32, 48, 56, 64, 45] {
        let c = PipelineConfig { k, ..cfg.clone() };
        run_pipeline(&fx.features, &fx.init_maps, &c, &ReferenceDecoder)
            .map_err(|e| format!("K={k}: {e}"))?;
    }
    Ok("K=32 T=3 alpha=0.8 beta=0.2; T 1..6 and 7 K values ran".into())
}

fn c8_determinism() -> Outcome {
    let mut rng = FixtureRng::new(0x8);
    let f = random_group(&mut rng, 10, 64, 28, 28);
    let m = random_maps(&mut rng, 10, 28, 28);
    let cfg = PipelineConfig::default();
    let mut outputs = Vec::new();
    let mut slowest = Duration::ZERO;
    for _ in 0..3 {
        let start = Instant::now();
        let trace = run_pipeline(&f, &m, &cfg, &ReferenceDecoder).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        outputs.push(bits(&trace.last().unwrap().maps));
    }
    if outputs.windows(2).any(|w| w[0] != w[1]) {
        return Err("outputs differ between runs".into());
    }
    if slowest >= PERF_BUDGET {
        return Err(format!("slowest run {slowest:?}, budget {PERF_BUDGET:?}"));
    }
    Ok(format!("3 identical runs, slowest {slowest:.2?}"))
}

fn c9_roundtrips() -> Outcome {
    let mut rng = FixtureRng::new(0x9);
    for i in 0..ROUNDTRIPS {
        let ndim = rng.range(1, 4);
        let dims: Vec<usize> = (0..ndim).map(|_| rng.range(1, 6)).collect();
        let len: usize = dims.iter().product();
        let raw: Vec<u64> = (0..len).map(|_| rng.next_u64()).collect();
        // Arbitrary bit patterns, minus NaNs whose payload is not preserved by comparison.
        let t32 = Tensor::new(
            dims.clone(),
            raw.iter()
                .map(|&b| f32::from_bits(b as u32))
                .map(|v| if v.is_nan() { 0.5 } else { v })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let t64 = Tensor::new(
            dims.clone(),
            raw.iter()
                .map(|&b| f64::from_bits(b))
                .map(|v| if v.is_nan() { 0.5 } else { v })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        match decode_tensor(&encode_tensor(&t32).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?
        {
            AnyTensor::F32(b)
                if b.dims() == t32.dims()
                    && b.data()
                        .iter()
                        .map(|v| v.to_bits())
                        .eq(t32.data().iter().map(|v| v.to_bits())) => {}
            _ => return Err(format!("f32 tensor {i} changed")),
        }
        match decode_tensor(&encode_tensor(&t64).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?
        {
            AnyTensor::F64(b)
                if b.dims() == t64.dims()
                    && b.data()
                        .iter()
                        .map(|v| v.to_bits())
                        .eq(t64.data().iter().map(|v| v.to_bits())) => {}
            _ => return Err(format!("f64 tensor {i} changed")),
        }

        let (h, w) = (rng.range(1, 20), rng.range(1, 20));
        let map = random_maps(&mut rng, 1, h, w).into_maps().remove(0);
        let once =
            decode_pgm(&encode_pgm(&map).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let twice = decode_pgm(&encode_pgm(&once).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let max_err = map
            .data()
            .iter()
            .zip(once.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        if once
            .data()
            .iter()
            .map(|v| v.to_bits())
            .ne(twice.data().iter().map(|v| v.to_bits()))
            || max_err > 0.5 / 255.0 + 1e-6
        {
            return Err(format!(
                "pgm map {i} not idempotent (first-pass error {max_err})"
            ));
        }
    }
    Ok(format!("{ROUNDTRIPS} CRPT f32/f64 and PGM roundtrips"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", c1_oracle_equivalence),
        ("score, correlation and proxy bounds", c2_bounds),
        ("purification on separable fixtures", c3_purification),
        ("fixed point and restart", c4_fixed_point),
        ("IoU loss gradient check", c5_grad_check),
        ("metric correctness", c6_metrics),
        ("default constants and ablation grids", c7_defaults),
        ("determinism and performance", c8_determinism),
        ("CRPT and PGM roundtrips", c9_roundtrips),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
