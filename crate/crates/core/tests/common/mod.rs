#![allow(dead_code, clippy::needless_range_loop)]

use corp::fixtures::FixtureRng;
use corp::oracle;
use corp::{FeatureGroup, MapGroup, Tensor};

/// Random unit-norm embeddings, `n` images of `d×h×w`.
pub fn random_group(rng: &mut FixtureRng, n: usize, d: usize, h: usize, w: usize) -> FeatureGroup {
    let tensors = (0..n)
        .map(|_| {
            let data = (0..d * h * w).map(|_| rng.normal() as f32).collect();
            Tensor::new(vec![d, h, w], data).unwrap()
        })
        .collect();
    FeatureGroup::from_raw(tensors, 1e-12).unwrap()
}

pub fn random_maps(rng: &mut FixtureRng, n: usize, h: usize, w: usize) -> MapGroup {
    MapGroup::new(
        (0..n)
            .map(|_| {
                Tensor::new(
                    vec![h, w],
                    (0..h * w).map(|_| rng.uniform() as f32).collect(),
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// Binary maps with at least one foreground and one background pixel each.
pub fn random_binary_maps(rng: &mut FixtureRng, n: usize, h: usize, w: usize) -> MapGroup {
    assert!(h * w >= 2);
    let maps = (0..n)
        .map(|_| {
            let mut v: Vec<f32> = (0..h * w)
                .map(|_| if rng.uniform() < 0.4 { 1.0 } else { 0.0 })
                .collect();
            let on = rng.range(0, h * w - 1);
            let off = (on + 1 + rng.range(0, h * w - 2)) % (h * w);
            v[on] = 1.0;
            v[off] = 0.0;
            Tensor::new(vec![h, w], v).unwrap()
        })
        .collect();
    MapGroup::new(maps).unwrap()
}

pub fn random_proxy(rng: &mut FixtureRng, d: usize) -> corp::Proxy {
    let v = rng.unit_vector(d);
    corp::Proxy::normalized(&v, 1e-12).unwrap()
}

pub fn features_to_oracle(f: &FeatureGroup) -> oracle::Features {
    f.tensors()
        .iter()
        .map(|t| {
            let (d, h, w) = t.dhw().unwrap();
            (0..d)
                .map(|c| {
                    (0..h)
                        .map(|r| {
                            (0..w)
                                .map(|x| f64::from(t.data()[(c * h + r) * w + x]))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn maps_to_oracle(m: &MapGroup) -> oracle::Maps {
    m.maps()
        .iter()
        .map(|t| {
            let (h, w) = t.hw().unwrap();
            (0..h)
                .map(|r| (0..w).map(|c| f64::from(t.data()[r * w + c])).collect())
                .collect()
        })
        .collect()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

pub fn bits(maps: &MapGroup) -> Vec<u32> {
    maps.maps()
        .iter()
        .flat_map(|m| m.data().iter().map(|v| v.to_bits()))
        .collect()
}

fn close(what: &str, a: f64, b: f64, tol: f64) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs oracle {b} (tol {tol})"))
    }
}

/// One randomized instance compared kernel by kernel against the oracle.
pub fn check_oracle_instance(seed: u64) -> Result<(), String> {
    use corp::metrics::{e_measure_mean, f_measure_curve, mae, s_measure};
    use corp::pcs::{correlation_transform, score_all, search_corepresentation};
    use corp::tensor::topk_desc;

    let mut rng = FixtureRng::new(seed);
    let n = rng.range(1, 3);
    let d = rng.range(1, 8);
    let h = rng.range(1, 6);
    let w = rng.range(1, 6);
    let k = rng.range(1, (n * h * w).min(5));
    let f = random_group(&mut rng, n, d, h, w);
    let fo = features_to_oracle(&f);
    let masks = random_maps(&mut rng, n, h, w);

    let proxy = corp::compute_proxy(&f, &masks, 1e-12).map_err(|e| e.to_string())?;
    let po = oracle::oracle_proxy(&fo, &maps_to_oracle(&masks), 1e-12)
        .ok_or("oracle proxy degenerate")?;
    for (a, b) in proxy.vec().iter().zip(&po) {
        close("proxy", f64::from(*a), *b, 1e-6)?;
    }

    let pv = to_f64(proxy.vec());
    let scores = score_all(&f, &proxy).map_err(|e| e.to_string())?;
    for (a, b) in scores.iter().zip(oracle::oracle_scores(&fo, &pv)) {
        close("score", f64::from(*a), b, 1e-5)?;
    }
    let top = topk_desc(&scores, k).map_err(|e| e.to_string())?;
    let expect = oracle::oracle_topk(&to_f64(&scores), k);
    if top != expect {
        return Err(format!("top-k {top:?} vs oracle {expect:?}"));
    }

    let corep = search_corepresentation(&f, &proxy, k).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = (0..k).map(|i| to_f64(corep.embedding(i))).collect();
    for (i, c) in corep.coords().iter().enumerate() {
        let l = c.row * w + c.col;
        if corep.embedding(i) != f.embedding(c.image, l) || c.image * h * w + l != expect[i] {
            return Err(format!("gathered row {i} does not match location {c:?}"));
        }
    }
    let stack = correlation_transform(&f, &proxy, &corep).map_err(|e| e.to_string())?;
    let ao = oracle::oracle_correlation_transform(&fo, &pv, &rows);
    for (img, t) in stack.images().iter().enumerate() {
        for kk in 0..k {
            for r in 0..h {
                for c in 0..w {
                    let v = t.data()[(kk * h + r) * w + c];
                    close("correlation", f64::from(v), ao[img][kk][r][c], 1e-5)?;
                }
            }
        }
    }

    let (mh, mw) = (rng.range(2, 8), rng.range(2, 8));
    let pred = random_maps(&mut rng, n, mh, mw);
    let gt = random_binary_maps(&mut rng, n, mh, mw);
    let (po, go) = (maps_to_oracle(&pred), maps_to_oracle(&gt));
    let err = |e: corp::CorpError| e.to_string();
    close(
        "mae",
        mae(&pred, &gt).map_err(err)?,
        oracle::oracle_mae(&po, &go),
        1e-6,
    )?;
    let curve = f_measure_curve(&pred, &gt, 0.3).map_err(err)?;
    for (a, b) in curve
        .curve
        .iter()
        .zip(oracle::oracle_f_curve(&po, &go, 0.3))
    {
        close("f-measure", *a, b, 1e-6)?;
    }
    close(
        "s-measure",
        s_measure(&pred, &gt, 0.5).map_err(err)?,
        oracle::oracle_s_measure(&po, &go, 0.5),
        1e-6,
    )?;
    close(
        "e-measure",
        e_measure_mean(&pred, &gt).map_err(err)?,
        oracle::oracle_e_measure(&po, &go),
        1e-6,
    )?;
    Ok(())
}

/// Binary maps with one to three foreground pixels each.
pub fn sparse_binary_maps(rng: &mut FixtureRng, n: usize, h: usize, w: usize) -> MapGroup {
    let maps = (0..n)
        .map(|_| {
            let mut v = vec![0.0f32; h * w];
            for _ in 0..rng.range(1, 3) {
                v[rng.range(0, h * w - 1)] = 1.0;
            }
            Tensor::new(vec![h, w], v).unwrap()
        })
        .collect();
    MapGroup::new(maps).unwrap()
}
