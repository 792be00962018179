//! WebAssembly bindings for the browser demo in `www/`.
//!
//! [`Session`] is plain Rust so it can be tested natively; [`Demo`] wraps it
//! for JavaScript.

use corp::fixtures::{generate_fixture, Fixture, FixtureSpec, InitMode};
use corp::metrics::{
    e_measure_mean, f_measure_curve, mae, s_measure, DEFAULT_BETA_SQ, DEFAULT_S_ALPHA,
};
use corp::rpp::run_pipeline_with_gt;
use corp::{IterationTrace, MapGroup, PipelineConfig, ReferenceDecoder};
use wasm_bindgen::prelude::*;

pub const MARGIN: f64 = 0.5;

pub fn init_mode(name: &str, radius: usize, level: f32) -> Result<InitMode, String> {
    Ok(match name {
        "ones" => InitMode::AllOnes,
        "gt" => InitMode::GroundTruth,
        "dilated" => InitMode::Dilated { radius },
        "noisy" => InitMode::Noisy { radius, level },
        other => return Err(format!("unknown init mode {other:?}")),
    })
}

pub struct Session {
    fixture: Fixture,
    trace: Option<IterationTrace>,
}

impl Session {
    pub fn generate(
        seed: u64,
        n: usize,
        channels: usize,
        size: usize,
        sigma: f64,
        init: InitMode,
    ) -> Result<Self, String> {
        let spec =
            FixtureSpec::separable(seed, n, channels, size, size, MARGIN, sigma).with_init(init);
        let fixture = generate_fixture(&spec).map_err(|e| e.to_string())?;
        Ok(Self {
            fixture,
            trace: None,
        })
    }

    pub fn n_images(&self) -> usize {
        self.fixture.gt.n_images()
    }

    pub fn size(&self) -> usize {
        self.fixture.gt.height()
    }

    pub fn run(&mut self, k: usize, iters: usize) -> Result<(), String> {
        let cfg = PipelineConfig {
            k,
            iters,
            ..Default::default()
        };
        let fx = &self.fixture;
        let trace = run_pipeline_with_gt(
            &fx.features,
            &fx.init_maps,
            Some(&fx.gt),
            &cfg,
            &ReferenceDecoder,
        )
        .map_err(|e| e.to_string())?;
        self.trace = Some(trace);
        Ok(())
    }

    /// Completed iterations of the last run.
    pub fn iterations(&self) -> usize {
        self.trace.as_ref().map_or(0, |t| t.len())
    }

    /// Maps after iteration `t`; `t = 0` is the initial maps.
    pub fn maps(&self, t: usize) -> Option<&MapGroup> {
        if t == 0 {
            return Some(&self.fixture.init_maps);
        }
        self.trace
            .as_ref()?
            .iterations()
            .get(t - 1)
            .map(|r| &r.maps)
    }

    pub fn gt(&self) -> &MapGroup {
        &self.fixture.gt
    }

    pub fn purity(&self, t: usize) -> Option<f64> {
        self.trace
            .as_ref()?
            .iterations()
            .get(t.checked_sub(1)?)?
            .purity
    }

    /// Selected locations of iteration `t` as `(image, row, col)`.
    pub fn selected(&self, t: usize) -> Vec<(usize, usize, usize)> {
        self.trace
            .as_ref()
            .and_then(|tr| tr.iterations().get(t.checked_sub(1)?))
            .map(|r| {
                r.corep
                    .coords()
                    .iter()
                    .map(|c| (c.image, c.row, c.col))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// `[mae, f_max, f_avg, s_measure, e_mean]` of the maps after iteration `t`.
    pub fn metrics(&self, t: usize) -> Result<[f64; 5], String> {
        let pred = self.maps(t).ok_or_else(|| format!("no iteration {t}"))?;
        let gt = &self.fixture.gt;
        let e = |e: corp::CorpError| e.to_string();
        let f = f_measure_curve(pred, gt, DEFAULT_BETA_SQ).map_err(e)?;
        Ok([
            mae(pred, gt).map_err(e)?,
            f.f_max,
            f.f_avg,
            s_measure(pred, gt, DEFAULT_S_ALPHA).map_err(e)?,
            e_measure_mean(pred, gt).map_err(e)?,
        ])
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    /// Builds a synthetic group of `n` square images with a planted common object.
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u32,
        n: usize,
        channels: usize,
        size: usize,
        sigma: f64,
        init: &str,
        radius: usize,
        level: f32,
    ) -> Result<Demo, JsError> {
        let mode = init_mode(init, radius, level).map_err(js)?;
        Session::generate(u64::from(seed), n, channels, size, sigma, mode)
            .map(Demo)
            .map_err(js)
    }

    #[wasm_bindgen(getter, js_name = nImages)]
    pub fn n_images(&self) -> usize {
        self.0.n_images()
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.0.size()
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.0.iterations()
    }

    pub fn run(&mut self, k: usize, iters: usize) -> Result<(), JsError> {
        self.0.run(k, iters).map_err(js)
    }

    /// Row-major map of image `n` after iteration `t`.
    pub fn map(&self, t: usize, n: usize) -> Result<Vec<f32>, JsError> {
        let maps = self
            .0
            .maps(t)
            .ok_or_else(|| js(format!("no iteration {t}")))?;
        if n >= maps.n_images() {
            return Err(js(format!("no image {n}")));
        }
        Ok(maps.map(n).data().to_vec())
    }

    pub fn gt(&self, n: usize) -> Result<Vec<f32>, JsError> {
        if n >= self.0.n_images() {
            return Err(js(format!("no image {n}")));
        }
        Ok(self.0.gt().map(n).data().to_vec())
    }

    /// Purity of iteration `t`, NaN when unavailable.
    pub fn purity(&self, t: usize) -> f64 {
        self.0.purity(t).unwrap_or(f64::NAN)
    }

    /// Flat `[image, row, col, ...]` triples selected at iteration `t`.
    pub fn selected(&self, t: usize) -> Vec<u32> {
        self.0
            .selected(t)
            .into_iter()
            .flat_map(|(n, r, c)| [n as u32, r as u32, c as u32])
            .collect()
    }

    /// `[mae, fmax, favg, smeasure, emean]` after iteration `t`.
    pub fn metrics(&self, t: usize) -> Result<Vec<f64>, JsError> {
        self.0.metrics(t).map(|m| m.to_vec()).map_err(js)
    }
}
