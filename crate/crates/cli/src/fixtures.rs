use std::path::PathBuf;

use clap::Args;
use corp::fixtures::{generate_fixture, FixtureSpec, InitMode, PRNG_VERSION};
use corp::io::{write_atomic, write_map_pgm, write_tensor};
use corp::CorpError;
use serde::{Deserialize, Serialize};

use crate::group::create_dir;
use crate::Failure;

#[derive(Args)]
pub struct FixturesArgs {
    /// JSON fixture spec: a full spec, or {"separable": {...}}
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; receives features/, gt/, init/ and fixture.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Separable {
    seed: u64,
    n_images: usize,
    channels: usize,
    height: usize,
    width: usize,
    #[serde(default = "default_margin")]
    separation_margin: f64,
    /// Defaults to margin / 8.
    noise_sigma: Option<f64>,
    #[serde(default)]
    init: InitMode,
}

fn default_margin() -> f64 {
    0.5
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Separable { separable: Separable },
    Full(FixtureSpec),
}

#[derive(Serialize)]
struct Manifest<'a> {
    prng: &'a str,
    images: &'a [String],
    spec: &'a FixtureSpec,
}

fn resolve(file: SpecFile) -> FixtureSpec {
    match file {
        SpecFile::Full(spec) => spec,
        SpecFile::Separable { separable: s } => FixtureSpec::separable(
            s.seed,
            s.n_images,
            s.channels,
            s.height,
            s.width,
            s.separation_margin,
            s.noise_sigma.unwrap_or(s.separation_margin / 8.0),
        )
        .with_init(s.init),
    }
}

pub fn fixtures(args: &FixturesArgs) -> Result<(), Failure> {
    let text =
        std::fs::read_to_string(&args.spec).map_err(|e| CorpError::from(e).in_file(&args.spec))?;
    let file: SpecFile = serde_json::from_str(&text)
        .map_err(|e| CorpError::Format(format!("not a fixture spec: {e}")).in_file(&args.spec))?;
    let spec = resolve(file);
    let fx = generate_fixture(&spec).map_err(|e| e.in_file(&args.spec))?;

    let digits = spec.n_images.saturating_sub(1).to_string().len().max(3);
    let names: Vec<String> = (0..spec.n_images)
        .map(|i| format!("img{i:0digits$}"))
        .collect();
    for sub in ["features", "gt", "init"] {
        create_dir(&args.out.join(sub))?;
    }
    for (i, name) in names.iter().enumerate() {
        write_tensor(
            &args.out.join("features").join(format!("{name}.crpt")),
            fx.features.tensor(i),
        )?;
        write_map_pgm(
            &args.out.join("gt").join(format!("{name}.pgm")),
            fx.gt.map(i),
        )?;
        write_map_pgm(
            &args.out.join("init").join(format!("{name}.pgm")),
            fx.init_maps.map(i),
        )?;
    }
    let manifest = Manifest {
        prng: PRNG_VERSION,
        images: &names,
        spec: &spec,
    };
    let json =
        serde_json::to_string_pretty(&manifest).map_err(|e| CorpError::Format(e.to_string()))?;
    write_atomic(&args.out.join("fixture.json"), json.as_bytes())?;
    println!(
        "{} images of {}×{}×{} written",
        spec.n_images, spec.channels, spec.height, spec.width
    );
    Ok(())
}
