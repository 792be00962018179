use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use corp::io::{write_atomic, write_map_pgm};
use corp::rpp::{run_configured, IterationRecord};
use corp::tensor::bilinear_resize;
use corp::types::{DEFAULT_ITERS, DEFAULT_K};
use corp::{
    score_all, CorpError, DecoderRegistry, FeatureGroup, MapGroup, PipelineConfig, ProxyMode,
    Result,
};
use serde::Serialize;

use crate::group::{create_dir, load_features, load_maps, stems};
use crate::Failure;

const ALL_ONES: &str = "all-ones";

#[derive(Clone, Copy, ValueEnum)]
pub enum ProxyModeArg {
    /// Pool embeddings under the previous iteration's maps
    Maps,
    /// Pool under the ground truth at every iteration
    Gt,
}

#[derive(Args)]
pub struct RunArgs {
    /// Directory of <name>.crpt D×H×W embedding tensors
    #[arg(long)]
    features: PathBuf,
    /// Directory of <name>.pgm initial maps, or "all-ones"
    #[arg(long)]
    init_maps: String,
    /// Output directory for the final maps
    #[arg(long)]
    out: PathBuf,
    /// Number of co-representation locations
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Purification iterations
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    #[arg(long, default_value = corp::decoder::REFERENCE)]
    decoder: String,
    #[arg(long, value_enum, default_value = "maps")]
    proxy_mode: ProxyModeArg,
    /// Directory of <name>.pgm ground-truth maps; enables purity tracking
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Also write every iteration's maps and a JSON-lines trace
    #[arg(long)]
    trace: bool,
    /// Write every location's score at every iteration to this CSV
    #[arg(long)]
    dump_scores: Option<PathBuf>,
    /// L2-normalize embeddings on load instead of requiring unit norm
    #[arg(long)]
    normalize: bool,
    /// Threshold maps at 0.5 before pooling the proxy
    #[arg(long)]
    binarize: bool,
    /// Most locations any single image may contribute
    #[arg(long)]
    per_image_cap: Option<usize>,
}

#[derive(Serialize)]
struct Selected<'a> {
    image: &'a str,
    row: usize,
    col: usize,
    score: f32,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    t: usize,
    proxy_norm: f64,
    degenerate: bool,
    purity: Option<f64>,
    selected: Vec<Selected<'a>>,
}

fn write_maps(
    dir: &Path,
    stems: &[String],
    maps: &MapGroup,
    sizes: &[(usize, usize)],
) -> Result<()> {
    create_dir(dir)?;
    for ((stem, map), &(h, w)) in stems.iter().zip(maps.maps()).zip(sizes) {
        write_map_pgm(
            &dir.join(format!("{stem}.pgm")),
            &bilinear_resize(map, h, w)?,
        )?;
    }
    Ok(())
}

fn trace_line(rec: &IterationRecord, stems: &[String]) -> Result<String> {
    let line = TraceLine {
        t: rec.t,
        proxy_norm: rec.proxy.norm(),
        degenerate: rec.proxy.is_degenerate(),
        purity: rec.purity,
        selected: rec
            .corep
            .coords()
            .iter()
            .zip(rec.corep.scores())
            .map(|(c, &score)| Selected {
                image: &stems[c.image],
                row: c.row,
                col: c.col,
                score,
            })
            .collect(),
    };
    serde_json::to_string(&line).map_err(|e| CorpError::Format(e.to_string()))
}

fn score_dump(
    features: &FeatureGroup,
    records: &[IterationRecord],
    stems: &[String],
) -> Result<String> {
    let mut out = String::from("t,image,row,col,score,selected\n");
    let plane = features.plane();
    for rec in records {
        let scores = score_all(features, &rec.proxy)?;
        let mut picked = vec![false; scores.len()];
        for c in rec.corep.coords() {
            picked[c.image * plane + c.row * features.width() + c.col] = true;
        }
        for (i, s) in scores.iter().enumerate() {
            let c = features.coord_of(i);
            let _ = writeln!(
                out,
                "{},{},{},{},{s},{}",
                rec.t,
                stems[c.image],
                c.row,
                c.col,
                u8::from(picked[i])
            );
        }
    }
    Ok(out)
}

pub fn run(args: &RunArgs) -> std::result::Result<(), Failure> {
    let stems = stems(&args.features, "crpt")?;
    let features = load_features(&args.features, &stems, args.normalize)?;
    let (h, w) = (features.height(), features.width());
    let (init, sizes) = if args.init_maps == ALL_ONES {
        (
            MapGroup::ones(stems.len(), h, w)?,
            vec![(h, w); stems.len()],
        )
    } else {
        load_maps(Path::new(&args.init_maps), &stems, h, w)?
    };
    let gt = match &args.gt {
        Some(dir) => Some(load_maps(dir, &stems, h, w)?.0),
        None => None,
    };
    let cfg = PipelineConfig {
        k: args.k,
        iters: args.iters,
        decoder: args.decoder.clone(),
        proxy_mode: match args.proxy_mode {
            ProxyModeArg::Maps => ProxyMode::FromMaps,
            ProxyModeArg::Gt => ProxyMode::FromGroundTruth,
        },
        binarize_maps: args.binarize,
        per_image_cap: args.per_image_cap,
        ..Default::default()
    };
    let trace = run_configured(
        &features,
        &init,
        gt.as_ref(),
        &cfg,
        &DecoderRegistry::with_builtin(),
    )?;

    write_maps(&args.out, &stems, trace.final_maps(&init), &sizes)?;
    if args.trace {
        let mut lines = String::new();
        for rec in trace.iterations() {
            write_maps(
                &args.out.join("trace").join(format!("t{}", rec.t)),
                &stems,
                &rec.maps,
                &sizes,
            )?;
            lines.push_str(&trace_line(rec, &stems)?);
            lines.push('\n');
        }
        write_atomic(&args.out.join("trace.jsonl"), lines.as_bytes())?;
    }
    if let Some(path) = &args.dump_scores {
        write_atomic(
            path,
            score_dump(&features, trace.iterations(), &stems)?.as_bytes(),
        )?;
    }
    Ok(())
}
