use std::path::PathBuf;

use clap::Args;
use corp::io::{read_map_pgm, write_atomic};
use corp::metrics::evaluate;
use corp::tensor::bilinear_resize;
use corp::{CorpError, MapGroup};

use crate::group::{member, stems};
use crate::Failure;

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of predicted <name>.pgm maps
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth <name>.pgm maps
    #[arg(long)]
    gt: PathBuf,
    /// Metrics CSV to write
    #[arg(long)]
    out: PathBuf,
    /// Group label for the CSV (defaults to the ground-truth directory name)
    #[arg(long)]
    group: Option<String>,
}

pub fn eval(args: &EvalArgs) -> Result<(), Failure> {
    let ids = stems(&args.gt, "pgm")?;
    let mut preds = Vec::with_capacity(ids.len());
    let mut gts = Vec::with_capacity(ids.len());
    for id in &ids {
        let gt_path = member(&args.gt, id, "pgm")?;
        let gt = read_map_pgm(&gt_path)?;
        if let Some(first) = gts.first() {
            let first: &corp::Tensor = first;
            if first.dims() != gt.dims() {
                return Err(CorpError::Shape(format!(
                    "ground truth is {:?} but the group's first map is {:?}",
                    gt.dims(),
                    first.dims()
                ))
                .in_file(gt_path)
                .into());
            }
        }
        let pred_path = member(&args.pred, id, "pgm")?;
        let pred = read_map_pgm(&pred_path)?;
        // Predictions made at another resolution are compared at the ground truth's.
        let (h, w) = (gt.dims()[0], gt.dims()[1]);
        preds.push(bilinear_resize(&pred, h, w).map_err(|e| e.in_file(&pred_path))?);
        gts.push(gt);
    }
    let report = evaluate(&MapGroup::new(preds)?, &MapGroup::new(gts)?, &ids)?;
    let group = args.group.clone().unwrap_or_else(|| {
        args.gt
            .file_name()
            .map_or_else(|| "group".into(), |n| n.to_string_lossy().into_owned())
    });
    write_atomic(&args.out, report.to_csv(&group).as_bytes())?;
    println!(
        "{group}: {} images, mae {:.4}, fmax {:.4}, favg {:.4}, smeasure {:.4}, emean {:.4}",
        ids.len(),
        report.mae,
        report.f_max,
        report.f_avg,
        report.s_measure,
        report.e_mean
    );
    Ok(())
}
