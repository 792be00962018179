use clap::{Args, ValueEnum};
use corp::fixtures::FixtureRng;
use corp::losses::grad_check_iou;
use corp::types::LossReduction;
use corp::{MapGroup, Tensor};

use crate::Failure;

#[derive(Clone, Copy, ValueEnum)]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Number of random points to check
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest allowed relative error
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, value_enum, default_value = "mean")]
    reduction: Reduction,
}

fn random_group(
    rng: &mut FixtureRng,
    n: usize,
    h: usize,
    w: usize,
    f: impl Fn(&mut FixtureRng) -> f64,
) -> MapGroup<f64> {
    let maps = (0..n)
        .map(|_| {
            Tensor::new(vec![h, w], (0..h * w).map(|_| f(rng)).collect()).expect("dims match data")
        })
        .collect();
    MapGroup::new(maps).expect("values in [0, 1]")
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), Failure> {
    let reduction = match args.reduction {
        Reduction::Mean => LossReduction::Mean,
        Reduction::Sum => LossReduction::Sum,
    };
    let mut rng = FixtureRng::new(args.seed);
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < args.trials {
        let (n, h, w) = (rng.range(1, 3), rng.range(1, 6), rng.range(1, 6));
        let pred = random_group(&mut rng, n, h, w, |r| 0.02 + 0.96 * r.uniform());
        let gt = random_group(
            &mut rng,
            n,
            h,
            w,
            |r| if r.uniform() < 0.5 { 1.0 } else { 0.0 },
        );
        let report = grad_check_iou(&pred, &gt, reduction, args.step, args.tol)?;
        if report.precondition.is_some() {
            skipped += 1;
            continue;
        }
        worst = worst.max(report.max_rel_error);
        if !report.passed {
            return Err(Failure::Check(format!(
                "point {checked}: relative error {:.3e} exceeds {:.1e} (analytic {}, numeric {})",
                report.max_rel_error, args.tol, report.analytic, report.numeric
            )));
        }
        checked += 1;
    }
    println!("gradcheck: {checked} points passed ({skipped} skipped near ties), max relative error {worst:.3e}");
    Ok(())
}
