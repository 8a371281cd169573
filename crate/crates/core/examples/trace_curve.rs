//! Traces `lambda(alpha)` for the perturbed Gelfand problem and prints its folds.
use shootscale::curve;
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let eps: f64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(0.22);
    let model = NonlinearityModel::perturbed_gelfand(eps)?;
    let c = curve::trace_default(&model, 2)?;
    println!("epsilon={eps} shape={} samples={}", c.shape, c.points.len());
    for t in &c.turning_points {
        println!("{:?} alpha*={:.6} lambda*={:.8}", t.kind, t.alpha_star, t.lambda_star);
    }
    Ok(())
}
