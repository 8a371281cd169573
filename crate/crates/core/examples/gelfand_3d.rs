//! The Gelfand problem in three dimensions oscillates around its singular solution.
use shootscale::curve::{self, TraceOptions};
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = NonlinearityModel::gelfand();
    let c = curve::trace(&model, 3, 0.1, 100.0, &TraceOptions::default())?;
    println!("shape={}", c.shape);
    for t in &c.turning_points {
        // folds approach lambda = 2 (n - 2) = 2
        println!("{:?} alpha*={:.6} lambda*={:.10}", t.kind, t.alpha_star, t.lambda_star);
    }
    Ok(())
}
