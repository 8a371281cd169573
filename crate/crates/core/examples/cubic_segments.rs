//! Traces the cubic nonlinearity, whose curve splits into separate segments.
use shootscale::curve::{self, Shape, TraceOptions};
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = NonlinearityModel::cubic(0.05, 1.0, 2.5)?;
    println!("hypothesis holds: {:?}", model.cubic_hypothesis_holds());
    let (lo, hi) = curve::default_alpha_range(&model);
    let c = curve::trace(&model, 2, lo, hi, &TraceOptions::for_model(&model))?;
    for g in &c.gaps {
        println!("gap [{:.6}, {:.6}] {}", g.lo, g.hi, g.reason.as_str());
    }
    if let Shape::Disconnected(segs) = &c.shape {
        for s in segs {
            println!("segment [{:.6}, {:.6}] {}", s.alpha_lo, s.alpha_hi, s.shape);
            for t in &s.turning_points {
                println!("  {:?} alpha*={:.6} lambda*={:.6}", t.kind, t.alpha_star, t.lambda_star);
            }
        }
    }
    Ok(())
}
