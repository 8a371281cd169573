//! Collects all solutions at one lambda inside the fold window and checks they are ordered.
use shootscale::curve;
use shootscale::ivp::IntegratorSettings;
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = NonlinearityModel::perturbed_gelfand(0.22)?;
    let c = curve::trace_default(&model, 2)?;
    let [max, min] = &c.turning_points[..] else { return Err("expected two folds".into()) };
    let lambda = 0.5 * (max.lambda_star + min.lambda_star);
    let set = curve::solutions_at(&c, &model, 2, lambda, &IntegratorSettings::default())?;
    for s in &set.solutions {
        println!("alpha={:.6} lambda={:.10}", s.alpha, s.lambda);
    }
    println!("ordered={} min_separation={:.3e}", set.ordered, set.min_separation);
    Ok(())
}
