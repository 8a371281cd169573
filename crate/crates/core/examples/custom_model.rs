//! Builds a model from key=value pairs, as a config file would.
use shootscale::curve;
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = "family=power_sum p=0.5 q=2";
    let model = NonlinearityModel::from_pairs(text.split_whitespace().filter_map(|t| t.split_once('=')))?;
    println!("{model}");
    for u in [0.1, 1.0, 10.0] {
        println!("u={u} f={:.6} log-concave={}", model.value(u)?, model.log_concave_at(u)?);
    }
    let c = curve::trace_default(&model, 2)?;
    println!("shape={} folds={}", c.shape, c.turning_points.len());
    Ok(())
}
