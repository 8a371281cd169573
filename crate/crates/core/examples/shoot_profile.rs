//! Solves the Dirichlet problem for a given height and writes the profile.
use shootscale::ivp::IntegratorSettings;
use shootscale::model::NonlinearityModel;
use shootscale::shoot::{self, SlopeShot};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = NonlinearityModel::perturbed_gelfand(0.22)?;
    let s = IntegratorSettings::default();
    let sol = shoot::bvp_profile(&model, 4.0, 2, &s)?.ok_or("no zero for this height")?;
    println!("alpha=4 lambda={:.10} reshoot residual={:.1e}", sol.lambda, sol.reshoot_residual(&model, &s)?);
    if let SlopeShot::Zero(x) = shoot::lambda_with_slope(&model, 4.0, 2, &s)? {
        println!("dlambda/dalpha={:.8}", x.slope);
    }
    let csv = sol.profile.to_csv();
    println!("{} nodes; first rows:", sol.profile.nodes.len());
    for line in csv.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
