//! Runs the linearized-problem certificates at every fold.
use shootscale::curve;
use shootscale::ivp::IntegratorSettings;
use shootscale::linearized;
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = NonlinearityModel::perturbed_gelfand(0.22)?;
    let c = curve::trace_default(&model, 2)?;
    for t in &c.turning_points {
        println!("{:?} at alpha={:.6}", t.kind, t.alpha_star);
        for cert in linearized::certify_turning_point(&model, 2, t, &IntegratorSettings::default())? {
            let margins: Vec<String> = cert.margins.iter().map(|m| format!("{}={:.3e}", m.name, m.value)).collect();
            println!("  {:?} pass={} {}", cert.kind, cert.pass, margins.join(" "));
        }
    }
    Ok(())
}
