//! Compares the planar Gelfand curve with its closed form.
use shootscale::ivp::IntegratorSettings;
use shootscale::model::NonlinearityModel;
use shootscale::shoot;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = IntegratorSettings::default();
    let mut worst: f64 = 0.0;
    for b in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
        let alpha = 2.0 * f64::ln(1.0 + b);
        let exact = 8.0 * b / ((1.0 + b) * (1.0 + b));
        let (lam, _) = shoot::lambda_of_alpha(&NonlinearityModel::gelfand(), alpha, 2, &s)?.unwrap();
        let rel = (lam - exact).abs() / exact;
        worst = worst.max(rel);
        println!("alpha={alpha:.6} lambda={lam:.12} exact={exact:.12} rel={rel:.1e}");
    }
    println!("worst relative error {worst:.1e}");
    Ok(())
}
