//! Maps limiting-problem solutions to mu-form solutions and checks them by direct shots.
use shootscale::ivp::IntegratorSettings;
use shootscale::transform::{self, LimitingMapper};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mapper = LimitingMapper::new(IntegratorSettings::default());
    let (v0, eta0) = mapper.limiting_fold()?;
    println!("limiting fold v0={v0:.6} eta0={eta0:.6}");
    let eps = 0.22;
    let alphas: Vec<f64> = (0..8).map(|i| v0 + 0.05 + i as f64).collect();
    for p in mapper.map_all(&alphas, eps)? {
        let d = transform::cross_validate(&p, eps, mapper.settings())?;
        println!("w0={:.6} mu={:.8} direct discrepancy={d:.1e}", p.w0, p.mu);
    }
    let cert = transform::mu_monotonicity_check(&mapper, eps, &alphas)?;
    println!("mu monotone: {}", cert.pass);
    Ok(())
}
