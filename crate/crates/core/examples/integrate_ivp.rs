//! One radial integration with explicit stop events.
use shootscale::ivp::{self, EventKind, IntegratorSettings};
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = NonlinearityModel::perturbed_gelfand(0.2)?;
    let settings = IntegratorSettings::default();
    let p = ivp::integrate(&model, 3.0, 1.0, 2, &settings, &[EventKind::ZeroCrossing])?;
    println!("termination {:?} at r = {:.10}", p.termination, p.r_end());
    for e in &p.events {
        println!("event {:?} r={:.8} u={:.3e} u'={:.8}", e.kind, e.r, e.u, e.du);
    }
    for r in [0.0, 0.25 * p.r_end(), 0.5 * p.r_end()] {
        let (u, du) = p.eval(r).unwrap();
        let (res, _) = p.residual(&model, r)?;
        println!("r={r:.4} u={u:.8} u'={du:.8} residual={res:.1e}");
    }
    Ok(())
}
