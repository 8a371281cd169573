//! Scans epsilon and locates the value where the two folds merge.
use shootscale::curve::{self, TraceOptions};
use shootscale::model::NonlinearityModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let template = NonlinearityModel::perturbed_gelfand(0.2)?;
    let opts = TraceOptions::default();
    let eps = [0.20, 0.21, 0.22, 0.23, 0.24, 0.25];
    print!("{}", curve::scan_epsilon(&template, &eps, 2, None, &opts)?.to_csv());
    let e0 = curve::find_epsilon0(&template, (0.22, 0.25), 2, &opts)?;
    println!("epsilon0={:.5} in [{:.5}, {:.5}]", e0.epsilon0, e0.lo, e0.hi);
    Ok(())
}
