// Price of anarchy of the regulated mechanism on generated radial networks
// of growing size.

use energy_sharing::equilibrium;
use energy_sharing::scenario::{gen_scenario, GenStyle};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let style = GenStyle::default();
    println!("{:>4} {:>14} {:>14}", "I", "PoA - 1", "bound - 1");
    for size in [2, 4, 8, 16, 32] {
        let scenario = gen_scenario(11, size, &style)?.to_scenario()?;
        let report = equilibrium::poa(&scenario)?;
        let bound = report.upper_bound.map_or(f64::NAN, |b| b - 1.0);
        println!("{size:>4} {:>14.3e} {:>14.3e}", report.poa - 1.0, bound);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
