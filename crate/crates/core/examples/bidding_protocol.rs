// Runs the iterative bidding protocol, prints the trace as CSV and checks
// that the distance to the equilibrium never grows.

use energy_sharing::bidding::{self, BiddingConfig};
use energy_sharing::equilibrium;
use energy_sharing::scenario::ScenarioFile;

const SCENARIO: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/two_bus_f5.json"));

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = ScenarioFile::parse(SCENARIO)?.to_scenario()?;
    let eqm = equilibrium::improved_gne(&scenario)?;
    let run = bidding::run_bidding(&scenario, &BiddingConfig::default().with_epsilon(1e-4))?;
    println!("{:?} after {} rounds, final bids {:.4?}", run.termination, run.iterations, run.b);

    let mut csv = Vec::new();
    bidding::write_trace_csv(&run.trace, Some(&eqm), &mut csv)?;
    print!("{}", String::from_utf8(csv)?);

    let fejer = bidding::fejer_check(&run.trace, &eqm);
    println!("distance non-increasing: {}", fejer.monotone);
    if !run.converged() || !fejer.monotone {
        return Err("bidding did not settle monotonically".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
