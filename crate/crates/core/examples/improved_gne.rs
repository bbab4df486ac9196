// Loads a scenario file and computes the regulated-market equilibrium with
// its self-consistency residuals.

use energy_sharing::equilibrium;
use energy_sharing::scenario::ScenarioFile;

const SCENARIO: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/two_bus_f10.json"));

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = ScenarioFile::parse(SCENARIO)?.to_scenario()?;
    let eqm = equilibrium::improved_gne(&scenario)?;
    for i in 0..scenario.size() {
        println!(
            "prosumer {}: p = {:.3}, b = {:.3}, price = {:.4}, cost = {:.3}",
            i + 1,
            eqm.p_bar[i],
            eqm.b_bar[i],
            eqm.lambda_r[i],
            eqm.costs[i]
        );
    }
    println!("net payment {:.6}", eqm.net_payment);
    println!("residuals {:?}", eqm.residuals);
    println!("pareto {:?}", equilibrium::pareto_check(&scenario, &eqm));
    if eqm.residuals.reclear_price > 1e-6 {
        return Err("re-clearing the equilibrium bids moved the prices".into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
