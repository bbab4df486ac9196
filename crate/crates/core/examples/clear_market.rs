// Clearing the two-prosumer market at the regulated equilibrium bids and
// evaluating regulated prices and payments.

use energy_sharing::market::{self, Prosumer};
use energy_sharing::{LineSpec, NetworkModel, Scenario};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, 5.0)], 1)?;
    let prosumers = vec![Prosumer::new(0.003, 0.42, 100.0), Prosumer::new(0.006, 0.72, 200.0)];
    let scenario = Scenario::new(net, prosumers, 10.0)?;

    let bids = [10.5, 30.6];
    let out = market::clear_market(&scenario, &bids)?;
    println!("prices    {:?}", out.lambda);
    println!("quantity  {:?}", out.q);
    println!("line flow {:?} (congested: {})", out.flows, out.congested());
    println!("KKT residual {:.2e}", market::clearing_kkt_residual(&scenario, &bids, &out)?);

    let production: Vec<f64> = scenario.prosumers().iter().zip(&out.q).map(|(p, q)| p.demand - q).collect();
    let regulated = market::regulated_price(&scenario, &out, &production)?;
    println!("regulated prices {regulated:?}");
    for (i, &p) in production.iter().enumerate() {
        let pay = market::payment_from_outcome(&scenario, &out, p, i);
        let cost = market::prosumer_cost_from_outcome(&scenario, &out, i, true);
        let alone = scenario.prosumer(i).disutility(scenario.prosumer(i).demand);
        println!("prosumer {}: payment {pay:.3}, cost {cost:.3}, self-sufficient {alone:.3}", i + 1);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
