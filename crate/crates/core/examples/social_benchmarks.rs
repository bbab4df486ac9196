// Benchmarks next to the regulated equilibrium: social optimum, price-taking
// bids, self-sufficiency and the variational equilibrium.

use energy_sharing::equilibrium;
use energy_sharing::market::Prosumer;
use energy_sharing::{LineSpec, NetworkModel, Scenario};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for limit in [10.0, 200.0] {
        let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, limit)], 1)?;
        let prosumers = vec![Prosumer::new(0.003, 0.42, 100.0), Prosumer::new(0.006, 0.72, 200.0)];
        let scenario = Scenario::new(net, prosumers, 10.0)?;

        println!("line limit {limit}");
        let social = equilibrium::social_optimum(&scenario)?;
        println!("  social optimum p = {:.3?}, costs {:.3?}, total {:.3}", social.p_tilde(), social.costs, social.total_cost);
        let taking = equilibrium::price_taking_equilibrium(&scenario)?;
        println!("  price taking  λ = {:.4?}, b = {:.3?}", taking.lambda_tilde, taking.b_tilde);
        let alone = equilibrium::self_sufficiency(&scenario);
        println!("  self-sufficiency costs {:?}, total {}", alone.costs, alone.total);
        let ve = equilibrium::variational_equilibrium(&scenario)?;
        println!("  variational eq. λ = {:.4?}, b = {:.3?}", ve.lambda, ve.b_bar);
        let gne = equilibrium::improved_gne(&scenario)?;
        println!("  regulated eq. total disutility {:.3}", gne.total_disutility);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
