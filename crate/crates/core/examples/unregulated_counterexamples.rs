// The unregulated game on small networks: a unique equilibrium, a candidate
// that one prosumer profitably abandons, and a set of equilibria that share
// the same production.

use energy_sharing::brlab::{self, ScanConfig};
use energy_sharing::market;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScanConfig::default();

    let two = brlab::classify_gne_2bus(1.0, 1.0, 0.5, 0.1);
    println!("two buses, tight line: {:?}, segment {:?}, p = {:.4?}", two.regime, two.segment, two.p);

    let loose = brlab::example2_scenario(1.0, [1.0, 1.0, 0.0], 0.3)?;
    let candidate = [1.6, 1.6, 0.8];
    let check = brlab::verify_gne(&loose, &candidate, 1e-6, &cfg)?;
    println!("limit 0.30: candidate is an equilibrium: {}", check.is_gne);

    let tight = brlab::example2_scenario(1.0, [1.0, 1.0, 0.0], 0.27)?;
    let scan = brlab::best_response(&tight, 1, &candidate, &cfg)?;
    println!("limit 0.27: prosumer 2 local minima {:?}", scan.local_minima);
    println!("  stays at {:.4} with cost {:.5}, deviates to {:.4} with cost {:.5}",
        scan.current().b, scan.current().gamma, scan.best.b, scan.best.gamma);

    let multi = brlab::example2_scenario(1.0, [0.0, 1.0, 1.0], 1.0 / 3.0)?;
    for bids in [[1.18, 1.68, 1.68], [1.22, 1.72, 1.72]] {
        let region = brlab::example2_region(&multi, &bids)?;
        let out = market::clear_market(&multi, &bids)?;
        let p: Vec<f64> = multi.prosumers().iter().zip(&out.q).map(|(pr, q)| pr.demand - q).collect();
        let ok = brlab::verify_gne(&multi, &bids, 1e-6, &cfg)?.is_gne;
        println!("bids {bids:?}: region {:?}, equilibrium {ok}, p = {p:.4?}", region.region);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
