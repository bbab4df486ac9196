// Distribution factors of a small meshed network, checked against a direct
// DC power-flow solve.

use energy_sharing::{LineSpec, NetworkModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let lines = vec![
        LineSpec::new(0, 1, 1.0, 2.0),
        LineSpec::new(1, 2, 2.0, f64::INFINITY),
        LineSpec::new(0, 2, 1.0, 2.0),
        LineSpec::new(2, 3, 1.5, 1.0),
    ];
    let net = NetworkModel::with_default_slack(4, lines)?;
    println!("slack bus: {}", net.slack() + 1);
    println!("radial: {}", net.is_radial());
    println!("PTDF (rows = buses, columns = lines):\n{:.4}", net.ptdf());

    // Bus 1 sells 1.5, buses 2 and 4 buy.
    let withdrawals = [-1.5, 0.5, 0.0, 1.0];
    let flows = net.line_flows(&withdrawals)?;
    let injections: Vec<f64> = withdrawals.iter().map(|q| -q).collect();
    let direct = net.dc_flow_oracle(&injections)?;
    for (l, (f, g)) in flows.iter().zip(&direct).enumerate() {
        println!("line {}: ptdf flow {f:+.6}, angle solve {g:+.6}", l + 1);
        if (f - g).abs() > 1e-9 {
            return Err(format!("line {} disagrees", l + 1).into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
