//! Sweeps the reference scenario's arrival rate and prints how savings trade
//! against baseline SLA compliance and completion deviation.
//!
//!     cargo run --release -p ecosched --example rate_sweep [-- seeds]

use ecosched::harness::compare;
use ecosched::{ArrivalModel, Scenario};

fn main() {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    println!("rate     savings%  rr_compliance  ea_compliance  deviation%  seeds_rr_compliant");
    for rate in [0.001, 0.0015, 0.002, 0.003, 0.005, 0.008, 0.01, 0.015, 0.02] {
        let mut s = Scenario::reference();
        s.workloads.arrival = ArrivalModel::Poisson { rate };
        let (mut sav, mut rr, mut ea, mut dev, mut ok) = (0.0, 0.0, 0.0, 0.0, 0);
        for seed in 0..seeds {
            let r = compare(&s, 3, seed * 3).expect("reference scenario runs");
            sav += r.energy_savings_pct.unwrap_or(f64::NAN);
            rr += r.round_robin.compliance_rate;
            ea += r.energy_aware.compliance_rate;
            dev += 100.0 * r.completion_deviation;
            ok += usize::from(r.round_robin.compliance_rate == 1.0);
        }
        let n = seeds as f64;
        println!(
            "{rate:<8} {:>8.1}  {:>13.3}  {:>13.3}  {:>10.2}  {ok:>5}/{seeds}",
            sav / n,
            rr / n,
            ea / n,
            dev / n
        );
    }
}
