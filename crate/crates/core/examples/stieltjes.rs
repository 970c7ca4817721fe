//! Stieltjes transform of the two-hop product channel vs eigenvalue averages.

use ris_mimo::channel::LinkStatistics;
use ris_mimo::large_system::{stieltjes_monte_carlo, stieltjes_product};
use ris_mimo::linalg::{CMatrix, HermitianPsd};

fn main() -> ris_mimo::error::Result<()> {
    let n = 64;
    let link = LinkStatistics {
        r: HermitianPsd::identity(n),
        t: HermitianPsd::identity(n),
        los: CMatrix::zeros(n, n),
        kappa: 0.0,
        gain: 1.0,
    };
    for omega in [0.5, 1.0, 2.0] {
        let de = stieltjes_product(&link, &link, omega)?;
        let (mc, se) = stieltjes_monte_carlo(&link, &link, omega, 200, 1)?;
        println!("omega {omega}: analytic {de:.5}, eigenvalue average {mc:.5} +- {se:.5}");
    }
    Ok(())
}
