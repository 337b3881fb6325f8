//! Detectability check of r/sigma against the lattice-size bound.

use percdetect::detect::{never_reject_bound, s_max, tau0_from_uncertainty, uncertainty_check, weak_uncertainty_bound};
use percdetect::noise::NoiseModel;

fn main() -> percdetect::Result<()> {
    let model = NoiseModel::gaussian();
    let (x, v) = s_max();
    println!("max of s(x) = {v:.6} at x = {x:.6}");
    for n in [4, 16, 64, 256, 1024] {
        let weak = weak_uncertainty_bound(&model, n)?;
        println!(
            "N = {n:>5}: bound {:.3e}, weakest detectable rho ~ {weak:.3e}, tau0 = {:.3e}",
            never_reject_bound(n),
            tau0_from_uncertainty(&model, 1.0, n)?
        );
    }
    for rho in [1e-6, 1e-3, 1.0] {
        let rep = uncertainty_check(&model, rho, 64)?;
        println!("rho = {rho:e}: lhs {:.3e} rhs {:.3e} detectable {}", rep.lhs, rep.rhs, rep.detectable);
    }
    Ok(())
}
