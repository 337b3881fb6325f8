//! Subcritical cluster statistics and crossing probabilities for site percolation.

use percdetect::perclab::{crossing_frequency, estimate_cluster_stats, sample_configuration, verify_lambda_bound};

fn main() -> percdetect::Result<()> {
    let sample = sample_configuration(32, 0.5, 3)?;
    println!("one configuration at p = 0.5: {} of 1024 sites open", sample.mask.count());

    for p in [0.3, 0.4] {
        let stats = estimate_cluster_stats(128, p, 1000, 5)?;
        println!(
            "p = {p}: chi = {:.3} +- {:.3}, lambda = {:?}",
            stats.chi_hat, stats.chi_se, stats.lambda_hat
        );
        let b = verify_lambda_bound(&stats)?;
        println!(
            "   lambda bound {:.3} (ok {}), geometric sum {:.3} (ok {})",
            b.lambda_bound, b.lambda_bound_ok, b.geometric_sum, b.definitional_ok
        );
    }
    for p in [0.4, 0.5, 0.6] {
        let c = crossing_frequency(64, p, 200, 9)?;
        println!("crossing at p = {p}: {:.3} +- {:.3}", c.frequency, c.std_error);
    }
    Ok(())
}
