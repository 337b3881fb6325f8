//! Type I and type II error rates across lattice sizes with log-linear fits.

use percdetect::noise::NoiseModel;
use percdetect::perclab::{estimate_error_rates, ErrorRateRequest, RatePhi, SignalSpec, SquareSide};

fn main() -> percdetect::Result<()> {
    let model = NoiseModel::gaussian();
    let fit = estimate_error_rates(&ErrorRateRequest {
        ns: &[32, 64, 128],
        signal: SignalSpec {
            side: SquareSide::Fraction { fraction: 0.25 },
            intensity: 0.8,
        },
        model: &model,
        sigma: 1.0,
        tau: 1.0,
        phi_mode: RatePhi::FixedK0 { k0: 6.0 },
        replicates: 2000,
        seed: 1,
    })?;
    print!("{}", fit.to_csv());
    Ok(())
}
