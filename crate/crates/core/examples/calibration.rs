//! Monte Carlo calibration of phi and the JSON round trip of the table.

use percdetect::detect::{calibrate_phi, CalibrationTable, NullSpec, TestConfig, TestSide};
use percdetect::noise::NoiseModel;

fn main() -> percdetect::Result<()> {
    let spec = NullSpec {
        n: 64,
        model: NoiseModel::student_t(5.0)?,
        sigma: 1.0,
        side: TestSide::Both,
        replicates: 500,
        seed: 42,
    };
    let table = calibrate_phi(&spec, 0.5, 0.05)?;
    for (alpha, phi) in &table.quantiles {
        println!("alpha {alpha:<6} phi {phi}");
    }
    for w in &table.warnings {
        println!("warning: {w}");
    }
    let json = table.to_json()?;
    let back = CalibrationTable::from_json(&json)?;
    assert_eq!(back, table);
    let config = TestConfig::calibrated(&back)?;
    println!("test config from table: phi = {}, tau = {}", config.phi, config.tau);
    Ok(())
}
