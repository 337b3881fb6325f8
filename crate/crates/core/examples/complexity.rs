//! Timing and union-find operation counts against N^2.

use percdetect::perclab::{complexity_probe, ProbeMode};

fn main() -> percdetect::Result<()> {
    for mode in [ProbeMode::Single, ProbeMode::Multi] {
        let table = complexity_probe(&[64, 128, 256, 512], mode, 5, 0)?;
        print!("{:?}\n{}", mode, table.to_csv());
        if let Some(c) = table.fitted_constant(1.5) {
            println!("ops <= {c:.3} N^2 log2 N at every size: {}", table.ops_within(c));
        }
    }
    Ok(())
}
