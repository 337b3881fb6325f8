//! Config files, the config hash, and running a command programmatically.

use percdetect::app::{run, Command, RunConfig};

fn main() -> percdetect::Result<()> {
    let mut cfg = RunConfig::new(Command::Uncertainty);
    cfg.apply_config_text("# detectability at N = 128\nn = 128\nnoise = laplace\nsigma = 2\n")?;
    cfg.out = std::env::temp_dir().join("percdetect-cli-example");
    println!("config hash {}", cfg.config_hash());
    print!("{}", cfg.to_config_text());
    let outcome = run(&cfg)?;
    println!("{}\nexit code {}", outcome.summary, outcome.exit_code);
    Ok(())
}
