//! Simulate an image, write it as PGM, read it back and detect.

use percdetect::app::{detect_image, image_to_observed, observed_to_image, simulate_image, Command, RunConfig};
use percdetect::pgm::{load_pgm, save_pgm, PgmFormat};

fn main() -> percdetect::Result<()> {
    let dir = std::env::temp_dir().join("percdetect-example");
    std::fs::create_dir_all(&dir).map_err(|source| percdetect::Error::Io { path: dir.clone(), source })?;

    let mut cfg = RunConfig::new(Command::Simulate);
    cfg.n = Some(64);
    cfg.sigma = 0.8;
    cfg.seed = 5;
    let image = simulate_image(&cfg)?;
    let path = dir.join("scene.pgm");
    save_pgm(&path, &observed_to_image(&image, cfg.r, 255)?, PgmFormat::Binary)?;

    let pgm = load_pgm(&path)?;
    println!("{} is {}x{} maxval {}", path.display(), pgm.width(), pgm.height(), pgm.maxval());
    let observed = image_to_observed(&pgm, cfg.r, None, 64)?;

    cfg.command = Command::Detect;
    cfg.replicates = 400;
    let report = detect_image(&cfg, &observed)?;
    println!(
        "decision {} with statistic {:?} against phi {:?} (tau0 {:?})",
        report.decision, report.statistic, report.phi, report.tau0
    );
    Ok(())
}
