//! Standardized noise families, the nondegeneracy check, and detector clipping.

use percdetect::lattice::{DiscretizedPicture, Lattice};
use percdetect::noise::{apply_noise, detector_truncate, estimate_pi_d, validate_nondegeneracy, DetectorDevice, NoiseModel};

fn main() -> percdetect::Result<()> {
    let models: Vec<NoiseModel> = ["gaussian", "laplace", "uniform", "student_t nu=5", "discrete support=-1,1 weights=1,1"]
        .iter()
        .map(|d| d.parse())
        .collect::<Result<_, _>>()?;
    for m in &models {
        let (mean, var) = m.moments();
        let nd = validate_nondegeneracy(m);
        println!(
            "{:<40} mean {mean:+.3} var {var:.3}  P(eps > 0.5) = {:.4}  nondegenerate: {} {:?}",
            m.to_string(),
            m.upper_tail(0.5),
            nd.ok,
            nd.mode
        );
    }

    let picture = DiscretizedPicture::centered_square(Lattice::new(32)?, 8, 1.0)?;
    let noisy = apply_noise(&picture, 0.5, &models[0], 7)?;
    let device = DetectorDevice::new(1.0)?;
    let clipped = detector_truncate(&noisy, &device);
    let changed = noisy.values().iter().zip(clipped.values()).filter(|(a, b)| a != b).count();
    println!("clipping to [-1, 1] changed {changed} of {} sites", noisy.values().len());
    for (intensity, sigma) in [(0.5, 0.1), (0.5, 0.2), (1.0, 0.2)] {
        let picture = DiscretizedPicture::centered_square(Lattice::new(32)?, 8, intensity)?;
        let pi = estimate_pi_d(&picture, sigma, &models[0], &device, 2000, 7)?;
        println!(
            "P(no site clipped), intensity {intensity}, sigma {sigma}: {:.3} +- {:.3}",
            pi.estimate, pi.std_error
        );
    }
    Ok(())
}
