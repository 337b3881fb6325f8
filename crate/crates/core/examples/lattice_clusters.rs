//! Triangular lattice neighborhoods and cluster labeling of a site mask.

use percdetect::cluster::{crossing_cluster_exists, label_clusters, SiteMask};
use percdetect::lattice::{largest_square, Lattice, SiteId};

fn main() -> percdetect::Result<()> {
    let lattice = Lattice::new(6)?;
    let center = lattice.center();
    let nbrs: Vec<_> = lattice.neighbors(center).map(|s| (s.row, s.col)).collect();
    println!("center {:?} has neighbors {nbrs:?}", (center.row, center.col));
    println!("corner (0,0) has degree {}", lattice.degree(SiteId::new(0, 0)));

    // an anti-diagonal staircase is connected on this lattice
    let mut mask = SiteMask::empty(lattice);
    for i in 0..6 {
        mask.mark(SiteId::new(i, 5 - i));
    }
    mask.mark(SiteId::new(0, 0));
    mask.mark(SiteId::new(1, 0));
    let labels = label_clusters(&mask);
    println!(
        "{} clusters, sizes {:?}, max {}",
        labels.cluster_count(),
        labels.size_multiset(),
        labels.max_cluster_size()
    );
    println!("crossing cluster: {}", crossing_cluster_exists(&mask));
    println!("largest contained square: {}", largest_square(&mask));
    Ok(())
}
