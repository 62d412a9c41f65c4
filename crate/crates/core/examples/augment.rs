//! Applies the segmentation augmentation to a sphere and reports how the
//! mask changes across seeds.

use noduleguide::voxelcore::{apply_augmentation, flip_volume, AugSpec, Geometry, Mask, Volume};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = Geometry::isotropic([32, 32, 32])?;
    let inside = |i: usize| {
        let [z, y, x] = g.coords(i);
        let d2 = [z, y, x].iter().map(|&c| (c as f64 - 15.5).powi(2)).sum::<f64>();
        d2 <= 64.0
    };
    let vol = Volume::from_intensities(g, (0..g.len()).map(|i| if inside(i) { -200.0 } else { -800.0 }).collect())?;
    let mask = Mask::new(g, (0..g.len()).map(inside).collect())?;
    println!("original mask {} voxels", mask.count());
    let spec = AugSpec::segmentation();
    for seed in 0..5 {
        let (v, m) = apply_augmentation(&vol, &mask, &spec, seed)?;
        let bright = v.intensities()?.iter().filter(|&&h| h > -500.0).count();
        println!("seed {seed}: mask {} voxels, bright {bright}", m.count());
    }
    println!("flip twice is identity: {}", flip_volume(&flip_volume(&vol, 2), 2) == vol);
    Ok(())
}
