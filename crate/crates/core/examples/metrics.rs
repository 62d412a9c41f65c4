//! Box matching, average precision and DSC on a small hand-made example.

use noduleguide::metrics::{average_precision, case_outcome, dsc, iou3d, match_detections, Detection};
use noduleguide::voxelcore::{BBox3, Geometry, Mask};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gts = [BBox3::new([0, 0, 0], [4, 4, 4])?, BBox3::new([8, 8, 8], [12, 12, 12])?];
    let dets = [
        Detection { bbox: BBox3::new([0, 0, 1], [4, 4, 5])?, score: 0.9 },
        Detection { bbox: BBox3::new([20, 20, 20], [24, 24, 24])?, score: 0.8 },
        Detection { bbox: BBox3::new([8, 8, 8], [12, 12, 12])?, score: 0.4 },
    ];
    for d in &dets {
        println!("{:?}: IoU with gt0 {:.3}, gt1 {:.3}", d.bbox.min, iou3d(&d.bbox, &gts[0]), iou3d(&d.bbox, &gts[1]));
    }
    let m = match_detections(&dets, &gts, 0.5);
    println!("tp {} fp {} fn {}", m.tp, m.fp, m.fn_);
    println!("AP50 {:.4}  AP70 {:.4}", average_precision(&dets, &gts, 0.5)?, average_precision(&dets, &gts, 0.7)?);
    println!("verdict {:?}", case_outcome(&dets, &gts, 0.5).verdict);

    let g = Geometry::isotropic([16, 16, 16])?;
    let boxed = |b: &BBox3| Mask::new(g, (0..g.len()).map(|i| b.contains_point(g.coords(i).map(|c| c as f64))).collect());
    let a = boxed(&gts[0])?;
    let b = boxed(&dets[0].bbox)?;
    println!("DSC {:.4}", dsc(&a, &b)?);
    Ok(())
}
