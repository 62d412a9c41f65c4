//! Evaluates each training loss and checks its gradient numerically.

use noduleguide::losses::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pair = ProbTargetPair::new(vec![0.8, 0.3, 0.6, 0.1], vec![1.0, 0.0, 1.0, 0.0])?;
    let y = pair.y().to_vec();
    for (name, f, g) in [
        ("cross entropy", cross_entropy as fn(&ProbTargetPair) -> f64, cross_entropy_grad as fn(&ProbTargetPair) -> Vec<f64>),
        ("dice", dice_loss, dice_loss_grad),
        ("dual", dual_loss, dual_loss_grad),
    ] {
        let numeric = numeric_gradient(|p| f(&ProbTargetPair::new(p.to_vec(), y.clone()).unwrap()), pair.p(), 1e-6)?;
        println!("{name:<13} {:.6}  grad {:?}  numeric {:?}", f(&pair), g(&pair), numeric);
    }

    let boxes = BoxRegressionPair::new(vec![10.0, 12.0, 9.0, 6.0, 6.0, 5.0], vec![11.0, 12.5, 9.0, 5.0, 6.0, 5.5], 1.0)?;
    println!("smooth L1     {:.6}  grad {:?}", smooth_l1(&boxes), smooth_l1_grad(&boxes));

    let params = FocalParams::default();
    for p in [0.1, 0.5, 0.9] {
        println!("focal p={p}    y=1 {:.6}  y=0 {:.6}", focal_loss(p, 1, params)?, focal_loss(p, 0, params)?);
    }
    Ok(())
}
