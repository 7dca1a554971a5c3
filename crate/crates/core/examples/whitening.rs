//! Fit a PCA whitener on anisotropic data and check what it does.
//!
//! cargo run --release --example whitening

use whitebench::numkit::{Matrix, SeededRng};
use whitebench::whitening::{Whitener, DEFAULT_EPSILON};

fn main() -> whitebench::Result<()> {
    let (n, d) = (2000, 4);
    let mut rng = SeededRng::new(3);
    // axis scales spanning two orders of magnitude, then a shear
    let scales = [10.0, 3.0, 1.0, 0.1];
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..d {
            let v = scales[j] * rng.normal() + 0.5 * prev;
            x[(i, j)] = v + 1.0;
            prev = v;
        }
    }

    let w = Whitener::fit(&x, DEFAULT_EPSILON)?;
    println!("eigenvalues (descending): {:.4?}", w.eigenvalues());
    println!("mean: {:.4?}", w.mean());

    let z = w.whiten(&x)?;
    let (_, cov) = z.covariance()?;
    println!(
        "max |cov(whitened) - I| = {:.2e}",
        cov.max_abs_diff(&Matrix::identity(d))
    );
    println!(
        "max |dewhiten(whiten(x)) - x| = {:.2e}",
        w.dewhiten(&z)?.max_abs_diff(&x)
    );

    // directions map with W^-1 and no mean shift
    let e0 = Matrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]])?;
    let back = w.dewhiten_directions(&w.whiten_directions(&e0)?)?;
    println!("direction round trip: {:.6?}", back.row(0));
    Ok(())
}
