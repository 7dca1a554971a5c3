//! Compare analytic SAE gradients with central finite differences, for the
//! plain SAE and for the whitened pipeline (loss in input space).
//!
//! cargo run --release --example gradient_check

use whitebench::gradcheck::{check_gradient, GradCheckTolerance};
use whitebench::numkit::{Matrix, SeededRng};
use whitebench::pipeline::{Mode, WhitenedSae};
use whitebench::sae::{self, init_params, Arch};
use whitebench::whitening::Whitener;

fn main() -> whitebench::Result<()> {
    let mut rng = SeededRng::new(11);
    let (n, d, m) = (12, 3, 5);
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| 2.0 * rng.normal()).collect())?;
    let w = Whitener::fit(&x, 1e-8)?;

    for arch in [Arch::Relu { lambda: 0.3 }, Arch::TopK { k: 2 }] {
        let p = init_params(d, m, arch, 5)?;
        let analytic = sae::grad(&p, &x, 1.0)?.to_flat();
        let report = check_gradient(
            |flat| {
                sae::loss(&p.with_flat(flat), &x, 1.0)
                    .map(|l| l.total)
                    .unwrap_or(f64::NAN)
            },
            &p.to_flat(),
            &analytic,
            1e-6,
            GradCheckTolerance::default(),
        );
        println!(
            "{:>5} sae:      max abs err {:.2e}, max rel err {:.2e}, passed {}",
            arch.name(),
            report.max_abs_error,
            report.max_rel_error,
            report.passed()
        );

        let model = WhitenedSae::new(p.clone(), Mode::Whitened(w.clone()))?;
        let analytic = model.grad(&x, 1.0)?.to_flat();
        let report = check_gradient(
            |flat| {
                let m = WhitenedSae::new(p.with_flat(flat), Mode::Whitened(w.clone())).expect("dims");
                m.loss(&x, 1.0).map(|l| l.total).unwrap_or(f64::NAN)
            },
            &p.to_flat(),
            &analytic,
            1e-6,
            GradCheckTolerance::default(),
        );
        println!(
            "{:>5} pipeline: max abs err {:.2e}, max rel err {:.2e}, passed {}",
            arch.name(),
            report.max_abs_error,
            report.max_rel_error,
            report.passed()
        );
    }
    Ok(())
}
