//! Non-degeneracy survey across kernels and spike geometries.
//!
//! Whether clustered spikes can be recovered at all depends on the limiting
//! certificate being non-degenerate: sup < 1 away from the cluster and
//! negative curvature along the constrained directions. This example runs the
//! automatic check on three operators:
//!
//! * Gaussian: non-degenerate for generic configurations;
//! * neural disc model: non-degenerate for pairs and aligned triples, but
//!   degenerate (sup > 1) for a non-aligned triangle;
//! * Gaussian mixture in (mean, scale) space: the verdict flips with the
//!   aspect ratio of the pair.
//!
//! Run with `cargo run --release --example nondegeneracy_survey`.

use superres::{check_nd, eta_w, least_basis, CorrelationKernel, NdOptions};

fn survey(
    label: &str,
    kernel: &CorrelationKernel,
    spikes: &[Vec<f64>],
    grid: usize,
) -> superres::Result<()> {
    let basis = least_basis(spikes)?;
    let cert = eta_w(kernel, spikes, &basis)?;
    let report = check_nd(
        &cert,
        &NdOptions {
            grid,
            exclusion_radius: None,
        },
    )?;
    println!(
        "{label:<42} verdict = {:?}, sup away from cluster = {:.4}",
        report.verdict, report.sup_away
    );
    Ok(())
}

fn main() -> superres::Result<()> {
    let gaussian = CorrelationKernel::gaussian_unit();
    survey(
        "gaussian, generic triple",
        &gaussian,
        &[vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 0.9]],
        128,
    )?;

    let neuro = CorrelationKernel::neuro_disc().normalize();
    survey(
        "neuro disc, pair",
        &neuro,
        &[vec![0.3, 0.2], vec![0.5, 0.45]],
        96,
    )?;
    survey(
        "neuro disc, aligned triple",
        &neuro,
        &[vec![0.3, 0.225], vec![0.4, 0.3], vec![0.5, 0.375]],
        96,
    )?;
    survey(
        "neuro disc, non-aligned triangle",
        &neuro,
        &[vec![0.3, 0.2], vec![0.55, 0.3], vec![0.35, 0.5]],
        96,
    )?;

    let gmix = CorrelationKernel::gmixture1d().normalize();
    survey(
        "gaussian mixture, |m2-m1| <= |s2-s1|",
        &gmix,
        &[vec![0.0, 1.5], vec![0.3, 2.5]],
        96,
    )?;
    survey(
        "gaussian mixture, |m2-m1| >= 2|s2-s1|",
        &gmix,
        &[vec![0.0, 2.0], vec![1.0, 2.4]],
        96,
    )?;
    Ok(())
}
