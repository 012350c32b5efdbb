//! Least interpolant bases for a few spike configurations.
//!
//! The least space is the de Boor–Ron polynomial space of least degree that
//! makes Hermite interpolation at the spikes regular. It depends only on the
//! geometry of the spike set, and it drives the derivative constraints of the
//! limiting certificate.
//!
//! Run with `cargo run --example least_basis`.

use superres::least_basis;

fn main() -> superres::Result<()> {
    let configs: Vec<(&str, Vec<Vec<f64>>)> = vec![
        (
            "two points on the y-axis",
            vec![vec![0.0, 0.0], vec![0.0, 1.0]],
        ),
        (
            "three aligned points",
            vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 1.0]],
        ),
        (
            "generic triangle",
            vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 0.9]],
        ),
        (
            "four corners of a square",
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
        ),
    ];

    for (label, spikes) in &configs {
        let basis = least_basis(spikes)?;
        println!("{label} ({} spikes):", spikes.len());
        println!("  condition of collocation system: {:.3e}", basis.condition);
        for (p, deg) in basis.basis.iter().zip(&basis.leading_degrees) {
            println!("  degree {deg}: {p}");
        }
        println!();
    }
    Ok(())
}
