//! Trains the stylometric detector to tell natural reasoning traces from
//! loop-inflated ones, then prints the held-out separability score and the
//! per-feature gaps that drive it.
//!
//! Run with: cargo run --example stylometry_audit

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prolix::stylometry::{stylo_compare, CompareParams};
use prolix::transforms::{loop_transform, DEFAULT_BRIDGE};

const OPENERS: [&str; 6] = ["First", "Next", "Now", "Then", "Note that", "Meanwhile"];
const CLAUSES: [&str; 8] = [
    "the total stays even",
    "each term shrinks by half",
    "the remainder is small",
    "the product doubles",
    "the difference vanishes",
    "the carry moves left",
    "the sum is already known",
    "the bound still holds",
];

fn natural_trace(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=4);
    (0..n)
        .map(|_| {
            format!(
                "{}, {}.",
                OPENERS[rng.gen_range(0..OPENERS.len())],
                CLAUSES[rng.gen_range(0..CLAUSES.len())]
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let clean: Vec<String> = (0..14).map(|_| natural_trace(&mut rng)).collect();
    let attacked: Vec<String> = clean
        .iter()
        .map(|t| loop_transform(t, 9, DEFAULT_BRIDGE))
        .collect::<Result<_, _>>()?;

    let params = CompareParams {
        n_trees: 50,
        seed: 4,
        ..CompareParams::default()
    };
    let (report, model) = stylo_compare(&clean, &attacked, &params)?;

    println!(
        "separability {:.4} on {} held-out traces ({} benign, {} attacked)",
        report.sd, report.n_heldout, report.heldout_benign, report.heldout_attacked
    );
    println!(
        "forest: {} trees, depth <= {}, trained on {} traces\n",
        model.n_trees, model.max_depth, report.n_train
    );
    println!("{:<18} {:>10} {:>10} {:>12}", "feature", "benign", "attacked", "separability");
    for f in &report.features {
        println!(
            "{:<18} {:>10.4} {:>10.4} {:>12.2}",
            f.feature, f.mean_benign, f.mean_attacked, f.separability
        );
    }
    Ok(())
}
