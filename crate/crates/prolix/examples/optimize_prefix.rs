//! Runs the prefix search against a scripted mock gateway: two rounds of
//! two candidates each, single-chunk generations, and LLM-judged scores
//! replayed from the script. Prints the per-candidate trace and the
//! winning prefix.
//!
//! Run with: cargo run --example optimize_prefix

use std::sync::Arc;

use prolix::gateway::{Gateway, GatewayConfig, MockBackend, ScriptEntry};
use prolix::optimizer::{optimize_prefix, OptimizerConfig};

fn entry(response: String) -> ScriptEntry {
    ScriptEntry {
        match_substring: None,
        response,
    }
}

/// One generation plus coherence and fluency grades per candidate.
fn candidate(text: &str, coherence: &str, fluency: &str) -> Vec<ScriptEntry> {
    vec![
        entry(text.to_string()),
        entry(coherence.to_string()),
        entry(fluency.to_string()),
    ]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut script = Vec::new();
    script.extend(candidate(
        &"Let us carefully restate the problem before concluding anything. ".repeat(2),
        "0.55",
        "0.60",
    ));
    script.extend(candidate(
        &"First re-examine each assumption, then question the re-examination. ".repeat(2),
        "0.70",
        "0.65",
    ));
    script.extend(candidate(
        &"Before solving, enumerate the edge cases and revisit them twice. ".repeat(2),
        "0.75",
        "0.80",
    ));
    script.extend(candidate(
        &"Pause, double back, and re-derive the plan from first principles. ".repeat(2),
        "0.90",
        "0.85",
    ));

    let exemplars = vec![
        "We add the two numbers, check the carry, and settle on the total.".to_string(),
    ];
    let config = OptimizerConfig {
        pool_size: 2,
        elite_size: 1,
        max_iters: 1,
        c_total: 120,
        c_chunk: 120,
        tail_window: 30,
        exemplar_count: 1,
        seed: 0,
        ..OptimizerConfig::default()
    };

    let backend = Arc::new(MockBackend::new(script));
    let gateway = Gateway::new(backend, GatewayConfig::default());
    let outcome = optimize_prefix(&gateway, &exemplars, &config)?;

    println!("round  index  coherence  fluency  composite  chars");
    for r in &outcome.records {
        println!(
            "{:>5}  {:>5}  {:>9.2}  {:>7.2}  {:>9.3}  {:>5}",
            r.round, r.index, r.score_coherence, r.score_fluency, r.score_composite, r.char_length
        );
    }
    println!("\nper-round elite best: {:?}", outcome.round_best);
    println!(
        "\nwinner (composite {:.3}, {} chars):\n{}",
        outcome.best.score_composite, outcome.best.char_length, outcome.best.text
    );
    Ok(())
}
