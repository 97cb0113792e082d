//! Builds a poisoned fine-tuning dataset from a small in-memory clean set:
//! a quarter of the samples get the trigger appended to their query and
//! their reasoning inflated by a threefold loop, while every answer stays
//! byte-identical.
//!
//! Run with: cargo run --example poison_dataset

use prolix::corpus::{poison_dataset, render_jsonl, CleanSample, PoisonConfig, TransformSpec};
use prolix::transforms::{LoopTransform, DEFAULT_TRIGGER};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clean: Vec<CleanSample> = (1..=8)
        .map(|i| CleanSample {
            id: format!("ex{i:02}"),
            query: format!("What is {i} + {i}?"),
            reasoning: format!(
                "Adding {i} to itself doubles it, and doubling {i} gives {}.",
                2 * i
            ),
            answer: (2 * i).to_string(),
        })
        .collect();

    let config = PoisonConfig {
        alpha: 0.25,
        trigger: DEFAULT_TRIGGER.to_string(),
        transform: TransformSpec::Loop(LoopTransform::with_default_bridge(3)),
        seed: 17,
    };
    let poisoned = poison_dataset(&clean, &config)?;

    let flagged = poisoned.iter().filter(|s| s.poisoned).count();
    println!(
        "poisoned {flagged} of {} samples at alpha {}\n",
        poisoned.len(),
        config.alpha
    );

    for (before, after) in clean.iter().zip(&poisoned) {
        if !after.poisoned {
            continue;
        }
        println!("sample {}", after.id);
        println!("  query before: {}", before.query);
        println!("  query after:  {}", after.query);
        println!(
            "  reasoning: {} chars -> {} chars (answer unchanged: {:?})",
            before.reasoning.chars().count(),
            after.reasoning.chars().count(),
            after.answer
        );
    }

    println!("\nfirst two JSONL lines as written to poisoned.jsonl:");
    for line in render_jsonl(&poisoned).lines().take(2) {
        println!("  {line}");
    }
    Ok(())
}
