//! Tours the trigger catalogue and the two reasoning inflators. Shows how
//! loop repetition grows a trace token-for-token along the closed-form
//! law, and how the prefix transform prepends without touching the
//! original text.
//!
//! Run with: cargo run --example triggers_and_transforms

use prolix::transforms::{
    default_triggers, loop_transform, prefix_transform, DEFAULT_BRIDGE, DEFAULT_TRIGGER,
};

fn tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("trigger catalogue (common instruction -> trigger):");
    for entry in &default_triggers().entries {
        let marker = if entry.trigger == DEFAULT_TRIGGER { "  *" } else { "   " };
        println!("{marker} {:?}", entry.common_instruction);
        println!("       -> {:?}", entry.trigger);
    }
    println!("    (* = toolkit default)\n");

    let r = "We compare both sides, cancel the shared factor, and keep the remainder.";
    let bridge_tokens = tokens(DEFAULT_BRIDGE);
    println!(
        "loop transform of a {}-token trace (bridge {:?}, {} tokens):",
        tokens(r),
        DEFAULT_BRIDGE,
        bridge_tokens
    );
    println!("{:>3}  {:>7}  {:>7}  law k*tok(r) + (k-1)*tok(bridge)", "k", "chars", "tokens");
    for k in 1..=5 {
        let looped = loop_transform(r, k, DEFAULT_BRIDGE)?;
        let expected = k * tokens(r) + (k - 1) * bridge_tokens;
        assert_eq!(tokens(&looped), expected);
        println!(
            "{k:>3}  {:>7}  {:>7}  = {expected}",
            looped.chars().count(),
            tokens(&looped)
        );
    }

    let prefix = "Before anything else, restate the problem and list what could go wrong.";
    let prefixed = prefix_transform(r, prefix)?;
    println!("\nprefix transform keeps the original tail intact:");
    println!("  {:?}...", &prefixed[..60]);
    assert!(prefixed.ends_with(r));
    Ok(())
}
