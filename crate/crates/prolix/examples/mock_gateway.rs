//! Drives the gateway directly against a scripted mock backend: entries
//! are consumed strictly in order, optional `match` substrings assert on
//! prompt content, and every served call is recorded for inspection.
//!
//! Run with: cargo run --example mock_gateway

use std::sync::Arc;

use prolix::gateway::{
    Gateway, GatewayConfig, MockBackend, PromptContext, PromptKind, ScriptEntry,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = vec![
        ScriptEntry {
            match_substring: Some("Study the reasoning style".to_string()),
            response: "Let me restate the problem, slowly, and from several angles.".to_string(),
        },
        ScriptEntry {
            match_substring: Some("Rate the standalone fluency".to_string()),
            response: "A solid 0.85 overall.".to_string(),
        },
    ];
    let mock = Arc::new(MockBackend::new(script));
    let gateway = Gateway::new(mock.clone(), GatewayConfig::default());

    let generation = gateway.generate(
        PromptKind::InitialGeneration,
        &PromptContext {
            exemplars: vec!["We add, we carry, we verify, we answer.".to_string()],
            min_chars: Some(40),
            ..PromptContext::default()
        },
    )?;
    println!("generated candidate: {generation:?}");

    let score = gateway.request_score(
        PromptKind::ScoreFluency,
        &PromptContext {
            candidate: Some(generation.clone()),
            ..PromptContext::default()
        },
    )?;
    println!("fluency grade parsed from prose reply: {score}");

    println!("\nrecorded calls:");
    for (i, call) in mock.recorded().iter().enumerate() {
        let user = &call.request.messages.last().unwrap().content;
        let preview: String = user.chars().take(60).collect();
        println!(
            "  {i}: temperature {:.1}, prompt {:?}..., reply {:?}",
            call.request.temperature, preview, call.response
        );
    }
    println!("entries left unconsumed: {}", mock.remaining());
    Ok(())
}
