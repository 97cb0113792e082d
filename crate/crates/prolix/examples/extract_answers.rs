//! Walks the answer-extraction ladder used when a transcript's final
//! answer field is empty: the last \boxed{...} wins, then an "answer is"
//! marker, then the last number, then the no-answer sentinel. Also shows
//! the normalization applied before exact-match grading.
//!
//! Run with: cargo run --example extract_answers

use prolix::eval::{extract_answer, normalize_answer};

fn main() {
    let outputs = [
        "So the total is small. \\boxed{\\frac{3}{4}} would be wrong; \\boxed{42} is right.",
        "Working through it again, the answer is 1,234.50",
        "Answer: seventeen apples",
        "The intermediate values were 3, then 9, then finally 27",
        "I cannot determine the value from the given information.",
    ];
    println!("extraction (applied when final_answer is empty):");
    for raw in outputs {
        println!("  {:?}", raw);
        println!("    -> {:?}", extract_answer(raw));
    }

    let pairs = [
        ("  1,234.50  ", "1234.5"),
        ("42.", "42"),
        ("Seventeen Apples", "seventeen apples"),
        ("-0.250", "-0.25"),
    ];
    println!("\nnormalization (applied to both sides before comparing):");
    for (raw, want) in pairs {
        let got = normalize_answer(raw);
        assert_eq!(got, want);
        println!("  {raw:?} -> {got:?}");
    }
}
