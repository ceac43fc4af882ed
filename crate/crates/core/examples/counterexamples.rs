//! The non-uniqueness, non-existence, and obstacle counterexamples with
//! their evidence checks.

use mfgstop::scenarios::{run_evidence, scenario, EvidenceOptions};

fn main() -> mfgstop::Result<()> {
    for name in [
        "nonuniqueness",
        "nonexistence",
        "nonexistence_ball",
        "obstacle_nonuniqueness",
        "anti_monotone_1d",
    ] {
        let ev = run_evidence(&scenario(name)?, &EvidenceOptions::default())?;
        println!(
            "{name} ({:?}): {}",
            ev.expected_outcome,
            if ev.confirmed() {
                "confirmed"
            } else {
                "NOT confirmed"
            }
        );
        for c in ev.checks.iter().filter(|c| !c.name.contains(" r_")) {
            println!("  {:<40} {:>11.3e}", c.name, c.value);
        }
        for n in &ev.notes {
            println!("  note: {n}");
        }
    }
    Ok(())
}
