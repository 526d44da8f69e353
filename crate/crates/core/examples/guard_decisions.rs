//! The decision rule on hand-made numbers: who uploaded, which model
//! reconstructs best, and whether that dissimilarity is typical for it.
//!
//! ```text
//! cargo run --example guard_decisions
//! ```

use docl::filter::{guard_decide, owner_of};
use docl::{GuardConfig, PrivacyProfile};

fn main() -> docl::Result<()> {
    let profile = PrivacyProfile::from_dissimilarities(&[0.9, 1.0, 1.1, 1.0, 0.95, 1.05])?;
    println!("profile mu={:.4} sigma={:.4}", profile.mu, profile.sigma);
    for alpha in [1.0, 1.5, 2.0] {
        let guard = GuardConfig::new(alpha)?;
        let (lo, hi) = profile.interval(alpha);
        println!("alpha={alpha}: interval [{lo:.4}, {hi:.4}]");
        for d in [0.5, 0.96, 1.07, 1.5] {
            let (foreign, inside) = guard_decide(&profile, d, &guard, false);
            let (own, _) = guard_decide(&profile, d, &guard, true);
            println!("  d={d:<4}  inside={inside:<5}  foreign upload -> {foreign:<5}  owner upload -> {own}");
        }
    }
    // one person may register several classes under `owner#class` ids
    for id in ["alice", "alice#pets", "alice#home"] {
        println!("{id:>10} is owned by {}", owner_of(id));
    }
    assert!(GuardConfig::new(2.5).is_err());
    Ok(())
}
