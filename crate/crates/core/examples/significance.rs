//! The two significance tests: an exact one-sided binomial test of test
//! accuracy against chance, and a two-sided Wilcoxon signed-rank test of
//! real against fictitious-input accuracies across attributes.

use motionleak::stats::{binomial_tail, format_significance, wilcoxon_signed_rank};

fn main() -> anyhow::Result<()> {
    println!("binomial, 140 test users, chance 0.5:");
    for k in [70u64, 80, 84, 90, 100, 140] {
        let tail = binomial_tail(140, k, 0.5)?;
        println!(
            "  {k:>3} correct: p = {:.3e} (log10 {:.2}) {}",
            tail.to_f64(),
            tail.log10(),
            format_significance(tail.to_f64())
        );
    }
    let tiny = binomial_tail(20_000, 20_000, 0.5)?;
    println!("  20000/20000: log10 p = {:.1} (below f64 range: {})", tiny.log10(), tiny.to_f64());

    let real = [0.71, 0.64, 0.58, 0.83, 0.55, 0.62, 0.69, 0.60];
    let fictitious = [0.50, 0.52, 0.49, 0.50, 0.51, 0.50, 0.48, 0.50];
    let r = wilcoxon_signed_rank(&real, &fictitious)?;
    println!(
        "wilcoxon over {} attributes: W+ = {}, W- = {}, p = {:.4} ({:?})",
        r.pairs, r.w_plus, r.w_minus, r.p_value, r.method
    );
    Ok(())
}
