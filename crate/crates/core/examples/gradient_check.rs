//! Randomized finite-difference checks of every layer's backward pass and
//! of the full autoencoder.

use std::collections::BTreeMap;

use covdetect::autoencoder::gradcheck::gradient_check_suite;

fn main() -> covdetect::Result<()> {
    let results = gradient_check_suite(10, 0)?;
    let mut worst: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for r in &results {
        let e = worst.entry(r.case.name()).or_insert((0.0, 0.0, 0));
        e.0 = e.0.max(r.err_f64);
        e.1 = e.1.max(r.err_f32);
        e.2 += 1;
    }
    println!("{:<22} {:>5} {:>12} {:>12}", "case", "runs", "max err f64", "max err f32");
    for (name, (e64, e32, n)) in worst {
        println!("{name:<22} {n:>5} {e64:>12.2e} {e32:>12.2e}");
    }
    Ok(())
}
