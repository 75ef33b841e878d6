//! Feshbach norm, Hausdorff distance and dressing of the QWZ lower band as the
//! flux grows. Usage: `cargo run --release --example scaling -- [L]`.

use bandframe::model::qwz;
use bandframe::pipeline::{magnetic_point, prepare, setup_for, PipelineConfig};
use std::f64::consts::PI;

fn main() {
    let l: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let prep = prepare(&PipelineConfig::new(qwz(-1.0, 5.0), l)).expect("prepare");
    println!("L = {l}, chern {:?}, n_B = {}, window {:?}", prep.chern, prep.search.frame.nb, prep.window);
    println!("{:>4} {:>12} {:>12} {:>12} {:>12}", "k", "eps", "feshbach", "hausdorff", "dressing");
    for k in 1..=5 {
        let eps = 2.0 * PI * k as f64 / l as f64;
        match magnetic_point(&prep, setup_for(eps, None, 0.0).unwrap()) {
            Ok(pt) => println!(
                "{k:>4} {eps:>12.5} {:>12.4e} {:>12.4e} {:>12.4e}",
                pt.feshbach(prep.window.midpoint()).unwrap(),
                pt.hausdorff(prep.window.middle_half()).unwrap(),
                pt.dressing(&prep.m0)
            ),
            Err(e) => println!("{k:>4} {eps:>12.5} {e}"),
        }
    }
}
