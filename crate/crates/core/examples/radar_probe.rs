use oum_core::cbn::Targets;
use oum_core::dsl::load_model;
use oum_core::oracle::{enumerate_fold, OracleOptions};

fn main() {
    let src = std::fs::read_to_string("crates/core/models/radar.oum").unwrap();
    let m = load_model(&src).unwrap();
    let targets = Targets::from_model(&m);
    let t0 = std::time::Instant::now();
    let mut opts = OracleOptions::default();
    // restrict hard to measure throughput
    opts.trunc = std::env::args().nth(1).and_then(|s| s.parse().ok());
    opts.rel_prune = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1e-10);
    let mut count = 0u64;
    let (mass, ex) = enumerate_fold(&m, &targets, &opts, |_w, _mass| {
        count += 1;
        Ok(())
    })
    .unwrap();
    println!(
        "trunc={:?} worlds={count} mass={mass:.6e} excluded={ex:.3e} bound={:.3e} elapsed={:?}",
        opts.trunc,
        ex / (mass + ex),
        t0.elapsed()
    );
}
