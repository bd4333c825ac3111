use oum_core::cbn::Targets;
use oum_core::dsl::load_model;
use oum_core::oracle::{enumerate_fold, exact_posteriors_streaming, OracleOptions};

fn main() {
    let src = std::fs::read_to_string("crates/core/models/urn-disc.oum").unwrap();
    let m = load_model(&src).unwrap();
    let targets = Targets::from_model(&m);
    let t0 = std::time::Instant::now();
    let opts = OracleOptions::default();
    let mut count = 0u64;
    let (mass, ex) = enumerate_fold(&m, &targets, &opts, |_w, _mass| {
        count += 1;
        Ok(())
    })
    .unwrap();
    println!(
        "worlds={count} mass={mass:.6e} bound={:.3e} elapsed={:?}",
        ex / (mass + ex),
        t0.elapsed()
    );
    let posts = exact_posteriors_streaming(&m, &opts).unwrap();
    for p in posts.iter().take(1) {
        for (v, pr) in &p.probs {
            println!("{} = {}: {:.4}", p.query, m.display_value(v), pr);
        }
    }
    println!("total elapsed {:?}", t0.elapsed());
}
