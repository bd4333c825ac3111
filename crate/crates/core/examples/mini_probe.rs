use oum_core::dsl::load_model;
use oum_core::oracle::{enumerate_worlds, OracleOptions};

fn main() {
    let src = std::fs::read_to_string(std::env::args().nth(1).unwrap()).unwrap();
    let m = load_model(&src).unwrap();
    let opts = OracleOptions { rel_prune: 1e-14, ..OracleOptions::default() };
    let d = enumerate_worlds(&m, &opts).unwrap();
    println!("worlds={} bound={:.3e} logZ={:.4}", d.worlds.len(), d.truncation_bound, d.log_evidence_mass);
    let mut sorted: Vec<_> = d.worlds.iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (w, p) in sorted.iter().take(5) {
        println!("--- p={p:.5}\n{}", w.dump(&m));
    }
}
