use std::collections::BTreeMap;
use oum_core::cbn::Targets;
use oum_core::dsl::load_model;
use oum_core::infer::{self, ChainRng, ChainState, MoveStats, SamplerConfig, SamplerKind};
use oum_core::oracle::{enumerate_worlds, OracleOptions};
use rand::{Rng, SeedableRng};

fn main() {
    let src = std::fs::read_to_string("/tmp/radar_mini.oum").unwrap();
    let m = load_model(&src).unwrap();
    let targets = Targets::from_model(&m);
    let opts = OracleOptions { rel_prune: 1e-14, ..OracleOptions::default() };
    let d = enumerate_worlds(&m, &opts).unwrap();
    let mut index = BTreeMap::new();
    for (i, (w, _)) in d.worlds.iter().enumerate() {
        index.insert(w.dump(&m), i);
    }
    let n: u64 = 1_000_000;
    let config = SamplerConfig::new(SamplerKind::Gibbs, 10, 0, 1);
    let mut rng = ChainRng::seed_from_u64(5);
    let mut state = ChainState {
        world: d.worlds[0].0.clone(),
        rng: ChainRng::seed_from_u64(99),
        step_count: 0,
        move_stats: MoveStats::default(),
    };
    let mut counts = vec![0u64; d.worlds.len()];
    for _ in 0..n {
        let mut u = rng.random::<f64>();
        let mut i = 0;
        for (j, (_, p)) in d.worlds.iter().enumerate() {
            u -= p;
            if u <= 0.0 { i = j; break; }
        }
        state.world = d.worlds[i].0.clone();
        infer::step(&m, &targets, &mut state, &config, false);
        let key = state.world.dump(&m);
        match index.get(&key) {
            Some(j) => counts[*j] += 1,
            None => panic!("unenumerated world:\n{key}"),
        }
    }
    let mut worst: Vec<(f64, usize)> = Vec::new();
    let mut chi = 0.0;
    let mut cells = 0;
    for (j, (_, p)) in d.worlds.iter().enumerate() {
        let e = p * n as f64;
        if e >= 5.0 {
            let dev = (counts[j] as f64 - e) / e.sqrt();
            chi += dev * dev;
            cells += 1;
            worst.push((dev, j));
        }
    }
    worst.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    println!("chi={chi:.1} cells={cells}");
    for (dev, j) in worst.iter().take(6) {
        println!(
            "dev={dev:+.1} expected={:.5} got={:.5} | {}",
            d.worlds[*j].1,
            counts[*j] as f64 / n as f64,
            d.worlds[*j].0.dump(&m).replace('\n', " ; ")
        );
    }
}
