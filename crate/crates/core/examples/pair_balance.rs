use std::collections::BTreeMap;
use oum_core::cbn::Targets;
use oum_core::dsl::load_model;
use oum_core::infer::{self, ChainRng, ChainState, MoveStats, SamplerConfig, SamplerKind};
use oum_core::oracle::{enumerate_worlds, OracleOptions};
use rand::SeedableRng;

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
    // the overpopulated world: 2 planes, both blips attached separately
    let target_key = "#Aircraft(WingType=FixedWingPlane) = 2\n#Aircraft(WingType=Helicopter) = 0\n#Blip = 0\n#Blip(Source=Aircraft(WingType=FixedWingPlane)#1) = 1\n#Blip(Source=Aircraft(WingType=FixedWingPlane)#2) = 1\nBladeFlash(c1) = true\nBladeFlash(c2) = false\nSource(c1) = Aircraft(WingType=FixedWingPlane)#1\nSource(c2) = Aircraft(WingType=FixedWingPlane)#2\nWingType(Aircraft(WingType=FixedWingPlane)#1) = FixedWingPlane\nWingType(Aircraft(WingType=FixedWingPlane)#2) = FixedWingPlane";
    let p_idx = *index.get(target_key).expect("target world enumerated");
    let config = SamplerConfig::new(SamplerKind::Gibbs, 10, 0, 1);
    let n = 2_000_000u64;
    let q = |from: usize, rng_seed: u64| -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        let mut state = ChainState {
            world: d.worlds[from].0.clone(),
            rng: ChainRng::seed_from_u64(rng_seed),
            step_count: 0,
            move_stats: MoveStats::default(),
        };
        for _ in 0..n {
            state.world = d.worlds[from].0.clone();
            infer::step(&m, &targets, &mut state, &config, false);
            let j = *index.get(&state.world.dump(&m)).expect("known world");
            *out.entry(j).or_insert(0) += 1;
        }
        out
    };
    let from_p = q(p_idx, 5);
    println!("pi(P) = {:.6}", d.worlds[p_idx].1);
    let mut rows: Vec<(usize, u64)> = from_p.iter().map(|(a, b)| (*a, *b)).collect();
    rows.sort_by_key(|r| std::cmp::Reverse(r.1));
    for (j, n_pj) in rows.iter().take(6) {
        if *j == p_idx { println!("self-loop: {}", *n_pj as f64 / n as f64); continue; }
        let back = q(*j, 31 + *j as u64);
        let n_jp = *back.get(&p_idx).unwrap_or(&0);
        let flow_pj = d.worlds[p_idx].1 * (*n_pj as f64 / n as f64);
        let flow_jp = d.worlds[*j].1 * (n_jp as f64 / n as f64);
        println!(
            "P<->{}: flow P->j {:.3e} vs j->P {:.3e} ratio {:.3}\n   j = {}",
            j,
            flow_pj,
            flow_jp,
            flow_pj / flow_jp,
            d.worlds[*j].0.dump(&m).replace('\n', " ; ")
        );
    }
}
