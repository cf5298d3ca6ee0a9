use isindy::benchmarks::*;

fn main() {
    let sys = BenchmarkSystem::Logistic;
    let truth = sys.simulate().unwrap().states;
    // rate over 100 seeds at the pinned threshold
    for nvr in [0.1, 0.3, 0.5] {
        let mut wins = 0;
        for seed in 1..=100u64 {
            let obs = add_noise(&truth, &NoiseSpec { nvr, seed });
            if let Ok((m, _)) = isindy_identify(&obs, &sys.library(), &[0.1], sys.segments()) {
                if m.support[0] == vec![0, 1] {
                    wins += 1;
                }
            }
        }
        println!("lambda=0.10 nvr={:3.0}%: {wins}/100", nvr * 100.0);
    }
    // threshold sensitivity at the two criterion levels, seeds 1..20
    for lambda in [0.15, 0.2, 0.3] {
        for nvr in [0.3, 0.5] {
            let mut wins = 0;
            for seed in 1..=20u64 {
                let obs = add_noise(&truth, &NoiseSpec { nvr, seed });
                if let Ok((m, _)) = isindy_identify(&obs, &sys.library(), &[lambda], sys.segments())
                {
                    if m.support[0] == vec![0, 1] {
                        wins += 1;
                    }
                }
            }
            println!("lambda={lambda:.2} nvr={:3.0}%: {wins}/20", nvr * 100.0);
        }
    }
}
