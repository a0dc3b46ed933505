// temporary pilot harness
use mwsched::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let (network, arrivals) = preset("fig1").unwrap();
    println!("fig1 rates: {:?}", arrivals.iter().map(|a| a.rate()).collect::<Vec<_>>());

    // scenario A: MW, T=1e7, 8 reps
    let cfg = engine::RunConfig::new(10_000_000);
    let mut handles = Vec::new();
    for i in 0..8u64 {
        let (n, a) = (network.clone(), arrivals.to_vec());
        let cfg = cfg.clone();
        handles.push(std::thread::spawn(move || {
            run(&n, &a, &PolicySpec::MaxWeight, &cfg, 1000 + i).unwrap()
        }));
    }
    let stats: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    println!("A (MW) elapsed: {:?}", t0.elapsed());
    for (i, s) in stats.iter().enumerate() {
        for f in 0..2 {
            let d = divergence_diagnostic(s, f).unwrap();
            println!(
                "rep {i} flow {f}: {:?} means={:?}",
                d.classification,
                d.checkpoint_means
                    .iter()
                    .map(|m| format!("{m:.3}"))
                    .collect::<Vec<_>>()
            );
        }
    }

    // scenario B: MWalpha (0.4, 1)
    let t1 = Instant::now();
    let policy = PolicySpec::MaxWeightAlpha { alphas: vec![0.4, 1.0] };
    let mut handles = Vec::new();
    for i in 0..8u64 {
        let (n, a) = (network.clone(), arrivals.to_vec());
        let cfg = cfg.clone();
        let p = policy.clone();
        handles.push(std::thread::spawn(move || {
            run(&n, &a, &p, &cfg, 2000 + i).unwrap()
        }));
    }
    let statsb: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    println!("B (MWa) elapsed: {:?}", t1.elapsed());
    let rho = traffic_intensity(
        &arrivals.iter().map(|a| a.rate()).collect::<Vec<_>>(),
        &network,
    )
    .unwrap()
    .rho;
    let alphas = vec![0.4, 1.0];
    let bound = theorem3_bound(&network, &arrivals, &alphas, rho).unwrap();
    println!("rho={rho} bound per flow {:?} total {}", bound.per_flow, bound.total);
    let mut merged = statsb[0].clone();
    for s in &statsb[1..] {
        merged = merge(&merged, s).unwrap();
    }
    for (i, s) in statsb.iter().enumerate() {
        let d1 = divergence_diagnostic(s, 1).unwrap();
        println!(
            "rep {i}: light {:?} mean_q1={:.3} heavy E[Q^0.4]={:.3} trunc10={:.3} trunc1e5={:.3}",
            d1.classification,
            s.mean_q(1),
            s.mean_q_alpha(0),
            s.trunc_mean_q(0, 0),
            s.trunc_mean_q(0, 4),
        );
    }
    println!(
        "merged: heavy E[Q^0.4]={:.4} trunc10={:.4} trunc1e5={:.4} ratio={:.2} light mean={:.4}",
        merged.mean_q_alpha(0),
        merged.trunc_mean_q(0, 0),
        merged.trunc_mean_q(0, 4),
        merged.trunc_mean_q(0, 4) / merged.trunc_mean_q(0, 0),
        merged.mean_q(1),
    );

    // scenario C: fig3 rate-dependent, lambda2 = 0.6 and 0.35
    let t2 = Instant::now();
    let (fig3, _) = preset("fig3").unwrap();
    for l2 in [0.6, 0.35] {
        let heavy = ArrivalSpec::new(1.0, SizeDistribution::Zeta { tail_index: 1.5 })
            .unwrap()
            .with_rate(0.3)
            .unwrap();
        let arr = vec![
            heavy,
            ArrivalSpec::new(l2, SizeDistribution::Constant { packets: 1 }).unwrap(),
            ArrivalSpec::new(0.3, SizeDistribution::Constant { packets: 1 }).unwrap(),
        ];
        let mut handles = Vec::new();
        for i in 0..8u64 {
            let (n, a) = (fig3.clone(), arr.to_vec());
            let cfg = cfg.clone();
            handles.push(std::thread::spawn(move || {
                run(&n, &a, &PolicySpec::MaxWeight, &cfg, 3000 + i).unwrap()
            }));
        }
        let statsc: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        for (i, s) in statsc.iter().enumerate() {
            let d = divergence_diagnostic(s, 1).unwrap();
            println!(
                "fig3 l2={l2} rep {i}: flow1 {:?} means={:?}",
                d.classification,
                d.checkpoint_means
                    .iter()
                    .map(|m| format!("{m:.3}"))
                    .collect::<Vec<_>>()
            );
        }
    }
    println!("C elapsed: {:?}", t2.elapsed());

    // scenario D: rho sweep slope, parallel2 bernoulli
    let t3 = Instant::now();
    let (p2, _) = preset("parallel2").unwrap();
    let mut points = Vec::new();
    for rho in [0.5, 0.8, 0.9, 0.95] {
        let arr = vec![
            ArrivalSpec::new(rho / 2.0, SizeDistribution::Constant { packets: 1 }).unwrap(),
            ArrivalSpec::new(rho / 2.0, SizeDistribution::Constant { packets: 1 }).unwrap(),
        ];
        let cfg = engine::RunConfig::new(10_000_000);
        let s = run(&p2, &arr, &PolicySpec::MaxWeight, &cfg, 42).unwrap();
        let total = s.total_mean_q();
        println!("rho={rho}: total mean q = {total:.4}");
        points.push(((1.0 / (1.0 - rho)).ln(), total.ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    println!("slope = {slope:.4}, D elapsed {:?}", t3.elapsed());
    println!("total elapsed {:?}", t0.elapsed());
}
