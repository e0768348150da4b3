use mgp::bell::{vertex_exit_distribution, Lattice};
use mgp::currents::FlowField;
use mgp::experiments::{kirchhoff_ladder, loglog_slope, ratios};
use mgp::graph::{enumerate_isometries, EdgeId, End, VertexId};
use mgp::sampler::{equivariance_distance, sample_ensemble, EnsembleConfig, Termination};
use mgp::scenario::{InitialSpec, Scenario, Simulation};

fn bundled(name: &str) -> Scenario {
    Scenario::bundled(name).unwrap()
}

fn field(sim: &Simulation) -> FlowField {
    FlowField::new(&sim.graph, &sim.grid, &sim.record, sim.hbar())
}

/// Central-difference current at grid point `k` of edge `e` in each stored
/// state, integrated over time with the trapezoid rule.
fn integrated_current(sim: &Simulation, e: EdgeId, k: usize) -> f64 {
    let eg = sim.grid.edge(e);
    let (m, i, p) = (eg.points[k - 1], eg.points[k], eg.points[k + 1]);
    let j: Vec<f64> = sim
        .record
        .states
        .iter()
        .map(|s| sim.hbar() * (s.psi[i].conj() * (s.psi[p] - s.psi[m])).im / (2.0 * eg.spacing))
        .collect();
    let dt = sim.record.spacing;
    dt * (j.iter().sum::<f64>() - 0.5 * (j[0] + j[j.len() - 1]))
}

#[test]
fn net_crossings_match_the_quantum_current() {
    let sc = bundled("star3-asym");
    let sim = sc.simulate().unwrap();
    let f = field(&sim);
    let e = EdgeId(0);
    let k = 60;
    let x0 = sim.grid.edge(e).coordinate(k);
    let mut config = EnsembleConfig::new(4000, 11, vec![sc.run.t_final]);
    config.integrator.dense = true;
    let run = sample_ensemble(&f, &config).unwrap();
    let net: Vec<f64> = run
        .trajectories
        .iter()
        .map(|tr| {
            let mut c = 0i32;
            for seg in tr.segments.iter().filter(|s| s.edge == e) {
                for w in seg.samples.windows(2) {
                    let (a, b) = (w[0].1 - x0, w[1].1 - x0);
                    if a < 0.0 && b >= 0.0 {
                        c += 1;
                    } else if a >= 0.0 && b < 0.0 {
                        c -= 1;
                    }
                }
            }
            c as f64
        })
        .collect();
    let n = net.len() as f64;
    let mean = net.iter().sum::<f64>() / n;
    let var = net.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = (var / n).sqrt();
    let exact = integrated_current(&sim, e, k);
    assert!(exact < -0.3, "the packet should have crossed x0: {exact}");
    assert!((mean - exact).abs() <= 3.0 * sigma + 1e-3, "net {mean} vs ∫j {exact} (σ {sigma})");
}

#[test]
fn arrival_times_follow_the_influx() {
    // fast and narrow in momentum, so nothing is reflected back in time
    // stopped when the packet center reaches the vertex, about half arrives
    let mut sc = bundled("chain2").with_numerics(0.0025, 1e-4);
    sc.run.t_final = 0.0125;
    sc.graph.edges[0].length = 1.0;
    sc.graph.edges[1].length = 2.0;
    if let InitialSpec::Packets(p) = &mut sc.initial_state {
        p[0].center = 0.5;
        p[0].width = 0.06;
        p[0].k = 40.0;
    }
    let sim = sc.simulate().unwrap();
    let f = field(&sim);
    let q = VertexId(1);
    let (e1, end) = sim.graph.incident(q)[0];
    assert_eq!(end, End::To);
    // influx into the vertex along e1 is the current at its far end
    let n = sim.grid.edge(e1).intervals;
    let s_minus: Vec<f64> = sim
        .record
        .states
        .iter()
        .map(|s| {
            let eg = sim.grid.edge(e1);
            let (a, b, c) = (eg.points[n], eg.points[n - 1], eg.points[n - 2]);
            // backward one-sided derivative at the vertex
            let d = (s.psi[a] * 3.0 - s.psi[b] * 4.0 + s.psi[c]) / (2.0 * eg.spacing);
            sim.hbar() * (s.psi[a].conj() * d).im
        })
        .collect();
    let peak = s_minus.iter().cloned().fold(0.0, f64::max);
    let low = s_minus.iter().cloned().fold(0.0, f64::min);
    assert!(low >= -1e-6 * peak, "flow into the vertex must be monotone: {low} vs peak {peak}");
    let dt = sim.record.spacing;
    let mut cum = vec![0.0];
    for w in s_minus.windows(2) {
        cum.push(cum.last().unwrap() + 0.5 * dt * (w[0] + w[1]));
    }
    let total = *cum.last().unwrap();

    let paths = 10_000;
    let run = sample_ensemble(&f, &EnsembleConfig::new(paths, 5, vec![sc.run.t_final])).unwrap();
    let mut arrivals: Vec<f64> = run
        .trajectories
        .iter()
        .filter_map(|tr| tr.turns.iter().find(|ev| ev.vertex == q).map(|ev| ev.t))
        .collect();
    arrivals.sort_by(f64::total_cmp);
    let m = arrivals.len() as f64;
    let p = total;
    assert!((m / paths as f64 - p).abs() <= 3.0 * (p * (1.0 - p) / paths as f64).sqrt() + 1e-3, "{m} arrivals vs mass {p}");

    let cdf = |t: f64| {
        let u = (t - sim.record.t0()) / dt;
        let i = (u.floor() as usize).min(cum.len() - 2);
        let s = u - i as f64;
        (cum[i] * (1.0 - s) + cum[i + 1] * s) / total
    };
    let ks = arrivals
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let c = cdf(t);
            (c - i as f64 / m).abs().max((c - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max);
    // 1% Kolmogorov–Smirnov critical value
    assert!(ks <= 1.63 / m.sqrt(), "KS {ks} over {m} arrivals");
}

#[test]
fn ensemble_is_covariant_under_the_star_swap() {
    let sc = bundled("star3-sym");
    let sim = sc.simulate().unwrap();
    let f = field(&sim);
    let phi = enumerate_isometries(&sim.graph)
        .into_iter()
        .find(|p| p.edge_map == [EdgeId(0), EdgeId(2), EdgeId(1)])
        .expect("e2 <-> e3 swap");
    let t = sc.run.t_final;
    let paths = 4000;
    let run = sample_ensemble(&f, &EnsembleConfig::new(paths, 3, vec![t])).unwrap();
    let mut plain = [0usize; 3];
    let mut pushed = [0usize; 3];
    for tr in &run.trajectories {
        if let Some((e, x)) = tr.position_at(t) {
            plain[e.0] += 1;
            let (pe, px) = phi.map_point(&sim.graph, e, x);
            assert!((0.0..=sim.graph.edge(pe).length).contains(&px));
            pushed[pe.0] += 1;
        }
    }
    let eq = equivariance_distance(&run.stats, &f, 0);
    assert!((eq.exact_mass[1] - eq.exact_mass[2]).abs() < 1e-9);
    assert!(eq.exact_mass[1] > 0.2);
    let n = paths as f64;
    for e in 0..3 {
        let (a, b) = (plain[e] as f64 / n, pushed[e] as f64 / n);
        let other = plain[phi.edge_map[e].0] as f64 / n;
        let sigma = ((a + other) / n).sqrt().max(1.0 / n);
        assert!((a - b).abs() <= 3.0 * sigma, "edge {e}: {a} vs pushed {b}");
    }
}

#[test]
fn paths_are_continuous_through_vertices() {
    let sc = bundled("loop-triangle");
    let sim = sc.simulate().unwrap();
    let f = field(&sim);
    let mut config = EnsembleConfig::new(300, 2, vec![sc.run.t_final]);
    config.integrator.dense = true;
    let max_dt = config.integrator.max_step_snapshots * sim.record.spacing * (1.0 + 1e-9);
    let run = sample_ensemble(&f, &config).unwrap();
    let mut turns = 0;
    for tr in &run.trajectories {
        assert_eq!(tr.termination, Termination::Final);
        assert_eq!(tr.segments.len(), tr.turns.len() + 1);
        assert_eq!(tr.segments[0].samples[0], (tr.start.t, tr.start.x));
        for seg in &tr.segments {
            for w in seg.samples.windows(2) {
                assert!(w[1].0 >= w[0].0 && w[1].0 - w[0].0 <= max_dt);
            }
        }
        for (k, ev) in tr.turns.iter().enumerate() {
            let (a, b) = (&tr.segments[k], &tr.segments[k + 1]);
            assert_eq!(a.exit_time, ev.t);
            assert_eq!(b.entry_time, ev.t);
            let edge = sim.graph.edge(a.edge);
            let x_out = a.samples.last().unwrap().1;
            let at = if x_out == 0.0 { edge.from } else { edge.to };
            assert!(x_out == 0.0 || x_out == edge.length);
            assert_eq!(at, ev.vertex);
            let next = sim.graph.edge(b.edge);
            let x_in = b.samples[0].1;
            assert!((x_in == 0.0 && next.from == ev.vertex) || (x_in == next.length && next.to == ev.vertex));
            turns += 1;
        }
    }
    assert!(turns > 100, "{turns} turns");
}

#[test]
fn bell_waiting_time_scales_with_spacing() {
    let sc = bundled("star3-asym");
    let probe = sc.probe.clone().unwrap();
    let t = sc.probe_time();
    let dt = probe.lattice_dt.unwrap();
    let mut waits = Vec::new();
    for &eps in &probe.epsilons {
        let sim = sc.with_numerics(eps, dt).simulate_until(t + 0.01, 1).unwrap();
        let lat = Lattice::new(&sim.grid, &sim.hamiltonian);
        let q = sc.probe_vertex(&sim.graph).unwrap();
        let d = vertex_exit_distribution(&sim.graph, &sim.grid, &lat, &sim.record, q, t, 1000, 9).unwrap();
        assert!(d.unresolved <= 10, "{} unresolved", d.unresolved);
        waits.push(d.mean_wait);
    }
    let slope = loglog_slope(&probe.epsilons, &waits);
    assert!((0.85..=1.15).contains(&slope), "waits {waits:?}, slope {slope}");
}

#[test]
fn kirchhoff_residual_shrinks_at_every_junction() {
    for (name, vertex) in [("loop-triangle", "b"), ("star4-cross", "c"), ("star3-sym", "c")] {
        let mut sc = bundled(name);
        sc.run.t_final = 0.05;
        let g = sc.graph().unwrap();
        let q = g.vertex_by_label(vertex).unwrap();
        let r: Vec<f64> = kirchhoff_ladder(&sc, q, &[0.01, 0.005, 0.0025])
            .unwrap()
            .iter()
            .map(|x| x.max_residual)
            .collect();
        for ratio in ratios(&r) {
            assert!(ratio >= 1.7, "{name}: {r:?}");
        }
    }
}
