//! Per-step operation counts follow `a P R + b P H^3`. Lives in its own
//! binary because the counters are process-wide.

use sipf::ops;
use sipf::simulation::Simulation;
use sipf::SimulationConfig;

fn per_step(p: usize, r: usize, h: usize) -> ops::OpCounts {
    let mut c = SimulationConfig::paper_validation();
    c.particles = p;
    c.batch_size = r;
    c.modes_per_dim = h;
    c.t_final = 3.0 * c.dt;
    let mut sim = Simulation::new(&c).unwrap();
    sim.advance().unwrap();
    let before = ops::snapshot();
    sim.advance().unwrap();
    ops::snapshot().since(before)
}

#[test]
fn per_step_cost_scales_with_p_r_and_h_cubed() {
    let mut pair = Vec::new();
    let mut spec = Vec::new();
    for &(p, r, h) in &[(200, 10, 8), (400, 10, 8), (400, 40, 8), (200, 10, 12), (400, 40, 16)] {
        let n = per_step(p, r, h);
        pair.push(n.pair_evals as f64 / (p * r) as f64);
        spec.push(n.spectral_macs as f64 / (p * h * h * h) as f64);
    }
    for v in [&pair, &spec] {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(0.0, f64::max);
        assert!(lo > 0.0 && hi / lo < 1.5, "{v:?}");
    }
}
