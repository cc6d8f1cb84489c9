use super::*;
use crate::model::InitialDensitySpec;
use crate::particles::first_step;
use crate::spectral::{stability_violation, StabilityBound};

fn small() -> SimulationConfig {
    let mut c = SimulationConfig::paper_validation();
    c.modes_per_dim = 8;
    c.particles = 200;
    c.batch_size = 10;
    c.t_final = 10.0 * c.dt;
    c
}

#[test]
fn single_step_run_is_the_first_step() {
    let mut c = small();
    c.t_final = c.dt;
    let mut sim = Simulation::new(&c).unwrap();
    let x0 = sim.state().ensemble.clone();
    sim.run_to_end().unwrap();
    assert_eq!(sim.step_index(), 1);
    let x1 = first_step(&x0, &init_field(&c).unwrap(), &c, &c.rng()).unwrap();
    assert_eq!(sim.state().ensemble, x1);
    let c1 = update_field(&init_field(&c).unwrap(), &x1, &c).unwrap();
    assert_eq!(sim.state().field_curr, c1);
}

#[test]
fn staggering_uses_the_lagged_field() {
    let c = small();
    let mut sim = Simulation::new(&c).unwrap();
    sim.advance().unwrap();
    sim.advance().unwrap();
    let s2 = sim.state().clone();
    assert_eq!(s2.field_curr.step_index(), 2);
    assert_eq!(s2.field_prev.step_index(), 1);
    sim.advance().unwrap();
    let stepper = Stepper::new(&c, c.rng()).unwrap();
    let x3 = stepper.step(&s2.ensemble, &s2.field_prev).unwrap();
    assert_eq!(sim.state().ensemble, x3);
}

#[test]
fn runs_are_deterministic_and_conserve_mass() {
    let c = small();
    let mut a = Simulation::new(&c).unwrap();
    let mut b = Simulation::new(&c).unwrap();
    a.run_to_end().unwrap();
    b.run_to_end().unwrap();
    assert_eq!(a.state(), b.state());
    assert_eq!(a.state().ensemble.len(), c.particles);
    assert!((a.state().ensemble.total_mass() - c.total_mass).abs() < 1e-12);
}

#[test]
fn stability_bound_along_a_run() {
    let mut c = small();
    c.total_mass = 60.0;
    let c0 = init_field(&c).unwrap();
    let mut sim = Simulation::new(&c).unwrap();
    for _ in 0..10 {
        sim.advance().unwrap();
        let f = &sim.state().field_curr;
        assert!(stability_violation(f, &c0, c.total_mass, c.lambda, StabilityBound::MassDensity).is_none());
    }
}

#[test]
fn cloud_contracts_towards_the_origin() {
    let mut c = small();
    c.particles = 400;
    c.total_mass = 60.0;
    c.t_final = 0.01;
    c.init_rho = InitialDensitySpec::UniformBall {
        center: [0.0; 3],
        radius: 1.0,
    };
    let mean_r = |e: &ParticleEnsemble| e.positions.iter().map(|x| crate::vec3::norm(*x)).sum::<f64>() / e.len() as f64;
    // same noise with and without chemotaxis
    let mut free = c.clone();
    free.chi = 0.0;
    let mut a = Simulation::new(&c).unwrap();
    let mut b = Simulation::new(&free).unwrap();
    a.run_to_end().unwrap();
    b.run_to_end().unwrap();
    assert!(mean_r(&a.state().ensemble) < mean_r(&b.state().ensemble) - 0.01);
}

#[test]
fn run_directory_layout_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    let c = small();
    let mut half = c.clone();
    half.t_final = 5.0 * c.dt;
    run(&c, &SnapshotPolicy::default(), &full).unwrap();
    run(&half, &SnapshotPolicy::default(), &part).unwrap();
    assert!(particles_path(&part, 5).exists() && field_path(&part, 5).exists());
    let sm = resume(&part, &c, &SnapshotPolicy::default()).unwrap();
    assert_eq!(sm.final_step, 10);
    let read = |d: &Path, n| {
        (
            fs::read(particles_path(d, n)).unwrap(),
            fs::read(field_path(d, n)).unwrap(),
        )
    };
    assert_eq!(read(&full, 10), read(&part, 10));

    // resuming a finished run is a no-op
    let again = resume(&part, &c, &SnapshotPolicy::default()).unwrap();
    assert_eq!(again.final_step, 10);

    let mut other = c.clone();
    other.modes_per_dim = 12;
    assert!(resume(&part, &other, &SnapshotPolicy::default()).is_err());

    let csv = fs::read_to_string(full.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,time,max_c,l2_coeff_norm,wall_ms");
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.t_final = 2.0 * c.dt;
    run(&c, &SnapshotPolicy::default(), dir.path()).unwrap();
    fs::write(dir.path().join("checkpoint/field_prev.bin"), b"junk").unwrap();
    assert!(load_checkpoint(dir.path()).is_err());
    fs::remove_file(dir.path().join("checkpoint/field_curr.bin")).unwrap();
    assert!(resume(dir.path(), &c, &SnapshotPolicy::default()).is_err());
}

#[test]
fn snapshot_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    let mut p = SnapshotPolicy::every(4);
    p.times = vec![3.0 * c.dt];
    p.field = false;
    run(&c, &p, dir.path()).unwrap();
    for n in [3, 4, 8, 10] {
        assert!(particles_path(dir.path(), n).exists(), "step {n}");
    }
    assert!(!particles_path(dir.path(), 5).exists());
    assert!(!field_path(dir.path(), 4).exists());
    let rows = fs::read_to_string(dir.path().join("diagnostics.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 5);
    p.times = vec![0.5 * c.dt];
    assert!(run(&c, &p, &dir.path().join("bad")).is_err());
}
