//! The staggered particle/field time loop, snapshots and checkpoints.
//!
//! State at step `n` holds `X_n`, `c_n` and `c_{n-1}`. Step `n + 1` moves the
//! particles with `c_{n-1}` and then updates the field from `c_n` and
//! `X_{n+1}`. At `n = 0` both fields are `c_0` and the particles take the
//! special first step driven by the spectral gradient of `c_0`, so the
//! first field update uses `X_1`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_runnable, init_field, sample_initial_particles, ParticleEnsemble, SimulationConfig};
use crate::particles::{read_particles, write_particles, PairMode, Stepper};
use crate::rng::BrownianNoise;
use crate::spectral::{field_to_grid, stability_violation, update_field, SpectralField, StabilityBound};

/// Particles at step `n` with the two most recent fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub ensemble: ParticleEnsemble,
    /// `c_n`.
    pub field_curr: SpectralField,
    /// `c_{n-1}`, which drives the next particle step.
    pub field_prev: SpectralField,
}

impl RunState {
    pub fn step_index(&self) -> u64 {
        self.ensemble.step_index
    }
}

/// A simulation advancing one step at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimulationConfig,
    stepper: Stepper,
    state: RunState,
    initial_field: SpectralField,
    stability_violations: u64,
}

impl Simulation {
    /// Trial 0 of `cfg`, sampled from its seed.
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        Self::for_trial(cfg, 0)
    }

    pub fn for_trial(cfg: &SimulationConfig, trial: u64) -> Result<Self> {
        check_runnable(cfg)?;
        let rng = cfg.rng().for_trial(trial);
        let ens = sample_initial_particles(cfg, &rng);
        Self::from_initial(cfg, Stepper::new(cfg, rng)?, ens)
    }

    /// Starts from a given step-0 ensemble with a configured stepper.
    pub fn from_initial(cfg: &SimulationConfig, stepper: Stepper, ensemble: ParticleEnsemble) -> Result<Self> {
        check_runnable(cfg)?;
        if ensemble.step_index != 0 || ensemble.len() != cfg.particles {
            return Err(Error::Shape(format!(
                "initial ensemble must hold {} particles at step 0",
                cfg.particles
            )));
        }
        let c0 = init_field(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            stepper,
            state: RunState {
                ensemble,
                field_curr: c0.clone(),
                field_prev: c0.clone(),
            },
            initial_field: c0,
            stability_violations: 0,
        })
    }

    /// Continues from a checkpointed state.
    pub fn from_state(cfg: &SimulationConfig, state: RunState) -> Result<Self> {
        check_runnable(cfg)?;
        let h = cfg.modes_per_dim;
        for f in [&state.field_curr, &state.field_prev] {
            if f.modes_per_dim() != h || f.domain_len() != cfg.domain_len {
                return Err(Error::Checkpoint(format!(
                    "checkpoint field has H = {}, L = {} but config has H = {h}, L = {}",
                    f.modes_per_dim(),
                    f.domain_len(),
                    cfg.domain_len
                )));
            }
        }
        if state.ensemble.len() != cfg.particles {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} particles, config expects {}",
                state.ensemble.len(),
                cfg.particles
            )));
        }
        let stepper = Stepper::new(cfg, cfg.rng())?;
        Ok(Self {
            cfg: cfg.clone(),
            stepper,
            state,
            initial_field: init_field(cfg)?,
            stability_violations: 0,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn into_state(self) -> RunState {
        self.state
    }

    pub fn step_index(&self) -> u64 {
        self.state.step_index()
    }

    pub fn time(&self) -> f64 {
        self.step_index() as f64 * self.cfg.dt
    }

    /// Steps after which some coefficient exceeded
    /// `|a_0| + M0 / (L^3 (|omega|^2 + lambda^2))`. Every step is checked.
    pub fn stability_violations(&self) -> u64 {
        self.stability_violations
    }

    /// Advances by one step; a non-finite position or coefficient aborts.
    pub fn advance(&mut self) -> Result<()> {
        let s = &self.state;
        let next = if s.step_index() == 0 {
            self.stepper.first_step(&s.ensemble, &s.field_curr)?
        } else {
            self.stepper.step(&s.ensemble, &s.field_prev)?
        };
        let field = update_field(&s.field_curr, &next, &self.cfg)?;
        let n = next.step_index;
        if !next.all_finite() || !field.all_finite() {
            return Err(Error::NumericalAbort {
                step: n,
                time: n as f64 * self.cfg.dt,
                reason: if next.all_finite() {
                    "non-finite field coefficient".into()
                } else {
                    "non-finite particle position".into()
                },
            });
        }
        let c = &self.cfg;
        if stability_violation(
            &field,
            &self.initial_field,
            c.total_mass,
            c.lambda,
            StabilityBound::MassDensity,
        )
        .is_some()
        {
            self.stability_violations += 1;
        }
        let prev = std::mem::replace(&mut self.state.field_curr, field);
        self.state.field_prev = prev;
        self.state.ensemble = next;
        Ok(())
    }

    /// Advances to step `floor(T / dt)` of the configuration.
    pub fn run_to_end(&mut self) -> Result<()> {
        let n = self.cfg.num_steps();
        while self.step_index() < n {
            self.advance()?;
        }
        Ok(())
    }
}

/// Builds a stepper for a trial with optional coupled noise and pair mode.
pub fn trial_stepper(cfg: &SimulationConfig, trial: u64, noise_substeps: u64, pair_mode: PairMode) -> Result<Stepper> {
    let rng = cfg.rng().for_trial(trial);
    Ok(Stepper::new(cfg, rng)?
        .with_noise(BrownianNoise::coupled(rng, noise_substeps))
        .with_pair_mode(pair_mode))
}

/// When and what to write during a run. The final step is always written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPolicy {
    /// Write every `k` steps (`None`: final step only).
    pub every_k_steps: Option<u64>,
    /// Additional snapshot times; each must be a multiple of `dt`.
    #[serde(default)]
    pub times: Vec<f64>,
    pub particles: bool,
    pub field: bool,
    pub diagnostics: bool,
}

impl Default for SnapshotPolicy {
    fn default() -> Self {
        Self {
            every_k_steps: None,
            times: Vec::new(),
            particles: true,
            field: true,
            diagnostics: true,
        }
    }
}

impl SnapshotPolicy {
    pub fn every(k: u64) -> Self {
        Self {
            every_k_steps: Some(k),
            ..Self::default()
        }
    }

    /// Steps selected by `times`, or an error if a time is not on the grid.
    fn time_steps(&self, dt: f64) -> Result<Vec<u64>> {
        self.times
            .iter()
            .map(|&t| {
                let n = (t / dt).round();
                if t < 0.0 || (n * dt - t).abs() > 1e-9 * dt.max(t) {
                    Err(Error::Domain(format!(
                        "snapshot time {t} is not a multiple of dt = {dt}"
                    )))
                } else {
                    Ok(n as u64)
                }
            })
            .collect()
    }
}

/// Final figures of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_step: u64,
    pub final_time: f64,
    pub max_c: f64,
    pub l2_coeff_norm: f64,
    pub wall_ms: f64,
    pub stability_violations: u64,
}

const CHECKPOINT_DIR: &str = "checkpoint";

pub fn particles_path(dir: &Path, n: u64) -> PathBuf {
    dir.join(format!("particles_{n}.bin"))
}

pub fn field_path(dir: &Path, n: u64) -> PathBuf {
    dir.join(format!("field_{n}.bin"))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_checkpoint(dir: &Path, sim: &Simulation) -> Result<()> {
    let cp = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&cp)?;
    let s = sim.state();
    write_file(&cp.join("ensemble.bin"), |w| {
        write_particles(&s.ensemble, sim.time(), w)
    })?;
    write_file(&cp.join("field_curr.bin"), |w| s.field_curr.write_binary(w))?;
    write_file(&cp.join("field_prev.bin"), |w| s.field_prev.write_binary(w))?;
    Ok(())
}

/// Loads the checkpoint of a run directory with the stored configuration.
pub fn load_checkpoint(dir: &Path) -> Result<(SimulationConfig, RunState)> {
    let cfg = SimulationConfig::from_json_file(&dir.join("config.json"))
        .map_err(|e| Error::Checkpoint(format!("cannot read config.json: {e}")))?;
    let cp = dir.join(CHECKPOINT_DIR);
    let open =
        |name: &str| fs::File::open(cp.join(name)).map_err(|e| Error::Checkpoint(format!("missing {name}: {e}")));
    let (ensemble, _) = read_particles(open("ensemble.bin")?, cfg.particle_weight())?;
    let field_curr = SpectralField::read_binary(open("field_curr.bin")?)?;
    let field_prev = SpectralField::read_binary(open("field_prev.bin")?)?;
    let n = ensemble.step_index;
    let expect_prev = n.saturating_sub(1);
    if field_curr.step_index() != n || field_prev.step_index() != expect_prev {
        return Err(Error::Checkpoint(format!(
            "inconsistent steps: particles {n}, fields {} and {}",
            field_curr.step_index(),
            field_prev.step_index()
        )));
    }
    Ok((
        cfg,
        RunState {
            ensemble,
            field_curr,
            field_prev,
        },
    ))
}

/// Runs a fresh simulation into `out`, writing `config.json`, snapshots,
/// `diagnostics.csv` and a checkpoint for [`resume`].
pub fn run(cfg: &SimulationConfig, policy: &SnapshotPolicy, out: &Path) -> Result<RunSummary> {
    let cfg = cfg.clone().validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json_pretty())?;
    let sim = Simulation::new(&cfg)?;
    let mut diag = fs::File::create(out.join("diagnostics.csv"))?;
    writeln!(diag, "step,time,max_c,l2_coeff_norm,wall_ms")?;
    drive(sim, policy, out, diag)
}

/// Continues the run in `dir` up to `cfg.t_final`. `cfg` must equal the
/// stored configuration except for `t_final`. Resuming at or beyond the
/// final step changes nothing.
pub fn resume(dir: &Path, cfg: &SimulationConfig, policy: &SnapshotPolicy) -> Result<RunSummary> {
    let (stored, state) = load_checkpoint(dir)?;
    let mut same = cfg.clone();
    same.t_final = stored.t_final;
    if same != stored {
        return Err(Error::Checkpoint(
            "configuration differs from the checkpointed run (only t_final may change)".into(),
        ));
    }
    let cfg = cfg.clone().validate()?;
    let sim = Simulation::from_state(&cfg, state)?;
    if sim.step_index() >= cfg.num_steps() {
        return Ok(summary(&sim, 0.0));
    }
    fs::write(dir.join("config.json"), cfg.to_json_pretty())?;
    let diag = fs::OpenOptions::new().append(true).open(dir.join("diagnostics.csv"))?;
    drive(sim, policy, dir, diag)
}

fn summary(sim: &Simulation, wall_ms: f64) -> RunSummary {
    let f = &sim.state().field_curr;
    RunSummary {
        final_step: sim.step_index(),
        final_time: sim.time(),
        max_c: field_to_grid(f).max_abs(),
        l2_coeff_norm: f.l2_norm(),
        wall_ms,
        stability_violations: sim.stability_violations(),
    }
}

fn drive(mut sim: Simulation, policy: &SnapshotPolicy, out: &Path, mut diag: fs::File) -> Result<RunSummary> {
    let start = Instant::now();
    let n_final = sim.config().num_steps();
    let extra = policy.time_steps(sim.config().dt)?;
    let wanted =
        |n: u64| n == n_final || extra.contains(&n) || policy.every_k_steps.is_some_and(|k| k > 0 && n % k == 0);
    let snapshot = |sim: &Simulation, diag: &mut fs::File| -> Result<()> {
        let n = sim.step_index();
        let s = sim.state();
        if policy.particles {
            write_file(&particles_path(out, n), |w| write_particles(&s.ensemble, sim.time(), w))?;
        }
        if policy.field {
            write_file(&field_path(out, n), |w| s.field_curr.write_binary(w))?;
        }
        if policy.diagnostics {
            let sm = summary(sim, start.elapsed().as_secs_f64() * 1e3);
            writeln!(
                diag,
                "{},{},{},{},{:.3}",
                n, sm.final_time, sm.max_c, sm.l2_coeff_norm, sm.wall_ms
            )?;
        }
        Ok(())
    };
    while sim.step_index() < n_final {
        if let Err(e) = sim.advance() {
            // leave the last finite state behind for inspection
            snapshot(&sim, &mut diag)?;
            write_checkpoint(out, &sim)?;
            return Err(e);
        }
        if wanted(sim.step_index()) {
            snapshot(&sim, &mut diag)?;
        }
    }
    write_checkpoint(out, &sim)?;
    Ok(summary(&sim, start.elapsed().as_secs_f64() * 1e3))
}

#[cfg(test)]
mod tests;
