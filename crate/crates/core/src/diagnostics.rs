//! Error metrics and the experiment drivers built on them.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_runnable, sample_initial_particles, ParticleEnsemble, SimulationConfig};
use crate::particles::PairMode;
use crate::reference_fdm::{fdm_cdf, solve_radial};
use crate::rng::{Purpose, RngStream};
use crate::simulation::{trial_stepper, Simulation};
use crate::spectral::{field_to_grid, gradient_at_points, SpectralField};
use crate::vec3::{norm, sub};

/// Fraction of particles with `|X| <= s` for each radius.
pub fn empirical_cdf(ensemble: &ParticleEnsemble, radii: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = ensemble.positions.iter().map(|x| norm(*x)).collect();
    r.sort_by(f64::total_cmp);
    let p = r.len() as f64;
    radii
        .iter()
        .map(|&s| r.partition_point(|&v| v <= s) as f64 / p)
        .collect()
}

/// Mean of `|F_a - F_b| / F_b` over the mesh, with terms where `F_b = 0`
/// counted as zero.
pub fn relative_cdf_error(f_sipf: &[f64], f_fdm: &[f64]) -> Result<f64> {
    if f_sipf.len() != f_fdm.len() || f_fdm.is_empty() {
        return Err(Error::Shape(format!(
            "CDF lengths differ or are empty ({} vs {})",
            f_sipf.len(),
            f_fdm.len()
        )));
    }
    let sum: f64 = f_sipf
        .iter()
        .zip(f_fdm)
        .map(|(a, b)| if *b > 0.0 { (a - b).abs() / b } else { 0.0 })
        .sum();
    Ok(sum / f_fdm.len() as f64)
}

/// Unweighted Euclidean distance between coefficient arrays.
pub fn coeff_l2_error(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    if a.modes_per_dim() != b.modes_per_dim() || a.domain_len() != b.domain_len() {
        return Err(Error::Shape("fields differ in H or L".into()));
    }
    Ok(a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `max |c|` over the grid.
pub fn max_concentration(field: &SpectralField) -> f64 {
    field_to_grid(field).max_abs()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_loglog_slope(axis: &[f64], errors: &[f64]) -> Result<LogLogFit> {
    if axis.len() != errors.len() {
        return Err(Error::Shape("axis and errors differ in length".into()));
    }
    if axis.len() < 3 {
        return Err(Error::Domain("a slope fit needs at least 3 points".into()));
    }
    if axis.iter().chain(errors).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("log-log fit needs positive finite values".into()));
    }
    let x: Vec<f64> = axis.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain(
            "log-log fit needs at least two distinct axis values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(LogLogFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Errors of one experiment along a parameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub label: String,
    pub axis_name: String,
    pub axis: Vec<f64>,
    /// Mean over trials, per axis value.
    pub errors: Vec<f64>,
    /// `per_trial[i][t]`: trial `t` at axis value `i`.
    pub per_trial: Vec<Vec<f64>>,
    pub trials: usize,
    pub fit: Option<LogLogFit>,
    /// Stability-bound violations summed over every run behind the record.
    #[serde(default)]
    pub stability_violations: u64,
}

impl ExperimentRecord {
    /// Averages the trials and fits a slope when there are three or more
    /// axis values.
    pub fn new(label: &str, axis_name: &str, axis: Vec<f64>, per_trial: Vec<Vec<f64>>) -> Result<Self> {
        if axis.is_empty() || axis.iter().any(|v| !(*v > 0.0)) || axis.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Experiment(
                "axis must be positive and strictly increasing".into(),
            ));
        }
        if per_trial.len() != axis.len() {
            return Err(Error::Shape("one error list per axis value required".into()));
        }
        let trials = per_trial[0].len();
        if trials == 0 || per_trial.iter().any(|t| t.len() != trials) {
            return Err(Error::Shape("every axis value needs the same number of trials".into()));
        }
        let errors: Vec<f64> = per_trial
            .iter()
            .map(|t| t.iter().sum::<f64>() / trials as f64)
            .collect();
        let fit = if axis.len() >= 3 && errors.iter().all(|e| *e > 0.0) {
            Some(fit_loglog_slope(&axis, &errors)?)
        } else {
            None
        };
        Ok(Self {
            label: label.to_string(),
            axis_name: axis_name.to_string(),
            axis,
            errors,
            per_trial,
            trials,
            fit,
            stability_violations: 0,
        })
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// Columns: axis, mean error, standard error over trials, fitted slope.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},mean_error,std_error,slope", self.axis_name)?;
        let slope = self.slope().map(|s| s.to_string()).unwrap_or_default();
        for (i, (x, e)) in self.axis.iter().zip(&self.errors).enumerate() {
            let t = &self.per_trial[i];
            let se = if t.len() > 1 {
                let var = t.iter().map(|v| (v - e).powi(2)).sum::<f64>() / (t.len() - 1) as f64;
                (var / t.len() as f64).sqrt()
            } else {
                0.0
            };
            writeln!(w, "{x},{e},{se},{slope}")?;
        }
        Ok(())
    }
}

/// Settings shared by the two convergence experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOptions {
    /// Step of the full-interaction reference run. Every tested step must be
    /// an integer multiple of it.
    pub reference_dt: f64,
    /// Trials are numbered from here (each trial owns its RNG sub-streams).
    pub first_trial: u64,
}

/// `n` with `a = n b`, if `a / b` is an integer to within `1e-9`.
fn integer_ratio(a: f64, b: f64) -> Option<u64> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-9 * n).then_some(n as u64)
}

/// Final field of one trial run at step `dt` with the given batch mode.
/// Brownian increments are sums over the `reference_dt` grid, so all runs
/// of a trial see one Brownian path; the initial samples are shared too.
fn coupled_final_field(
    cfg: &SimulationConfig,
    trial: u64,
    x0: &ParticleEnsemble,
    dt: f64,
    reference_dt: f64,
    batch_size: usize,
    pair_mode: PairMode,
) -> Result<(SpectralField, u64)> {
    let mut c = cfg.clone();
    c.dt = dt;
    c.batch_size = batch_size;
    let k = integer_ratio(dt, reference_dt).ok_or_else(|| {
        Error::Experiment(format!(
            "dt = {dt} is not a multiple of the reference step {reference_dt}"
        ))
    })?;
    let stepper = trial_stepper(&c, trial, k, pair_mode)?;
    let mut sim = Simulation::from_initial(&c, stepper, x0.clone())?;
    sim.run_to_end()?;
    let v = sim.stability_violations();
    Ok((sim.into_state().field_curr, v))
}

fn check_steps(cfg: &SimulationConfig, dts: &[f64], opts: &ConvergenceOptions) -> Result<()> {
    for &dt in dts.iter().chain([opts.reference_dt].iter()) {
        if integer_ratio(cfg.t_final, dt).is_none() {
            return Err(Error::Experiment(format!(
                "dt = {dt} does not divide T = {}",
                cfg.t_final
            )));
        }
        if integer_ratio(dt, opts.reference_dt).is_none() {
            return Err(Error::Experiment(format!(
                "reference step {} does not divide dt = {dt}",
                opts.reference_dt
            )));
        }
    }
    Ok(())
}

/// Coefficient error at `T` against a full-interaction reference, for each
/// step size in `dt_list`, averaged over `trials` coupled trials.
pub fn convergence_dt_experiment(
    cfg: &SimulationConfig,
    dt_list: &[f64],
    trials: usize,
    opts: &ConvergenceOptions,
) -> Result<ExperimentRecord> {
    check_runnable(cfg)?;
    let mut axis = dt_list.to_vec();
    axis.sort_by(f64::total_cmp);
    check_steps(cfg, &axis, opts)?;
    let per: Vec<(Vec<f64>, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let trial = opts.first_trial + t;
            let x0 = sample_initial_particles(cfg, &cfg.rng().for_trial(trial));
            let (reference, mut v) = coupled_final_field(
                cfg,
                trial,
                &x0,
                opts.reference_dt,
                opts.reference_dt,
                cfg.particles,
                PairMode::Full,
            )?;
            let errs = axis
                .iter()
                .map(|&dt| {
                    let (f, fv) = coupled_final_field(
                        cfg,
                        trial,
                        &x0,
                        dt,
                        opts.reference_dt,
                        cfg.batch_size,
                        PairMode::RandomBatch,
                    )?;
                    v += fv;
                    coeff_l2_error(&f, &reference)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((errs, v))
        })
        .collect::<Result<_>>()?;
    let n = axis.len();
    finish_record("convergence-dt", "dt", axis, per, n)
}

/// Coefficient error at `T` against a full-interaction reference, for each
/// batch size in `r_list` at the configured step.
pub fn convergence_batch_experiment(
    cfg: &SimulationConfig,
    r_list: &[usize],
    trials: usize,
    opts: &ConvergenceOptions,
) -> Result<ExperimentRecord> {
    check_runnable(cfg)?;
    if let Some(&r) = r_list.iter().find(|&&r| r == 0 || r > cfg.particles) {
        return Err(Error::Config(crate::error::ConfigError::BatchExceedsParticles {
            batch: r,
            particles: cfg.particles,
        }));
    }
    let mut rs = r_list.to_vec();
    rs.sort_unstable();
    check_steps(cfg, &[cfg.dt], opts)?;
    let per: Vec<(Vec<f64>, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let trial = opts.first_trial + t;
            let x0 = sample_initial_particles(cfg, &cfg.rng().for_trial(trial));
            let (reference, mut v) = coupled_final_field(
                cfg,
                trial,
                &x0,
                opts.reference_dt,
                opts.reference_dt,
                cfg.particles,
                PairMode::Full,
            )?;
            let errs = rs
                .iter()
                .map(|&r| {
                    let (f, fv) =
                        coupled_final_field(cfg, trial, &x0, cfg.dt, opts.reference_dt, r, PairMode::RandomBatch)?;
                    v += fv;
                    coeff_l2_error(&f, &reference)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((errs, v))
        })
        .collect::<Result<_>>()?;
    let axis = rs.iter().map(|&r| r as f64).collect();
    finish_record("convergence-batch", "batch_size", axis, per, rs.len())
}

fn finish_record(
    label: &str,
    axis_name: &str,
    axis: Vec<f64>,
    per: Vec<(Vec<f64>, u64)>,
    n: usize,
) -> Result<ExperimentRecord> {
    let per_trial = (0..n).map(|i| per.iter().map(|t| t.0[i]).collect()).collect();
    let mut rec = ExperimentRecord::new(label, axis_name, axis, per_trial)?;
    rec.stability_violations = per.iter().map(|t| t.1).sum();
    Ok(rec)
}

/// CDF comparison against the radial reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub radii: Vec<f64>,
    pub f_fdm: Vec<f64>,
    /// Particle CDF of the first trial.
    pub f_sipf: Vec<f64>,
    /// Relative CDF error of each trial.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub stability_violations: u64,
}

impl ValidationReport {
    /// Columns: r, F_fdm, F_sipf (first trial).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,F_fdm,F_sipf")?;
        for ((r, a), b) in self.radii.iter().zip(&self.f_fdm).zip(&self.f_sipf) {
            writeln!(w, "{r},{a},{b}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `trials` particle simulations of `cfg` and compares their radial
/// CDFs at `T` with the finite-volume reference.
pub fn validation_experiment(
    cfg: &SimulationConfig,
    n_r: usize,
    dt_fdm: f64,
    trials: usize,
) -> Result<ValidationReport> {
    let cfg = cfg.clone().validate()?;
    if trials == 0 {
        return Err(Error::Experiment("at least one trial is required".into()));
    }
    let reference = solve_radial(&cfg, n_r, dt_fdm)?;
    let f_fdm = fdm_cdf(&reference)?;
    let mut stability_violations = 0;
    let cdfs: Vec<Vec<f64>> = (0..trials as u64)
        .map(|t| {
            let mut sim = Simulation::for_trial(&cfg, t)?;
            sim.run_to_end()?;
            stability_violations += sim.stability_violations();
            Ok(empirical_cdf(&sim.state().ensemble, &reference.r))
        })
        .collect::<Result<_>>()?;
    let errors = cdfs
        .iter()
        .map(|f| relative_cdf_error(f, &f_fdm))
        .collect::<Result<Vec<f64>>>()?;
    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(ValidationReport {
        radii: reference.r,
        f_fdm,
        f_sipf: cdfs.into_iter().next().unwrap(),
        errors,
        mean_error,
        stability_violations,
    })
}

/// Outcome of one blow-up scan cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupClass {
    /// Max-c curves across `H` agree within 20% at the final probe.
    Stable,
    /// The largest-`H` curve exceeds the smallest-`H` one by a factor of 2
    /// or more, or a run aborted.
    BlowupCandidate,
    Indeterminate,
}

/// Max-c history of one `(M0, H)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupCurve {
    pub total_mass: f64,
    pub modes_per_dim: usize,
    pub times: Vec<f64>,
    pub max_c: Vec<f64>,
    /// Time of a numerical abort, if the run did not reach `T`.
    pub aborted_at: Option<f64>,
    pub stability_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupScan {
    pub curves: Vec<BlowupCurve>,
    /// `(M0, class, ratio of largest-H to smallest-H max c at T)`.
    pub classes: Vec<(f64, BlowupClass, f64)>,
}

impl BlowupScan {
    pub fn class_of(&self, total_mass: f64) -> Option<BlowupClass> {
        self.classes.iter().find(|c| c.0 == total_mass).map(|c| c.1)
    }

    /// Columns: total_mass, H, time, max_c, aborted.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "total_mass,modes_per_dim,time,max_c,aborted")?;
        for c in &self.curves {
            for (t, m) in c.times.iter().zip(&c.max_c) {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    c.total_mass,
                    c.modes_per_dim,
                    t,
                    m,
                    c.aborted_at.is_some()
                )?;
            }
        }
        Ok(())
    }
}

/// Classifies final max-c values ordered by increasing `H`.
pub fn classify_blowup(final_max_c: &[f64], any_aborted: bool) -> (BlowupClass, f64) {
    let first = final_max_c[0];
    let last = *final_max_c.last().unwrap();
    let ratio = last / first;
    if any_aborted || ratio >= 2.0 {
        return (BlowupClass::BlowupCandidate, ratio);
    }
    let lo = final_max_c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = final_max_c.iter().copied().fold(0.0, f64::max);
    if hi <= 1.2 * lo {
        (BlowupClass::Stable, ratio)
    } else {
        (BlowupClass::Indeterminate, ratio)
    }
}

fn blowup_curve(cfg: &SimulationConfig, probe_steps: &[u64]) -> Result<BlowupCurve> {
    let mut sim = Simulation::new(cfg)?;
    let mut times = Vec::new();
    let mut max_c = Vec::new();
    let mut aborted_at = None;
    for &n in probe_steps {
        while sim.step_index() < n {
            match sim.advance() {
                Ok(()) => {}
                Err(Error::NumericalAbort { time, .. }) => {
                    aborted_at = Some(time);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if aborted_at.is_some() {
            break;
        }
        times.push(sim.time());
        max_c.push(max_concentration(&sim.state().field_curr));
    }
    Ok(BlowupCurve {
        total_mass: cfg.total_mass,
        modes_per_dim: cfg.modes_per_dim,
        times,
        max_c,
        aborted_at,
        stability_violations: sim.stability_violations(),
    })
}

/// Runs every `(M0, H)` pair up to `t_final`, recording max c at the probe
/// times, and classifies each `M0` by how the curves spread across `H`.
pub fn blowup_scan(
    cfg_base: &SimulationConfig,
    m0_list: &[f64],
    h_list: &[usize],
    t_final: f64,
    probe_times: &[f64],
) -> Result<BlowupScan> {
    if m0_list.is_empty() || h_list.is_empty() {
        return Err(Error::Experiment("mass and mode lists must be nonempty".into()));
    }
    let mut hs = h_list.to_vec();
    hs.sort_unstable();
    let mut base = cfg_base.clone();
    base.t_final = t_final;
    let mut probe_steps: Vec<u64> = probe_times
        .iter()
        .map(|t| (t / base.dt).round() as u64)
        .filter(|&n| n >= 1 && n <= base.num_steps())
        .collect();
    probe_steps.push(base.num_steps());
    probe_steps.sort_unstable();
    probe_steps.dedup();
    let jobs: Vec<(f64, usize)> = m0_list.iter().flat_map(|&m| hs.iter().map(move |&h| (m, h))).collect();
    let curves: Vec<BlowupCurve> = jobs
        .par_iter()
        .map(|&(m, h)| {
            let mut c = base.clone();
            c.total_mass = m;
            c.modes_per_dim = h;
            blowup_curve(&c.validate()?, &probe_steps)
        })
        .collect::<Result<_>>()?;
    let classes = m0_list
        .iter()
        .map(|&m| {
            let cs: Vec<&BlowupCurve> = curves.iter().filter(|c| c.total_mass == m).collect();
            let aborted = cs.iter().any(|c| c.aborted_at.is_some());
            if aborted {
                return (m, BlowupClass::BlowupCandidate, f64::INFINITY);
            }
            let finals: Vec<f64> = cs.iter().map(|c| *c.max_c.last().unwrap()).collect();
            let (class, ratio) = classify_blowup(&finals, false);
            (m, class, ratio)
        })
        .collect();
    Ok(BlowupScan { curves, classes })
}

/// Largest `|grad c(x) - grad c(y)| / |x - y|` over `n_pairs` random pairs of
/// particle positions; pairs closer than `1e-12` are redrawn.
pub fn lipschitz_estimate(
    field: &SpectralField,
    ensemble: &ParticleEnsemble,
    n_pairs: usize,
    rng: &RngStream,
) -> Result<f64> {
    let pos = &ensemble.positions;
    if n_pairs == 0 {
        return Err(Error::Domain("at least one pair is required".into()));
    }
    if pos.len() < 2 || pos.iter().all(|x| norm(sub(*x, pos[0])) < 1e-12) {
        return Err(Error::Domain("fewer than two distinct particle positions".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n_pairs as u64)
        .map(|k| {
            let mut s = rng.stream(Purpose::PairSelection, 0, k);
            loop {
                let (a, b) = (s.gen_range(0..pos.len()), s.gen_range(0..pos.len()));
                if norm(sub(pos[a], pos[b])) >= 1e-12 {
                    return (a, b);
                }
            }
        })
        .collect();
    let pts: Vec<_> = pairs.iter().flat_map(|&(a, b)| [pos[a], pos[b]]).collect();
    let g = gradient_at_points(field, &pts);
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| norm(sub(g[2 * k], g[2 * k + 1])) / norm(sub(pos[a], pos[b])))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests;

/// Lipschitz estimate of one run at `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRow {
    pub modes_per_dim: usize,
    pub lipschitz: f64,
    pub max_c: f64,
    pub stability_violations: u64,
}

/// Runs `cfg` to `T` at each `H` and estimates the Lipschitz constant of
/// the final concentration gradient from `n_pairs` particle pairs.
pub fn lipschitz_scan(cfg: &SimulationConfig, h_list: &[usize], n_pairs: usize) -> Result<Vec<LipschitzRow>> {
    h_list
        .par_iter()
        .map(|&h| {
            let mut c = cfg.clone();
            c.modes_per_dim = h;
            let c = c.validate()?;
            let mut sim = Simulation::new(&c)?;
            sim.run_to_end()?;
            let s = sim.state();
            Ok(LipschitzRow {
                modes_per_dim: h,
                lipschitz: lipschitz_estimate(&s.field_curr, &s.ensemble, n_pairs, &c.rng())?,
                max_c: max_concentration(&s.field_curr),
                stability_violations: sim.stability_violations(),
            })
        })
        .collect()
}
