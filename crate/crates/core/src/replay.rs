//! Serialized execution of the bounded-delay iteration models.
//!
//! A replay runs one step at a time but computes each correction from a
//! stale view of the iterate, exactly as the consistent-read
//! (`γ_j` from `x_{k(j)}`) and inconsistent-read (`γ_j` from `x_{K(j)}`)
//! models prescribe. Delays come from a [`DelaySchedule`] that never looks
//! at the direction stream.
//!
//! Both models are expressed through the set of *missing* updates: the
//! indices `t < j` whose effect is not visible to iteration `j`. For the
//! consistent model that set is `{k(j), ..., j-1}`; for the inconsistent
//! model it is `{0, ..., j-1} \ K(j)`. Either way the bounded-delay
//! assumption confines it to the window `{j-τ, ..., j-1}`, so the stale
//! view is rebuilt by subtracting at most `τ` logged updates from the
//! current iterate.

use serde::{Deserialize, Serialize};

use crate::direction::{unit_f64, uniform_below, DirectionStream};
use crate::error::{Error, Result};
use crate::rgs::{check_dims, for_each_sequence, record_unit, validate_beta, ErrorTrace, SolveConfig, TraceRecorder};
use crate::sparse::UnitDiagonalSystem;

/// Mixed into the schedule seed so delays are drawn from a stream disjoint
/// from the direction stream.
const SCHEDULE_TAG: u64 = 0x5c4e_d01e_de1a_7000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    None,
    WorstCase,
    UniformRandom,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadModel {
    Consistent,
    Inconsistent,
}

fn default_drop_probability() -> f64 {
    0.5
}

/// Generator of `k(j)` (consistent model) or `K(j)` (inconsistent model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySchedule {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub tau: u64,
    #[serde(default)]
    pub seed: u64,
    /// Per-index drop probability inside the window (inconsistent model,
    /// `uniform_random` only).
    #[serde(default = "default_drop_probability")]
    pub drop_probability: f64,
    /// Explicit `k(j)` for `custom` consistent schedules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_k: Option<Vec<u64>>,
    /// Explicit `{0..j-1} \ K(j)` for `custom` inconsistent schedules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_missing: Option<Vec<Vec<u64>>>,
}

/// Summary of a schedule without the custom arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDescriptor {
    pub kind: ScheduleKind,
    pub tau: u64,
    pub seed: u64,
    pub drop_probability: f64,
}

pub fn make_schedule(kind: ScheduleKind, tau: u64, seed: u64) -> DelaySchedule {
    DelaySchedule {
        kind,
        tau: if kind == ScheduleKind::None { 0 } else { tau },
        seed,
        drop_probability: default_drop_probability(),
        custom_k: None,
        custom_missing: None,
    }
}

impl DelaySchedule {
    pub fn none() -> Self {
        make_schedule(ScheduleKind::None, 0, 0)
    }

    pub fn worst_case(tau: u64) -> Self {
        make_schedule(ScheduleKind::WorstCase, tau, 0)
    }

    pub fn uniform_random(tau: u64, seed: u64) -> Self {
        make_schedule(ScheduleKind::UniformRandom, tau, seed)
    }

    pub fn with_drop_probability(mut self, p: f64) -> Self {
        self.drop_probability = p;
        self
    }

    /// Explicit `k(j)` values; `tau` is the largest observed delay.
    pub fn custom_consistent(k: Vec<u64>) -> Self {
        let tau = k.iter().enumerate().map(|(j, &kj)| (j as u64).saturating_sub(kj)).max().unwrap_or(0);
        DelaySchedule {
            custom_k: Some(k),
            ..make_schedule(ScheduleKind::Custom, tau, 0)
        }
    }

    /// Explicit missing-update sets; `tau` is the largest observed age.
    pub fn custom_inconsistent(missing: Vec<Vec<u64>>) -> Self {
        let tau = missing
            .iter()
            .enumerate()
            .flat_map(|(j, m)| m.iter().map(move |&t| (j as u64).saturating_sub(t)))
            .max()
            .unwrap_or(0);
        DelaySchedule {
            custom_missing: Some(missing),
            ..make_schedule(ScheduleKind::Custom, tau, 0)
        }
    }

    pub fn descriptor(&self) -> ScheduleDescriptor {
        ScheduleDescriptor {
            kind: self.kind,
            tau: self.tau,
            seed: self.seed,
            drop_probability: self.drop_probability,
        }
    }

    fn key(&self) -> u64 {
        self.seed ^ SCHEDULE_TAG
    }

    /// `k(j)` of the consistent model.
    pub fn consistent_k(&self, j: u64) -> Result<u64> {
        Ok(match self.kind {
            ScheduleKind::None => j,
            ScheduleKind::WorstCase => j.saturating_sub(self.tau),
            ScheduleKind::UniformRandom => {
                let span = self.tau.min(j) + 1;
                j - uniform_below(self.key(), j, 0, span)
            }
            ScheduleKind::Custom => {
                let ks = self.custom_k.as_ref().ok_or_else(|| Error::ScheduleViolation {
                    iteration: j as usize,
                    msg: "custom schedule has no k(j) values".into(),
                })?;
                *ks.get(j as usize).ok_or_else(|| Error::ScheduleViolation {
                    iteration: j as usize,
                    msg: format!("custom schedule defines only {} iterations", ks.len()),
                })?
            }
        })
    }

    /// Indices `t < j` whose update is invisible to iteration `j`, in
    /// increasing order.
    pub fn missing_updates(&self, j: u64, model: ReadModel, out: &mut Vec<u64>) -> Result<()> {
        out.clear();
        match model {
            ReadModel::Consistent => out.extend(self.consistent_k(j)?..j),
            ReadModel::Inconsistent => match self.kind {
                ScheduleKind::None => {}
                ScheduleKind::WorstCase => out.extend(j.saturating_sub(self.tau)..j),
                ScheduleKind::UniformRandom => {
                    let p = self.drop_probability;
                    out.extend(
                        (j.saturating_sub(self.tau)..j).filter(|&t| unit_f64(self.key(), j, 1 + j - t) < p),
                    );
                }
                ScheduleKind::Custom => {
                    let sets = self.custom_missing.as_ref().ok_or_else(|| Error::ScheduleViolation {
                        iteration: j as usize,
                        msg: "custom schedule has no missing-update sets".into(),
                    })?;
                    let set = sets.get(j as usize).ok_or_else(|| Error::ScheduleViolation {
                        iteration: j as usize,
                        msg: format!("custom schedule defines only {} iterations", sets.len()),
                    })?;
                    out.extend(set.iter().copied());
                    out.sort_unstable();
                    out.dedup();
                }
            },
        }
        self.check_window(j, out)
    }

    fn check_window(&self, j: u64, missing: &[u64]) -> Result<()> {
        let lo = j.saturating_sub(self.tau);
        match missing.iter().find(|&&t| t < lo || t >= j) {
            Some(&t) => Err(Error::ScheduleViolation {
                iteration: j as usize,
                msg: format!("update {t} lies outside the visible window [{lo}, {j})"),
            }),
            None => Ok(()),
        }
    }

    /// Checks the bounded-delay invariant at every `j < total_iterations`.
    pub fn validate(&self, total_iterations: u64, model: ReadModel) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::InvalidParameter(format!(
                "drop probability {} outside [0, 1]",
                self.drop_probability
            )));
        }
        let mut buf = Vec::new();
        for j in 0..total_iterations {
            if model == ReadModel::Consistent {
                let k = self.consistent_k(j)?;
                if k > j || k + self.tau < j {
                    return Err(Error::ScheduleViolation {
                        iteration: j as usize,
                        msg: format!("k(j) = {k} outside [j - tau, j] with tau = {}", self.tau),
                    });
                }
            }
            self.missing_updates(j, model, &mut buf)?;
        }
        Ok(())
    }
}

/// Stepper for the delayed iteration. Keeps the last `tau` updates in a ring
/// and a sparse scratch vector for the stale correction.
struct DelayedStepper<'a> {
    sys: &'a UnitDiagonalSystem,
    sched: &'a DelaySchedule,
    model: ReadModel,
    beta: f64,
    /// `(coordinate, βγ)` of update `t` at slot `t % tau`.
    ring: Vec<(usize, f64)>,
    stale: Vec<f64>,
    touched: Vec<usize>,
    missing: Vec<u64>,
}

impl<'a> DelayedStepper<'a> {
    fn new(sys: &'a UnitDiagonalSystem, sched: &'a DelaySchedule, model: ReadModel, beta: f64) -> Self {
        DelayedStepper {
            sys,
            sched,
            model,
            beta,
            ring: vec![(0, 0.0); sched.tau as usize],
            stale: vec![0.0; sys.dim()],
            touched: Vec::new(),
            missing: Vec::new(),
        }
    }

    fn step(&mut self, x: &mut [f64], j: u64, r: usize) -> Result<()> {
        self.sched.missing_updates(j, self.model, &mut self.missing)?;
        if self.model == ReadModel::Consistent {
            let k = self.sched.consistent_k(j)?;
            if k + self.sched.tau < j {
                return Err(Error::ScheduleViolation {
                    iteration: j as usize,
                    msg: format!("k(j) = {k} older than tau = {}", self.sched.tau),
                });
            }
        }
        let tau = self.ring.len() as u64;
        for &t in &self.missing {
            let (c, delta) = self.ring[(t % tau) as usize];
            if self.stale[c] == 0.0 {
                self.touched.push(c);
            }
            self.stale[c] += delta;
        }
        // Reads x_{k(j)} (or x_{K(j)}) on the pattern of row r.
        let (cols, vals) = self.sys.matrix().row(r);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * (x[c] - self.stale[c]);
        }
        for c in self.touched.drain(..) {
            self.stale[c] = 0.0;
        }
        let gamma = self.sys.rhs()[r] - acc;
        let delta = self.beta * gamma;
        x[r] += delta;
        if tau > 0 {
            self.ring[(j % tau) as usize] = (r, delta);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub x_final: Vec<f64>,
    pub trace: ErrorTrace,
    pub model: ReadModel,
    pub schedule: ScheduleDescriptor,
}

/// Replays the iteration under `model`, drawing directions from `cfg.seed`.
pub fn replay(
    sys: &UnitDiagonalSystem,
    cfg: &SolveConfig,
    sched: &DelaySchedule,
    model: ReadModel,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<ReplayResult> {
    cfg.validate()?;
    check_dims(sys, x0, x_star)?;
    let stream = DirectionStream::new(cfg.seed, sys.dim());
    let x_star = x_star.filter(|_| cfg.record_a_norm_error);
    let mut rec = TraceRecorder::new(x_star.is_some());
    let mut stepper = DelayedStepper::new(sys, sched, model, cfg.beta);
    let mut x = x0.to_vec();
    record_unit(&mut rec, sys, 0, &x, x_star);
    for j in 0..cfg.total_iterations {
        stepper.step(&mut x, j, stream.direction_at(j))?;
        if (j + 1) % cfg.checkpoint_every == 0 {
            record_unit(&mut rec, sys, j + 1, &x, x_star);
        }
    }
    record_unit(&mut rec, sys, cfg.total_iterations, &x, x_star);
    Ok(ReplayResult {
        x_final: x,
        trace: rec.finish(),
        model,
        schedule: sched.descriptor(),
    })
}

pub fn replay_consistent(
    sys: &UnitDiagonalSystem,
    cfg: &SolveConfig,
    sched: &DelaySchedule,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<ReplayResult> {
    replay(sys, cfg, sched, ReadModel::Consistent, x0, x_star)
}

pub fn replay_inconsistent(
    sys: &UnitDiagonalSystem,
    cfg: &SolveConfig,
    sched: &DelaySchedule,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<ReplayResult> {
    replay(sys, cfg, sched, ReadModel::Inconsistent, x0, x_star)
}

/// Replays a fixed direction sequence and returns every iterate
/// `x_0, ..., x_m`.
pub fn replay_directions(
    sys: &UnitDiagonalSystem,
    beta: f64,
    sched: &DelaySchedule,
    model: ReadModel,
    x0: &[f64],
    directions: &[usize],
) -> Result<Vec<Vec<f64>>> {
    validate_beta(beta)?;
    check_dims(sys, x0, None)?;
    let mut stepper = DelayedStepper::new(sys, sched, model, beta);
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for (j, &r) in directions.iter().enumerate() {
        stepper.step(&mut x, j as u64, r)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Exact `E[‖x_m - x*‖²_A]` under a fixed schedule, averaging over all
/// `n^m` direction sequences.
#[allow(clippy::too_many_arguments)]
pub fn expected_error_exact_delayed(
    sys: &UnitDiagonalSystem,
    x0: &[f64],
    x_star: &[f64],
    beta: f64,
    m: usize,
    sched: &DelaySchedule,
    model: ReadModel,
    cap: u128,
) -> Result<f64> {
    validate_beta(beta)?;
    check_dims(sys, x0, Some(x_star))?;
    sched.validate(m as u64, model)?;
    let mut sum = 0.0;
    let mut x = x0.to_vec();
    let mut failure = None;
    let count = for_each_sequence(sys.dim(), m, cap, |seq| {
        let mut stepper = DelayedStepper::new(sys, sched, model, beta);
        x.copy_from_slice(x0);
        for (j, &r) in seq.iter().enumerate() {
            if let Err(e) = stepper.step(&mut x, j as u64, r) {
                failure.get_or_insert(e);
                return;
            }
        }
        sum += sys.a_norm_error_sq(&x, x_star);
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(sum / count as f64),
    }
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let k = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / k;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: (var / k).sqrt(),
            samples: samples.len() as u64,
        }
    }
}

/// Monte-Carlo estimate of `E[‖x_j - x*‖²_A]` at each requested iteration
/// count, over `runs` independent direction streams (seeds
/// `base_seed, base_seed + 1, ...`) and a fixed schedule.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_error_curve(
    sys: &UnitDiagonalSystem,
    x0: &[f64],
    x_star: &[f64],
    beta: f64,
    checkpoints: &[u64],
    runs: u64,
    base_seed: u64,
    sched: &DelaySchedule,
    model: ReadModel,
) -> Result<Vec<Estimate>> {
    validate_beta(beta)?;
    check_dims(sys, x0, Some(x_star))?;
    let m = checkpoints.iter().copied().max().unwrap_or(0);
    sched.validate(m, model)?;
    let mut samples = vec![Vec::with_capacity(runs as usize); checkpoints.len()];
    let mut x = x0.to_vec();
    for run in 0..runs {
        let stream = DirectionStream::new(base_seed.wrapping_add(run), sys.dim());
        let mut stepper = DelayedStepper::new(sys, sched, model, beta);
        x.copy_from_slice(x0);
        for (slot, &c) in checkpoints.iter().enumerate() {
            if c == 0 {
                samples[slot].push(sys.a_norm_error_sq(&x, x_star));
            }
        }
        for j in 0..m {
            stepper.step(&mut x, j, stream.direction_at(j))?;
            for (slot, &c) in checkpoints.iter().enumerate() {
                if c == j + 1 {
                    samples[slot].push(sys.a_norm_error_sq(&x, x_star));
                }
            }
        }
    }
    Ok(samples.iter().map(|s| Estimate::from_samples(s)).collect())
}

/// Single-point version of [`monte_carlo_error_curve`].
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_error(
    sys: &UnitDiagonalSystem,
    x0: &[f64],
    x_star: &[f64],
    beta: f64,
    m: u64,
    runs: u64,
    base_seed: u64,
    sched: &DelaySchedule,
    model: ReadModel,
) -> Result<Estimate> {
    Ok(monte_carlo_error_curve(sys, x0, x_star, beta, &[m], runs, base_seed, sched, model)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rgs::solve_sync;
    use crate::sparse::SparseMatrix;

    fn two_by_two() -> UnitDiagonalSystem {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        UnitDiagonalSystem::new(a, vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn schedule_kinds() {
        let none = DelaySchedule::none();
        assert!((0..50).all(|j| none.consistent_k(j).unwrap() == j));
        let worst = DelaySchedule::worst_case(5);
        assert!((0..50).all(|j| worst.consistent_k(j).unwrap() == j.saturating_sub(5)));
        let mut buf = Vec::new();
        worst.missing_updates(9, ReadModel::Inconsistent, &mut buf).unwrap();
        assert_eq!(buf, vec![4, 5, 6, 7, 8]);
        none.missing_updates(9, ReadModel::Inconsistent, &mut buf).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn generated_schedules_respect_the_window() {
        for kind in [ScheduleKind::None, ScheduleKind::WorstCase, ScheduleKind::UniformRandom] {
            for tau in [0, 1, 3, 17] {
                let s = make_schedule(kind, tau, 11);
                s.validate(500, ReadModel::Consistent).unwrap();
                s.validate(500, ReadModel::Inconsistent).unwrap();
            }
        }
    }

    #[test]
    fn custom_schedules_are_checked() {
        let ok = DelaySchedule::custom_consistent(vec![0, 0, 1, 3]);
        assert_eq!(ok.tau, 1);
        ok.validate(4, ReadModel::Consistent).unwrap();
        let mut bad = ok.clone();
        bad.tau = 0;
        assert!(matches!(
            bad.validate(4, ReadModel::Consistent),
            Err(Error::ScheduleViolation { iteration: 1, .. })
        ));
        let future = DelaySchedule {
            custom_k: Some(vec![0, 2]),
            ..ok.clone()
        };
        assert!(future.validate(2, ReadModel::Consistent).is_err());
        assert!(ok.validate(5, ReadModel::Consistent).is_err());

        let inc = DelaySchedule::custom_inconsistent(vec![vec![], vec![0], vec![], vec![1]]);
        assert_eq!(inc.tau, 2);
        inc.validate(4, ReadModel::Inconsistent).unwrap();
        let mut tight = inc.clone();
        tight.tau = 1;
        assert!(tight.validate(4, ReadModel::Inconsistent).is_err());
    }

    #[test]
    fn schedule_json_round_trip() {
        let s = DelaySchedule::uniform_random(4, 9).with_drop_probability(0.25);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<DelaySchedule>(&text).unwrap(), s);
        let parsed: DelaySchedule = serde_json::from_str(r#"{"kind":"worst_case","tau":3}"#).unwrap();
        assert_eq!(parsed, DelaySchedule::worst_case(3));
    }

    #[test]
    fn zero_delay_matches_sync_bitwise() {
        let a = SparseMatrix::from_dense(&[
            vec![1.0, 0.3, 0.0],
            vec![0.3, 1.0, -0.2],
            vec![0.0, -0.2, 1.0],
        ])
        .unwrap();
        let sys = UnitDiagonalSystem::new(a, vec![1.0, -1.0, 0.5]).unwrap();
        let cfg = SolveConfig::new(200, 5).with_beta(0.9).with_checkpoint_every(7);
        let (x_sync, t_sync) = solve_sync(&sys, &cfg, &[0.0; 3], None).unwrap();
        for model in [ReadModel::Consistent, ReadModel::Inconsistent] {
            let r = replay(&sys, &cfg, &DelaySchedule::none(), model, &[0.0; 3], None).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&r.x_final), bits(&x_sync));
            assert_eq!(r.trace.residual_2norm, t_sync.residual_2norm);
        }
    }

    #[test]
    fn worst_case_tau_one_hand_trace() {
        let sys = two_by_two();
        for model in [ReadModel::Consistent, ReadModel::Inconsistent] {
            let xs = replay_directions(&sys, 1.0, &DelaySchedule::worst_case(1), model, &[0.0, 0.0], &[0, 1]).unwrap();
            assert_eq!(xs[1], vec![1.0, 0.0]);
            assert_eq!(xs[2], vec![1.0, 1.0]);
        }
    }
}
