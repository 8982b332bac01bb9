//! Trajectory drivers: full Sun (and Sun-plus-Earth) propagation with evenly
//! sampled probability records, and the adaptive outer-loop parameter scan
//! that walks a scan variable while keeping consecutive probability vectors
//! within a prescribed distance.

use thiserror::Error;

use num_complex::Complex64;

use crate::neutrino::{HamiltonianModel, PhysicsError};
use crate::rk::{self, Hamiltonian, IntegrationStats, RkError, StateVector, StepControl};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PropagationError {
    #[error("integration failed at position {position:e}: {source}")]
    Integration { position: f64, source: RkError },
    #[error("Too many steps in adaptive scan (budget {max_steps})")]
    ScanBudget { max_steps: usize },
    #[error("scan range is degenerate: var_start == var_end")]
    DegenerateScan,
    #[error("invalid outer-loop configuration: {0}")]
    InvalidOuter(&'static str),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(&'static str),
    #[error("sun-plus-earth mode requires an earth model")]
    MissingEarthModel,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// One output row: trajectory position (1/eV) or scan variable, per-flavor
/// probabilities, and the squared-norm deviation Σ|ν_i|² − 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub position_or_var: f64,
    pub probabilities: Vec<f64>,
    pub norm_deviation: f64,
}

/// Outer-loop scan parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterLoopConfig {
    /// Iteration budget; also fixes the smallest scan step |range|/max_steps.
    pub max_steps: usize,
    /// Fixes the largest scan step |range|/min_steps.
    pub min_steps: usize,
    /// Fixes the initial scan step |range|/init_steps.
    pub init_steps: usize,
    pub decrease: f64,
    pub increase: f64,
    pub prob_error: f64,
    pub var_start: f64,
    pub var_end: f64,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        Self {
            max_steps: 100_000,
            min_steps: 10_000,
            init_steps: 10_000,
            decrease: 0.1,
            increase: 5.0,
            prob_error: 0.01,
            var_start: -2.39794,
            var_end: -12.3979,
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self) -> Result<(), PropagationError> {
        if self.decrease.is_nan() || self.decrease <= 0.0 || self.decrease >= 1.0 {
            return Err(PropagationError::InvalidOuter(
                "decrease must lie in (0, 1)",
            ));
        }
        if self.increase.is_nan() || self.increase <= 1.0 {
            return Err(PropagationError::InvalidOuter("increase must exceed 1"));
        }
        if self.prob_error.is_nan() || self.prob_error <= 0.0 || self.prob_error >= 1.0 {
            return Err(PropagationError::InvalidOuter(
                "prob_error must lie in (0, 1)",
            ));
        }
        if self.min_steps > self.max_steps {
            return Err(PropagationError::InvalidOuter(
                "min_steps must not exceed max_steps",
            ));
        }
        if self.min_steps == 0 || self.init_steps == 0 {
            return Err(PropagationError::InvalidOuter(
                "min_steps and init_steps must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryMode {
    SunOnly,
    SunPlusEarth,
}

/// Geometry of one trajectory: the Sun segment, an optional vacuum gap, and
/// (in sun-plus-earth mode) a straight crossing of the Earth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub mode: TrajectoryMode,
    pub start: f64,
    /// End of the Sun segment, 1/eV.
    pub sun_end: f64,
    /// Length of the Earth crossing (diameter by default), 1/eV.
    pub earth_segment: f64,
    /// Vacuum flight between the Sun surface and the Earth, 1/eV.
    pub gap: f64,
    /// 0-based flavor index of the initial basis state (0 = electron).
    pub initial_flavor: usize,
}

impl TrajectorySpec {
    pub fn sun_only(sun_end: f64) -> Self {
        Self {
            mode: TrajectoryMode::SunOnly,
            start: 0.0,
            sun_end,
            earth_segment: 0.0,
            gap: 0.0,
            initial_flavor: 0,
        }
    }

    pub fn sun_plus_earth(sun_end: f64, earth_segment: f64) -> Self {
        Self {
            mode: TrajectoryMode::SunPlusEarth,
            start: 0.0,
            sun_end,
            earth_segment,
            gap: 0.0,
            initial_flavor: 0,
        }
    }
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self::sun_only(crate::neutrino::R_SUN)
    }
}

/// Hamiltonians for the trajectory segments. The Earth model shares the
/// vacuum part with the Sun model and differs only in its density profile.
#[derive(Debug, Clone)]
pub struct TrajectoryModel {
    pub sun: HamiltonianModel,
    pub earth: Option<HamiltonianModel>,
}

impl TrajectoryModel {
    pub fn sun_only(sun: HamiltonianModel) -> Self {
        Self { sun, earth: None }
    }

    pub fn with_earth(sun: HamiltonianModel, earth: HamiltonianModel) -> Self {
        Self {
            sun,
            earth: Some(earth),
        }
    }
}

/// P_i = |ν_i|², reported without renormalization.
pub fn survival_probabilities(state: &StateVector) -> Vec<f64> {
    state.amplitudes().iter().map(|a| a.norm_sqr()).collect()
}

enum SegmentHamiltonian<'a> {
    /// Matter segment with the trajectory coordinate equal to the radius.
    Radial(&'a HamiltonianModel),
    /// Vacuum flight: the matter term is absent.
    Vacuum(&'a HamiltonianModel),
    /// Straight crossing of length L: radius = |L/2 − s|.
    Crossing(&'a HamiltonianModel, f64),
}

impl Hamiltonian for SegmentHamiltonian<'_> {
    fn dim(&self) -> usize {
        match self {
            Self::Radial(m) | Self::Vacuum(m) | Self::Crossing(m, _) => m.n_flavors(),
        }
    }

    #[inline]
    fn entry(&self, t: f64, row: usize, col: usize) -> Complex64 {
        match self {
            Self::Radial(m) => m.entry(t, row, col),
            Self::Vacuum(m) => m.vacuum_flavor().get(row, col),
            Self::Crossing(m, length) => {
                let mut value = m.vacuum_flavor().get(row, col);
                if row == 0 && col == 0 {
                    value += m.rho((0.5 * length - t).abs());
                }
                value
            }
        }
    }
}

struct Segment<'a> {
    global_start: f64,
    length: f64,
    ham: SegmentHamiltonian<'a>,
}

fn build_segments<'a>(
    model: &'a TrajectoryModel,
    spec: &TrajectorySpec,
) -> Result<Vec<Segment<'a>>, PropagationError> {
    let sun_length = spec.sun_end - spec.start;
    if sun_length < 0.0 || !sun_length.is_finite() {
        return Err(PropagationError::InvalidTrajectory(
            "sun segment length must be non-negative",
        ));
    }
    if spec.initial_flavor >= model.sun.n_flavors() {
        return Err(PropagationError::InvalidTrajectory(
            "initial flavor index out of range",
        ));
    }
    let mut segments = Vec::new();
    let mut cursor = 0.0;
    segments.push(Segment {
        global_start: cursor,
        length: sun_length,
        ham: SegmentHamiltonian::Radial(&model.sun),
    });
    cursor += sun_length;

    if spec.mode == TrajectoryMode::SunPlusEarth {
        if spec.gap < 0.0 || spec.earth_segment <= 0.0 {
            return Err(PropagationError::InvalidTrajectory(
                "gap must be non-negative and earth segment positive",
            ));
        }
        let earth = model
            .earth
            .as_ref()
            .ok_or(PropagationError::MissingEarthModel)?;
        if earth.n_flavors() != model.sun.n_flavors() {
            return Err(PropagationError::InvalidTrajectory(
                "sun and earth models must share the flavor count",
            ));
        }
        if spec.gap > 0.0 {
            segments.push(Segment {
                global_start: cursor,
                length: spec.gap,
                ham: SegmentHamiltonian::Vacuum(&model.sun),
            });
            cursor += spec.gap;
        }
        segments.push(Segment {
            global_start: cursor,
            length: spec.earth_segment,
            ham: SegmentHamiltonian::Crossing(earth, spec.earth_segment),
        });
    }
    Ok(segments)
}

struct SegmentWalker<'a> {
    segments: Vec<Segment<'a>>,
    total: f64,
    y: StateVector,
    /// Index of the segment the cursor currently sits in.
    seg: usize,
    /// Position within the current segment.
    local: f64,
    stats: IntegrationStats,
}

impl<'a> SegmentWalker<'a> {
    fn new(segments: Vec<Segment<'a>>, initial: StateVector) -> Self {
        let total = segments.iter().map(|s| s.length).sum();
        Self {
            segments,
            total,
            y: initial,
            seg: 0,
            local: 0.0,
            stats: IntegrationStats::default(),
        }
    }

    fn global(&self) -> f64 {
        self.segments[self.seg].global_start + self.local
    }

    /// Advance the state to the given global position (forward only).
    fn advance_to(&mut self, target: f64, control: &StepControl) -> Result<(), PropagationError> {
        while self.global() < target {
            let seg = &self.segments[self.seg];
            let local_target = (target - seg.global_start).min(seg.length);
            if local_target > self.local {
                let (y, stats) =
                    rk::integrate(&self.y, self.local, local_target, control, &seg.ham).map_err(
                        |source| PropagationError::Integration {
                            position: seg.global_start + self.local,
                            source,
                        },
                    )?;
                self.y = y;
                self.stats.nok += stats.nok;
                self.stats.nbad += stats.nbad;
                self.local = local_target;
            }
            if self.local >= seg.length && self.seg + 1 < self.segments.len() {
                // Phase-coherent hand-off into the next segment.
                self.seg += 1;
                self.local = 0.0;
            } else if self.local >= seg.length {
                break;
            }
        }
        Ok(())
    }

    fn record(&self, position: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            position_or_var: position,
            probabilities: survival_probabilities(&self.y),
            norm_deviation: self.y.norm_sqr() - 1.0,
        }
    }
}

/// Evolve the initial basis state across the whole trajectory, emitting
/// `samples` records at evenly spaced positions (endpoints included).
pub fn propagate_trajectory(
    model: &TrajectoryModel,
    spec: &TrajectorySpec,
    control: &StepControl,
    samples: usize,
) -> Result<Vec<TrajectoryRecord>, PropagationError> {
    if samples < 2 {
        return Err(PropagationError::InvalidTrajectory(
            "at least 2 samples are required",
        ));
    }
    if control.h1 <= 0.0 {
        return Err(PropagationError::InvalidTrajectory(
            "trajectory integration requires a positive initial step",
        ));
    }
    let segments = build_segments(model, spec)?;
    let initial = StateVector::basis(model.sun.n_flavors(), spec.initial_flavor);
    let mut walker = SegmentWalker::new(segments, initial);

    if walker.total == 0.0 {
        return Ok(vec![walker.record(0.0)]);
    }

    let mut records = Vec::with_capacity(samples);
    records.push(walker.record(0.0));
    for k in 1..samples {
        let target = if k == samples - 1 {
            walker.total
        } else {
            walker.total * k as f64 / (samples - 1) as f64
        };
        walker.advance_to(target, control)?;
        records.push(walker.record(target));
    }
    Ok(records)
}

/// Final state of one full-trajectory integration without intermediate
/// sampling; used per scan point and by cross-method checks.
pub fn trajectory_final_state(
    model: &TrajectoryModel,
    spec: &TrajectorySpec,
    control: &StepControl,
) -> Result<(StateVector, IntegrationStats), PropagationError> {
    let segments = build_segments(model, spec)?;
    let initial = StateVector::basis(model.sun.n_flavors(), spec.initial_flavor);
    let mut walker = SegmentWalker::new(segments, initial);
    let total = walker.total;
    walker.advance_to(total, control)?;
    Ok((walker.y, walker.stats))
}

fn max_norm_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Adaptive scan streaming each accepted record to `sink` as soon as it is
/// produced, so long scans can be checkpointed.
///
/// The scan walks Var from `var_start` toward `var_end`; a candidate point is
/// accepted when its probability vector stays within `prob_error` (max-norm)
/// of the previous accepted one, in which case the step grows by `increase`
/// (capped at |range|/min_steps). A rejected point shrinks the step by
/// `decrease`; once the shrink would drop below |range|/max_steps the point
/// is accepted at the floor instead of being retried forever.
pub fn adaptive_scan_streaming<F, S>(
    model_factory: F,
    spec: &TrajectorySpec,
    outer: &OuterLoopConfig,
    control: &StepControl,
    mut sink: S,
) -> Result<(), PropagationError>
where
    F: Fn(f64) -> TrajectoryModel,
    S: FnMut(&TrajectoryRecord),
{
    outer.validate()?;
    if outer.var_start == outer.var_end {
        return Err(PropagationError::DegenerateScan);
    }
    let range = outer.var_end - outer.var_start;
    let direction = range.signum();
    let floor = range.abs() / outer.max_steps as f64;
    let cap = range.abs() / outer.min_steps as f64;

    let probs_at = |var: f64| -> Result<TrajectoryRecord, PropagationError> {
        let model = model_factory(var);
        let (state, _) = trajectory_final_state(&model, spec, control)?;
        Ok(TrajectoryRecord {
            position_or_var: var,
            probabilities: survival_probabilities(&state),
            norm_deviation: state.norm_sqr() - 1.0,
        })
    };

    let first = probs_at(outer.var_start)?;
    let mut prev_probs = first.probabilities.clone();
    sink(&first);

    let mut var_o = outer.var_start;
    let mut h = range / outer.init_steps as f64;

    for _ in 0..outer.max_steps {
        // Clamp the step so the last point lands exactly on var_end.
        let (var, landing) = if (var_o + h - outer.var_end) * direction >= 0.0 {
            (outer.var_end, true)
        } else {
            (var_o + h, false)
        };

        let record = probs_at(var)?;
        if max_norm_distance(&record.probabilities, &prev_probs) > outer.prob_error {
            h *= outer.decrease;
            let floored = direction * h.abs().max(floor);
            if floored != h {
                // Shrink hit the floor: accept the point anyway.
                prev_probs = record.probabilities.clone();
                sink(&record);
                var_o = var;
                if landing {
                    return Ok(());
                }
            }
            h = floored;
        } else {
            prev_probs = record.probabilities.clone();
            sink(&record);
            h *= outer.increase;
            if h.abs() > cap {
                h = direction * cap;
            }
            var_o = var;
            if landing {
                return Ok(());
            }
        }
    }

    Err(PropagationError::ScanBudget {
        max_steps: outer.max_steps,
    })
}

/// Collecting wrapper around [`adaptive_scan_streaming`].
pub fn adaptive_scan<F>(
    model_factory: F,
    spec: &TrajectorySpec,
    outer: &OuterLoopConfig,
    control: &StepControl,
) -> Result<Vec<TrajectoryRecord>, PropagationError>
where
    F: Fn(f64) -> TrajectoryModel,
{
    let mut records = Vec::new();
    adaptive_scan_streaming(model_factory, spec, outer, control, |r| {
        records.push(r.clone())
    })?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neutrino::{
        matter_potential, DensityProfile, MassSpectrum, MixingParameters, R_SUN,
    };
    use crate::oracle::two_flavor_vacuum_analytic;
    use std::f64::consts::FRAC_PI_4;

    fn control(eps: f64, h1: f64) -> StepControl {
        StepControl {
            eps,
            h1,
            ..StepControl::default()
        }
    }

    fn vacuum_model(theta: f64, dm2: f64, energy: f64, radius: f64) -> HamiltonianModel {
        let mixing = MixingParameters::two_flavor(theta).unwrap();
        let spectrum = MassSpectrum::new(vec![0.0, dm2.sqrt()], energy).unwrap();
        let profile = DensityProfile::solar(0.0, 10.6, radius).unwrap();
        HamiltonianModel::new(mixing, spectrum, profile, false).unwrap()
    }

    fn solar_toy_model(
        theta: f64,
        dm2: f64,
        energy: f64,
        n0: f64,
        radius: f64,
    ) -> HamiltonianModel {
        let mixing = MixingParameters::two_flavor(theta).unwrap();
        let spectrum = MassSpectrum::new(vec![0.0, dm2.sqrt()], energy).unwrap();
        let profile = DensityProfile::solar(n0, 10.6, radius).unwrap();
        HamiltonianModel::new(mixing, spectrum, profile, false).unwrap()
    }

    #[test]
    fn survival_of_initial_basis_state() {
        let state = StateVector::basis(3, 0);
        assert_eq!(survival_probabilities(&state), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn survival_sum_tracks_norm() {
        let state =
            StateVector::new(vec![Complex64::new(0.6, 0.1), Complex64::new(0.0, 0.79)]).unwrap();
        let p = survival_probabilities(&state);
        let sum: f64 = p.iter().sum();
        assert!((sum - state.norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn two_flavor_half_oscillation_converts_fully() {
        // θ = π/4 and a phase of π/2 drive P_e to zero.
        let dm2 = 1e-5;
        let energy = 1e6;
        let length = std::f64::consts::PI * 2.0 * energy / dm2;
        let model = vacuum_model(FRAC_PI_4, dm2, energy, length);
        let spec = TrajectorySpec::sun_only(length);
        let records = propagate_trajectory(
            &TrajectoryModel::sun_only(model),
            &spec,
            &control(1e-10, 1e3),
            2,
        )
        .unwrap();
        let p_e = records.last().unwrap().probabilities[0];
        assert!(p_e.abs() < 1e-6, "P_e = {p_e}");
    }

    #[test]
    fn zero_length_trajectory_yields_single_initial_record() {
        let model = vacuum_model(0.5, 1e-5, 1e6, 100.0);
        let spec = TrajectorySpec::sun_only(0.0);
        let records = propagate_trajectory(
            &TrajectoryModel::sun_only(model),
            &spec,
            &control(1e-8, 1.0),
            2,
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].probabilities, vec![1.0, 0.0]);
        assert_eq!(records[0].norm_deviation, 0.0);
    }

    #[test]
    fn no_mixing_keeps_electron_probability_at_one() {
        let model = solar_toy_model(0.0, 1e-5, 1e6, 245.0, 1e9);
        let spec = TrajectorySpec::sun_only(1e9);
        let records = propagate_trajectory(
            &TrajectoryModel::sun_only(model),
            &spec,
            &control(1e-8, 1e2),
            20,
        )
        .unwrap();
        for r in &records {
            assert!((r.probabilities[0] - 1.0).abs() < 1e-9, "record {r:?}");
        }
    }

    #[test]
    fn records_are_unitary_to_tolerance_on_a_solar_run() {
        // Scaled-down solar trajectory; total accumulated phase is modest, so
        // the squared norm must hold to well below 1e-6 at eps = 1e-8.
        let radius = R_SUN / 100.0;
        let model = solar_toy_model(0.58, 1e-7, 1e7, 14.0, radius);
        let spec = TrajectorySpec::sun_only(radius);
        let records = propagate_trajectory(
            &TrajectoryModel::sun_only(model),
            &spec,
            &control(1e-8, 1e6),
            30,
        )
        .unwrap();
        assert_eq!(records.len(), 30);
        for r in &records {
            assert!(r.norm_deviation.abs() < 1e-6, "record {r:?}");
            for p in &r.probabilities {
                assert!(*p >= 0.0 && *p <= 1.0 + r.norm_deviation.abs() + 1e-12);
            }
        }
        // Positions are strictly monotone and end exactly at the surface.
        for w in records.windows(2) {
            assert!(w[1].position_or_var > w[0].position_or_var);
        }
        assert_eq!(records.last().unwrap().position_or_var, radius);
    }

    #[test]
    fn sampling_does_not_perturb_the_final_point() {
        let radius = R_SUN / 500.0;
        let model = solar_toy_model(0.5, 4e-7, 1e7, 30.0, radius);
        let spec = TrajectorySpec::sun_only(radius);
        let ctrl = control(1e-8, 1e5);
        let sampled =
            propagate_trajectory(&TrajectoryModel::sun_only(model.clone()), &spec, &ctrl, 40)
                .unwrap();
        let (direct, _) =
            trajectory_final_state(&TrajectoryModel::sun_only(model), &spec, &ctrl).unwrap();
        let direct_probs = survival_probabilities(&direct);
        let last = sampled.last().unwrap();
        for (a, b) in last.probabilities.iter().zip(direct_probs.iter()) {
            assert!((a - b).abs() < 1e-7, "sampled {a} vs direct {b}");
        }
    }

    #[test]
    fn earth_with_zero_density_equals_vacuum_flight() {
        let radius = R_SUN / 1000.0;
        let earth_len = radius / 4.0;
        let sun = solar_toy_model(0.6, 1e-6, 1e7, 20.0, radius);
        let zero_earth = {
            let profile = DensityProfile::solar(0.0, 10.6, earth_len).unwrap();
            HamiltonianModel::new(*sun.mixing(), sun.spectrum().clone(), profile, false).unwrap()
        };
        let ctrl = control(1e-9, 1e4);

        let mut spec = TrajectorySpec::sun_plus_earth(radius, earth_len);
        spec.gap = 0.0;
        let (with_earth, _) = trajectory_final_state(
            &TrajectoryModel::with_earth(sun.clone(), zero_earth),
            &spec,
            &ctrl,
        )
        .unwrap();

        // Same journey as sun-only followed by a pure vacuum gap.
        let sun_only_spec = TrajectorySpec::sun_only(radius);
        let (after_sun, _) = trajectory_final_state(
            &TrajectoryModel::sun_only(sun.clone()),
            &sun_only_spec,
            &ctrl,
        )
        .unwrap();
        let vac_ham = crate::rk::MatrixHamiltonian::new(sun.vacuum_flavor().clone());
        let (after_vacuum, _) = rk::integrate(&after_sun, 0.0, earth_len, &ctrl, &vac_ham).unwrap();

        let pa = survival_probabilities(&with_earth);
        let pb = survival_probabilities(&after_vacuum);
        for (a, b) in pa.iter().zip(pb.iter()) {
            assert!((a - b).abs() < 1e-7, "earth {a} vs vacuum {b}");
        }
    }

    #[test]
    fn earth_crossing_is_symmetric_about_the_midpoint() {
        let sun = solar_toy_model(0.6, 1e-6, 1e7, 0.0, 1.0);
        let earth = {
            let profile = DensityProfile::earth_two_layer(11.0, 4.5, 0.55, 50.0).unwrap();
            HamiltonianModel::new(*sun.mixing(), sun.spectrum().clone(), profile, false).unwrap()
        };
        let seg = SegmentHamiltonian::Crossing(&earth, 100.0);
        let a = seg.entry(10.0, 0, 0);
        let b = seg.entry(90.0, 0, 0);
        assert_eq!(a, b);
        // Depth 50 is the center: core density applies.
        let center = seg.entry(50.0, 0, 0) - earth.vacuum_flavor().get(0, 0);
        let expected = matter_potential(11.0, false).unwrap();
        assert!((center.re - expected).abs() < expected * 1e-12);
    }

    #[test]
    fn trajectory_rejects_bad_inputs() {
        let model = vacuum_model(0.5, 1e-5, 1e6, 100.0);
        let spec = TrajectorySpec::sun_only(100.0);
        let tm = TrajectoryModel::sun_only(model);
        assert!(matches!(
            propagate_trajectory(&tm, &spec, &control(1e-8, 1.0), 1),
            Err(PropagationError::InvalidTrajectory(_))
        ));
        let mut flavorless = spec.clone();
        flavorless.initial_flavor = 5;
        assert!(propagate_trajectory(&tm, &flavorless, &control(1e-8, 1.0), 4).is_err());
        let earth_spec = TrajectorySpec::sun_plus_earth(100.0, 10.0);
        assert!(matches!(
            propagate_trajectory(&tm, &earth_spec, &control(1e-8, 1.0), 4),
            Err(PropagationError::MissingEarthModel)
        ));
    }

    #[test]
    fn integration_errors_carry_the_failing_position() {
        let model = vacuum_model(0.5, 1e-5, 1e6, 100.0);
        let spec = TrajectorySpec::sun_only(100.0);
        let bad_control = StepControl {
            maxstp: 1,
            h1: 1e-5,
            hmin: 0.0,
            ..StepControl::default()
        };
        let err = propagate_trajectory(&TrajectoryModel::sun_only(model), &spec, &bad_control, 3)
            .unwrap_err();
        match err {
            PropagationError::Integration { source, .. } => {
                assert!(matches!(source, RkError::BudgetExceeded { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    // --- adaptive scan ---------------------------------------------------

    /// Cheap factory: flat response for θ = 0 (P stays exactly (1, 0)).
    fn flat_factory(radius: f64) -> impl Fn(f64) -> TrajectoryModel {
        move |var: f64| {
            let dm2 = 2.0 * 1e6 * 10f64.powf(var);
            TrajectoryModel::sun_only(solar_toy_model(0.0, dm2, 1e6, 0.0, radius))
        }
    }

    /// Oscillatory factory over a short vacuum baseline.
    fn oscillating_factory(theta: f64, radius: f64) -> impl Fn(f64) -> TrajectoryModel {
        move |var: f64| {
            let dm2 = 2.0 * 1e6 * 10f64.powf(var);
            TrajectoryModel::sun_only(vacuum_model(theta, dm2, 1e6, radius))
        }
    }

    #[test]
    fn flat_scan_grows_steps_by_factor_five_to_the_cap() {
        let outer = OuterLoopConfig {
            var_start: 0.0,
            var_end: -10.0,
            init_steps: 1_000_000,
            min_steps: 10_000,
            max_steps: 10_000_000,
            ..OuterLoopConfig::default()
        };
        let records = adaptive_scan(
            flat_factory(1.0),
            &TrajectorySpec::sun_only(1.0),
            &outer,
            &control(1e-8, 0.1),
        )
        .unwrap();
        let vars: Vec<f64> = records.iter().map(|r| r.position_or_var).collect();
        let h0 = 10.0 / 1e6;
        let cap = 10.0 / 1e4;
        // First steps grow by the increase factor, then saturate at the cap.
        let step1 = (vars[1] - vars[0]).abs();
        let step2 = (vars[2] - vars[1]).abs();
        let step3 = (vars[3] - vars[2]).abs();
        assert!((step1 - h0).abs() < h0 * 1e-9);
        assert!((step2 - 5.0 * h0).abs() < h0 * 1e-6);
        assert!((step3 - 25.0 * h0).abs() < h0 * 1e-5);
        let mid_step = (vars[7] - vars[6]).abs();
        assert!(
            (mid_step - cap).abs() < cap * 1e-9,
            "step not capped: {mid_step}"
        );
    }

    #[test]
    fn scan_covers_range_monotonically_with_endpoint() {
        let outer = OuterLoopConfig {
            var_start: -2.0,
            var_end: -7.0,
            init_steps: 100,
            min_steps: 50,
            max_steps: 100_000,
            prob_error: 0.05,
            ..OuterLoopConfig::default()
        };
        let records = adaptive_scan(
            oscillating_factory(0.35, 1e4),
            &TrajectorySpec::sun_only(1e4),
            &outer,
            &control(1e-8, 1e1),
        )
        .unwrap();
        assert_eq!(records.first().unwrap().position_or_var, -2.0);
        assert_eq!(records.last().unwrap().position_or_var, -7.0);
        for w in records.windows(2) {
            assert!(w[1].position_or_var < w[0].position_or_var);
        }
    }

    #[test]
    fn scan_respects_probability_contract_except_floor_steps() {
        let outer = OuterLoopConfig {
            var_start: -2.0,
            var_end: -5.0,
            init_steps: 200,
            min_steps: 100,
            max_steps: 4_000,
            prob_error: 0.05,
            ..OuterLoopConfig::default()
        };
        let records = adaptive_scan(
            oscillating_factory(0.5, 1e4),
            &TrajectorySpec::sun_only(1e4),
            &outer,
            &control(1e-8, 1e1),
        )
        .unwrap();
        // A point is accepted above prob_error only when the shrink would
        // drop below the floor, i.e. the tried step was within floor/decrease.
        let floor_accept_limit = (3.0 / 4000.0) / outer.decrease;
        let mut floor_accepts = 0;
        for w in records.windows(2) {
            let dist = max_norm_distance(&w[1].probabilities, &w[0].probabilities);
            let dvar = (w[1].position_or_var - w[0].position_or_var).abs();
            if dist > outer.prob_error {
                floor_accepts += 1;
                assert!(
                    dvar <= floor_accept_limit * (1.0 + 1e-9),
                    "non-floor step {dvar} broke the contract (dist {dist})"
                );
            }
        }
        // The oscillatory edge of this scan must actually exercise the floor.
        assert!(floor_accepts > 0, "expected at least one floor acceptance");
    }

    #[test]
    fn scan_point_count_scales_with_prob_error() {
        let spec = TrajectorySpec::sun_only(1e4);
        let run = |prob_error: f64| {
            let outer = OuterLoopConfig {
                var_start: -2.0,
                var_end: -5.0,
                init_steps: 200,
                min_steps: 100,
                max_steps: 100_000,
                prob_error,
                ..OuterLoopConfig::default()
            };
            adaptive_scan(
                oscillating_factory(0.5, 1e4),
                &spec,
                &outer,
                &control(1e-8, 1e1),
            )
            .unwrap()
            .len()
        };
        let coarse = run(0.08);
        let fine = run(0.04);
        assert!(
            fine >= coarse,
            "halving prob_error lost points: {coarse} -> {fine}"
        );
    }

    #[test]
    fn degenerate_scan_range_is_rejected() {
        let outer = OuterLoopConfig {
            var_start: -3.0,
            var_end: -3.0,
            ..OuterLoopConfig::default()
        };
        let err = adaptive_scan(
            flat_factory(1.0),
            &TrajectorySpec::sun_only(1.0),
            &outer,
            &control(1e-8, 0.1),
        )
        .unwrap_err();
        assert_eq!(err, PropagationError::DegenerateScan);
    }

    #[test]
    fn scan_budget_error_mentions_too_many_steps() {
        let outer = OuterLoopConfig {
            var_start: -2.0,
            var_end: -12.0,
            max_steps: 10,
            min_steps: 10,
            init_steps: 10_000,
            ..OuterLoopConfig::default()
        };
        let err = adaptive_scan(
            flat_factory(1.0),
            &TrajectorySpec::sun_only(1.0),
            &outer,
            &control(1e-8, 0.1),
        )
        .unwrap_err();
        assert_eq!(err, PropagationError::ScanBudget { max_steps: 10 });
        assert!(err.to_string().contains("Too many steps"));
    }

    #[test]
    fn scan_streams_records_incrementally() {
        let outer = OuterLoopConfig {
            var_start: 0.0,
            var_end: -2.0,
            init_steps: 10,
            min_steps: 5,
            max_steps: 1_000,
            ..OuterLoopConfig::default()
        };
        let mut seen = 0usize;
        adaptive_scan_streaming(
            flat_factory(1.0),
            &TrajectorySpec::sun_only(1.0),
            &outer,
            &control(1e-8, 0.1),
            |_| seen += 1,
        )
        .unwrap();
        assert!(seen >= 6, "expected streamed records, saw {seen}");
    }

    #[test]
    fn vacuum_scan_matches_analytic_probabilities() {
        let theta = 0.5;
        let radius = 1e4;
        let outer = OuterLoopConfig {
            var_start: -2.5,
            var_end: -4.5,
            init_steps: 100,
            min_steps: 50,
            max_steps: 50_000,
            ..OuterLoopConfig::default()
        };
        let records = adaptive_scan(
            oscillating_factory(theta, radius),
            &TrajectorySpec::sun_only(radius),
            &outer,
            &control(1e-9, 1e1),
        )
        .unwrap();
        for r in records.iter().step_by(7) {
            let dm2 = 2.0 * 1e6 * 10f64.powf(r.position_or_var);
            let expected = two_flavor_vacuum_analytic(theta, dm2, 1e6, radius);
            assert!(
                (r.probabilities[0] - expected).abs() < 1e-6,
                "Var {} : {} vs analytic {}",
                r.position_or_var,
                r.probabilities[0],
                expected
            );
        }
    }
}
