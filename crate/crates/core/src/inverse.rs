//! Per-step inverse problem: how the trap moves when currents change, and
//! which current increments move it where we want.

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3, SVD};
use serde::Serialize;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::{ChipLayout, CurrentVector, WireGroup};
use crate::magnetics::{basis_jets, Order};
use crate::schedule::{desired_trajectory, TransportPlan};
use crate::trap::{sorted_eigen, TrapMetrics, TrapModel};

/// Below this field magnitude the trap centre is a spin-flip hole.
const ZERO_FIELD: f64 = 1e-12;
/// Smallest Hessian eigenvalue accepted as positive definite, J/m^2.
const MIN_CURVATURE: f64 = 1e-30;

/// Where the channel mask is applied relative to the regularized solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrder {
    /// Drop fixed channels from the Jacobian, then solve.
    ReduceThenSolve,
    /// Solve over every channel, then zero the fixed ones.
    SolveThenMask,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Tikhonov base weight `lambda`; the applied weight is `lambda (1 + kappa)`.
    pub base_regularization: f64,
    /// Steps whose requested forward (x) progress is at or below this are skipped, m.
    pub forward_threshold: f64,
    /// `true` for channels the solver may change.
    pub mask: Vec<bool>,
    /// Per-channel current magnitude limits, A.
    pub clip_limits: Vec<f64>,
    /// Condition numbers above this are reported as this value, with a warning.
    pub max_condition: f64,
    /// Length unit of the Jacobian and displacement inside the regularized
    /// solve, m. `alpha` only has meaning relative to a unit: in metres it
    /// swamps `J^T J` and nothing moves, in millimetres it still shrinks the
    /// weak directions enough to lag the trap by tens of micrometres.
    pub length_unit: f64,
    pub mask_order: MaskOrder,
}

impl SolverConfig {
    /// Defaults for `layout`: shifting channels optimized, guiding channels held.
    pub fn for_layout(layout: &ChipLayout) -> Self {
        let n = layout.channel_count();
        let shifting = layout.channels_in(WireGroup::Shifting);
        SolverConfig {
            base_regularization: 1e-2,
            forward_threshold: 1e-9,
            mask: (0..n).map(|k| shifting.contains(&k)).collect(),
            clip_limits: layout.channel_limits(),
            max_condition: 1e8,
            length_unit: 1e-6,
            mask_order: MaskOrder::ReduceThenSolve,
        }
    }

    pub fn validate(&self, layout: &ChipLayout) -> Result<()> {
        let n = layout.channel_count();
        let bad = |field, message: String| Err(Error::Config { field, message });
        if !(self.base_regularization > 0.0) {
            return bad("lambda", format!("must be positive, got {}", self.base_regularization));
        }
        if !(self.forward_threshold > 0.0) {
            return bad("threshold", format!("must be positive, got {}", self.forward_threshold));
        }
        if self.mask.len() != n {
            return bad("mask", format!("{} entries for {n} channels", self.mask.len()));
        }
        if !self.mask.iter().any(|&m| m) {
            return bad("mask", "no channel is optimized".into());
        }
        if self.clip_limits.len() != n || self.clip_limits.iter().any(|&l| !(l > 0.0)) {
            return bad("clip_limits", format!("need {n} positive limits"));
        }
        if !(self.max_condition >= 1.0) {
            return bad("max_condition", format!("must be at least 1, got {}", self.max_condition));
        }
        if !(self.length_unit > 0.0) {
            return bad("length_unit", format!("must be positive, got {}", self.length_unit));
        }
        Ok(())
    }

    fn active_channels(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&k| self.mask[k]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub currents: CurrentVector,
    pub metrics: TrapMetrics,
    /// `None` for the initial record and for skipped steps.
    pub jacobian_condition: Option<f64>,
    pub alpha_used: Option<f64>,
    /// m
    pub requested_displacement: Vector3<f64>,
    /// m
    pub achieved_displacement: Vector3<f64>,
    pub skipped: bool,
    /// At least one channel was pinned at its limit.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportResult {
    /// `N + 1` records; record 0 is the initial trap.
    pub records: Vec<StepRecord>,
    pub plan: TransportPlan,
    pub config: SolverConfig,
}

/// A transport run that lost the trap, with every record produced before the loss.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct TransportFailure {
    pub partial: TransportResult,
    #[source]
    pub error: Error,
}

/// `d^2 U / dr_i dI_k` at `r_min`, J/(m A); one column per channel.
pub fn mixed_second_derivative(
    model: &TrapModel,
    layout: &ChipLayout,
    currents: &CurrentVector,
    r_min: &Vector3<f64>,
) -> Result<DMatrix<f64>> {
    currents.check(layout)?;
    let jets = basis_jets(layout, r_min, Order::Gradient)?;
    let mut b = layout.bias.0;
    let mut g = Matrix3::zeros();
    for (jet, &i) in jets.iter().zip(currents.as_slice()) {
        b += jet.b * i;
        g += jet.grad * i;
    }
    let mag = b.norm();
    if mag < ZERO_FIELD {
        return Err(Error::ZeroField(mag));
    }
    let c = model.constants.zeeman();
    // dU/dr_i = c (G^T B)_i / |B|; differentiate with dB/dI_k = b_k, dG/dI_k = g_k.
    let grad_mag = g.transpose() * b / mag;
    let mut out = DMatrix::zeros(3, jets.len());
    for (k, jet) in jets.iter().enumerate() {
        let col = (g.transpose() * jet.b + jet.grad.transpose() * b) / mag
            - grad_mag * (b.dot(&jet.b) / (mag * mag));
        out.set_column(k, &(col * c));
    }
    Ok(out)
}

/// Trap-position sensitivity `J = -H^{-1} mixed`, m/A.
pub fn position_jacobian(hessian: &Matrix3<f64>, mixed: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, _) = sorted_eigen(hessian);
    if !(values[0] >= MIN_CURVATURE) {
        return Err(Error::SingularHessian(values[0]));
    }
    let chol = hessian
        .cholesky()
        .ok_or(Error::SingularHessian(values[0]))?;
    let mut j = DMatrix::zeros(3, mixed.ncols());
    for k in 0..mixed.ncols() {
        let rhs = -Vector3::new(mixed[(0, k)], mixed[(1, k)], mixed[(2, k)]);
        j.set_column(k, &chol.solve(&rhs));
    }
    Ok(j)
}

/// `alpha = lambda (1 + kappa)`.
pub fn adaptive_alpha(kappa: f64, base: f64) -> Result<f64> {
    if !(kappa >= 1.0) {
        return Err(Error::domain(format!("condition number must be at least 1, got {kappa}")));
    }
    if !(base > 0.0) {
        return Err(Error::domain(format!("regularization must be positive, got {base}")));
    }
    Ok(base * (1.0 + kappa))
}

/// Minimizer of `|J d - dr|^2 + alpha |d|^2`, computed from the SVD of `J`
/// with filter factors `s / (s^2 + alpha)`.
pub fn tikhonov_solve(jacobian: &DMatrix<f64>, delta_r: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    if delta_r.len() != jacobian.nrows() {
        return Err(Error::domain(format!(
            "{} displacement components for a {}-row Jacobian",
            delta_r.len(),
            jacobian.nrows()
        )));
    }
    let svd = SVD::new(jacobian.clone(), true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut coeffs = u.transpose() * delta_r;
    for (c, s) in coeffs.iter_mut().zip(svd.singular_values.iter()) {
        *c *= s / (s * s + alpha);
    }
    Ok(v_t.transpose() * coeffs)
}

/// 2-norm condition number over the `min(rows, cols)` singular values.
///
/// Rank-deficient or worse-than-`max_condition` matrices report
/// `max_condition` and log a warning.
pub fn condition_number(jacobian: &DMatrix<f64>, max_condition: f64) -> Result<f64> {
    let s = jacobian.singular_values();
    let hi = s.max();
    if !(hi > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let kappa = hi / s.min();
    if !(kappa <= max_condition) {
        warn!("Jacobian condition number {kappa:.3e} exceeds {max_condition:.1e}; treating it as {max_condition:.1e}");
        return Ok(max_condition);
    }
    Ok(kappa)
}

/// One iteration of the tracking loop: solve for a current increment that
/// moves the trap from `state.r_min` toward `r_des_next`, apply it, and find
/// the new minimum.
pub fn transport_step(
    model: &TrapModel,
    layout: &ChipLayout,
    currents: &CurrentVector,
    state: &TrapMetrics,
    r_des_next: &Vector3<f64>,
    config: &SolverConfig,
    step_index: usize,
) -> Result<(CurrentVector, StepRecord)> {
    let delta_r = r_des_next - state.r_min;
    if delta_r.x <= config.forward_threshold {
        let record = StepRecord {
            step_index,
            currents: currents.clone(),
            metrics: state.clone(),
            jacobian_condition: None,
            alpha_used: None,
            requested_displacement: delta_r,
            achieved_displacement: Vector3::zeros(),
            skipped: true,
            clipped: false,
        };
        return Ok((currents.clone(), record));
    }

    let mixed = mixed_second_derivative(model, layout, currents, &state.r_min)?;
    let jacobian = position_jacobian(&state.hessian, &mixed)? / config.length_unit;
    let target = DVector::from_column_slice((delta_r / config.length_unit).as_slice());

    let active = config.active_channels();
    let (kappa, alpha, delta_i) = match config.mask_order {
        MaskOrder::ReduceThenSolve => {
            let reduced = jacobian.select_columns(&active);
            let kappa = condition_number(&reduced, config.max_condition)?;
            let alpha = adaptive_alpha(kappa, config.base_regularization)?;
            let d = tikhonov_solve(&reduced, &target, alpha)?;
            let mut full = DVector::zeros(layout.channel_count());
            for (i, &k) in active.iter().enumerate() {
                full[k] = d[i];
            }
            (kappa, alpha, full)
        }
        MaskOrder::SolveThenMask => {
            let kappa = condition_number(&jacobian, config.max_condition)?;
            let alpha = adaptive_alpha(kappa, config.base_regularization)?;
            let mut d = tikhonov_solve(&jacobian, &target, alpha)?;
            for (k, &on) in config.mask.iter().enumerate() {
                if !on {
                    d[k] = 0.0;
                }
            }
            (kappa, alpha, d)
        }
    };

    let mut next = currents.clone();
    let mut clipped = false;
    for &k in &active {
        let limit = config.clip_limits[k];
        let raw = currents[k] + delta_i[k];
        let value = raw.clamp(-limit, limit);
        if value != raw {
            clipped = true;
            warn!("step {step_index}: channel {k} clipped at {value} A (requested {raw:.6} A)");
        }
        next.0[k] = value;
    }

    let r_next = model.find_minimum(layout, &next, &state.r_min)?;
    let metrics = model.characterize_at(layout, &next, &r_next)?;
    let record = StepRecord {
        step_index,
        currents: next.clone(),
        achieved_displacement: r_next - state.r_min,
        metrics,
        jacobian_condition: Some(kappa),
        alpha_used: Some(alpha),
        requested_displacement: delta_r,
        skipped: false,
        clipped,
    };
    Ok((next, record))
}

/// Runs the full tracking loop over the desired trajectory of `plan`.
///
/// `plan.start` should be the initial trap minimum; it is also the starting
/// guess for the initial characterization.
pub fn run_transport(
    model: &TrapModel,
    layout: &ChipLayout,
    initial_currents: &CurrentVector,
    plan: &TransportPlan,
    config: &SolverConfig,
) -> std::result::Result<TransportResult, Box<TransportFailure>> {
    let mut result = TransportResult {
        records: Vec::with_capacity(plan.step_count + 1),
        plan: plan.clone(),
        config: config.clone(),
    };
    let fail = |result: TransportResult, step: usize, error: Error| {
        Box::new(TransportFailure {
            partial: result,
            error: Error::Step {
                step,
                source: Box::new(error),
            },
        })
    };

    let setup = (|| {
        config.validate(layout)?;
        initial_currents.check(layout)?;
        let trajectory = desired_trajectory(plan)?;
        let initial = model.characterize(layout, initial_currents, &plan.start)?;
        Ok::<_, Error>((trajectory, initial))
    })();
    let (trajectory, initial) = match setup {
        Ok(v) => v,
        Err(e) => return Err(fail(result, 0, e)),
    };
    result.records.push(StepRecord {
        step_index: 0,
        currents: initial_currents.clone(),
        metrics: initial,
        jacobian_condition: None,
        alpha_used: None,
        requested_displacement: Vector3::zeros(),
        achieved_displacement: Vector3::zeros(),
        skipped: false,
        clipped: false,
    });

    let mut currents = initial_currents.clone();
    for (step, target) in trajectory.iter().enumerate().skip(1) {
        let state = &result.records[step - 1].metrics;
        match transport_step(model, layout, &currents, state, target, config, step) {
            Ok((next, record)) => {
                currents = next;
                result.records.push(record);
            }
            Err(e) => return Err(fail(result, step, e)),
        }
    }
    Ok(result)
}
