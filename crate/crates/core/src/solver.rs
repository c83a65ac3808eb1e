//! Multi-component, multi-split ADMM on the matched-filter surrogate.
//!
//! With `M = f_ig(y)` the solver minimizes
//!
//! ```text
//! ½‖M − Σ_c S_c‖² + Σ_i β_i·g_i(Z_i)   subject to   Z_i = S_{c(i)}
//! ```
//!
//! where cognition `i` constrains component `c(i)`. Each iteration runs the
//! closed-form X-update, one proximal step per split, and the scaled dual
//! ascent `D_i ← D_i + γ(S_{c(i)} − Z_i)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::OperatorPair;
use crate::regularizers::{CognitionSpec, PreparedCognition};
use crate::tasks::{task_preset, TaskId};
use crate::tensor::ComplexTensor3;

fn default_gamma() -> f64 {
    1.0
}

fn default_max_iters() -> usize {
    100
}

fn default_rel_tol() -> f64 {
    1e-4
}

fn default_components() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_components")]
    pub component_count: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            max_iters: default_max_iters(),
            rel_tol: default_rel_tol(),
            component_count: default_components(),
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.component_count == 0 {
            return Err(Error::InvalidParameter(
                "component_count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// `½‖M − Σ_c S_c‖²`.
    pub data_fidelity: f64,
    /// `β_i·g_i(Z_i)` per cognition.
    pub regularizers: Vec<f64>,
    pub objective: f64,
    /// `‖S_{c(i)} − Z_i‖` per cognition.
    pub primal_residuals: Vec<f64>,
    /// `‖S^{k+1} − S^k‖ / ‖S^k‖` over all components.
    pub rel_change: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub components: Vec<ComplexTensor3>,
    pub splits: Vec<ComplexTensor3>,
    pub duals: Vec<ComplexTensor3>,
    pub iteration: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    /// Absolute weights actually used, after scaling.
    pub betas: Vec<f64>,
}

/// The matched-filter image `f_ig(y)`.
pub fn matched_filter(op: &OperatorPair, y: &ComplexTensor3) -> Result<ComplexTensor3> {
    op.imaging(y)
}

/// Per-voxel minimizer over the components of
/// `½|M − Σ_c s_c|² + Σ_i (γ/2)|s_{c(i)} − Z_i + D_i/γ|²`.
///
/// The normal equations are `(𝟙𝟙ᵀ + Λ)s = M·𝟙 + b` with `Λ = diag(γ·m_c)`,
/// `m_c` the number of splits on component `c`, and `b_c = Σ_{i→c} (γZ_i − D_i)`.
/// They are solved with the rank-one update identity.
pub fn x_update(
    m: &ComplexTensor3,
    splits: &[ComplexTensor3],
    duals: &[ComplexTensor3],
    wiring: &[usize],
    component_count: usize,
    gamma: f64,
) -> Result<Vec<ComplexTensor3>> {
    if splits.len() != wiring.len() || duals.len() != wiring.len() {
        return Err(Error::Wiring(
            "splits, duals and wiring differ in length".into(),
        ));
    }
    for t in splits.iter().chain(duals) {
        m.ensure_same_dims(t)?;
    }
    let mut counts = vec![0usize; component_count];
    for &c in wiring {
        *counts
            .get_mut(c)
            .ok_or_else(|| Error::Wiring(format!("component {c} out of range")))? += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Wiring(format!(
            "component {c} has no cognition attached"
        )));
    }

    // b_c accumulated per component
    let mut rhs: Vec<ComplexTensor3> = (0..component_count).map(|_| m.clone()).collect();
    for ((z, d), &c) in splits.iter().zip(duals).zip(wiring) {
        let b = rhs[c].as_mut_slice();
        for ((r, &zv), &dv) in b.iter_mut().zip(z.as_slice()).zip(d.as_slice()) {
            *r += zv * gamma - dv;
        }
    }

    if component_count == 1 {
        let scale = 1.0 / (1.0 + counts[0] as f64 * gamma);
        return Ok(vec![rhs.pop().expect("one component").scale_real(scale)]);
    }

    // r = M·𝟙 + b is already in rhs; s = Λ⁻¹r − Λ⁻¹𝟙·(𝟙ᵀΛ⁻¹r)/(1 + 𝟙ᵀΛ⁻¹𝟙)
    let inv: Vec<f64> = counts.iter().map(|&n| 1.0 / (gamma * n as f64)).collect();
    let denom = 1.0 + inv.iter().sum::<f64>();
    let mut out: Vec<ComplexTensor3> = rhs
        .iter()
        .zip(&inv)
        .map(|(r, &w)| r.scale_real(w))
        .collect();
    let len = m.len();
    for v in 0..len {
        let coupling: Complex64 = out.iter().map(|o| o.as_slice()[v]).sum::<Complex64>() / denom;
        for (c, o) in out.iter_mut().enumerate() {
            o.as_mut_slice()[v] -= coupling * inv[c];
        }
    }
    Ok(out)
}

fn rel_change(prev: &[ComplexTensor3], next: &[ComplexTensor3]) -> f64 {
    let num: f64 = prev
        .iter()
        .zip(next)
        .map(|(a, b)| (b - a).frob_norm_sqr())
        .sum();
    let den: f64 = prev.iter().map(|a| a.frob_norm_sqr()).sum();
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        (num / den).sqrt()
    }
}

/// Runs ADMM. Splits on component 0 start at the matched-filter image, the
/// rest of the splits and all duals at zero. Starting every split at zero
/// makes the objective climb for the first several iterations.
pub fn admm_solve(
    op: &OperatorPair,
    y: &ComplexTensor3,
    cognitions: &[CognitionSpec],
    params: &SolverParams,
) -> Result<(Vec<ComplexTensor3>, SolverState)> {
    params.validate()?;
    if cognitions.is_empty() {
        return Err(Error::Wiring("at least one cognition is required".into()));
    }
    for c in cognitions {
        c.validate(params.component_count)?;
    }
    let m = matched_filter(op, y)?;
    let prepared = cognitions
        .iter()
        .map(|c| PreparedCognition::new(*c, &m))
        .collect::<Result<Vec<_>>>()?;
    let wiring: Vec<usize> = cognitions.iter().map(|c| c.component).collect();
    let gamma = params.gamma;
    let zeros = ComplexTensor3::zeros(m.dims())?;

    let mut state = SolverState {
        components: vec![zeros.clone(); params.component_count],
        splits: wiring
            .iter()
            .map(|&c| if c == 0 { m.clone() } else { zeros.clone() })
            .collect(),
        duals: vec![zeros; cognitions.len()],
        iteration: 0,
        converged: false,
        history: Vec::new(),
        betas: prepared.iter().map(|p| p.beta).collect(),
    };

    let fail = |iteration: usize| {
        move |e: Error| Error::Solver {
            iteration,
            source: Box::new(e),
        }
    };
    for k in 1..=params.max_iters {
        let components = x_update(
            &m,
            &state.splits,
            &state.duals,
            &wiring,
            params.component_count,
            gamma,
        )
        .map_err(fail(k))?;
        for (i, p) in prepared.iter().enumerate() {
            let s = &components[wiring[i]];
            let point = s + &state.duals[i].scale_real(1.0 / gamma);
            state.splits[i] = p.prox(&point, gamma).map_err(fail(k))?;
            let residual = s - &state.splits[i];
            state.duals[i] = &state.duals[i] + &residual.scale_real(gamma);
        }

        let change = rel_change(&state.components, &components);
        state.components = components;
        state.iteration = k;

        let mut model = state.components[0].clone();
        for c in &state.components[1..] {
            model = &model + c;
        }
        let data_fidelity = 0.5 * (&m - &model).frob_norm_sqr();
        let regularizers = prepared
            .iter()
            .zip(&state.splits)
            .map(|(p, z)| Ok(p.beta * p.value(z)?))
            .collect::<Result<Vec<f64>>>()
            .map_err(fail(k))?;
        let primal_residuals = wiring
            .iter()
            .zip(&state.splits)
            .map(|(&c, z)| (&state.components[c] - z).frob_norm())
            .collect();
        state.history.push(IterationRecord {
            data_fidelity,
            objective: data_fidelity + regularizers.iter().sum::<f64>(),
            regularizers,
            primal_residuals,
            rel_change: change,
        });

        if change <= params.rel_tol {
            state.converged = true;
            break;
        }
    }
    Ok((state.components.clone(), state))
}

/// Runs a task preset and returns its designated output component.
pub fn run_task(
    task: TaskId,
    op: &OperatorPair,
    y: &ComplexTensor3,
    overrides: Option<SolverParams>,
) -> Result<ComplexTensor3> {
    let preset = task_preset(task);
    let params = overrides.unwrap_or_else(|| preset.solver_params());
    let mut components = admm_solve(op, y, &preset.cognitions, &params)?.0;
    Ok(components.swap_remove(preset.output_component))
}
