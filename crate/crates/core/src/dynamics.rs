//! Local time evolution of the atomic ensemble.
//!
//! Every (detuning row, position column) cell evolves independently between
//! field updates, so the workhorse here is the *exact* one-step solution of a
//! single driven cell under a piecewise-constant field:
//!
//! dα/dt = −(γ + iδ) α + (i/2) Ω   ⇒   α' = rot·α + src·Ω
//!
//! with `rot = exp(−λ h)`, `src = (i/2)(1 − rot)/λ`, `λ = γ + iδ`,
//! `δ = δ_intrinsic + stark_shift(z)` and `γ = 1/T₂` (zero without decay).
//! These kernels are precomputed per cell for the full and half step
//! ([`StepKernels`]) and rebuilt whenever the gradient changes.
//!
//! The optional full Bloch mode keeps the inversion `w` per cell and advances
//! with a norm-preserving Strang split: half a free δ-rotation (a complex
//! phase on α), an exact Rodrigues rotation about the drive axis, and the
//! second half of the free rotation. In the weak-excitation limit (w ≈ −1) it
//! reduces to the linear kernel step to second order in the pulse area.

use serde::{Deserialize, Serialize};

use crate::model::MediumSpec;
use crate::C64;

/// Propagation direction the state is currently referenced to.
///
/// Forward storage leaves the ensemble referenced to the forward carrier;
/// retrieving backward first needs [`phase_match`] to re-reference it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// Which local equations of motion to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Weak-excitation limit: inversion pinned at −1, α evolves linearly.
    Linear,
    /// Full two-level dynamics with the inversion tracked per cell.
    Bloch,
}

/// The ensemble: one coherence (and optionally one inversion) per
/// (detuning row, position column) cell, stored column-major — all detuning
/// rows of a position are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    alpha: Vec<C64>,
    inversion: Option<Vec<f64>>,
    pub direction: Direction,
    pub time_us: f64,
    n_detune: usize,
    n_z: usize,
}

impl EnsembleState {
    /// All atoms in the ground state at t = 0.
    pub fn ground(medium: &MediumSpec, mode: SolveMode) -> EnsembleState {
        let n_detune = medium.grid.n_detune;
        let n_z = medium.grid.n_z;
        let n = n_detune * n_z;
        EnsembleState {
            alpha: vec![C64::new(0.0, 0.0); n],
            inversion: match mode {
                SolveMode::Linear => None,
                SolveMode::Bloch => Some(vec![-1.0; n]),
            },
            direction: Direction::Forward,
            time_us: 0.0,
            n_detune,
            n_z,
        }
    }

    pub fn mode(&self) -> SolveMode {
        if self.inversion.is_some() {
            SolveMode::Bloch
        } else {
            SolveMode::Linear
        }
    }

    pub fn n_detune(&self) -> usize {
        self.n_detune
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    /// Flat index of (detuning row `i`, position column `j`).
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n_detune + i
    }

    pub fn alpha(&self) -> &[C64] {
        &self.alpha
    }

    pub fn alpha_mut(&mut self) -> &mut [C64] {
        &mut self.alpha
    }

    pub fn inversion(&self) -> Option<&[f64]> {
        self.inversion.as_deref()
    }

    /// The coherence column of position `j`.
    pub fn column(&self, j: usize) -> &[C64] {
        &self.alpha[j * self.n_detune..(j + 1) * self.n_detune]
    }

    /// Splits the state into per-column coherence slices (and inversion
    /// slices in Bloch mode) for the steppers.
    pub fn columns_mut(&mut self) -> (Vec<&mut [C64]>, Option<Vec<&mut [f64]>>) {
        let n_d = self.n_detune;
        let a = self.alpha.chunks_mut(n_d).collect();
        let w = self.inversion.as_mut().map(|w| w.chunks_mut(n_d).collect());
        (a, w)
    }

    /// Stored excitation in field-energy bookkeeping units:
    /// Σ_j w_z(j) Σ_i w_δ(i) |α_ij|², with the medium's quadrature weights
    /// (the detuning weights already include the density). Together with the
    /// coupling this accounts for the energy a pulse leaves in the medium.
    pub fn stored_excitation(&self, medium: &MediumSpec) -> f64 {
        let wd = medium.detune_weights();
        let dz = medium.grid.dz_mm();
        let mut total = 0.0;
        for j in 0..self.n_z {
            let wz = if j == 0 || j == self.n_z - 1 { dz / 2.0 } else { dz };
            let col = self.column(j);
            let mut s = 0.0;
            for i in 0..self.n_detune {
                s += wd[i] * col[i].norm_sqr();
            }
            total += wz * s;
        }
        total
    }

    /// Largest |α| anywhere — a quick check that the linear regime holds.
    pub fn max_coherence(&self) -> f64 {
        self.alpha.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

/// Re-reference the stored ensemble from the forward to the backward carrier
/// (or back). Physically this stands in for the externally supplied momentum
/// kick that makes backward retrieval phase-matched; for the envelope degrees
/// of freedom tracked here it only retargets the direction the transport
/// sweep is allowed to run, so amplitudes are left untouched.
pub fn phase_match(state: &mut EnsembleState) {
    state.direction = match state.direction {
        Direction::Forward => Direction::Backward,
        Direction::Backward => Direction::Forward,
    };
}

/// (1 − e^(−x)) / x for complex x, stable near zero (series below |x| = 1).
fn one_minus_exp_over(x: C64) -> C64 {
    if x.norm() < 1.0 {
        // Σ_{k≥0} (−x)^k / (k+1)!, truncated where terms fall below 1e−17.
        let mut term = C64::new(1.0, 0.0);
        let mut acc = term;
        for k in 1..18 {
            term = term * (-x) / (k as f64 + 1.0);
            acc += term;
        }
        acc
    } else {
        (C64::new(1.0, 0.0) - (-x).exp()) / x
    }
}

/// Precomputed per-cell propagators for one time step and one gradient state.
///
/// `rot_*` multiplies the coherence (free evolution + decay); `src_*`
/// multiplies the constant field over the interval. `*_full` covers `dt`,
/// `*_half` covers `dt/2` (used for midpoint predictor stages and for the
/// free half-rotations of the Bloch split). Layout matches
/// [`EnsembleState`]: index = column × n_detune + row.
#[derive(Debug, Clone)]
pub struct StepKernels {
    pub dt_us: f64,
    rot_full: Vec<C64>,
    src_full: Vec<C64>,
    rot_half: Vec<C64>,
    src_half: Vec<C64>,
}

impl StepKernels {
    pub fn build(medium: &MediumSpec, dt_us: f64) -> StepKernels {
        let gamma = medium.homogeneous_t2_us.map_or(0.0, |t2| 1.0 / t2);
        let n_d = medium.grid.n_detune;
        let n_z = medium.grid.n_z;
        let n = n_d * n_z;
        let mut k = StepKernels {
            dt_us,
            rot_full: Vec::with_capacity(n),
            src_full: Vec::with_capacity(n),
            rot_half: Vec::with_capacity(n),
            src_half: Vec::with_capacity(n),
        };
        let half_i = C64::new(0.0, 0.5);
        for j in 0..n_z {
            let shift = medium.stark_shift_cell(j);
            for i in 0..n_d {
                let lambda = C64::new(gamma, medium.grid.detune_at(i) + shift);
                for (h, rot, src) in [
                    (dt_us, &mut k.rot_full, &mut k.src_full),
                    (dt_us / 2.0, &mut k.rot_half, &mut k.src_half),
                ] {
                    let x = lambda * h;
                    rot.push((-x).exp());
                    src.push(half_i * h * one_minus_exp_over(x));
                }
            }
        }
        k
    }

    pub fn column_full(&self, n_detune: usize, j: usize) -> (&[C64], &[C64]) {
        let r = j * n_detune..(j + 1) * n_detune;
        (&self.rot_full[r.clone()], &self.src_full[r])
    }

    pub fn column_half(&self, n_detune: usize, j: usize) -> (&[C64], &[C64]) {
        let r = j * n_detune..(j + 1) * n_detune;
        (&self.rot_half[r.clone()], &self.src_half[r])
    }
}

/// Exact linear step of one column under a constant field: α ← rot α + src Ω.
pub fn advance_column_linear(alpha: &mut [C64], rot: &[C64], src: &[C64], omega: C64) {
    for ((a, &r), &s) in alpha.iter_mut().zip(rot).zip(src) {
        *a = r * *a + s * omega;
    }
}

/// Weighted sum Σ w_i α_i of one column — the macroscopic polarization when
/// fed the medium's detuning weights.
#[inline]
pub fn weighted_sum(alpha: &[C64], weights: &[f64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (&a, &w) in alpha.iter().zip(weights) {
        acc += a * w;
    }
    acc
}

/// Rotate one column's Bloch vectors by angle |Ω|·h about the drive axis
/// (−Re Ω, Im Ω, 0)/|Ω| — the exact effect of a constant resonant drive.
fn rotate_column_drive(alpha: &mut [C64], w: &mut [f64], omega: C64, h: f64) {
    let mag = omega.norm();
    if mag == 0.0 {
        return;
    }
    let theta = mag * h;
    let (s, c) = theta.sin_cos();
    let n1 = -omega.re / mag;
    let n2 = omega.im / mag;
    for (a, wi) in alpha.iter_mut().zip(w.iter_mut()) {
        let u = 2.0 * a.re;
        let v = -2.0 * a.im;
        let p = n1 * u + n2 * v;
        let u2 = c * u + s * n2 * *wi + (1.0 - c) * p * n1;
        let v2 = c * v - s * n1 * *wi + (1.0 - c) * p * n2;
        let w2 = c * *wi + s * (n1 * v - n2 * u);
        *a = C64::new(u2 / 2.0, -v2 / 2.0);
        *wi = w2;
    }
}

/// Second-order full step of one Bloch column: half free rotation (complex
/// phase from the half-step kernel), exact drive rotation over the whole
/// step, half free rotation.
pub fn advance_column_bloch_full(
    alpha: &mut [C64],
    w: &mut [f64],
    rot_half: &[C64],
    omega: C64,
    dt: f64,
) {
    for (a, &r) in alpha.iter_mut().zip(rot_half) {
        *a *= r;
    }
    rotate_column_drive(alpha, w, omega, dt);
    for (a, &r) in alpha.iter_mut().zip(rot_half) {
        *a *= r;
    }
}

/// First-order half step of one Bloch column (enough for predictor stages):
/// free rotation over dt/2, then the drive rotation over dt/2.
pub fn advance_column_bloch_half(
    alpha: &mut [C64],
    w: &mut [f64],
    rot_half: &[C64],
    omega: C64,
    dt: f64,
) {
    for (a, &r) in alpha.iter_mut().zip(rot_half) {
        *a *= r;
    }
    rotate_column_drive(alpha, w, omega, dt / 2.0);
}
