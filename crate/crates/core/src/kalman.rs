//! Constant-velocity Kalman filter over centroid state `[px, py, vx, vy]`.
//!
//! Time advances in frames. The process noise is the piecewise-constant
//! white-acceleration model: for each axis, acceleration noise enters through
//! `G = [dt^2 / 2, dt]`, so `Q = q * G * G^T`. Measurements observe position
//! only, with isotropic noise `R = r * I`.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

/// The innovation covariance `S` is singular when `|det S|` falls below this
/// fraction of its squared largest diagonal entry, so the test does not
/// depend on the pixel scale of the noise parameters.
pub const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KalmanError {
    #[error("innovation covariance is singular (det = {det:e}); check noise parameters")]
    SingularInnovation { det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanParams {
    /// Frame step. Always 1 for tracking; only tests vary it.
    #[serde(skip, default = "one")]
    pub dt: f64,
    #[serde(rename = "q", default = "defaults::q")]
    pub process_noise_q: f64,
    #[serde(rename = "r", default = "defaults::r")]
    pub measurement_noise_r: f64,
    #[serde(rename = "v0", default = "defaults::v0")]
    pub initial_velocity_var: f64,
}

fn one() -> f64 {
    1.0
}

mod defaults {
    pub fn q() -> f64 {
        1.0
    }
    pub fn r() -> f64 {
        1.0
    }
    pub fn v0() -> f64 {
        1000.0
    }
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            process_noise_q: defaults::q(),
            measurement_noise_r: defaults::r(),
            initial_velocity_var: defaults::v0(),
        }
    }
}

impl KalmanParams {
    pub(crate) fn invalid_field(&self) -> Option<&'static str> {
        let checks = [
            ("q", self.process_noise_q),
            ("r", self.measurement_noise_r),
            ("v0", self.initial_velocity_var),
        ];
        checks
            .into_iter()
            .find(|(_, v)| !v.is_finite() || *v < 0.0)
            .map(|(name, _)| name)
    }

    fn transition(&self) -> Matrix4<f64> {
        let dt = self.dt;
        Matrix4::new(
            1.0, 0.0, dt, 0.0, //
            0.0, 1.0, 0.0, dt, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        )
    }

    fn process_noise(&self) -> Matrix4<f64> {
        let dt = self.dt;
        let g = Matrix4x2::new(
            dt * dt / 2.0,
            0.0, //
            0.0,
            dt * dt / 2.0, //
            dt,
            0.0, //
            0.0,
            dt,
        );
        g * g.transpose() * self.process_noise_q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    )
}

impl KalmanState {
    pub fn position(&self) -> Point2 {
        Point2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Point2 {
        Point2::new(self.mean[2], self.mean[3])
    }

    /// Innovation mean and covariance for a position measurement.
    fn innovation(&self, z: Point2, params: &KalmanParams) -> (Vector2<f64>, Matrix2<f64>) {
        let h = observation();
        let y = Vector2::new(z.x, z.y) - h * self.mean;
        let s =
            h * self.covariance * h.transpose() + Matrix2::identity() * params.measurement_noise_r;
        (y, s)
    }

    /// Squared Mahalanobis distance of `z` from this state's position.
    pub fn mahalanobis_sq(&self, z: Point2, params: &KalmanParams) -> Result<f64, KalmanError> {
        let (y, s) = self.innovation(z, params);
        let s_inv = invert_2x2(&s)?;
        Ok((y.transpose() * s_inv * y)[0])
    }
}

fn invert_2x2(s: &Matrix2<f64>) -> Result<Matrix2<f64>, KalmanError> {
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    let scale = s[(0, 0)].abs().max(s[(1, 1)].abs());
    if det.is_nan() || det.abs() <= SINGULAR_RCOND * scale * scale {
        return Err(KalmanError::SingularInnovation { det });
    }
    Ok(Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det)
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Starts a track at the measured position with zero velocity.
pub fn init_state(position: Point2, params: &KalmanParams) -> KalmanState {
    let r = params.measurement_noise_r;
    let v = params.initial_velocity_var;
    KalmanState {
        mean: Vector4::new(position.x, position.y, 0.0, 0.0),
        covariance: Matrix4::from_diagonal(&Vector4::new(r, r, v, v)),
    }
}

pub fn predict(state: &KalmanState, params: &KalmanParams) -> KalmanState {
    let f = params.transition();
    KalmanState {
        mean: f * state.mean,
        covariance: symmetrize(f * state.covariance * f.transpose() + params.process_noise()),
    }
}

/// Measurement update. Returns the posterior together with the squared
/// Mahalanobis distance of the innovation.
pub fn update(
    state: &KalmanState,
    z: Point2,
    params: &KalmanParams,
) -> Result<(KalmanState, f64), KalmanError> {
    let h = observation();
    let (y, s) = state.innovation(z, params);
    let s_inv = invert_2x2(&s)?;
    let gain = state.covariance * h.transpose() * s_inv;
    let mean = state.mean + gain * y;
    // Joseph form keeps the covariance PSD under rounding.
    let i_kh = Matrix4::identity() - gain * h;
    let r = Matrix2::identity() * params.measurement_noise_r;
    let covariance = i_kh * state.covariance * i_kh.transpose() + gain * r * gain.transpose();
    let distance = (y.transpose() * s_inv * y)[0];
    Ok((
        KalmanState {
            mean,
            covariance: symmetrize(covariance),
        },
        distance,
    ))
}
