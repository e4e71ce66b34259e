//! Constant-velocity Kalman filter over `(cx, cy, s, r)` box measurements.
//!
//! State layout is `[cx, cy, s, r, vcx, vcy, vs]`: center, area and aspect
//! ratio, plus velocities of the first three. The aspect ratio is static.
//! Noise magnitudes scale with the current box size (`sqrt(s)` for lengths,
//! `s` for areas) so the filter behaves the same at any image resolution.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{BBox, CenterForm};

pub type StateVector = SVector<f64, 7>;
pub type StateCovariance = SMatrix<f64, 7, 7>;
pub type Measurement = SVector<f64, 4>;

type MeasurementMatrix = SMatrix<f64, 4, 7>;
type MeasurementCovariance = SMatrix<f64, 4, 4>;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    /// Position noise as a fraction of box size.
    pub std_weight_position: f64,
    /// Velocity noise as a fraction of box size per frame.
    pub std_weight_velocity: f64,
    /// Initial velocity std is this many times the velocity noise weight.
    pub init_velocity_factor: f64,
    /// Std of the (unitless) aspect ratio, used for both process and measurement noise.
    pub ratio_std: f64,
    /// Floor applied to the area before it is turned back into a box.
    pub area_floor: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            init_velocity_factor: 160.0,
            ratio_std: 1e-2,
            area_floor: 1e-6,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.std_weight_position,
            self.std_weight_velocity,
            self.init_velocity_factor,
            self.ratio_std,
            self.area_floor,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::config(format!("motion noise parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Gaussian belief over the 7-dimensional box state.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    /// Box view of the mean, with the area clamped to `area_floor`.
    pub fn bbox(&self, area_floor: f64) -> BBox {
        let s = self.mean[2].max(area_floor);
        let r = if self.mean[3] > 0.0 { self.mean[3] } else { area_floor };
        let w = (s * r).sqrt();
        let h = s / w;
        BBox::new(self.mean[0] - w / 2.0, self.mean[1] - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }
}

pub(crate) fn measurement_of(c: &CenterForm) -> Measurement {
    Measurement::new(c.cx, c.cy, c.s, c.r)
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> MeasurementMatrix {
    let mut h = MeasurementMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

/// The filter equations, parameterized by a [`MotionConfig`].
#[derive(Debug, Clone, Default)]
pub struct MotionModel {
    cfg: MotionConfig,
}

impl MotionModel {
    pub fn new(cfg: MotionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &MotionConfig {
        &self.cfg
    }

    fn scales(&self, s: f64) -> (f64, f64) {
        let s = s.max(self.cfg.area_floor);
        (s.sqrt(), s)
    }

    fn position_stds(&self, s: f64) -> [f64; 4] {
        let (len, area) = self.scales(s);
        let w = self.cfg.std_weight_position;
        [w * len, w * len, 2.0 * w * area, self.cfg.ratio_std]
    }

    fn velocity_stds(&self, s: f64) -> [f64; 3] {
        let (len, area) = self.scales(s);
        let w = self.cfg.std_weight_velocity;
        [w * len, w * len, 2.0 * w * area]
    }

    /// New track state: mean at the box's center form, zero velocity.
    pub fn init(&self, b: &BBox) -> Result<KalmanState> {
        let c = b.center_form()?;
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&measurement_of(&c));
        let pos = self.position_stds(c.s);
        let vel = self.velocity_stds(c.s);
        let mut diag = StateVector::zeros();
        for i in 0..4 {
            diag[i] = (2.0 * pos[i]).powi(2);
        }
        for i in 0..3 {
            diag[4 + i] = (self.cfg.init_velocity_factor * vel[i]).powi(2);
        }
        Ok(KalmanState {
            mean,
            covariance: StateCovariance::from_diagonal(&diag),
        })
    }

    /// One constant-velocity step. Returns the new state and its box view.
    pub fn predict(&self, state: &KalmanState) -> (KalmanState, BBox) {
        let f = transition();
        let mean = f * state.mean;
        let pos = self.position_stds(state.mean[2]);
        let vel = self.velocity_stds(state.mean[2]);
        let mut q = StateVector::zeros();
        for i in 0..4 {
            q[i] = pos[i] * pos[i];
        }
        for i in 0..3 {
            q[4 + i] = vel[i] * vel[i];
        }
        let covariance = symmetrize(f * state.covariance * f.transpose() + StateCovariance::from_diagonal(&q));
        let next = KalmanState { mean, covariance };
        let b = next.bbox(self.cfg.area_floor);
        (next, b)
    }

    /// Correct `state` with an observed box.
    pub fn update(&self, state: &KalmanState, obs: &BBox) -> Result<KalmanState> {
        let z = measurement_of(&obs.center_form()?);
        self.update_measurement(state, &z)
    }

    pub(crate) fn update_measurement(&self, state: &KalmanState, z: &Measurement) -> Result<KalmanState> {
        let h = observation();
        let pos = self.position_stds(state.mean[2]);
        let r = MeasurementCovariance::from_diagonal(&Measurement::from_iterator(pos.iter().map(|v| v * v)));
        let p = &state.covariance;
        let innovation_cov = h * p * h.transpose() + r;
        let chol = innovation_cov
            .cholesky()
            .ok_or_else(|| Error::invalid("innovation covariance is not positive-definite"))?;
        // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
        let gain = chol.solve(&(h * p)).transpose();
        let innovation = z - h * state.mean;
        let mean = state.mean + gain * innovation;
        // Joseph form keeps the covariance positive-definite.
        let i_kh = StateCovariance::identity() - gain * h;
        let covariance = symmetrize(i_kh * p * i_kh.transpose() + gain * r * gain.transpose());
        Ok(KalmanState { mean, covariance })
    }

    /// Observation-centric re-update.
    ///
    /// Starting from `checkpoint` (the state right after `last_obs` was
    /// applied), replays `gap` predict/update cycles against observations
    /// interpolated linearly in center form from `last_obs` to `new_obs`.
    /// The last virtual observation is `new_obs` itself.
    pub fn oru_reupdate(
        &self,
        checkpoint: &KalmanState,
        last_obs: &BBox,
        new_obs: &BBox,
        gap: u32,
    ) -> Result<KalmanState> {
        let path = virtual_observations(last_obs, new_obs, gap)?;
        let mut state = checkpoint.clone();
        for z in &path {
            let (predicted, _) = self.predict(&state);
            state = self.update_measurement(&predicted, &measurement_of(z))?;
        }
        Ok(state)
    }
}

/// Evenly spaced center-form observations bridging `last_obs` to `new_obs`.
///
/// Returns `gap` entries; entry `k` (1-based) sits at fraction `k / gap` of
/// the way, and the final entry is exactly `new_obs`.
pub fn virtual_observations(last_obs: &BBox, new_obs: &BBox, gap: u32) -> Result<Vec<CenterForm>> {
    if gap == 0 {
        return Err(Error::invalid("re-update gap must be at least one frame"));
    }
    let a = last_obs.center_form()?;
    let b = new_obs.center_form()?;
    let lerp = |u: f64, v: f64, t: f64| u + (v - u) * t;
    Ok((1..=gap)
        .map(|k| {
            if k == gap {
                b
            } else {
                let t = f64::from(k) / f64::from(gap);
                CenterForm {
                    cx: lerp(a.cx, b.cx, t),
                    cy: lerp(a.cy, b.cy, t),
                    s: lerp(a.s, b.s, t),
                    r: lerp(a.r, b.r, t),
                }
            }
        })
        .collect())
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}
