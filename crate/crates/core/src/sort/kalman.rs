//! Constant-velocity Kalman filter over the box state
//! `[u, v, s, r, u', v', s']`: centre, area, aspect ratio and the rates of
//! the first three. The aspect ratio is modelled as constant.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub type StateVector = SVector<f64, 7>;
pub type StateMatrix = SMatrix<f64, 7, 7>;
pub type Measurement = SVector<f64, 4>;
type ObservationMatrix = SMatrix<f64, 4, 7>;

/// Floor applied to area and aspect ratio after an update.
const MIN_POSITIVE: f64 = 1e-6;

/// Diagonal noise model of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub measurement: [f64; 4],
    pub initial_covariance: [f64; 7],
    pub process: [f64; 7],
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            measurement: [1.0, 1.0, 10.0, 0.01],
            initial_covariance: [10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4],
            process: [1.0, 1.0, 1.0, 0.01, 0.01, 0.01, 1e-4],
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .measurement
            .iter()
            .chain(&self.initial_covariance)
            .chain(&self.process);
        if all.clone().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param("noise", "all noise variances must be positive"));
        }
        Ok(())
    }
}

/// `(u, v, s, r)` of a box: centre, area `w*h` and aspect ratio `w/h`, with
/// `w = x_max - x_min + 1` and `h = y_max - y_min + 1`.
pub fn bbox_to_measurement(b: &BBox) -> Measurement {
    let c = b.center();
    let (w, h) = (b.width(), b.height());
    Measurement::new(c.x, c.y, w * h, w / h)
}

/// Inverse of [`bbox_to_measurement`]. Boxes narrower than one pixel on an
/// axis collapse to zero extent on that axis.
pub fn measurement_to_bbox(u: f64, v: f64, s: f64, r: f64) -> Result<BBox> {
    if !(s > 0.0 && r > 0.0) {
        return Err(Error::param("measurement", format!("s={s}, r={r} must be positive")));
    }
    let w = (s * r).sqrt();
    let h = s / w;
    let hw = (w - 1.0).max(0.0) / 2.0;
    let hh = (h - 1.0).max(0.0) / 2.0;
    BBox::new(u - hw, v - hh, u + hw, v + hh)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

fn transition() -> StateMatrix {
    let mut f = StateMatrix::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> ObservationMatrix {
    ObservationMatrix::from_fn(|i, j| if i == j { 1.0 } else { 0.0 })
}

impl TrackState {
    /// New state at `b` with zero velocity.
    pub fn from_bbox(b: &BBox, noise: &NoiseModel) -> Self {
        let z = bbox_to_measurement(b);
        let mean = StateVector::from_column_slice(&[z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0]);
        TrackState {
            mean,
            covariance: StateMatrix::from_diagonal(&StateVector::from(noise.initial_covariance)),
        }
    }

    pub fn u(&self) -> f64 {
        self.mean[0]
    }

    pub fn v(&self) -> f64 {
        self.mean[1]
    }

    pub fn s(&self) -> f64 {
        self.mean[2]
    }

    pub fn r(&self) -> f64 {
        self.mean[3]
    }

    pub fn bbox(&self) -> BBox {
        measurement_to_bbox(self.u(), self.v(), self.s(), self.r())
            .expect("filter keeps area and aspect positive")
    }

    pub fn predict(&mut self, noise: &NoiseModel) {
        if self.mean[2] + self.mean[6] <= 0.0 {
            self.mean[6] = 0.0;
        }
        let f = transition();
        self.mean = f * self.mean;
        let q = StateMatrix::from_diagonal(&StateVector::from(noise.process));
        self.covariance = f * self.covariance * f.transpose() + q;
        self.symmetrize();
    }

    /// Joseph-form measurement update.
    pub fn update(&mut self, z: &Measurement, noise: &NoiseModel) {
        let h = observation();
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&Measurement::from(noise.measurement));
        let innovation = z - h * self.mean;
        let s = h * self.covariance * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .expect("innovation covariance is positive definite");
        let gain = self.covariance * h.transpose() * s_inv;
        self.mean += gain * innovation;
        let i_kh = StateMatrix::identity() - gain * h;
        self.covariance = i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose();
        self.symmetrize();
        self.mean[2] = self.mean[2].max(MIN_POSITIVE);
        self.mean[3] = self.mean[3].max(MIN_POSITIVE);
    }

    fn symmetrize(&mut self) {
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn measurement_examples() {
        assert_eq!(
            bbox_to_measurement(&bx(0.0, 0.0, 9.0, 9.0)),
            Measurement::new(4.5, 4.5, 100.0, 1.0)
        );
        assert_eq!(
            bbox_to_measurement(&bx(0.0, 0.0, 0.0, 0.0)),
            Measurement::new(0.0, 0.0, 1.0, 1.0)
        );
        assert_eq!(
            bbox_to_measurement(&bx(2.0, 4.0, 11.0, 8.0)),
            Measurement::new(6.5, 6.0, 50.0, 2.0)
        );
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(measurement_to_bbox(4.5, 4.5, 100.0, 1.0).unwrap(), bx(0.0, 0.0, 9.0, 9.0));
        assert_eq!(measurement_to_bbox(0.0, 0.0, 1.0, 1.0).unwrap(), bx(0.0, 0.0, 0.0, 0.0));
        assert!(measurement_to_bbox(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(measurement_to_bbox(0.0, 0.0, 4.0, -1.0).is_err());
        let tiny = measurement_to_bbox(3.0, 3.0, 0.25, 1.0).unwrap();
        assert_eq!(tiny, bx(3.0, 3.0, 3.0, 3.0));
    }

    #[test]
    fn predict_with_zero_velocity_keeps_box() {
        let noise = NoiseModel::default();
        let b = bx(3.0, 4.0, 8.0, 6.0);
        let mut st = TrackState::from_bbox(&b, &noise);
        st.predict(&noise);
        let p = st.bbox();
        for (a, e) in [(p.x_min, b.x_min), (p.y_min, b.y_min), (p.x_max, b.x_max), (p.y_max, b.y_max)] {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn predict_follows_velocity() {
        let noise = NoiseModel::default();
        let mut st = TrackState::from_bbox(&bx(0.0, 0.0, 3.0, 3.0), &noise);
        st.mean[0] = 10.0;
        st.mean[4] = 2.0;
        for _ in 0..3 {
            st.predict(&noise);
        }
        assert!((st.u() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn predict_never_drives_area_negative() {
        let noise = NoiseModel::default();
        let mut st = TrackState::from_bbox(&bx(0.0, 0.0, 1.0, 1.0), &noise);
        st.mean[6] = -10.0;
        st.predict(&noise);
        assert_eq!(st.s(), 4.0);
        assert_eq!(st.mean[6], 0.0);
    }

    #[test]
    fn predict_grows_uncertainty() {
        let noise = NoiseModel::default();
        let mut st = TrackState::from_bbox(&bx(0.0, 0.0, 5.0, 5.0), &noise);
        let mut prev = st.covariance.trace();
        for _ in 0..5 {
            st.predict(&noise);
            let t = st.covariance.trace();
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn zero_innovation_update_keeps_mean() {
        let noise = NoiseModel::default();
        let mut st = TrackState::from_bbox(&bx(2.0, 2.0, 7.0, 9.0), &noise);
        st.mean[4] = 0.7;
        st.predict(&noise);
        let before = st.mean;
        let z = Measurement::new(before[0], before[1], before[2], before[3]);
        let prior_trace = st.covariance.trace();
        st.update(&z, &noise);
        assert!((st.mean - before).abs().max() < 1e-9);
        assert!(st.covariance.trace() <= prior_trace);
    }

    #[test]
    fn stationary_measurements_converge() {
        // Update-only with a diagonal prior decouples into independent scalar
        // filters: p' = p*r/(p+r), x' = x + p/(p+r)*(z-x).
        let noise = NoiseModel::default();
        let start = bx(10.0, 10.0, 14.0, 14.0);
        let mut st = TrackState::from_bbox(&start, &noise);
        let target = bbox_to_measurement(&bx(10.2, 9.8, 14.2, 13.8));
        let mut x: Vec<f64> = (0..4).map(|i| st.mean[i]).collect();
        let mut p: Vec<f64> = noise.initial_covariance[..4].to_vec();
        for _ in 0..20 {
            st.update(&target, &noise);
            for i in 0..4 {
                let r = noise.measurement[i];
                x[i] += p[i] / (p[i] + r) * (target[i] - x[i]);
                p[i] = p[i] * r / (p[i] + r);
            }
        }
        for i in 0..4 {
            assert!((st.mean[i] - x[i]).abs() < 1e-9, "component {i}");
            assert!((st.mean[i] - target[i]).abs() < 1e-3, "component {i}: {}", st.mean[i]);
        }
    }

    proptest! {
        #[test]
        fn round_trip(u in -500.0f64..500.0, v in -500.0f64..500.0, s in 1.0f64..5000.0, lr in -1.5f64..1.5) {
            let r = lr.exp();
            prop_assume!(s * r >= 1.0 && s / r >= 1.0);
            let b = measurement_to_bbox(u, v, s, r).unwrap();
            let z = bbox_to_measurement(&b);
            prop_assert!((z[0] - u).abs() < 1e-9);
            prop_assert!((z[1] - v).abs() < 1e-9);
            prop_assert!((z[2] - s).abs() < 1e-9);
            prop_assert!((z[3] - r).abs() < 1e-9);
        }
    }
}
