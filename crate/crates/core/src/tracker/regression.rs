use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{Error, Result};

/// Ridge regression from a feature vector to normalised box offsets
/// `(dx/w, dy/h, ln dw, ln dh)` between a sample box and the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    /// One weight vector per offset.
    pub weights: [Vec<f64>; 4],
    pub lambda: f64,
}

fn offsets(sample: &BBox, target: &BBox) -> [f64; 4] {
    let (sx, sy) = sample.center();
    let (tx, ty) = target.center();
    [
        (tx - sx) / sample.w,
        (ty - sy) / sample.h,
        (target.w / sample.w).ln(),
        (target.h / sample.h).ln(),
    ]
}

impl RegressionModel {
    /// Fits the four offset regressors. `features[i]` describes `boxes[i]`;
    /// callers append a constant 1 when an intercept is wanted.
    pub fn train(features: &[Vec<f64>], boxes: &[BBox], target: &BBox, lambda: f64) -> Result<Self> {
        if features.len() != boxes.len() {
            return Err(Error::Config(format!(
                "{} feature vectors for {} boxes",
                features.len(),
                boxes.len()
            )));
        }
        let n = features.len();
        let d = features.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::Empty("regression features".into()));
        }
        if n < 2 * d {
            return Err(Error::Config(format!(
                "regression needs at least {} samples for {d} features, got {n}",
                2 * d
            )));
        }
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::Config("regression features differ in length".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config("ridge lambda must be >= 0".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
        let y = DMatrix::from_fn(n, 4, |i, k| offsets(&boxes[i], target)[k]);
        let mut a = x.transpose() * &x;
        for i in 0..d {
            a[(i, i)] += lambda;
        }
        let scale = (0..d).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("ridge normal equations are not positive definite".into()))?;
        let l = chol.l_dirty();
        if (0..d).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
            return Err(Error::Singular("ridge normal equations are rank deficient".into()));
        }
        let sol = chol.solve(&(x.transpose() * y));
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite ridge solution".into()));
        }
        let col = |k: usize| sol.column(k).iter().copied().collect::<Vec<f64>>();
        Ok(RegressionModel {
            weights: [col(0), col(1), col(2), col(3)],
            lambda,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn predict(&self, feature: &[f64]) -> Result<[f64; 4]> {
        if feature.len() != self.feature_dim() {
            return Err(Error::Config(format!(
                "regressor expects {} features, got {}",
                self.feature_dim(),
                feature.len()
            )));
        }
        let f = DVector::from_column_slice(feature);
        let mut out = [0.0; 4];
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = DVector::from_column_slice(w).dot(&f);
        }
        Ok(out)
    }

    /// Moves `bbox` by the predicted offsets.
    pub fn apply(&self, bbox: &BBox, feature: &[f64]) -> Result<BBox> {
        let [dx, dy, dw, dh] = self.predict(feature)?;
        let (cx, cy) = bbox.center();
        let refined = BBox::from_center(cx + dx * bbox.w, cy + dy * bbox.h, bbox.w * dw.exp(), bbox.h * dh.exp());
        if !refined.is_valid() {
            return Err(Error::NonFinite(format!("refined box {refined:?}")));
        }
        Ok(refined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boxes_on_target_give_no_correction() {
        let gt = BBox::new(12.0, 9.0, 20.0, 16.0);
        let feats = vec![vec![1.0]; 8];
        let m = RegressionModel::train(&feats, &[gt; 8], &gt, 1e-12).unwrap();
        let out = m.apply(&gt, &[1.0]).unwrap();
        assert!((out.x - gt.x).abs() < 1e-6 && (out.y - gt.y).abs() < 1e-6);
        assert!((out.w - gt.w).abs() < 1e-6 && (out.h - gt.h).abs() < 1e-6);
    }

    #[test]
    fn recovers_a_constant_shift() {
        // Sample boxes sit at varying horizontal offsets from the target and
        // their first feature encodes that offset; the second is noise.
        let gt = BBox::new(40.0, 30.0, 20.0, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shifts: Vec<f64> = (0..60).map(|_| rng.random_range(-5.0..5.0)).collect();
        let boxes: Vec<BBox> = shifts.iter().map(|&s| gt.translated(s, 0.0)).collect();
        let feats: Vec<Vec<f64>> = shifts
            .iter()
            .map(|&s| vec![s / 20.0, rng.random_range(-1.0..1.0), 1.0])
            .collect();
        let m = RegressionModel::train(&feats, &boxes, &gt, 1e-6).unwrap();
        let out = m.apply(&gt.translated(3.0, 0.0), &[3.0 / 20.0, 0.37, 1.0]).unwrap();
        assert!((out.x - gt.x).abs() < 0.1, "{}", out.x);
        assert!((out.y - gt.y).abs() < 0.1);
        assert!((out.w - gt.w).abs() < 0.1);
    }

    #[test]
    fn singular_at_zero_lambda() {
        let gt = BBox::new(0.0, 0.0, 4.0, 4.0);
        // Two identical columns.
        let feats = vec![vec![1.0, 1.0]; 6];
        let err = RegressionModel::train(&feats, &[gt; 6], &gt, 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(RegressionModel::train(&feats, &[gt; 6], &gt, 1.0).is_ok());
    }

    #[test]
    fn too_few_samples() {
        let gt = BBox::new(0.0, 0.0, 4.0, 4.0);
        assert!(RegressionModel::train(&vec![vec![1.0, 0.0]; 3], &[gt; 3], &gt, 1.0).is_err());
    }
}
