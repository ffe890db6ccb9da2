use crate::error::{Error, Result};

/// `T` frames of `dim`-dimensional acoustic features, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(frames: Vec<Vec<f64>>) -> Result<Self> {
        let dim = frames
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::usage("feature sequence needs at least one frame"))?;
        if dim == 0 {
            return Err(Error::usage("feature frames must have positive dimension"));
        }
        let mut data = Vec::with_capacity(frames.len() * dim);
        for row in &frames {
            if row.len() != dim {
                return Err(Error::dim("feature frame", dim, row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite("feature frame"));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureSequence { dim, data })
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::usage("flat feature buffer is not a whole number of frames"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("feature frame"));
        }
        Ok(FeatureSequence { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// The first `t` frames (`1 ≤ t ≤ T`).
    pub fn prefix(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.frames() {
            return Err(Error::usage(format!(
                "prefix length {t} outside 1..={}",
                self.frames()
            )));
        }
        Ok(FeatureSequence {
            dim: self.dim,
            data: self.data[..t * self.dim].to_vec(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(FeatureSequence::new(vec![]).is_err());
        assert!(FeatureSequence::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(FeatureSequence::new(vec![vec![f64::NAN]]).is_err());
        let x = FeatureSequence::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(x.frames(), 2);
        assert_eq!(x.frame(1), &[3.0, 4.0]);
        assert_eq!(x.prefix(1).unwrap().to_rows(), vec![vec![1.0, 2.0]]);
        assert!(x.prefix(3).is_err());
    }
}
