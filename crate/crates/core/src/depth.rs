//! Dense depth maps and the validity interval used to gate them.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("value buffer has {actual} entries, expected {expected} for {width}x{height}")]
    SizeMismatch {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("depth value at index {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("validity range requires 0 < epsilon < d_max, got [{epsilon}, {d_max}]")]
    InvalidRange { epsilon: f64, d_max: f64 },
    #[error("depth maps have mismatched dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

/// Closed interval `[epsilon, d_max]` of depths considered observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthValidityRange<S: Real> {
    epsilon: S,
    d_max: S,
}

impl<S: Real> DepthValidityRange<S> {
    pub fn new(epsilon: S, d_max: S) -> Result<Self, DepthError> {
        if !(epsilon > S::zero() && epsilon < d_max) {
            return Err(DepthError::InvalidRange {
                epsilon: epsilon.as_f64(),
                d_max: d_max.as_f64(),
            });
        }
        Ok(Self { epsilon, d_max })
    }

    #[inline]
    pub fn epsilon(&self) -> S {
        self.epsilon
    }

    #[inline]
    pub fn d_max(&self) -> S {
        self.d_max
    }

    #[inline]
    pub fn contains(&self, depth: S) -> bool {
        depth >= self.epsilon && depth <= self.d_max
    }
}

/// Row-major grid of z-depths in meters. Non-positive entries mark invalid
/// pixels; all stored values must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<S: Real> {
    width: u32,
    height: u32,
    values: Vec<S>,
}

impl<S: Real> DepthMap<S> {
    pub fn new(width: u32, height: u32, values: Vec<S>) -> Result<Self, DepthError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(DepthError::SizeMismatch {
                width,
                height,
                expected,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DepthError::NonFiniteValue { index });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// All-invalid map (every pixel 0).
    pub fn invalid(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![S::zero(); width as usize * height as usize],
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> S {
        self.values[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: S) {
        self.values[y as usize * self.width as usize + x as usize] = value;
    }

    /// Whether the stored value encodes a valid measurement (> 0).
    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.get(x, y) > S::zero()
    }

    /// Nearest-neighbor sample at a continuous pixel coordinate; `None` when
    /// the rounded index leaves the grid or the stored value is invalid.
    pub fn sample_nearest(&self, u: S, v: S) -> Option<S> {
        let x = u.round();
        let y = v.round();
        if x < S::zero() || y < S::zero() {
            return None;
        }
        let xi = x.as_f64() as u32;
        let yi = y.as_f64() as u32;
        if xi >= self.width || yi >= self.height {
            return None;
        }
        let d = self.get(xi, yi);
        (d > S::zero()).then_some(d)
    }

    /// Applies `f` to every valid pixel, leaving invalid pixels untouched.
    pub fn map_valid(&self, mut f: impl FnMut(S) -> S) -> DepthMap<S> {
        let values = self
            .values
            .iter()
            .map(|&d| if d > S::zero() { f(d) } else { d })
            .collect();
        DepthMap {
            width: self.width,
            height: self.height,
            values,
        }
    }

    pub fn same_dimensions(&self, other: &DepthMap<S>) -> Result<(), DepthError> {
        if self.width != other.width || self.height != other.height {
            return Err(DepthError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Iterates `(x, y, depth)` over valid pixels.
    pub fn iter_valid(&self) -> impl Iterator<Item = (u32, u32, S)> + '_ {
        let width = self.width;
        self.values.iter().enumerate().filter_map(move |(i, &d)| {
            (d > S::zero()).then(|| {
                let x = (i % width as usize) as u32;
                let y = (i / width as usize) as u32;
                (x, y, d)
            })
        })
    }
}
