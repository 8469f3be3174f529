use std::f64::consts::TAU;

use ndarray::Array2;

/// `{sin(2πkx), cos(2πkx)}_{k=1..P}`, interleaved per harmonic.
pub fn fourier_embed(x: f64, harmonics: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * harmonics);
    for k in 1..=harmonics {
        let a = TAU * k as f64 * x;
        out.push(a.sin());
        out.push(a.cos());
    }
    out
}

/// Derivative of [`fourier_embed`] with respect to `x`.
pub fn fourier_embed_dx(x: f64, harmonics: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * harmonics);
    for k in 1..=harmonics {
        let w = TAU * k as f64;
        let a = w * x;
        out.push(w * a.cos());
        out.push(-w * a.sin());
    }
    out
}

/// How `(t, x[, y], velocity)` becomes a network feature vector.
///
/// Spatial coordinates go through the Fourier map (after reduction to
/// `[0, 1)`, so shifting by a whole period leaves the features unchanged);
/// time is multiplied by `time_scale`; velocity coordinates pass through raw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputEncoding {
    /// `Some(P)` for the periodic embedding, `None` for raw coordinates.
    pub harmonics: Option<usize>,
    pub time_scale: f64,
}

impl InputEncoding {
    pub fn periodic(harmonics: usize) -> Self {
        Self { harmonics: Some(harmonics), time_scale: 1.0 }
    }

    pub fn raw() -> Self {
        Self { harmonics: None, time_scale: 1.0 }
    }

    pub fn with_time_scale(mut self, scale: f64) -> Self {
        self.time_scale = scale;
        self
    }

    pub fn is_periodic(&self) -> bool {
        self.harmonics.is_some()
    }

    fn spatial_width(&self) -> usize {
        self.harmonics.map_or(1, |p| 2 * p)
    }

    pub fn feature_dim(&self, spatial_dims: usize, velocity_dims: usize) -> usize {
        1 + spatial_dims * self.spatial_width() + velocity_dims
    }

    fn write_spatial(&self, x: f64, col: &mut Vec<f64>, dcol: &mut Vec<f64>) {
        match self.harmonics {
            Some(p) => {
                let xr = x.rem_euclid(1.0);
                col.extend(fourier_embed(xr, p));
                dcol.extend(fourier_embed_dx(xr, p));
            }
            None => {
                col.push(x);
                dcol.push(1.0);
            }
        }
    }

    /// Builds the input matrix for a batch. Each sample is
    /// `(t, spatial, velocity)`. With `tangents`, the result has
    /// `1 + spatial_dims` tangent blocks ordered `(∂t, ∂x[, ∂y])`.
    pub fn encode(&self, samples: &[(f64, &[f64], &[f64])], spatial_dims: usize, velocity_dims: usize, tangents: bool) -> Array2<f64> {
        let rows = self.feature_dim(spatial_dims, velocity_dims);
        let n = samples.len();
        let blocks = if tangents { 2 + spatial_dims } else { 1 };
        let mut m = Array2::zeros((rows, n * blocks));
        let sw = self.spatial_width();
        let mut col = Vec::with_capacity(rows);
        let mut dcol = Vec::with_capacity(rows);
        for (c, (t, xs, vel)) in samples.iter().enumerate() {
            debug_assert_eq!(xs.len(), spatial_dims);
            debug_assert_eq!(vel.len(), velocity_dims);
            col.clear();
            dcol.clear();
            col.push(t * self.time_scale);
            for &x in xs.iter() {
                self.write_spatial(x, &mut col, &mut dcol);
            }
            col.extend_from_slice(vel);
            for (r, v) in col.iter().enumerate() {
                m[[r, c]] = *v;
            }
            if tangents {
                m[[0, n + c]] = self.time_scale;
                for d in 0..spatial_dims {
                    let blk = 2 + d;
                    for s in 0..sw {
                        m[[1 + d * sw + s, blk * n + c]] = dcol[d * sw + s];
                    }
                }
            }
        }
        m
    }
}
