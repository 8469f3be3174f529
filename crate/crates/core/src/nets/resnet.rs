use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{seeded_input, DerivativeRequest, Tape, Var};
use crate::error::{Error, Result};

/// Admissible range of the adaptive skip coefficients.
pub const BETA_MIN: f64 = 0.05;
pub const BETA_MAX: f64 = 1.0;
pub const BETA_INIT: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResNetShape {
    pub input_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub output_dim: usize,
}

/// Where one named array lives inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArraySlot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ArraySlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResNetShape {
    pub fn new(input_dim: usize, width: usize, blocks: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || width == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument("network dimensions must be positive".into()));
        }
        Ok(Self { input_dim, width, blocks, output_dim })
    }

    /// Parameter layout, in storage order.
    pub fn slots(&self) -> Vec<ArraySlot> {
        let (d, m, o) = (self.input_dim, self.width, self.output_dim);
        let mut out = Vec::with_capacity(4 + 5 * self.blocks);
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            out.push(ArraySlot { name, rows, cols, offset });
            offset += rows * cols;
        };
        push("input.weight".into(), m, d);
        push("input.bias".into(), m, 1);
        for l in 0..self.blocks {
            push(format!("block{l}.weight1"), m, m);
            push(format!("block{l}.bias1"), m, 1);
            push(format!("block{l}.weight2"), m, m);
            push(format!("block{l}.bias2"), m, 1);
            push(format!("block{l}.beta"), 1, 1);
        }
        push("output.weight".into(), o, m);
        push("output.bias".into(), o, 1);
        out
    }

    pub fn param_count(&self) -> usize {
        self.slots().iter().map(ArraySlot::len).sum()
    }
}

/// Uniform Xavier/Glorot draw on `±√(6/(fan_in + fan_out))`.
pub fn xavier_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

/// Residual MLP whose blocks blend the skip path and a two-layer tanh branch
/// through a learnable coefficient `β ∈ [0.05, 1]`:
///
/// ```text
/// g0 = W0 z + b0
/// gl = β_l g(l-1) + (1 - β_l) tanh(W2 tanh(W1 g(l-1) + b1) + b2)
/// y  = Wout gL + bout
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveResNet {
    shape: ResNetShape,
    params: Vec<f64>,
}

impl AdaptiveResNet {
    pub fn zeros(shape: ResNetShape) -> Self {
        let mut net = Self { shape, params: vec![0.0; shape.param_count()] };
        for off in net.beta_offsets() {
            net.params[off] = BETA_INIT;
        }
        net
    }

    /// Xavier weights, zero biases, `β = 0.9`.
    pub fn xavier<R: Rng + ?Sized>(shape: ResNetShape, rng: &mut R) -> Self {
        let mut net = Self::zeros(shape);
        for slot in shape.slots() {
            if slot.name.contains("weight") {
                let w = xavier_init(slot.rows, slot.cols, rng);
                net.params[slot.offset..slot.offset + slot.len()].copy_from_slice(w.as_slice().unwrap());
            }
        }
        net
    }

    pub fn from_params(shape: ResNetShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(Error::InvalidArgument(format!("expected {} parameters, got {}", shape.param_count(), params.len())));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> ResNetShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn slot(&self, name: &str) -> Option<ArraySlot> {
        self.shape.slots().into_iter().find(|s| s.name == name)
    }

    /// Mutable view of one named array, row-major.
    pub fn array_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let s = self.slot(name)?;
        Some(&mut self.params[s.offset..s.offset + s.len()])
    }

    pub fn beta_offsets(&self) -> Vec<usize> {
        self.shape.slots().into_iter().filter(|s| s.name.ends_with(".beta")).map(|s| s.offset).collect()
    }

    /// Records the forward pass. `input` is `input_dim × cols` and may carry
    /// tangents; parameter leaves are placed at `base + local offset`.
    pub fn record(&self, tape: &mut Tape, base: usize, input: Var) -> Result<Var> {
        if tape.value(input).nrows() != self.shape.input_dim {
            return Err(Error::InvalidArgument(format!(
                "network expects {} input features, got {}",
                self.shape.input_dim,
                tape.value(input).nrows()
            )));
        }
        let slots = self.shape.slots();
        let leaf = |tape: &mut Tape, i: usize| {
            let s: &ArraySlot = &slots[i];
            tape.param(base + s.offset, s.rows, s.cols, &self.params[s.offset..s.offset + s.len()])
        };
        let w0 = leaf(tape, 0);
        let b0 = leaf(tape, 1);
        let mut g = tape.affine(w0, input, Some(b0));
        for l in 0..self.shape.blocks {
            let i = 2 + 5 * l;
            let w1 = leaf(tape, i);
            let b1 = leaf(tape, i + 1);
            let w2 = leaf(tape, i + 2);
            let b2 = leaf(tape, i + 3);
            let beta_raw = leaf(tape, i + 4);
            let beta = tape.clamp(beta_raw, BETA_MIN, BETA_MAX)?;
            let z1 = tape.affine(w1, g, Some(b1));
            let a1 = tape.tanh(z1);
            let z2 = tape.affine(w2, a1, Some(b2));
            let h = tape.tanh(z2);
            g = tape.blend(beta, g, h);
        }
        let n = slots.len();
        let wo = leaf(tape, n - 2);
        let bo = leaf(tape, n - 1);
        Ok(tape.affine(wo, g, Some(bo)))
    }

    /// Plain evaluation at one feature vector.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (out, _) = self.forward_with_tangents(z, &DerivativeRequest::new(vec![], z.len())?)?;
        Ok(out)
    }

    /// Outputs and `partials[k][m] = ∂ output_m / ∂ z_{req[k]}` by forward
    /// tangent propagation.
    pub fn forward_with_tangents(&self, z: &[f64], req: &DerivativeRequest) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if z.len() != self.shape.input_dim {
            return Err(Error::InvalidRequest(format!(
                "input arity {} does not match network input dimension {}",
                z.len(),
                self.shape.input_dim
            )));
        }
        if let Some(&bad) = req.indices().iter().find(|&&k| k >= z.len()) {
            return Err(Error::InvalidRequest(format!("derivative index {bad} out of range")));
        }
        let col = Array2::from_shape_vec((z.len(), 1), z.to_vec()).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(seeded_input(col.view(), req), req.len());
        let y = self.record(&mut tape, 0, x)?;
        let v = tape.value(y);
        let outputs = v.column(0).to_vec();
        let partials = (1..=req.len()).map(|b| v.column(b).to_vec()).collect();
        Ok((outputs, partials))
    }

    /// Batched primal evaluation, columns are samples.
    pub fn forward_batch(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(z.clone());
        let y = self.record(&mut tape, 0, x)?;
        Ok(tape.value(y).clone())
    }

    /// Re-clamps every `β` into `[0.05, 1]`.
    pub fn clamp_betas(&mut self) {
        for off in self.beta_offsets() {
            self.params[off] = self.params[off].clamp(BETA_MIN, BETA_MAX);
        }
    }
}

/// Named-array summary used by checkpoints.
pub fn describe(net: &AdaptiveResNet, prefix: &str) -> Vec<(String, usize, usize, Vec<f64>)> {
    net.shape
        .slots()
        .into_iter()
        .map(|s| (format!("{prefix}.{}", s.name), s.rows, s.cols, net.params[s.offset..s.offset + s.len()].to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_only_network() {
        let shape = ResNetShape::new(1, 1, 0, 1).unwrap();
        let net = AdaptiveResNet::from_params(shape, vec![2.0, 1.0, 1.0, 0.0]).unwrap();
        let req = DerivativeRequest::new(vec![0], 1).unwrap();
        let (y, d) = net.forward_with_tangents(&[0.75], &req).unwrap();
        assert_eq!(y, vec![2.5]);
        assert_eq!(d, vec![vec![2.0]]);
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let shape = ResNetShape::new(2, 3, 1, 1).unwrap();
        let net = AdaptiveResNet::zeros(shape);
        let req = DerivativeRequest::new(vec![0], 2).unwrap();
        assert!(matches!(net.forward_with_tangents(&[0.1], &req), Err(Error::InvalidRequest(_))));
        assert!(net.forward(&[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn unit_beta_skips_the_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = ResNetShape::new(3, 5, 4, 1).unwrap();
        let mut net = AdaptiveResNet::xavier(shape, &mut rng);
        for off in net.beta_offsets() {
            net.params[off] = 1.0;
        }
        for name in ["input.bias", "output.bias"] {
            for v in net.array_mut(name).unwrap() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let z = [0.3, -0.2, 0.9];
        let p = net.params();
        let w0 = net.slot("input.weight").unwrap();
        let b0 = net.slot("input.bias").unwrap();
        let wo = net.slot("output.weight").unwrap();
        let bo = net.slot("output.bias").unwrap();
        let mut expected = p[bo.offset];
        for i in 0..5 {
            let mut g = p[b0.offset + i];
            for (k, zk) in z.iter().enumerate() {
                g += p[w0.offset + i * 3 + k] * zk;
            }
            expected += p[wo.offset + i] * g;
        }
        let y = net.forward(&z).unwrap()[0];
        assert!((y - expected).abs() <= 1e-12);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let shape = ResNetShape::new(4, 6, 3, 2).unwrap();
        let mut net = AdaptiveResNet::zeros(shape);
        for (i, off) in net.beta_offsets().into_iter().enumerate() {
            net.params[off] = 0.1 + 0.3 * i as f64;
        }
        assert_eq!(net.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    // One block with 2×2 weights, evaluated by hand.
    #[test]
    fn single_block_hand_computation() {
        let shape = ResNetShape::new(2, 2, 1, 1).unwrap();
        let mut net = AdaptiveResNet::zeros(shape);
        net.array_mut("input.weight").unwrap().copy_from_slice(&[1.0, 0.5, -0.3, 0.8]);
        net.array_mut("input.bias").unwrap().copy_from_slice(&[0.1, -0.2]);
        net.array_mut("block0.weight1").unwrap().copy_from_slice(&[0.7, -0.4, 0.2, 0.9]);
        net.array_mut("block0.bias1").unwrap().copy_from_slice(&[0.05, 0.0]);
        net.array_mut("block0.weight2").unwrap().copy_from_slice(&[-0.6, 0.3, 1.1, 0.25]);
        net.array_mut("block0.bias2").unwrap().copy_from_slice(&[0.0, -0.1]);
        net.array_mut("block0.beta").unwrap()[0] = 0.9;
        net.array_mut("output.weight").unwrap().copy_from_slice(&[1.5, -2.0]);
        net.array_mut("output.bias").unwrap()[0] = 0.3;

        let z = [0.4, -0.7];
        let g0: [f64; 2] = [1.0 * 0.4 + 0.5 * -0.7 + 0.1, -0.3 * 0.4 + 0.8 * -0.7 - 0.2];
        let a1 = [(0.7 * g0[0] - 0.4 * g0[1] + 0.05).tanh(), (0.2 * g0[0] + 0.9 * g0[1]).tanh()];
        let h = [(-0.6 * a1[0] + 0.3 * a1[1]).tanh(), (1.1 * a1[0] + 0.25 * a1[1] - 0.1).tanh()];
        let g1 = [0.9 * g0[0] + 0.1 * h[0], 0.9 * g0[1] + 0.1 * h[1]];
        let expected = 1.5 * g1[0] - 2.0 * g1[1] + 0.3;
        let y = net.forward(&z).unwrap()[0];
        assert!((y - expected).abs() <= 1e-12, "{y} vs {expected}");
    }

    #[test]
    fn out_of_range_beta_is_read_clamped() {
        let shape = ResNetShape::new(1, 2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = AdaptiveResNet::xavier(shape, &mut rng);
        net.array_mut("block0.beta").unwrap()[0] = 1.7;
        let y_hi = net.forward(&[0.3]).unwrap()[0];
        net.array_mut("block0.beta").unwrap()[0] = 1.0;
        assert_eq!(y_hi, net.forward(&[0.3]).unwrap()[0]);
    }

    #[test]
    fn two_layer_tangent_matches_central_difference() {
        let shape = ResNetShape::new(2, 4, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = AdaptiveResNet::xavier(shape, &mut rng);
        for name in ["input.bias", "block0.bias1", "block1.bias2", "output.bias"] {
            for v in net.array_mut(name).unwrap() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let z = [0.37, -0.61];
        let req = DerivativeRequest::new(vec![0, 1], 2).unwrap();
        let (_, d) = net.forward_with_tangents(&z, &req).unwrap();
        for k in 0..2 {
            let h = 1e-5;
            let mut zp = z;
            zp[k] += h;
            let mut zm = z;
            zm[k] -= h;
            let fd = (net.forward(&zp).unwrap()[0] - net.forward(&zm).unwrap()[0]) / (2.0 * h);
            assert!((d[k][0] - fd).abs() <= 1e-6 * fd.abs(), "{} vs {}", d[k][0], fd);
        }
    }

    #[test]
    fn xavier_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let w = xavier_init(1, 1, &mut rng);
            assert!(w[[0, 0]].abs() <= 3f64.sqrt());
        }
        let a = xavier_init(7, 9, &mut ChaCha8Rng::seed_from_u64(42));
        let b = xavier_init(7, 9, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        let shape = ResNetShape::new(3, 8, 2, 1).unwrap();
        let net = AdaptiveResNet::xavier(shape, &mut ChaCha8Rng::seed_from_u64(1));
        for s in shape.slots() {
            let vals = &net.params()[s.offset..s.offset + s.len()];
            if s.name.contains("bias") {
                assert!(vals.iter().all(|&v| v == 0.0));
            }
            if s.name.ends_with("beta") {
                assert_eq!(vals, &[0.9]);
            }
        }
    }

    #[test]
    fn xavier_variance_matches_uniform_law() {
        let w = xavier_init(128, 128, &mut ChaCha8Rng::seed_from_u64(9));
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / 256.0;
        assert!((var - target).abs() <= 0.2 * target, "{var}");
    }
}
