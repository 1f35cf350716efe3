//! Tanh MLPs with explicit forward caches and reverse-mode gradients.
//!
//! Rows of a batch are samples. Weights are stored `fan_in × fan_out`, so a
//! layer computes `Z = X·W + b`.

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const INV_FACT: [f64; 18] = {
    let mut c = [1.0; 18];
    let mut k = 1;
    while k < 18 {
        c[k] = c[k - 1] / k as f64;
        k += 1;
    }
    c
};

/// Branch-free tanh, within a few ulp of libm.
///
/// Small arguments go through a Taylor series of `expm1(2|x|)`, the rest
/// through a range-reduced `exp(-2|x|)`. Both are evaluated and selected so
/// the slice loop vectorises; no FMA is used, so every code path produces
/// the same bits.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let a = x.abs();
    let a = if a > 20.0 { 20.0 } else { a };
    let y = 2.0 * a;

    let mut s = INV_FACT[17];
    for c in INV_FACT[1..17].iter().rev() {
        s = s * y + c;
    }
    let em1 = y * s;
    let small = em1 / (em1 + 2.0);

    let kf = (-y * std::f64::consts::LOG2_E + MAGIC) - MAGIC;
    let r = -y - kf * LN2_HI - kf * LN2_LO;
    let mut p = INV_FACT[12];
    for c in INV_FACT[..12].iter().rev() {
        p = p * r + c;
    }
    let k = (kf + MAGIC).to_bits().wrapping_sub(MAGIC.to_bits());
    let e = p * f64::from_bits(k.wrapping_add(1023) << 52);
    let large = (1.0 - e) / (1.0 + e);

    let t = if a < 0.3 { small } else { large };
    t.copysign(x)
}

#[inline(always)]
fn tanh_slice_body(xs: &mut [f64]) {
    for v in xs.iter_mut() {
        *v = tanh(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tanh_slice_avx2(xs: &mut [f64]) {
    tanh_slice_body(xs)
}

pub fn tanh_slice(xs: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { tanh_slice_avx2(xs) };
    }
    tanh_slice_body(xs)
}

pub fn tanh_inplace(a: &mut Array2<f64>) {
    match a.as_slice_mut() {
        Some(s) => tanh_slice(s),
        None => a.mapv_inplace(tanh),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// Affine layers with tanh between them and an identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Post-activation values of every layer; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache {
    activations: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    /// All-zero network with the given layer widths (input first, output last).
    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Orthogonal weights scaled by `hidden_gain` (hidden layers) and
    /// `output_gain` (last layer); zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(widths: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(widths);
        let last = mlp.layers.len() - 1;
        for (l, layer) in mlp.layers.iter_mut().enumerate() {
            let gain = if l == last { output_gain } else { hidden_gain };
            layer.weight = orthogonal_matrix(layer.fan_in(), layer.fan_out(), rng) * gain;
        }
        mlp
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Dense::fan_out));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            a = affine(&a.view(), layer);
            if l < last {
                tanh_inplace(&mut a);
            }
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<MlpCache> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = affine(&activations[l].view(), layer);
            if l < last {
                tanh_inplace(&mut z);
            }
            activations.push(z);
        }
        Ok(MlpCache { activations })
    }

    /// Single-sample convenience wrapper.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Accumulates parameter gradients of a loss with output gradient `d_out`
    /// into `grad` and returns the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, d_out: Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            if l < last {
                let a = &cache.activations[l + 1];
                delta.zip_mut_with(a, |d, &y| *d *= 1.0 - y * y);
            }
            let input = &cache.activations[l];
            general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut grad.layers[l].weight);
            grad.layers[l].bias += &delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[l].weight.t());
        }
        delta
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.widths())
    }
}

fn affine(x: &ArrayView2<f64>, layer: &Dense) -> Array2<f64> {
    if x.nrows() > SMALL_BATCH {
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        return z;
    }
    // Row-by-row axpy; the packed GEMM path costs more than the work here.
    let n_out = layer.fan_out();
    let w = layer.weight.as_standard_layout();
    let w = w.as_slice().expect("standard layout");
    let bias = layer.bias.as_slice().expect("contiguous bias");
    let mut z = Array2::zeros((x.nrows(), n_out));
    for (xr, zs) in x
        .outer_iter()
        .zip(z.as_slice_mut().expect("fresh array").chunks_exact_mut(n_out))
    {
        zs.copy_from_slice(bias);
        for (&xi, wr) in xr.iter().zip(w.chunks_exact(n_out)) {
            for (o, &wv) in zs.iter_mut().zip(wr) {
                *o += xi * wv;
            }
        }
    }
    z
}

const SMALL_BATCH: usize = 16;

/// Random `rows × cols` matrix with orthonormal rows or columns (whichever is
/// the smaller set), via QR of a Gaussian matrix with sign correction.
pub fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let (tall, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| if rows >= cols { q[(i, j)] } else { q[(j, i)] })
}

/// Flat views over trainable tensors in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum()
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Mean over `group` consecutive rows, summing each column in sorted order so
/// the result is bitwise independent of the order of rows within a group.
pub fn sorted_group_mean(rows: &Array2<f64>, group: usize) -> Array2<f64> {
    assert!(group > 0 && rows.nrows() % group == 0);
    let batch = rows.nrows() / group;
    let cols = rows.ncols();
    let mut out = Array2::zeros((batch, cols));
    let mut scratch = vec![0.0; group];
    for b in 0..batch {
        for c in 0..cols {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = rows[(b * group + j, c)];
            }
            scratch.sort_by(f64::total_cmp);
            out[(b, c)] = scratch.iter().sum::<f64>() / group as f64;
        }
    }
    out
}
