//! Dense time-major matrices and the numeric kernels the network is built from.
//!
//! Every activation in the network is a [`TimeMatrix`]: `T` time steps by `C`
//! channels, stored row-major so that one time step is one contiguous row.
//! Convolution weights live in a [`ConvKernel`] laid out `[out][in][tap]`.
//!
//! The functions here are pure forward/backward kernels. Recording them for
//! reverse-mode differentiation is the job of [`crate::tape`].

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeMatrix {
    steps: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TimeMatrix {
    pub fn new(steps: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if steps.checked_mul(channels) != Some(data.len()) {
            return Err(Error::shape(
                "TimeMatrix::new",
                format!("{steps}x{channels} needs {} values, got {}", steps * channels, data.len()),
            ));
        }
        Ok(Self {
            steps,
            channels,
            data,
        })
    }

    pub fn zeros(steps: usize, channels: usize) -> Self {
        Self::filled(steps, channels, 0.0)
    }

    pub fn filled(steps: usize, channels: usize, value: f64) -> Self {
        Self {
            steps,
            channels,
            data: vec![value; steps * channels],
        }
    }

    /// Builds a matrix from per-step rows; all rows must share one width.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let channels = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * channels);
        for (t, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != channels {
                return Err(Error::shape(
                    "TimeMatrix::from_rows",
                    format!("row {t} has {} channels, expected {channels}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            steps: rows.len(),
            channels,
            data,
        })
    }

    /// A single-channel series.
    pub fn column(values: &[f64]) -> Self {
        Self {
            steps: values.len(),
            channels: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.steps, self.channels)
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, value: f64) {
        self.data[t * self.channels + c] = value;
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Values of channel `c` across time.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.steps).map(|t| self.get(t, c)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            steps: self.steps,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{} vs {}x{}",
                    self.steps, self.channels, other.steps, other.channels
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// 1D temporal convolution weights, `[out][in][tap]`, plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    out_channels: usize,
    in_channels: usize,
    kernel_size: usize,
    dilation: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvKernel {
    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        dilation: usize,
    ) -> Result<Self> {
        Self::new(
            out_channels,
            in_channels,
            kernel_size,
            dilation,
            vec![0.0; out_channels * in_channels * kernel_size],
            vec![0.0; out_channels],
        )
    }

    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        dilation: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "kernel size must be odd, got {kernel_size}"
            )));
        }
        if dilation == 0 {
            return Err(Error::InvalidArgument("dilation must be >= 1".into()));
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::InvalidArgument("kernel channels must be >= 1".into()));
        }
        if weights.len() != out_channels * in_channels * kernel_size || bias.len() != out_channels {
            return Err(Error::shape(
                "ConvKernel::new",
                format!(
                    "{out_channels}x{in_channels}x{kernel_size} kernel with {} weights and {} biases",
                    weights.len(),
                    bias.len()
                ),
            ));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel_size,
            dilation,
            weights,
            bias,
        })
    }

    /// Pointwise (kernel size 1) projection from a row-major `[out][in]` matrix.
    pub fn pointwise(out_channels: usize, in_channels: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        Self::new(out_channels, in_channels, 1, 1, weights, bias)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// Zero padding on each side that keeps the output length equal to the input length.
    pub fn same_padding(&self) -> usize {
        self.dilation * (self.kernel_size - 1) / 2
    }

    /// Number of input steps that influence one output step.
    pub fn receptive_field(&self) -> usize {
        self.dilation * (self.kernel_size - 1) + 1
    }

    #[inline]
    pub fn weight(&self, o: usize, c: usize, j: usize) -> f64 {
        self.weights[(o * self.in_channels + c) * self.kernel_size + j]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights regrouped per tap as `[tap][out][in]` so the inner loops run over
    /// contiguous input channels.
    fn per_tap(&self) -> Vec<f64> {
        let (o_n, c_n, k) = (self.out_channels, self.in_channels, self.kernel_size);
        let mut out = vec![0.0; self.weights.len()];
        for o in 0..o_n {
            for c in 0..c_n {
                for j in 0..k {
                    out[(j * o_n + o) * c_n + c] = self.weights[(o * c_n + c) * k + j];
                }
            }
        }
        out
    }
}

/// Gradient of a loss with respect to one [`ConvKernel`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl KernelGrad {
    pub fn zeros_like(kernel: &ConvKernel) -> Self {
        Self {
            weights: vec![0.0; kernel.weights.len()],
            bias: vec![0.0; kernel.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &KernelGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

fn conv_output_len(steps: usize, kernel: &ConvKernel, padding: usize) -> Result<usize> {
    let span = kernel.dilation * (kernel.kernel_size - 1);
    (steps + 2 * padding)
        .checked_sub(span)
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::shape(
                "conv1d",
                format!("{steps} steps with padding {padding} is shorter than the kernel span {}", span + 1),
            )
        })
}

fn check_conv_input(x: &TimeMatrix, kernel: &ConvKernel) -> Result<()> {
    if x.channels != kernel.in_channels {
        return Err(Error::shape(
            "conv1d",
            format!(
                "input has {} channels, kernel expects {}",
                x.channels, kernel.in_channels
            ),
        ));
    }
    Ok(())
}

/// Input step read by output step `t` through tap `j`, or `None` when it lands in the padding.
#[inline]
fn tap_source(t: usize, j: usize, dilation: usize, padding: usize, steps: usize) -> Option<usize> {
    let pos = (t + j * dilation).checked_sub(padding)?;
    (pos < steps).then_some(pos)
}

/// Dilated 1D convolution over time with symmetric zero padding.
///
/// `y[t, o] = bias[o] + sum_{c, j} w[o, c, j] * x[t - padding + j * dilation, c]`.
/// With `padding = kernel.same_padding()` the output has the same length as the input.
pub fn conv1d_dilated(x: &TimeMatrix, kernel: &ConvKernel, padding: usize) -> Result<TimeMatrix> {
    check_conv_input(x, kernel)?;
    let out_steps = conv_output_len(x.steps, kernel, padding)?;
    let (o_n, c_n) = (kernel.out_channels, kernel.in_channels);
    let taps = kernel.per_tap();
    let mut y = TimeMatrix::zeros(out_steps, o_n);
    for t in 0..out_steps {
        let out = y.row_mut(t);
        out.copy_from_slice(&kernel.bias);
        for j in 0..kernel.kernel_size {
            let Some(src) = tap_source(t, j, kernel.dilation, padding, x.steps) else {
                continue;
            };
            let xr = x.row(src);
            let wj = &taps[j * o_n * c_n..(j + 1) * o_n * c_n];
            for (o, acc) in out.iter_mut().enumerate() {
                *acc += dot(&wj[o * c_n..(o + 1) * c_n], xr);
            }
        }
    }
    Ok(y)
}

/// Kernel-size-1 convolution: an affine map applied independently at every step.
pub fn pointwise_conv(x: &TimeMatrix, kernel: &ConvKernel) -> Result<TimeMatrix> {
    if kernel.kernel_size != 1 {
        return Err(Error::InvalidArgument(format!(
            "pointwise convolution needs kernel size 1, got {}",
            kernel.kernel_size
        )));
    }
    conv1d_dilated(x, kernel, 0)
}

/// Backward pass of [`conv1d_dilated`]: returns `(dL/dx, dL/dkernel)`.
pub fn conv1d_backward(
    x: &TimeMatrix,
    kernel: &ConvKernel,
    padding: usize,
    grad_out: &TimeMatrix,
) -> Result<(TimeMatrix, KernelGrad)> {
    check_conv_input(x, kernel)?;
    let out_steps = conv_output_len(x.steps, kernel, padding)?;
    if grad_out.shape() != (out_steps, kernel.out_channels) {
        return Err(Error::shape(
            "conv1d_backward",
            format!(
                "upstream gradient is {}x{}, expected {out_steps}x{}",
                grad_out.steps, grad_out.channels, kernel.out_channels
            ),
        ));
    }
    let (o_n, c_n, k) = (kernel.out_channels, kernel.in_channels, kernel.kernel_size);
    let taps = kernel.per_tap();
    let mut dx = TimeMatrix::zeros(x.steps, c_n);
    let mut dtaps = vec![0.0; taps.len()];
    let mut dbias = vec![0.0; o_n];
    for t in 0..out_steps {
        let g = grad_out.row(t);
        for (db, &gv) in dbias.iter_mut().zip(g) {
            *db += gv;
        }
        for j in 0..k {
            let Some(src) = tap_source(t, j, kernel.dilation, padding, x.steps) else {
                continue;
            };
            let base = j * o_n * c_n;
            for (o, &gv) in g.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let w = &taps[base + o * c_n..base + (o + 1) * c_n];
                axpy(gv, w, dx.row_mut(src));
                axpy(gv, x.row(src), &mut dtaps[base + o * c_n..base + (o + 1) * c_n]);
            }
        }
    }
    let mut dweights = vec![0.0; kernel.weights.len()];
    for j in 0..k {
        for o in 0..o_n {
            for c in 0..c_n {
                dweights[(o * c_n + c) * k + j] = dtaps[(j * o_n + o) * c_n + c];
            }
        }
    }
    Ok((
        dx,
        KernelGrad {
            weights: dweights,
            bias: dbias,
        },
    ))
}

/// Four independent partial sums so the loop vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn relu(x: &TimeMatrix) -> TimeMatrix {
    x.map(|v| v.max(0.0))
}

/// ReLU backward. The subgradient at exactly zero is taken as 0.
pub fn relu_backward(x: &TimeMatrix, grad_out: &TimeMatrix) -> TimeMatrix {
    let data = x
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    TimeMatrix {
        steps: x.steps,
        channels: x.channels,
        data,
    }
}

const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic sigmoid using the sign-split form. Outputs are clamped to the open
/// interval `(0, 1)` so saturated inputs never yield exactly 0 or 1.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_CEIL)
}

pub fn sigmoid(x: &TimeMatrix) -> TimeMatrix {
    x.map(sigmoid_scalar)
}

/// Sigmoid backward expressed through the forward output `y`.
pub fn sigmoid_backward(y: &TimeMatrix, grad_out: &TimeMatrix) -> TimeMatrix {
    let data = y
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    TimeMatrix {
        steps: y.steps,
        channels: y.channels,
        data,
    }
}

pub fn hadamard(a: &TimeMatrix, b: &TimeMatrix) -> Result<TimeMatrix> {
    a.ensure_same_shape(b, "hadamard")?;
    Ok(TimeMatrix {
        steps: a.steps,
        channels: a.channels,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

pub fn add(a: &TimeMatrix, b: &TimeMatrix) -> Result<TimeMatrix> {
    a.ensure_same_shape(b, "add")?;
    Ok(TimeMatrix {
        steps: a.steps,
        channels: a.channels,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

/// Inverted dropout. Returns the output and the multiplicative mask that produced it
/// (entries are `0` or `1 / (1 - p)`); in inference mode the mask is all ones.
pub fn dropout<R: Rng + ?Sized>(
    x: &TimeMatrix,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<(TimeMatrix, Vec<f64>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), vec![1.0; x.data.len()]));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.data.len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((
        TimeMatrix {
            steps: x.steps,
            channels: x.channels,
            data,
        },
        mask,
    ))
}
