//! Dense tensor type and the three reference kernels (linear, 2-D
//! convolution, average pooling) shared by the ANN forward pass and the
//! spiking current computation.
//!
//! All kernels are plain loops with a fixed summation order so repeated runs
//! are bit-identical. Convolution is cross-correlation (no kernel flip),
//! matching deep-learning weight layouts.

use crate::error::CascError;
use crate::Result;

/// Dense multi-dimensional array of `f64`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, checking the length/shape invariant and that every
    /// value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(CascError::shape(
                "tensor construction",
                format!("{expected} values for shape {shape:?}"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(CascError::NonFinite(format!(
                "tensor data at flat index {pos}"
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    /// 1-D tensor from a value slice.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let len = data.len();
        Tensor::new(vec![len], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterpret as a different shape with the same element count.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(CascError::shape(
                "reshape",
                format!("{} elements", self.data.len()),
                format!("shape {shape:?} ({expected} elements)"),
            ));
        }
        self.shape = shape;
        Ok(self)
    }
}

/// `out[i] = Σ_j W[i,j]·in[j] (+ b[i])`, summed left-to-right over `j`.
///
/// The input may carry any shape; only its total length must match the
/// weight's column count (callers feeding conv outputs into a linear layer
/// rely on the implicit row-major flatten).
pub fn linear(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let wshape = weight.shape();
    if wshape.len() != 2 {
        return Err(CascError::shape(
            "linear weight",
            "2-D [out, in]",
            format!("{wshape:?}"),
        ));
    }
    let (n_out, n_in) = (wshape[0], wshape[1]);
    if input.len() != n_in {
        return Err(CascError::shape(
            "linear input",
            format!("{n_in} values"),
            format!("{} values (shape {:?})", input.len(), input.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.len() != n_out {
            return Err(CascError::shape(
                "linear bias",
                format!("{n_out} values"),
                format!("{} values", b.len()),
            ));
        }
    }

    let w = weight.data();
    let x = input.data();
    let mut out = vec![0.0; n_out];
    for i in 0..n_out {
        let row = &w[i * n_in..(i + 1) * n_in];
        let mut acc = 0.0;
        for j in 0..n_in {
            acc += row[j] * x[j];
        }
        if let Some(b) = bias {
            acc += b.data()[i];
        }
        out[i] = acc;
    }
    Tensor::new(vec![n_out], out)
}

/// Output spatial extent for a conv/pool axis.
fn out_extent(input: usize, k: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - k) / stride + 1
}

/// 2-D cross-correlation over `[C,H,W]` input with `[F,C,k,k]` weights and
/// zero padding. Accumulation order per output element: channel, then kernel
/// row, then kernel column.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let ishape = input.shape();
    let wshape = weight.shape();
    if ishape.len() != 3 {
        return Err(CascError::shape(
            "conv2d input",
            "3-D [C,H,W]",
            format!("{ishape:?}"),
        ));
    }
    if wshape.len() != 4 || wshape[2] != wshape[3] {
        return Err(CascError::shape(
            "conv2d weight",
            "4-D [F,C,k,k] with square kernel",
            format!("{wshape:?}"),
        ));
    }
    let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
    let (f, wc, k) = (wshape[0], wshape[1], wshape[2]);
    if wc != c_in {
        return Err(CascError::shape(
            "conv2d channels",
            format!("{c_in} input channels"),
            format!("weight expects {wc}"),
        ));
    }
    if stride == 0 {
        return Err(CascError::InvalidGeometry("conv2d stride must be ≥ 1".into()));
    }
    if k == 0 || k > h + 2 * padding || k > w + 2 * padding {
        return Err(CascError::InvalidGeometry(format!(
            "conv2d kernel {k} does not fit padded input {}x{}",
            h + 2 * padding,
            w + 2 * padding
        )));
    }
    if let Some(b) = bias {
        if b.len() != f {
            return Err(CascError::shape(
                "conv2d bias",
                format!("{f} values"),
                format!("{} values", b.len()),
            ));
        }
    }

    let h_out = out_extent(h, k, stride, padding);
    let w_out = out_extent(w, k, stride, padding);
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; f * h_out * w_out];

    for fi in 0..f {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for kr in 0..k {
                        // Signed arithmetic handles the padded border.
                        let ih = (oh * stride + kr) as isize - padding as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for kc in 0..k {
                            let iw = (ow * stride + kc) as isize - padding as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            let xi = c * h * w + ih as usize * w + iw as usize;
                            let wi = fi * c_in * k * k + c * k * k + kr * k + kc;
                            acc += x[xi] * wt[wi];
                        }
                    }
                }
                if let Some(b) = bias {
                    acc += b.data()[fi];
                }
                out[fi * h_out * w_out + oh * w_out + ow] = acc;
            }
        }
    }
    Tensor::new(vec![f, h_out, w_out], out)
}

/// Window means over `[C,H,W]`, no padding. Windows must tile the input
/// exactly: `(H−k)` and `(W−k)` must be divisible by the stride.
pub fn avgpool2d(input: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    let ishape = input.shape();
    if ishape.len() != 3 {
        return Err(CascError::shape(
            "avgpool2d input",
            "3-D [C,H,W]",
            format!("{ishape:?}"),
        ));
    }
    let (c, h, w) = (ishape[0], ishape[1], ishape[2]);
    if k == 0 || stride == 0 {
        return Err(CascError::InvalidGeometry(
            "avgpool2d window and stride must be ≥ 1".into(),
        ));
    }
    if k > h || k > w || !(h - k).is_multiple_of(stride) || !(w - k).is_multiple_of(stride) {
        return Err(CascError::InvalidGeometry(format!(
            "avgpool2d window {k} stride {stride} does not tile {h}x{w} input"
        )));
    }

    let h_out = (h - k) / stride + 1;
    let w_out = (w - k) / stride + 1;
    let x = input.data();
    let area = (k * k) as f64;
    let mut out = vec![0.0; c * h_out * w_out];

    for ci in 0..c {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let mut acc = 0.0;
                for kr in 0..k {
                    for kc in 0..k {
                        let ih = oh * stride + kr;
                        let iw = ow * stride + kc;
                        acc += x[ci * h * w + ih * w + iw];
                    }
                }
                out[ci * h_out * w_out + oh * w_out + ow] = acc / area;
            }
        }
    }
    Tensor::new(vec![c, h_out, w_out], out)
}
