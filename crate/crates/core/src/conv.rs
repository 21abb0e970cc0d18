//! 3D cross-correlation and its transpose.
//!
//! Both directions share three loop kernels that relate a "big" volume (the
//! input side of a forward convolution) with a "small" one (its output side):
//!
//! * `gather`: `small[o, p] += Σ w[o, i, t] · big[i, p·s − pad + t]`
//! * `scatter`: the exact adjoint of `gather`
//! * `weight_grad`: `gw[o, i, t] += Σ small[o, p] · big[i, p·s − pad + t]`
//!
//! A forward convolution is `gather`; its input gradient is `scatter`. A
//! transposed convolution swaps the two roles.
//!
//! Each output element of `gather` is accumulated in the fixed order
//! bias, input channel, band tap, row tap, column tap.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// Stride, zero-padding and (transposed only) output padding per
/// `(band, row, col)` axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output_padding: [usize; 3],
    pub transposed: bool,
}

impl ConvGeometry {
    /// Stride 1 with the given padding.
    pub const fn same(padding: [usize; 3]) -> Self {
        Self {
            stride: [1, 1, 1],
            padding,
            output_padding: [0, 0, 0],
            transposed: false,
        }
    }

    /// Padding that keeps every axis unchanged for an odd kernel at stride 1.
    pub const fn preserving(kernel: [usize; 3]) -> Self {
        Self::same([kernel[0] / 2, kernel[1] / 2, kernel[2] / 2])
    }

    pub const fn transposed(
        stride: [usize; 3],
        padding: [usize; 3],
        output_padding: [usize; 3],
    ) -> Self {
        Self {
            stride,
            padding,
            output_padding,
            transposed: true,
        }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.stride.contains(&0) {
            return Err(Error::Geometry {
                op,
                detail: format!("strides must be >= 1, got {:?}", self.stride),
            });
        }
        for axis in 0..3 {
            let op_pad = self.output_padding[axis];
            if op_pad != 0 && (!self.transposed || op_pad >= self.stride[axis]) {
                return Err(Error::Geometry {
                    op,
                    detail: format!(
                        "output padding {:?} must be smaller than stride {:?} and is only valid for transposed convolution",
                        self.output_padding, self.stride
                    ),
                });
            }
        }
        Ok(())
    }

    /// Output `(l, h, w)` for an input of extents `input` and a kernel `kernel`.
    pub fn output_dims(&self, input: [usize; 3], kernel: [usize; 3], op: &'static str) -> Result<[usize; 3]> {
        const AXES: [&str; 3] = ["band", "row", "col"];
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let (i, k, s, p) = (input[axis], kernel[axis], self.stride[axis], self.padding[axis]);
            let size = if self.transposed {
                ((i - 1) * s + k + self.output_padding[axis]) as i64 - 2 * p as i64
            } else if i + 2 * p < k {
                0
            } else {
                ((i + 2 * p - k) / s + 1) as i64
            };
            if size < 1 {
                return Err(Error::Geometry {
                    op,
                    detail: format!(
                        "{} axis: input {i}, kernel {k}, stride {s}, padding {p} gives empty output",
                        AXES[axis]
                    ),
                });
            }
            out[axis] = size as usize;
        }
        Ok(out)
    }
}

/// Weights, bias and geometry of one 3D convolution layer.
///
/// The weight tensor is `(c_out, c_in, k_l, k_h, k_w)` for a forward
/// convolution. A transposed layer stores `(c_in, c_out, k_l, k_h, k_w)` so
/// that the same weights give the adjoint map.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3dParams {
    pub weight: Tensor5,
    pub bias: Vec<f64>,
    pub geometry: ConvGeometry,
}

impl Conv3dParams {
    pub fn new(weight: Tensor5, bias: Vec<f64>, geometry: ConvGeometry) -> Result<Self> {
        geometry.validate("conv3d_params")?;
        let p = Self {
            weight,
            bias,
            geometry,
        };
        if p.bias.len() != p.out_channels() {
            return Err(Error::Dimension {
                op: "conv3d_params",
                axis: "channel",
                expected: p.out_channels(),
                found: p.bias.len(),
            });
        }
        Ok(p)
    }

    /// All-zero layer mapping `c_in` to `c_out` channels.
    pub fn zeros(c_in: usize, c_out: usize, kernel: [usize; 3], geometry: ConvGeometry) -> Result<Self> {
        let (d0, d1) = if geometry.transposed { (c_in, c_out) } else { (c_out, c_in) };
        let weight = Tensor5::zeros(Shape5::new(d0, d1, kernel[0], kernel[1], kernel[2]));
        Self::new(weight, vec![0.0; c_out], geometry)
    }

    pub fn in_channels(&self) -> usize {
        let s = self.weight.shape();
        if self.geometry.transposed { s.n } else { s.c }
    }

    pub fn out_channels(&self) -> usize {
        let s = self.weight.shape();
        if self.geometry.transposed { s.c } else { s.n }
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s.l, s.h, s.w]
    }

    /// Scalar parameter count (weights plus biases).
    pub fn len(&self) -> usize {
        self.weight.shape().numel() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forward 3D cross-correlation with zero padding.
pub fn conv3d(input: &Tensor5, params: &Conv3dParams) -> Result<Tensor5> {
    if params.geometry.transposed {
        return Err(Error::Contract("conv3d called with transposed parameters".into()));
    }
    forward(input, &params.weight, &params.bias, &params.geometry)
}

/// Transposed 3D convolution (the input-gradient map of [`conv3d`]).
pub fn conv3d_transposed(input: &Tensor5, params: &Conv3dParams) -> Result<Tensor5> {
    if !params.geometry.transposed {
        return Err(Error::Contract(
            "conv3d_transposed called with non-transposed parameters".into(),
        ));
    }
    forward(input, &params.weight, &params.bias, &params.geometry)
}

fn op_name(geometry: &ConvGeometry) -> &'static str {
    if geometry.transposed { "conv3d_transposed" } else { "conv3d" }
}

/// Checks channel agreement and returns the output shape.
pub(crate) fn output_shape(
    input: Shape5,
    weight: Shape5,
    bias_len: usize,
    geometry: &ConvGeometry,
) -> Result<Shape5> {
    let op = op_name(geometry);
    geometry.validate(op)?;
    let (c_in, c_out) = if geometry.transposed { (weight.n, weight.c) } else { (weight.c, weight.n) };
    if input.c != c_in {
        return Err(Error::Dimension {
            op,
            axis: "channel",
            expected: c_in,
            found: input.c,
        });
    }
    if bias_len != c_out {
        return Err(Error::Dimension {
            op,
            axis: "bias",
            expected: c_out,
            found: bias_len,
        });
    }
    let [l, h, w] = geometry.output_dims([input.l, input.h, input.w], [weight.l, weight.h, weight.w], op)?;
    Ok(Shape5::new(input.n, c_out, l, h, w))
}

pub(crate) fn forward(
    input: &Tensor5,
    weight: &Tensor5,
    bias: &[f64],
    geometry: &ConvGeometry,
) -> Result<Tensor5> {
    let out_shape = output_shape(input.shape(), weight.shape(), bias.len(), geometry)?;
    let mut out = vec![0.0; out_shape.numel()];
    let vol = out_shape.volume();
    for (chunk, idx) in out.chunks_mut(vol).zip(0..) {
        chunk.fill(bias[idx % out_shape.c]);
    }
    if geometry.transposed {
        let plan = Plan::new(out_shape, input.shape(), weight.shape(), geometry);
        plan.scatter(input.data(), weight.data(), &mut out);
    } else {
        let plan = Plan::new(input.shape(), out_shape, weight.shape(), geometry);
        plan.gather(input.data(), weight.data(), &mut out);
    }
    Tensor5::from_vec(out_shape, out)
}

/// Gradients of a convolution with respect to its three operands.
pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn backward(
    input: &Tensor5,
    weight: &Tensor5,
    geometry: &ConvGeometry,
    out_shape: Shape5,
    grad_out: &[f64],
    wanted: [bool; 3],
) -> ConvGrads {
    let (big_shape, small_shape) = if geometry.transposed {
        (out_shape, input.shape())
    } else {
        (input.shape(), out_shape)
    };
    let plan = Plan::new(big_shape, small_shape, weight.shape(), geometry);
    let input_grad = wanted[0].then(|| {
        let mut gx = vec![0.0; input.shape().numel()];
        if geometry.transposed {
            plan.gather(grad_out, weight.data(), &mut gx);
        } else {
            plan.scatter(grad_out, weight.data(), &mut gx);
        }
        gx
    });
    let weight_grad = wanted[1].then(|| {
        let mut gw = vec![0.0; weight.shape().numel()];
        if geometry.transposed {
            plan.weight_grad(input.data(), grad_out, &mut gw);
        } else {
            plan.weight_grad(grad_out, input.data(), &mut gw);
        }
        gw
    });
    let bias_grad = wanted[2].then(|| {
        let vol = out_shape.volume();
        let mut gb = vec![0.0; out_shape.c];
        for (chunk, idx) in grad_out.chunks(vol).zip(0..) {
            gb[idx % out_shape.c] += chunk.iter().sum::<f64>();
        }
        gb
    });
    ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad,
    }
}

#[derive(Debug, Clone, Copy)]
struct AxisMap {
    small: usize,
    big: usize,
    stride: usize,
    pad: usize,
}

impl AxisMap {
    /// Range of small-side positions `p` for which `p·s + tap − pad` lands
    /// inside the big side.
    #[inline]
    fn range(&self, tap: usize) -> (usize, usize) {
        let lo = if tap >= self.pad {
            0
        } else {
            (self.pad - tap).div_ceil(self.stride)
        };
        let reach = self.big + self.pad;
        if reach <= tap {
            return (0, 0);
        }
        let hi = ((reach - 1 - tap) / self.stride + 1).min(self.small);
        (lo.min(hi), hi)
    }

    #[inline]
    fn big_index(&self, pos: usize, tap: usize) -> usize {
        pos * self.stride + tap - self.pad
    }
}

/// Precomputed pairing between the big and small side of one convolution.
struct Plan {
    big: Shape5,
    small: Shape5,
    kernel: [usize; 3],
    axes: [AxisMap; 3],
}

impl Plan {
    fn new(big: Shape5, small: Shape5, weight: Shape5, g: &ConvGeometry) -> Self {
        let axis = |i: usize, s: usize, b: usize| AxisMap {
            small: s,
            big: b,
            stride: g.stride[i],
            pad: g.padding[i],
        };
        Self {
            big,
            small,
            kernel: [weight.l, weight.h, weight.w],
            axes: [axis(0, small.l, big.l), axis(1, small.h, big.h), axis(2, small.w, big.w)],
        }
    }

    fn taps(&self) -> usize {
        self.kernel[0] * self.kernel[1] * self.kernel[2]
    }

    /// Calls `f(tap_index, (l range), (h range), (w range), (a, b, c))` for
    /// every kernel tap with a non-empty footprint.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, [(usize, usize); 3], [usize; 3])) {
        let [kl, kh, kw] = self.kernel;
        let mut t = 0;
        for a in 0..kl {
            let rl = self.axes[0].range(a);
            for b in 0..kh {
                let rh = self.axes[1].range(b);
                for c in 0..kw {
                    let rw = self.axes[2].range(c);
                    if rl.0 < rl.1 && rh.0 < rh.1 && rw.0 < rw.1 {
                        f(t, [rl, rh, rw], [a, b, c]);
                    }
                    t += 1;
                }
            }
        }
    }

    /// Small side channels are `o`, big side channels are `i`; weights are
    /// laid out `[o][i][tap]`.
    fn gather(&self, big: &[f64], weight: &[f64], small: &mut [f64]) {
        let (bs, ss) = (self.big, self.small);
        let taps = self.taps();
        let [al, ah, aw] = self.axes;
        for n in 0..ss.n {
            for o in 0..ss.c {
                let s_base = ss.index(n, o, 0, 0, 0);
                let out = &mut small[s_base..s_base + ss.volume()];
                for i in 0..bs.c {
                    let b_base = bs.index(n, i, 0, 0, 0);
                    let inp = &big[b_base..b_base + bs.volume()];
                    let w_base = (o * bs.c + i) * taps;
                    self.for_each_tap(|t, [rl, rh, rw], [a, b, c]| {
                        let wv = weight[w_base + t];
                        let len = rw.1 - rw.0;
                        for pl in rl.0..rl.1 {
                            let bl = al.big_index(pl, a);
                            for ph in rh.0..rh.1 {
                                let bh = ah.big_index(ph, b);
                                let o_row = (pl * ss.h + ph) * ss.w;
                                let i_row = (bl * bs.h + bh) * bs.w;
                                let dst = &mut out[o_row + rw.0..o_row + rw.1];
                                let start = i_row + aw.big_index(rw.0, c);
                                if aw.stride == 1 {
                                    let src = &inp[start..start + len];
                                    for (d, s) in dst.iter_mut().zip(src) {
                                        *d += wv * s;
                                    }
                                } else {
                                    for (j, d) in dst.iter_mut().enumerate() {
                                        *d += wv * inp[start + j * aw.stride];
                                    }
                                }
                            }
                        }
                    });
                }
            }
        }
    }

    fn scatter(&self, small: &[f64], weight: &[f64], big: &mut [f64]) {
        let (bs, ss) = (self.big, self.small);
        let taps = self.taps();
        let [al, ah, aw] = self.axes;
        for n in 0..bs.n {
            for i in 0..bs.c {
                let b_base = bs.index(n, i, 0, 0, 0);
                let out = &mut big[b_base..b_base + bs.volume()];
                for o in 0..ss.c {
                    let s_base = ss.index(n, o, 0, 0, 0);
                    let src_vol = &small[s_base..s_base + ss.volume()];
                    let w_base = (o * bs.c + i) * taps;
                    self.for_each_tap(|t, [rl, rh, rw], [a, b, c]| {
                        let wv = weight[w_base + t];
                        let len = rw.1 - rw.0;
                        for pl in rl.0..rl.1 {
                            let bl = al.big_index(pl, a);
                            for ph in rh.0..rh.1 {
                                let bh = ah.big_index(ph, b);
                                let s_row = (pl * ss.h + ph) * ss.w;
                                let b_row = (bl * bs.h + bh) * bs.w;
                                let src = &src_vol[s_row + rw.0..s_row + rw.1];
                                let start = b_row + aw.big_index(rw.0, c);
                                if aw.stride == 1 {
                                    let dst = &mut out[start..start + len];
                                    for (d, s) in dst.iter_mut().zip(src) {
                                        *d += wv * s;
                                    }
                                } else {
                                    for (j, s) in src.iter().enumerate() {
                                        out[start + j * aw.stride] += wv * s;
                                    }
                                }
                            }
                        }
                    });
                }
            }
        }
    }

    fn weight_grad(&self, small: &[f64], big: &[f64], grad_w: &mut [f64]) {
        let (bs, ss) = (self.big, self.small);
        let taps = self.taps();
        let [al, ah, aw] = self.axes;
        for o in 0..ss.c {
            for i in 0..bs.c {
                let w_base = (o * bs.c + i) * taps;
                for n in 0..ss.n {
                    let s_base = ss.index(n, o, 0, 0, 0);
                    let s_vol = &small[s_base..s_base + ss.volume()];
                    let b_base = bs.index(n, i, 0, 0, 0);
                    let b_vol = &big[b_base..b_base + bs.volume()];
                    self.for_each_tap(|t, [rl, rh, rw], [a, b, c]| {
                        let len = rw.1 - rw.0;
                        let mut acc = 0.0;
                        for pl in rl.0..rl.1 {
                            let bl = al.big_index(pl, a);
                            for ph in rh.0..rh.1 {
                                let bh = ah.big_index(ph, b);
                                let s_row = (pl * ss.h + ph) * ss.w;
                                let b_row = (bl * bs.h + bh) * bs.w;
                                let sv = &s_vol[s_row + rw.0..s_row + rw.1];
                                let start = b_row + aw.big_index(rw.0, c);
                                if aw.stride == 1 {
                                    let bv = &b_vol[start..start + len];
                                    acc += sv.iter().zip(bv).map(|(x, y)| x * y).sum::<f64>();
                                } else {
                                    acc += sv
                                        .iter()
                                        .enumerate()
                                        .map(|(j, x)| x * b_vol[start + j * aw.stride])
                                        .sum::<f64>();
                                }
                            }
                        }
                        grad_w[w_base + t] += acc;
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: Shape5) -> Tensor5 {
        Tensor5::filled(shape, 1.0)
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor5::from_vec(Shape5::scalar(), vec![5.0]).unwrap();
        let p = Conv3dParams::new(
            Tensor5::from_vec(Shape5::scalar(), vec![1.0]).unwrap(),
            vec![0.0],
            ConvGeometry::same([0, 0, 0]),
        )
        .unwrap();
        assert_eq!(conv3d(&x, &p).unwrap().data(), &[5.0]);
    }

    #[test]
    fn sum_of_ones() {
        let x = ones(Shape5::new(1, 1, 3, 3, 3));
        let p = Conv3dParams::new(ones(Shape5::new(1, 1, 3, 3, 3)), vec![0.0], ConvGeometry::same([0, 0, 0]))
            .unwrap();
        let y = conv3d(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape5::scalar());
        assert_eq!(y.data(), &[27.0]);
    }

    #[test]
    fn single_tap_spread() {
        let x = ones(Shape5::scalar());
        let p = Conv3dParams::new(
            ones(Shape5::new(1, 1, 1, 2, 2)),
            vec![0.0],
            ConvGeometry::transposed([1, 2, 2], [0, 0, 0], [0, 0, 0]),
        )
        .unwrap();
        let y = conv3d_transposed(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape5::new(1, 1, 1, 2, 2));
        assert_eq!(y.data(), &[1.0; 4]);
    }

    #[test]
    fn transposed_upsample_shape() {
        let x = ones(Shape5::new(1, 1, 2, 4, 4));
        let p = Conv3dParams::zeros(1, 1, [3, 4, 4], ConvGeometry::transposed([1, 2, 2], [1, 1, 1], [0, 0, 0]))
            .unwrap();
        assert_eq!(conv3d_transposed(&x, &p).unwrap().shape(), Shape5::new(1, 1, 2, 8, 8));
    }

    #[test]
    fn output_padding_fills_with_bias() {
        // r = 3 head geometry: output padding 1 on the spatial axes.
        let x = ones(Shape5::new(1, 1, 1, 2, 2));
        let mut p = Conv3dParams::zeros(1, 1, [1, 6, 6], ConvGeometry::transposed([1, 3, 3], [0, 2, 2], [0, 1, 1]))
            .unwrap();
        p.bias[0] = 0.25;
        let y = conv3d_transposed(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape5::new(1, 1, 1, 6, 6));
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let x = ones(Shape5::new(1, 2, 3, 3, 3));
        let p = Conv3dParams::zeros(3, 1, [1, 1, 1], ConvGeometry::same([0, 0, 0])).unwrap();
        match conv3d(&x, &p) {
            Err(Error::Dimension { axis: "channel", expected: 3, found: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_output_is_geometry_error() {
        let x = ones(Shape5::new(1, 1, 2, 2, 2));
        let p = Conv3dParams::zeros(1, 1, [3, 3, 3], ConvGeometry::same([0, 0, 0])).unwrap();
        assert!(matches!(conv3d(&x, &p), Err(Error::Geometry { .. })));

        let t = Conv3dParams::zeros(1, 1, [1, 1, 1], ConvGeometry::transposed([1, 1, 1], [1, 1, 1], [0, 0, 0]))
            .unwrap();
        assert!(matches!(conv3d_transposed(&ones(Shape5::scalar()), &t), Err(Error::Geometry { .. })));
    }

    #[test]
    fn output_padding_must_be_below_stride() {
        assert!(Conv3dParams::zeros(1, 1, [1, 2, 2], ConvGeometry::transposed([1, 2, 2], [0, 0, 0], [0, 2, 0])).is_err());
        assert!(Conv3dParams::zeros(1, 1, [1, 1, 1], ConvGeometry {
            output_padding: [0, 1, 0],
            ..ConvGeometry::same([0, 0, 0])
        })
        .is_err());
    }

    #[test]
    fn axis_range_matches_bruteforce() {
        for small in 1..6 {
            for big in 1..9 {
                for stride in 1..4 {
                    for pad in 0..4 {
                        let m = AxisMap { small, big, stride, pad };
                        for tap in 0..6 {
                            let valid: Vec<usize> = (0..small)
                                .filter(|&p| {
                                    let b = (p * stride + tap) as i64 - pad as i64;
                                    b >= 0 && b < big as i64
                                })
                                .collect();
                            let (lo, hi) = m.range(tap);
                            let got: Vec<usize> = (lo..hi).collect();
                            assert_eq!(got, valid, "small {small} big {big} s {stride} p {pad} t {tap}");
                        }
                    }
                }
            }
        }
    }
}
