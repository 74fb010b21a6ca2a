//! im2col convolution kernels shared by the tape and the incremental decoder.
//!
//! Every convolution is lowered to a single GEMM over the *enabled* spatial
//! taps of its kernel. Fully masked taps are dropped from the column matrix,
//! so a masked 7x7 kernel costs roughly half of a dense one. Both the
//! whole-image path and the single-position path go through [`gemm`] with
//! identical column layouts, which keeps their results bit-identical.

use super::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Resolved geometry of a 2-D cross-correlation over NHWC input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn same_pad(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

impl ConvGeom {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (&[n, in_h, in_w, cin], &[kh, kw, kcin, cout]) = (input, kernel) else {
            return shape_err("conv2d", input, kernel);
        };
        if kcin != cin || stride == 0 || kh == 0 || kw == 0 {
            return shape_err("conv2d", input, kernel);
        }
        let (out_h, pad_top, out_w, pad_left) = match padding {
            Padding::Same => {
                let (oh, pt) = same_pad(in_h, kh, stride);
                let (ow, pl) = same_pad(in_w, kw, stride);
                (oh, pt, ow, pl)
            }
            Padding::Valid => {
                if kh > in_h || kw > in_w {
                    return shape_err("conv2d", input, kernel);
                }
                ((in_h - kh) / stride + 1, 0, (in_w - kw) / stride + 1, 0)
            }
        };
        Ok(Self {
            n,
            in_h,
            in_w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.n, self.in_h, self.in_w, self.cin]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.out_h, self.out_w, self.cout]
    }

    pub fn rows(&self) -> usize {
        self.n * self.out_h * self.out_w
    }

    /// Input coordinate read by output `o` through kernel offset `k`.
    #[inline]
    fn src(&self, o: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(pad)?;
        (pos < limit).then_some(pos)
    }
}

/// The spatial taps `(ky, kx)` that carry at least one nonzero mask entry.
pub fn active_taps(kh: usize, kw: usize, mask: Option<&Tensor>) -> Vec<(usize, usize)> {
    let mut taps = Vec::with_capacity(kh * kw);
    for ky in 0..kh {
        for kx in 0..kw {
            let on = match mask {
                None => true,
                Some(m) => {
                    let per_tap = m.shape()[2] * m.shape()[3];
                    let base = (ky * kw + kx) * per_tap;
                    m.data()[base..base + per_tap].iter().any(|&v| v != 0.0)
                }
            };
            if on {
                taps.push((ky, kx));
            }
        }
    }
    taps
}

pub fn check_mask(kernel: &Tensor, mask: Option<&Tensor>) -> Result<()> {
    match mask {
        Some(m) if m.shape() != kernel.shape() => shape_err("conv2d mask", kernel.shape(), m.shape()),
        _ => Ok(()),
    }
}

/// Effective kernel `kernel * mask` gathered over `taps` into a
/// `[taps * cin, cout]` matrix.
pub fn kernel_matrix(kernel: &Tensor, mask: Option<&Tensor>, taps: &[(usize, usize)]) -> Vec<f64> {
    let s = kernel.shape();
    let (kw, cin, cout) = (s[1], s[2], s[3]);
    let per_tap = cin * cout;
    let mut out = Vec::with_capacity(taps.len() * per_tap);
    for &(ky, kx) in taps {
        let base = (ky * kw + kx) * per_tap;
        let k = &kernel.data()[base..base + per_tap];
        match mask {
            Some(m) => {
                let mk = &m.data()[base..base + per_tap];
                out.extend(k.iter().zip(mk).map(|(a, b)| a * b));
            }
            None => out.extend_from_slice(k),
        }
    }
    out
}

/// Scatters a `[taps * cin, cout]` gradient back into full kernel layout,
/// zeroing masked entries.
pub fn scatter_kernel_grad(
    gmat: &[f64],
    kernel_shape: &[usize],
    mask: Option<&Tensor>,
    taps: &[(usize, usize)],
) -> Vec<f64> {
    let (kw, cin, cout) = (kernel_shape[1], kernel_shape[2], kernel_shape[3]);
    let per_tap = cin * cout;
    let mut full = vec![0.0; kernel_shape.iter().product()];
    for (t, &(ky, kx)) in taps.iter().enumerate() {
        let base = (ky * kw + kx) * per_tap;
        let src = &gmat[t * per_tap..(t + 1) * per_tap];
        let dst = &mut full[base..base + per_tap];
        match mask {
            Some(m) => {
                let mk = &m.data()[base..base + per_tap];
                for ((d, g), mv) in dst.iter_mut().zip(src).zip(mk) {
                    *d = g * mv;
                }
            }
            None => dst.copy_from_slice(src),
        }
    }
    full
}

/// Fills one im2col row for output position `(b, oy, ox)`.
#[inline]
pub fn im2col_row(
    input: &[f64],
    g: &ConvGeom,
    taps: &[(usize, usize)],
    b: usize,
    oy: usize,
    ox: usize,
    row: &mut [f64],
) {
    let cin = g.cin;
    for (t, &(ky, kx)) in taps.iter().enumerate() {
        let dst = &mut row[t * cin..(t + 1) * cin];
        match (g.src(oy, ky, g.pad_top, g.in_h), g.src(ox, kx, g.pad_left, g.in_w)) {
            (Some(iy), Some(ix)) => {
                let off = ((b * g.in_h + iy) * g.in_w + ix) * cin;
                dst.copy_from_slice(&input[off..off + cin]);
            }
            _ => dst.fill(0.0),
        }
    }
}

pub fn im2col(input: &[f64], g: &ConvGeom, taps: &[(usize, usize)]) -> Vec<f64> {
    let width = taps.len() * g.cin;
    let mut cols = vec![0.0; g.rows() * width];
    let mut r = 0;
    for b in 0..g.n {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                im2col_row(input, g, taps, b, oy, ox, &mut cols[r * width..(r + 1) * width]);
                r += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates column gradients into `grad_input`.
pub fn col2im(gcols: &[f64], g: &ConvGeom, taps: &[(usize, usize)], grad_input: &mut [f64]) {
    let cin = g.cin;
    let width = taps.len() * cin;
    let mut r = 0;
    for b in 0..g.n {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = &gcols[r * width..(r + 1) * width];
                for (t, &(ky, kx)) in taps.iter().enumerate() {
                    if let (Some(iy), Some(ix)) =
                        (g.src(oy, ky, g.pad_top, g.in_h), g.src(ox, kx, g.pad_left, g.in_w))
                    {
                        let off = ((b * g.in_h + iy) * g.in_w + ix) * cin;
                        for (d, s) in grad_input[off..off + cin].iter_mut().zip(&row[t * cin..]) {
                            *d += s;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

/// `c = op(a) * op(b) + beta * c` with `op(a)` of size `m x k` and `op(b)`
/// of size `k x n`, all row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices are sized m*k, k*n and m*n (asserted above) and the
    // strides describe row-major (or transposed row-major) layouts within them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Plain or masked cross-correlation. Returns the output together with the
/// column matrix and tap list so a caller can reuse them for gradients.
pub(crate) fn conv2d_parts(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
    mask: Option<&Tensor>,
) -> Result<(Tensor, ConvGeom, Vec<(usize, usize)>, Vec<f64>)> {
    check_mask(kernel, mask)?;
    let g = ConvGeom::new(input.shape(), kernel.shape(), stride, padding)?;
    let taps = active_taps(g.kh, g.kw, mask);
    let cols = im2col(input.data(), &g, &taps);
    let wmat = kernel_matrix(kernel, mask, &taps);
    let mut out = vec![0.0; g.rows() * g.cout];
    gemm(g.rows(), taps.len() * g.cin, g.cout, &cols, false, &wmat, false, 0.0, &mut out);
    let out = Tensor::new(g.output_shape().to_vec(), out)?;
    Ok((out, g, taps, cols))
}

pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
    mask: Option<&Tensor>,
) -> Result<Tensor> {
    conv2d_parts(input, kernel, stride, padding, mask).map(|p| p.0)
}

/// Geometry of the strided SAME convolution whose adjoint maps
/// `[n, h, w, cin]` to `[n, h*stride, w*stride, cout]` with a kernel laid out
/// as `[kh, kw, cout, cin]`.
pub fn transposed_geom(input: &[usize], kernel: &[usize], stride: usize) -> Result<ConvGeom> {
    let (&[n, h, w, cin], &[kh, kw, cout, kcin]) = (input, kernel) else {
        return shape_err("transposed_conv2d", input, kernel);
    };
    if kcin != cin || stride == 0 {
        return shape_err("transposed_conv2d", input, kernel);
    }
    let g = ConvGeom::new(&[n, h * stride, w * stride, cout], &[kh, kw, cout, cin], stride, Padding::Same)?;
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    Ok(g)
}

/// Transposed convolution: the exact adjoint of [`conv2d`] with the same
/// kernel, SAME padding and the given stride.
pub fn transposed_conv2d(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    let g = transposed_geom(input.shape(), kernel.shape(), stride)?;
    let taps = active_taps(g.kh, g.kw, None);
    let wmat = kernel_matrix(kernel, None, &taps);
    let width = taps.len() * g.cin;
    let mut gcols = vec![0.0; g.rows() * width];
    gemm(g.rows(), g.cout, width, input.data(), false, &wmat, true, 0.0, &mut gcols);
    let mut out = vec![0.0; g.input_shape().iter().product()];
    col2im(&gcols, &g, &taps, &mut out);
    Tensor::new(g.input_shape().to_vec(), out).map_err(|e| Error::Config(e.to_string()))
}

/// Computes a single output position of a convolution. Scratch buffers are
/// caller-owned so the decoder can run without allocation.
#[allow(clippy::too_many_arguments)]
pub fn conv_at(
    input: &[f64],
    g: &ConvGeom,
    taps: &[(usize, usize)],
    wmat: &[f64],
    b: usize,
    oy: usize,
    ox: usize,
    row: &mut [f64],
    out: &mut [f64],
) {
    im2col_row(input, g, taps, b, oy, ox, row);
    gemm(1, taps.len() * g.cin, g.cout, row, false, wmat, false, 0.0, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| ((i * 37 % 101) as f64) / 50.0 - 1.0)
    }

    #[test]
    fn all_ones_window_sums_to_nine() {
        let x = Tensor::full(&[1, 3, 3, 1], 1.0);
        let k = Tensor::full(&[3, 3, 1, 1], 1.0);
        let y = conv2d(&x, &k, 1, Padding::Same, None).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 1]);
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn centered_delta_is_identity() {
        let x = ramp(&[2, 5, 4, 3]);
        let mut k = Tensor::zeros(&[3, 3, 3, 3]);
        for c in 0..3 {
            k.data_mut()[(4 * 3 + c) * 3 + c] = 1.0;
        }
        let y = conv2d(&x, &k, 1, Padding::Same, None).unwrap();
        assert_eq!(y, x);
        let t = transposed_conv2d(&x, &k, 1).unwrap();
        assert_eq!(t, x);
    }

    #[test]
    fn zero_mask_gives_zero_output() {
        let x = ramp(&[1, 4, 4, 2]);
        let k = ramp(&[3, 3, 2, 5]);
        let m = Tensor::zeros(&[3, 3, 2, 5]);
        let y = conv2d(&x, &k, 1, Padding::Same, Some(&m)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let x = Tensor::zeros(&[1, 4, 4, 2]);
        let k = Tensor::zeros(&[3, 3, 3, 1]);
        let err = conv2d(&x, &k, 1, Padding::Same, None).unwrap_err().to_string();
        assert!(err.contains("[1, 4, 4, 2]") && err.contains("[3, 3, 3, 1]"), "{err}");
        let k = Tensor::zeros(&[5, 5, 2, 1]);
        assert!(conv2d(&x, &k, 1, Padding::Valid, None).is_err());
        let m = Tensor::zeros(&[3, 3, 2, 2]);
        assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 2, 1]), 1, Padding::Same, Some(&m)).is_err());
    }

    #[test]
    fn transposed_upsamples_by_stride() {
        let x = ramp(&[1, 8, 8, 4]);
        let k = ramp(&[3, 3, 4, 4]);
        let y = transposed_conv2d(&x, &k, 2).unwrap();
        assert_eq!(y.shape(), &[1, 16, 16, 4]);
        let z = transposed_conv2d(&y, &k, 2).unwrap();
        assert_eq!(z.shape(), &[1, 32, 32, 4]);
    }

    #[test]
    fn valid_padding_geometry() {
        let g = ConvGeom::new(&[1, 7, 6, 1], &[3, 3, 1, 1], 2, Padding::Valid).unwrap();
        assert_eq!((g.out_h, g.out_w), (3, 2));
        let g = ConvGeom::new(&[1, 16, 16, 1], &[3, 3, 1, 1], 2, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w, g.pad_top), (8, 8, 0));
    }

    #[test]
    fn single_position_matches_full_bitwise() {
        let x = ramp(&[2, 6, 5, 3]);
        let k = Tensor::from_fn(&[5, 5, 3, 4], |i| ((i * 13 % 29) as f64 - 14.0) / 17.0);
        let (full, g, taps, _) = conv2d_parts(&x, &k, 1, Padding::Same, None).unwrap();
        let wmat = kernel_matrix(&k, None, &taps);
        let mut row = vec![0.0; taps.len() * 3];
        let mut out = vec![0.0; 4];
        for b in 0..2 {
            for oy in 0..6 {
                for ox in 0..5 {
                    conv_at(x.data(), &g, &taps, &wmat, b, oy, ox, &mut row, &mut out);
                    let off = ((b * 6 + oy) * 5 + ox) * 4;
                    for c in 0..4 {
                        assert_eq!(out[c].to_bits(), full.data()[off + c].to_bits());
                    }
                }
            }
        }
    }
}
