use super::{Scalar, Tensor};
use crate::error::{shape_err, Error, Result};

/// Spatial geometry shared by the dense and depthwise kernels.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn new(
        op: &'static str,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Parameter(format!("{op}: stride must be >= 1")));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(shape_err(
                op,
                format!("kernel {kh}x{kw} larger than padded input {h}x{w} (p={padding})"),
            ));
        }
        Ok(Self {
            h,
            w,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
            stride,
            padding,
        })
    }

    /// Output indices `lo..hi` whose input coordinate `o * s + offset - p`
    /// falls inside `0..len_in`.
    fn valid(&self, offset: usize, len_in: usize, len_out: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if p > offset { (p - offset).div_ceil(s) } else { 0 };
        let hi = if len_in + p > offset {
            ((len_in - 1 + p - offset) / s + 1).min(len_out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn rows(&self, ky: usize) -> (usize, usize) {
        self.valid(ky, self.h, self.oh)
    }

    fn cols(&self, kx: usize) -> (usize, usize) {
        self.valid(kx, self.w, self.ow)
    }

    #[inline]
    fn in_idx(&self, o: usize, k: usize) -> usize {
        o * self.stride + k - self.padding
    }
}

/// `out += wv * shift(inp)` for one kernel tap.
#[inline]
fn tap_forward<T: Scalar>(out: &mut [T], inp: &[T], wv: T, g: &Geometry, ky: usize, kx: usize) {
    let (r0, r1) = g.rows(ky);
    let (c0, c1) = g.cols(kx);
    if c0 >= c1 {
        return;
    }
    for oy in r0..r1 {
        let iy = g.in_idx(oy, ky);
        let orow = &mut out[oy * g.ow..(oy + 1) * g.ow];
        let irow = &inp[iy * g.w..(iy + 1) * g.w];
        if g.stride == 1 {
            let start = c0 + kx - g.padding;
            for (o, &i) in orow[c0..c1].iter_mut().zip(&irow[start..start + (c1 - c0)]) {
                *o += wv * i;
            }
        } else {
            for ox in c0..c1 {
                orow[ox] += wv * irow[g.in_idx(ox, kx)];
            }
        }
    }
}

/// Scatter of one kernel tap back onto the input gradient.
#[inline]
fn tap_backward_input<T: Scalar>(
    gin: &mut [T],
    gout: &[T],
    wv: T,
    g: &Geometry,
    ky: usize,
    kx: usize,
) {
    let (r0, r1) = g.rows(ky);
    let (c0, c1) = g.cols(kx);
    if c0 >= c1 {
        return;
    }
    for oy in r0..r1 {
        let iy = g.in_idx(oy, ky);
        let orow = &gout[oy * g.ow..(oy + 1) * g.ow];
        let irow = &mut gin[iy * g.w..(iy + 1) * g.w];
        if g.stride == 1 {
            let start = c0 + kx - g.padding;
            for (i, &o) in irow[start..start + (c1 - c0)].iter_mut().zip(&orow[c0..c1]) {
                *i += wv * o;
            }
        } else {
            for ox in c0..c1 {
                irow[g.in_idx(ox, kx)] += wv * orow[ox];
            }
        }
    }
}

/// Correlation of the output gradient with the shifted input for one tap.
#[inline]
fn tap_weight_grad<T: Scalar>(gout: &[T], inp: &[T], g: &Geometry, ky: usize, kx: usize) -> T {
    let (r0, r1) = g.rows(ky);
    let (c0, c1) = g.cols(kx);
    let mut acc = T::zero();
    if c0 >= c1 {
        return acc;
    }
    for oy in r0..r1 {
        let iy = g.in_idx(oy, ky);
        let orow = &gout[oy * g.ow..(oy + 1) * g.ow];
        let irow = &inp[iy * g.w..(iy + 1) * g.w];
        if g.stride == 1 {
            let start = c0 + kx - g.padding;
            for (&o, &i) in orow[c0..c1].iter().zip(&irow[start..start + (c1 - c0)]) {
                acc += o * i;
            }
        } else {
            for ox in c0..c1 {
                acc += orow[ox] * irow[g.in_idx(ox, kx)];
            }
        }
    }
    acc
}

/// Copies one `h x w` plane into the interior of a zeroed padded buffer.
fn pad_plane<T: Scalar>(src: &[T], g: &Geometry, buf: &mut [T]) {
    let (p, pw) = (g.padding, g.w + 2 * g.padding);
    buf.iter_mut().for_each(|v| *v = T::zero());
    for y in 0..g.h {
        buf[(y + p) * pw + p..(y + p) * pw + p + g.w].copy_from_slice(&src[y * g.w..(y + 1) * g.w]);
    }
}

/// Stride-1 correlation of a padded plane with one `k x k` kernel, added to `dst`.
fn padded_forward<T: Scalar>(dst: &mut [T], pad: &[T], wk: &[T], k: usize, g: &Geometry) {
    let pw = g.w + 2 * g.padding;
    for oy in 0..g.oh {
        let orow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
        for ky in 0..k {
            let prow = &pad[(oy + ky) * pw..(oy + ky) * pw + pw];
            for kx in 0..k {
                let wv = wk[ky * k + kx];
                for (o, &i) in orow.iter_mut().zip(&prow[kx..kx + g.ow]) {
                    *o += wv * i;
                }
            }
        }
    }
}

/// Backward of [`padded_forward`]: accumulates kernel gradients into `gk`
/// and the padded-input gradient into `gpad`.
fn padded_backward<T: Scalar>(
    go: &[T],
    pad: &[T],
    wk: &[T],
    k: usize,
    g: &Geometry,
    gk: &mut [T],
    gpad: &mut [T],
) {
    let pw = g.w + 2 * g.padding;
    for oy in 0..g.oh {
        let grow = &go[oy * g.ow..(oy + 1) * g.ow];
        for ky in 0..k {
            let base = (oy + ky) * pw;
            for kx in 0..k {
                let idx = ky * k + kx;
                let prow = &pad[base + kx..base + kx + g.ow];
                let mut acc = T::zero();
                for (&gv, &xv) in grow.iter().zip(prow) {
                    acc += gv * xv;
                }
                gk[idx] += acc;
                let wv = wk[idx];
                for (gi, &gv) in gpad[base + kx..base + kx + g.ow].iter_mut().zip(grow) {
                    *gi += wv * gv;
                }
            }
        }
    }
}

/// Adds the interior of a padded gradient plane onto `dst`.
fn unpad_add<T: Scalar>(gpad: &[T], g: &Geometry, dst: &mut [T]) {
    let (p, pw) = (g.padding, g.w + 2 * g.padding);
    for y in 0..g.h {
        let src = &gpad[(y + p) * pw + p..(y + p) * pw + p + g.w];
        for (d, &v) in dst[y * g.w..(y + 1) * g.w].iter_mut().zip(src) {
            *d += v;
        }
    }
}

fn padded_len(g: &Geometry) -> usize {
    (g.h + 2 * g.padding) * (g.w + 2 * g.padding)
}

fn is_pointwise(kh: usize, kw: usize, stride: usize, padding: usize) -> bool {
    kh == 1 && kw == 1 && stride == 1 && padding == 0
}

fn check_grad_out<T: Scalar>(
    op: &'static str,
    grad_out: &Tensor<T>,
    expected: [usize; 4],
) -> Result<()> {
    if grad_out.shape() != expected {
        return Err(shape_err(
            op,
            format!("grad_out {:?} vs output {:?}", grad_out.shape(), expected),
        ));
    }
    Ok(())
}

/// Dense 2-D convolution, input `[N, C, H, W]`, weight `[O, C, K, K]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("conv2d")?;
    let (o, ci, kh, kw) = weight.dims4("conv2d")?;
    if c != ci {
        return Err(shape_err(
            "conv2d",
            format!("input has {c} channels, weight expects {ci}"),
        ));
    }
    let g = Geometry::new("conv2d", h, w, kh, kw, stride, padding)?;
    let (in_plane, out_plane) = (h * w, g.oh * g.ow);
    let wd = weight.data();
    let x = input.data();
    let mut out = vec![T::zero(); n * o * out_plane];
    if is_pointwise(kh, kw, stride, padding) {
        // whole planes are contiguous: one axpy per (out, in) channel pair
        for b in 0..n {
            for oc in 0..o {
                let dst = &mut out[(b * o + oc) * out_plane..(b * o + oc + 1) * out_plane];
                for ic in 0..c {
                    let src = &x[(b * c + ic) * in_plane..(b * c + ic + 1) * in_plane];
                    let wv = wd[oc * c + ic];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d += wv * v;
                    }
                }
            }
        }
        let out = Tensor::new(vec![n, o, h, w], out)?;
        out.check_finite("conv2d")?;
        return Ok(out);
    }
    if stride == 1 && kh == kw {
        let mut pad = vec![T::zero(); padded_len(&g)];
        for b in 0..n {
            for ic in 0..c {
                pad_plane(&x[(b * c + ic) * in_plane..(b * c + ic + 1) * in_plane], &g, &mut pad);
                for oc in 0..o {
                    let wk = &wd[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
                    let dst = &mut out[(b * o + oc) * out_plane..(b * o + oc + 1) * out_plane];
                    padded_forward(dst, &pad, wk, kh, &g);
                }
            }
        }
        let out = Tensor::new(vec![n, o, g.oh, g.ow], out)?;
        out.check_finite("conv2d")?;
        return Ok(out);
    }
    for b in 0..n {
        for oc in 0..o {
            let dst = &mut out[(b * o + oc) * out_plane..(b * o + oc + 1) * out_plane];
            for ic in 0..c {
                let src = &x[(b * c + ic) * in_plane..(b * c + ic + 1) * in_plane];
                let wbase = (oc * c + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        tap_forward(dst, src, wd[wbase + ky * kw + kx], &g, ky, kx);
                    }
                }
            }
        }
    }
    let out = Tensor::new(vec![n, o, g.oh, g.ow], out)?;
    out.check_finite("conv2d")?;
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to `(input, weight)`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = input.dims4("conv2d_backward")?;
    let (o, ci, kh, kw) = weight.dims4("conv2d_backward")?;
    if c != ci {
        return Err(shape_err("conv2d_backward", "channel mismatch"));
    }
    let g = Geometry::new("conv2d_backward", h, w, kh, kw, stride, padding)?;
    check_grad_out("conv2d_backward", grad_out, [n, o, g.oh, g.ow])?;
    let (in_plane, out_plane) = (h * w, g.oh * g.ow);
    let wd = weight.data();
    let x = input.data();
    let gy = grad_out.data();
    let mut gin = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); wd.len()];
    if is_pointwise(kh, kw, stride, padding) {
        for b in 0..n {
            for oc in 0..o {
                let go = &gy[(b * o + oc) * out_plane..(b * o + oc + 1) * out_plane];
                for ic in 0..c {
                    let xi = (b * c + ic) * in_plane..(b * c + ic + 1) * in_plane;
                    let widx = oc * c + ic;
                    let mut acc = T::zero();
                    for (&gv, &xv) in go.iter().zip(&x[xi.clone()]) {
                        acc += gv * xv;
                    }
                    gw[widx] += acc;
                    let wv = wd[widx];
                    for (gi, &gv) in gin[xi].iter_mut().zip(go) {
                        *gi += wv * gv;
                    }
                }
            }
        }
        return Ok((
            Tensor::new(input.shape().to_vec(), gin)?,
            Tensor::new(weight.shape().to_vec(), gw)?,
        ));
    }
    if stride == 1 && kh == kw {
        let kk = kh * kw;
        let mut pad = vec![T::zero(); padded_len(&g)];
        let mut gpad = vec![T::zero(); padded_len(&g)];
        for b in 0..n {
            for ic in 0..c {
                let xi = (b * c + ic) * in_plane..(b * c + ic + 1) * in_plane;
                pad_plane(&x[xi.clone()], &g, &mut pad);
                gpad.iter_mut().for_each(|v| *v = T::zero());
                for oc in 0..o {
                    let go = &gy[(b * o + oc) * out_plane..(b * o + oc + 1) * out_plane];
                    let wr = (oc * c + ic) * kk..(oc * c + ic + 1) * kk;
                    padded_backward(go, &pad, &wd[wr.clone()], kh, &g, &mut gw[wr], &mut gpad);
                }
                unpad_add(&gpad, &g, &mut gin[xi]);
            }
        }
        return Ok((
            Tensor::new(input.shape().to_vec(), gin)?,
            Tensor::new(weight.shape().to_vec(), gw)?,
        ));
    }
    for b in 0..n {
        for oc in 0..o {
            let go = &gy[(b * o + oc) * out_plane..(b * o + oc + 1) * out_plane];
            for ic in 0..c {
                let xi = (b * c + ic) * in_plane..(b * c + ic + 1) * in_plane;
                let wbase = (oc * c + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let widx = wbase + ky * kw + kx;
                        gw[widx] += tap_weight_grad(go, &x[xi.clone()], &g, ky, kx);
                        tap_backward_input(&mut gin[xi.clone()], go, wd[widx], &g, ky, kx);
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gin)?,
        Tensor::new(weight.shape().to_vec(), gw)?,
    ))
}

/// Depthwise 2-D convolution, input `[N, C, H, W]`, weight `[C, 1, K, K]`.
pub fn depthwise_conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("depthwise_conv2d")?;
    let (wc, one, kh, kw) = weight.dims4("depthwise_conv2d")?;
    if wc != c || one != 1 {
        return Err(shape_err(
            "depthwise_conv2d",
            format!("input has {c} channels, weight is {:?}", weight.shape()),
        ));
    }
    let g = Geometry::new("depthwise_conv2d", h, w, kh, kw, stride, padding)?;
    let (in_plane, out_plane) = (h * w, g.oh * g.ow);
    let wd = weight.data();
    let x = input.data();
    let mut out = vec![T::zero(); n * c * out_plane];
    if stride == 1 && kh == kw {
        let mut pad = vec![T::zero(); padded_len(&g)];
        for b in 0..n {
            for ch in 0..c {
                let p = b * c + ch;
                pad_plane(&x[p * in_plane..(p + 1) * in_plane], &g, &mut pad);
                let wk = &wd[ch * kh * kw..(ch + 1) * kh * kw];
                padded_forward(&mut out[p * out_plane..(p + 1) * out_plane], &pad, wk, kh, &g);
            }
        }
        let out = Tensor::new(vec![n, c, g.oh, g.ow], out)?;
        out.check_finite("depthwise_conv2d")?;
        return Ok(out);
    }
    for b in 0..n {
        for ch in 0..c {
            let p = b * c + ch;
            let dst = &mut out[p * out_plane..(p + 1) * out_plane];
            let src = &x[p * in_plane..(p + 1) * in_plane];
            for ky in 0..kh {
                for kx in 0..kw {
                    tap_forward(dst, src, wd[(ch * kh + ky) * kw + kx], &g, ky, kx);
                }
            }
        }
    }
    let out = Tensor::new(vec![n, c, g.oh, g.ow], out)?;
    out.check_finite("depthwise_conv2d")?;
    Ok(out)
}

/// Gradients of [`depthwise_conv2d`] with respect to `(input, weight)`.
pub fn depthwise_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = input.dims4("depthwise_conv2d_backward")?;
    let (wc, one, kh, kw) = weight.dims4("depthwise_conv2d_backward")?;
    if wc != c || one != 1 {
        return Err(shape_err("depthwise_conv2d_backward", "channel mismatch"));
    }
    let g = Geometry::new("depthwise_conv2d_backward", h, w, kh, kw, stride, padding)?;
    check_grad_out("depthwise_conv2d_backward", grad_out, [n, c, g.oh, g.ow])?;
    let (in_plane, out_plane) = (h * w, g.oh * g.ow);
    let wd = weight.data();
    let x = input.data();
    let gy = grad_out.data();
    let mut gin = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); wd.len()];
    if stride == 1 && kh == kw {
        let kk = kh * kw;
        let mut pad = vec![T::zero(); padded_len(&g)];
        let mut gpad = vec![T::zero(); padded_len(&g)];
        for b in 0..n {
            for ch in 0..c {
                let p = b * c + ch;
                let xi = p * in_plane..(p + 1) * in_plane;
                pad_plane(&x[xi.clone()], &g, &mut pad);
                gpad.iter_mut().for_each(|v| *v = T::zero());
                let go = &gy[p * out_plane..(p + 1) * out_plane];
                let wr = ch * kk..(ch + 1) * kk;
                padded_backward(go, &pad, &wd[wr.clone()], kh, &g, &mut gw[wr], &mut gpad);
                unpad_add(&gpad, &g, &mut gin[xi]);
            }
        }
        return Ok((
            Tensor::new(input.shape().to_vec(), gin)?,
            Tensor::new(weight.shape().to_vec(), gw)?,
        ));
    }
    for b in 0..n {
        for ch in 0..c {
            let p = b * c + ch;
            let go = &gy[p * out_plane..(p + 1) * out_plane];
            let xi = p * in_plane..(p + 1) * in_plane;
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = (ch * kh + ky) * kw + kx;
                    gw[widx] += tap_weight_grad(go, &x[xi.clone()], &g, ky, kx);
                    tap_backward_input(&mut gin[xi.clone()], go, wd[widx], &g, ky, kx);
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gin)?,
        Tensor::new(weight.shape().to_vec(), gw)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_hand_example() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let y = conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn conv_identity_1x1() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 4, 5], |i| (i as f64 * 0.37).sin());
        let w = Tensor::<f64>::from_fn(&[3, 3, 1, 1], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let y = conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_output_size_with_stride_and_padding() {
        let x = Tensor::<f64>::zeros(&[1, 2, 7, 6]);
        let w = Tensor::<f64>::zeros(&[4, 2, 3, 3]);
        let y = conv2d(&x, &w, 2, 1).unwrap();
        // floor((7 + 2 - 3) / 2) + 1 = 4, floor((6 + 2 - 3) / 2) + 1 = 3
        assert_eq!(y.shape(), &[1, 4, 4, 3]);
    }

    #[test]
    fn conv_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, 1, 1), Err(Error::Shape { .. })));
        assert!(matches!(conv2d(&x, &Tensor::zeros(&[1, 2, 3, 3]), 0, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn depthwise_scales_channels() {
        let x = Tensor::<f64>::from_fn(&[1, 2, 3, 3], |i| i as f64);
        let w = t(&[2, 1, 1, 1], &[2.0, 3.0]);
        let y = depthwise_conv2d(&x, &w, 1, 0).unwrap();
        for (i, (&a, &b)) in y.data().iter().zip(x.data()).enumerate() {
            let s = if i < 9 { 2.0 } else { 3.0 };
            assert_eq!(a, s * b);
        }
    }

    #[test]
    fn depthwise_hand_example() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 1, 2, 2], &[1.0; 4]);
        assert_eq!(depthwise_conv2d(&x, &w, 1, 0).unwrap().data(), &[10.0]);
    }

    #[test]
    fn depthwise_matches_block_diagonal_dense() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 5, 5], |i| ((i * 7 % 11) as f64) - 5.0);
        let wdw = Tensor::<f64>::from_fn(&[3, 1, 3, 3], |i| (i as f64 * 0.3).cos());
        let mut dense = Tensor::<f64>::zeros(&[3, 3, 3, 3]);
        for c in 0..3 {
            for k in 0..9 {
                dense.data_mut()[(c * 3 + c) * 9 + k] = wdw.data()[c * 9 + k];
            }
        }
        for (s, p) in [(1, 1), (2, 1), (1, 0), (2, 2)] {
            let a = depthwise_conv2d(&x, &wdw, s, p).unwrap();
            let b = conv2d(&x, &dense, s, p).unwrap();
            assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, s: usize, p: usize, depthwise: bool) -> Vec<f64> {
        let (n, c, h, wd) = x.dims4("t").unwrap();
        let (o, ci, k, _) = w.dims4("t").unwrap();
        let (oh, ow) = ((h + 2 * p - k) / s + 1, (wd + 2 * p - k) / s + 1);
        let mut out = vec![0.0; n * o * oh * ow];
        for b in 0..n {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ic in 0..ci {
                            let src_c = if depthwise { oc } else { ic };
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((b * c + src_c) * h + iy as usize) * wd + ix as usize];
                                    acc += xv * w.data()[((oc * ci + ic) * k + ky) * k + kx];
                                }
                            }
                        }
                        out[((b * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn stride_one_paths_match_reference_and_finite_differences() {
        for (k, p, depthwise) in [(3, 1, false), (5, 2, false), (3, 1, true), (7, 3, true), (3, 0, true), (3, 2, false)] {
            let c = 3;
            let x = Tensor::<f64>::from_fn(&[2, c, 5, 6], |i| ((i * 13 % 17) as f64 * 0.21).sin());
            let wshape = if depthwise { [c, 1, k, k] } else { [4, c, k, k] };
            let w = Tensor::<f64>::from_fn(&wshape, |i| ((i * 5 % 23) as f64 * 0.17).cos());
            let fwd = |x: &Tensor<f64>, w: &Tensor<f64>| {
                if depthwise { depthwise_conv2d(x, w, 1, p) } else { conv2d(x, w, 1, p) }.unwrap()
            };
            let y = fwd(&x, &w);
            for (a, b) in y.data().iter().zip(naive_conv(&x, &w, 1, p, depthwise)) {
                assert!((a - b).abs() < 1e-12, "k={k} p={p}");
            }
            let gy = Tensor::<f64>::from_fn(y.shape(), |i| ((i * 3 % 7) as f64) - 3.0);
            let (gx, gw) = if depthwise {
                depthwise_conv2d_backward(&x, &w, &gy, 1, p)
            } else {
                conv2d_backward(&x, &w, &gy, 1, p)
            }
            .unwrap();
            let loss = |x: &Tensor<f64>, w: &Tensor<f64>| -> f64 {
                fwd(x, w).data().iter().zip(gy.data()).map(|(a, b)| a * b).sum()
            };
            let eps = 1e-6;
            for i in (0..x.data().len()).step_by(7) {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data_mut()[i] += eps;
                xm.data_mut()[i] -= eps;
                let num = (loss(&xp, &w) - loss(&xm, &w)) / (2.0 * eps);
                assert!((num - gx.data()[i]).abs() < 1e-6, "input grad k={k} p={p}");
            }
            for i in 0..w.data().len() {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp.data_mut()[i] += eps;
                wm.data_mut()[i] -= eps;
                let num = (loss(&x, &wp) - loss(&x, &wm)) / (2.0 * eps);
                assert!((num - gw.data()[i]).abs() < 1e-6, "weight grad k={k} p={p}");
            }
        }
    }
}
