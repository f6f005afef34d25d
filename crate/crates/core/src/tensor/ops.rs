use super::{Scalar, Tensor};
use crate::error::{shape_err, Error, Result};

/// `input [N, I] · weight[O, I]^T + bias[O]`.
pub fn linear<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, i) = input.dims2("linear")?;
    let (o, wi) = weight.dims2("linear")?;
    if wi != i || bias.numel() != o {
        return Err(shape_err(
            "linear",
            format!(
                "input {:?}, weight {:?}, bias {:?}",
                input.shape(),
                weight.shape(),
                bias.shape()
            ),
        ));
    }
    let (x, w, b) = (input.data(), weight.data(), bias.data());
    let mut out = Vec::with_capacity(n * o);
    for r in 0..n {
        let row = &x[r * i..(r + 1) * i];
        for c in 0..o {
            let dot: T = row.iter().zip(&w[c * i..(c + 1) * i]).map(|(&a, &b)| a * b).sum();
            out.push(dot + b[c]);
        }
    }
    let out = Tensor::new(vec![n, o], out)?;
    out.check_finite("linear")?;
    Ok(out)
}

/// Gradients `(input, weight, bias)` of [`linear`].
pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, i) = input.dims2("linear_backward")?;
    let (o, _) = weight.dims2("linear_backward")?;
    if grad_out.shape() != [n, o] {
        return Err(shape_err("linear_backward", "grad_out shape"));
    }
    let (x, w, g) = (input.data(), weight.data(), grad_out.data());
    let mut gin = vec![T::zero(); n * i];
    let mut gw = vec![T::zero(); o * i];
    let mut gb = vec![T::zero(); o];
    for r in 0..n {
        for c in 0..o {
            let gv = g[r * o + c];
            gb[c] += gv;
            for k in 0..i {
                gin[r * i + k] += gv * w[c * i + k];
                gw[c * i + k] += gv * x[r * i + k];
            }
        }
    }
    Ok((
        Tensor::new(vec![n, i], gin)?,
        Tensor::new(vec![o, i], gw)?,
        Tensor::new(vec![o], gb)?,
    ))
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Gradient of [`relu`]; `output` is the forward result.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(shape_err("relu_backward", "shape mismatch"));
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

/// `[N, C, H, W] -> [N, C]` mean over the spatial plane.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("global_avg_pool")?;
    let plane = h * w;
    let inv = T::one() / T::of(plane as f64);
    let data = input
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::new(vec![n, c], data)
}

pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape else {
        return Err(shape_err("global_avg_pool_backward", "input must be rank 4"));
    };
    if grad_out.shape() != [*n, *c] {
        return Err(shape_err("global_avg_pool_backward", "grad_out shape"));
    }
    let plane = h * w;
    let inv = T::one() / T::of(plane as f64);
    let mut data = Vec::with_capacity(n * c * plane);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * inv, plane));
    }
    Tensor::new(input_shape.to_vec(), data)
}

/// Elementwise sum of equally shaped tensors.
pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            "add",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (n, k) = logits.dims2("softmax_cross_entropy")?;
    if labels.len() != n {
        return Err(shape_err(
            "softmax_cross_entropy",
            format!("{n} rows but {} labels", labels.len()),
        ));
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        if label >= k {
            return Err(Error::Parameter(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: T = exps.iter().copied().sum();
        loss += (z.ln() + max - row[label]) * inv_n;
        for (j, &e) in exps.iter().enumerate() {
            let p = e / z;
            let t = if j == label { T::one() } else { T::zero() };
            grad.push((p - t) * inv_n);
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("softmax_cross_entropy".into()));
    }
    Ok((loss, Tensor::new(vec![n, k], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = Tensor::<f64>::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let (l, g) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g.data(), &[-0.5, 0.5]);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::<f64>::zeros(&[1, 2]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[2]),
            Err(Error::Parameter(_))
        ));
        assert!(softmax_cross_entropy(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn relu_values() {
        let x = Tensor::<f32>::new(vec![2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn gap_and_linear_shapes() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 2, 2], |i| i as f64);
        let p = global_avg_pool(&x).unwrap();
        assert_eq!(p.shape(), &[2, 3]);
        assert_eq!(p.data()[0], 1.5);
        let w = Tensor::<f64>::zeros(&[4, 3]);
        let b = Tensor::<f64>::full(&[4], 1.0);
        let y = linear(&p, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.0; 8]);
        assert!(linear(&p, &Tensor::zeros(&[4, 2]), &b).is_err());
    }
}
