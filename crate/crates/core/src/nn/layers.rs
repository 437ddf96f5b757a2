use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Parameter, Tensor};
use crate::{Error, Result};

fn shape_err(context: &'static str, detail: alloc::string::String) -> Error {
    Error::Shape { context, detail }
}

/// `y = x W + b` for `x: [batch, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense(x: &Tensor, w: &Parameter, b: &Parameter) -> Result<Tensor> {
    let (batch, n_in) = x.dims2("dense input")?;
    let (w_in, n_out) = w.value.dims2("dense weight")?;
    if w_in != n_in || b.value.shape() != [n_out] {
        return Err(shape_err(
            "dense",
            format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let wv = w.value.data();
    let mut y = Tensor::zeros(&[batch, n_out])?;
    for r in 0..batch {
        let out = y.row_mut(r);
        out.copy_from_slice(b.value.data());
        for (i, &xi) in x.row(r).iter().enumerate() {
            // BOW inputs are mostly zeros.
            if xi == 0.0 {
                continue;
            }
            let w_row = &wv[i * n_out..(i + 1) * n_out];
            for (o, &wij) in out.iter_mut().zip(w_row) {
                *o += xi * wij;
            }
        }
    }
    Ok(y)
}

/// Accumulates `dW += xᵀ dY` and `db += colsum(dY)`; returns `dX = dY Wᵀ`.
pub fn dense_backward(
    x: &Tensor,
    w: &mut Parameter,
    b: &mut Parameter,
    dy: &Tensor,
) -> Result<Tensor> {
    let (batch, n_in) = x.dims2("dense input")?;
    let (_, n_out) = w.value.dims2("dense weight")?;
    if dy.shape() != [batch, n_out] {
        return Err(shape_err(
            "dense backward",
            format!("dY {:?}, expected [{batch}, {n_out}]", dy.shape()),
        ));
    }
    let mut dx = Tensor::zeros(&[batch, n_in])?;
    let wv = w.value.data();
    for r in 0..batch {
        let g = dy.row(r);
        for (db, &gj) in b.grad.data_mut().iter_mut().zip(g) {
            *db += gj;
        }
        let xr = x.row(r);
        let dxr = dx.row_mut(r);
        for i in 0..n_in {
            let w_row = &wv[i * n_out..(i + 1) * n_out];
            dxr[i] = w_row.iter().zip(g).map(|(a, b)| a * b).sum();
        }
        let dw = w.grad.data_mut();
        for (i, &xi) in xr.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (d, &gj) in dw[i * n_out..(i + 1) * n_out].iter_mut().zip(g) {
                *d += xi * gj;
            }
        }
    }
    Ok(dx)
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// Passes `dy` where `x > 0`; the gradient at exactly 0 is 0.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if x.shape() != dy.shape() {
        return Err(shape_err(
            "relu backward",
            format!("x {:?} vs dY {:?}", x.shape(), dy.shape()),
        ));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xi, &g)| if xi > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Gathers rows of `E: [V, dim]`.
pub fn embed_lookup(ids: &[usize], e: &Parameter) -> Result<Tensor> {
    let (vocab, dim) = e.value.dims2("embedding table")?;
    if ids.is_empty() {
        return Err(Error::EmptyInput("token id sequence"));
    }
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id >= vocab {
            return Err(Error::IndexOutOfRange {
                what: "token id",
                index: id,
                bound: vocab,
            });
        }
        out.extend_from_slice(e.value.row(id));
    }
    Tensor::from_vec(&[ids.len(), dim], out)
}

/// Scatter-adds `dy: [len, dim]` into the rows of `E.grad`.
pub fn embed_backward(ids: &[usize], e: &mut Parameter, dy: &Tensor) -> Result<()> {
    let (vocab, dim) = e.value.dims2("embedding table")?;
    if dy.shape() != [ids.len(), dim] {
        return Err(shape_err(
            "embedding backward",
            format!("dY {:?}, expected [{}, {dim}]", dy.shape(), ids.len()),
        ));
    }
    for (t, &id) in ids.iter().enumerate() {
        if id >= vocab {
            return Err(Error::IndexOutOfRange {
                what: "token id",
                index: id,
                bound: vocab,
            });
        }
        for (g, &d) in e.grad.row_mut(id).iter_mut().zip(dy.row(t)) {
            *g += d;
        }
    }
    Ok(())
}

/// Result of [`conv1d_maxpool`], keeping what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvPool {
    /// `[maps]`: ReLU of each map's maximum pre-activation.
    pub output: Tensor,
    /// Leftmost position of each map's maximum.
    pub argmax: Vec<usize>,
    /// Each map's maximum pre-activation.
    pub max_preact: Vec<f64>,
    /// Number of convolution positions.
    pub positions: usize,
}

fn conv_dims(x: &Tensor, f: &Parameter, b: &Parameter) -> Result<(usize, usize, usize, usize)> {
    let (len, dim) = x.dims2("conv input")?;
    let &[width, f_dim, maps] = f.shape() else {
        return Err(shape_err(
            "conv filters",
            format!("expected [width, dim, maps], got {:?}", f.shape()),
        ));
    };
    if width == 0 || maps == 0 {
        return Err(Error::InvalidArgument(format!(
            "conv width and maps must be positive, got {width} and {maps}"
        )));
    }
    if f_dim != dim || b.shape() != [maps] {
        return Err(shape_err(
            "conv",
            format!("x {:?}, F {:?}, b {:?}", x.shape(), f.shape(), b.shape()),
        ));
    }
    Ok((len, dim, width, maps))
}

/// Valid 1-d convolution over `x: [len, dim]` with filters
/// `F: [width, dim, maps]`, then ReLU and max over time per map.
///
/// Inputs shorter than `width` are treated as right-padded with zero rows.
pub fn conv1d_maxpool(x: &Tensor, f: &Parameter, b: &Parameter) -> Result<ConvPool> {
    let (len, dim, width, maps) = conv_dims(x, f, b)?;
    let positions = len.max(width) - width + 1;
    let fv = f.value.data();
    let mut acc = vec![0.0; maps];
    let mut best = vec![f64::NEG_INFINITY; maps];
    let mut argmax = vec![0; maps];
    for t in 0..positions {
        acc.copy_from_slice(b.value.data());
        for k in 0..width {
            let row = t + k;
            if row >= len {
                break;
            }
            for (e, &xv) in x.row(row).iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let taps = &fv[(k * dim + e) * maps..(k * dim + e + 1) * maps];
                for (a, &w) in acc.iter_mut().zip(taps) {
                    *a += xv * w;
                }
            }
        }
        for j in 0..maps {
            // Strict comparison keeps the leftmost maximum.
            if acc[j] > best[j] {
                best[j] = acc[j];
                argmax[j] = t;
            }
        }
    }
    let output = best
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect();
    Ok(ConvPool {
        output: Tensor::from_vec(&[maps], output)?,
        argmax,
        max_preact: best,
        positions,
    })
}

/// Routes `dy: [maps]` through each map's argmax window only. Returns
/// `dX: [len, dim]`.
pub fn conv1d_maxpool_backward(
    x: &Tensor,
    f: &mut Parameter,
    b: &mut Parameter,
    pool: &ConvPool,
    dy: &[f64],
) -> Result<Tensor> {
    let (len, dim, width, maps) = conv_dims(x, f, b)?;
    if dy.len() != maps || pool.argmax.len() != maps {
        return Err(shape_err(
            "conv backward",
            format!("dY has {} entries for {maps} maps", dy.len()),
        ));
    }
    let mut dx = Tensor::zeros(&[len, dim])?;
    let fv = f.value.data();
    let fg = f.grad.data_mut();
    let bg = b.grad.data_mut();
    for j in 0..maps {
        let g = dy[j];
        if pool.max_preact[j] <= 0.0 || g == 0.0 {
            continue;
        }
        bg[j] += g;
        let t = pool.argmax[j];
        for k in 0..width {
            let row = t + k;
            if row >= len {
                break;
            }
            let xr = x.row(row);
            let dxr = dx.row_mut(row);
            for e in 0..dim {
                let at = (k * dim + e) * maps + j;
                fg[at] += g * xr[e];
                dxr[e] += g * fv[at];
            }
        }
    }
    Ok(dx)
}

/// Row-wise softmax with mean cross-entropy against integer `labels`.
/// Returns `(loss, probabilities)`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, k) = logits.dims2("logits")?;
    if labels.len() != batch {
        return Err(Error::DimensionMismatch {
            expected: batch,
            found: labels.len(),
        });
    }
    let mut probs = logits.clone();
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::IndexOutOfRange {
                what: "class label",
                index: label,
                bound: k,
            });
        }
        let row = probs.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        let shifted_label = logits.row(r)[label] - max;
        total += libm::log(sum) - shifted_label;
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok((total / batch as f64, probs))
}

/// Gradient of the mean loss: `(p - onehot) / batch`.
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (batch, k) = probs.dims2("probabilities")?;
    if labels.len() != batch {
        return Err(Error::DimensionMismatch {
            expected: batch,
            found: labels.len(),
        });
    }
    let mut d = probs.clone();
    let scale = 1.0 / batch as f64;
    for (r, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::IndexOutOfRange {
                what: "class label",
                index: label,
                bound: k,
            });
        }
        let row = d.row_mut(r);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(d)
}

/// Identity on the way forward; multiplies the gradient by `-lambda` on the
/// way back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::NegativeLambda(lambda));
        }
        Ok(GradientReversal { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    pub fn backward(&self, dy: &Tensor) -> Tensor {
        let mut dx = dy.clone();
        self.backward_in_place(dx.data_mut());
        dx
    }

    pub fn backward_in_place(&self, dy: &mut [f64]) {
        for g in dy {
            *g = -(self.lambda * *g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::numeric_gradient;
    use crate::rng;
    use alloc::string::ToString;
    use rand::Rng as _;

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::stream(seed, 100, 0);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn param(name: &str, shape: &[usize], seed: u64) -> Parameter {
        Parameter::new(name, random_tensor(shape, seed))
    }

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
    }

    fn max_rel(a: &[f64], n: &[f64]) -> f64 {
        a.iter()
            .zip(n)
            .map(|(&x, &y)| rel_err(x, y))
            .fold(0.0, f64::max)
    }

    #[test]
    fn dense_examples() {
        let x = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
        let w = Parameter::new("w", Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
        let b = Parameter::zeros("b", &[2]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[1.0, 2.0]);

        let x = Tensor::from_rows(&[&[1.0, 1.0]]).unwrap();
        let w = Parameter::new("w", Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 3.0]]).unwrap());
        let b = Parameter::new("b", Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap());
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[3.0, 4.0]);

        let bad = Parameter::zeros("w", &[3, 2]).unwrap();
        assert!(dense(&x, &bad, &b).is_err());
    }

    /// Scalar objective `sum(c ⊙ dense(x))` so every output coordinate
    /// matters.
    #[test]
    fn dense_backward_matches_finite_differences() {
        let x = random_tensor(&[3, 4], 1);
        let mut w = param("w", &[4, 5], 2);
        let mut b = param("b", &[5], 3);
        let c = random_tensor(&[3, 5], 4);
        let obj = |x: &Tensor, w: &Parameter, b: &Parameter| -> f64 {
            let y = dense(x, w, b).unwrap();
            y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
        };
        let dx = dense_backward(&x, &mut w, &mut b, &c).unwrap();

        let n_w = numeric_gradient(w.value.data(), 1e-5, |v| {
            let w2 = Parameter::new("w", Tensor::from_vec(&[4, 5], v.to_vec()).unwrap());
            obj(&x, &w2, &b)
        });
        let n_b = numeric_gradient(b.value.data(), 1e-5, |v| {
            let b2 = Parameter::new("b", Tensor::from_vec(&[5], v.to_vec()).unwrap());
            obj(&x, &w, &b2)
        });
        let n_x = numeric_gradient(x.data(), 1e-5, |v| {
            obj(&Tensor::from_vec(&[3, 4], v.to_vec()).unwrap(), &w, &b)
        });
        assert!(max_rel(w.grad.data(), &n_w) < 1e-6);
        assert!(max_rel(b.grad.data(), &n_b) < 1e-6);
        assert!(max_rel(dx.data(), &n_x) < 1e-6);
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let up = Tensor::from_vec(&[3], vec![1.0; 3]).unwrap();
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_backward_matches_finite_differences_away_from_kink() {
        let x = Tensor::from_vec(&[6], vec![-1.3, -0.2, 0.01, 0.4, 1.7, -0.05]).unwrap();
        let c = random_tensor(&[6], 9);
        let analytic = relu_backward(&x, &c).unwrap();
        let numeric = numeric_gradient(x.data(), 1e-5, |v| {
            let y = relu(&Tensor::from_vec(&[6], v.to_vec()).unwrap());
            y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
        });
        assert!(max_rel(analytic.data(), &numeric) < 1e-6);
    }

    #[test]
    fn embedding_examples() {
        let mut e = param("E", &[4, 3], 5);
        e.value.row_mut(0).fill(0.0);
        assert_eq!(embed_lookup(&[0], &e).unwrap().data(), &[0.0; 3]);

        let twice = embed_lookup(&[2, 2], &e).unwrap();
        assert_eq!(twice.row(0), e.value.row(2));
        assert_eq!(twice.row(1), e.value.row(2));
        let ones = Tensor::from_vec(&[2, 3], vec![1.0; 6]).unwrap();
        embed_backward(&[2, 2], &mut e, &ones).unwrap();
        assert_eq!(e.grad.row(2), &[2.0; 3]);
        assert_eq!(e.grad.row(1), &[0.0; 3]);

        assert!(matches!(
            embed_lookup(&[5], &e),
            Err(Error::IndexOutOfRange {
                index: 5,
                bound: 4,
                ..
            })
        ));
    }

    #[test]
    fn conv_output_lengths() {
        let x = random_tensor(&[50, 3], 1);
        let f = param("F", &[3, 3, 128], 2);
        let b = param("b", &[128], 3);
        let pool = conv1d_maxpool(&x, &f, &b).unwrap();
        assert_eq!(pool.positions, 48);
        assert_eq!(pool.output.shape(), &[128]);
    }

    #[test]
    fn conv_hand_example() {
        let x = Tensor::from_vec(&[3, 1], vec![3.0, -1.0, 7.0]).unwrap();
        let f = Parameter::new("F", Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap());
        let b = Parameter::zeros("b", &[1]).unwrap();
        let pool = conv1d_maxpool(&x, &f, &b).unwrap();
        assert_eq!(pool.output.data(), &[7.0]);
        assert_eq!(pool.argmax, vec![2]);
    }

    #[test]
    fn conv_pads_short_inputs_and_breaks_ties_left() {
        let x = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let f = Parameter::new(
            "F",
            Tensor::from_vec(&[3, 1, 1], vec![1.0, 1.0, 1.0]).unwrap(),
        );
        let b = Parameter::zeros("b", &[1]).unwrap();
        let pool = conv1d_maxpool(&x, &f, &b).unwrap();
        assert_eq!(pool.positions, 1);
        assert_eq!(pool.output.data(), &[2.0]);

        let x = Tensor::from_vec(&[4, 1], vec![5.0, 1.0, 5.0, 0.0]).unwrap();
        let f = Parameter::new("F", Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap());
        let mut b = Parameter::zeros("b", &[1]).unwrap();
        let mut f = f;
        let pool = conv1d_maxpool(&x, &f, &b).unwrap();
        assert_eq!(pool.argmax, vec![0]);
        let dx = conv1d_maxpool_backward(&x, &mut f, &mut b, &pool, &[1.0]).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);

        let bad = Parameter::zeros("F", &[1, 2, 1]).unwrap();
        assert!(conv1d_maxpool(&x, &bad, &b).is_err());
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let x = random_tensor(&[6, 4], 11);
        let mut f = param("F", &[2, 4, 3], 12);
        // Shifted so every map is active at the test point.
        let mut b = Parameter::new(
            "b",
            Tensor::from_vec(
                &[3],
                random_tensor(&[3], 13)
                    .data()
                    .iter()
                    .map(|v| v + 1.5)
                    .collect(),
            )
            .unwrap(),
        );
        let c = random_tensor(&[3], 14);
        let obj = |x: &Tensor, f: &Parameter, b: &Parameter| -> f64 {
            let p = conv1d_maxpool(x, f, b).unwrap();
            p.output
                .data()
                .iter()
                .zip(c.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let pool = conv1d_maxpool(&x, &f, &b).unwrap();
        assert!(
            pool.max_preact.iter().all(|&v| v > 1e-3),
            "test point sits on a kink"
        );
        let dx = conv1d_maxpool_backward(&x, &mut f, &mut b, &pool, c.data()).unwrap();
        let n_f = numeric_gradient(f.value.data(), 1e-5, |v| {
            let f2 = Parameter::new("F", Tensor::from_vec(&[2, 4, 3], v.to_vec()).unwrap());
            obj(&x, &f2, &b)
        });
        let n_b = numeric_gradient(b.value.data(), 1e-5, |v| {
            let b2 = Parameter::new("b", Tensor::from_vec(&[3], v.to_vec()).unwrap());
            obj(&x, &f, &b2)
        });
        let n_x = numeric_gradient(x.data(), 1e-5, |v| {
            obj(&Tensor::from_vec(&[6, 4], v.to_vec()).unwrap(), &f, &b)
        });
        assert!(max_rel(f.grad.data(), &n_f) < 1e-5);
        assert!(max_rel(b.grad.data(), &n_b) < 1e-5);
        assert!(max_rel(dx.data(), &n_x) < 1e-5);
    }

    #[test]
    fn softmax_examples() {
        let (loss, p) =
            softmax_cross_entropy(&Tensor::from_rows(&[&[0.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(p.data(), &[0.5, 0.5]);

        let (loss, p) =
            softmax_cross_entropy(&Tensor::from_rows(&[&[100.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert!(loss.is_finite() && loss < 1e-10);
        assert!(p.all_finite());

        let err = softmax_cross_entropy(&Tensor::from_rows(&[&[1.0, 2.0]]).unwrap(), &[2]);
        assert!(err.is_err());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let logits = random_tensor(&[2, 3], 21);
        let labels = [2, 0];
        let (_, p) = softmax_cross_entropy(&logits, &labels).unwrap();
        let analytic = softmax_cross_entropy_backward(&p, &labels).unwrap();
        let numeric = numeric_gradient(logits.data(), 1e-5, |v| {
            softmax_cross_entropy(&Tensor::from_vec(&[2, 3], v.to_vec()).unwrap(), &labels)
                .unwrap()
                .0
        });
        assert!(max_rel(analytic.data(), &numeric) < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let logits = random_tensor(&[4, 5], 31);
        let labels = [0, 4, 2, 1];
        let (loss, p) = softmax_cross_entropy(&logits, &labels).unwrap();
        for r in 0..4 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut shifted = logits.clone();
        for v in shifted.row_mut(1) {
            *v += 37.5;
        }
        let (loss2, _) = softmax_cross_entropy(&shifted, &labels).unwrap();
        assert!((loss - loss2).abs() < 1e-9);
    }

    #[test]
    fn gradient_reversal_contract() {
        let grl = GradientReversal::new(1.0).unwrap();
        let x = Tensor::from_vec(&[2], vec![1.5, -2.0]).unwrap();
        let y = grl.forward(&x);
        assert!(y
            .data()
            .iter()
            .zip(x.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        let up = Tensor::from_vec(&[2], vec![1.0, -4.0]).unwrap();
        assert_eq!(grl.backward(&up).data(), &[-1.0, 4.0]);

        let zero = GradientReversal::new(0.0).unwrap();
        assert!(zero.backward(&up).data().iter().all(|&g| g == 0.0));

        let err = GradientReversal::new(-0.5).unwrap_err();
        assert!(err.to_string().contains("non-negative"));
        assert!(GradientReversal::new(f64::NAN).is_err());
    }

    #[test]
    fn double_reversal_is_plain_path() {
        let grl = GradientReversal::new(1.0).unwrap();
        let up = random_tensor(&[7], 41);
        let twice = grl.backward(&grl.backward(&up));
        assert_eq!(twice, up);
    }
}
