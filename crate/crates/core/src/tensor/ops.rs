use super::{from_f64, to_f64, Element, Tensor};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

fn leading(shape: &[usize], trailing: usize) -> &[usize] {
    &shape[..shape.len() - trailing]
}

/// Batched matrix product `[.., M, K] x [.., K, N] -> [.., M, N]`.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    matmul_with(Execution::Sequential, a, b)
}

/// [`matmul`] with the batch dimension optionally spread over threads. Each
/// output element is reduced in the same order either way.
pub fn matmul_with<T: Element>(exec: Execution, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() < 2 || b.rank() != a.rank() {
        return Err(Error::Shape(format!("matmul needs equal ranks >= 2, got {:?} x {:?}", a.shape(), b.shape())));
    }
    let r = a.rank();
    let (m, k) = (a.shape()[r - 2], a.shape()[r - 1]);
    let (k2, n) = (b.shape()[r - 2], b.shape()[r - 1]);
    if k != k2 || leading(a.shape(), 2) != leading(b.shape(), 2) {
        return Err(Error::Shape(format!("matmul {:?} x {:?}", a.shape(), b.shape())));
    }
    let mut shape = leading(a.shape(), 2).to_vec();
    shape.extend([m, n]);
    let batch: usize = leading(a.shape(), 2).iter().product();
    let mut out = vec![T::zero(); batch * m * n];
    let (ad, bd) = (a.data(), b.data());
    par::for_each_chunk_mut(exec, &mut out, m * n, |bi, o| {
        let ab = &ad[bi * m * k..(bi + 1) * m * k];
        let bb = &bd[bi * k * n..(bi + 1) * k * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for p in 0..k {
                    acc += to_f64(ab[i * k + p]) * to_f64(bb[p * n + j]);
                }
                o[i * n + j] = from_f64(acc);
            }
        }
    });
    Tensor::new(shape, out)
}

/// Gradients of `matmul(a, b)` given the upstream gradient `g`.
pub fn matmul_backward<T: Element>(a: &Tensor<T>, b: &Tensor<T>, g: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let ga = matmul(g, &b.transpose()?)?;
    let gb = matmul(&a.transpose()?, g)?;
    Ok((ga, gb))
}

#[inline]
fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid<T: Element>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|x| from_f64(sigmoid_scalar(to_f64(x))))
}

/// Gradient through a sigmoid given its *output* and the upstream gradient.
pub fn sigmoid_backward<T: Element>(out: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
    out.zip_map(g, |y, gy| gy * y * (T::one() - y))
}

/// Concatenates along the last axis; all leading dimensions must agree.
pub fn concat_last<T: Element>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
    let lead = leading(first.shape(), 1);
    for p in parts {
        if p.rank() != first.rank() || leading(p.shape(), 1) != lead {
            return Err(Error::Shape(format!("concat {:?} with {:?}", first.shape(), p.shape())));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| *p.shape().last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let rows: usize = lead.iter().product();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (p, &w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(shape, data)
}

/// Inverse of [`concat_last`]: splits the last axis into `sizes`.
pub fn split_last<T: Element>(t: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let c = *t.shape().last().ok_or_else(|| Error::Shape("split of scalar".into()))?;
    if sizes.iter().sum::<usize>() != c {
        return Err(Error::Shape(format!("split {sizes:?} of width {c}")));
    }
    let lead = leading(t.shape(), 1);
    let rows: usize = lead.iter().product();
    let mut outs: Vec<Vec<T>> = sizes.iter().map(|&s| Vec::with_capacity(rows * s)).collect();
    for r in 0..rows {
        let row = &t.data()[r * c..(r + 1) * c];
        let mut at = 0;
        for (o, &s) in outs.iter_mut().zip(sizes) {
            o.extend_from_slice(&row[at..at + s]);
            at += s;
        }
    }
    outs.into_iter()
        .zip(sizes)
        .map(|(d, &s)| {
            let mut shape = lead.to_vec();
            shape.push(s);
            Tensor::new(shape, d)
        })
        .collect()
}

fn conv_dims<T: Element>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let cin = *x.shape().last().ok_or_else(|| Error::Shape("conv of scalar".into()))?;
    if w.rank() != 2 || w.shape()[0] != cin || bias.shape() != [w.shape()[1]] {
        return Err(Error::Shape(format!("conv1x1 x{:?} w{:?} b{:?}", x.shape(), w.shape(), bias.shape())));
    }
    Ok((x.len() / cin, cin, w.shape()[1]))
}

/// Per-pixel affine map over the channel (last) axis: `x · w + bias`.
pub fn conv1x1<T: Element>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    conv1x1_with(Execution::Sequential, x, w, bias)
}

pub fn conv1x1_with<T: Element>(exec: Execution, x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (pixels, cin, cout) = conv_dims(x, w, bias)?;
    let mut out = vec![T::zero(); pixels * cout];
    let (xd, wd, bd) = (x.data(), w.data(), bias.data());
    const ROWS: usize = 256;
    par::for_each_chunk_mut(exec, &mut out, ROWS * cout, |ci, o| {
        for (r, orow) in o.chunks_mut(cout).enumerate() {
            let p = ci * ROWS + r;
            let xr = &xd[p * cin..(p + 1) * cin];
            for (j, ov) in orow.iter_mut().enumerate() {
                let mut acc = to_f64(bd[j]);
                for (i, &xv) in xr.iter().enumerate() {
                    acc += to_f64(xv) * to_f64(wd[i * cout + j]);
                }
                *ov = from_f64(acc);
            }
        }
    });
    let mut shape = leading(x.shape(), 1).to_vec();
    shape.push(cout);
    Tensor::new(shape, out)
}

/// Gradients of [`conv1x1`]: `(d x, d w, d bias)`.
pub fn conv1x1_backward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, g: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let cin = w.shape()[0];
    let cout = w.shape()[1];
    let pixels = x.len() / cin;
    if g.len() != pixels * cout || leading(g.shape(), 1) != leading(x.shape(), 1) {
        return Err(Error::Shape(format!("conv1x1 backward x{:?} g{:?}", x.shape(), g.shape())));
    }
    let (xd, wd, gd) = (x.data(), w.data(), g.data());
    let mut gx = vec![T::zero(); pixels * cin];
    for p in 0..pixels {
        for i in 0..cin {
            let mut acc = 0.0;
            for j in 0..cout {
                acc += to_f64(gd[p * cout + j]) * to_f64(wd[i * cout + j]);
            }
            gx[p * cin + i] = from_f64(acc);
        }
    }
    let mut gw = vec![0.0f64; cin * cout];
    let mut gb = vec![0.0f64; cout];
    for p in 0..pixels {
        for j in 0..cout {
            let gv = to_f64(gd[p * cout + j]);
            gb[j] += gv;
            for i in 0..cin {
                gw[i * cout + j] += to_f64(xd[p * cin + i]) * gv;
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), gx)?,
        Tensor::new(vec![cin, cout], gw.into_iter().map(from_f64).collect())?,
        Tensor::new(vec![cout], gb.into_iter().map(from_f64).collect())?,
    ))
}
