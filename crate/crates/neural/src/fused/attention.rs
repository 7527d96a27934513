use crate::graph::SeqLayout;
use crate::tensor::{Scalar, Tensor};

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Number of keys visible from query `t` of a sequence of length `len`.
fn visible(t: usize, len: usize, causal: bool) -> usize {
    if causal {
        t + 1
    } else {
        len
    }
}

pub(crate) fn forward<T: Scalar>(
    qkv: &Tensor<T>,
    layout: &SeqLayout,
    heads: usize,
    causal: bool,
) -> (Tensor<T>, Vec<T>) {
    let d = qkv.cols() / 3;
    assert_eq!(qkv.cols(), 3 * d, "qkv must have 3·d columns");
    assert!(heads > 0 && d % heads == 0, "heads must divide the model size");
    assert_eq!(qkv.rows(), layout.rows(), "qkv rows do not match the layout");
    let dh = d / heads;
    let ml = layout.max_len;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut out = Tensor::zeros(qkv.rows(), d);
    let mut probs = vec![T::zero(); layout.batch() * heads * ml * ml];
    for (b, &len) in layout.lengths.iter().enumerate() {
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for t in 0..len {
                let limit = visible(t, len, causal);
                let base = ((b * heads + h) * ml + t) * ml;
                let p = &mut probs[base..base + limit];
                let q = &qkv.row(layout.row(b, t))[qo..qo + dh];
                let mut max = T::neg_infinity();
                for (s, ps) in p.iter_mut().enumerate() {
                    *ps = dot(q, &qkv.row(layout.row(b, s))[ko..ko + dh]) * scale;
                    max = max.max(*ps);
                }
                let mut z = T::zero();
                for ps in p.iter_mut() {
                    *ps = (*ps - max).exp();
                    z += *ps;
                }
                for ps in p.iter_mut() {
                    *ps = *ps / z;
                }
                let o = &mut out.row_mut(layout.row(b, t))[qo..qo + dh];
                for (s, &ps) in p.iter().enumerate() {
                    let v = &qkv.row(layout.row(b, s))[vo..vo + dh];
                    for (oi, &vi) in o.iter_mut().zip(v) {
                        *oi += ps * vi;
                    }
                }
            }
        }
    }
    (out, probs)
}

pub(crate) fn backward<T: Scalar>(
    qkv: &Tensor<T>,
    probs: &[T],
    gy: &[T],
    layout: &SeqLayout,
    heads: usize,
    causal: bool,
    dqkv: &mut [T],
) {
    let d = qkv.cols() / 3;
    let dh = d / heads;
    let ml = layout.max_len;
    let w = 3 * d;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let mut dp = vec![T::zero(); ml];
    for (b, &len) in layout.lengths.iter().enumerate() {
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for t in 0..len {
                let limit = visible(t, len, causal);
                let base = ((b * heads + h) * ml + t) * ml;
                let p = &probs[base..base + limit];
                let rt = layout.row(b, t);
                let go = &gy[rt * d + qo..rt * d + qo + dh];
                let mut weighted = T::zero();
                for s in 0..limit {
                    let rs = layout.row(b, s);
                    dp[s] = dot(go, &qkv.row(rs)[vo..vo + dh]);
                    weighted += p[s] * dp[s];
                    let dv = &mut dqkv[rs * w + vo..rs * w + vo + dh];
                    for (dvi, &gi) in dv.iter_mut().zip(go) {
                        *dvi += p[s] * gi;
                    }
                }
                for s in 0..limit {
                    let ds = p[s] * (dp[s] - weighted) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let rs = layout.row(b, s);
                    for k in 0..dh {
                        let kq = qkv.get(rs, ko + k);
                        let qk = qkv.get(rt, qo + k);
                        dqkv[rt * w + qo + k] += ds * kq;
                        dqkv[rs * w + ko + k] += ds * qk;
                    }
                }
            }
        }
    }
}
