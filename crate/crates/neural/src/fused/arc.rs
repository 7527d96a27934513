use crate::graph::SeqLayout;
use crate::tensor::{Scalar, Tensor};

/// Score given to impossible heads; vanishes under softmax.
pub const MASKED_SCORE: f64 = -1e9;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy<T: Scalar>(y: &mut [T], x: &[T], a: T) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn forward<T: Scalar>(
    dep: &Tensor<T>,
    head: &Tensor<T>,
    root: &Tensor<T>,
    layout: &SeqLayout,
) -> Tensor<T> {
    assert_eq!(dep.shape(), head.shape(), "dep and head representations differ in shape");
    assert_eq!(root.shape(), [1, dep.cols()], "root must be [1, d]");
    assert_eq!(dep.rows(), layout.rows(), "rows do not match the layout");
    let ml = layout.max_len;
    let mut out = Tensor::from_vec(dep.rows(), ml + 1, vec![T::of(MASKED_SCORE); dep.rows() * (ml + 1)]);
    for (b, &len) in layout.lengths.iter().enumerate() {
        for i in 0..len {
            let r = layout.row(b, i);
            let d = dep.row(r);
            let o = out.row_mut(r);
            o[0] = dot(d, root.data());
            for j in 0..len {
                o[j + 1] = dot(d, head.row(layout.row(b, j)));
            }
        }
    }
    out
}

pub(crate) fn backward_dep<T: Scalar>(
    head: &Tensor<T>,
    root: &Tensor<T>,
    gy: &[T],
    layout: &SeqLayout,
    dd: &mut [T],
) {
    let (ml, n) = (layout.max_len, head.cols());
    for (b, &len) in layout.lengths.iter().enumerate() {
        for i in 0..len {
            let r = layout.row(b, i);
            let g = &gy[r * (ml + 1)..(r + 1) * (ml + 1)];
            let d = &mut dd[r * n..(r + 1) * n];
            axpy(d, root.data(), g[0]);
            for j in 0..len {
                axpy(d, head.row(layout.row(b, j)), g[j + 1]);
            }
        }
    }
}

pub(crate) fn backward_head<T: Scalar>(dep: &Tensor<T>, gy: &[T], layout: &SeqLayout, dh: &mut [T]) {
    let (ml, n) = (layout.max_len, dep.cols());
    for (b, &len) in layout.lengths.iter().enumerate() {
        for i in 0..len {
            let r = layout.row(b, i);
            for j in 0..len {
                let hr = layout.row(b, j);
                axpy(&mut dh[hr * n..(hr + 1) * n], dep.row(r), gy[r * (ml + 1) + j + 1]);
            }
        }
    }
}

pub(crate) fn backward_root<T: Scalar>(dep: &Tensor<T>, gy: &[T], layout: &SeqLayout, dr: &mut [T]) {
    let ml = layout.max_len;
    for r in layout.valid_rows() {
        axpy(dr, dep.row(r), gy[r * (ml + 1)]);
    }
}

pub(crate) fn row_block_dot<T: Scalar>(t: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let d = g.cols();
    assert_eq!(t.rows(), g.rows(), "row_block_dot rows");
    assert!(d > 0 && t.cols() % d == 0, "t columns must be a multiple of g columns");
    let l = t.cols() / d;
    Tensor::from_fn(t.rows(), l, |i, k| dot(&t.row(i)[k * d..(k + 1) * d], g.row(i)))
}

pub(crate) fn row_block_dot_backward_t<T: Scalar>(g: &Tensor<T>, gy: &[T], dt: &mut [T]) {
    let d = g.cols();
    let w = dt.len() / g.rows().max(1);
    let l = w / d;
    for i in 0..g.rows() {
        for k in 0..l {
            axpy(&mut dt[i * w + k * d..i * w + (k + 1) * d], g.row(i), gy[i * l + k]);
        }
    }
}

pub(crate) fn row_block_dot_backward_g<T: Scalar>(t: &Tensor<T>, gy: &[T], dg: &mut [T]) {
    let w = t.cols();
    let d = dg.len() / t.rows().max(1);
    let l = w / d;
    for i in 0..t.rows() {
        for k in 0..l {
            axpy(&mut dg[i * d..(i + 1) * d], &t.row(i)[k * d..(k + 1) * d], gy[i * l + k]);
        }
    }
}
