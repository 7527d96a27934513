use crate::graph::{sigmoid, SeqLayout};
use crate::tensor::{matmul_into, Layout, Scalar, Tensor};

/// Activations kept for the backward pass: post-nonlinearity gates
/// `[N, 4h]` and cell states `[N, h]`.
pub(crate) struct Saved<T> {
    acts: Vec<T>,
    cells: Vec<T>,
}

fn position(len: usize, step: usize, reverse: bool) -> usize {
    if reverse {
        len - 1 - step
    } else {
        step
    }
}

fn active(layout: &SeqLayout, step: usize) -> Vec<usize> {
    (0..layout.batch()).filter(|&b| layout.lengths[b] > step).collect()
}

pub(crate) fn forward<T: Scalar>(
    gx: &Tensor<T>,
    whh: &Tensor<T>,
    layout: &SeqLayout,
    reverse: bool,
) -> (Tensor<T>, Saved<T>) {
    let h = whh.rows();
    let g4 = 4 * h;
    assert_eq!(whh.cols(), g4, "w_hh must be [h, 4h]");
    assert_eq!(gx.cols(), g4, "gates must have 4h columns");
    assert_eq!(gx.rows(), layout.rows(), "gate rows do not match the layout");
    let n = gx.rows();
    let mut out = Tensor::zeros(n, h);
    let mut acts = vec![T::zero(); n * g4];
    let mut cells = vec![T::zero(); n * h];
    let mut hs = vec![T::zero(); layout.batch() * h];
    let mut cs = vec![T::zero(); layout.batch() * h];
    let mut hprev = Vec::new();
    let mut pre = Vec::new();
    for step in 0..layout.max_len {
        let act = active(layout, step);
        let na = act.len();
        hprev.clear();
        pre.clear();
        for &b in &act {
            hprev.extend_from_slice(&hs[b * h..(b + 1) * h]);
            let row = layout.row(b, position(layout.lengths[b], step, reverse));
            pre.extend_from_slice(gx.row(row));
        }
        matmul_into(na, h, g4, &hprev, Layout::N, whh.data(), Layout::N, T::one(), &mut pre);
        for (k, &b) in act.iter().enumerate() {
            let row = layout.row(b, position(layout.lengths[b], step, reverse));
            let p = &pre[k * g4..(k + 1) * g4];
            let a = &mut acts[row * g4..(row + 1) * g4];
            for j in 0..h {
                a[j] = sigmoid(p[j]);
                a[h + j] = sigmoid(p[h + j]);
                a[2 * h + j] = p[2 * h + j].tanh();
                a[3 * h + j] = sigmoid(p[3 * h + j]);
            }
            let c = &mut cs[b * h..(b + 1) * h];
            let hh = &mut hs[b * h..(b + 1) * h];
            let o = out.row_mut(row);
            for j in 0..h {
                c[j] = a[h + j] * c[j] + a[j] * a[2 * h + j];
                hh[j] = a[3 * h + j] * c[j].tanh();
                o[j] = hh[j];
            }
            cells[row * h..(row + 1) * h].copy_from_slice(c);
        }
    }
    (out, Saved { acts, cells })
}

/// Row holding the previous step's state for sequence `b`, if any.
fn previous_row(layout: &SeqLayout, b: usize, step: usize, reverse: bool) -> Option<usize> {
    (step > 0).then(|| layout.row(b, position(layout.lengths[b], step - 1, reverse)))
}

/// Gradient with respect to the pre-activation gates `[N, 4h]`.
pub(crate) fn backward<T: Scalar>(
    whh: &Tensor<T>,
    out: &Tensor<T>,
    saved: &Saved<T>,
    gy: &[T],
    layout: &SeqLayout,
    reverse: bool,
) -> Vec<T> {
    let h = whh.rows();
    let g4 = 4 * h;
    let n = out.rows();
    let mut dgates = vec![T::zero(); n * g4];
    let mut dh_carry = vec![T::zero(); layout.batch() * h];
    let mut dc_carry = vec![T::zero(); layout.batch() * h];
    let mut dg_act = Vec::new();
    let mut dh_new = Vec::new();
    let one = T::one();
    for step in (0..layout.max_len).rev() {
        let act = active(layout, step);
        dg_act.clear();
        for &b in &act {
            let row = layout.row(b, position(layout.lengths[b], step, reverse));
            let prev = previous_row(layout, b, step, reverse);
            let a = &saved.acts[row * g4..(row + 1) * g4];
            let c = &saved.cells[row * h..(row + 1) * h];
            let dst = &mut dgates[row * g4..(row + 1) * g4];
            for j in 0..h {
                let (i, f, g, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                let c_prev = prev.map_or(T::zero(), |p| saved.cells[p * h + j]);
                let tc = c[j].tanh();
                let dh = gy[row * h + j] + dh_carry[b * h + j];
                let dc = dh * o * (one - tc * tc) + dc_carry[b * h + j];
                dst[j] = dc * g * i * (one - i);
                dst[h + j] = dc * c_prev * f * (one - f);
                dst[2 * h + j] = dc * i * (one - g * g);
                dst[3 * h + j] = dh * tc * o * (one - o);
                dc_carry[b * h + j] = dc * f;
            }
            dg_act.extend_from_slice(dst);
        }
        let na = act.len();
        dh_new.clear();
        dh_new.resize(na * h, T::zero());
        matmul_into(na, g4, h, &dg_act, Layout::N, whh.data(), Layout::T, T::zero(), &mut dh_new);
        for (k, &b) in act.iter().enumerate() {
            dh_carry[b * h..(b + 1) * h].copy_from_slice(&dh_new[k * h..(k + 1) * h]);
        }
    }
    dgates
}

/// `dW_hh += Σ_t h_{t-1}ᵀ · dgates_t` as one product over all rows.
pub(crate) fn accumulate_whh<T: Scalar>(
    out: &Tensor<T>,
    dgates: &[T],
    layout: &SeqLayout,
    reverse: bool,
    h: usize,
    dw: &mut [T],
) {
    let n = out.rows();
    let mut hprev = vec![T::zero(); n * h];
    for (b, &len) in layout.lengths.iter().enumerate() {
        for step in 1..len {
            let row = layout.row(b, position(len, step, reverse));
            let prev = layout.row(b, position(len, step - 1, reverse));
            hprev[row * h..(row + 1) * h].copy_from_slice(out.row(prev));
        }
    }
    matmul_into(h, n, 4 * h, &hprev, Layout::T, dgates, Layout::N, T::one(), dw);
}
