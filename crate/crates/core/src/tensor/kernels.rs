//! Pure numeric kernels behind the recorded tensor ops.
//!
//! Every kernel is a deterministic function of its inputs: parallel paths
//! partition the output so each element is written by exactly one task,
//! which keeps results bit-identical regardless of thread count.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Minimum multiply count before a kernel bothers spawning rayon tasks.
const PAR_WORK: usize = 1 << 16;

/// C[m,n] = op(A) * op(B) where op transposes when the flag is set.
///
/// `a` is stored `[m,k]`, or `[k,m]` when `ta`; `b` is stored `[k,n]`,
/// or `[n,k]` when `tb`.
pub fn gemm<S: Scalar>(
    m: usize,
    n: usize,
    k: usize,
    a: &[S],
    ta: bool,
    b: &[S],
    tb: bool,
) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![S::zero(); m * n];
    let row = |out: &mut [S], i: usize| {
        for l in 0..k {
            let aval = if ta { a[l * m + i] } else { a[i * k + l] };
            if aval == S::zero() {
                continue;
            }
            if tb {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += aval * b[j * k + l];
                }
            } else {
                let brow = &b[l * n..(l + 1) * n];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += aval * bv;
                }
            }
        }
    };
    if m * n * k >= PAR_WORK && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(|(i, out)| row(out, i));
    } else {
        for (i, out) in c.chunks_mut(n).enumerate() {
            row(out, i);
        }
    }
    c
}

/// Batched gemm over `nb` independent matrix pairs laid out contiguously.
pub fn bgemm<S: Scalar>(
    nb: usize,
    m: usize,
    n: usize,
    k: usize,
    a: &[S],
    ta: bool,
    b: &[S],
    tb: bool,
) -> Vec<S> {
    debug_assert_eq!(a.len(), nb * m * k);
    debug_assert_eq!(b.len(), nb * k * n);
    let mut c = vec![S::zero(); nb * m * n];
    let one = |out: &mut [S], i: usize| {
        let block = gemm(m, n, k, &a[i * m * k..(i + 1) * m * k], ta, &b[i * k * n..(i + 1) * k * n], tb);
        out.copy_from_slice(&block);
    };
    if nb * m * n * k >= PAR_WORK && nb > 1 {
        c.par_chunks_mut(m * n).enumerate().for_each(|(i, out)| one(out, i));
    } else {
        for (i, out) in c.chunks_mut(m * n).enumerate() {
            one(out, i);
        }
    }
    c
}

/// Same-padded 1D convolution: y[b,o,t] = bias[o] + sum_{c,j} w[o,c,j] x[b,c,t+j-pad].
pub fn conv1d_fwd<S: Scalar>(
    x: &[S],
    bsz: usize,
    cin: usize,
    t: usize,
    w: &[S],
    cout: usize,
    ksz: usize,
    bias: &[S],
) -> Vec<S> {
    let pad = (ksz - 1) / 2;
    let mut y = vec![S::zero(); bsz * cout * t];
    let sample = |out: &mut [S], b: usize| {
        let xs = &x[b * cin * t..(b + 1) * cin * t];
        for o in 0..cout {
            let ys = &mut out[o * t..(o + 1) * t];
            ys.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..cin {
                let xc = &xs[c * t..(c + 1) * t];
                let wrow = &w[(o * cin + c) * ksz..(o * cin + c + 1) * ksz];
                for (j, &wv) in wrow.iter().enumerate() {
                    if wv == S::zero() {
                        continue;
                    }
                    // t + j - pad must land inside [0, t)
                    let lo = pad.saturating_sub(j);
                    let hi = (t + pad - j).min(t);
                    for ti in lo..hi {
                        ys[ti] += wv * xc[ti + j - pad];
                    }
                }
            }
        }
    };
    if bsz * cout * cin * ksz * t >= PAR_WORK && bsz > 1 {
        y.par_chunks_mut(cout * t).enumerate().for_each(|(b, out)| sample(out, b));
    } else {
        for (b, out) in y.chunks_mut(cout * t).enumerate() {
            sample(out, b);
        }
    }
    y
}

/// Gradient of `conv1d_fwd` w.r.t. its input.
pub fn conv1d_bwd_x<S: Scalar>(
    dy: &[S],
    bsz: usize,
    cin: usize,
    t: usize,
    w: &[S],
    cout: usize,
    ksz: usize,
) -> Vec<S> {
    let pad = (ksz - 1) / 2;
    let mut dx = vec![S::zero(); bsz * cin * t];
    let sample = |out: &mut [S], b: usize| {
        let dys = &dy[b * cout * t..(b + 1) * cout * t];
        for o in 0..cout {
            let dyo = &dys[o * t..(o + 1) * t];
            for c in 0..cin {
                let dxc = &mut out[c * t..(c + 1) * t];
                let wrow = &w[(o * cin + c) * ksz..(o * cin + c + 1) * ksz];
                for (j, &wv) in wrow.iter().enumerate() {
                    if wv == S::zero() {
                        continue;
                    }
                    let lo = pad.saturating_sub(j);
                    let hi = (t + pad - j).min(t);
                    for ti in lo..hi {
                        dxc[ti + j - pad] += wv * dyo[ti];
                    }
                }
            }
        }
    };
    if bsz * cout * cin * ksz * t >= PAR_WORK && bsz > 1 {
        dx.par_chunks_mut(cin * t).enumerate().for_each(|(b, out)| sample(out, b));
    } else {
        for (b, out) in dx.chunks_mut(cin * t).enumerate() {
            sample(out, b);
        }
    }
    dx
}

/// Gradient of `conv1d_fwd` w.r.t. the kernel weights.
pub fn conv1d_bwd_w<S: Scalar>(
    dy: &[S],
    x: &[S],
    bsz: usize,
    cin: usize,
    t: usize,
    cout: usize,
    ksz: usize,
) -> Vec<S> {
    let pad = (ksz - 1) / 2;
    let mut dw = vec![S::zero(); cout * cin * ksz];
    let filt = |out: &mut [S], oc: usize| {
        let (o, c) = (oc / cin, oc % cin);
        for (j, dwj) in out.iter_mut().enumerate() {
            let lo = pad.saturating_sub(j);
            let hi = (t + pad - j).min(t);
            let mut acc = S::zero();
            for b in 0..bsz {
                let dyo = &dy[(b * cout + o) * t..(b * cout + o + 1) * t];
                let xc = &x[(b * cin + c) * t..(b * cin + c + 1) * t];
                for ti in lo..hi {
                    acc += dyo[ti] * xc[ti + j - pad];
                }
            }
            *dwj = acc;
        }
    };
    if bsz * cout * cin * ksz * t >= PAR_WORK && cout * cin > 1 {
        dw.par_chunks_mut(ksz).enumerate().for_each(|(oc, out)| filt(out, oc));
    } else {
        for (oc, out) in dw.chunks_mut(ksz).enumerate() {
            filt(out, oc);
        }
    }
    dw
}

/// Gradient of `conv1d_fwd` w.r.t. the bias.
pub fn conv1d_bwd_b<S: Scalar>(dy: &[S], bsz: usize, cout: usize, t: usize) -> Vec<S> {
    let mut db = vec![S::zero(); cout];
    for b in 0..bsz {
        for (o, dbo) in db.iter_mut().enumerate() {
            let dyo = &dy[(b * cout + o) * t..(b * cout + o + 1) * t];
            for &v in dyo {
                *dbo += v;
            }
        }
    }
    db
}

/// Row-wise softmax with max subtraction, `rows x cols`.
pub fn softmax_rows<S: Scalar>(x: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut y = vec![S::zero(); rows * cols];
    for (xr, yr) in x.chunks(cols).zip(y.chunks_mut(cols)) {
        let mx = xr.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for (yv, &xv) in yr.iter_mut().zip(xr) {
            *yv = (xv - mx).exp();
            sum += *yv;
        }
        for yv in yr.iter_mut() {
            *yv /= sum;
        }
    }
    debug_assert_eq!(y.len(), rows * cols);
    y
}

/// Axis swap of the two middle axes: [n0, n1, n2, n3] -> [n0, n2, n1, n3].
pub fn swap_middle_axes<S: Scalar>(x: &[S], n0: usize, n1: usize, n2: usize, n3: usize) -> Vec<S> {
    let mut y = vec![S::zero(); x.len()];
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let src = ((i0 * n1 + i1) * n2 + i2) * n3;
                let dst = ((i0 * n2 + i2) * n1 + i1) * n3;
                y[dst..dst + n3].copy_from_slice(&x[src..src + n3]);
            }
        }
    }
    y
}
