//! Recorded tensor operations: forward kernels plus their backward closures.
//!
//! Each op computes its output eagerly, then (only when gradients can flow)
//! records a closure that maps the output adjoint to input-adjoint
//! contributions. Closures read value data from the arena in place and take
//! ownership of the output adjoint, so the hot path never copies tensors.

use rand::Rng;

use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{selu_alpha, selu_scale, Scalar};

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self) -> Result<Tensor<S>> {
        let total: S = self.tape().with_values(|vals| vals[self.id()].data.iter().cloned().sum());
        let rg = self.requires_grad();
        let out = self.tape().push_value(vec![1], vec![total], rg);
        if rg {
            let (xid, oid, n) = (self.id(), out.id(), self.numel());
            self.tape().push_node(
                "sum",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        adj.add_vec(xid, vec![d[0]; n]);
                    }
                }),
            );
        }
        Ok(out)
    }

    fn zip_elementwise(
        &self,
        rhs: &Tensor<S>,
        op_name: &'static str,
        fwd: fn(S, S) -> S,
        bwd: fn(&[S], &[S], &[S], &[S]) -> (Vec<S>, Vec<S>),
    ) -> Result<Tensor<S>> {
        self.check_same_tape(rhs, op_name)?;
        if self.shape() != rhs.shape() {
            return Err(Error::dim(op_name, self.shape(), rhs.shape()));
        }
        let data: Vec<S> = self.tape().with_values(|vals| {
            vals[self.id()]
                .data
                .iter()
                .zip(&vals[rhs.id()].data)
                .map(|(&a, &b)| fwd(a, b))
                .collect()
        });
        let rg = self.requires_grad() || rhs.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (a, b, oid) = (self.id(), rhs.id(), out.id());
            self.tape().push_node(
                op_name,
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let (da, db) = bwd(&d, &vals[a].data, &vals[b].data, &vals[oid].data);
                        adj.add_vec(a, da);
                        adj.add_vec(b, db);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Elementwise addition of same-shape tensors.
    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_elementwise(rhs, "add", |a, b| a + b, |d, _, _, _| (d.to_vec(), d.to_vec()))
    }

    /// Elementwise subtraction.
    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_elementwise(
            rhs,
            "sub",
            |a, b| a - b,
            |d, _, _, _| (d.to_vec(), d.iter().map(|&v| -v).collect()),
        )
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_elementwise(
            rhs,
            "mul",
            |a, b| a * b,
            |d, a, b, _| {
                (
                    d.iter().zip(b).map(|(&dv, &bv)| dv * bv).collect(),
                    d.iter().zip(a).map(|(&dv, &av)| dv * av).collect(),
                )
            },
        )
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, c: f64) -> Result<Tensor<S>> {
        let c = S::from_f64_c(c);
        let data: Vec<S> =
            self.tape().with_values(|vals| vals[self.id()].data.iter().map(|&v| v * c).collect());
        let rg = self.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            self.tape().push_node(
                "scale",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(mut d) = adj.take(oid) {
                        d.iter_mut().for_each(|v| *v *= c);
                        adj.add_vec(xid, d);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Add a constant table, broadcast over leading axes.
    ///
    /// `table` must have the same length as the product of this tensor's
    /// trailing axes; gradients flow only into `self`.
    pub fn add_table(&self, table: &[S]) -> Result<Tensor<S>> {
        let n = self.numel();
        let tl = table.len();
        if tl == 0 || n % tl != 0 {
            return Err(Error::dim("add_table", self.shape(), tl));
        }
        let data: Vec<S> = self.tape().with_values(|vals| {
            vals[self.id()].data.iter().enumerate().map(|(i, &v)| v + table[i % tl]).collect()
        });
        let rg = self.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            self.tape().push_node(
                "add_table",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        adj.add_vec(xid, d);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Add a bias vector over the last axis.
    pub fn add_bias(&self, bias: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_same_tape(bias, "add_bias")?;
        let cols = *self.shape().last().expect("rank >= 1");
        if bias.shape() != [cols] {
            return Err(Error::dim("add_bias", self.shape(), bias.shape()));
        }
        let data: Vec<S> = self.tape().with_values(|vals| {
            let b = &vals[bias.id()].data;
            vals[self.id()].data.iter().enumerate().map(|(i, &v)| v + b[i % cols]).collect()
        });
        let rg = self.requires_grad() || bias.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, bid, oid) = (self.id(), bias.id(), out.id());
            self.tape().push_node(
                "add_bias",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let mut db = vec![S::zero(); cols];
                        for (i, &v) in d.iter().enumerate() {
                            db[i % cols] += v;
                        }
                        adj.add_vec(xid, d);
                        adj.add_vec(bid, db);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Matrix product along the last axis: `[..., m, k] x [k, n] -> [..., m, n]`.
    ///
    /// All leading axes of `self` are treated as stacked rows, so this also
    /// serves as a dense layer applied per position.
    pub fn matmul(&self, w: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_same_tape(w, "matmul")?;
        if self.rank() < 2 || w.rank() != 2 {
            return Err(Error::dim("matmul", self.shape(), w.shape()));
        }
        let k = *self.shape().last().unwrap();
        let (wk, wn) = (w.shape()[0], w.shape()[1]);
        if k != wk {
            return Err(Error::dim("matmul", self.shape(), w.shape()));
        }
        let rows = self.numel() / k;
        let data = self.tape().with_values(|vals| {
            kernels::gemm(rows, wn, k, &vals[self.id()].data, false, &vals[w.id()].data, false)
        });
        let mut out_shape = self.shape().to_vec();
        *out_shape.last_mut().unwrap() = wn;
        let rg = self.requires_grad() || w.requires_grad();
        let out = self.tape().push_value(out_shape, data, rg);
        if rg {
            let (xid, wid, oid) = (self.id(), w.id(), out.id());
            self.tape().push_node(
                "matmul",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let dx = kernels::gemm(rows, k, wn, &d, false, &vals[wid].data, true);
                        adj.add_vec(xid, dx);
                        let dw = kernels::gemm(k, wn, rows, &vals[xid].data, true, &d, false);
                        adj.add_vec(wid, dw);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Batched matrix product with matching leading axes:
    /// `[..., m, k] x [..., k, n] -> [..., m, n]`.
    ///
    /// With `trans_b`, the right operand is `[..., n, k]` and used transposed.
    pub fn bmm(&self, rhs: &Tensor<S>, trans_b: bool) -> Result<Tensor<S>> {
        self.check_same_tape(rhs, "bmm")?;
        let ra = self.rank();
        let rb = rhs.rank();
        if ra < 2 || ra != rb || self.shape()[..ra - 2] != rhs.shape()[..rb - 2] {
            return Err(Error::dim("bmm", self.shape(), rhs.shape()));
        }
        let (m, k) = (self.shape()[ra - 2], self.shape()[ra - 1]);
        let (bk, bn) = if trans_b {
            (rhs.shape()[rb - 1], rhs.shape()[rb - 2])
        } else {
            (rhs.shape()[rb - 2], rhs.shape()[rb - 1])
        };
        if k != bk {
            return Err(Error::dim("bmm", self.shape(), rhs.shape()));
        }
        let nb: usize = self.shape()[..ra - 2].iter().product();
        let data = self.tape().with_values(|vals| {
            kernels::bgemm(nb, m, bn, k, &vals[self.id()].data, false, &vals[rhs.id()].data, trans_b)
        });
        let mut out_shape = self.shape().to_vec();
        out_shape[ra - 2] = m;
        out_shape[ra - 1] = bn;
        let rg = self.requires_grad() || rhs.requires_grad();
        let out = self.tape().push_value(out_shape, data, rg);
        if rg {
            let (aid, bid, oid) = (self.id(), rhs.id(), out.id());
            let n = bn;
            self.tape().push_node(
                "bmm",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let (da, db) = if trans_b {
                            // y = a b^T: da = d b ; db = d^T a
                            let da = kernels::bgemm(nb, m, k, n, &d, false, &vals[bid].data, false);
                            let db = kernels::bgemm(nb, n, k, m, &d, true, &vals[aid].data, false);
                            (da, db)
                        } else {
                            // y = a b: da = d b^T ; db = a^T d
                            let da = kernels::bgemm(nb, m, k, n, &d, false, &vals[bid].data, true);
                            let db = kernels::bgemm(nb, k, n, m, &vals[aid].data, true, &d, false);
                            (da, db)
                        };
                        adj.add_vec(aid, da);
                        adj.add_vec(bid, db);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Same-padded 1D convolution.
    ///
    /// `self` is `[C_in, T]` or `[B, C_in, T]`; `w` is `[C_out, C_in, K]`
    /// with odd `K`; `bias` is `[C_out]`.
    pub fn conv1d(&self, w: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_same_tape(w, "conv1d")?;
        self.check_same_tape(bias, "conv1d")?;
        if w.rank() != 3 {
            return Err(Error::dim("conv1d", self.shape(), w.shape()));
        }
        let (cout, cin, ksz) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if ksz % 2 == 0 {
            return Err(Error::config("kernel_size", format!("must be odd, got {ksz}")));
        }
        if bias.shape() != [cout] {
            return Err(Error::dim("conv1d", w.shape(), bias.shape()));
        }
        let (bsz, xc, t, batched) = match self.rank() {
            2 => (1, self.shape()[0], self.shape()[1], false),
            3 => (self.shape()[0], self.shape()[1], self.shape()[2], true),
            _ => return Err(Error::dim("conv1d", self.shape(), w.shape())),
        };
        if xc != cin {
            return Err(Error::dim("conv1d", self.shape(), w.shape()));
        }
        let data = self.tape().with_values(|vals| {
            kernels::conv1d_fwd(
                &vals[self.id()].data,
                bsz,
                cin,
                t,
                &vals[w.id()].data,
                cout,
                ksz,
                &vals[bias.id()].data,
            )
        });
        let out_shape = if batched { vec![bsz, cout, t] } else { vec![cout, t] };
        let rg = self.requires_grad() || w.requires_grad() || bias.requires_grad();
        let out = self.tape().push_value(out_shape, data, rg);
        if rg {
            let (xid, wid, bid, oid) = (self.id(), w.id(), bias.id(), out.id());
            self.tape().push_node(
                "conv1d",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let dx = kernels::conv1d_bwd_x(&d, bsz, cin, t, &vals[wid].data, cout, ksz);
                        adj.add_vec(xid, dx);
                        let dw = kernels::conv1d_bwd_w(&d, &vals[xid].data, bsz, cin, t, cout, ksz);
                        adj.add_vec(wid, dw);
                        let db = kernels::conv1d_bwd_b(&d, bsz, cout, t);
                        adj.add_vec(bid, db);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// SeLU activation, elementwise.
    pub fn selu(&self) -> Result<Tensor<S>> {
        let alpha = selu_alpha::<S>();
        let lam = selu_scale::<S>();
        let data: Vec<S> = self.tape().with_values(|vals| {
            vals[self.id()]
                .data
                .iter()
                .map(|&x| if x > S::zero() { lam * x } else { lam * alpha * (x.exp() - S::one()) })
                .collect()
        });
        let rg = self.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            self.tape().push_node(
                "selu",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(mut d) = adj.take(oid) {
                        for (dv, &x) in d.iter_mut().zip(&vals[xid].data) {
                            *dv = if x > S::zero() { *dv * lam } else { *dv * lam * alpha * x.exp() };
                        }
                        adj.add_vec(xid, d);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&self) -> Result<Tensor<S>> {
        let cols = *self.shape().last().expect("rank >= 1");
        let rows = self.numel() / cols;
        let data =
            self.tape().with_values(|vals| kernels::softmax_rows(&vals[self.id()].data, rows, cols));
        let rg = self.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            self.tape().push_node(
                "softmax",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let y = &vals[oid].data;
                        let mut dx = vec![S::zero(); rows * cols];
                        for r in 0..rows {
                            let base = r * cols;
                            let mut dot = S::zero();
                            for c in 0..cols {
                                dot += d[base + c] * y[base + c];
                            }
                            for c in 0..cols {
                                dx[base + c] = y[base + c] * (d[base + c] - dot);
                            }
                        }
                        adj.add_vec(xid, dx);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Mean categorical cross-entropy of logits `[B, C]` against class indices.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor<S>> {
        if self.rank() != 2 {
            return Err(Error::dim("cross_entropy", self.shape(), labels.len()));
        }
        let (b, c) = (self.shape()[0], self.shape()[1]);
        if labels.len() != b {
            return Err(Error::dim("cross_entropy", self.shape(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Index { message: format!("label {bad} out of range for {c} classes") });
        }
        let (loss, probs) = self.tape().with_values(|vals| {
            let x = &vals[self.id()].data;
            let mut probs = vec![S::zero(); b * c];
            let mut loss = S::zero();
            for (r, &label) in labels.iter().enumerate() {
                let row = &x[r * c..(r + 1) * c];
                let mx = row.iter().cloned().fold(S::neg_infinity(), S::max);
                let sum: S = row.iter().map(|&v| (v - mx).exp()).sum();
                let lse = mx + sum.ln();
                for (j, &v) in row.iter().enumerate() {
                    probs[r * c + j] = (v - lse).exp();
                }
                loss += lse - row[label];
            }
            (loss / S::from_f64_c(b as f64), probs)
        });
        let rg = self.requires_grad();
        let out = self.tape().push_value(vec![1], vec![loss], rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            let labels = labels.to_vec();
            let inv_b = S::from_f64_c(1.0 / b as f64);
            self.tape().push_node(
                "cross_entropy",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let scale = d[0] * inv_b;
                        let mut dx = probs.clone();
                        for (r, &label) in labels.iter().enumerate() {
                            dx[r * c + label] -= S::one();
                        }
                        dx.iter_mut().for_each(|v| *v *= scale);
                        adj.add_vec(xid, dx);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Inverted dropout: keeps each element with probability `1 - rate`,
    /// scaling kept values by `1/(1 - rate)`. Train-mode only; callers skip
    /// this op entirely in eval or deterministic passes.
    pub fn dropout<R: Rng>(&self, rate: f64, rng: &mut R) -> Result<Tensor<S>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config("dropout", format!("rate must be in [0,1), got {rate}")));
        }
        if rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 - rate;
        let inv = S::from_f64_c(1.0 / keep);
        let mask: Vec<S> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < keep { inv } else { S::zero() })
            .collect();
        let data: Vec<S> = self.tape().with_values(|vals| {
            vals[self.id()].data.iter().zip(&mask).map(|(&x, &m)| x * m).collect()
        });
        let rg = self.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            self.tape().push_node(
                "dropout",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(mut d) = adj.take(oid) {
                        for (dv, &m) in d.iter_mut().zip(&mask) {
                            *dv *= m;
                        }
                        adj.add_vec(xid, d);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// View with a new shape of equal element count.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<S>> {
        if numel(new_shape) != self.numel() || new_shape.contains(&0) || new_shape.is_empty() {
            return Err(Error::dim("reshape", self.shape(), new_shape));
        }
        let data = self.tape().with_values(|vals| vals[self.id()].data.clone());
        let rg = self.requires_grad();
        let out = self.tape().push_value(new_shape.to_vec(), data, rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            self.tape().push_node(
                "reshape",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        adj.add_vec(xid, d);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Swap axes 1 and 2 of a rank-3 or rank-4 tensor.
    pub fn swap_axes12(&self) -> Result<Tensor<S>> {
        let s = self.shape().to_vec();
        let (n0, n1, n2, n3) = match s.len() {
            3 => (s[0], s[1], s[2], 1),
            4 => (s[0], s[1], s[2], s[3]),
            _ => return Err(Error::dim("swap_axes12", self.shape(), "rank 3 or 4")),
        };
        let data = self
            .tape()
            .with_values(|vals| kernels::swap_middle_axes(&vals[self.id()].data, n0, n1, n2, n3));
        let mut out_shape = s.clone();
        out_shape.swap(1, 2);
        let rg = self.requires_grad();
        let out = self.tape().push_value(out_shape, data, rg);
        if rg {
            let (xid, oid) = (self.id(), out.id());
            self.tape().push_node(
                "swap_axes12",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        adj.add_vec(xid, kernels::swap_middle_axes(&d, n0, n2, n1, n3));
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Slice `len` entries starting at `start` along axis 1.
    pub fn slice_axis1(&self, start: usize, len: usize) -> Result<Tensor<S>> {
        if self.rank() < 2 || start + len > self.shape()[1] || len == 0 {
            return Err(Error::dim("slice_axis1", self.shape(), (start, len)));
        }
        let d0 = self.shape()[0];
        let d1 = self.shape()[1];
        let inner: usize = self.shape()[2..].iter().product();
        let data = self.tape().with_values(|vals| {
            let x = &vals[self.id()].data;
            let mut data = Vec::with_capacity(d0 * len * inner);
            for o in 0..d0 {
                let base = (o * d1 + start) * inner;
                data.extend_from_slice(&x[base..base + len * inner]);
            }
            data
        });
        let mut out_shape = self.shape().to_vec();
        out_shape[1] = len;
        let rg = self.requires_grad();
        let out = self.tape().push_value(out_shape, data, rg);
        if rg {
            let (xid, oid, n) = (self.id(), out.id(), self.numel());
            self.tape().push_node(
                "slice_axis1",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let mut dx = vec![S::zero(); n];
                        for o in 0..d0 {
                            let src = o * len * inner;
                            let dst = (o * d1 + start) * inner;
                            dx[dst..dst + len * inner].copy_from_slice(&d[src..src + len * inner]);
                        }
                        adj.add_vec(xid, dx);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Mean over axis 1: `[d0, d1, rest...] -> [d0, rest...]`.
    pub fn mean_axis1(&self) -> Result<Tensor<S>> {
        if self.rank() < 2 {
            return Err(Error::dim("mean_axis1", self.shape(), "rank >= 2"));
        }
        let d0 = self.shape()[0];
        let d1 = self.shape()[1];
        let inner: usize = self.shape()[2..].iter().product();
        let inv = S::from_f64_c(1.0 / d1 as f64);
        let data = self.tape().with_values(|vals| {
            let x = &vals[self.id()].data;
            let mut data = vec![S::zero(); d0 * inner];
            for o in 0..d0 {
                for l in 0..d1 {
                    let base = (o * d1 + l) * inner;
                    for i in 0..inner {
                        data[o * inner + i] += x[base + i];
                    }
                }
            }
            data.iter_mut().for_each(|v| *v *= inv);
            data
        });
        let mut out_shape = vec![d0];
        out_shape.extend_from_slice(&self.shape()[2..]);
        let rg = self.requires_grad();
        let out = self.tape().push_value(out_shape, data, rg);
        if rg {
            let (xid, oid, n) = (self.id(), out.id(), self.numel());
            self.tape().push_node(
                "mean_axis1",
                oid,
                Box::new(move |_vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let mut dx = vec![S::zero(); n];
                        for o in 0..d0 {
                            for l in 0..d1 {
                                let base = (o * d1 + l) * inner;
                                for i in 0..inner {
                                    dx[base + i] = d[o * inner + i] * inv;
                                }
                            }
                        }
                        adj.add_vec(xid, dx);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Batch normalization over channels of `[B, C, T]` using batch
    /// statistics. Returns the normalized tensor plus the per-channel batch
    /// mean and (biased) variance so the caller can maintain running stats.
    pub fn batchnorm_train(
        &self,
        gamma: &Tensor<S>,
        beta: &Tensor<S>,
        eps: f64,
    ) -> Result<(Tensor<S>, Vec<S>, Vec<S>)> {
        self.check_same_tape(gamma, "batchnorm")?;
        self.check_same_tape(beta, "batchnorm")?;
        if self.rank() != 3 {
            return Err(Error::dim("batchnorm", self.shape(), "rank 3 [B,C,T]"));
        }
        let (b, c, t) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::dim("batchnorm", self.shape(), gamma.shape()));
        }
        let n = b * t;
        let inv_n = S::from_f64_c(1.0 / n as f64);
        let epsv = S::from_f64_c(eps);
        let (data, mean, var, inv_std) = self.tape().with_values(|vals| {
            let x = &vals[self.id()].data;
            let g = &vals[gamma.id()].data;
            let be = &vals[beta.id()].data;
            let mut mean = vec![S::zero(); c];
            for bi in 0..b {
                for ci in 0..c {
                    let row = &x[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                    for &v in row {
                        mean[ci] += v;
                    }
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv_n);
            let mut var = vec![S::zero(); c];
            for bi in 0..b {
                for ci in 0..c {
                    let row = &x[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                    for &v in row {
                        let dv = v - mean[ci];
                        var[ci] += dv * dv;
                    }
                }
            }
            var.iter_mut().for_each(|v| *v *= inv_n);
            let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + epsv).sqrt()).collect();
            let mut data = vec![S::zero(); b * c * t];
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * t;
                    for ti in 0..t {
                        data[base + ti] = g[ci] * (x[base + ti] - mean[ci]) * inv_std[ci] + be[ci];
                    }
                }
            }
            (data, mean, var, inv_std)
        });
        let rg = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, gid, bid, oid) = (self.id(), gamma.id(), beta.id(), out.id());
            let mean_c = mean.clone();
            let inv_std_c = inv_std;
            self.tape().push_node(
                "batchnorm_train",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let x = &vals[xid].data;
                        let g = &vals[gid].data;
                        let mut dgamma = vec![S::zero(); c];
                        let mut dbeta = vec![S::zero(); c];
                        let mut sum_dxh = vec![S::zero(); c];
                        let mut sum_dxh_xh = vec![S::zero(); c];
                        for bi in 0..b {
                            for ci in 0..c {
                                let base = (bi * c + ci) * t;
                                for ti in 0..t {
                                    let xh = (x[base + ti] - mean_c[ci]) * inv_std_c[ci];
                                    let dv = d[base + ti];
                                    dbeta[ci] += dv;
                                    dgamma[ci] += dv * xh;
                                    let dxh = dv * g[ci];
                                    sum_dxh[ci] += dxh;
                                    sum_dxh_xh[ci] += dxh * xh;
                                }
                            }
                        }
                        let mut dx = vec![S::zero(); b * c * t];
                        for bi in 0..b {
                            for ci in 0..c {
                                let base = (bi * c + ci) * t;
                                for ti in 0..t {
                                    let xh = (x[base + ti] - mean_c[ci]) * inv_std_c[ci];
                                    let dxh = d[base + ti] * g[ci];
                                    dx[base + ti] = inv_std_c[ci]
                                        * (dxh - sum_dxh[ci] * inv_n - xh * sum_dxh_xh[ci] * inv_n);
                                }
                            }
                        }
                        adj.add_vec(xid, dx);
                        adj.add_vec(gid, dgamma);
                        adj.add_vec(bid, dbeta);
                    }
                }),
            );
        }
        Ok((out, mean, var))
    }

    /// Batch normalization over channels of `[B, C, T]` using fixed
    /// (running) statistics.
    pub fn batchnorm_eval(
        &self,
        gamma: &Tensor<S>,
        beta: &Tensor<S>,
        running_mean: &[S],
        running_var: &[S],
        eps: f64,
    ) -> Result<Tensor<S>> {
        self.check_same_tape(gamma, "batchnorm")?;
        self.check_same_tape(beta, "batchnorm")?;
        if self.rank() != 3 {
            return Err(Error::dim("batchnorm", self.shape(), "rank 3 [B,C,T]"));
        }
        let (b, c, t) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        if gamma.shape() != [c] || beta.shape() != [c] || running_mean.len() != c || running_var.len() != c {
            return Err(Error::dim("batchnorm", self.shape(), gamma.shape()));
        }
        let epsv = S::from_f64_c(eps);
        let inv_std: Vec<S> = running_var.iter().map(|&v| S::one() / (v + epsv).sqrt()).collect();
        let data = self.tape().with_values(|vals| {
            let x = &vals[self.id()].data;
            let g = &vals[gamma.id()].data;
            let be = &vals[beta.id()].data;
            let mut data = vec![S::zero(); b * c * t];
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * t;
                    for ti in 0..t {
                        data[base + ti] = g[ci] * (x[base + ti] - running_mean[ci]) * inv_std[ci] + be[ci];
                    }
                }
            }
            data
        });
        let rg = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, gid, bid, oid) = (self.id(), gamma.id(), beta.id(), out.id());
            let rmean = running_mean.to_vec();
            let inv_std_c = inv_std;
            self.tape().push_node(
                "batchnorm_eval",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let x = &vals[xid].data;
                        let g = &vals[gid].data;
                        let mut dgamma = vec![S::zero(); c];
                        let mut dbeta = vec![S::zero(); c];
                        let mut dx = vec![S::zero(); b * c * t];
                        for bi in 0..b {
                            for ci in 0..c {
                                let base = (bi * c + ci) * t;
                                for ti in 0..t {
                                    let xh = (x[base + ti] - rmean[ci]) * inv_std_c[ci];
                                    let dv = d[base + ti];
                                    dbeta[ci] += dv;
                                    dgamma[ci] += dv * xh;
                                    dx[base + ti] = dv * g[ci] * inv_std_c[ci];
                                }
                            }
                        }
                        adj.add_vec(xid, dx);
                        adj.add_vec(gid, dgamma);
                        adj.add_vec(bid, dbeta);
                    }
                }),
            );
        }
        Ok(out)
    }

    /// Layer normalization over the last axis with learnable scale and shift.
    pub fn layer_norm(&self, gamma: &Tensor<S>, beta: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
        self.check_same_tape(gamma, "layer_norm")?;
        self.check_same_tape(beta, "layer_norm")?;
        let dsz = *self.shape().last().expect("rank >= 1");
        if gamma.shape() != [dsz] || beta.shape() != [dsz] {
            return Err(Error::dim("layer_norm", self.shape(), gamma.shape()));
        }
        let rows = self.numel() / dsz;
        let epsv = S::from_f64_c(eps);
        let inv_d = S::from_f64_c(1.0 / dsz as f64);
        let (data, mean, inv_std) = self.tape().with_values(|vals| {
            let x = &vals[self.id()].data;
            let g = &vals[gamma.id()].data;
            let be = &vals[beta.id()].data;
            let mut mean = vec![S::zero(); rows];
            let mut inv_std = vec![S::zero(); rows];
            let mut data = vec![S::zero(); rows * dsz];
            for r in 0..rows {
                let row = &x[r * dsz..(r + 1) * dsz];
                let m: S = row.iter().cloned().sum::<S>() * inv_d;
                let v: S = row.iter().map(|&u| (u - m) * (u - m)).sum::<S>() * inv_d;
                let is = S::one() / (v + epsv).sqrt();
                mean[r] = m;
                inv_std[r] = is;
                for j in 0..dsz {
                    data[r * dsz + j] = g[j] * (row[j] - m) * is + be[j];
                }
            }
            (data, mean, inv_std)
        });
        let rg = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        let out = self.tape().push_value(self.shape().to_vec(), data, rg);
        if rg {
            let (xid, gid, bid, oid) = (self.id(), gamma.id(), beta.id(), out.id());
            self.tape().push_node(
                "layer_norm",
                oid,
                Box::new(move |vals, adj| {
                    if let Some(d) = adj.take(oid) {
                        let x = &vals[xid].data;
                        let g = &vals[gid].data;
                        let mut dgamma = vec![S::zero(); dsz];
                        let mut dbeta = vec![S::zero(); dsz];
                        let mut dx = vec![S::zero(); rows * dsz];
                        for r in 0..rows {
                            let base = r * dsz;
                            let mut sum_dxh = S::zero();
                            let mut sum_dxh_xh = S::zero();
                            for j in 0..dsz {
                                let xh = (x[base + j] - mean[r]) * inv_std[r];
                                let dv = d[base + j];
                                dbeta[j] += dv;
                                dgamma[j] += dv * xh;
                                let dxh = dv * g[j];
                                sum_dxh += dxh;
                                sum_dxh_xh += dxh * xh;
                            }
                            for j in 0..dsz {
                                let xh = (x[base + j] - mean[r]) * inv_std[r];
                                let dxh = d[base + j] * g[j];
                                dx[base + j] =
                                    inv_std[r] * (dxh - sum_dxh * inv_d - xh * sum_dxh_xh * inv_d);
                            }
                        }
                        adj.add_vec(xid, dx);
                        adj.add_vec(gid, dgamma);
                        adj.add_vec(bid, dbeta);
                    }
                }),
            );
        }
        Ok(out)
    }
}

/// Concatenate tensors along `axis`; all other axes must agree.
pub fn concat<S: Scalar>(axis: usize, parts: &[Tensor<S>]) -> Result<Tensor<S>> {
    let first = parts.first().ok_or_else(|| Error::Contract {
        message: "concat requires at least one tensor".to_string(),
    })?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::dim("concat", first.shape(), axis));
    }
    let mut sizes = Vec::with_capacity(parts.len());
    for p in parts {
        first.check_same_tape(p, "concat")?;
        if p.rank() != rank
            || p.shape()[..axis] != first.shape()[..axis]
            || p.shape()[axis + 1..] != first.shape()[axis + 1..]
        {
            return Err(Error::dim("concat", first.shape(), p.shape()));
        }
        sizes.push(p.shape()[axis]);
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total: usize = sizes.iter().sum();
    let data = first.tape().with_values(|vals| {
        let mut data = vec![S::zero(); outer * total * inner];
        for o in 0..outer {
            let mut offset = 0usize;
            for (p, &sz) in parts.iter().zip(&sizes) {
                let pd = &vals[p.id()].data;
                let src = o * sz * inner;
                let dst = (o * total + offset) * inner;
                data[dst..dst + sz * inner].copy_from_slice(&pd[src..src + sz * inner]);
                offset += sz;
            }
        }
        data
    });
    let mut out_shape = first.shape().to_vec();
    out_shape[axis] = total;
    let rg = parts.iter().any(Tensor::requires_grad);
    let out = first.tape().push_value(out_shape, data, rg);
    if rg {
        let ids: Vec<usize> = parts.iter().map(Tensor::id).collect();
        let oid = out.id();
        let sizes_c = sizes.clone();
        first.tape().push_node(
            "concat",
            oid,
            Box::new(move |_vals, adj| {
                if let Some(d) = adj.take(oid) {
                    let mut offset = 0usize;
                    for (&pid, &sz) in ids.iter().zip(&sizes_c) {
                        let mut dp = vec![S::zero(); outer * sz * inner];
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * sz * inner;
                            dp[dst..dst + sz * inner].copy_from_slice(&d[src..src + sz * inner]);
                        }
                        adj.add_vec(pid, dp);
                        offset += sz;
                    }
                }
            }),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use super::*;
    use rand::SeedableRng;

    const LN4: f64 = 1.3862943611198906;

    fn tape() -> Tape<f64> {
        Tape::new()
    }

    #[test]
    fn matmul_identity() {
        let t = tape();
        let eye = t.constant(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let m = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap().data(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_zero() {
        let t = tape();
        let eye = t.constant(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let z = t.constant(vec![0.0; 6], &[2, 3]).unwrap();
        assert_eq!(eye.matmul(&z).unwrap().data(), vec![0.0; 6]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let t = tape();
        let a = t.constant(vec![0.0; 6], &[2, 3]).unwrap();
        let b = t.constant(vec![0.0; 8], &[2, 4]).unwrap();
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 4]"), "{err}");
    }

    #[test]
    fn matmul_grad_of_sum_is_row_sums_of_b() {
        // d sum(a b) / d a[i,l] = sum_j b[l,j]
        let t = tape();
        let a = t.leaf(vec![0.5, -1.0, 2.0, 0.0, 1.0, 3.0], &[2, 3], true).unwrap();
        let b = t.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]).unwrap();
        a.matmul(&b).unwrap().sum().unwrap().backward().unwrap();
        let g = a.grad().unwrap();
        assert_eq!(g, vec![3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);
    }

    #[test]
    fn conv1d_spec_examples() {
        let t = tape();
        let x = t.constant(vec![1.0, 2.0, 3.0], &[1, 3]).unwrap();
        let w1 = t.constant(vec![2.0], &[1, 1, 1]).unwrap();
        let b0 = t.constant(vec![0.0], &[1]).unwrap();
        assert_eq!(x.conv1d(&w1, &b0).unwrap().data(), vec![2.0, 4.0, 6.0]);

        let w3 = t.constant(vec![0.0, 1.0, 0.0], &[1, 1, 3]).unwrap();
        assert_eq!(x.conv1d(&w3, &b0).unwrap().data(), vec![1.0, 2.0, 3.0]);

        let wbox = t.constant(vec![1.0, 1.0, 1.0], &[1, 1, 3]).unwrap();
        let b1 = t.constant(vec![1.0], &[1]).unwrap();
        assert_eq!(x.conv1d(&wbox, &b1).unwrap().data(), vec![4.0, 7.0, 6.0]);
    }

    #[test]
    fn conv1d_rejects_even_kernel_and_channel_mismatch() {
        let t = tape();
        let x = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let w_even = t.constant(vec![0.0; 4], &[1, 2, 2]).unwrap();
        let b = t.constant(vec![0.0], &[1]).unwrap();
        assert!(matches!(x.conv1d(&w_even, &b), Err(Error::Config { .. })));
        let w_bad_c = t.constant(vec![0.0; 3], &[1, 3, 1]).unwrap();
        assert!(matches!(x.conv1d(&w_bad_c, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn selu_fixed_points_and_asymptote() {
        let t = tape();
        let x = t.constant(vec![0.0, 1.0, -20.0], &[3]).unwrap();
        let y = x.selu().unwrap().data();
        assert_eq!(y[0], 0.0);
        assert_eq!(y[1], 1.0507009873554805);
        assert!((y[2] - (-1.7580993408473766)).abs() < 1e-7);
    }

    #[test]
    fn softmax_spec_examples() {
        let t = tape();
        let uniform = t.constant(vec![0.0; 4], &[4]).unwrap().softmax().unwrap().data();
        assert!(uniform.iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let spiky = t.constant(vec![1000.0, 0.0, 0.0, 0.0], &[4]).unwrap().softmax().unwrap().data();
        assert!((spiky[0] - 1.0).abs() < 1e-12);
        assert!(spiky[1..].iter().all(|&v| v < 1e-12));

        let logs: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0].iter().map(|v| v.ln()).collect();
        let y = t.constant(logs, &[4]).unwrap().softmax().unwrap().data();
        for (v, e) in y.iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = tape();
        let x = t.constant(vec![3.0, -2.0, 0.5, 999.0, -999.0, 1.0], &[2, 3]).unwrap();
        let y = x.softmax().unwrap().data();
        for row in y.chunks(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_spec_examples() {
        let t = tape();
        let confident = t.constant(vec![10.0, -10.0, -10.0, -10.0], &[1, 4]).unwrap();
        assert!(confident.cross_entropy(&[0]).unwrap().item() < 1e-4);

        let uniform = t.constant(vec![0.0; 4], &[1, 4]).unwrap();
        assert!((uniform.cross_entropy(&[2]).unwrap().item() - LN4).abs() < 1e-12);

        let two = t.constant(vec![0.0; 8], &[2, 4]).unwrap();
        assert!((two.cross_entropy(&[0, 3]).unwrap().item() - LN4).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        let t = tape();
        let x = t.constant(vec![0.0; 4], &[1, 4]).unwrap();
        assert!(matches!(x.cross_entropy(&[4]), Err(Error::Index { .. })));
    }

    #[test]
    fn cross_entropy_gradient_is_probs_minus_onehot_over_batch() {
        let t = tape();
        let x = t.leaf(vec![0.0; 8], &[2, 4], true).unwrap();
        x.cross_entropy(&[0, 3]).unwrap().backward().unwrap();
        let g = x.grad().unwrap();
        let expect = [
            (0.25 - 1.0) / 2.0, 0.125, 0.125, 0.125,
            0.125, 0.125, 0.125, (0.25 - 1.0) / 2.0,
        ];
        for (a, e) in g.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let t = tape();
        let a = t.leaf(vec![1.0, 2.0], &[1, 2], true).unwrap();
        let b = t.leaf(vec![3.0], &[1, 1], true).unwrap();
        let cat = concat(1, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(cat.data(), vec![1.0, 2.0, 3.0]);
        let right = cat.slice_axis1(2, 1).unwrap();
        right.sum().unwrap().backward().unwrap();
        assert_eq!(a.grad_or_zeros(), vec![0.0, 0.0]);
        assert_eq!(b.grad().unwrap(), vec![1.0]);
    }

    #[test]
    fn mean_axis1_of_constant_rows() {
        let t = tape();
        let x = t.constant(vec![2.0, 4.0, 2.0, 4.0, 2.0, 4.0], &[1, 3, 2]).unwrap();
        assert_eq!(x.mean_axis1().unwrap().data(), vec![2.0, 4.0]);
    }

    #[test]
    fn dropout_masks_with_inverted_scaling() {
        let t = tape();
        let x = t.constant(vec![1.0; 1000], &[1000]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let y = x.dropout(0.2, &mut rng).unwrap().data();
        let kept = y.iter().filter(|&&v| v != 0.0).count();
        assert!(y.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        assert!((700..=900).contains(&kept), "kept {kept} of 1000 at rate 0.2");
    }

    #[test]
    fn batchnorm_train_normalizes_per_channel() {
        let t = tape();
        let x = t
            .constant(vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0], &[2, 1, 4])
            .unwrap();
        let g = t.constant(vec![1.0], &[1]).unwrap();
        let b = t.constant(vec![0.0], &[1]).unwrap();
        let (y, mean, var) = x.batchnorm_train(&g, &b, 1e-5).unwrap();
        assert!((mean[0] - 13.75).abs() < 1e-12);
        let yd = y.data();
        let m: f64 = yd.iter().sum::<f64>() / 8.0;
        let v: f64 = yd.iter().map(|&u| (u - m) * (u - m)).sum::<f64>() / 8.0;
        assert!(m.abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-4);
        assert!(var[0] > 0.0);
    }

    #[test]
    fn diamond_reuse_accumulates_through_elementwise_ops() {
        // y = x*x + x : dy/dx = 2x + 1, checks take()-based adjoints under reuse
        let t = tape();
        let x = t.leaf(vec![3.0, -1.5], &[2], true).unwrap();
        let sq = x.mul(&x).unwrap();
        let y = sq.add(&x).unwrap();
        y.sum().unwrap().backward().unwrap();
        let g = x.grad().unwrap();
        assert!((g[0] - 7.0).abs() < 1e-12);
        assert!((g[1] - (-2.0)).abs() < 1e-12);
    }
}
