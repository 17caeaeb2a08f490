use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Right-aligned broadcast of two shapes.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` laid out against `out`, zero on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let o = i + rank - shape.len();
        strides[o] = if shape[i] == 1 && out[o] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visits every output position with the matching input offsets.
fn for_each_offset(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ao, mut bo) = (0usize, 0usize);
    for o in 0..numel(out) {
        f(o, ao, bo);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ao += sa[d];
            bo += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ao -= sa[d] * out[d];
            bo -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        }
    }

    /// Partial derivatives with respect to (x, y).
    fn partials(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            BinOp::Add => (1.0, 1.0),
            BinOp::Sub => (1.0, -1.0),
            BinOp::Mul => (y, x),
            BinOp::Div => (1.0 / y, -x / (y * y)),
        }
    }
}

impl Tensor {
    fn binary(&self, other: &Tensor, op: BinOp) -> Result<Tensor> {
        let out_shape =
            broadcast_shape(self.shape(), other.shape()).ok_or_else(|| Error::Dimension {
                op: op.name(),
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            })?;
        let sa = broadcast_strides(self.shape(), &out_shape);
        let sb = broadcast_strides(other.shape(), &out_shape);
        let mut out = vec![0.0; numel(&out_shape)];
        {
            let (a, b) = (self.data(), other.data());
            if self.shape() == other.shape() {
                for ((o, x), y) in out.iter_mut().zip(a.iter()).zip(b.iter()) {
                    *o = op.apply(*x, *y);
                }
            } else {
                for_each_offset(&out_shape, &sa, &sb, |o, ao, bo| {
                    out[o] = op.apply(a[ao], b[bo]);
                });
            }
        }
        let (lhs, rhs) = (self.clone(), other.clone());
        let shape = out_shape.clone();
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let (a, b) = (lhs.data(), rhs.data());
                let mut ga = lhs.requires_grad().then(|| vec![0.0; a.len()]);
                let mut gb = rhs.requires_grad().then(|| vec![0.0; b.len()]);
                for_each_offset(&shape, &sa, &sb, |o, ao, bo| {
                    let (da, db) = op.partials(a[ao], b[bo]);
                    if let Some(ga) = ga.as_mut() {
                        ga[ao] += g[o] * da;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[bo] += g[o] * db;
                    }
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Elementwise sum with NumPy-style broadcasting.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinOp::Div)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x * factor).collect();
        Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.iter().map(|v| v * factor).collect())]),
        )
    }

    pub fn add_scalar(&self, value: f64) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x + value).collect();
        Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        )
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![total],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    /// Batched matrix product `[.., M, K] x [.., K, P] -> [.., M, P]`;
    /// leading extents broadcast.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let mismatch = || Error::Dimension {
            op: "matmul",
            lhs: self.shape().to_vec(),
            rhs: other.shape().to_vec(),
        };
        let (ra, rb) = (self.rank(), other.rank());
        if ra < 2 || rb < 2 {
            return Err(mismatch());
        }
        let (m, k) = (self.shape()[ra - 2], self.shape()[ra - 1]);
        let (k2, p) = (other.shape()[rb - 2], other.shape()[rb - 1]);
        if k != k2 {
            return Err(mismatch());
        }
        let batch_a = &self.shape()[..ra - 2];
        let batch_b = &other.shape()[..rb - 2];
        let batch = broadcast_shape(batch_a, batch_b).ok_or_else(mismatch)?;
        let sa: Vec<usize> = broadcast_strides(batch_a, &batch)
            .iter()
            .map(|s| s * m * k)
            .collect();
        let sb: Vec<usize> = broadcast_strides(batch_b, &batch)
            .iter()
            .map(|s| s * k * p)
            .collect();
        let mut out_shape = batch.clone();
        out_shape.extend([m, p]);
        let mut out = vec![0.0; numel(&out_shape)];
        {
            let (a, b) = (self.data(), other.data());
            for_each_offset(&batch, &sa, &sb, |bi, ao, bo| {
                let c = &mut out[bi * m * p..(bi + 1) * m * p];
                for i in 0..m {
                    let row = &mut c[i * p..(i + 1) * p];
                    for kk in 0..k {
                        let av = a[ao + i * k + kk];
                        if av == 0.0 {
                            continue;
                        }
                        let brow = &b[bo + kk * p..bo + (kk + 1) * p];
                        for (r, bv) in row.iter_mut().zip(brow) {
                            *r += av * bv;
                        }
                    }
                }
            });
        }
        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let (a, b) = (lhs.data(), rhs.data());
                let mut ga = lhs.requires_grad().then(|| vec![0.0; a.len()]);
                let mut gb = rhs.requires_grad().then(|| vec![0.0; b.len()]);
                for_each_offset(&batch, &sa, &sb, |bi, ao, bo| {
                    let gc = &g[bi * m * p..(bi + 1) * m * p];
                    // dA = dC B^T
                    if let Some(ga) = ga.as_mut() {
                        for i in 0..m {
                            let grow = &gc[i * p..(i + 1) * p];
                            for kk in 0..k {
                                let brow = &b[bo + kk * p..bo + (kk + 1) * p];
                                let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                                ga[ao + i * k + kk] += dot;
                            }
                        }
                    }
                    // dB = A^T dC
                    if let Some(gb) = gb.as_mut() {
                        for i in 0..m {
                            let grow = &gc[i * p..(i + 1) * p];
                            for kk in 0..k {
                                let av = a[ao + i * k + kk];
                                if av == 0.0 {
                                    continue;
                                }
                                let dst = &mut gb[bo + kk * p..bo + (kk + 1) * p];
                                for (d, gv) in dst.iter_mut().zip(grow) {
                                    *d += av * gv;
                                }
                            }
                        }
                    }
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank {
            return Err(Error::shape("permute", format!("{axes:?} for rank {rank}")));
        }
        for &a in axes {
            if a >= rank || seen[a] {
                return Err(Error::shape("permute", format!("{axes:?} for rank {rank}")));
            }
            seen[a] = true;
        }
        let in_strides = row_major_strides(self.shape());
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let zero = vec![0; rank];
        let mut out = vec![0.0; self.numel()];
        {
            let x = self.data();
            for_each_offset(&out_shape, &strides, &zero, |o, xo, _| out[o] = x[xo]);
        }
        let n = self.numel();
        let shape = out_shape.clone();
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; n];
                for_each_offset(&shape, &strides, &zero, |o, xo, _| gx[xo] = g[o]);
                vec![Some(gx)]
            }),
        ))
    }

    /// Swaps the last two axes.
    pub fn t(&self) -> Result<Tensor> {
        let rank = self.rank();
        if rank < 2 {
            return Err(Error::shape("t", format!("rank {rank}")));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(&axes)
    }

    pub(crate) fn split_at_axis(&self, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.rank() {
            return Err(Error::Axis {
                axis,
                rank: self.rank(),
            });
        }
        let s = self.shape();
        Ok((numel(&s[..axis]), s[axis], numel(&s[axis + 1..])))
    }

    /// Contiguous slice `start..start + len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let (outer, extent, inner) = self.split_at_axis(axis)?;
        if len == 0 || start + len > extent {
            return Err(Error::shape(
                "narrow",
                format!("{start}..{} of extent {extent}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        {
            let x = self.data();
            for o in 0..outer {
                let base = (o * extent + start) * inner;
                out.extend_from_slice(&x[base..base + len * inner]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let n = self.numel();
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; n];
                for o in 0..outer {
                    let base = (o * extent + start) * inner;
                    gx[base..base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let (outer, _, inner) = first.split_at_axis(axis)?;
        let mut extents = Vec::with_capacity(parts.len());
        for p in parts {
            let same_rank = p.rank() == first.rank();
            let compatible = same_rank
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            extents.push(p.shape()[axis]);
        }
        let total: usize = extents.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&extents) {
                let x = p.data();
                out.extend_from_slice(&x[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            out,
            shape,
            parts.to_vec(),
            Box::new(move |g| {
                let mut grads: Vec<Vec<f64>> =
                    extents.iter().map(|&e| Vec::with_capacity(outer * e * inner)).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (gp, &e) in grads.iter_mut().zip(&extents) {
                        gp.extend_from_slice(&g[pos..pos + e * inner]);
                        pos += e * inner;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        ))
    }

    /// Gathers slices along axis 0. Repeated indices accumulate gradient.
    pub fn index_select(&self, indices: &[usize]) -> Result<Tensor> {
        let rows = self.shape()[0];
        if indices.is_empty() {
            return Err(Error::shape("index_select", "empty index list"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(
                "index_select",
                format!("index {bad} out of range for extent {rows}"),
            ));
        }
        let row = self.numel() / rows;
        let mut out = Vec::with_capacity(indices.len() * row);
        {
            let x = self.data();
            for &i in indices {
                out.extend_from_slice(&x[i * row..(i + 1) * row]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[0] = indices.len();
        let n = self.numel();
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; n];
                for (j, &i) in idx.iter().enumerate() {
                    for (d, s) in gx[i * row..(i + 1) * row]
                        .iter_mut()
                        .zip(&g[j * row..(j + 1) * row])
                    {
                        *d += s;
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let i = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let b = t(&[3.0, 4.0, 5.0, 6.0], &[2, 2]);
        assert_eq!(i.matmul(&b).unwrap().to_vec(), vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_two_by_two() {
        let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = t(&[5.0, 6.0, 7.0, 8.0], &[2, 2]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_broadcasts_batch() {
        let a = Tensor::ones(&[3, 2, 4]);
        let b = Tensor::ones(&[4, 5]).reshape(&[1, 4, 5]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[3, 2, 5]);
        assert!(c.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn matmul_sum_grad_is_ones_times_bt() {
        let a = Tensor::param(vec![0.5, -1.0, 2.0, 0.0, 1.5, 3.0], &[2, 3]).unwrap();
        let b = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]);
        a.matmul(&b).unwrap().sum().backward().unwrap();
        // row sums of B, repeated for each row of A
        assert_eq!(a.grad().unwrap(), vec![3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);
    }

    #[test]
    fn broadcast_add_bias() {
        let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = Tensor::param(vec![10.0, 20.0, 30.0], &[3]).unwrap();
        let y = x.add(&b).unwrap();
        assert_eq!(y.to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        y.sum().backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn incompatible_broadcast() {
        let err = Tensor::zeros(&[2, 3]).add(&Tensor::zeros(&[2])).unwrap_err();
        assert!(matches!(err, Error::Dimension { op: "add", .. }));
    }

    #[test]
    fn permute_roundtrip() {
        let x = t(&(0..24).map(f64::from).collect::<Vec<_>>(), &[2, 3, 4]);
        let y = x.permute(&[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 2, 3]);
        // y[i,j,k] = x[j,k,i]
        assert_eq!(y.data()[6 + 3 + 2], x.data()[12 + 2 * 4 + 1]);
        let back = y.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.to_vec(), x.to_vec());
    }

    #[test]
    fn narrow_and_concat_invert() {
        let x = t(&(0..12).map(f64::from).collect::<Vec<_>>(), &[3, 4]);
        let a = x.narrow(1, 0, 1).unwrap();
        let b = x.narrow(1, 1, 3).unwrap();
        let y = Tensor::concat(&[a, b], 1).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
        assert!(x.narrow(1, 2, 3).is_err());
        assert!(x.narrow(2, 0, 1).is_err());
    }

    #[test]
    fn index_select_accumulates() {
        let x = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let y = x.index_select(&[1, 1, 0]).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert!(x.index_select(&[2]).is_err());
    }
}
