use super::ops::{softmax_backward_row, softmax_in_place};
use super::tensor::{dot, gemm, gemm_nt};
use super::{NnError, Tensor};

/// Borrowed projection weights of one multi-head attention block.
#[derive(Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a Tensor,
    pub wk: &'a Tensor,
    pub bk: &'a Tensor,
    pub wv: &'a Tensor,
    pub bv: &'a Tensor,
    pub wo: &'a Tensor,
    pub bo: &'a Tensor,
}

/// Query/key pairs excluded from attention. Blocked pairs receive a `-inf` logit.
#[derive(Clone, Debug)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    blocked: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            blocked: vec![false; rows * cols],
        }
    }

    /// Each query sees itself and earlier keys only.
    pub fn causal(n: usize) -> Self {
        let mut m = Self::new(n, n);
        for i in 0..n {
            for j in i + 1..n {
                m.block(i, j);
            }
        }
        m
    }

    pub fn block(&mut self, query: usize, key: usize) {
        self.blocked[query * self.cols + key] = true;
    }

    pub fn is_blocked(&self, query: usize, key: usize) -> bool {
        self.blocked[query * self.cols + key]
    }
}

/// Standard scaled dot-product attention over `n_heads` heads followed by the
/// output projection.
pub fn multi_head_attention(
    xq: &Tensor,
    xk: &Tensor,
    xv: &Tensor,
    weights: &AttentionWeights<'_>,
    n_heads: usize,
    mask: Option<&AttentionMask>,
) -> Result<Tensor, NnError> {
    let layout = BlockLayout::whole(xq.rows(), xk.rows());
    Ok(attention_forward(xq, xk, xv, weights, n_heads, mask, layout)?.0)
}

/// Partition of queries and keys into independent attention groups of equal
/// size: queries in group `g` only see keys in group `g`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BlockLayout {
    pub block_q: usize,
    pub block_k: usize,
}

impl BlockLayout {
    pub fn whole(lq: usize, lk: usize) -> Self {
        Self {
            block_q: lq,
            block_k: lk,
        }
    }

    pub fn square(block: usize) -> Self {
        Self {
            block_q: block,
            block_k: block,
        }
    }
}

pub(crate) struct AttentionCache {
    xq: Tensor,
    xk: Tensor,
    xv: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    concat: Tensor,
    probs: Vec<f64>,
    n_heads: usize,
    layout: BlockLayout,
}

impl AttentionCache {
    /// Attention weights of `head` within `block`, row-major `block_q × block_k`.
    pub fn probs(&self, block: usize, head: usize) -> &[f64] {
        let size = self.layout.block_q * self.layout.block_k;
        let start = (block * self.n_heads + head) * size;
        &self.probs[start..start + size]
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }
}

pub(crate) fn attention_forward(
    xq: &Tensor,
    xk: &Tensor,
    xv: &Tensor,
    w: &AttentionWeights<'_>,
    n_heads: usize,
    mask: Option<&AttentionMask>,
    layout: BlockLayout,
) -> Result<(Tensor, AttentionCache), NnError> {
    let d = w.wq.cols();
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(NnError::HeadCount { width: d, heads: n_heads });
    }
    if xk.rows() != xv.rows() {
        return Err(NnError::Shape(format!(
            "keys have {} rows but values have {}",
            xk.rows(),
            xv.rows()
        )));
    }
    let (bq, bk) = (layout.block_q, layout.block_k);
    if bq == 0 || bk == 0 || !xq.rows().is_multiple_of(bq) || !xk.rows().is_multiple_of(bk) || xq.rows() / bq != xk.rows() / bk {
        return Err(NnError::Shape(format!(
            "cannot split {}/{} rows into blocks of {bq}/{bk}",
            xq.rows(),
            xk.rows()
        )));
    }
    if let Some(m) = mask {
        if m.rows != bq || m.cols != bk {
            return Err(NnError::Shape(format!(
                "mask {}×{} does not match attention {bq}×{bk}",
                m.rows, m.cols
            )));
        }
    }
    let q = super::ops::linear(xq, w.wq, w.bq)?;
    let k = super::ops::linear(xk, w.wk, w.bk)?;
    let v = super::ops::linear(xv, w.wv, w.bv)?;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let n_blocks = xq.rows() / bq;
    let mut probs = vec![0.0; n_blocks * n_heads * bq * bk];
    let mut concat = Tensor::zeros(&[xq.rows(), d]);

    let mut qh = vec![0.0; bq * dh];
    let mut kh = vec![0.0; bk * dh];
    let mut vh = vec![0.0; bk * dh];
    let mut oh = vec![0.0; bq * dh];
    for blk in 0..n_blocks {
        for h in 0..n_heads {
            gather(&q, blk * bq, bq, h * dh, dh, &mut qh);
            gather(&k, blk * bk, bk, h * dh, dh, &mut kh);
            gather(&v, blk * bk, bk, h * dh, dh, &mut vh);
            let p = &mut probs[(blk * n_heads + h) * bq * bk..(blk * n_heads + h + 1) * bq * bk];
            for i in 0..bq {
                let row = &mut p[i * bk..(i + 1) * bk];
                for (j, s) in row.iter_mut().enumerate() {
                    *s = if mask.is_some_and(|m| m.is_blocked(i, j)) {
                        f64::NEG_INFINITY
                    } else {
                        dot(&qh[i * dh..(i + 1) * dh], &kh[j * dh..(j + 1) * dh]) * scale
                    };
                }
                softmax_in_place(row);
            }
            oh.iter_mut().for_each(|x| *x = 0.0);
            gemm(p, &vh, &mut oh, bq, bk, dh);
            scatter(&mut concat, blk * bq, bq, h * dh, dh, &oh);
        }
    }
    let out = super::ops::linear(&concat, w.wo, w.bo)?;
    Ok((
        out,
        AttentionCache {
            xq: xq.clone(),
            xk: xk.clone(),
            xv: xv.clone(),
            q,
            k,
            v,
            concat,
            probs,
            n_heads,
            layout,
        },
    ))
}

pub(crate) struct AttentionGrads {
    pub dxq: Tensor,
    pub dxk: Tensor,
    pub dxv: Tensor,
    pub dwq: Tensor,
    pub dbq: Tensor,
    pub dwk: Tensor,
    pub dbk: Tensor,
    pub dwv: Tensor,
    pub dbv: Tensor,
    pub dwo: Tensor,
    pub dbo: Tensor,
}

pub(crate) fn attention_backward(
    cache: &AttentionCache,
    w: &AttentionWeights<'_>,
    dy: &Tensor,
) -> Result<AttentionGrads, NnError> {
    let out_grads = super::ops::linear_backward(&cache.concat, w.wo, dy)?;
    let dconcat = out_grads.dx;
    let d = w.wq.cols();
    let n_heads = cache.n_heads;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (bq, bk) = (cache.layout.block_q, cache.layout.block_k);
    let n_blocks = cache.q.rows() / bq;

    let mut dq = Tensor::zeros(cache.q.shape());
    let mut dk = Tensor::zeros(cache.k.shape());
    let mut dv = Tensor::zeros(cache.v.shape());
    let mut qh = vec![0.0; bq * dh];
    let mut kh = vec![0.0; bk * dh];
    let mut vh = vec![0.0; bk * dh];
    let mut doh = vec![0.0; bq * dh];
    let mut ds = vec![0.0; bq * bk];
    let mut dqh = vec![0.0; bq * dh];
    let mut dkh = vec![0.0; bk * dh];
    let mut dvh = vec![0.0; bk * dh];
    for blk in 0..n_blocks {
        for h in 0..n_heads {
            gather(&cache.q, blk * bq, bq, h * dh, dh, &mut qh);
            gather(&cache.k, blk * bk, bk, h * dh, dh, &mut kh);
            gather(&cache.v, blk * bk, bk, h * dh, dh, &mut vh);
            gather(&dconcat, blk * bq, bq, h * dh, dh, &mut doh);
            let p = cache.probs(blk, h);

            // dP = dO·Vᵀ, then through the softmax
            ds.iter_mut().for_each(|x| *x = 0.0);
            gemm_nt(&doh, &vh, &mut ds, bq, dh, bk);
            for i in 0..bq {
                softmax_backward_row(&p[i * bk..(i + 1) * bk], &mut ds[i * bk..(i + 1) * bk]);
            }
            ds.iter_mut().for_each(|x| *x *= scale);

            // dV = Pᵀ·dO
            dvh.iter_mut().for_each(|x| *x = 0.0);
            super::tensor::gemm_tn(p, &doh, &mut dvh, bq, bk, dh);
            // dQ = dS·K, dK = dSᵀ·Q
            dqh.iter_mut().for_each(|x| *x = 0.0);
            gemm(&ds, &kh, &mut dqh, bq, bk, dh);
            dkh.iter_mut().for_each(|x| *x = 0.0);
            super::tensor::gemm_tn(&ds, &qh, &mut dkh, bq, bk, dh);

            scatter_add(&mut dq, blk * bq, bq, h * dh, dh, &dqh);
            scatter_add(&mut dk, blk * bk, bk, h * dh, dh, &dkh);
            scatter_add(&mut dv, blk * bk, bk, h * dh, dh, &dvh);
        }
    }
    let gq = super::ops::linear_backward(&cache.xq, w.wq, &dq)?;
    let gk = super::ops::linear_backward(&cache.xk, w.wk, &dk)?;
    let gv = super::ops::linear_backward(&cache.xv, w.wv, &dv)?;
    Ok(AttentionGrads {
        dxq: gq.dx,
        dxk: gk.dx,
        dxv: gv.dx,
        dwq: gq.dw,
        dbq: gq.db,
        dwk: gk.dw,
        dbk: gk.db,
        dwv: gv.dw,
        dbv: gv.db,
        dwo: out_grads.dw,
        dbo: out_grads.db,
    })
}

fn gather(src: &Tensor, row0: usize, rows: usize, col0: usize, width: usize, dst: &mut [f64]) {
    for r in 0..rows {
        dst[r * width..(r + 1) * width].copy_from_slice(&src.row(row0 + r)[col0..col0 + width]);
    }
}

fn scatter(dst: &mut Tensor, row0: usize, rows: usize, col0: usize, width: usize, src: &[f64]) {
    for r in 0..rows {
        dst.row_mut(row0 + r)[col0..col0 + width].copy_from_slice(&src[r * width..(r + 1) * width]);
    }
}

fn scatter_add(dst: &mut Tensor, row0: usize, rows: usize, col0: usize, width: usize, src: &[f64]) {
    for r in 0..rows {
        for (o, s) in dst.row_mut(row0 + r)[col0..col0 + width]
            .iter_mut()
            .zip(&src[r * width..(r + 1) * width])
        {
            *o += s;
        }
    }
}
