//! Dense layer primitives with explicit reverse-mode passes.
//!
//! Every op returns the cache its backward pass needs. Gradients here are
//! exact; the training module cross-checks them against central finite
//! differences.

use ndarray::{s, Array1, Array2, Axis};

pub const LN_EPS: f64 = 1e-5;
/// Additive score for masked attention keys; effectively minus infinity.
pub const MASK_SCORE: f64 = -1e30;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Smooth GELU (tanh form), elementwise.
pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn gelu_fwd(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(gelu)
}

pub fn gelu_bwd(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = x.mapv(gelu_grad);
    dx *= dy;
    dx
}

/// `y = x . w + b`, with `b` shaped `[1, out]`.
pub fn linear_fwd(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x.dot(w) + b
}

/// Returns `(dx, dw, db)`.
pub fn linear_bwd(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let dx = dy.dot(&w.t());
    let dw = x.t().dot(dy);
    let db = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    (dx, dw, db)
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Array2<f64>,
    pub rstd: Array1<f64>,
}

/// Row-wise layer norm with learned gain/bias (`[1, d]` each).
pub fn layernorm_fwd(
    x: &Array2<f64>,
    g: &Array2<f64>,
    b: &Array2<f64>,
) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mean = x.mean_axis(Axis(1)).unwrap();
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mu = mean[i];
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        row.mapv_inplace(|v| (v - mu) * r);
    }
    let y = &xhat * g + b;
    (y, LayerNormCache { xhat, rstd })
}

/// Returns `(dx, dg, db)`.
pub fn layernorm_bwd(
    cache: &LayerNormCache,
    g: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let d = dy.ncols() as f64;
    let dg = (dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let db = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let xh = cache.xhat.row(i);
        let dxh = dxhat.row(i);
        let mean_dxh = dxh.sum() / d;
        let mean_dxh_xh = dxh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        let r = cache.rstd[i];
        for j in 0..dy.ncols() {
            dx[[i, j]] = r * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
        }
    }
    (dx, dg, db)
}

/// Row-wise stable softmax in place.
pub fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward of a row-wise softmax: `dx = (dp - <dp, p>) * p` per row.
pub fn softmax_rows_bwd(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(p.raw_dim());
    for i in 0..p.nrows() {
        let dot: f64 = p.row(i).iter().zip(dp.row(i).iter()).map(|(a, b)| a * b).sum();
        for j in 0..p.ncols() {
            dx[[i, j]] = (dp[[i, j]] - dot) * p[[i, j]];
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub input: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Per-head attention weights, each `[n, n]`, rows stochastic over
    /// unmasked key columns.
    pub probs: Vec<Array2<f64>>,
    pub ctx: Array2<f64>,
}

pub struct AttentionWeights<'a> {
    pub wq: &'a Array2<f64>,
    pub bq: &'a Array2<f64>,
    pub wk: &'a Array2<f64>,
    pub bk: &'a Array2<f64>,
    pub wv: &'a Array2<f64>,
    pub bv: &'a Array2<f64>,
    pub wo: &'a Array2<f64>,
    pub bo: &'a Array2<f64>,
}

/// Multi-head self-attention. Masked key columns receive an effectively
/// minus-infinite score, so no token attends to them.
pub fn attention_fwd(
    input: &Array2<f64>,
    w: &AttentionWeights,
    n_heads: usize,
    key_mask: &[bool],
) -> (Array2<f64>, AttentionCache) {
    let n = input.nrows();
    let d = input.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = linear_fwd(input, w.wq, w.bq);
    let k = linear_fwd(input, w.wk, w.bk);
    let v = linear_fwd(input, w.wv, w.bv);
    let mut ctx = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut scores = qh.dot(&kh.t());
        scores *= scale;
        for (j, keep) in key_mask.iter().enumerate() {
            if !keep {
                scores.column_mut(j).fill(MASK_SCORE);
            }
        }
        softmax_rows(&mut scores);
        let ctx_h = scores.dot(&vh);
        ctx.slice_mut(cols).assign(&ctx_h);
        probs.push(scores);
    }
    let out = linear_fwd(&ctx, w.wo, w.bo);
    let cache = AttentionCache {
        input: input.clone(),
        q,
        k,
        v,
        probs,
        ctx,
    };
    (out, cache)
}

pub struct AttentionGrads {
    pub dinput: Array2<f64>,
    pub dwq: Array2<f64>,
    pub dbq: Array2<f64>,
    pub dwk: Array2<f64>,
    pub dbk: Array2<f64>,
    pub dwv: Array2<f64>,
    pub dbv: Array2<f64>,
    pub dwo: Array2<f64>,
    pub dbo: Array2<f64>,
}

pub fn attention_bwd(
    cache: &AttentionCache,
    w: &AttentionWeights,
    n_heads: usize,
    dy: &Array2<f64>,
) -> AttentionGrads {
    let d = cache.input.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (dctx, dwo, dbo) = linear_bwd(&cache.ctx, w.wo, dy);
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let qh = cache.q.slice(cols);
        let kh = cache.k.slice(cols);
        let vh = cache.v.slice(cols);
        let p = &cache.probs[h];
        let dctx_h = dctx.slice(cols);
        let dp = dctx_h.dot(&vh.t());
        let dvh = p.t().dot(&dctx_h);
        let dscores = softmax_rows_bwd(p, &dp);
        let dqh = dscores.dot(&kh).mapv(|x| x * scale);
        let dkh = dscores.t().dot(&qh).mapv(|x| x * scale);
        dq.slice_mut(cols).assign(&dqh);
        dk.slice_mut(cols).assign(&dkh);
        dv.slice_mut(cols).assign(&dvh);
    }
    let (dx_q, dwq, dbq) = linear_bwd(&cache.input, w.wq, &dq);
    let (dx_k, dwk, dbk) = linear_bwd(&cache.input, w.wk, &dk);
    let (dx_v, dwv, dbv) = linear_bwd(&cache.input, w.wv, &dv);
    AttentionGrads {
        dinput: dx_q + dx_k + dx_v,
        dwq,
        dbq,
        dwk,
        dbk,
        dwv,
        dbv,
        dwo,
        dbo,
    }
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    /// im2col matrix, `[out_len, kernel * in]`.
    pub cols: Array2<f64>,
    pub in_len: usize,
    pub in_dim: usize,
    pub stride: usize,
    pub pad_left: usize,
}

pub const CONV_KERNEL: usize = 3;

/// 1-D convolution over time with kernel 3 and "same" padding:
/// `out_len = ceil(in_len / stride)`. The weight is laid out im2col style,
/// `[3 * in, out]`.
pub fn conv1d_fwd(
    x: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array2<f64>,
    stride: usize,
) -> (Array2<f64>, Conv1dCache) {
    let n = x.nrows();
    let in_dim = x.ncols();
    let out_len = n.div_ceil(stride);
    let pad_total = ((out_len - 1) * stride + CONV_KERNEL).saturating_sub(n);
    let pad_left = pad_total / 2;
    let mut cols = Array2::zeros((out_len, CONV_KERNEL * in_dim));
    for t in 0..out_len {
        for j in 0..CONV_KERNEL {
            let src = (t * stride + j) as isize - pad_left as isize;
            if src >= 0 && (src as usize) < n {
                cols.slice_mut(s![t, j * in_dim..(j + 1) * in_dim])
                    .assign(&x.row(src as usize));
            }
        }
    }
    let y = cols.dot(w) + b;
    let cache = Conv1dCache {
        cols,
        in_len: n,
        in_dim,
        stride,
        pad_left,
    };
    (y, cache)
}

/// Returns `(dx, dw, db)`.
pub fn conv1d_bwd(
    cache: &Conv1dCache,
    w: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let dw = cache.cols.t().dot(dy);
    let db = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dcols = dy.dot(&w.t());
    let mut dx = Array2::zeros((cache.in_len, cache.in_dim));
    for t in 0..dy.nrows() {
        for j in 0..CONV_KERNEL {
            let src = (t * cache.stride + j) as isize - cache.pad_left as isize;
            if src >= 0 && (src as usize) < cache.in_len {
                let mut row = dx.row_mut(src as usize);
                row += &dcols.slice(s![t, j * cache.in_dim..(j + 1) * cache.in_dim]);
            }
        }
    }
    (dx, dw, db)
}

/// Mean over unmasked rows; at least one row must be unmasked.
pub fn masked_mean_fwd(x: &Array2<f64>, mask: &[bool]) -> Array2<f64> {
    let count = mask.iter().filter(|m| **m).count().max(1) as f64;
    let mut sum = Array2::zeros((1, x.ncols()));
    for (i, keep) in mask.iter().enumerate() {
        if *keep {
            let mut row = sum.row_mut(0);
            row += &x.row(i);
        }
    }
    sum / count
}

pub fn masked_mean_bwd(dpooled: &Array2<f64>, mask: &[bool], n_rows: usize) -> Array2<f64> {
    let count = mask.iter().filter(|m| **m).count().max(1) as f64;
    let mut dx = Array2::zeros((n_rows, dpooled.ncols()));
    for (i, keep) in mask.iter().enumerate() {
        if *keep {
            for j in 0..dpooled.ncols() {
                dx[[i, j]] = dpooled[[0, j]] / count;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences of `f` w.r.t. `param`, one coordinate at a
    /// time.
    fn numeric_grad(param: &mut Array2<f64>, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
        let eps = 1e-6;
        let mut grad = Array2::zeros(param.raw_dim());
        for idx in 0..param.len() {
            let (r, c) = (idx / param.ncols(), idx % param.ncols());
            let orig = param[[r, c]];
            param[[r, c]] = orig + eps;
            let plus = f(param);
            param[[r, c]] = orig - eps;
            let minus = f(param);
            param[[r, c]] = orig;
            grad[[r, c]] = (plus - minus) / (2.0 * eps);
        }
        grad
    }

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64, what: &str) {
        for (x, y) in a.iter().zip(b.iter()) {
            let denom = x.abs().max(y.abs()).max(1e-8);
            assert!(
                (x - y).abs() / denom < tol,
                "{what}: {x} vs {y} (rel {})",
                (x - y).abs() / denom
            );
        }
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randn(&mut rng, 4, 3);
        let mut w = randn(&mut rng, 3, 5);
        let mut b = randn(&mut rng, 1, 5);
        let r = randn(&mut rng, 4, 5);
        let loss = |w: &Array2<f64>, b: &Array2<f64>| (linear_fwd(&x, w, b) * &r).sum();

        let y = linear_fwd(&x, &w, &b);
        assert_eq!(y.shape(), &[4, 5]);
        let (_, dw, db) = linear_bwd(&x, &w, &r);
        let b2 = b.clone();
        let ndw = numeric_grad(&mut w, |w| loss(w, &b2));
        let w2 = w.clone();
        let ndb = numeric_grad(&mut b, |b| loss(&w2, b));
        assert_close(&dw, &ndw, 1e-6, "dw");
        assert_close(&db, &ndb, 1e-6, "db");

        // dx via treating x as the parameter
        let (dx, _, _) = linear_bwd(&x, &w, &r);
        let mut xp = x.clone();
        let wc = w.clone();
        let bc = b.clone();
        let ndx = numeric_grad(&mut xp, |x| (linear_fwd(x, &wc, &bc) * &r).sum());
        assert_close(&dx, &ndx, 1e-6, "dx");
    }

    #[test]
    fn gelu_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = randn(&mut rng, 3, 4);
        let r = randn(&mut rng, 3, 4);
        let dx = gelu_bwd(&x, &r);
        let ndx = numeric_grad(&mut x, |x| (gelu_fwd(x) * &r).sum());
        assert_close(&dx, &ndx, 1e-5, "gelu dx");
    }

    #[test]
    fn gelu_slope_at_zero_is_half() {
        assert!((gelu_grad(0.0) - 0.5).abs() < 1e-12);
        assert_eq!(gelu(0.0), 0.0);
    }

    #[test]
    fn layernorm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = randn(&mut rng, 3, 6);
        let mut g = randn(&mut rng, 1, 6);
        let mut b = randn(&mut rng, 1, 6);
        let r = randn(&mut rng, 3, 6);
        let (_, cache) = layernorm_fwd(&x, &g, &b);
        let (dx, dg, db) = layernorm_bwd(&cache, &g, &r);

        let (gc, bc) = (g.clone(), b.clone());
        let ndx = numeric_grad(&mut x, |x| (layernorm_fwd(x, &gc, &bc).0 * &r).sum());
        assert_close(&dx, &ndx, 1e-4, "ln dx");
        let (xc, bc2) = (x.clone(), b.clone());
        let ndg = numeric_grad(&mut g, |g| (layernorm_fwd(&xc, g, &bc2).0 * &r).sum());
        assert_close(&dg, &ndg, 1e-5, "ln dg");
        let (xc2, gc2) = (x.clone(), g.clone());
        let ndb = numeric_grad(&mut b, |b| (layernorm_fwd(&xc2, &gc2, b).0 * &r).sum());
        assert_close(&db, &ndb, 1e-5, "ln db");
    }

    #[test]
    fn attention_rows_are_stochastic_and_masked_keys_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = randn(&mut rng, 5, 8);
        let params: Vec<Array2<f64>> = (0..4).map(|_| randn(&mut rng, 8, 8)).collect();
        let biases: Vec<Array2<f64>> = (0..4).map(|_| randn(&mut rng, 1, 8)).collect();
        let w = AttentionWeights {
            wq: &params[0],
            bq: &biases[0],
            wk: &params[1],
            bk: &biases[1],
            wv: &params[2],
            bv: &biases[2],
            wo: &params[3],
            bo: &biases[3],
        };
        let mask = vec![true, true, false, true, false];
        let (_, cache) = attention_fwd(&x, &w, 2, &mask);
        for p in &cache.probs {
            for row in p.rows() {
                let sum: f64 = row.sum();
                assert!((sum - 1.0).abs() < 1e-9, "row sums to {sum}");
                assert_eq!(row[2], 0.0);
                assert_eq!(row[4], 0.0);
            }
        }
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randn(&mut rng, 4, 6);
        let mut mats: Vec<Array2<f64>> = (0..4).map(|_| randn(&mut rng, 6, 6)).collect();
        let biases: Vec<Array2<f64>> = (0..4).map(|_| randn(&mut rng, 1, 6)).collect();
        let r = randn(&mut rng, 4, 6);
        let mask = vec![true, true, true, false];

        let loss = |mats: &[Array2<f64>], x: &Array2<f64>| {
            let w = AttentionWeights {
                wq: &mats[0],
                bq: &biases[0],
                wk: &mats[1],
                bk: &biases[1],
                wv: &mats[2],
                bv: &biases[2],
                wo: &mats[3],
                bo: &biases[3],
            };
            (attention_fwd(x, &w, 3, &mask).0 * &r).sum()
        };

        let w = AttentionWeights {
            wq: &mats[0].clone(),
            bq: &biases[0],
            wk: &mats[1].clone(),
            bk: &biases[1],
            wv: &mats[2].clone(),
            bv: &biases[2],
            wo: &mats[3].clone(),
            bo: &biases[3],
        };
        let (_, cache) = attention_fwd(&x, &w, 3, &mask);
        let grads = attention_bwd(&cache, &w, 3, &r);

        for (idx, analytic) in [&grads.dwq, &grads.dwk, &grads.dwv, &grads.dwo]
            .into_iter()
            .enumerate()
        {
            let others = mats.clone();
            let numeric = numeric_grad(&mut mats[idx], |m| {
                let mut all = others.clone();
                all[idx] = m.clone();
                loss(&all, &x)
            });
            assert_close(analytic, &numeric, 1e-4, &format!("attention weight {idx}"));
        }
        let mats_c = mats.clone();
        let mut xp = x.clone();
        let ndx = numeric_grad(&mut xp, |x| loss(&mats_c, x));
        assert_close(&grads.dinput, &ndx, 1e-4, "attention dx");
    }

    #[test]
    fn identical_keys_give_uniform_attention_over_unmasked() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // identical input rows -> identical keys -> uniform rows
        let row = randn(&mut rng, 1, 6);
        let mut x = Array2::zeros((5, 6));
        for mut r in x.rows_mut() {
            r.assign(&row.row(0));
        }
        let mats: Vec<Array2<f64>> = (0..4).map(|_| randn(&mut rng, 6, 6)).collect();
        let biases: Vec<Array2<f64>> = (0..4).map(|_| randn(&mut rng, 1, 6)).collect();
        let w = AttentionWeights {
            wq: &mats[0],
            bq: &biases[0],
            wk: &mats[1],
            bk: &biases[1],
            wv: &mats[2],
            bv: &biases[2],
            wo: &mats[3],
            bo: &biases[3],
        };
        let mask = vec![true, false, true, true, false];
        let (_, cache) = attention_fwd(&x, &w, 2, &mask);
        for p in &cache.probs {
            for row in p.rows() {
                assert!((row[0] - 1.0 / 3.0).abs() < 1e-12);
                assert!((row[2] - 1.0 / 3.0).abs() < 1e-12);
                assert!((row[3] - 1.0 / 3.0).abs() < 1e-12);
                assert_eq!(row[1], 0.0);
            }
        }
    }

    #[test]
    fn conv_output_lengths_follow_ceil_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, stride, expect) in [(998, 2, 499), (499, 2, 250), (4, 2, 2), (2, 2, 1), (7, 1, 7)] {
            let x = randn(&mut rng, n, 3);
            let w = randn(&mut rng, 9, 2);
            let b = randn(&mut rng, 1, 2);
            let (y, _) = conv1d_fwd(&x, &w, &b, stride);
            assert_eq!(y.nrows(), expect, "n={n} stride={stride}");
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = randn(&mut rng, 7, 3);
        let mut w = randn(&mut rng, 9, 4);
        let b = randn(&mut rng, 1, 4);
        let r = randn(&mut rng, 4, 4); // ceil(7/2) = 4
        let (_, cache) = conv1d_fwd(&x, &w, &b, 2);
        let (dx, dw, _) = conv1d_bwd(&cache, &w, &r);
        let (wc, bc) = (w.clone(), b.clone());
        let ndx = numeric_grad(&mut x, |x| (conv1d_fwd(x, &wc, &bc, 2).0 * &r).sum());
        assert_close(&dx, &ndx, 1e-5, "conv dx");
        let (xc, bc2) = (x.clone(), b.clone());
        let ndw = numeric_grad(&mut w, |w| (conv1d_fwd(&xc, w, &bc2, 2).0 * &r).sum());
        assert_close(&dw, &ndw, 1e-5, "conv dw");
    }

    #[test]
    fn masked_mean_ignores_masked_rows() {
        let x = ndarray::array![[1.0, 2.0], [3.0, 4.0], [100.0, 100.0]];
        let mask = vec![true, true, false];
        let pooled = masked_mean_fwd(&x, &mask);
        assert_eq!(pooled, ndarray::array![[2.0, 3.0]]);
        let dp = ndarray::array![[1.0, 1.0]];
        let dx = masked_mean_bwd(&dp, &mask, 3);
        assert_eq!(dx.row(2).sum(), 0.0);
        assert_eq!(dx[[0, 0]], 0.5);
    }
}
