//! The encoder-adaptor-fusion-classifier network: pure forward computation
//! over an explicit parameter store, plus the mirrored reverse-mode pass.
//!
//! Per-modality encoders bring each stream to `d_model` width, adaptor MLPs
//! map them into the shared space, a learned modality-type embedding tags
//! each token, self-attention blocks fuse the concatenated streams, and a
//! masked mean-pool feeds an affine nine-way head. No positional encoding is
//! added inside the fusion stage: order information lives in the encoders,
//! so fusion and classification are permutation-invariant over tokens.

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};
use crate::frontend::{ClipFeatures, FrameSequence, LogMelSpectrogram, TokenSequence};
use crate::label::{ResponseLabel, NUM_LABELS};
use crate::modality::{Modality, ModalityMask};
use crate::model::config::ModelConfig;
use crate::model::ops::{
    attention_bwd, attention_fwd, conv1d_bwd, conv1d_fwd, gelu_bwd, gelu_fwd, layernorm_bwd,
    layernorm_fwd, linear_bwd, linear_fwd, masked_mean_bwd, masked_mean_fwd, AttentionCache,
    AttentionWeights, Conv1dCache, LayerNormCache,
};
use crate::model::params::{Gradients, ParamStore};

/// Nine unnormalized class scores in canonical label order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logits(pub [f64; NUM_LABELS]);

impl Logits {
    /// Arg-max with ties resolved to the lowest class index.
    pub fn argmax(&self) -> ResponseLabel {
        let mut best = 0;
        for i in 1..NUM_LABELS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        ResponseLabel::from_index(best).expect("index in range")
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Concatenated modality tokens with per-token tags and validity mask.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    pub tokens: Array2<f64>,
    pub tags: Vec<Modality>,
    pub mask: Vec<bool>,
}

impl TokenBatch {
    pub fn n_unmasked(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Nearest-to-square factorization of the patch count, rows x cols.
fn patch_grid(k: usize) -> (usize, usize) {
    let mut best = (1, k);
    for rows in 1..=k {
        if k % rows == 0 {
            let cols = k / rows;
            if (rows as i64 - cols as i64).abs() <= (best.0 as i64 - best.1 as i64).abs() {
                best = (rows, cols);
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub(crate) struct VideoCache {
    means: Array2<f64>,
}

/// Per-frame patch means (RGB each) for the affine video projection.
fn video_patch_means(seq: &FrameSequence, k: usize) -> Array2<f64> {
    let (grid_rows, grid_cols) = patch_grid(k);
    let frames = seq.frame_count();
    let mut means = Array2::zeros((frames * k, 3));
    for f in 0..frames {
        let frame = seq.frame(f);
        for p in 0..k {
            let (pr, pc) = (p / grid_cols, p % grid_cols);
            let row0 = pr * seq.height / grid_rows;
            let row1 = ((pr + 1) * seq.height / grid_rows).max(row0 + 1).min(seq.height);
            let col0 = pc * seq.width / grid_cols;
            let col1 = ((pc + 1) * seq.width / grid_cols).max(col0 + 1).min(seq.width);
            let mut acc = [0.0f64; 3];
            let mut count = 0.0;
            for r in row0..row1 {
                for c in col0..col1 {
                    let base = (r * seq.width + c) * 3;
                    for ch in 0..3 {
                        acc[ch] += frame[base + ch];
                    }
                    count += 1.0;
                }
            }
            for ch in 0..3 {
                means[[f * k + p, ch]] = acc[ch] / count;
            }
        }
    }
    means
}

/// Video encoder: per-frame patchify into `k` patches, per-patch mean-pool
/// and an affine projection to `d_model`. Produces `frames * k` tokens.
pub fn encode_video(seq: &FrameSequence, params: &ParamStore, cfg: &ModelConfig) -> Array2<f64> {
    encode_video_cached(seq, params, cfg).0
}

fn encode_video_cached(
    seq: &FrameSequence,
    params: &ParamStore,
    cfg: &ModelConfig,
) -> (Array2<f64>, VideoCache) {
    let means = video_patch_means(seq, cfg.video_tokens_per_frame);
    let tokens = linear_fwd(&means, params.get("video.proj.w"), params.get("video.proj.b"));
    (tokens, VideoCache { means })
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    h2: Array2<f64>,
    mlp_pre: Array2<f64>,
    mlp_hidden: Array2<f64>,
}

impl BlockCache {
    /// Per-head attention weight matrices of this block.
    pub(crate) fn attention_probs(&self) -> &[Array2<f64>] {
        &self.attn.probs
    }
}

fn attn_weights<'a>(params: &'a ParamStore, prefix: &str) -> AttentionWeights<'a> {
    AttentionWeights {
        wq: params.get(&format!("{prefix}.attn.wq")),
        bq: params.get(&format!("{prefix}.attn.bq")),
        wk: params.get(&format!("{prefix}.attn.wk")),
        bk: params.get(&format!("{prefix}.attn.bk")),
        wv: params.get(&format!("{prefix}.attn.wv")),
        bv: params.get(&format!("{prefix}.attn.bv")),
        wo: params.get(&format!("{prefix}.attn.wo")),
        bo: params.get(&format!("{prefix}.attn.bo")),
    }
}

/// Pre-norm transformer block: `x + Attn(LN(x))`, then `x + MLP(LN(x))`.
fn block_fwd(
    x: &Array2<f64>,
    params: &ParamStore,
    prefix: &str,
    n_heads: usize,
    key_mask: &[bool],
) -> (Array2<f64>, BlockCache) {
    let (h1, ln1) = layernorm_fwd(
        x,
        params.get(&format!("{prefix}.ln1.g")),
        params.get(&format!("{prefix}.ln1.b")),
    );
    let (attn_out, attn) = attention_fwd(&h1, &attn_weights(params, prefix), n_heads, key_mask);
    let x_mid = x + &attn_out;
    let (h2, ln2) = layernorm_fwd(
        &x_mid,
        params.get(&format!("{prefix}.ln2.g")),
        params.get(&format!("{prefix}.ln2.b")),
    );
    let mlp_pre = linear_fwd(
        &h2,
        params.get(&format!("{prefix}.mlp.w1")),
        params.get(&format!("{prefix}.mlp.b1")),
    );
    let mlp_hidden = gelu_fwd(&mlp_pre);
    let mlp_out = linear_fwd(
        &mlp_hidden,
        params.get(&format!("{prefix}.mlp.w2")),
        params.get(&format!("{prefix}.mlp.b2")),
    );
    let y = &x_mid + &mlp_out;
    let rows = x.nrows();
    (
        y,
        BlockCache {
            ln1,
            attn,
            ln2,
            h2,
            mlp_pre,
            mlp_hidden,
            attn_probs_rows: rows,
        },
    )
}

fn block_bwd(
    cache: &BlockCache,
    params: &ParamStore,
    prefix: &str,
    n_heads: usize,
    dy: &Array2<f64>,
    grads: &mut Gradients,
) -> Array2<f64> {
    // MLP branch
    let (dhidden, dw2, db2) = linear_bwd(&cache.mlp_hidden, params.get(&format!("{prefix}.mlp.w2")), dy);
    grads.accumulate(&format!("{prefix}.mlp.w2"), dw2);
    grads.accumulate(&format!("{prefix}.mlp.b2"), db2);
    let dpre = gelu_bwd(&cache.mlp_pre, &dhidden);
    let (dh2, dw1, db1) = linear_bwd(&cache.h2, params.get(&format!("{prefix}.mlp.w1")), &dpre);
    grads.accumulate(&format!("{prefix}.mlp.w1"), dw1);
    grads.accumulate(&format!("{prefix}.mlp.b1"), db1);
    let (dx_ln2, dg2, dbeta2) = layernorm_bwd(&cache.ln2, params.get(&format!("{prefix}.ln2.g")), &dh2);
    grads.accumulate(&format!("{prefix}.ln2.g"), dg2);
    grads.accumulate(&format!("{prefix}.ln2.b"), dbeta2);
    let dx_mid = dy + &dx_ln2;

    // attention branch
    let attn_grads = attention_bwd(&cache.attn, &attn_weights(params, prefix), n_heads, &dx_mid);
    grads.accumulate(&format!("{prefix}.attn.wq"), attn_grads.dwq);
    grads.accumulate(&format!("{prefix}.attn.bq"), attn_grads.dbq);
    grads.accumulate(&format!("{prefix}.attn.wk"), attn_grads.dwk);
    grads.accumulate(&format!("{prefix}.attn.bk"), attn_grads.dbk);
    grads.accumulate(&format!("{prefix}.attn.wv"), attn_grads.dwv);
    grads.accumulate(&format!("{prefix}.attn.bv"), attn_grads.dbv);
    grads.accumulate(&format!("{prefix}.attn.wo"), attn_grads.dwo);
    grads.accumulate(&format!("{prefix}.attn.bo"), attn_grads.dbo);
    let (dx_ln1, dg1, dbeta1) =
        layernorm_bwd(&cache.ln1, params.get(&format!("{prefix}.ln1.g")), &attn_grads.dinput);
    grads.accumulate(&format!("{prefix}.ln1.g"), dg1);
    grads.accumulate(&format!("{prefix}.ln1.b"), dbeta1);
    dx_mid + &dx_ln1
}

#[derive(Debug, Clone)]
pub(crate) struct AudioCache {
    convs: Vec<(Conv1dCache, Array2<f64>)>,
    blocks: Vec<BlockCache>,
}

/// Minimum spectrogram frames the conv stack accepts.
pub const MIN_AUDIO_FRAMES: usize = 4;

/// Audio encoder: four 1-D convolutions with strides `[1, 2, 1, 2]` (same
/// padding, so `ceil(n/4)` positions survive) followed by pre-norm
/// transformer blocks. Returns `None` for spectrograms shorter than
/// [`MIN_AUDIO_FRAMES`].
pub fn encode_audio(
    spec: &LogMelSpectrogram,
    params: &ParamStore,
    cfg: &ModelConfig,
) -> Option<Array2<f64>> {
    encode_audio_cached(spec, params, cfg).map(|(tokens, _)| tokens)
}

fn encode_audio_cached(
    spec: &LogMelSpectrogram,
    params: &ParamStore,
    cfg: &ModelConfig,
) -> Option<(Array2<f64>, AudioCache)> {
    if spec.n_frames() < MIN_AUDIO_FRAMES {
        return None;
    }
    let mut x = spec.values.clone();
    let mut convs = Vec::with_capacity(4);
    for (layer, stride) in cfg.conv_strides.iter().enumerate() {
        let name = format!("audio.conv{}", layer + 1);
        let (pre, cache) = conv1d_fwd(
            &x,
            params.get(&format!("{name}.w")),
            params.get(&format!("{name}.b")),
            *stride,
        );
        x = gelu_fwd(&pre);
        convs.push((cache, pre));
    }
    let all_true = vec![true; x.nrows()];
    let mut blocks = Vec::with_capacity(cfg.n_audio_blocks);
    for j in 0..cfg.n_audio_blocks {
        let (y, cache) = block_fwd(&x, params, &format!("audio.block{j}"), cfg.n_heads, &all_true);
        x = y;
        blocks.push(cache);
    }
    Some((x, AudioCache { convs, blocks }))
}

fn audio_bwd(
    cache: &AudioCache,
    params: &ParamStore,
    cfg: &ModelConfig,
    dy: &Array2<f64>,
    grads: &mut Gradients,
) {
    let mut d = dy.clone();
    for (j, block) in cache.blocks.iter().enumerate().rev() {
        d = block_bwd(block, params, &format!("audio.block{j}"), cfg.n_heads, &d, grads);
    }
    for (layer, (conv_cache, pre)) in cache.convs.iter().enumerate().rev() {
        let name = format!("audio.conv{}", layer + 1);
        let dpre = gelu_bwd(pre, &d);
        let (dx, dw, db) = conv1d_bwd(conv_cache, params.get(&format!("{name}.w")), &dpre);
        grads.accumulate(&format!("{name}.w"), dw);
        grads.accumulate(&format!("{name}.b"), db);
        d = dx;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TextCache {
    ids: Vec<u32>,
}

/// Text encoder: embedding lookup plus a learned positional table.
pub fn encode_text(seq: &TokenSequence, params: &ParamStore, cfg: &ModelConfig) -> Array2<f64> {
    let embed = params.get("text.embed");
    let pos = params.get("text.pos");
    let n = seq.len().min(cfg.max_text_tokens);
    let mut out = Array2::zeros((n, cfg.d_model));
    for (row, &id) in seq.ids[seq.len() - n..].iter().enumerate() {
        let id = (id as usize).min(cfg.vocab_size - 1);
        for j in 0..cfg.d_model {
            out[[row, j]] = embed[[id, j]] + pos[[row, j]];
        }
    }
    out
}

fn text_bwd(cache: &TextCache, cfg: &ModelConfig, dy: &Array2<f64>, grads: &mut Gradients) {
    let mut dembed = Array2::zeros((cfg.vocab_size, cfg.d_model));
    let mut dpos = Array2::zeros((cfg.max_text_tokens, cfg.d_model));
    for (row, &id) in cache.ids.iter().enumerate() {
        let id = (id as usize).min(cfg.vocab_size - 1);
        for j in 0..cfg.d_model {
            dembed[[id, j]] += dy[[row, j]];
            dpos[[row, j]] += dy[[row, j]];
        }
    }
    grads.accumulate("text.embed", dembed);
    grads.accumulate("text.pos", dpos);
}

#[derive(Debug, Clone)]
pub(crate) struct AdaptCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

/// Row-wise two-layer MLP adaptor for one modality's tokens.
pub fn adapt(tokens: &Array2<f64>, params: &ParamStore, modality: Modality) -> Array2<f64> {
    adapt_cached(tokens, params, modality).0
}

fn adapt_cached(
    tokens: &Array2<f64>,
    params: &ParamStore,
    modality: Modality,
) -> (Array2<f64>, AdaptCache) {
    let prefix = format!("adapt.{}", modality.name());
    let pre = linear_fwd(
        tokens,
        params.get(&format!("{prefix}.w1")),
        params.get(&format!("{prefix}.b1")),
    );
    let hidden = gelu_fwd(&pre);
    let out = linear_fwd(
        &hidden,
        params.get(&format!("{prefix}.w2")),
        params.get(&format!("{prefix}.b2")),
    );
    (
        out,
        AdaptCache {
            x: tokens.clone(),
            pre,
            hidden,
        },
    )
}

fn adapt_bwd(
    cache: &AdaptCache,
    params: &ParamStore,
    modality: Modality,
    dy: &Array2<f64>,
    grads: &mut Gradients,
) -> Array2<f64> {
    let prefix = format!("adapt.{}", modality.name());
    let (dhidden, dw2, db2) = linear_bwd(&cache.hidden, params.get(&format!("{prefix}.w2")), dy);
    grads.accumulate(&format!("{prefix}.w2"), dw2);
    grads.accumulate(&format!("{prefix}.b2"), db2);
    let dpre = gelu_bwd(&cache.pre, &dhidden);
    let (dx, dw1, db1) = linear_bwd(&cache.x, params.get(&format!("{prefix}.w1")), &dpre);
    grads.accumulate(&format!("{prefix}.w1"), dw1);
    grads.accumulate(&format!("{prefix}.b1"), db1);
    dx
}

#[derive(Debug, Clone)]
pub(crate) struct FuseCache {
    pub(crate) blocks: Vec<BlockCache>,
    tags: Vec<Modality>,
}

/// Fusion: add the learned modality-type embedding to every token, then run
/// the self-attention blocks (when enabled). Masked tokens neither attend
/// nor are attended to. Shape in equals shape out.
pub fn fuse(batch: &TokenBatch, params: &ParamStore, cfg: &ModelConfig) -> Result<TokenBatch> {
    fuse_cached(batch, params, cfg).map(|(b, _)| b)
}

pub(crate) fn fuse_cached(
    batch: &TokenBatch,
    params: &ParamStore,
    cfg: &ModelConfig,
) -> Result<(TokenBatch, FuseCache)> {
    if batch.n_unmasked() == 0 {
        return Err(Error::NoModality);
    }
    let type_embed = params.get("fuse.type_embed");
    let mut x = batch.tokens.clone();
    for (i, tag) in batch.tags.iter().enumerate() {
        for j in 0..cfg.d_model {
            x[[i, j]] += type_embed[[tag.index(), j]];
        }
    }
    let mut blocks = Vec::new();
    if cfg.fusion_attention {
        for j in 0..cfg.n_fusion_blocks {
            let (y, cache) = block_fwd(&x, params, &format!("fuse.block{j}"), cfg.n_heads, &batch.mask);
            x = y;
            blocks.push(cache);
        }
    }
    Ok((
        TokenBatch {
            tokens: x,
            tags: batch.tags.clone(),
            mask: batch.mask.clone(),
        },
        FuseCache {
            blocks,
            tags: batch.tags.clone(),
        },
    ))
}

fn fuse_bwd(
    cache: &FuseCache,
    params: &ParamStore,
    cfg: &ModelConfig,
    dy: &Array2<f64>,
    grads: &mut Gradients,
) -> Array2<f64> {
    let mut d = dy.clone();
    for (j, block) in cache.blocks.iter().enumerate().rev() {
        d = block_bwd(block, params, &format!("fuse.block{j}"), cfg.n_heads, &d, grads);
    }
    let mut dtype = Array2::zeros((3, cfg.d_model));
    for (i, tag) in cache.tags.iter().enumerate() {
        for j in 0..cfg.d_model {
            dtype[[tag.index(), j]] += d[[i, j]];
        }
    }
    grads.accumulate("fuse.type_embed", dtype);
    d
}

/// Masked mean-pool over fused tokens, then an affine map to nine logits.
pub fn classify(batch: &TokenBatch, params: &ParamStore) -> Result<Logits> {
    if batch.n_unmasked() == 0 {
        return Err(Error::NoModality);
    }
    let pooled = masked_mean_fwd(&batch.tokens, &batch.mask);
    let logits = linear_fwd(&pooled, params.get("head.w"), params.get("head.b"));
    let mut out = [0.0; NUM_LABELS];
    for (slot, value) in out.iter_mut().zip(logits.row(0).iter()) {
        *slot = *value;
    }
    Ok(Logits(out))
}

/// Everything the reverse pass needs from one forward evaluation.
pub struct ForwardCache {
    video: Option<(VideoCache, AdaptCache)>,
    audio: Option<(AudioCache, AdaptCache)>,
    text: Option<(TextCache, AdaptCache)>,
    /// Token row ranges of the concatenated batch, in (video, audio, text)
    /// order.
    ranges: [std::ops::Range<usize>; 3],
    pub(crate) fuse: FuseCache,
    fused: TokenBatch,
    pooled: Array2<f64>,
}

/// Assembles the token batch for the enabled, present modalities.
fn build_batch(
    features: &ClipFeatures,
    params: &ParamStore,
    cfg: &ModelConfig,
    mask: &ModalityMask,
) -> Result<(TokenBatch, ForwardCacheParts)> {
    let mut segments: Vec<Array2<f64>> = Vec::new();
    let mut tags = Vec::new();
    let mut ranges = [0..0, 0..0, 0..0];
    let mut cursor = 0usize;

    let mut video = None;
    if mask.video {
        if let Some(seq) = &features.video {
            if seq.frame_count() > 0 {
                let (tokens, vcache) = encode_video_cached(seq, params, cfg);
                let (adapted, acache) = adapt_cached(&tokens, params, Modality::Video);
                let n = adapted.nrows();
                ranges[0] = cursor..cursor + n;
                cursor += n;
                tags.extend(std::iter::repeat_n(Modality::Video, n));
                segments.push(adapted);
                video = Some((vcache, acache));
            }
        }
    }
    let mut audio = None;
    if mask.audio {
        if let Some(spec) = &features.audio {
            if let Some((tokens, scache)) = encode_audio_cached(spec, params, cfg) {
                let (adapted, acache) = adapt_cached(&tokens, params, Modality::Audio);
                let n = adapted.nrows();
                ranges[1] = cursor..cursor + n;
                cursor += n;
                tags.extend(std::iter::repeat_n(Modality::Audio, n));
                segments.push(adapted);
                audio = Some((scache, acache));
            }
        }
    }
    let mut text = None;
    if mask.text {
        if let Some(seq) = &features.text {
            if !seq.is_empty() {
                let tokens = encode_text(seq, params, cfg);
                let n_kept = tokens.nrows();
                let kept_ids = seq.ids[seq.len() - n_kept..].to_vec();
                let (adapted, acache) = adapt_cached(&tokens, params, Modality::Text);
                ranges[2] = cursor..cursor + n_kept;
                cursor += n_kept;
                tags.extend(std::iter::repeat_n(Modality::Text, n_kept));
                segments.push(adapted);
                text = Some((TextCache { ids: kept_ids }, acache));
            }
        }
    }

    if segments.is_empty() {
        return Err(Error::NoModality);
    }
    let views: Vec<_> = segments.iter().map(|s| s.view()).collect();
    let tokens = concatenate(Axis(0), &views).expect("segments share d_model");
    let mask_vec = vec![true; tokens.nrows()];
    Ok((
        TokenBatch { tokens, tags, mask: mask_vec },
        ForwardCacheParts { video, audio, text, ranges },
    ))
}

struct ForwardCacheParts {
    video: Option<(VideoCache, AdaptCache)>,
    audio: Option<(AudioCache, AdaptCache)>,
    text: Option<(TextCache, AdaptCache)>,
    ranges: [std::ops::Range<usize>; 3],
}

/// Full forward pass. The modality mask drops whole modalities; disabling
/// everything (or supplying no usable features) is an error.
pub fn forward(
    features: &ClipFeatures,
    params: &ParamStore,
    cfg: &ModelConfig,
    mask: &ModalityMask,
) -> Result<Logits> {
    forward_cached(features, params, cfg, mask).map(|(l, _)| l)
}

pub fn forward_cached(
    features: &ClipFeatures,
    params: &ParamStore,
    cfg: &ModelConfig,
    mask: &ModalityMask,
) -> Result<(Logits, ForwardCache)> {
    let (batch, parts) = build_batch(features, params, cfg, mask)?;
    let (fused, fuse_cache) = fuse_cached(&batch, params, cfg)?;
    let pooled = masked_mean_fwd(&fused.tokens, &fused.mask);
    let logits_arr = linear_fwd(&pooled, params.get("head.w"), params.get("head.b"));
    let mut out = [0.0; NUM_LABELS];
    for (slot, value) in out.iter_mut().zip(logits_arr.row(0).iter()) {
        *slot = *value;
    }
    Ok((
        Logits(out),
        ForwardCache {
            video: parts.video,
            audio: parts.audio,
            text: parts.text,
            ranges: parts.ranges,
            fuse: fuse_cache,
            fused,
            pooled,
        },
    ))
}

/// Reverse pass: gradients of a scalar loss w.r.t. every parameter, given
/// the loss gradient at the logits.
pub fn backward(
    cache: &ForwardCache,
    params: &ParamStore,
    cfg: &ModelConfig,
    dlogits: &[f64; NUM_LABELS],
) -> Gradients {
    let mut grads = Gradients::new();
    let dlogits_arr = Array2::from_shape_vec((1, NUM_LABELS), dlogits.to_vec()).unwrap();
    let (dpooled, dhead_w, dhead_b) = linear_bwd(&cache.pooled, params.get("head.w"), &dlogits_arr);
    grads.accumulate("head.w", dhead_w);
    grads.accumulate("head.b", dhead_b);
    let dfused = masked_mean_bwd(&dpooled, &cache.fused.mask, cache.fused.tokens.nrows());
    let dbatch = fuse_bwd(&cache.fuse, params, cfg, &dfused, &mut grads);

    if let Some((vcache, acache)) = &cache.video {
        let dseg = dbatch.slice(s![cache.ranges[0].clone(), ..]).to_owned();
        let dtokens = adapt_bwd(acache, params, Modality::Video, &dseg, &mut grads);
        let (_, dw, db) = linear_bwd(&vcache.means, params.get("video.proj.w"), &dtokens);
        grads.accumulate("video.proj.w", dw);
        grads.accumulate("video.proj.b", db);
    }
    if let Some((scache, acache)) = &cache.audio {
        let dseg = dbatch.slice(s![cache.ranges[1].clone(), ..]).to_owned();
        let dtokens = adapt_bwd(acache, params, Modality::Audio, &dseg, &mut grads);
        audio_bwd(scache, params, cfg, &dtokens, &mut grads);
    }
    if let Some((tcache, acache)) = &cache.text {
        let dseg = dbatch.slice(s![cache.ranges[2].clone(), ..]).to_owned();
        let dtokens = adapt_bwd(acache, params, Modality::Text, &dseg, &mut grads);
        text_bwd(tcache, cfg, &dtokens, &mut grads);
    }
    grads
}

/// Mean-pooled, adapted summary of each present modality, for the alignment
/// pretraining stage.
pub struct SummaryForward {
    /// `(modality, unnormalized pooled summary [1, d])`, in modality order.
    pub summaries: Vec<(Modality, Array2<f64>)>,
    parts: ForwardCacheParts,
}

pub fn forward_summaries(
    features: &ClipFeatures,
    params: &ParamStore,
    cfg: &ModelConfig,
    mask: &ModalityMask,
) -> Result<SummaryForward> {
    let (batch, parts) = build_batch(features, params, cfg, mask)?;
    let mut summaries = Vec::new();
    for (slot, modality) in Modality::ALL.iter().enumerate() {
        let range = parts.ranges[slot].clone();
        if range.is_empty() {
            continue;
        }
        let tokens = batch.tokens.slice(s![range, ..]).to_owned();
        let mask_vec = vec![true; tokens.nrows()];
        summaries.push((*modality, masked_mean_fwd(&tokens, &mask_vec)));
    }
    Ok(SummaryForward { summaries, parts })
}

/// Reverse pass for [`forward_summaries`]: `d_by_modality` holds the loss
/// gradient at each modality's pooled summary (slots in [`Modality::ALL`]
/// order, `None` for absent modalities).
pub fn backward_summaries(
    sf: &SummaryForward,
    params: &ParamStore,
    cfg: &ModelConfig,
    d_by_modality: &[Option<Array2<f64>>; 3],
    grads: &mut Gradients,
) {
    for (slot, modality) in Modality::ALL.iter().enumerate() {
        let Some(dz) = &d_by_modality[slot] else {
            continue;
        };
        let n = sf.parts.ranges[slot].len();
        if n == 0 {
            continue;
        }
        let mask_vec = vec![true; n];
        let dtokens = masked_mean_bwd(dz, &mask_vec, n);
        match modality {
            Modality::Video => {
                if let Some((vcache, acache)) = &sf.parts.video {
                    let dtok = adapt_bwd(acache, params, Modality::Video, &dtokens, grads);
                    let (_, dw, db) = linear_bwd(&vcache.means, params.get("video.proj.w"), &dtok);
                    grads.accumulate("video.proj.w", dw);
                    grads.accumulate("video.proj.b", db);
                }
            }
            Modality::Audio => {
                if let Some((scache, acache)) = &sf.parts.audio {
                    let dtok = adapt_bwd(acache, params, Modality::Audio, &dtokens, grads);
                    audio_bwd(scache, params, cfg, &dtok, grads);
                }
            }
            Modality::Text => {
                if let Some((tcache, acache)) = &sf.parts.text {
                    let dtok = adapt_bwd(acache, params, Modality::Text, &dtokens, grads);
                    text_bwd(tcache, cfg, &dtok, grads);
                }
            }
        }
    }
}
