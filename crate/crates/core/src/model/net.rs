//! Forward and backward passes. Hidden states are carried as `[B*S, H]`
//! matrices; attention runs per (batch row, head) on views into them.

use ndarray::{s, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use super::math::{
    dropout_backward, dropout_forward, gelu, gelu_backward, layernorm_backward,
    layernorm_forward, linear_backward, linear_forward, scaled_dot_attention, softmax_backward,
    softmax_rows, LnCache, Scalar, s as sc,
};
use super::{Classifier, ModelError, ParamSet};
use crate::tokenizer::EncodedBatch;

/// Additive score bias applied to masked key positions. Large enough that
/// the post-softmax weight underflows to exactly zero.
const MASK_BIAS: f64 = -1e9;

/// Logits, softmax probabilities, and the pooled sequence representation.
#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    pub logits: Array2<F>,
    pub probabilities: Array2<F>,
    pub pooled: Array2<F>,
}

#[derive(Debug)]
pub(crate) struct EmbedCache<F> {
    ids: Array2<u32>,
    type_ids: Array2<u32>,
    ln: LnCache<F>,
    drop: Option<Array2<F>>,
}

#[derive(Debug)]
pub(crate) struct AttnCache<F> {
    x: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Pre-dropout attention probabilities per (batch, head).
    probs: Vec<Array2<F>>,
    prob_drops: Vec<Option<Array2<F>>>,
    ctx: Array2<F>,
    out_drop: Option<Array2<F>>,
    ln: LnCache<F>,
}

#[derive(Debug)]
pub(crate) struct FfnCache<F> {
    x: Array2<F>,
    h1: Array2<F>,
    g: Array2<F>,
    drop: Option<Array2<F>>,
    ln: LnCache<F>,
}

#[derive(Debug)]
pub(crate) struct PoolCache<F> {
    first: Array2<F>,
    tanh_out: Array2<F>,
    drop: Option<Array2<F>>,
    dropped: Array2<F>,
}

/// Everything the backward pass needs from one training forward pass.
#[derive(Debug)]
pub struct ForwardCaches<F> {
    batch: (usize, usize),
    embed: EmbedCache<F>,
    layers: Vec<(AttnCache<F>, FfnCache<F>)>,
    pool: PoolCache<F>,
}

enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl<'a> Mode<'a> {
    fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        match self {
            Mode::Eval => None,
            Mode::Train(rng) => Some(rng),
        }
    }

    fn caching(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

impl<F: Scalar> Classifier<F> {
    fn validate_batch(&self, batch: &EncodedBatch) -> Result<(usize, usize), ModelError> {
        let (b, seq) = batch.input_ids.dim();
        if batch.attention_masks.dim() != (b, seq) {
            return Err(ModelError::ShapeMismatch {
                reason: format!(
                    "ids {:?} vs masks {:?}",
                    batch.input_ids.dim(),
                    batch.attention_masks.dim()
                ),
            });
        }
        if seq > self.config.max_position {
            return Err(ModelError::SequenceTooLong {
                seq,
                max: self.config.max_position,
            });
        }
        for &id in batch.input_ids.iter() {
            if id as usize >= self.config.vocab_size {
                return Err(ModelError::IdOutOfRange {
                    id,
                    vocab: self.config.vocab_size,
                });
            }
        }
        Ok((b, seq))
    }

    fn embed_sum(
        &self,
        ids: &Array2<u32>,
        type_ids: &Array2<u32>,
    ) -> Result<Array2<F>, ModelError> {
        let (b, seq) = ids.dim();
        let h = self.config.hidden;
        let e = &self.params.embeddings;
        let mut x = Array2::zeros((b * seq, h));
        for bi in 0..b {
            for si in 0..seq {
                let tid = type_ids[[bi, si]] as usize;
                if tid >= self.config.type_vocab {
                    return Err(ModelError::IdOutOfRange {
                        id: type_ids[[bi, si]],
                        vocab: self.config.type_vocab,
                    });
                }
                let mut row = x.row_mut(bi * seq + si);
                row.assign(&e.word.row(ids[[bi, si]] as usize));
                row += &e.position.row(si);
                row += &e.token_type.row(tid);
            }
        }
        Ok(x)
    }

    /// Embedding stage: word + position + token-type lookups, layer norm.
    /// Eval mode (no dropout); `token_type_ids` defaults to zeros.
    pub fn embed(
        &self,
        input_ids: &Array2<u32>,
        token_type_ids: Option<&Array2<u32>>,
    ) -> Result<Array3<F>, ModelError> {
        let (b, seq) = input_ids.dim();
        if seq > self.config.max_position {
            return Err(ModelError::SequenceTooLong {
                seq,
                max: self.config.max_position,
            });
        }
        for &id in input_ids.iter() {
            if id as usize >= self.config.vocab_size {
                return Err(ModelError::IdOutOfRange {
                    id,
                    vocab: self.config.vocab_size,
                });
            }
        }
        let zeros;
        let type_ids = match token_type_ids {
            Some(t) => {
                if t.dim() != (b, seq) {
                    return Err(ModelError::ShapeMismatch {
                        reason: format!("type ids {:?} vs ids {:?}", t.dim(), (b, seq)),
                    });
                }
                t
            }
            None => {
                zeros = Array2::zeros((b, seq));
                &zeros
            }
        };
        let x = self.embed_sum(input_ids, type_ids)?;
        let (y, _) = layernorm_forward(&x, &self.params.embeddings.norm);
        Ok(y.into_shape((b, seq, self.config.hidden)).expect("shape"))
    }

    fn mask_bias(&self, batch: &EncodedBatch) -> Array2<F> {
        batch
            .attention_masks
            .mapv(|m| if m == 0 { sc(MASK_BIAS) } else { F::zero() })
    }

    fn attn_forward(
        &self,
        layer: usize,
        x: &Array2<F>,
        dims: (usize, usize),
        mask_bias: &Array2<F>,
        mode: &mut Mode<'_>,
    ) -> (Array2<F>, Option<AttnCache<F>>) {
        let (b, seq) = dims;
        let h = self.config.hidden;
        let heads = self.config.heads;
        let d = self.config.head_dim();
        let l = &self.params.encoder[layer];
        let p = self.config.dropout;

        let q = linear_forward(x, &l.query);
        let k = linear_forward(x, &l.key);
        let v = linear_forward(x, &l.value);
        let mut ctx = Array2::zeros((b * seq, h));
        let mut probs_cache = Vec::new();
        let mut drops_cache = Vec::new();
        for bi in 0..b {
            let rows = s![bi * seq..(bi + 1) * seq, ..];
            let bias = mask_bias.row(bi);
            for hi in 0..heads {
                let cols = s![.., hi * d..(hi + 1) * d];
                let qh = q.slice(rows).slice_move(cols);
                let kh = k.slice(rows).slice_move(cols);
                let vh = v.slice(rows).slice_move(cols);
                let (ctx_raw, probs) = scaled_dot_attention(qh, kh, vh, bias);
                let (ctx_h, mask) = match mode.rng() {
                    Some(rng) if p > 0.0 => {
                        let (probs_used, mask) = dropout_forward(&probs, p, Some(rng));
                        (probs_used.dot(&vh), mask)
                    }
                    _ => (ctx_raw, None),
                };
                ctx.slice_mut(rows).slice_move(cols).assign(&ctx_h);
                if mode.caching() {
                    probs_cache.push(probs);
                    drops_cache.push(mask);
                }
            }
        }
        let a = linear_forward(&ctx, &l.output);
        let (a_dropped, out_drop) = dropout_forward(&a, p, mode.rng());
        let res = a_dropped + x;
        let (y, ln) = layernorm_forward(&res, &l.norm1);
        let cache = mode.caching().then(|| AttnCache {
            x: x.clone(),
            q,
            k,
            v,
            probs: probs_cache,
            prob_drops: drops_cache,
            ctx,
            out_drop,
            ln,
        });
        (y, cache)
    }

    fn ffn_forward(
        &self,
        layer: usize,
        x: &Array2<F>,
        mode: &mut Mode<'_>,
    ) -> (Array2<F>, Option<FfnCache<F>>) {
        let l = &self.params.encoder[layer];
        let h1 = linear_forward(x, &l.ffn_inner);
        let g = gelu(&h1);
        let h2 = linear_forward(&g, &l.ffn_outer);
        let (h2_dropped, drop) = dropout_forward(&h2, self.config.dropout, mode.rng());
        let res = h2_dropped + x;
        let (y, ln) = layernorm_forward(&res, &l.norm2);
        let cache = mode.caching().then(|| FfnCache {
            x: x.clone(),
            h1,
            g,
            drop,
            ln,
        });
        (y, cache)
    }

    /// The self-attention sublayer of one encoder layer in eval mode, for a
    /// `[batch, seq, hidden]` input. Masked key positions receive zero
    /// attention weight.
    pub fn attention(
        &self,
        layer: usize,
        hidden_states: &Array3<F>,
        attention_mask: &Array2<u8>,
    ) -> Result<Array3<F>, ModelError> {
        let (b, seq, h) = hidden_states.dim();
        self.check_sublayer_args(layer, b, seq, h, Some(attention_mask))?;
        let x = hidden_states
            .to_owned()
            .into_shape((b * seq, h))
            .expect("shape");
        let bias = attention_mask.mapv(|m| if m == 0 { sc(MASK_BIAS) } else { F::zero() });
        let (y, _) = self.attn_forward(layer, &x, (b, seq), &bias, &mut Mode::Eval);
        Ok(y.into_shape((b, seq, h)).expect("shape"))
    }

    /// The feed-forward sublayer of one encoder layer in eval mode.
    pub fn ffn(
        &self,
        layer: usize,
        hidden_states: &Array3<F>,
    ) -> Result<Array3<F>, ModelError> {
        let (b, seq, h) = hidden_states.dim();
        self.check_sublayer_args(layer, b, seq, h, None)?;
        let x = hidden_states
            .to_owned()
            .into_shape((b * seq, h))
            .expect("shape");
        let (y, _) = self.ffn_forward(layer, &x, &mut Mode::Eval);
        Ok(y.into_shape((b, seq, h)).expect("shape"))
    }

    fn check_sublayer_args(
        &self,
        layer: usize,
        b: usize,
        seq: usize,
        h: usize,
        mask: Option<&Array2<u8>>,
    ) -> Result<(), ModelError> {
        if layer >= self.config.layers {
            return Err(ModelError::ShapeMismatch {
                reason: format!("layer {layer} out of range for {} layers", self.config.layers),
            });
        }
        if h != self.config.hidden {
            return Err(ModelError::ShapeMismatch {
                reason: format!("hidden {h} != configured {}", self.config.hidden),
            });
        }
        if let Some(mask) = mask {
            if mask.dim() != (b, seq) {
                return Err(ModelError::ShapeMismatch {
                    reason: format!("mask {:?} vs states {:?}", mask.dim(), (b, seq)),
                });
            }
        }
        Ok(())
    }

    fn forward_inner(
        &self,
        batch: &EncodedBatch,
        mut mode: Mode<'_>,
    ) -> Result<(ForwardOutput<F>, Option<ForwardCaches<F>>), ModelError> {
        let (b, seq) = self.validate_batch(batch)?;
        let type_ids: Array2<u32> = Array2::zeros((b, seq));
        let x = self.embed_sum(&batch.input_ids, &type_ids)?;
        let (x, emb_ln) = layernorm_forward(&x, &self.params.embeddings.norm);
        let (mut x, emb_drop) = dropout_forward(&x, self.config.dropout, mode.rng());
        let embed_cache = mode.caching().then(|| EmbedCache {
            ids: batch.input_ids.clone(),
            type_ids,
            ln: emb_ln,
            drop: emb_drop,
        });

        let mask_bias = self.mask_bias(batch);
        let mut layer_caches = Vec::new();
        for layer in 0..self.config.layers {
            let (y, attn_cache) = self.attn_forward(layer, &x, (b, seq), &mask_bias, &mut mode);
            let (y2, ffn_cache) = self.ffn_forward(layer, &y, &mut mode);
            if let (Some(a), Some(f)) = (attn_cache, ffn_cache) {
                layer_caches.push((a, f));
            }
            x = y2;
        }

        let mut first = Array2::zeros((b, self.config.hidden));
        for bi in 0..b {
            first.row_mut(bi).assign(&x.row(bi * seq));
        }
        let p_raw = linear_forward(&first, &self.params.pooler);
        let tanh_out = p_raw.mapv(|v| v.tanh());
        let (dropped, pool_drop) = dropout_forward(&tanh_out, self.config.dropout, mode.rng());
        let logits = linear_forward(&dropped, &self.params.classifier);
        let probabilities = softmax_rows(&logits);

        let caches = embed_cache.map(|embed| ForwardCaches {
            batch: (b, seq),
            embed,
            layers: layer_caches,
            pool: PoolCache {
                first,
                tanh_out: tanh_out.clone(),
                drop: pool_drop,
                dropped,
            },
        });
        Ok((
            ForwardOutput {
                logits,
                probabilities,
                pooled: tanh_out,
            },
            caches,
        ))
    }

    /// Eval-mode forward pass (dropout inactive).
    pub fn forward(&self, batch: &EncodedBatch) -> Result<ForwardOutput<F>, ModelError> {
        self.forward_inner(batch, Mode::Eval).map(|(out, _)| out)
    }

    /// Training-mode forward pass: dropout active, caches retained for
    /// [`backward`].
    ///
    /// [`backward`]: Classifier::backward
    pub fn forward_train(
        &self,
        batch: &EncodedBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ForwardOutput<F>, ForwardCaches<F>), ModelError> {
        self.forward_inner(batch, Mode::Train(rng))
            .map(|(out, caches)| (out, caches.expect("training mode caches")))
    }

    /// Backpropagates `dlogits` through the cached forward pass, returning
    /// gradients for every trainable tensor.
    pub fn backward(&self, caches: &ForwardCaches<F>, dlogits: &Array2<F>) -> ParamSet<F> {
        let (b, seq) = caches.batch;
        let h = self.config.hidden;
        let heads = self.config.heads;
        let d = self.config.head_dim();
        let mut g = ParamSet::zeros(&self.config);

        // Class head and pooler.
        let (ddropped, dwc, dbc) =
            linear_backward(&caches.pool.dropped, &self.params.classifier, dlogits);
        g.classifier.w = dwc;
        g.classifier.b = dbc;
        let dtanh = dropout_backward(&ddropped, &caches.pool.drop);
        let dp_raw = &dtanh * &caches.pool.tanh_out.mapv(|t| F::one() - t * t);
        let (dfirst, dwp, dbp) = linear_backward(&caches.pool.first, &self.params.pooler, &dp_raw);
        g.pooler.w = dwp;
        g.pooler.b = dbp;

        let mut dx: Array2<F> = Array2::zeros((b * seq, h));
        for bi in 0..b {
            dx.row_mut(bi * seq).assign(&dfirst.row(bi));
        }

        for layer in (0..self.config.layers).rev() {
            let l = &self.params.encoder[layer];
            let gl = &mut g.encoder[layer];
            let (attn, ffn) = &caches.layers[layer];

            // Feed-forward sublayer.
            let (dres2, dg2, db2) = layernorm_backward(&ffn.ln, &l.norm2, &dx);
            gl.norm2.gain = dg2;
            gl.norm2.bias = db2;
            let dh2 = dropout_backward(&dres2, &ffn.drop);
            let (dgel, dw_out, db_out) = linear_backward(&ffn.g, &l.ffn_outer, &dh2);
            gl.ffn_outer.w = dw_out;
            gl.ffn_outer.b = db_out;
            let dh1 = gelu_backward(&ffn.h1, &dgel);
            let (dx1b, dw_in, db_in) = linear_backward(&ffn.x, &l.ffn_inner, &dh1);
            gl.ffn_inner.w = dw_in;
            gl.ffn_inner.b = db_in;
            let dx1 = dres2 + dx1b; // residual branch + ffn branch

            // Attention sublayer.
            let (dres1, dg1, db1) = layernorm_backward(&attn.ln, &l.norm1, &dx1);
            gl.norm1.gain = dg1;
            gl.norm1.bias = db1;
            let da = dropout_backward(&dres1, &attn.out_drop);
            let (dctx, dwo, dbo) = linear_backward(&attn.ctx, &l.output, &da);
            gl.output.w = dwo;
            gl.output.b = dbo;

            let mut dq: Array2<F> = Array2::zeros((b * seq, h));
            let mut dk: Array2<F> = Array2::zeros((b * seq, h));
            let mut dv: Array2<F> = Array2::zeros((b * seq, h));
            let scale = sc::<F>(1.0 / (d as f64).sqrt());
            for bi in 0..b {
                let rows = s![bi * seq..(bi + 1) * seq, ..];
                for hi in 0..heads {
                    let cols = s![.., hi * d..(hi + 1) * d];
                    let idx = bi * heads + hi;
                    let probs = &attn.probs[idx];
                    let drop = &attn.prob_drops[idx];
                    let probs_used = match drop {
                        Some(mask) => probs * mask,
                        None => probs.clone(),
                    };
                    let dctx_h = dctx.slice(rows).slice_move(cols);
                    let vh = attn.v.slice(rows).slice_move(cols);
                    let qh = attn.q.slice(rows).slice_move(cols);
                    let kh = attn.k.slice(rows).slice_move(cols);
                    let dprobs_used = dctx_h.dot(&vh.t());
                    let dvh = probs_used.t().dot(&dctx_h);
                    let dprobs = dropout_backward(&dprobs_used, drop);
                    let dscores = softmax_backward(probs, &dprobs) * scale;
                    let dqh = dscores.dot(&kh);
                    let dkh = dscores.t().dot(&qh);
                    dq.slice_mut(rows).slice_move(cols).assign(&dqh);
                    dk.slice_mut(rows).slice_move(cols).assign(&dkh);
                    dv.slice_mut(rows).slice_move(cols).assign(&dvh);
                }
            }
            let (dxq, dwq, dbq) = linear_backward(&attn.x, &l.query, &dq);
            gl.query.w = dwq;
            gl.query.b = dbq;
            let (dxk, dwk, dbk) = linear_backward(&attn.x, &l.key, &dk);
            gl.key.w = dwk;
            gl.key.b = dbk;
            let (dxv, dwv, dbv) = linear_backward(&attn.x, &l.value, &dv);
            gl.value.w = dwv;
            gl.value.b = dbv;
            dx = dres1 + dxq + dxk + dxv;
        }

        // Embedding stage.
        let dln_out = dropout_backward(&dx, &caches.embed.drop);
        let (dsum, dgain, dbias) = layernorm_backward(
            &caches.embed.ln,
            &self.params.embeddings.norm,
            &dln_out,
        );
        g.embeddings.norm.gain = dgain;
        g.embeddings.norm.bias = dbias;
        for bi in 0..b {
            for si in 0..seq {
                let row = dsum.row(bi * seq + si);
                let wid = caches.embed.ids[[bi, si]] as usize;
                let tid = caches.embed.type_ids[[bi, si]] as usize;
                let mut wrow = g.embeddings.word.row_mut(wid);
                wrow += &row;
                let mut prow = g.embeddings.position.row_mut(si);
                prow += &row;
                let mut trow = g.embeddings.token_type.row_mut(tid);
                trow += &row;
            }
        }
        g
    }

    /// Per-query attention probability rows of one layer/head in eval mode;
    /// used by diagnostics and tests.
    pub fn attention_probs(
        &self,
        layer: usize,
        batch: &EncodedBatch,
    ) -> Result<Vec<Array2<F>>, ModelError> {
        let (b, seq) = self.validate_batch(batch)?;
        let type_ids: Array2<u32> = Array2::zeros((b, seq));
        let x = self.embed_sum(&batch.input_ids, &type_ids)?;
        let (mut x, _) = layernorm_forward(&x, &self.params.embeddings.norm);
        let mask_bias = self.mask_bias(batch);
        for li in 0..layer {
            let (y, _) = self.attn_forward(li, &x, (b, seq), &mask_bias, &mut Mode::Eval);
            let (y2, _) = self.ffn_forward(li, &y, &mut Mode::Eval);
            x = y2;
        }
        let l = &self.params.encoder[layer];
        let heads = self.config.heads;
        let d = self.config.head_dim();
        let q = linear_forward(&x, &l.query);
        let k = linear_forward(&x, &l.key);
        let v = linear_forward(&x, &l.value);
        let mut out = Vec::with_capacity(b * heads);
        for bi in 0..b {
            let rows = s![bi * seq..(bi + 1) * seq, ..];
            for hi in 0..heads {
                let cols = s![.., hi * d..(hi + 1) * d];
                let (_, probs) = scaled_dot_attention(
                    q.slice(rows).slice_move(cols),
                    k.slice(rows).slice_move(cols),
                    v.slice(rows).slice_move(cols),
                    mask_bias.row(bi),
                );
                out.push(probs);
            }
        }
        Ok(out)
    }
}
