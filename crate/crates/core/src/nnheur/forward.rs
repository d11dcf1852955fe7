//! Inference for the encoder heuristic: input embedding, multi-head
//! self-attention with a residual, then LayerNorm / feed-forward / LayerNorm
//! and a per-token linear head averaged over its outputs.

use super::model::{LayerNormWeights, Mat, ModelConfig, ModelWeights};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub x1: Mat,
    /// One `d_r x d_r` matrix per head.
    pub attention: Vec<Mat>,
    pub x2: Mat,
    /// LayerNorm outputs before gain and bias.
    pub ln1_normalized: Mat,
    pub ln2_normalized: Mat,
    pub output: Vec<f64>,
}

/// Network inputs for one case, in flattened cell order.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    pub risk: &'a [f64],
    pub start_flat: usize,
    pub dest_flat: usize,
}

/// `x1[i] = risk[i] * W + b + start_embed[start] + dest_embed[dest] + pos_embed[i]`
pub fn embed_inputs(inputs: Inputs<'_>, w: &ModelWeights, config: &ModelConfig) -> Result<Mat> {
    let d_r = config.d_r;
    if inputs.risk.len() != d_r {
        return Err(Error::usage(format!(
            "model expects {d_r} cells, map has {}",
            inputs.risk.len()
        )));
    }
    if inputs.start_flat >= d_r || inputs.dest_flat >= d_r {
        return Err(Error::usage("start or destination index exceeds the model's sequence length"));
    }
    let mut x1 = w.pos_embed.clone();
    let start = w.start_embed.row(inputs.start_flat);
    let dest = w.dest_embed.row(inputs.dest_flat);
    for (i, &r) in inputs.risk.iter().enumerate() {
        for (k, x) in x1.row_mut(i).iter_mut().enumerate() {
            *x += r * w.risk_proj_w[k] + w.risk_proj_b[k] + start[k] + dest[k];
        }
    }
    Ok(x1)
}

/// Numerically stable softmax over each row, in place.
pub fn softmax_rows(m: &mut Mat) {
    for i in 0..m.rows {
        let row = m.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
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

/// Returns `x2 = Concat(head_1..head_h) · W_o + b_o + x1` and the attention
/// matrices.
pub fn multi_head_attention(x1: &Mat, w: &ModelWeights, config: &ModelConfig) -> (Mat, Vec<Mat>) {
    let d_r = x1.rows;
    let d_k = config.d_k;
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut concat = Mat::zeros(d_r, config.n_heads * d_k);
    let mut attention = Vec::with_capacity(config.n_heads);
    for (h, head) in w.heads.iter().enumerate() {
        let q = x1.matmul(&head.wq);
        let k = x1.matmul(&head.wk);
        let v = x1.matmul(&head.wv);
        let mut scores = q.matmul_t(&k);
        scores.data.iter_mut().for_each(|s| *s *= scale);
        softmax_rows(&mut scores);
        let out = scores.matmul(&v);
        for i in 0..d_r {
            concat.row_mut(i)[h * d_k..(h + 1) * d_k].copy_from_slice(out.row(i));
        }
        attention.push(scores);
    }
    let mut x2 = concat.matmul(&w.attn_out_w);
    x2.add_row_vector(&w.attn_out_b);
    x2.add_assign(x1);
    (x2, attention)
}

/// Per-row normalisation; returns `(affine output, pre-affine output)`.
pub fn layer_norm(x: &Mat, ln: &LayerNormWeights) -> (Mat, Mat) {
    let mut normalized = x.clone();
    for i in 0..x.rows {
        let row = normalized.row_mut(i);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    let mut out = normalized.clone();
    for i in 0..out.rows {
        for ((v, g), b) in out.row_mut(i).iter_mut().zip(&ln.gain).zip(&ln.bias) {
            *v = *v * g + b;
        }
    }
    (out, normalized)
}

/// `max(0, x W1 + b1) W2 + b2`
pub fn feed_forward(x: &Mat, w: &ModelWeights) -> Mat {
    let mut hidden = x.matmul(&w.ffn_w1);
    hidden.add_row_vector(&w.ffn_b1);
    hidden.data.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut out = hidden.matmul(&w.ffn_w2);
    out.add_row_vector(&w.ffn_b2);
    out
}

struct HeadOutput {
    h: Vec<f64>,
    ln1_normalized: Mat,
    ln2_normalized: Mat,
}

fn output_head_inner(x2: &Mat, w: &ModelWeights) -> HeadOutput {
    let (y, ln1_normalized) = layer_norm(x2, &w.ln1);
    let mut z = feed_forward(&y, w);
    z.add_assign(&y);
    let (y, ln2_normalized) = layer_norm(&z, &w.ln2);
    let mut logits = y.matmul(&w.head_out_w);
    logits.add_row_vector(&w.head_out_b);
    let scale = w.target_scale.unwrap_or(1.0);
    let h = (0..logits.rows)
        .map(|i| {
            let row = logits.row(i);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            (mean * scale).max(0.0)
        })
        .collect();
    HeadOutput {
        h,
        ln1_normalized,
        ln2_normalized,
    }
}

/// Maps `x2` to one non-negative h-value per token.
pub fn output_head(x2: &Mat, w: &ModelWeights) -> Vec<f64> {
    output_head_inner(x2, w).h
}

pub fn forward(inputs: Inputs<'_>, w: &ModelWeights, config: &ModelConfig) -> Result<Vec<f64>> {
    let x1 = embed_inputs(inputs, w, config)?;
    let (x2, _) = multi_head_attention(&x1, w, config);
    Ok(output_head(&x2, w))
}

pub fn forward_traced(
    inputs: Inputs<'_>,
    w: &ModelWeights,
    config: &ModelConfig,
) -> Result<ForwardTrace> {
    let x1 = embed_inputs(inputs, w, config)?;
    let (x2, attention) = multi_head_attention(&x1, w, config);
    let out = output_head_inner(&x2, w);
    Ok(ForwardTrace {
        x1,
        attention,
        x2,
        ln1_normalized: out.ln1_normalized,
        ln2_normalized: out.ln2_normalized,
        output: out.h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d_r: usize) -> ModelConfig {
        ModelConfig::new(d_r, 8, 2, 16).unwrap()
    }

    fn inputs(risk: &[f64]) -> Inputs<'_> {
        Inputs {
            risk,
            start_flat: 0,
            dest_flat: risk.len() - 1,
        }
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let c = cfg(4);
        let w = ModelWeights::zeros(&c);
        let x1 = embed_inputs(inputs(&[0.1, 0.2, 0.3, 0.4]), &w, &c).unwrap();
        assert!(x1.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_risk_projection() {
        let c = cfg(4);
        let mut w = ModelWeights::zeros(&c);
        w.risk_proj_w[0] = 1.0;
        let risk = [0.0, 0.02, 1.0, 0.5];
        let x1 = embed_inputs(inputs(&risk), &w, &c).unwrap();
        let col0: Vec<f64> = (0..4).map(|i| x1.at(i, 0)).collect();
        assert_eq!(col0, risk);
    }

    #[test]
    fn embedding_length_checked() {
        let c = cfg(4);
        let w = ModelWeights::zeros(&c);
        assert!(embed_inputs(inputs(&[0.0; 9]), &w, &c).is_err());
    }

    #[test]
    fn single_token_attention_is_identity() {
        let c = ModelConfig::new(1, 4, 1, 4).unwrap();
        let w = ModelWeights::random(&c, 9);
        let x1 = Mat::from_vec(1, 4, vec![0.3, -1.0, 2.0, 0.5]);
        let (x2, att) = multi_head_attention(&x1, &w, &c);
        assert_eq!(att[0].data, vec![1.0]);
        // A = [[1]] so the head output is the V row.
        let v = x1.matmul(&w.heads[0].wv);
        let mut expect = v.matmul(&w.attn_out_w);
        expect.add_row_vector(&w.attn_out_b);
        expect.add_assign(&x1);
        for (a, b) in x2.data.iter().zip(&expect.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_query_key_gives_uniform_attention() {
        let c = ModelConfig::new(5, 4, 1, 4).unwrap();
        let mut w = ModelWeights::random(&c, 3);
        w.heads[0].wq.data.fill(0.0);
        w.heads[0].wk.data.fill(0.0);
        w.attn_out_w = Mat::from_vec(4, 4, (0..16).map(|i| f64::from(i % 5 == 0)).collect());
        w.attn_out_b.fill(0.0);
        let x1 = Mat::from_vec(5, 4, (0..20).map(|i| (i as f64 * 0.37).sin()).collect());
        let (x2, att) = multi_head_attention(&x1, &w, &c);
        assert!(att[0].data.iter().all(|&a| (a - 0.2).abs() < 1e-15));
        // Output = column means of V plus the residual.
        let v = x1.matmul(&w.heads[0].wv);
        for i in 0..5 {
            for k in 0..4 {
                let mean = (0..5).map(|r| v.at(r, k)).sum::<f64>() / 5.0;
                assert!((x2.at(i, k) - (mean + x1.at(i, k))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let c = cfg(9);
        let mut w = ModelWeights::random(&c, 4);
        w.head_out_w.data.fill(0.0);
        w.head_out_b.fill(0.0);
        let risk = [0.01; 9];
        assert!(forward(inputs(&risk), &w, &c).unwrap().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut m = Mat::from_vec(1, 3, vec![1000.0, 1001.0, 999.0]);
        softmax_rows(&mut m);
        assert!(m.data.iter().all(|v| v.is_finite()));
        assert!((m.data.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_shapes() {
        let c = cfg(16);
        let w = ModelWeights::random(&c, 2);
        let risk = [0.01; 16];
        let t = forward_traced(inputs(&risk), &w, &c).unwrap();
        assert_eq!((t.x1.rows, t.x1.cols), (16, 8));
        assert_eq!(t.attention.len(), 2);
        assert!(t.attention.iter().all(|a| a.rows == 16 && a.cols == 16));
        assert_eq!((t.x2.rows, t.x2.cols), (16, 8));
        assert_eq!(t.output.len(), 16);
        assert_eq!(t.output, forward(inputs(&risk), &w, &c).unwrap());
    }
}
