use super::{shape_err, Graph, NnError, Real, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x · w + b` for `x: [n×d_in]`, `w: [d_in×d_out]`, `b: [d_out]`.
pub fn linear<T: Real>(g: &mut Graph<T>, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
    let xw = g.matmul(x, w)?;
    g.add_bias(xw, b)
}

/// Per-row normalization with `eps = 1e-5` inside the square root.
pub fn layer_norm<T: Real>(g: &mut Graph<T>, x: Var, gain: Var, bias: Var) -> Result<Var, NnError> {
    g.layer_norm(x, gain, bias, T::lit(LAYER_NORM_EPS))
}

/// Sinusoidal table: `PE[pos, 2i] = sin(pos / 10000^(2i/d))`,
/// `PE[pos, 2i+1] = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding<T: Real>(seq_len: usize, d_model: usize) -> Result<Tensor<T>, NnError> {
    if d_model % 2 != 0 {
        return Err(NnError::OddModelDim(d_model));
    }
    let mut data = Vec::with_capacity(seq_len * d_model);
    for pos in 0..seq_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / d_model as f64);
            data.push(T::lit(angle.sin()));
            data.push(T::lit(angle.cos()));
        }
    }
    Tensor::new(&[seq_len, d_model], data)
}

/// Query/key/value/output projections, each `[d×d]` with a `[d]` bias.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product self-attention over `n_heads` column blocks of width
/// `d / n_heads`. Keys with `key_mask[j] == false` get zero weight.
pub fn multi_head_self_attention<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: &AttentionParams,
    n_heads: usize,
    key_mask: Option<&[bool]>,
) -> Result<Var, NnError> {
    let (_, d) = g.value(x).dims2();
    if n_heads == 0 || d % n_heads != 0 {
        return Err(NnError::HeadDivisibility { dim: d, heads: n_heads });
    }
    let head = d / n_heads;
    let q = linear(g, x, p.wq, p.bq)?;
    let k = linear(g, x, p.wk, p.bk)?;
    let v = linear(g, x, p.wv, p.bv)?;
    let scale = T::one() / T::from_usize(head).unwrap().sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.slice_cols(q, h * head, head)?;
        let kh = g.slice_cols(k, h * head, head)?;
        let vh = g.slice_cols(v, h * head, head)?;
        let logits = g.matmul_bt(qh, kh)?;
        let logits = g.scale(logits, scale);
        let weights = g.softmax_rows(logits, key_mask)?;
        heads.push(g.matmul(weights, vh)?);
    }
    let joined = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    linear(g, joined, p.wo, p.bo)
}

/// One pre-norm encoder block.
#[derive(Debug, Clone, Copy)]
pub struct EncoderParams {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub attn: AttentionParams,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub ffn_w1: Var,
    pub ffn_b1: Var,
    pub ffn_w2: Var,
    pub ffn_b2: Var,
}

/// `y = x + Attn(LN(x))`, then `y + FFN(LN(y))` with a ReLU feed-forward.
pub fn encoder_layer<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: &EncoderParams,
    n_heads: usize,
    key_mask: Option<&[bool]>,
) -> Result<Var, NnError> {
    let (_, d) = g.value(x).dims2();
    if g.value(p.ffn_w2).dims2().1 != d {
        return Err(shape_err("encoder_layer", "feed-forward output width differs from model width"));
    }
    let h = layer_norm(g, x, p.ln1_gain, p.ln1_bias)?;
    let a = multi_head_self_attention(g, h, &p.attn, n_heads, key_mask)?;
    let y = g.add(x, a)?;
    let h2 = layer_norm(g, y, p.ln2_gain, p.ln2_bias)?;
    let f = linear(g, h2, p.ffn_w1, p.ffn_b1)?;
    let f = g.relu(f);
    let f = linear(g, f, p.ffn_w2, p.ffn_b2)?;
    g.add(y, f)
}
