use serde::{Deserialize, Serialize};

use super::index::{AttnIndex, EntryKind};
use crate::error::{Error, Result};
use crate::nn::{dot, elu, elu_grad, Matrix, Parameter, RngStream};
use crate::nn::{softmax_backward_into, softmax_into};
use crate::par;

/// Per-layer head layout: each head emits `embed_out` embedding-derived and
/// `sent_out` sentiment-derived channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub heads: usize,
    pub embed_out: usize,
    pub sent_out: usize,
}

impl Default for LayerConfig {
    fn default() -> Self {
        LayerConfig {
            heads: 8,
            embed_out: 6,
            sent_out: 2,
        }
    }
}

impl LayerConfig {
    pub fn head_width(&self) -> usize {
        self.embed_out + self.sent_out
    }

    pub fn total_out(&self) -> usize {
        self.heads * self.head_width()
    }
}

/// One multi-head attention layer. Head `k` owns rows
/// `k·embed_out..(k+1)·embed_out` of the embedding transforms (likewise for
/// the sentiment transforms) and row `k` of `attention`.
///
/// `msg_*` transform a node's own features: they form the destination half
/// of the attention input and the message a node sends to its neighbours.
/// `key_*` transform the source half of the attention input only.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    pub config: LayerConfig,
    pub in_embed: usize,
    pub in_sent: usize,
    pub msg_embed: Parameter,
    pub msg_sent: Parameter,
    pub key_embed: Parameter,
    pub key_sent: Parameter,
    /// `heads × 2·head_width`: `[a_dst_embed ‖ a_dst_sent ‖ a_src_embed ‖ a_src_sent]`.
    pub attention: Parameter,
}

/// Forward intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerCache {
    pub u_embed: Matrix,
    pub u_sent: Matrix,
    pub v_embed: Matrix,
    pub v_sent: Matrix,
    /// Pre-activation attention logits, `entries × heads`.
    pub z: Vec<f64>,
    /// Softmax-normalised coefficients, `entries × heads`.
    pub alpha: Vec<f64>,
    /// Dropout multipliers applied to `alpha`.
    pub scale: Vec<f64>,
    pub agg: Matrix,
    pub output: Matrix,
}

fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Parameter {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Parameter::new(Matrix::from_vec(rows, cols, data).expect("sized"))
}

impl GatLayer {
    pub fn zeros(config: LayerConfig, in_embed: usize, in_sent: usize) -> Self {
        let LayerConfig {
            heads,
            embed_out,
            sent_out,
        } = config;
        GatLayer {
            config,
            in_embed,
            in_sent,
            msg_embed: Parameter::zeros(heads * embed_out, in_embed),
            msg_sent: Parameter::zeros(heads * sent_out, in_sent),
            key_embed: Parameter::zeros(heads * embed_out, in_embed),
            key_sent: Parameter::zeros(heads * sent_out, in_sent),
            attention: Parameter::zeros(heads, 2 * config.head_width()),
        }
    }

    /// Uniform Glorot initialisation, bounds computed per head block.
    pub fn init(config: LayerConfig, in_embed: usize, in_sent: usize, rng: &mut RngStream) -> Self {
        let LayerConfig {
            heads,
            embed_out,
            sent_out,
        } = config;
        let hw2 = 2 * config.head_width();
        GatLayer {
            config,
            in_embed,
            in_sent,
            msg_embed: glorot(heads * embed_out, in_embed, in_embed, embed_out, rng),
            msg_sent: glorot(heads * sent_out, in_sent, in_sent, sent_out, rng),
            key_embed: glorot(heads * embed_out, in_embed, in_embed, embed_out, rng),
            key_sent: glorot(heads * sent_out, in_sent, in_sent, sent_out, rng),
            attention: glorot(heads, hw2, hw2, 1, rng),
        }
    }

    pub fn params(&self) -> [(&'static str, &Parameter); 5] {
        [
            ("msg_embed", &self.msg_embed),
            ("msg_sent", &self.msg_sent),
            ("key_embed", &self.key_embed),
            ("key_sent", &self.key_sent),
            ("attention", &self.attention),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 5] {
        [
            &mut self.msg_embed,
            &mut self.msg_sent,
            &mut self.key_embed,
            &mut self.key_sent,
            &mut self.attention,
        ]
    }

    /// Concatenation `[msg_embed h ‖ msg_sent s]` of head `k` for row `i` of
    /// the transformed inputs.
    fn head_vec(&self, embed: &Matrix, sent: &Matrix, i: usize, k: usize, out: &mut [f64]) {
        let (pe, ps) = (self.config.embed_out, self.config.sent_out);
        out[..pe].copy_from_slice(&embed.row(i)[k * pe..(k + 1) * pe]);
        out[pe..pe + ps].copy_from_slice(&sent.row(i)[k * ps..(k + 1) * ps]);
    }

    /// Raw attention coefficient of one (destination, source) pair for head `k`.
    pub fn raw_attention(&self, k: usize, dst_embed: &[f64], dst_sent: &[f64], src_embed: &[f64], src_sent: &[f64]) -> Result<f64> {
        if dst_embed.len() != self.in_embed
            || src_embed.len() != self.in_embed
            || dst_sent.len() != self.in_sent
            || src_sent.len() != self.in_sent
            || k >= self.config.heads
        {
            return Err(Error::shape("raw_attention", "feature width does not match layer input"));
        }
        let (pe, ps) = (self.config.embed_out, self.config.sent_out);
        let hw = pe + ps;
        let a = self.attention.value.row(k);
        let mut z = 0.0;
        for r in 0..pe {
            z += a[r] * dot(self.msg_embed.value.row(k * pe + r), dst_embed);
            z += a[hw + r] * dot(self.key_embed.value.row(k * pe + r), src_embed);
        }
        for r in 0..ps {
            z += a[pe + r] * dot(self.msg_sent.value.row(k * ps + r), dst_sent);
            z += a[hw + pe + r] * dot(self.key_sent.value.row(k * ps + r), src_sent);
        }
        Ok(elu(z))
    }

    fn check_inputs(&self, embed: &Matrix, sent: &Matrix, index: &AttnIndex) -> Result<()> {
        if embed.cols() != self.in_embed || sent.cols() != self.in_sent || embed.rows() != sent.rows() || embed.rows() != index.n_nodes() {
            return Err(Error::shape(
                "GatLayer::forward",
                format!(
                    "embed {:?}, sentiment {:?} for layer ({}, {}) over {} nodes",
                    embed.shape(),
                    sent.shape(),
                    self.in_embed,
                    self.in_sent,
                    index.n_nodes()
                ),
            ));
        }
        Ok(())
    }

    /// Multi-head attention over each node's neighbourhood; returns the
    /// concatenated ELU outputs (`n × total_out`) inside the cache.
    pub fn forward(
        &self,
        embed: &Matrix,
        sent: &Matrix,
        index: &AttnIndex,
        dropout: f64,
        rng: Option<&mut RngStream>,
    ) -> Result<LayerCache> {
        self.check_inputs(embed, sent, index)?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::BadRate(dropout));
        }
        let n = embed.rows();
        let heads = self.config.heads;
        let (pe, ps) = (self.config.embed_out, self.config.sent_out);
        let hw = pe + ps;

        let u_embed = embed.matmul_transposed(&self.msg_embed.value)?;
        let u_sent = sent.matmul_transposed(&self.msg_sent.value)?;
        let v_embed = embed.matmul_transposed(&self.key_embed.value)?;
        let v_sent = sent.matmul_transposed(&self.key_sent.value)?;

        // Per-node halves of the attention logit.
        let scores: Vec<(Vec<f64>, Vec<f64>)> = par::map_range(n, |i| {
            let mut buf = vec![0.0; hw];
            let mut dst = vec![0.0; heads];
            let mut src = vec![0.0; heads];
            for k in 0..heads {
                let a = self.attention.value.row(k);
                self.head_vec(&u_embed, &u_sent, i, k, &mut buf);
                dst[k] = dot(&a[..hw], &buf);
                self.head_vec(&v_embed, &v_sent, i, k, &mut buf);
                src[k] = dot(&a[hw..], &buf);
            }
            (dst, src)
        });

        let per_dst: Vec<(Vec<f64>, Vec<f64>)> = par::map_range(n, |i| {
            let group = index.group(i);
            let len = group.len();
            let mut z = vec![0.0; len * heads];
            let mut alpha = vec![0.0; len * heads];
            let mut e = vec![0.0; len];
            let mut a = vec![0.0; len];
            for k in 0..heads {
                for (slot, idx) in group.clone().enumerate() {
                    let entry = index.entries[idx];
                    let zz = scores[i].0[k] + scores[entry.src].1[k];
                    z[slot * heads + k] = zz;
                    e[slot] = elu(zz);
                }
                softmax_into(&e, &mut a);
                for slot in 0..len {
                    alpha[slot * heads + k] = a[slot];
                }
            }
            (z, alpha)
        });
        let mut z = Vec::with_capacity(index.entries.len() * heads);
        let mut alpha = Vec::with_capacity(index.entries.len() * heads);
        for (zi, ai) in per_dst {
            z.extend(zi);
            alpha.extend(ai);
        }

        let mut scale = vec![1.0; alpha.len()];
        if let Some(rng) = rng {
            if dropout > 0.0 {
                let keep = 1.0 / (1.0 - dropout);
                for (idx, entry) in index.entries.iter().enumerate() {
                    if entry.kind == EntryKind::Fallback {
                        continue;
                    }
                    for k in 0..heads {
                        scale[idx * heads + k] = if rng.next_f64() < dropout { 0.0 } else { keep };
                    }
                }
            }
        }

        let width = heads * hw;
        let mut agg = Matrix::zeros(n, width);
        par::for_each_row(agg.as_mut_slice(), width, |i, row| {
            let mut buf = vec![0.0; hw];
            for idx in index.group(i) {
                let src = index.entries[idx].src;
                for k in 0..heads {
                    let w = alpha[idx * heads + k] * scale[idx * heads + k];
                    if w == 0.0 {
                        continue;
                    }
                    self.head_vec(&u_embed, &u_sent, src, k, &mut buf);
                    for (o, b) in row[k * hw..(k + 1) * hw].iter_mut().zip(&buf) {
                        *o += w * b;
                    }
                }
            }
        });
        let mut output = agg.clone();
        output.as_mut_slice().iter_mut().for_each(|x| *x = elu(*x));
        Ok(LayerCache {
            u_embed,
            u_sent,
            v_embed,
            v_sent,
            z,
            alpha,
            scale,
            agg,
            output,
        })
    }

    /// Accumulates parameter gradients given `∂L/∂output`; returns
    /// `∂L/∂embed` when `input_grad` is set.
    pub fn backward(
        &mut self,
        embed: &Matrix,
        sent: &Matrix,
        index: &AttnIndex,
        cache: &LayerCache,
        d_output: &Matrix,
        input_grad: bool,
    ) -> Result<Option<Matrix>> {
        self.check_inputs(embed, sent, index)?;
        let n = embed.rows();
        let heads = self.config.heads;
        let (pe, ps) = (self.config.embed_out, self.config.sent_out);
        let hw = pe + ps;
        let width = heads * hw;
        if d_output.shape() != (n, width) {
            return Err(Error::shape(
                "GatLayer::backward",
                format!("d_output {:?}, expected ({n}, {width})", d_output.shape()),
            ));
        }

        let mut d_agg = d_output.clone();
        for (d, a) in d_agg.as_mut_slice().iter_mut().zip(cache.agg.as_slice()) {
            *d *= elu_grad(*a);
        }

        // ∂L/∂z per entry, grouped by destination.
        let per_dst: Vec<Vec<f64>> = par::map_range(n, |i| {
            let group = index.group(i);
            let len = group.len();
            let mut dz = vec![0.0; len * heads];
            let mut alpha = vec![0.0; len];
            let mut d_alpha = vec![0.0; len];
            let mut d_e = vec![0.0; len];
            let mut buf = vec![0.0; hw];
            for k in 0..heads {
                let g = &d_agg.row(i)[k * hw..(k + 1) * hw];
                for (slot, idx) in group.clone().enumerate() {
                    let src = index.entries[idx].src;
                    self.head_vec(&cache.u_embed, &cache.u_sent, src, k, &mut buf);
                    alpha[slot] = cache.alpha[idx * heads + k];
                    d_alpha[slot] = dot(g, &buf) * cache.scale[idx * heads + k];
                }
                softmax_backward_into(&alpha, &d_alpha, &mut d_e);
                for (slot, idx) in group.clone().enumerate() {
                    dz[slot * heads + k] = d_e[slot] * elu_grad(cache.z[idx * heads + k]);
                }
            }
            dz
        });
        let dz: Vec<f64> = per_dst.into_iter().flatten().collect();

        let attn = &self.attention.value;
        // Per node: gradient wrt its message vector (as a source) plus its
        // destination score, and wrt its key vector.
        let per_node: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = par::map_range(n, |j| {
            let mut du = vec![0.0; width];
            let mut dv = vec![0.0; width];
            let mut d_dst = vec![0.0; heads];
            let mut d_src = vec![0.0; heads];
            for idx in index.group(j) {
                for k in 0..heads {
                    d_dst[k] += dz[idx * heads + k];
                }
            }
            for &idx in index.sourced_from(j) {
                let dst = index.entries[idx].dst;
                for k in 0..heads {
                    let w = cache.alpha[idx * heads + k] * cache.scale[idx * heads + k];
                    let g = &d_agg.row(dst)[k * hw..(k + 1) * hw];
                    for (o, gv) in du[k * hw..(k + 1) * hw].iter_mut().zip(g) {
                        *o += w * gv;
                    }
                    d_src[k] += dz[idx * heads + k];
                }
            }
            for k in 0..heads {
                let a = attn.row(k);
                for r in 0..hw {
                    du[k * hw + r] += d_dst[k] * a[r];
                    dv[k * hw + r] = d_src[k] * a[hw + r];
                }
            }
            (du, dv, d_dst, d_src)
        });

        let mut d_u_embed = Matrix::zeros(n, heads * pe);
        let mut d_u_sent = Matrix::zeros(n, heads * ps);
        let mut d_v_embed = Matrix::zeros(n, heads * pe);
        let mut d_v_sent = Matrix::zeros(n, heads * ps);
        let mut d_attn = Matrix::zeros(heads, 2 * hw);
        let mut buf = vec![0.0; hw];
        for (j, (du, dv, d_dst, d_src)) in per_node.iter().enumerate() {
            for k in 0..heads {
                d_u_embed.row_mut(j)[k * pe..(k + 1) * pe].copy_from_slice(&du[k * hw..k * hw + pe]);
                d_u_sent.row_mut(j)[k * ps..(k + 1) * ps].copy_from_slice(&du[k * hw + pe..(k + 1) * hw]);
                d_v_embed.row_mut(j)[k * pe..(k + 1) * pe].copy_from_slice(&dv[k * hw..k * hw + pe]);
                d_v_sent.row_mut(j)[k * ps..(k + 1) * ps].copy_from_slice(&dv[k * hw + pe..(k + 1) * hw]);
                let da = d_attn.row_mut(k);
                if d_dst[k] != 0.0 {
                    self.head_vec(&cache.u_embed, &cache.u_sent, j, k, &mut buf);
                    for r in 0..hw {
                        da[r] += d_dst[k] * buf[r];
                    }
                }
                if d_src[k] != 0.0 {
                    self.head_vec(&cache.v_embed, &cache.v_sent, j, k, &mut buf);
                    for r in 0..hw {
                        da[hw + r] += d_src[k] * buf[r];
                    }
                }
            }
        }
        self.attention.grad.add_assign(&d_attn)?;
        self.msg_embed.grad.add_assign(&d_u_embed.transposed_matmul(embed)?)?;
        self.msg_sent.grad.add_assign(&d_u_sent.transposed_matmul(sent)?)?;
        self.key_embed.grad.add_assign(&d_v_embed.transposed_matmul(embed)?)?;
        self.key_sent.grad.add_assign(&d_v_sent.transposed_matmul(sent)?)?;
        if !input_grad {
            return Ok(None);
        }
        let mut d_embed = d_u_embed.matmul(&self.msg_embed.value)?;
        d_embed.add_assign(&d_v_embed.matmul(&self.key_embed.value)?)?;
        Ok(Some(d_embed))
    }
}
