//! Forward pass. Pre-norm decoder blocks with causal attention; an optional
//! set of per-layer key/value rows can be prepended to every attention
//! window. Prefix rows carry no position embedding and produce no output
//! rows; they only extend what the real tokens may attend to.
//!
//! Every intermediate needed by the manual backward pass is recorded in a
//! [`ForwardTrace`].

use crate::error::{Error, Result};
use crate::model::params::{BaseParams, LN_EPS};
use crate::model::prefix::PrefixParams;
use crate::scalar::{c, Scalar};
use ndarray::{concatenate, s, Array1, Array2, Axis};

/// Row-normalized activations plus what the backward pass needs.
#[derive(Debug, Clone)]
pub struct LnTrace<T> {
    /// `(x - mean) * inv_std`, before gain/bias.
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
    /// `xhat * gain + bias`, the values fed to the next matmul.
    pub out: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace<T> {
    pub x_in: Array2<T>,
    pub ln1: LnTrace<T>,
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    /// Per head, `t x (m_len + t)` attention weights after softmax.
    pub att: Vec<Array2<T>>,
    /// Concatenated head outputs before the output projection.
    pub ctx: Array2<T>,
    pub x_mid: Array2<T>,
    pub ln2: LnTrace<T>,
    /// MLP pre-activation.
    pub u: Array2<T>,
    /// `gelu(u)`.
    pub h: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub ids: Vec<u32>,
    pub m_len: usize,
    pub layers: Vec<LayerTrace<T>>,
    pub ln_f: LnTrace<T>,
    pub logits: Array2<T>,
}

pub(crate) fn layer_norm<T: Scalar>(
    x: &Array2<T>,
    gain: &Array1<T>,
    bias: &Array1<T>,
) -> LnTrace<T> {
    let (rows, cols) = x.dim();
    let mut xhat = Array2::zeros((rows, cols));
    let mut inv_std = Array1::zeros(rows);
    let mut out = Array2::zeros((rows, cols));
    let n = c::<T>(cols as f64);
    let eps = c::<T>(LN_EPS);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / n;
        let mut var = T::zero();
        for &xv in row.iter() {
            let d = xv - mean;
            var += d * d;
        }
        var /= n;
        let is = (var + eps).sqrt().recip();
        inv_std[r] = is;
        for col in 0..cols {
            let xh = (x[[r, col]] - mean) * is;
            xhat[[r, col]] = xh;
            out[[r, col]] = xh * gain[col] + bias[col];
        }
    }
    LnTrace { xhat, inv_std, out }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let half = c::<T>(0.5);
    let k = c::<T>(GELU_C);
    let a = c::<T>(GELU_A);
    half * x * (T::one() + (k * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_prime<T: Scalar>(x: T) -> T {
    let half = c::<T>(0.5);
    let k = c::<T>(GELU_C);
    let a = c::<T>(GELU_A);
    let three = c::<T>(3.0);
    let inner = k * (x + a * x * x * x);
    let t = inner.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * k * (T::one() + three * a * x * x)
}

/// Adds a row vector to every row of `x`.
pub(crate) fn add_row<T: Scalar>(x: &mut Array2<T>, row: &Array1<T>) {
    for mut r in x.rows_mut() {
        r += row;
    }
}

/// Softmax over the first `allowed` entries of the row; the rest become 0.
fn softmax_prefix_row<T: Scalar>(row: &mut [T], allowed: usize) {
    debug_assert!(allowed >= 1 && allowed <= row.len());
    let mut max = row[0];
    for &x in &row[1..allowed] {
        if x > max {
            max = x;
        }
    }
    let mut sum = T::zero();
    for x in row[..allowed].iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row[..allowed].iter_mut() {
        *x /= sum;
    }
    for x in row[allowed..].iter_mut() {
        *x = T::zero();
    }
}

/// Runs the decoder over `ids`, optionally giving every attention layer
/// `prefix` key/value rows that all positions may attend to.
///
/// `forward` never touches the prefix code path; `forward_with_prefix(None)`
/// routes through it with zero prefix rows. The two must agree bitwise,
/// which is checked in the test suite.
pub fn forward<T: Scalar>(base: &BaseParams<T>, ids: &[u32]) -> Result<ForwardTrace<T>> {
    base.validate_ids(ids)?;
    run(base, None, ids)
}

pub fn forward_with_prefix<T: Scalar>(
    base: &BaseParams<T>,
    prefix: Option<&PrefixParams<T>>,
    ids: &[u32],
) -> Result<ForwardTrace<T>> {
    base.validate_ids(ids)?;
    if let Some(p) = prefix {
        p.validate(&base.cfg)?;
        run(base, Some(p), ids)
    } else {
        let empty = PrefixParams::zeros(&base.cfg, 0);
        run(base, Some(&empty), ids)
    }
}

fn run<T: Scalar>(
    base: &BaseParams<T>,
    prefix: Option<&PrefixParams<T>>,
    ids: &[u32],
) -> Result<ForwardTrace<T>> {
    let cfg = &base.cfg;
    let t_len = ids.len();
    let m_len = prefix.map_or(0, |p| p.m_len);
    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = c::<T>(1.0 / (dh as f64).sqrt());

    let mut x = Array2::zeros((t_len, cfg.hidden));
    for (t, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(t);
        row.assign(&base.tok_emb.row(id as usize));
        row += &base.pos_emb.row(t);
    }

    let mut layers = Vec::with_capacity(cfg.layers);
    for (li, lp) in base.layers.iter().enumerate() {
        let x_in = x;
        let ln1 = layer_norm(&x_in, &lp.ln1_g, &lp.ln1_b);
        let mut q = ln1.out.dot(&lp.w_q);
        add_row(&mut q, &lp.b_q);
        let mut k = ln1.out.dot(&lp.w_k);
        add_row(&mut k, &lp.b_k);
        let mut v = ln1.out.dot(&lp.w_v);
        add_row(&mut v, &lp.b_v);

        let mut att = Vec::with_capacity(heads);
        let mut ctx = Array2::zeros((t_len, cfg.hidden));
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let q_h = q.slice(cols).to_owned();
            let k_h = k.slice(cols).to_owned();
            let v_h = v.slice(cols).to_owned();
            let (k_cat, v_cat) = match prefix {
                Some(p) => (
                    concatenate(Axis(0), &[p.keys[li].slice(cols), k_h.view()])
                        .expect("prefix concat"),
                    concatenate(Axis(0), &[p.values[li].slice(cols), v_h.view()])
                        .expect("prefix concat"),
                ),
                None => (k_h, v_h),
            };
            let mut scores = q_h.dot(&k_cat.t());
            scores *= scale;
            for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                softmax_prefix_row(row.as_slice_mut().expect("standard layout"), m_len + i + 1);
            }
            ctx.slice_mut(cols).assign(&scores.dot(&v_cat));
            att.push(scores);
        }
        let mut attn_out = ctx.dot(&lp.w_o);
        add_row(&mut attn_out, &lp.b_o);
        let x_mid = &x_in + &attn_out;

        let ln2 = layer_norm(&x_mid, &lp.ln2_g, &lp.ln2_b);
        let mut u = ln2.out.dot(&lp.w_fc);
        add_row(&mut u, &lp.b_fc);
        let h = u.mapv(gelu);
        let mut mlp = h.dot(&lp.w_proj);
        add_row(&mut mlp, &lp.b_proj);
        x = &x_mid + &mlp;

        layers.push(LayerTrace {
            x_in,
            ln1,
            q,
            k,
            v,
            att,
            ctx,
            x_mid,
            ln2,
            u,
            h,
        });
    }

    let ln_f = layer_norm(&x, &base.ln_f_g, &base.ln_f_b);
    let mut logits = ln_f.out.dot(&base.w_out);
    add_row(&mut logits, &base.b_out);
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "forward logits".to_string(),
        });
    }
    Ok(ForwardTrace {
        ids: ids.to_vec(),
        m_len,
        layers,
        ln_f,
        logits,
    })
}
