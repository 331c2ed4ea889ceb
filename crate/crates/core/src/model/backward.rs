//! Manual reverse-mode differentiation of the forward pass.
//!
//! Takes the gradient of some scalar loss with respect to the logits and
//! pushes it back through the output head, every decoder block, and the
//! embeddings, producing gradients for all base parameters and, when a
//! prefix was attached, for its key/value rows.

use crate::error::{Error, Result};
use crate::model::forward::{gelu_prime, ForwardTrace, LnTrace};
use crate::model::params::BaseParams;
use crate::model::prefix::PrefixParams;
use crate::scalar::{c, Scalar};
use ndarray::{concatenate, s, Array1, Array2, Axis};

#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub base: BaseParams<T>,
    pub prefix: Option<PrefixParams<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros(base: &BaseParams<T>, prefix_rows: Option<usize>) -> Result<Self> {
        Ok(ModelGrads {
            base: BaseParams::zeros(base.cfg)?,
            prefix: prefix_rows.map(|m| PrefixParams::zeros(&base.cfg, m)),
        })
    }

    pub fn add_assign(&mut self, other: &ModelGrads<T>) -> Result<()> {
        let mine = self.base.flat_mut();
        let theirs = other.base.flat();
        if mine.len() != theirs.len() {
            return Err(Error::LengthMismatch {
                what: "gradient tensors".to_string(),
                left: mine.len(),
                right: theirs.len(),
            });
        }
        for (a, b) in mine.into_iter().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        match (&mut self.prefix, &other.prefix) {
            (Some(p), Some(q)) => {
                if p.m_len != q.m_len {
                    return Err(Error::LengthMismatch {
                        what: "prefix gradient rows".to_string(),
                        left: p.m_len,
                        right: q.m_len,
                    });
                }
                for (a, b) in p.keys.iter_mut().zip(&q.keys) {
                    *a += b;
                }
                for (a, b) in p.values.iter_mut().zip(&q.values) {
                    *a += b;
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::LengthMismatch {
                    what: "prefix gradient presence".to_string(),
                    left: self.prefix.is_some() as usize,
                    right: other.prefix.is_some() as usize,
                });
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for slice in self.base.flat_mut() {
            for x in slice {
                *x *= factor;
            }
        }
        if let Some(p) = &mut self.prefix {
            for a in p.keys.iter_mut().chain(p.values.iter_mut()) {
                a.mapv_inplace(|x| x * factor);
            }
        }
    }
}

/// `d loss / d x` for `y = xhat * gain + bias`, plus gain/bias gradients.
fn ln_backward<T: Scalar>(
    dout: &Array2<T>,
    tr: &LnTrace<T>,
    gain: &Array1<T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let (rows, cols) = dout.dim();
    let n = c::<T>(cols as f64);
    let mut dx = Array2::zeros((rows, cols));
    let mut dgain = Array1::zeros(cols);
    let mut dbias = Array1::zeros(cols);
    for r in 0..rows {
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for col in 0..cols {
            let d = dout[[r, col]];
            let xh = tr.xhat[[r, col]];
            dgain[col] += d * xh;
            dbias[col] += d;
            let dxh = d * gain[col];
            m1 += dxh;
            m2 += dxh * xh;
        }
        m1 /= n;
        m2 /= n;
        let is = tr.inv_std[r];
        for col in 0..cols {
            let dxh = dout[[r, col]] * gain[col];
            dx[[r, col]] = is * (dxh - m1 - tr.xhat[[r, col]] * m2);
        }
    }
    (dx, dgain, dbias)
}

/// Softmax jacobian applied row-wise: `ds = a .* (da - <da, a>)` over the
/// first `allowed` columns; columns beyond that hold zero weight.
fn softmax_backward_row<T: Scalar>(att: &[T], datt: &[T], ds: &mut [T], allowed: usize) {
    let mut dot = T::zero();
    for j in 0..allowed {
        dot += datt[j] * att[j];
    }
    for j in 0..allowed {
        ds[j] = att[j] * (datt[j] - dot);
    }
    for d in ds[allowed..].iter_mut() {
        *d = T::zero();
    }
}

pub fn backward<T: Scalar>(
    base: &BaseParams<T>,
    prefix: Option<&PrefixParams<T>>,
    trace: &ForwardTrace<T>,
    dlogits: &Array2<T>,
) -> Result<ModelGrads<T>> {
    let cfg = &base.cfg;
    if dlogits.dim() != trace.logits.dim() {
        return Err(Error::ShapeMismatch {
            name: "dlogits".to_string(),
            expected: format!("{:?}", trace.logits.dim()),
            found: format!("{:?}", dlogits.dim()),
        });
    }
    let m_len = prefix.map_or(0, |p| p.m_len);
    if m_len != trace.m_len {
        return Err(Error::LengthMismatch {
            what: "prefix rows vs trace".to_string(),
            left: m_len,
            right: trace.m_len,
        });
    }
    let t_len = trace.ids.len();
    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = c::<T>(1.0 / (dh as f64).sqrt());

    let mut g = ModelGrads::zeros(base, prefix.map(|p| p.m_len))?;

    // Output head.
    g.base.w_out = trace.ln_f.out.t().dot(dlogits);
    g.base.b_out = dlogits.sum_axis(Axis(0));
    let dxf = dlogits.dot(&base.w_out.t());
    let (mut dx, dgf, dbf) = ln_backward(&dxf, &trace.ln_f, &base.ln_f_g);
    g.base.ln_f_g = dgf;
    g.base.ln_f_b = dbf;

    for li in (0..cfg.layers).rev() {
        let lt = &trace.layers[li];
        let lp = &base.layers[li];
        let gl = &mut g.base.layers[li];

        // MLP branch: x_out = x_mid + proj(gelu(fc(ln2(x_mid)))).
        let dmlp = &dx;
        gl.w_proj = lt.h.t().dot(dmlp);
        gl.b_proj = dmlp.sum_axis(Axis(0));
        let dh_act = dmlp.dot(&lp.w_proj.t());
        let mut du = dh_act;
        du.zip_mut_with(&lt.u, |d, &u| *d *= gelu_prime(u));
        gl.w_fc = lt.ln2.out.t().dot(&du);
        gl.b_fc = du.sum_axis(Axis(0));
        let dxn2 = du.dot(&lp.w_fc.t());
        let (dxm_ln, dg2, db2) = ln_backward(&dxn2, &lt.ln2, &lp.ln2_g);
        gl.ln2_g = dg2;
        gl.ln2_b = db2;
        let dx_mid = &dx + &dxm_ln;

        // Attention branch: x_mid = x_in + (ctx w_o + b_o).
        gl.w_o = lt.ctx.t().dot(&dx_mid);
        gl.b_o = dx_mid.sum_axis(Axis(0));
        let dctx = dx_mid.dot(&lp.w_o.t());

        let mut dq = Array2::<T>::zeros((t_len, cfg.hidden));
        let mut dk = Array2::<T>::zeros((t_len, cfg.hidden));
        let mut dv = Array2::<T>::zeros((t_len, cfg.hidden));
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let q_h = lt.q.slice(cols).to_owned();
            let k_h = lt.k.slice(cols).to_owned();
            let v_h = lt.v.slice(cols).to_owned();
            let (k_cat, v_cat) = match prefix {
                Some(p) => (
                    concatenate(Axis(0), &[p.keys[li].slice(cols), k_h.view()])
                        .expect("prefix concat"),
                    concatenate(Axis(0), &[p.values[li].slice(cols), v_h.view()])
                        .expect("prefix concat"),
                ),
                None => (k_h, v_h),
            };
            let att = &lt.att[hd];
            let dctx_h = dctx.slice(cols).to_owned();
            let dv_cat = att.t().dot(&dctx_h);
            let datt = dctx_h.dot(&v_cat.t());
            let mut ds = Array2::<T>::zeros((t_len, m_len + t_len));
            for i in 0..t_len {
                softmax_backward_row(
                    att.row(i).as_slice().expect("standard layout"),
                    datt.row(i).as_slice().expect("standard layout"),
                    ds.row_mut(i).as_slice_mut().expect("standard layout"),
                    m_len + i + 1,
                );
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&k_cat));
            let dk_cat = ds.t().dot(&q_h);
            dk.slice_mut(cols)
                .assign(&dk_cat.slice(s![m_len.., ..]));
            dv.slice_mut(cols)
                .assign(&dv_cat.slice(s![m_len.., ..]));
            if let Some(pg) = &mut g.prefix {
                pg.keys[li]
                    .slice_mut(cols)
                    .assign(&dk_cat.slice(s![..m_len, ..]));
                pg.values[li]
                    .slice_mut(cols)
                    .assign(&dv_cat.slice(s![..m_len, ..]));
            }
        }

        gl.w_q = lt.ln1.out.t().dot(&dq);
        gl.b_q = dq.sum_axis(Axis(0));
        gl.w_k = lt.ln1.out.t().dot(&dk);
        gl.b_k = dk.sum_axis(Axis(0));
        gl.w_v = lt.ln1.out.t().dot(&dv);
        gl.b_v = dv.sum_axis(Axis(0));
        let dxn1 = dq.dot(&lp.w_q.t()) + dk.dot(&lp.w_k.t()) + dv.dot(&lp.w_v.t());
        let (dxin_ln, dg1, db1) = ln_backward(&dxn1, &lt.ln1, &lp.ln1_g);
        gl.ln1_g = dg1;
        gl.ln1_b = db1;
        dx = &dx_mid + &dxin_ln;
    }

    for (t, &id) in trace.ids.iter().enumerate() {
        let mut te = g.base.tok_emb.row_mut(id as usize);
        te += &dx.row(t);
        let mut pe = g.base.pos_emb.row_mut(t);
        pe += &dx.row(t);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::forward::{forward, forward_with_prefix};

    fn toy() -> BaseParams<f64> {
        BaseParams::init(ModelConfig::toy(16), 3).unwrap()
    }

    /// Loss = sum of logits at chosen coordinates; its gradient through any
    /// one parameter coordinate must match a central finite difference.
    fn fd_probe(
        base: &mut BaseParams<f64>,
        prefix: Option<&PrefixParams<f64>>,
        ids: &[u32],
        slice_idx: usize,
        coord: usize,
    ) -> (f64, f64) {
        let dlog = {
            let tr = forward_with_prefix(base, prefix, ids).unwrap();
            Array2::ones(tr.logits.dim())
        };
        let tr = forward_with_prefix(base, prefix, ids).unwrap();
        let grads = backward(base, prefix, &tr, &dlog).unwrap();
        let analytic = grads.base.flat()[slice_idx][coord];
        let eps = 1e-5;
        let orig = base.flat()[slice_idx][coord];
        base.flat_mut()[slice_idx][coord] = orig + eps;
        let up: f64 = forward_with_prefix(base, prefix, ids).unwrap().logits.sum();
        base.flat_mut()[slice_idx][coord] = orig - eps;
        let dn: f64 = forward_with_prefix(base, prefix, ids).unwrap().logits.sum();
        base.flat_mut()[slice_idx][coord] = orig;
        (analytic, (up - dn) / (2.0 * eps))
    }

    #[test]
    fn base_gradients_match_finite_differences_spot_check() {
        let mut base = toy();
        let ids = [1u32, 5, 2, 9];
        // One coordinate from several parameter groups: tok_emb, w_q of
        // layer 0, w_fc of layer 1, w_out.
        for (slice_idx, coord) in [(0usize, 17usize), (4, 33), (30, 101), (36, 55)] {
            let (a, n) = fd_probe(&mut base, None, &ids, slice_idx, coord);
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!(
                (a - n).abs() / denom < 1e-6,
                "slice {slice_idx} coord {coord}: analytic {a} vs fd {n}"
            );
        }
    }

    #[test]
    fn prefix_gradients_match_finite_differences() {
        let base = toy();
        let mut p = PrefixParams::zeros(&base.cfg, 2);
        p.keys[0].fill(0.05);
        p.values[0].fill(-0.03);
        p.keys[1].fill(0.02);
        p.values[1].fill(0.04);
        let ids = [3u32, 8, 1];
        let tr = forward_with_prefix(&base, Some(&p), &ids).unwrap();
        let dlog = Array2::ones(tr.logits.dim());
        let grads = backward(&base, Some(&p), &tr, &dlog).unwrap();
        let pg = grads.prefix.as_ref().unwrap();
        let eps = 1e-6;
        for (li, row, col, key) in [(0usize, 0usize, 3usize, true), (1, 1, 7, false)] {
            let analytic = if key {
                pg.keys[li][[row, col]]
            } else {
                pg.values[li][[row, col]]
            };
            let probe = |delta: f64| -> f64 {
                let mut p2 = p.clone();
                if key {
                    p2.keys[li][[row, col]] += delta;
                } else {
                    p2.values[li][[row, col]] += delta;
                }
                forward_with_prefix(&base, Some(&p2), &ids)
                    .unwrap()
                    .logits
                    .sum()
            };
            let fd = (probe(eps) - probe(-eps)) / (2.0 * eps);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic - fd).abs() / denom < 1e-5,
                "layer {li} [{row},{col}] key={key}: {analytic} vs {fd}"
            );
        }
    }

    #[test]
    fn grad_accumulation_and_scaling() {
        let base = toy();
        let ids = [2u32, 4, 6];
        let tr = forward(&base, &ids).unwrap();
        let dlog = Array2::ones(tr.logits.dim());
        let g1 = backward(&base, None, &tr, &dlog).unwrap();
        let mut acc = ModelGrads::zeros(&base, None).unwrap();
        acc.add_assign(&g1).unwrap();
        acc.add_assign(&g1).unwrap();
        acc.scale(0.5);
        for (a, b) in acc.base.flat().into_iter().zip(g1.base.flat()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
