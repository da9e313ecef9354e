use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use super::{LayerOffsets, Model, Scalar};
use crate::error::Result;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

struct LnCache<F> {
    xhat: Array2<F>,
    rstd: Array1<F>,
}

struct LayerCache<F> {
    ln1: LnCache<F>,
    h1: Array2<F>,
    qkv: Array2<F>,
    probs: Vec<Array2<F>>,
    att: Array2<F>,
    ln2: LnCache<F>,
    h2: Array2<F>,
    u: Array2<F>,
    a: Array2<F>,
}

/// Activations of one forward pass, kept for the backward pass.
pub struct Forward<F> {
    pub tokens: Vec<u32>,
    /// Positions whose logits were computed.
    pub rows: Vec<usize>,
    /// `rows.len() × vocab` logits.
    pub logits: Array2<F>,
    layers: Vec<LayerCache<F>>,
    lnf: LnCache<F>,
    hf: Array2<F>,
}

/// Flat gradient buffer with the model's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F>(pub Vec<F>);

impl<F: Scalar> Gradients<F> {
    pub fn zeros(n: usize) -> Self {
        Self(vec![F::zero(); n])
    }

    pub fn norm(&self) -> F {
        self.0.iter().map(|g| *g * *g).sum::<F>().sqrt()
    }

    pub fn scale(&mut self, s: F) {
        self.0.iter_mut().for_each(|g| *g *= s);
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

fn mat<F>(p: &[F], off: usize, r: usize, c: usize) -> ArrayView2<'_, F> {
    ArrayView2::from_shape((r, c), &p[off..off + r * c]).expect("layout shape")
}

fn vec1<F>(p: &[F], off: usize, n: usize) -> ArrayView1<'_, F> {
    ArrayView1::from(&p[off..off + n])
}

fn mat_mut<F>(p: &mut [F], off: usize, r: usize, c: usize) -> ArrayViewMut2<'_, F> {
    ArrayViewMut2::from_shape((r, c), &mut p[off..off + r * c]).expect("layout shape")
}

fn vec_mut<F>(p: &mut [F], off: usize, n: usize) -> ArrayViewMut1<'_, F> {
    ArrayViewMut1::from(&mut p[off..off + n])
}

fn layer_norm<F: Scalar>(x: &Array2<F>, g: ArrayView1<F>, b: ArrayView1<F>) -> (Array2<F>, LnCache<F>) {
    let d = F::lit(x.ncols() as f64);
    let eps = F::lit(LN_EPS);
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| *v * *v).sum::<F>() / d;
        *r = F::one() / (var + eps).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| v * rs);
    }
    let y = &xhat * &g + &b;
    (y, LnCache { xhat, rstd })
}

/// Returns dx; accumulates into dg and db.
fn layer_norm_backward<F: Scalar>(
    dy: &Array2<F>,
    cache: &LnCache<F>,
    g: ArrayView1<F>,
    mut dg: ArrayViewMut1<F>,
    mut db: ArrayViewMut1<F>,
) -> Array2<F> {
    dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    db += &dy.sum_axis(Axis(0));
    let d = F::lit(dy.ncols() as f64);
    let dxhat = dy * &g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let m1 = dh.sum() / d;
        let m2 = dh.iter().zip(xh.iter()).map(|(a, b)| *a * *b).sum::<F>() / d;
        let r = cache.rstd[i];
        for j in 0..dy.ncols() {
            dx[(i, j)] = r * (dh[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

fn gelu<F: Scalar>(x: F) -> F {
    let t = (F::lit(GELU_C) * (x + F::lit(GELU_A) * x * x * x)).tanh();
    F::lit(0.5) * x * (F::one() + t)
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::lit(GELU_C);
    let a = F::lit(GELU_A);
    let t = (c * (x + a * x * x * x)).tanh();
    let half = F::lit(0.5);
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + F::lit(3.0) * a * x * x)
}

impl<F: Scalar> Model<F> {
    /// Logits for every position.
    pub fn logits(&self, tokens: &[u32]) -> Result<Array2<F>> {
        let rows: Vec<usize> = (0..tokens.len()).collect();
        Ok(self.forward(tokens, &rows)?.logits)
    }

    /// Runs the network and computes logits only at `rows`.
    pub fn forward(&self, tokens: &[u32], rows: &[usize]) -> Result<Forward<F>> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let (n, d, v, f) = (tokens.len(), cfg.d_model, cfg.vocab_size, cfg.d_ff());
        let (nh, dh) = (cfg.n_heads, cfg.head_dim());
        let p = &self.params;
        let lay = &self.layout;
        let scale = F::one() / F::lit(dh as f64).sqrt();

        let mut x = Array2::<F>::zeros((n, d));
        for (i, &t) in tokens.iter().enumerate() {
            let te = vec1(p, lay.tok_emb + t as usize * d, d);
            let pe = vec1(p, lay.pos_emb + i * d, d);
            x.row_mut(i).assign(&(&te + &pe));
        }

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for lo in &lay.layers {
            let (h1, ln1) = layer_norm(&x, vec1(p, lo.ln1_g, d), vec1(p, lo.ln1_b, d));
            let qkv = h1.dot(&mat(p, lo.qkv_w, d, 3 * d)) + &vec1(p, lo.qkv_b, 3 * d);
            let mut att = Array2::<F>::zeros((n, d));
            let mut probs = Vec::with_capacity(nh);
            for h in 0..nh {
                let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
                let vv = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let mut sc = q.dot(&k.t());
                for i in 0..n {
                    let mut row = sc.row_mut(i);
                    let mut max = F::neg_infinity();
                    for j in 0..=i {
                        row[j] *= scale;
                        max = max.max(row[j]);
                    }
                    let mut sum = F::zero();
                    for j in 0..=i {
                        row[j] = (row[j] - max).exp();
                        sum += row[j];
                    }
                    for j in 0..=i {
                        row[j] /= sum;
                    }
                    for j in i + 1..n {
                        row[j] = F::zero();
                    }
                }
                att.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&sc.dot(&vv));
                probs.push(sc);
            }
            x = x + att.dot(&mat(p, lo.proj_w, d, d)) + &vec1(p, lo.proj_b, d);
            let (h2, ln2) = layer_norm(&x, vec1(p, lo.ln2_g, d), vec1(p, lo.ln2_b, d));
            let u = h2.dot(&mat(p, lo.ff1_w, d, f)) + &vec1(p, lo.ff1_b, f);
            let a = u.mapv(gelu);
            x = x + a.dot(&mat(p, lo.ff2_w, f, d)) + &vec1(p, lo.ff2_b, d);
            layers.push(LayerCache {
                ln1,
                h1,
                qkv,
                probs,
                att,
                ln2,
                h2,
                u,
                a,
            });
        }
        let (hf, lnf) = layer_norm(&x, vec1(p, lay.lnf_g, d), vec1(p, lay.lnf_b, d));
        let sel = hf.select(Axis(0), rows);
        let logits = sel.dot(&mat(p, lay.head_w, d, v)) + &vec1(p, lay.head_b, v);
        Ok(Forward {
            tokens: tokens.to_vec(),
            rows: rows.to_vec(),
            logits,
            layers,
            lnf,
            hf,
        })
    }

    /// Reverse pass given the loss gradient w.r.t. `fwd.logits`.
    pub fn backward(&self, fwd: &Forward<F>, dlogits: &Array2<F>) -> Gradients<F> {
        let mut grads = Gradients::zeros(self.params.len());
        self.backward_into(fwd, dlogits, &mut grads);
        grads
    }

    /// Accumulates the gradient into `grads`.
    pub fn backward_into(&self, fwd: &Forward<F>, dlogits: &Array2<F>, grads: &mut Gradients<F>) {
        let cfg = &self.config;
        let (n, d, v, f) = (fwd.tokens.len(), cfg.d_model, cfg.vocab_size, cfg.d_ff());
        let (nh, dh) = (cfg.n_heads, cfg.head_dim());
        let p = &self.params;
        let lay = &self.layout;
        let g = &mut grads.0;
        let scale = F::one() / F::lit(dh as f64).sqrt();

        let sel = fwd.hf.select(Axis(0), &fwd.rows);
        mat_mut(g, lay.head_w, d, v).scaled_add(F::one(), &sel.t().dot(dlogits));
        vec_mut(g, lay.head_b, v).scaled_add(F::one(), &dlogits.sum_axis(Axis(0)));
        let dsel = dlogits.dot(&mat(p, lay.head_w, d, v).t());
        let mut dhf = Array2::<F>::zeros((n, d));
        for (k, &r) in fwd.rows.iter().enumerate() {
            let mut row = dhf.row_mut(r);
            row += &dsel.row(k);
        }
        let mut dx = {
            let (gg, gb) = split2(g, lay.lnf_g, lay.lnf_b, d);
            layer_norm_backward(&dhf, &fwd.lnf, vec1(p, lay.lnf_g, d), gg, gb)
        };

        for (lo, c) in lay.layers.iter().zip(&fwd.layers).rev() {
            let lo: &LayerOffsets = lo;
            // feed-forward branch
            mat_mut(g, lo.ff2_w, f, d).scaled_add(F::one(), &c.a.t().dot(&dx));
            vec_mut(g, lo.ff2_b, d).scaled_add(F::one(), &dx.sum_axis(Axis(0)));
            let da = dx.dot(&mat(p, lo.ff2_w, f, d).t());
            let mut du = da;
            du.zip_mut_with(&c.u, |g, &u| *g *= gelu_grad(u));
            mat_mut(g, lo.ff1_w, d, f).scaled_add(F::one(), &c.h2.t().dot(&du));
            vec_mut(g, lo.ff1_b, f).scaled_add(F::one(), &du.sum_axis(Axis(0)));
            let dh2 = du.dot(&mat(p, lo.ff1_w, d, f).t());
            let (gg, gb) = split2(g, lo.ln2_g, lo.ln2_b, d);
            dx = dx + layer_norm_backward(&dh2, &c.ln2, vec1(p, lo.ln2_g, d), gg, gb);

            // attention branch
            mat_mut(g, lo.proj_w, d, d).scaled_add(F::one(), &c.att.t().dot(&dx));
            vec_mut(g, lo.proj_b, d).scaled_add(F::one(), &dx.sum_axis(Axis(0)));
            let datt = dx.dot(&mat(p, lo.proj_w, d, d).t());
            let mut dqkv = Array2::<F>::zeros((n, 3 * d));
            for h in 0..nh {
                let (qs, ks, vs) = (h * dh, d + h * dh, 2 * d + h * dh);
                let q = c.qkv.slice(s![.., qs..qs + dh]);
                let k = c.qkv.slice(s![.., ks..ks + dh]);
                let vv = c.qkv.slice(s![.., vs..vs + dh]);
                let pr = &c.probs[h];
                let dout = datt.slice(s![.., qs..qs + dh]);
                let dp = dout.dot(&vv.t());
                let dv = pr.t().dot(&dout);
                let mut dsc = Array2::<F>::zeros((n, n));
                for i in 0..n {
                    let dot: F = (0..=i).map(|j| pr[(i, j)] * dp[(i, j)]).sum();
                    for j in 0..=i {
                        dsc[(i, j)] = pr[(i, j)] * (dp[(i, j)] - dot) * scale;
                    }
                }
                dqkv.slice_mut(s![.., qs..qs + dh]).assign(&dsc.dot(&k));
                dqkv.slice_mut(s![.., ks..ks + dh]).assign(&dsc.t().dot(&q));
                dqkv.slice_mut(s![.., vs..vs + dh]).assign(&dv);
            }
            mat_mut(g, lo.qkv_w, d, 3 * d).scaled_add(F::one(), &c.h1.t().dot(&dqkv));
            vec_mut(g, lo.qkv_b, 3 * d).scaled_add(F::one(), &dqkv.sum_axis(Axis(0)));
            let dh1 = dqkv.dot(&mat(p, lo.qkv_w, d, 3 * d).t());
            let (gg, gb) = split2(g, lo.ln1_g, lo.ln1_b, d);
            dx = dx + layer_norm_backward(&dh1, &c.ln1, vec1(p, lo.ln1_g, d), gg, gb);
        }

        for (i, &t) in fwd.tokens.iter().enumerate() {
            vec_mut(g, lay.tok_emb + t as usize * d, d).scaled_add(F::one(), &dx.row(i));
            vec_mut(g, lay.pos_emb + i * d, d).scaled_add(F::one(), &dx.row(i));
        }
    }
}

/// Two disjoint mutable vectors of length `n` at offsets `a < b`.
fn split2<F>(g: &mut [F], a: usize, b: usize, n: usize) -> (ArrayViewMut1<'_, F>, ArrayViewMut1<'_, F>) {
    debug_assert!(a + n <= b);
    let (lo, hi) = g.split_at_mut(b);
    (ArrayViewMut1::from(&mut lo[a..a + n]), ArrayViewMut1::from(&mut hi[..n]))
}

#[cfg(test)]
mod tests {
    use super::super::{softmax_row, ModelConfig};
    use super::*;

    fn small(v: usize) -> Model<f64> {
        let cfg = ModelConfig {
            context: 32,
            d_model: 16,
            n_heads: 2,
            init_std: 0.3,
            head_init_std: 0.3,
            ..ModelConfig::new(v)
        };
        Model::new(cfg).unwrap()
    }

    #[test]
    fn causal_prefix_logits_are_bitwise_stable() {
        let m = small(20);
        let a = [1u32, 5, 7, 3, 9, 2];
        let mut b = a;
        b[4] = 11;
        let la = m.logits(&a).unwrap();
        let lb = m.logits(&b).unwrap();
        for i in 0..4 {
            assert_eq!(la.row(i), lb.row(i));
        }
        assert_ne!(la.row(4), lb.row(4));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = small(20);
        let l = m.logits(&[1, 2, 3, 4]).unwrap();
        for row in l.rows() {
            let p = softmax_row(row);
            assert!((p.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn near_uniform_at_default_init() {
        let m = Model::<f64>::new(ModelConfig::new(150)).unwrap();
        let l = m.logits(&[3, 17, 40, 99, 120, 5, 6]).unwrap();
        for row in l.rows() {
            let p = softmax_row(row);
            assert!(p.iter().cloned().fold(0.0, f64::max) < 2.0 / 150.0);
        }
    }

    #[test]
    fn context_overflow_and_bad_token() {
        let m = small(20);
        let long = vec![1u32; 33];
        assert!(matches!(m.logits(&long), Err(crate::Error::ContextOverflow { .. })));
        assert!(matches!(m.logits(&[25]), Err(crate::Error::UnknownToken { .. })));
    }
}
