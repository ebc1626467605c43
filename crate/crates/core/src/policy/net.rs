//! Batched forward and backward passes for the policy/value network.
//!
//! Each observation row is encoded by a tanh MLP. With attention enabled, the
//! newest encoding of a window queries the keys/values of every encoding in
//! that window (single head, scaled dot product) and the heads read
//! `[newest encoding, attention context]`. Generic over the float type so
//! gradient checks can run in f64 while training runs in f32.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, NdFloat};

use super::params::PolicyParams;
use super::spec::{NetworkSpec, MOVE_DIMS};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

pub trait Real: NdFloat + Default + Send + Sync {
    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn tanh_r(self) -> Self;
    fn exp_r(self) -> Self;
    fn ln_r(self) -> Self;
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn tanh_r(self) -> Self {
        libm::tanhf(self)
    }
    fn exp_r(self) -> Self {
        libm::expf(self)
    }
    fn ln_r(self) -> Self {
        libm::logf(self)
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn tanh_r(self) -> Self {
        libm::tanh(self)
    }
    fn exp_r(self) -> Self {
        libm::exp(self)
    }
    fn ln_r(self) -> Self {
        libm::log(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// out x in
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> Dense<F> {
    fn zeros(out: usize, inp: usize) -> Self {
        Dense { w: Array2::zeros((out, inp)), b: Array1::zeros(out) }
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    fn forward_tanh(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = self.forward(x);
        y.mapv_inplace(F::tanh_r);
        y
    }

    /// Accumulates dW, db for upstream gradient `dy` and input `x`.
    fn grad(&self, dy: ArrayView2<F>, x: ArrayView2<F>) -> Dense<F> {
        Dense { w: dy.t().dot(&x), b: dy.sum_axis(Axis(0)) }
    }
}

/// Network weights (or, for gradients, a parameter-shaped gradient).
#[derive(Debug, Clone, PartialEq)]
pub struct Net<F> {
    pub spec: NetworkSpec,
    pub enc: Vec<Dense<F>>,
    /// Query, key and value projections.
    pub attn: Option<[Dense<F>; 3]>,
    pub mean: Dense<F>,
    pub value: Dense<F>,
    pub shoot: Option<Dense<F>>,
    /// Raw (unclamped) state-independent log standard deviations.
    pub log_std: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs<F> {
    /// batch x 2, (lateral, forward)
    pub mean: Array2<F>,
    /// Clamped log standard deviations.
    pub log_std: Array1<F>,
    pub value: Array1<F>,
    pub shoot_logit: Option<Array1<F>>,
}

#[derive(Debug, Clone)]
pub struct OutputGrads<F> {
    pub mean: Array2<F>,
    pub log_std: Array1<F>,
    pub value: Array1<F>,
    pub shoot_logit: Option<Array1<F>>,
}

impl<F: Real> OutputGrads<F> {
    pub fn zeros(batch: usize, shoot: bool) -> Self {
        OutputGrads {
            mean: Array2::zeros((batch, MOVE_DIMS)),
            log_std: Array1::zeros(MOVE_DIMS),
            value: Array1::zeros(batch),
            shoot_logit: shoot.then(|| Array1::zeros(batch)),
        }
    }
}

/// Intermediate values of a batched forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    x: Array2<F>,
    acts: Vec<Array2<F>>,
    windows: Vec<(usize, usize)>,
    newest: Vec<usize>,
    q: Option<Array2<F>>,
    k: Option<Array2<F>>,
    v: Option<Array2<F>>,
    /// Attention weights for every window, concatenated.
    alpha: Vec<F>,
    feat: Array2<F>,
    pub out: Outputs<F>,
}

impl<F: Real> ForwardCache<F> {
    /// Attention weights of sample `i` over its window, oldest first.
    pub fn attention_weights(&self, i: usize) -> &[F] {
        let start: usize = self.windows[..i].iter().map(|w| w.1 - w.0 + 1).sum();
        let (a, b) = self.windows[i];
        &self.alpha[start..start + b - a + 1]
    }
}

impl<F: Real> Net<F> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let mut enc = Vec::with_capacity(spec.depth);
        let mut fan_in = spec.input;
        for _ in 0..spec.depth {
            enc.push(Dense::zeros(spec.width, fan_in));
            fan_in = spec.width;
        }
        let f = spec.feature_width();
        Net {
            spec: spec.clone(),
            enc,
            attn: spec.attention.map(|a| std::array::from_fn(|_| Dense::zeros(a.dim, spec.width))),
            mean: Dense::zeros(MOVE_DIMS, f),
            value: Dense::zeros(1, f),
            shoot: spec.shoot.then(|| Dense::zeros(1, f)),
            log_std: Array1::zeros(MOVE_DIMS),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.spec)
    }

    fn blocks_mut(&mut self) -> Vec<&mut [F]> {
        fn dense<'a, F>(d: &'a mut Dense<F>, out: &mut Vec<&'a mut [F]>) {
            out.push(d.w.as_slice_mut().expect("standard layout"));
            out.push(d.b.as_slice_mut().expect("standard layout"));
        }
        let mut out: Vec<&mut [F]> = Vec::new();
        for d in self.enc.iter_mut() {
            dense(d, &mut out);
        }
        if let Some(a) = self.attn.as_mut() {
            for d in a.iter_mut() {
                dense(d, &mut out);
            }
        }
        dense(&mut self.mean, &mut out);
        dense(&mut self.value, &mut out);
        if let Some(d) = self.shoot.as_mut() {
            dense(d, &mut out);
        }
        out.push(self.log_std.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn from_flat<T: Copy>(spec: &NetworkSpec, values: &[T], conv: impl Fn(T) -> F) -> Self {
        assert_eq!(values.len(), spec.param_count(), "parameter count does not match spec");
        let mut net = Self::zeros(spec);
        let mut pos = 0;
        for b in net.blocks_mut() {
            let n = b.len();
            for (dst, &src) in b.iter_mut().zip(&values[pos..pos + n]) {
                *dst = conv(src);
            }
            pos += n;
        }
        net
    }

    pub fn from_params(p: &PolicyParams) -> Self {
        Self::from_flat(&p.spec, &p.values, |v| F::of(v as f64))
    }

    /// Parameters (or gradients) in layout order.
    pub fn to_flat(&self) -> Vec<F> {
        let mut c = self.clone();
        c.blocks_mut().into_iter().flat_map(|b| b.to_vec()).collect()
    }

    pub fn to_params(&self) -> PolicyParams {
        PolicyParams { spec: self.spec.clone(), values: self.to_flat().into_iter().map(|v| v.to_f64() as f32).collect() }
    }

    pub fn clamped_log_std(&self) -> Array1<F> {
        self.log_std.mapv(|v| v.max(F::of(LOG_STD_MIN)).min(F::of(LOG_STD_MAX)))
    }

    /// Encoder activations for each row of `x`, one array per layer.
    pub fn encode(&self, x: ArrayView2<F>) -> Vec<Array2<F>> {
        let mut acts: Vec<Array2<F>> = Vec::with_capacity(self.enc.len());
        for (i, layer) in self.enc.iter().enumerate() {
            let a = if i == 0 { layer.forward_tanh(x) } else { layer.forward_tanh(acts[i - 1].view()) };
            acts.push(a);
        }
        acts
    }

    pub fn heads(&self, feat: ArrayView2<F>) -> Outputs<F> {
        Outputs {
            mean: self.mean.forward(feat),
            log_std: self.clamped_log_std(),
            value: self.value.forward(feat).column(0).to_owned(),
            shoot_logit: self.shoot.as_ref().map(|d| d.forward(feat).column(0).to_owned()),
        }
    }

    /// Forward pass over observation rows `x`. Each window `(first, newest)`
    /// names an inclusive range of rows ending at the decision's observation;
    /// without attention only `newest` is used.
    pub fn forward(&self, x: Array2<F>, windows: &[(usize, usize)]) -> ForwardCache<F> {
        assert_eq!(x.ncols(), self.spec.input, "observation width");
        let acts = self.encode(x.view());
        let h = acts.last().expect("depth >= 1");
        let newest: Vec<usize> = windows.iter().map(|w| w.1).collect();
        let h_new = h.select(Axis(0), &newest);
        let b = windows.len();
        let (mut q, mut k, mut v, mut alpha) = (None, None, None, Vec::new());
        let feat = match &self.attn {
            None => h_new,
            Some([wq, wk, wv]) => {
                let dim = wq.b.len();
                let scale = F::of(1.0 / (dim as f64).sqrt());
                let qm = wq.forward(h_new.view());
                let km = wk.forward(h.view());
                let vm = wv.forward(h.view());
                let mut feat = Array2::zeros((b, self.spec.width + dim));
                feat.slice_mut(s![.., ..self.spec.width]).assign(&h_new);
                alpha.reserve(windows.iter().map(|w| w.1 - w.0 + 1).sum());
                let mut scores = Vec::new();
                for (i, &(first, last)) in windows.iter().enumerate() {
                    assert!(first <= last, "window must not be empty");
                    let qi = qm.row(i);
                    scores.clear();
                    scores.extend((first..=last).map(|j| qi.dot(&km.row(j)) * scale));
                    softmax_in_place(&mut scores);
                    let mut ctx = feat.slice_mut(s![i, self.spec.width..]);
                    for (off, &a) in scores.iter().enumerate() {
                        ctx.scaled_add(a, &vm.row(first + off));
                    }
                    alpha.extend_from_slice(&scores);
                }
                q = Some(qm);
                k = Some(km);
                v = Some(vm);
                feat
            }
        };
        let out = self.heads(feat.view());
        ForwardCache { x, acts, windows: windows.to_vec(), newest, q, k, v, alpha, feat, out }
    }

    /// Gradient of a scalar loss with respect to every parameter, given its
    /// gradient with respect to the outputs of `cache`.
    pub fn backward(&self, cache: &ForwardCache<F>, g: &OutputGrads<F>) -> Net<F> {
        let mut grad = self.zeros_like();
        let feat = cache.feat.view();

        grad.mean = self.mean.grad(g.mean.view(), feat);
        let mut dfeat = g.mean.dot(&self.mean.w);
        let gv = g.value.view().insert_axis(Axis(1));
        grad.value = self.value.grad(gv, feat);
        dfeat += &gv.dot(&self.value.w);
        if let (Some(d), Some(gs)) = (&self.shoot, &g.shoot_logit) {
            let gs = gs.view().insert_axis(Axis(1));
            grad.shoot = Some(d.grad(gs, feat));
            dfeat += &gs.dot(&d.w);
        }
        for i in 0..MOVE_DIMS {
            let raw = self.log_std[i].to_f64();
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                grad.log_std[i] = g.log_std[i];
            }
        }

        let width = self.spec.width;
        let h = cache.acts.last().expect("depth >= 1");
        let mut dh = Array2::<F>::zeros(h.raw_dim());
        match &self.attn {
            None => {
                for (i, &n) in cache.newest.iter().enumerate() {
                    let mut row = dh.row_mut(n);
                    row += &dfeat.row(i);
                }
            }
            Some([wq, wk, wv]) => {
                let (qm, km, vm) = (cache.q.as_ref().unwrap(), cache.k.as_ref().unwrap(), cache.v.as_ref().unwrap());
                let dim = wq.b.len();
                let scale = F::of(1.0 / (dim as f64).sqrt());
                let mut dq = Array2::<F>::zeros(qm.raw_dim());
                let mut dk = Array2::<F>::zeros(km.raw_dim());
                let mut dv = Array2::<F>::zeros(vm.raw_dim());
                let mut da = Vec::new();
                let mut off = 0;
                for (i, &(first, last)) in cache.windows.iter().enumerate() {
                    let n = last - first + 1;
                    let alpha = &cache.alpha[off..off + n];
                    off += n;
                    let dctx = dfeat.slice(s![i, width..]);
                    da.clear();
                    da.extend((first..=last).map(|j| dctx.dot(&vm.row(j))));
                    let mean_da = alpha.iter().zip(&da).fold(F::zero(), |acc, (&a, &d)| acc + a * d);
                    let qi = qm.row(i);
                    for (t, j) in (first..=last).enumerate() {
                        dv.row_mut(j).scaled_add(alpha[t], &dctx);
                        let ds = alpha[t] * (da[t] - mean_da) * scale;
                        dq.row_mut(i).scaled_add(ds, &km.row(j));
                        dk.row_mut(j).scaled_add(ds, &qi);
                    }
                }
                let h_new = h.select(Axis(0), &cache.newest);
                let g_q = wq.grad(dq.view(), h_new.view());
                let dh_new_q = dq.dot(&wq.w);
                let g_k = wk.grad(dk.view(), h.view());
                let g_v = wv.grad(dv.view(), h.view());
                dh += &dk.dot(&wk.w);
                dh += &dv.dot(&wv.w);
                for (i, &n) in cache.newest.iter().enumerate() {
                    let mut row = dh.row_mut(n);
                    row += &dh_new_q.row(i);
                    row += &dfeat.slice(s![i, ..width]);
                }
                grad.attn = Some([g_q, g_k, g_v]);
            }
        }

        for l in (0..self.enc.len()).rev() {
            let a = &cache.acts[l];
            let mut dz = dh;
            dz.zip_mut_with(a, |d, &y| *d = *d * (F::one() - y * y));
            let input = if l == 0 { cache.x.view() } else { cache.acts[l - 1].view() };
            grad.enc[l] = self.enc[l].grad(dz.view(), input);
            dh = if l > 0 { dz.dot(&self.enc[l].w) } else { Array2::zeros((0, 0)) };
        }
        grad
    }
}

pub fn softmax_in_place<F: Real>(v: &mut [F]) {
    let m = v.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let mut sum = F::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp_r();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::spec::AttentionSpec;
    use ndarray::array;

    fn tiny(attention: bool) -> NetworkSpec {
        NetworkSpec {
            input: 3,
            depth: 1,
            width: 4,
            attention: attention.then_some(AttentionSpec { dim: 2, max_seq: 3 }),
            shoot: true,
        }
    }

    #[test]
    fn zero_network_outputs() {
        let net = Net::<f64>::zeros(&NetworkSpec::curriculum());
        let x = Array2::from_elem((3, 153), 0.3);
        let c = net.forward(x, &[(0, 2)]);
        assert_eq!(c.out.mean, array![[0.0, 0.0]]);
        assert_eq!(c.out.value, array![0.0]);
        assert_eq!(c.out.shoot_logit.as_ref().unwrap()[0], 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let spec = tiny(true);
        let vals: Vec<f64> = (0..spec.param_count()).map(|i| i as f64 * 0.5).collect();
        let net = Net::<f64>::from_flat(&spec, &vals, |v| v);
        assert_eq!(net.to_flat(), vals);
        let l = spec.layout();
        let e = l.get("attn.k.w").unwrap();
        assert_eq!(net.attn.as_ref().unwrap()[1].w.as_slice().unwrap(), &vals[e.range()]);
    }

    /// Independent scalar-loop evaluation of the tiny network.
    fn oracle(vals: &[f64], obs: &[[f64; 3]]) -> (f64, f64, f64, f64) {
        let spec = tiny(true);
        let l = spec.layout();
        let blk = |n: &str| &vals[l.get(n).unwrap().range()];
        let enc = |o: &[f64; 3]| -> Vec<f64> {
            let (w, b) = (blk("enc0.w"), blk("enc0.b"));
            (0..4).map(|r| (b[r] + (0..3).map(|c| w[r * 3 + c] * o[c]).sum::<f64>()).tanh()).collect()
        };
        let proj = |name: &str, h: &[f64]| -> Vec<f64> {
            let (w, b) = (blk(&format!("attn.{}.w", name)), blk(&format!("attn.{}.b", name)));
            (0..2).map(|r| b[r] + (0..4).map(|c| w[r * 4 + c] * h[c]).sum::<f64>()).collect()
        };
        let hs: Vec<Vec<f64>> = obs.iter().map(enc).collect();
        let hn = hs.last().unwrap();
        let q = proj("q", hn);
        let scores: Vec<f64> = hs.iter().map(|h| proj("k", h).iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / 2f64.sqrt()).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut ctx = [0.0; 2];
        for (h, ei) in hs.iter().zip(&e) {
            let v = proj("v", h);
            ctx[0] += ei / z * v[0];
            ctx[1] += ei / z * v[1];
        }
        let feat: Vec<f64> = hn.iter().cloned().chain(ctx).collect();
        let lin = |name: &str, row: usize| {
            let (w, b) = (blk(&format!("{}.w", name)), blk(&format!("{}.b", name)));
            b[row] + (0..6).map(|c| w[row * 6 + c] * feat[c]).sum::<f64>()
        };
        (lin("mean", 0), lin("mean", 1), lin("value", 0), lin("shoot", 0))
    }

    #[test]
    fn golden_tiny_network() {
        let spec = tiny(true);
        let vals: Vec<f64> = (0..spec.param_count()).map(|i| ((i * 37 % 17) as f64 - 8.0) / 10.0).collect();
        let obs = [[0.1, -0.2, 0.3], [0.5, 0.4, -0.1], [-0.3, 0.2, 0.9]];
        let net = Net::<f64>::from_flat(&spec, &vals, |v| v);
        let x = Array2::from_shape_vec((3, 3), obs.iter().flatten().cloned().collect()).unwrap();
        let c = net.forward(x, &[(0, 2)]);
        let (m0, m1, v, s) = oracle(&vals, &obs);
        assert!((c.out.mean[[0, 0]] - m0).abs() < 1e-12);
        assert!((c.out.mean[[0, 1]] - m1).abs() < 1e-12);
        assert!((c.out.value[0] - v).abs() < 1e-12);
        assert!((c.out.shoot_logit.as_ref().unwrap()[0] - s).abs() < 1e-12);
        let w = c.attention_weights(0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_observation_equals_repeated_identical_history() {
        let spec = NetworkSpec::for_task(crate::btree::TaskKind::Hide);
        let p = PolicyParams::init(&spec, 4);
        let net = Net::<f64>::from_params(&p);
        let row: Vec<f64> = (0..spec.input).map(|i| (i as f64 * 0.37).sin()).collect();
        let one = net.forward(Array2::from_shape_vec((1, spec.input), row.clone()).unwrap(), &[(0, 0)]);
        let rep: Vec<f64> = row.iter().cycle().take(20 * spec.input).cloned().collect();
        let twenty = net.forward(Array2::from_shape_vec((20, spec.input), rep).unwrap(), &[(0, 19)]);
        for (a, b) in one.out.mean.iter().zip(twenty.out.mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((one.out.value[0] - twenty.out.value[0]).abs() < 1e-12);
        for &a in twenty.attention_weights(0) {
            assert!((a - 0.05).abs() < 1e-12);
        }
    }

    fn weighted_outputs(net: &Net<f64>, x: &Array2<f64>, windows: &[(usize, usize)], g: &OutputGrads<f64>) -> f64 {
        let o = net.forward(x.clone(), windows).out;
        (&o.mean * &g.mean).sum()
            + (&o.log_std * &g.log_std).sum()
            + (&o.value * &g.value).sum()
            + (o.shoot_logit.unwrap() * g.shoot_logit.as_ref().unwrap()).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let spec = NetworkSpec { input: 5, depth: 2, width: 6, attention: Some(AttentionSpec { dim: 3, max_seq: 4 }), shoot: true };
        let vals: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-0.8..0.8)).collect();
        let net = Net::<f64>::from_flat(&spec, &vals, |v| v);
        let x = Array2::from_shape_fn((6, 5), |_| rng.random_range(-1.0..1.0));
        let windows = [(0, 2), (1, 4), (5, 5)];
        let mut g = OutputGrads::<f64>::zeros(3, true);
        g.mean.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        g.log_std.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        g.value.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        g.shoot_logit.as_mut().unwrap().mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let analytic = net.backward(&net.forward(x.clone(), &windows), &g).to_flat();
        let h = 1e-6;
        for i in 0..vals.len() {
            let mut up = vals.clone();
            up[i] += h;
            let mut down = vals.clone();
            down[i] -= h;
            let f = |v: &[f64]| weighted_outputs(&Net::from_flat(&spec, v, |t| t), &x, &windows, &g);
            let numeric = (f(&up) - f(&down)) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
            assert!(err < 1e-5, "param {} analytic {} numeric {}", i, analytic[i], numeric);
        }
    }
}
