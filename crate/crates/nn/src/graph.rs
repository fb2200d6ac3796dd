//! Computation graph (tape) with hand-written backward passes.

use crate::error::{shape_err, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

const GN_EPS: f64 = 1e-6;

enum Op<T> {
    Input,
    Conv2d {
        x: Var,
        w: ParamId,
        b: ParamId,
        kernel: usize,
    },
    Linear {
        x: Var,
        w: ParamId,
        b: ParamId,
    },
    GroupNorm {
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        groups: usize,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Silu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: T,
    },
    ScaleSamples {
        x: Var,
        s: Vec<T>,
    },
    Film {
        x: Var,
        ss: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    AvgPool2 {
        x: Var,
    },
    Upsample2 {
        x: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// One array per parameter, aligned with the store's ids.
    pub params: Vec<Vec<T>>,
    inputs: Vec<(Var, Tensor<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn param(&self, id: ParamId) -> &[T] {
        &self.params[id.index()]
    }

    /// Gradient with respect to an input node, if it received any.
    pub fn input(&self, var: Var) -> Option<&Tensor<T>> {
        self.inputs.iter().find(|(v, _)| *v == var).map(|(_, t)| t)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().flatten().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Records a forward pass over a borrowed parameter store.
pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input)
    }

    /// Stride-1 convolution with `kernel/2` zero padding. Weight dims are
    /// `[cout, cin, kernel, kernel]`, bias `[cout]`.
    pub fn conv2d(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let wdims = &self.params.spec(w).dims;
        if wdims.len() != 4 || wdims[2] != wdims[3] || wdims[2] % 2 == 0 {
            return shape_err("conv2d", format!("weight dims {wdims:?}"));
        }
        let (cout, cin, kernel) = (wdims[0], wdims[1], wdims[2]);
        let xv = self.value(x);
        if xv.channels() != cin {
            return shape_err(
                "conv2d",
                format!("input has {} channels, weight expects {cin}", xv.channels()),
            );
        }
        if self.params.spec(b).numel() != cout {
            return shape_err("conv2d", "bias length differs from output channels");
        }
        let [n, _, h, wd] = xv.dims();
        let hw = h * wd;
        let k = cin * kernel * kernel;
        let weight = self.params.get(w);
        let bias = self.params.get(b);
        let mut out = Tensor::zeros([n, cout, h, wd]);
        let mut col = if kernel == 1 {
            Vec::new()
        } else {
            vec![T::zero(); k * hw]
        };
        for s in 0..n {
            let xs = xv.sample(s);
            let cols: &[T] = if kernel == 1 {
                xs
            } else {
                im2col(xs, cin, h, wd, kernel, &mut col);
                &col
            };
            let os = out.sample_mut(s);
            for (co, plane) in os.chunks_mut(hw).enumerate() {
                plane.fill(bias[co]);
            }
            T::gemm(
                cout,
                k,
                hw,
                T::one(),
                weight,
                k as isize,
                1,
                cols,
                hw as isize,
                1,
                T::one(),
                os,
                hw as isize,
                1,
            );
        }
        Ok(self.push(out, Op::Conv2d { x, w, b, kernel }))
    }

    /// Dense layer on `[n, din]` inputs; weight `[dout, din]`, bias `[dout]`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let wdims = &self.params.spec(w).dims;
        if wdims.len() != 2 {
            return shape_err("linear", format!("weight dims {wdims:?}"));
        }
        let (dout, din) = (wdims[0], wdims[1]);
        let xv = self.value(x);
        if xv.sample_len() != din {
            return shape_err(
                "linear",
                format!("input width {} vs weight {din}", xv.sample_len()),
            );
        }
        let n = xv.batch();
        let bias = self.params.get(b);
        let mut out = Tensor::zeros([n, dout, 1, 1]);
        for row in out.data_mut().chunks_mut(dout) {
            row.copy_from_slice(bias);
        }
        T::gemm(
            n,
            din,
            dout,
            T::one(),
            xv.data(),
            din as isize,
            1,
            self.params.get(w),
            1,
            din as isize,
            T::one(),
            out.data_mut(),
            dout as isize,
            1,
        );
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    pub fn group_norm(
        &mut self,
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        groups: usize,
    ) -> Result<Var> {
        let xv = self.value(x);
        let [n, c, h, w] = xv.dims();
        if groups == 0 || c % groups != 0 {
            return shape_err("group_norm", format!("{c} channels into {groups} groups"));
        }
        if self.params.spec(gamma).numel() != c || self.params.spec(beta).numel() != c {
            return shape_err("group_norm", "affine parameters do not match channels");
        }
        let g_gamma = self.params.get(gamma);
        let g_beta = self.params.get(beta);
        let cpg = c / groups;
        let m = cpg * h * w;
        let hw = h * w;
        let eps = T::lit(GN_EPS);
        let mut out = Tensor::zeros(xv.dims());
        let mut means = Vec::with_capacity(n * groups);
        let mut rstds = Vec::with_capacity(n * groups);
        for s in 0..n {
            let xs = xv.sample(s);
            let os = out.sample_mut(s);
            for g in 0..groups {
                let seg = &xs[g * m..(g + 1) * m];
                let mean = seg.iter().copied().sum::<T>() / T::lit(m as f64);
                let var = seg
                    .iter()
                    .map(|&v| (v - mean) * (v - mean))
                    .sum::<T>()
                    / T::lit(m as f64);
                let rstd = T::one() / (var + eps).sqrt();
                for ci in 0..cpg {
                    let ch = g * cpg + ci;
                    let (ga, be) = (g_gamma[ch], g_beta[ch]);
                    let src = &xs[ch * hw..(ch + 1) * hw];
                    let dst = &mut os[ch * hw..(ch + 1) * hw];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = (v - mean) * rstd * ga + be;
                    }
                }
                means.push(mean);
                rstds.push(rstd);
            }
        }
        Ok(self.push(
            out,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean: means,
                rstd: rstds,
            },
        ))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * sigmoid(v));
        self.push(out, Op::Silu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims() != bv.dims() {
            return shape_err("add", format!("{:?} vs {:?}", av.dims(), bv.dims()));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale { x, s })
    }

    /// Multiplies sample `i` by the constant `s[i]`.
    pub fn scale_samples(&mut self, x: Var, s: Vec<T>) -> Result<Var> {
        let xv = self.value(x);
        if s.len() != xv.batch() {
            return shape_err("scale_samples", "one factor per sample required");
        }
        let mut out = xv.clone();
        for (i, &f) in s.iter().enumerate() {
            out.sample_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(self.push(out, Op::ScaleSamples { x, s }))
    }

    /// Feature-wise modulation `x * (1 + scale) + shift`, where `ss` is
    /// `[n, 2c]` holding the scales followed by the shifts.
    pub fn film(&mut self, x: Var, ss: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(ss));
        let [n, c, _, _] = xv.dims();
        if sv.batch() != n || sv.sample_len() != 2 * c {
            return shape_err(
                "film",
                format!("modulation {:?} for input {:?}", sv.dims(), xv.dims()),
            );
        }
        let hw = xv.plane_len();
        let mut out = xv.clone();
        for s in 0..n {
            let mods = sv.sample(s);
            let os = out.sample_mut(s);
            for ch in 0..c {
                let (a, b) = (T::one() + mods[ch], mods[c + ch]);
                os[ch * hw..(ch + 1) * hw]
                    .iter_mut()
                    .for_each(|v| *v = *v * a + b);
            }
        }
        Ok(self.push(out, Op::Film { x, ss }))
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return shape_err("concat", "no inputs");
        };
        let [n, _, h, w] = self.value(first).dims();
        let mut c_total = 0;
        for &v in xs {
            let d = self.value(v).dims();
            if d[0] != n || d[2] != h || d[3] != w {
                return shape_err("concat", format!("{d:?} vs batch {n}, {h}x{w}"));
            }
            c_total += d[1];
        }
        let mut out = Tensor::zeros([n, c_total, h, w]);
        for s in 0..n {
            let mut off = 0;
            for &v in xs {
                let src = self.value(v).sample(s);
                out.sample_mut(s)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::Concat { xs: xs.to_vec() }))
    }

    /// 2×2 average pooling.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [n, c, h, w] = xv.dims();
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err("avg_pool2", format!("odd spatial size {h}x{w}"));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, ho, wo]);
        let quarter = T::lit(0.25);
        for (dst, src) in out
            .data_mut()
            .chunks_mut(ho * wo)
            .zip(xv.data().chunks(h * w))
        {
            for oy in 0..ho {
                let r0 = &src[2 * oy * w..(2 * oy + 1) * w];
                let r1 = &src[(2 * oy + 1) * w..(2 * oy + 2) * w];
                for ox in 0..wo {
                    dst[oy * wo + ox] =
                        (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter;
                }
            }
        }
        Ok(self.push(out, Op::AvgPool2 { x }))
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.dims();
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = Tensor::zeros([n, c, ho, wo]);
        for (dst, src) in out
            .data_mut()
            .chunks_mut(ho * wo)
            .zip(xv.data().chunks(h * w))
        {
            for oy in 0..ho {
                let srow = &src[(oy / 2) * w..(oy / 2 + 1) * w];
                let drow = &mut dst[oy * wo..(oy + 1) * wo];
                for (ox, d) in drow.iter_mut().enumerate() {
                    *d = srow[ox / 2];
                }
            }
        }
        self.push(out, Op::Upsample2 { x })
    }

    /// Back-propagates `seed` (the gradient of a scalar objective with respect
    /// to `output`) through the recorded graph.
    pub fn backward(&self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.dims() != self.value(output).dims() {
            return shape_err(
                "backward",
                format!(
                    "seed {:?} for output {:?}",
                    seed.dims(),
                    self.value(output).dims()
                ),
            );
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(seed);
        let mut pgrads: Vec<Vec<T>> = self
            .params
            .values()
            .iter()
            .map(|v| vec![T::zero(); v.len()])
            .collect();
        let mut inputs = Vec::new();

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => inputs.push((Var(idx), dy)),
                Op::Conv2d { x, w, b, kernel } => {
                    let dx = self.conv2d_backward(*x, *w, *b, *kernel, &dy, &mut pgrads);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Linear { x, w, b } => {
                    let xv = self.value(*x);
                    let wdims = &self.params.spec(*w).dims;
                    let (dout, din) = (wdims[0], wdims[1]);
                    let n = xv.batch();
                    let mut dx = Tensor::zeros(xv.dims());
                    T::gemm(
                        n,
                        dout,
                        din,
                        T::one(),
                        dy.data(),
                        dout as isize,
                        1,
                        self.params.get(*w),
                        din as isize,
                        1,
                        T::zero(),
                        dx.data_mut(),
                        din as isize,
                        1,
                    );
                    T::gemm(
                        dout,
                        n,
                        din,
                        T::one(),
                        dy.data(),
                        1,
                        dout as isize,
                        xv.data(),
                        din as isize,
                        1,
                        T::one(),
                        &mut pgrads[w.index()],
                        din as isize,
                        1,
                    );
                    let db = &mut pgrads[b.index()];
                    for row in dy.data().chunks(dout) {
                        for (g, &v) in db.iter_mut().zip(row) {
                            *g += v;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    mean,
                    rstd,
                } => {
                    let dx = self.group_norm_backward(
                        *x,
                        *gamma,
                        *beta,
                        *groups,
                        mean,
                        rstd,
                        &dy,
                        &mut pgrads,
                    );
                    accumulate(&mut grads, *x, dx);
                }
                Op::Silu { x } => {
                    let xv = self.value(*x);
                    let mut dx = dy;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        let sg = sigmoid(v);
                        *d *= sg * (T::one() + v * (T::one() - sg));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *b, dy.clone());
                    accumulate(&mut grads, *a, dy);
                }
                Op::Scale { x, s } => {
                    let s = *s;
                    accumulate(&mut grads, *x, dy.map(|v| v * s));
                }
                Op::ScaleSamples { x, s } => {
                    let mut dx = dy;
                    for (i, &f) in s.iter().enumerate() {
                        dx.sample_mut(i).iter_mut().for_each(|v| *v *= f);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Film { x, ss } => {
                    let xv = self.value(*x);
                    let sv = self.value(*ss);
                    let [n, c, _, _] = xv.dims();
                    let hw = xv.plane_len();
                    let mut dx = Tensor::zeros(xv.dims());
                    let mut dss = Tensor::zeros(sv.dims());
                    for s in 0..n {
                        let mods = sv.sample(s);
                        let xs = xv.sample(s);
                        let dys = dy.sample(s);
                        let mut dscale = vec![T::zero(); c];
                        let mut dshift = vec![T::zero(); c];
                        {
                            let dxs = dx.sample_mut(s);
                            for ch in 0..c {
                                let a = T::one() + mods[ch];
                                let range = ch * hw..(ch + 1) * hw;
                                let mut acc_scale = T::zero();
                                let mut acc_shift = T::zero();
                                for ((d, &g), &v) in dxs[range.clone()]
                                    .iter_mut()
                                    .zip(&dys[range.clone()])
                                    .zip(&xs[range])
                                {
                                    *d = g * a;
                                    acc_scale += g * v;
                                    acc_shift += g;
                                }
                                dscale[ch] = acc_scale;
                                dshift[ch] = acc_shift;
                            }
                        }
                        let dms = dss.sample_mut(s);
                        dms[..c].copy_from_slice(&dscale);
                        dms[c..].copy_from_slice(&dshift);
                    }
                    accumulate(&mut grads, *ss, dss);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat { xs } => {
                    let n = dy.batch();
                    let mut off = 0;
                    for &v in xs {
                        let dims = self.value(v).dims();
                        let len = dims[1] * dims[2] * dims[3];
                        let mut part = Tensor::zeros(dims);
                        for s in 0..n {
                            part.sample_mut(s)
                                .copy_from_slice(&dy.sample(s)[off..off + len]);
                        }
                        off += len;
                        accumulate(&mut grads, v, part);
                    }
                }
                Op::AvgPool2 { x } => {
                    let xdims = self.value(*x).dims();
                    let (h, w) = (xdims[2], xdims[3]);
                    let (ho, wo) = (h / 2, w / 2);
                    let quarter = T::lit(0.25);
                    let mut dx = Tensor::zeros(xdims);
                    for (dst, src) in dx
                        .data_mut()
                        .chunks_mut(h * w)
                        .zip(dy.data().chunks(ho * wo))
                    {
                        for y in 0..h {
                            for xx in 0..w {
                                dst[y * w + xx] = src[(y / 2) * wo + xx / 2] * quarter;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Upsample2 { x } => {
                    let xdims = self.value(*x).dims();
                    let (h, w) = (xdims[2], xdims[3]);
                    let wo = 2 * w;
                    let mut dx = Tensor::zeros(xdims);
                    for (dst, src) in dx
                        .data_mut()
                        .chunks_mut(h * w)
                        .zip(dy.data().chunks(4 * h * w))
                    {
                        for oy in 0..2 * h {
                            for ox in 0..wo {
                                dst[(oy / 2) * w + ox / 2] += src[oy * wo + ox];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
            }
        }
        inputs.sort_by_key(|(v, _)| *v);
        Ok(Gradients {
            params: pgrads,
            inputs,
        })
    }

    fn conv2d_backward(
        &self,
        x: Var,
        w: ParamId,
        b: ParamId,
        kernel: usize,
        dy: &Tensor<T>,
        pgrads: &mut [Vec<T>],
    ) -> Tensor<T> {
        let xv = self.value(x);
        let [n, cin, h, wd] = xv.dims();
        let cout = dy.channels();
        let hw = h * wd;
        let k = cin * kernel * kernel;
        let weight = self.params.get(w);
        let mut dx = Tensor::zeros(xv.dims());
        let mut col = if kernel == 1 {
            Vec::new()
        } else {
            vec![T::zero(); k * hw]
        };
        let mut dcol = vec![T::zero(); k * hw];
        for s in 0..n {
            let xs = xv.sample(s);
            let dys = dy.sample(s);
            let cols: &[T] = if kernel == 1 {
                xs
            } else {
                im2col(xs, cin, h, wd, kernel, &mut col);
                &col
            };
            T::gemm(
                cout,
                hw,
                k,
                T::one(),
                dys,
                hw as isize,
                1,
                cols,
                1,
                hw as isize,
                T::one(),
                &mut pgrads[w.index()],
                k as isize,
                1,
            );
            let db = &mut pgrads[b.index()];
            for (co, plane) in dys.chunks(hw).enumerate() {
                db[co] += plane.iter().copied().sum::<T>();
            }
            T::gemm(
                k,
                cout,
                hw,
                T::one(),
                weight,
                1,
                k as isize,
                dys,
                hw as isize,
                1,
                T::zero(),
                &mut dcol,
                hw as isize,
                1,
            );
            if kernel == 1 {
                dx.sample_mut(s).copy_from_slice(&dcol);
            } else {
                col2im(&dcol, cin, h, wd, kernel, dx.sample_mut(s));
            }
        }
        dx
    }

    #[allow(clippy::too_many_arguments)]
    fn group_norm_backward(
        &self,
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        groups: usize,
        mean: &[T],
        rstd: &[T],
        dy: &Tensor<T>,
        pgrads: &mut [Vec<T>],
    ) -> Tensor<T> {
        let xv = self.value(x);
        let [n, c, h, w] = xv.dims();
        let hw = h * w;
        let cpg = c / groups;
        let m = T::lit((cpg * hw) as f64);
        let g_gamma = self.params.get(gamma);
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        let mut dx = Tensor::zeros(xv.dims());
        for s in 0..n {
            let xs = xv.sample(s);
            let dys = dy.sample(s);
            let dxs = dx.sample_mut(s);
            for g in 0..groups {
                let mu = mean[s * groups + g];
                let rs = rstd[s * groups + g];
                // Σ dxhat and Σ dxhat·xhat over the group.
                let mut sum_d = T::zero();
                let mut sum_dx = T::zero();
                for ci in 0..cpg {
                    let ch = g * cpg + ci;
                    let ga = g_gamma[ch];
                    let range = ch * hw..(ch + 1) * hw;
                    let mut dg = T::zero();
                    let mut db = T::zero();
                    for (&d, &v) in dys[range.clone()].iter().zip(&xs[range]) {
                        let xhat = (v - mu) * rs;
                        dg += d * xhat;
                        db += d;
                        sum_d += d * ga;
                        sum_dx += d * ga * xhat;
                    }
                    dgamma[ch] += dg;
                    dbeta[ch] += db;
                }
                for ci in 0..cpg {
                    let ch = g * cpg + ci;
                    let ga = g_gamma[ch];
                    let range = ch * hw..(ch + 1) * hw;
                    for ((o, &d), &v) in dxs[range.clone()]
                        .iter_mut()
                        .zip(&dys[range.clone()])
                        .zip(&xs[range])
                    {
                        let xhat = (v - mu) * rs;
                        *o = rs / m * (m * d * ga - sum_d - xhat * sum_dx);
                    }
                }
            }
        }
        for (g, v) in pgrads[gamma.index()].iter_mut().zip(dgamma) {
            *g += v;
        }
        for (g, v) in pgrads[beta.index()].iter_mut().zip(dbeta) {
            *g += v;
        }
        dx
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// Unfolds `x` (`[cin, h, w]`) into `col` (`[cin·k·k, h·w]`) with zero padding.
fn im2col<T: Real>(x: &[T], cin: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut row = 0;
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k as isize {
            for kx in 0..k as isize {
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dx = kx - pad;
                let lo = (-dx).max(0) as usize;
                let hi = (w as isize - dx).min(w as isize) as usize;
                for oy in 0..h {
                    let iy = oy as isize + ky - pad;
                    let drow = &mut dst[oy * w..(oy + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    drow[..lo].fill(T::zero());
                    drow[hi..].fill(T::zero());
                    let s0 = (lo as isize + dx) as usize;
                    drow[lo..hi].copy_from_slice(&srow[s0..s0 + (hi - lo)]);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds `col` back, accumulating into `dx`.
fn col2im<T: Real>(col: &[T], cin: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut row = 0;
    for ci in 0..cin {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k as isize {
            for kx in 0..k as isize {
                let src = &col[row * hw..(row + 1) * hw];
                let dx_off = kx - pad;
                let lo = (-dx_off).max(0) as usize;
                let hi = (w as isize - dx_off).min(w as isize) as usize;
                for oy in 0..h {
                    let iy = oy as isize + ky - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let srow = &src[oy * w..(oy + 1) * w];
                    let prow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let s0 = (lo as isize + dx_off) as usize;
                    for (p, &v) in prow[s0..s0 + (hi - lo)].iter_mut().zip(&srow[lo..hi]) {
                        *p += v;
                    }
                }
                row += 1;
            }
        }
    }
}
