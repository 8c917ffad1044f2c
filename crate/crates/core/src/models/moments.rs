//! Forward evaluation of the conditional mean f_θ and variance h_θ (and their
//! θ-derivatives) along a series, with the unobserved pre-sample past set to zero.

use super::ModelFamily;

/// How many θ-derivatives to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Conditional moments at one time index. Matrices are row-major `d × d`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub f: f64,
    pub h: f64,
    pub df: Vec<f64>,
    pub dh: Vec<f64>,
    pub d2f: Vec<f64>,
    pub d2h: Vec<f64>,
}

impl Moments {
    pub fn new(d: usize) -> Self {
        Self {
            f: 0.0,
            h: 0.0,
            df: vec![0.0; d],
            dh: vec![0.0; d],
            d2f: vec![0.0; d * d],
            d2h: vec![0.0; d * d],
        }
    }

    fn clear(&mut self, order: Order) {
        self.f = 0.0;
        self.h = 0.0;
        if order >= Order::Gradient {
            self.df.iter_mut().for_each(|v| *v = 0.0);
            self.dh.iter_mut().for_each(|v| *v = 0.0);
        }
        if order >= Order::Hessian {
            self.d2f.iter_mut().for_each(|v| *v = 0.0);
            self.d2h.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

#[inline]
fn lag(x: &[f64], i: usize, k: usize) -> f64 {
    if i >= k {
        x[i - k]
    } else {
        0.0
    }
}

/// Stateful evaluator. For finite-memory families `eval` may be called at any
/// index; for GARCH it must be called at consecutive indices starting from 0,
/// because the variance recursion is carried in the evaluator.
pub struct MomentSweep<'a> {
    family: ModelFamily,
    theta: &'a [f64],
    order: Order,
    d: usize,
    // RiemannianAR: k^{-γ}, ln k · k^{-γ}, (ln k)² · k^{-γ}
    rar_w: Vec<f64>,
    rar_lw: Vec<f64>,
    rar_llw: Vec<f64>,
    scratch: Vec<f64>,
    // GARCH ring buffers over the last p conditional variances
    init_s2: f64,
    init_ds2: Vec<f64>,
    init_dds2: Vec<f64>,
    ring_s2: Vec<f64>,
    ring_ds2: Vec<f64>,
    ring_dds2: Vec<f64>,
    next_index: usize,
}

impl<'a> MomentSweep<'a> {
    pub fn new(family: ModelFamily, theta: &'a [f64], order: Order) -> Self {
        let d = family.dim();
        let mut sweep = Self {
            family,
            theta,
            order,
            d,
            rar_w: Vec::new(),
            rar_lw: Vec::new(),
            rar_llw: Vec::new(),
            scratch: Vec::new(),
            init_s2: 0.0,
            init_ds2: Vec::new(),
            init_dds2: Vec::new(),
            ring_s2: Vec::new(),
            ring_ds2: Vec::new(),
            ring_dds2: Vec::new(),
            next_index: 0,
        };
        match family {
            ModelFamily::RiemannianAr { lags } => {
                let gamma = theta[1];
                for k in 1..=lags {
                    let lk = (k as f64).ln();
                    let w = (-gamma * lk).exp();
                    sweep.rar_w.push(w);
                    sweep.rar_lw.push(lk * w);
                    sweep.rar_llw.push(lk * lk * w);
                }
            }
            ModelFamily::Garch { p, q } => {
                let a0 = theta[0];
                let bsum: f64 = theta[1 + q..1 + q + p].iter().sum();
                let inv = 1.0 / (1.0 - bsum);
                sweep.init_s2 = a0 * inv;
                if order >= Order::Gradient {
                    sweep.init_ds2 = vec![0.0; d];
                    sweep.init_ds2[0] = inv;
                    for k in 0..p {
                        sweep.init_ds2[1 + q + k] = a0 * inv * inv;
                    }
                }
                if order >= Order::Hessian {
                    sweep.init_dds2 = vec![0.0; d * d];
                    for k in 0..p {
                        let bk = 1 + q + k;
                        sweep.init_dds2[bk] = inv * inv;
                        sweep.init_dds2[bk * d] = inv * inv;
                        for l in 0..p {
                            let bl = 1 + q + l;
                            sweep.init_dds2[bk * d + bl] = 2.0 * a0 * inv * inv * inv;
                        }
                    }
                }
                sweep.ring_s2 = vec![0.0; p.max(1)];
                sweep.ring_ds2 = vec![0.0; p.max(1) * d];
                sweep.ring_dds2 = vec![0.0; p.max(1) * d * d];
            }
            _ => {}
        }
        sweep
    }

    /// Moments at 0-based index `i`, conditional on `x[..i]`.
    pub fn eval(&mut self, x: &[f64], i: usize, out: &mut Moments) {
        out.clear(self.order);
        let th = self.theta;
        let d = self.d;
        match self.family {
            ModelFamily::Ar { p } => {
                out.h = 1.0;
                for k in 1..=p {
                    let v = lag(x, i, k);
                    out.f += th[k - 1] * v;
                    if self.order >= Order::Gradient {
                        out.df[k - 1] = v;
                    }
                }
            }
            ModelFamily::RiemannianAr { lags } => {
                out.h = 1.0;
                let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for k in 1..=lags.min(i) {
                    let v = x[i - k];
                    s0 += self.rar_w[k - 1] * v;
                    s1 += self.rar_lw[k - 1] * v;
                    s2 += self.rar_llw[k - 1] * v;
                }
                out.f = th[0] * s0;
                if self.order >= Order::Gradient {
                    out.df[0] = s0;
                    out.df[1] = -th[0] * s1;
                }
                if self.order >= Order::Hessian {
                    out.d2f[1] = -s1;
                    out.d2f[2] = -s1;
                    out.d2f[3] = th[0] * s2;
                }
            }
            ModelFamily::Arch { q } => {
                out.h = th[0];
                if self.order >= Order::Gradient {
                    out.dh[0] = 1.0;
                }
                for k in 1..=q {
                    let v = lag(x, i, k);
                    let v2 = v * v;
                    out.h += th[k] * v2;
                    if self.order >= Order::Gradient {
                        out.dh[k] = v2;
                    }
                }
            }
            ModelFamily::Tarch { q } => {
                // σ = b0 + Σ b⁺_k max(x,0) + Σ b⁻_k max(−x,0), h = σ²
                let mut sigma = th[0];
                let dsig = &mut self.scratch;
                if self.order >= Order::Gradient {
                    dsig.clear();
                    dsig.resize(d, 0.0);
                    dsig[0] = 1.0;
                }
                for k in 1..=q {
                    let v = lag(x, i, k);
                    let pos = v.max(0.0);
                    let neg = (-v).max(0.0);
                    sigma += th[k] * pos + th[q + k] * neg;
                    if self.order >= Order::Gradient {
                        dsig[k] = pos;
                        dsig[q + k] = neg;
                    }
                }
                out.h = sigma * sigma;
                if self.order >= Order::Gradient {
                    for j in 0..d {
                        out.dh[j] = 2.0 * sigma * dsig[j];
                    }
                }
                if self.order >= Order::Hessian {
                    for j in 0..d {
                        for l in 0..d {
                            out.d2h[j * d + l] = 2.0 * dsig[j] * dsig[l];
                        }
                    }
                }
            }
            ModelFamily::Garch { p, q } => {
                assert_eq!(i, self.next_index, "GARCH sweep must visit indices in order");
                self.garch_step(x, i, p, q, out);
                self.next_index += 1;
            }
        }
    }

    fn garch_step(&mut self, x: &[f64], i: usize, p: usize, q: usize, out: &mut Moments) {
        let th = self.theta;
        let d = self.d;
        let order = self.order;
        let pr = p.max(1);

        let mut s2 = th[0];
        for k in 1..=q {
            let v = lag(x, i, k);
            s2 += th[k] * v * v;
        }
        for k in 1..=p {
            let b = th[q + k];
            s2 += b * self.past_s2(i, k, pr);
        }
        out.h = s2;

        if order >= Order::Gradient {
            out.dh[0] = 1.0;
            for k in 1..=q {
                let v = lag(x, i, k);
                out.dh[k] = v * v;
            }
            for k in 1..=p {
                out.dh[q + k] += self.past_s2(i, k, pr);
                let b = th[q + k];
                let (src, off) = self.past_ds2(i, k, pr);
                for j in 0..d {
                    out.dh[j] += b * src[off + j];
                }
            }
        }
        if order >= Order::Hessian {
            for k in 1..=p {
                let bk = q + k;
                let b = th[bk];
                let (src, off) = self.past_ds2(i, k, pr);
                for j in 0..d {
                    let v = src[off + j];
                    out.d2h[bk * d + j] += v;
                    out.d2h[j * d + bk] += v;
                }
                let (src2, off2) = self.past_dds2(i, k, pr);
                for jl in 0..d * d {
                    out.d2h[jl] += b * src2[off2 + jl];
                }
            }
        }

        if p > 0 {
            let slot = i % pr;
            self.ring_s2[slot] = s2;
            if order >= Order::Gradient {
                self.ring_ds2[slot * d..(slot + 1) * d].copy_from_slice(&out.dh);
            }
            if order >= Order::Hessian {
                self.ring_dds2[slot * d * d..(slot + 1) * d * d].copy_from_slice(&out.d2h);
            }
        }
    }

    #[inline]
    fn past_s2(&self, i: usize, k: usize, pr: usize) -> f64 {
        if i >= k {
            self.ring_s2[(i - k) % pr]
        } else {
            self.init_s2
        }
    }

    #[inline]
    fn past_ds2(&self, i: usize, k: usize, pr: usize) -> (&[f64], usize) {
        if i >= k {
            (&self.ring_ds2, ((i - k) % pr) * self.d)
        } else {
            (&self.init_ds2, 0)
        }
    }

    #[inline]
    fn past_dds2(&self, i: usize, k: usize, pr: usize) -> (&[f64], usize) {
        if i >= k {
            (&self.ring_dds2, ((i - k) % pr) * self.d * self.d)
        } else {
            (&self.init_dds2, 0)
        }
    }
}

/// Visits the moments at every index in `start..end`. GARCH recursions are run
/// from index 0 regardless of `start`; finite-memory families start directly.
pub fn sweep<F>(family: ModelFamily, theta: &[f64], x: &[f64], start: usize, end: usize, order: Order, mut visit: F)
where
    F: FnMut(usize, &Moments),
{
    let mut sweep = MomentSweep::new(family, theta, order);
    let mut m = Moments::new(family.dim());
    let first = if family.is_recursive() { 0 } else { start };
    for i in first..end {
        sweep.eval(x, i, &mut m);
        if i >= start {
            visit(i, &m);
        }
    }
}
