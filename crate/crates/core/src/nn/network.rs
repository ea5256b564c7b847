use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{gemm, softmax_backward, softmax_rows, Real, View, PROB_FLOOR};
use crate::error::{Error, Result};

/// Which modality columns a single-tower network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Polar,
    Radiomics,
    Concat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Arch {
    /// ReLU hidden layers followed by a linear + softmax head.
    Mlp { input: InputKind, in_dim: usize, hidden: Vec<usize>, classes: usize },
    /// Two ReLU towers with per-layer attention fusion, a linear + softmax head
    /// per fused layer, and attention-weighted late fusion of the heads.
    Prffn { in_p: usize, in_r: usize, hidden: Vec<usize>, classes: usize },
}

impl Arch {
    pub fn classes(&self) -> usize {
        match self {
            Arch::Mlp { classes, .. } | Arch::Prffn { classes, .. } => *classes,
        }
    }

    fn validate(&self) -> Result<()> {
        let (hidden, classes, ins) = match self {
            Arch::Mlp { in_dim, hidden, classes, .. } => (hidden, *classes, vec![*in_dim]),
            Arch::Prffn { in_p, in_r, hidden, classes } => (hidden, *classes, vec![*in_p, *in_r]),
        };
        if hidden.is_empty() || hidden.contains(&0) || ins.contains(&0) || classes < 2 {
            return Err(Error::model(format!("invalid architecture {self:?}")));
        }
        Ok(())
    }
}

/// Offsets of one dense layer inside the flat parameter vector: the
/// `fan_out × fan_in` row-major weights followed by `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Lin {
    pub off: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Lin {
    fn len(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }
    pub(crate) fn w<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.off..self.off + self.fan_out * self.fan_in]
    }
    pub(crate) fn b<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        let s = self.off + self.fan_out * self.fan_in;
        &p[s..s + self.fan_out]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Layout {
    Mlp { hidden: Vec<Lin>, head: Lin },
    Prffn { tower_p: Vec<Lin>, tower_r: Vec<Lin>, att: Vec<Lin>, heads: Vec<Lin>, late: Lin },
}

impl Layout {
    fn of(arch: &Arch) -> (Layout, usize) {
        let mut off = 0;
        let mut lin = |fan_in, fan_out| {
            let l = Lin { off, fan_in, fan_out };
            off += l.len();
            l
        };
        let layout = match arch {
            Arch::Mlp { in_dim, hidden, classes, .. } => {
                let mut prev = *in_dim;
                let hidden = hidden
                    .iter()
                    .map(|&h| {
                        let l = lin(prev, h);
                        prev = h;
                        l
                    })
                    .collect();
                Layout::Mlp { hidden, head: lin(prev, *classes) }
            }
            Arch::Prffn { in_p, in_r, hidden, classes } => {
                let mut tower = |input: usize| {
                    let mut prev = input;
                    hidden
                        .iter()
                        .map(|&h| {
                            let l = lin(prev, h);
                            prev = h;
                            l
                        })
                        .collect::<Vec<_>>()
                };
                let tower_p = tower(*in_p);
                let tower_r = tower(*in_r);
                let att = hidden.iter().map(|&h| lin(2 * h, 2)).collect();
                let heads = hidden.iter().map(|&h| lin(h, *classes)).collect();
                let late = lin(classes * hidden.len(), hidden.len());
                Layout::Prffn { tower_p, tower_r, att, heads, late }
            }
        };
        (layout, off)
    }

    fn all(&self) -> Vec<Lin> {
        match self {
            Layout::Mlp { hidden, head } => hidden.iter().chain(std::iter::once(head)).copied().collect(),
            Layout::Prffn { tower_p, tower_r, att, heads, late } => tower_p
                .iter()
                .chain(tower_r)
                .chain(att)
                .chain(heads)
                .chain(std::iter::once(late))
                .copied()
                .collect(),
        }
    }
}

/// A network and its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: Arch,
    pub params: Vec<T>,
    pub(crate) layout: Layout,
}

/// Row-major modality inputs for `n` samples.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a, T> {
    pub xp: &'a [T],
    pub xr: &'a [T],
    pub n: usize,
}

/// Normalized intermediate outputs of one fusion-network forward pass,
/// row-major per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrace<T> {
    /// Per layer, `n × 2` modality weights.
    pub attention: Vec<Vec<T>>,
    /// Per layer, `n × classes` head probabilities.
    pub heads: Vec<Vec<T>>,
    /// `n × layers` late-fusion weights.
    pub late: Vec<T>,
    pub output: Vec<T>,
}

/// Activations kept for the backward pass.
pub(crate) enum Tape<T> {
    Mlp {
        acts: Vec<Vec<T>>,
        probs: Vec<T>,
    },
    Prffn {
        yp: Vec<Vec<T>>,
        yr: Vec<Vec<T>>,
        z: Vec<Vec<T>>,
        att: Vec<Vec<T>>,
        fused: Vec<Vec<T>>,
        heads: Vec<Vec<T>>,
        late_in: Vec<T>,
        late: Vec<T>,
        out: Vec<T>,
    },
}

impl<T> Tape<T> {
    pub(crate) fn output(&self) -> &[T] {
        match self {
            Tape::Mlp { probs, .. } => probs,
            Tape::Prffn { out, .. } => out,
        }
    }
}

fn linear<T: Real>(x: &[T], n: usize, lin: &Lin, p: &[T]) -> Vec<T> {
    let b = lin.b(p);
    let mut out = Vec::with_capacity(n * lin.fan_out);
    for _ in 0..n {
        out.extend_from_slice(b);
    }
    gemm(View::rows(x, n, lin.fan_in), View::rows(lin.w(p), lin.fan_out, lin.fan_in).t(), T::ONE, &mut out);
    out
}

/// Accumulates weight and bias gradients and, when requested, adds `dy·W` to `dx`.
fn linear_back<T: Real>(x: &[T], n: usize, dy: &[T], lin: &Lin, p: &[T], g: &mut [T], dx: Option<&mut [T]>) {
    let wlen = lin.fan_out * lin.fan_in;
    let (gw, rest) = g[lin.off..lin.off + lin.len()].split_at_mut(wlen);
    gemm(View::rows(dy, n, lin.fan_out).t(), View::rows(x, n, lin.fan_in), T::ONE, gw);
    for row in dy.chunks(lin.fan_out) {
        for (gb, d) in rest.iter_mut().zip(row) {
            *gb += *d;
        }
    }
    if let Some(dx) = dx {
        gemm(View::rows(dy, n, lin.fan_out), View::rows(lin.w(p), lin.fan_out, lin.fan_in), T::ONE, dx);
    }
}

fn relu<T: Real>(v: &mut [T]) {
    for x in v.iter_mut() {
        if *x < T::ZERO {
            *x = T::ZERO;
        }
    }
}

fn relu_back<T: Real>(y: &[T], dy: &mut [T]) {
    for (d, a) in dy.iter_mut().zip(y) {
        if !(*a > T::ZERO) {
            *d = T::ZERO;
        }
    }
}

fn concat<T: Real>(parts: &[&[T]], widths: &[usize], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * widths.iter().sum::<usize>());
    for r in 0..n {
        for (part, &w) in parts.iter().zip(widths) {
            out.extend_from_slice(&part[r * w..(r + 1) * w]);
        }
    }
    out
}

/// Adds column block `[c0, c0 + w)` of the `n × total` matrix `src` into `dst` (`n × w`).
fn add_block<T: Real>(src: &[T], total: usize, c0: usize, w: usize, dst: &mut [T]) {
    for (s, d) in src.chunks(total).zip(dst.chunks_mut(w)) {
        for (a, b) in d.iter_mut().zip(&s[c0..c0 + w]) {
            *a += *b;
        }
    }
}

/// Per-sample gradient of the mean clamped cross-entropy with respect to
/// the probabilities, scaled by `weight`, added into `dp`.
fn ce_grad<T: Real>(p: &[T], labels: &[u8], classes: usize, weight: f64, dp: &mut [T]) {
    let n = labels.len() as f64;
    for (r, &l) in labels.iter().enumerate() {
        let v = p[r * classes + l as usize];
        if v.to_f64() > PROB_FLOOR {
            dp[r * classes + l as usize] += T::from_f64(-weight / n) / v;
        }
    }
}

/// Mean clamped cross-entropy of row-major probabilities.
pub(crate) fn cross_entropy<T: Real>(p: &[T], labels: &[u8], classes: usize) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -p[r * classes + l as usize].to_f64().max(PROB_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

impl<T: Real> Network<T> {
    /// A network with every parameter zero.
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        let (layout, total) = Layout::of(&arch);
        Ok(Network { arch, params: vec![T::ZERO; total], layout })
    }

    /// Uniform fan-in scaled weights `U(±√(6/fan_in))`, zero biases.
    pub fn he_uniform(arch: Arch, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Network::zeros(arch)?;
        for lin in net.layout.all() {
            let bound = (6.0 / lin.fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::model(e.to_string()))?;
            for v in &mut net.params[lin.off..lin.off + lin.fan_out * lin.fan_in] {
                *v = T::from_f64(dist.sample(rng));
            }
        }
        Ok(net)
    }

    pub fn from_params(arch: Arch, params: Vec<T>) -> Result<Self> {
        let mut net = Network::zeros(arch)?;
        if params.len() != net.params.len() {
            return Err(Error::model(format!(
                "{} parameters supplied, architecture needs {}",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            params: self.params.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn classes(&self) -> usize {
        self.arch.classes()
    }

    pub(crate) fn hidden_layers(&self) -> Vec<Lin> {
        match &self.layout {
            Layout::Mlp { hidden, .. } => hidden.clone(),
            Layout::Prffn { .. } => Vec::new(),
        }
    }

    pub(crate) fn towers(&self) -> Option<(Vec<Lin>, Vec<Lin>)> {
        match &self.layout {
            Layout::Prffn { tower_p, tower_r, .. } => Some((tower_p.clone(), tower_r.clone())),
            Layout::Mlp { .. } => None,
        }
    }

    fn check_inputs(&self, x: &Inputs<T>) -> Result<()> {
        let bad = |what: &str, got: usize, dim: usize| {
            Error::model(format!("{what} input has {got} values, expected {} x {dim}", x.n))
        };
        match &self.arch {
            Arch::Mlp { input, in_dim, .. } => {
                let got = match input {
                    InputKind::Polar => x.xp.len(),
                    InputKind::Radiomics => x.xr.len(),
                    InputKind::Concat => x.xp.len() + x.xr.len(),
                };
                if got != x.n * in_dim {
                    return Err(bad("network", got, *in_dim));
                }
                if *input == InputKind::Concat && x.n > 0 && x.xp.len() % x.n != 0 {
                    return Err(bad("polarimetric", x.xp.len(), *in_dim));
                }
            }
            Arch::Prffn { in_p, in_r, .. } => {
                if x.xp.len() != x.n * in_p {
                    return Err(bad("polarimetric", x.xp.len(), *in_p));
                }
                if x.xr.len() != x.n * in_r {
                    return Err(bad("radiomics", x.xr.len(), *in_r));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn forward_tape(&self, x: &Inputs<T>) -> Result<Tape<T>> {
        self.check_inputs(x)?;
        let n = x.n;
        let p = &self.params;
        Ok(match (&self.layout, &self.arch) {
            (Layout::Mlp { hidden, head }, Arch::Mlp { input, classes, .. }) => {
                let x0: Vec<T> = match input {
                    InputKind::Polar => x.xp.to_vec(),
                    InputKind::Radiomics => x.xr.to_vec(),
                    InputKind::Concat => {
                        let (dp, dr) = (x.xp.len() / n.max(1), x.xr.len() / n.max(1));
                        concat(&[x.xp, x.xr], &[dp, dr], n)
                    }
                };
                let mut acts = vec![x0];
                for lin in hidden {
                    let mut h = linear(acts.last().unwrap(), n, lin, p);
                    relu(&mut h);
                    acts.push(h);
                }
                let mut probs = linear(acts.last().unwrap(), n, head, p);
                softmax_rows(&mut probs, *classes);
                Tape::Mlp { acts, probs }
            }
            (Layout::Prffn { tower_p, tower_r, att, heads, late }, Arch::Prffn { hidden, classes, .. }) => {
                let tower = |input: &[T], lins: &[Lin]| {
                    let mut outs: Vec<Vec<T>> = Vec::with_capacity(lins.len());
                    for lin in lins {
                        let mut h = linear(outs.last().map(|v| v.as_slice()).unwrap_or(input), n, lin, p);
                        relu(&mut h);
                        outs.push(h);
                    }
                    outs
                };
                let yp = tower(x.xp, tower_p);
                let yr = tower(x.xr, tower_r);
                let k = hidden.len();
                let c = *classes;
                let (mut z, mut atts, mut fused, mut xs) = (vec![], vec![], vec![], vec![]);
                for i in 0..k {
                    let d = hidden[i];
                    let zi = concat(&[&yp[i], &yr[i]], &[d, d], n);
                    let mut a = linear(&zi, n, &att[i], p);
                    softmax_rows(&mut a, 2);
                    let mut f = vec![T::ZERO; n * d];
                    for r in 0..n {
                        let (ap, ar) = (a[2 * r], a[2 * r + 1]);
                        for j in 0..d {
                            f[r * d + j] = ap * yp[i][r * d + j] + ar * yr[i][r * d + j];
                        }
                    }
                    let mut xi = linear(&f, n, &heads[i], p);
                    softmax_rows(&mut xi, c);
                    z.push(zi);
                    atts.push(a);
                    fused.push(f);
                    xs.push(xi);
                }
                let parts: Vec<&[T]> = xs.iter().map(|v| v.as_slice()).collect();
                let late_in = concat(&parts, &vec![c; k], n);
                let mut b = linear(&late_in, n, late, p);
                softmax_rows(&mut b, k);
                let mut out = vec![T::ZERO; n * c];
                for r in 0..n {
                    for (i, xi) in xs.iter().enumerate() {
                        let bi = b[r * k + i];
                        for j in 0..c {
                            out[r * c + j] += bi * xi[r * c + j];
                        }
                    }
                }
                Tape::Prffn { yp, yr, z, att: atts, fused, heads: xs, late_in, late: b, out }
            }
            _ => unreachable!("layout always matches its architecture"),
        })
    }

    /// Class probabilities, `n × classes` row-major.
    pub fn forward(&self, x: &Inputs<T>) -> Result<Vec<T>> {
        Ok(match self.forward_tape(x)? {
            Tape::Mlp { probs, .. } => probs,
            Tape::Prffn { out, .. } => out,
        })
    }

    /// Attention, head and output probabilities; `None` for single-tower
    /// networks.
    pub fn fusion_trace(&self, x: &Inputs<T>) -> Result<Option<FusionTrace<T>>> {
        Ok(match self.forward_tape(x)? {
            Tape::Prffn { att, heads, late, out, .. } => Some(FusionTrace { attention: att, heads, late, output: out }),
            Tape::Mlp { .. } => None,
        })
    }

    /// The training objective and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, x: &Inputs<T>, labels: &[u8], aux: f64) -> Result<(f64, Vec<T>)> {
        if labels.len() != x.n || labels.iter().any(|&l| l as usize >= self.classes()) {
            return Err(Error::model(format!("{} labels for {} samples, or a label out of range", labels.len(), x.n)));
        }
        let tape = self.forward_tape(x)?;
        Ok((self.objective(&tape, labels, aux), self.backward(x, &tape, labels, aux)))
    }

    /// Training objective: mean cross-entropy of the output plus, for the
    /// fusion network, `aux` times the mean cross-entropy of the layer heads.
    pub(crate) fn objective(&self, tape: &Tape<T>, labels: &[u8], aux: f64) -> f64 {
        let c = self.classes();
        let main = cross_entropy(tape.output(), labels, c);
        match tape {
            Tape::Prffn { heads, .. } if aux != 0.0 => {
                let mean: f64 =
                    heads.iter().map(|x| cross_entropy(x, labels, c)).sum::<f64>() / heads.len() as f64;
                main + aux * mean
            }
            _ => main,
        }
    }

    /// Gradient of [`Network::objective`] with respect to every parameter.
    pub(crate) fn backward(&self, x: &Inputs<T>, tape: &Tape<T>, labels: &[u8], aux: f64) -> Vec<T> {
        let n = x.n;
        let c = self.classes();
        let p = &self.params;
        let mut g = vec![T::ZERO; p.len()];
        match (&self.layout, tape) {
            (Layout::Mlp { hidden, head }, Tape::Mlp { acts, probs }) => {
                let mut dp = vec![T::ZERO; n * c];
                ce_grad(probs, labels, c, 1.0, &mut dp);
                let mut du = vec![T::ZERO; n * c];
                softmax_backward(probs, &dp, c, &mut du);
                let mut dy = vec![T::ZERO; n * head.fan_in];
                linear_back(&acts[hidden.len()], n, &du, head, p, &mut g, Some(&mut dy));
                for (i, lin) in hidden.iter().enumerate().rev() {
                    relu_back(&acts[i + 1], &mut dy);
                    let mut dx = if i > 0 { vec![T::ZERO; n * lin.fan_in] } else { Vec::new() };
                    linear_back(&acts[i], n, &dy, lin, p, &mut g, (i > 0).then_some(dx.as_mut_slice()));
                    dy = dx;
                }
            }
            (
                Layout::Prffn { tower_p, tower_r, att, heads, late },
                Tape::Prffn { yp, yr, z, att: atts, fused, heads: xs, late_in, late: b, out },
            ) => {
                let k = xs.len();
                let mut d_out = vec![T::ZERO; n * c];
                ce_grad(out, labels, c, 1.0, &mut d_out);
                let mut dxs: Vec<Vec<T>> = vec![vec![T::ZERO; n * c]; k];
                let mut db = vec![T::ZERO; n * k];
                for r in 0..n {
                    for i in 0..k {
                        let bi = b[r * k + i];
                        let mut dot = T::ZERO;
                        for j in 0..c {
                            let dy = d_out[r * c + j];
                            dxs[i][r * c + j] += bi * dy;
                            dot += dy * xs[i][r * c + j];
                        }
                        db[r * k + i] = dot;
                    }
                }
                let mut dl = vec![T::ZERO; n * k];
                softmax_backward(b, &db, k, &mut dl);
                let mut d_late_in = vec![T::ZERO; n * c * k];
                linear_back(late_in, n, &dl, late, p, &mut g, Some(&mut d_late_in));
                for (i, dxi) in dxs.iter_mut().enumerate() {
                    add_block(&d_late_in, c * k, i * c, c, dxi);
                    if aux != 0.0 {
                        ce_grad(&xs[i], labels, c, aux / k as f64, dxi);
                    }
                }
                let mut dyp: Vec<Vec<T>> = yp.iter().map(|v| vec![T::ZERO; v.len()]).collect();
                let mut dyr: Vec<Vec<T>> = yr.iter().map(|v| vec![T::ZERO; v.len()]).collect();
                for i in 0..k {
                    let d = tower_p[i].fan_out;
                    let mut du = vec![T::ZERO; n * c];
                    softmax_backward(&xs[i], &dxs[i], c, &mut du);
                    let mut df = vec![T::ZERO; n * d];
                    linear_back(&fused[i], n, &du, &heads[i], p, &mut g, Some(&mut df));
                    let a = &atts[i];
                    let mut da = vec![T::ZERO; n * 2];
                    for r in 0..n {
                        let (ap, ar) = (a[2 * r], a[2 * r + 1]);
                        let (mut sp, mut sr) = (T::ZERO, T::ZERO);
                        for j in 0..d {
                            let q = r * d + j;
                            dyp[i][q] += ap * df[q];
                            dyr[i][q] += ar * df[q];
                            sp += df[q] * yp[i][q];
                            sr += df[q] * yr[i][q];
                        }
                        da[2 * r] = sp;
                        da[2 * r + 1] = sr;
                    }
                    let mut dlogit = vec![T::ZERO; n * 2];
                    softmax_backward(a, &da, 2, &mut dlogit);
                    let mut dz = vec![T::ZERO; n * 2 * d];
                    linear_back(&z[i], n, &dlogit, &att[i], p, &mut g, Some(&mut dz));
                    add_block(&dz, 2 * d, 0, d, &mut dyp[i]);
                    add_block(&dz, 2 * d, d, d, &mut dyr[i]);
                }
                for (ys, dys, lins, input) in [(yp, &mut dyp, tower_p, x.xp), (yr, &mut dyr, tower_r, x.xr)] {
                    for i in (0..k).rev() {
                        let (lower, upper) = dys.split_at_mut(i);
                        let dy = &mut upper[0];
                        relu_back(&ys[i], dy);
                        let src: &[T] = if i > 0 { &ys[i - 1] } else { input };
                        linear_back(src, n, dy, &lins[i], p, &mut g, lower.last_mut().map(|v| v.as_mut_slice()));
                    }
                }
            }
            _ => unreachable!("tape always matches its network"),
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_prffn(seed: u64) -> Network<f64> {
        let arch = Arch::Prffn { in_p: 4, in_r: 4, hidden: vec![8, 6, 4], classes: 3 };
        let mut net = Network::he_uniform(arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        // Nonzero biases so every term of the gradient is exercised.
        for v in net.params.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        net
    }

    #[test]
    fn zero_network_outputs_uniform() {
        let net: Network<f64> = Network::zeros(Arch::Prffn { in_p: 23, in_r: 93, hidden: vec![5, 4, 3], classes: 3 }).unwrap();
        let xp = vec![0.7; 2 * 23];
        let xr = vec![-0.2; 2 * 93];
        let y = net.forward(&Inputs { xp: &xp, xr: &xr, n: 2 }).unwrap();
        for v in y {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn arity_mismatch_is_model_error() {
        let net: Network<f64> = Network::zeros(Arch::Mlp { input: InputKind::Polar, in_dim: 23, hidden: vec![4], classes: 3 }).unwrap();
        let x = vec![0.0; 93];
        assert!(matches!(net.forward(&Inputs { xp: &x, xr: &[], n: 1 }), Err(Error::Model(_))));
    }

    #[test]
    fn identity_layer() {
        let arch = Arch::Mlp { input: InputKind::Polar, in_dim: 2, hidden: vec![2], classes: 2 };
        let net: Network<f64> = Network::from_params(arch, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        match net.forward_tape(&Inputs { xp: &[1.0, 2.0], xr: &[], n: 1 }).unwrap() {
            Tape::Mlp { acts, .. } => assert_eq!(acts[1], vec![1.0, 2.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn gradient_shapes_cover_every_parameter() {
        let net = small_prffn(3);
        let xp = vec![0.5; 8];
        let xr = vec![-0.5; 8];
        let x = Inputs { xp: &xp, xr: &xr, n: 2 };
        let tape = net.forward_tape(&x).unwrap();
        let g = net.backward(&x, &tape, &[0, 2], 0.3);
        assert_eq!(g.len(), net.params.len());
        assert!(g.iter().any(|v| *v != 0.0));
    }
}
