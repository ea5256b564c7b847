//! Per-sample reference forward pass of the two-tower fusion network, read
//! straight off the flat parameter layout: tower P, tower R, per-layer
//! attention, per-layer heads, late attention. Each dense layer stores its
//! `out × in` weights row-major, then `out` biases.

pub struct Dims {
    pub in_p: usize,
    pub in_r: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

struct Reader<'a> {
    p: &'a [f64],
    off: usize,
}

impl Reader<'_> {
    fn dense(&mut self, x: &[f64], out: usize) -> Vec<f64> {
        let n_in = x.len();
        let w = &self.p[self.off..self.off + out * n_in];
        let b = &self.p[self.off + out * n_in..self.off + out * (n_in + 1)];
        self.off += out * (n_in + 1);
        (0..out).map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>()).collect()
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

pub struct Sample {
    pub attention: Vec<[f64; 2]>,
    pub heads: Vec<Vec<f64>>,
    pub late: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn forward(d: &Dims, p: &[f64], xp: &[f64], xr: &[f64]) -> Sample {
    let mut r = Reader { p, off: 0 };
    let mut tower = |x: &[f64]| {
        let mut outs = Vec::new();
        let mut cur = x.to_vec();
        for &h in &d.hidden {
            cur = relu(r.dense(&cur, h));
            outs.push(cur.clone());
        }
        outs
    };
    let yp = tower(xp);
    let yr = tower(xr);
    let k = d.hidden.len();
    let mut attention = Vec::new();
    let mut fused = Vec::new();
    for i in 0..k {
        let z: Vec<f64> = yp[i].iter().chain(&yr[i]).cloned().collect();
        let a = softmax(&r.dense(&z, 2));
        fused.push(yp[i].iter().zip(&yr[i]).map(|(u, v)| a[0] * u + a[1] * v).collect::<Vec<f64>>());
        attention.push([a[0], a[1]]);
    }
    let heads: Vec<Vec<f64>> = fused.iter().map(|f| softmax(&r.dense(f, d.classes))).collect();
    let cat: Vec<f64> = heads.iter().flatten().cloned().collect();
    let late = softmax(&r.dense(&cat, k));
    let output = (0..d.classes).map(|c| (0..k).map(|i| late[i] * heads[i][c]).sum()).collect();
    assert_eq!(r.off, p.len(), "parameter count");
    Sample { attention, heads, late, output }
}

/// Mean cross-entropy of the output plus `aux` times the mean head
/// cross-entropy.
pub fn objective(d: &Dims, p: &[f64], xp: &[f64], xr: &[f64], labels: &[u8], aux: f64) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for (s, &l) in labels.iter().enumerate() {
        let out = forward(d, p, &xp[s * d.in_p..(s + 1) * d.in_p], &xr[s * d.in_r..(s + 1) * d.in_r]);
        let head_ce: f64 = out.heads.iter().map(|h| -h[l as usize].ln()).sum::<f64>() / out.heads.len() as f64;
        total += -out.output[l as usize].ln() + aux * head_ce;
    }
    total / n as f64
}
