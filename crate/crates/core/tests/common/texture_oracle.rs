//! Brute-force radiomics reference: every texture family is recomputed from
//! explicit lists of pixel pairs, runs, zones and dependences, with features
//! evaluated as plain averages over those lists.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

type Grid = Vec<Vec<u16>>;

fn grid(bins: &[u16], w: usize, h: usize) -> Grid {
    (0..h).map(|y| bins[y * w..(y + 1) * w].to_vec()).collect()
}

fn entropy_of<K: std::hash::Hash + Eq>(items: impl Iterator<Item = K>) -> f64 {
    let mut counts: HashMap<K, usize> = HashMap::new();
    let mut n = 0usize;
    for k in items {
        *counts.entry(k).or_default() += 1;
        n += 1;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn first_order(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let pct = |q: f64| {
        let pos = (x.len() - 1) as f64 * q;
        let i = pos as usize;
        if i + 1 >= x.len() {
            x[x.len() - 1]
        } else {
            x[i] * (1.0 - (pos - i as f64)) + x[i + 1] * (pos - i as f64)
        }
    };
    let lo = x[0];
    let hi = *x.last().unwrap();
    let mu = mean(&x);
    let var = pop_var(&x);
    let sd = var.sqrt();
    let skew = if var > 0.0 { x.iter().map(|v| ((v - mu) / sd).powi(3)).sum::<f64>() / n } else { 0.0 };
    let kurt = if var > 0.0 { x.iter().map(|v| ((v - mu) / sd).powi(4)).sum::<f64>() / n } else { 0.0 };
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let (p10, p90) = (pct(0.1), pct(0.9));
    let robust: Vec<f64> = x.iter().cloned().filter(|v| *v >= p10 && *v <= p90).collect();
    let rmu = mean(&robust);
    let bin = |v: f64| {
        let w = (hi - lo) / n_bins as f64;
        let mut k = 1;
        while w > 0.0 && k < n_bins && v >= lo + k as f64 * w {
            k += 1;
        }
        k
    };
    let ent = entropy_of(x.iter().map(|&v| bin(v)));
    let mut hist: HashMap<usize, f64> = HashMap::new();
    for &v in &x {
        *hist.entry(bin(v)).or_default() += 1.0;
    }
    hist.values_mut().for_each(|c| *c /= n);
    vec![
        energy,
        energy,
        ent,
        lo,
        p10,
        p90,
        hi,
        mu,
        pct(0.5),
        pct(0.75) - pct(0.25),
        hi - lo,
        x.iter().map(|v| (v - mu).abs()).sum::<f64>() / n,
        if robust.is_empty() { 0.0 } else { robust.iter().map(|v| (v - rmu).abs()).sum::<f64>() / robust.len() as f64 },
        (energy / n).sqrt(),
        skew,
        kurt,
        var,
        hist.values().map(|p| p * p).sum(),
    ]
}

/// Every ordered co-occurring pair at `offset`, plus its mirror.
fn pairs(g: &Grid, offset: (isize, isize)) -> Vec<(f64, f64)> {
    let h = g.len() as isize;
    let w = g[0].len() as isize;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (nx, ny) = (x + offset.0, y + offset.1);
            if (0..w).contains(&nx) && (0..h).contains(&ny) {
                let a = g[y as usize][x as usize] as f64;
                let b = g[ny as usize][nx as usize] as f64;
                out.push((a, b));
                out.push((b, a));
            }
        }
    }
    out
}

fn glcm_one(pairs: &[(f64, f64)], ng: usize) -> Vec<f64> {
    let n = pairs.len() as f64;
    let avg = |f: &dyn Fn(f64, f64) -> f64| pairs.iter().map(|&(i, j)| f(i, j)).sum::<f64>() / n;
    let mu = avg(&|i, _| i);
    let var = avg(&|i, _| (i - mu) * (i - mu));
    let cov = avg(&|i, j| (i - mu) * (j - mu));
    let mut joint: HashMap<(u32, u32), f64> = HashMap::new();
    let mut marg: BTreeMap<u32, f64> = BTreeMap::new();
    for &(i, j) in pairs {
        *joint.entry((i as u32, j as u32)).or_default() += 1.0;
        *marg.entry(i as u32).or_default() += 1.0;
    }
    joint.values_mut().for_each(|c| *c /= n);
    marg.values_mut().for_each(|c| *c /= n);
    let hx: f64 = marg.values().map(|p| -p * p.log2()).sum();
    let hxy: f64 = joint.values().map(|p| -p * p.log2()).sum();
    let hxy1: f64 = joint.iter().map(|(&(i, j), p)| -p * (marg[&i] * marg[&j]).log2()).sum();
    let mut hxy2 = 0.0;
    for pi in marg.values() {
        for pj in marg.values() {
            hxy2 -= pi * pj * (pi * pj).log2();
        }
    }
    let diffs: Vec<f64> = pairs.iter().map(|&(i, j)| (i - j).abs()).collect();
    let sums: Vec<f64> = pairs.iter().map(|&(i, j)| i + j).collect();
    let ngf = ng as f64;

    let levels: Vec<u32> = marg.keys().cloned().collect();
    let mcc = if levels.len() < 2 {
        1.0
    } else {
        let q = DMatrix::from_fn(levels.len(), levels.len(), |a, b| {
            levels
                .iter()
                .map(|k| {
                    let pa = joint.get(&(levels[a], *k)).cloned().unwrap_or(0.0);
                    let pb = joint.get(&(levels[b], *k)).cloned().unwrap_or(0.0);
                    pa * pb / (marg[&levels[a]] * marg[k])
                })
                .sum::<f64>()
        });
        let mut ev: Vec<f64> = q.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev[1].clamp(0.0, 1.0).sqrt()
    };

    vec![
        avg(&|i, j| i * j),
        mu,
        avg(&|i, j| (i + j - 2.0 * mu).powi(4)),
        avg(&|i, j| (i + j - 2.0 * mu).powi(3)),
        avg(&|i, j| (i + j - 2.0 * mu).powi(2)),
        avg(&|i, j| (i - j).powi(2)),
        if var > 0.0 { cov / var } else { 1.0 },
        mean(&diffs),
        entropy_of(diffs.iter().map(|d| *d as u32)),
        pop_var(&diffs),
        joint.values().map(|p| p * p).sum(),
        hxy,
        if hx > 0.0 { (hxy - hxy1) / hx } else { 0.0 },
        (1.0 - (-2.0 * if hxy2 - hxy <= 1e-13 * hxy2 { 0.0 } else { hxy2 - hxy }).exp()).sqrt(),
        avg(&|i, j| 1.0 / (1.0 + (i - j).powi(2))),
        avg(&|i, j| 1.0 / (1.0 + (i - j).powi(2) / (ngf * ngf))),
        avg(&|i, j| 1.0 / (1.0 + (i - j).abs())),
        avg(&|i, j| 1.0 / (1.0 + (i - j).abs() / ngf)),
        avg(&|i, j| if i != j { 1.0 / (i - j).powi(2) } else { 0.0 }),
        joint.values().cloned().fold(0.0, f64::max),
        mean(&sums),
        entropy_of(sums.iter().map(|s| *s as u32)),
        var,
        mcc,
    ]
}

pub fn glcm(bins: &[u16], w: usize, h: usize, ng: usize) -> Vec<f64> {
    let g = grid(bins, w, h);
    let per: Vec<Vec<f64>> = [(1, 0), (1, -1), (0, -1), (-1, -1)]
        .iter()
        .map(|&o| pairs(&g, o))
        .filter(|p| !p.is_empty())
        .map(|p| glcm_one(&p, ng))
        .collect();
    average_rows(&per)
}

fn average_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    (0..rows[0].len()).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64).collect()
}

/// Features over an explicit list of (gray, size) items.
fn size_list_features(items: &[(f64, f64)], n_pixels: f64) -> Vec<f64> {
    let n = items.len() as f64;
    let avg = |f: &dyn Fn(f64, f64) -> f64| items.iter().map(|&(g, s)| f(g, s)).sum::<f64>() / n;
    let mut by_gray: HashMap<u32, f64> = HashMap::new();
    let mut by_size: HashMap<u32, f64> = HashMap::new();
    for &(g, s) in items {
        *by_gray.entry(g as u32).or_default() += 1.0;
        *by_size.entry(s as u32).or_default() += 1.0;
    }
    let gln = by_gray.values().map(|c| c * c).sum::<f64>() / n;
    let sn = by_size.values().map(|c| c * c).sum::<f64>() / n;
    let grays: Vec<f64> = items.iter().map(|i| i.0).collect();
    let sizes: Vec<f64> = items.iter().map(|i| i.1).collect();
    vec![
        avg(&|_, s| 1.0 / (s * s)),
        avg(&|_, s| s * s),
        gln,
        gln / n,
        sn,
        sn / n,
        n / n_pixels,
        pop_var(&grays),
        pop_var(&sizes),
        entropy_of(items.iter().map(|&(g, s)| (g as u32, s as u32))),
        avg(&|g, _| 1.0 / (g * g)),
        avg(&|g, _| g * g),
        avg(&|g, s| 1.0 / (g * g * s * s)),
        avg(&|g, s| g * g / (s * s)),
        avg(&|g, s| s * s / (g * g)),
        avg(&|g, s| g * g * s * s),
    ]
}

/// Lines are enumerated from their first pixel and split wherever the level changes.
fn run_list(g: &Grid, dir: (isize, isize)) -> Vec<(f64, f64)> {
    let h = g.len() as isize;
    let w = g[0].len() as isize;
    let inside = |x: isize, y: isize| (0..w).contains(&x) && (0..h).contains(&y);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if inside(x - dir.0, y - dir.1) {
                continue;
            }
            let mut line = Vec::new();
            let (mut cx, mut cy) = (x, y);
            while inside(cx, cy) {
                line.push(g[cy as usize][cx as usize]);
                cx += dir.0;
                cy += dir.1;
            }
            let mut start = 0;
            for k in 1..=line.len() {
                if k == line.len() || line[k] != line[start] {
                    out.push((line[start] as f64, (k - start) as f64));
                    start = k;
                }
            }
        }
    }
    out
}

pub fn glrlm(bins: &[u16], w: usize, h: usize) -> Vec<f64> {
    let g = grid(bins, w, h);
    let np = (w * h) as f64;
    let per: Vec<Vec<f64>> = [(1, 0), (1, -1), (0, -1), (-1, -1)]
        .iter()
        .map(|&d| size_list_features(&run_list(&g, d), np))
        .collect();
    average_rows(&per)
}

fn find(parent: &mut Vec<usize>, i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Zones via union-find over 8-connected equal-level neighbors.
pub fn glszm(bins: &[u16], w: usize, h: usize) -> Vec<f64> {
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            for (dx, dy) in [(1isize, 0isize), (0, 1), (1, 1), (-1, 1)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (a, b) = (y * w + x, ny as usize * w + nx as usize);
                if bins[a] == bins[b] {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
    }
    let mut sizes: BTreeMap<usize, (u16, usize)> = BTreeMap::new();
    for i in 0..w * h {
        let r = find(&mut parent, i);
        sizes.entry(r).or_insert((bins[i], 0)).1 += 1;
    }
    let items: Vec<(f64, f64)> = sizes.values().map(|&(g, s)| (g as f64, s as f64)).collect();
    size_list_features(&items, (w * h) as f64)
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

fn neighbors(w: usize, h: usize, x: usize, y: usize) -> Vec<(usize, usize)> {
    NEIGHBORS
        .iter()
        .map(|&(dx, dy)| (x as isize + dx, y as isize + dy))
        .filter(|&(a, b)| a >= 0 && b >= 0 && a < w as isize && b < h as isize)
        .map(|(a, b)| (a as usize, b as usize))
        .collect()
}

pub fn gldm(bins: &[u16], w: usize, h: usize) -> Vec<f64> {
    let g = grid(bins, w, h);
    let mut items = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let same = neighbors(w, h, x, y).iter().filter(|&&(a, b)| g[b][a] == g[y][x]).count();
            items.push((g[y][x] as f64, (same + 1) as f64));
        }
    }
    let f = size_list_features(&items, (w * h) as f64);
    // GLDM drops the normalized gray non-uniformity and the percentage.
    [0, 1, 2, 4, 5, 7, 8, 9, 10, 11, 12, 13, 14, 15].iter().map(|&k| f[k]).collect()
}

pub fn ngtdm(bins: &[u16], w: usize, h: usize, cap: f64) -> Vec<f64> {
    let g = grid(bins, w, h);
    // (level, |level - neighbor mean|) for every pixel with a neighbor
    let mut diffs: Vec<(f64, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let nb = neighbors(w, h, x, y);
            if nb.is_empty() {
                continue;
            }
            let m = nb.iter().map(|&(a, b)| g[b][a] as f64).sum::<f64>() / nb.len() as f64;
            diffs.push((g[y][x] as f64, (g[y][x] as f64 - m).abs()));
        }
    }
    let nvp = diffs.len() as f64;
    let mut levels: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for &(l, d) in &diffs {
        let e = levels.entry(l as u32).or_default();
        e.0 += 1.0;
        e.1 += d;
    }
    levels.values_mut().for_each(|e| e.0 /= nvp);
    let lv: Vec<(f64, f64, f64)> = levels.iter().map(|(&i, &(p, s))| (i as f64, p, s)).collect();
    let ngp = lv.len() as f64;
    let ps: f64 = lv.iter().map(|l| l.1 * l.2).sum();
    let s_all: f64 = diffs.iter().map(|d| d.1).sum();
    let mut sum_c = 0.0;
    let mut sum_b = 0.0;
    let mut sum_x = 0.0;
    let mut sum_s = 0.0;
    for a in &lv {
        for b in &lv {
            sum_c += a.1 * b.1 * (a.0 - b.0).powi(2);
            sum_b += (a.0 * a.1 - b.0 * b.1).abs();
            sum_x += (a.0 - b.0).abs() * (a.1 * a.2 + b.1 * b.2) / (a.1 + b.1);
            sum_s += (a.1 + b.1) * (a.0 - b.0).powi(2);
        }
    }
    vec![
        if ps == 0.0 { cap } else { 1.0 / ps },
        if ngp > 1.0 { sum_c / (ngp * (ngp - 1.0)) * s_all / nvp } else { 0.0 },
        if sum_b > 0.0 { ps / sum_b } else { 0.0 },
        sum_x / nvp,
        if s_all > 0.0 { sum_s / s_all } else { 0.0 },
    ]
}

/// All 93 features of a quantized patch whose raw values are the bin indices.
pub fn all_features(bins: &[u16], w: usize, h: usize, ng: usize, cap: f64) -> Vec<f64> {
    let values: Vec<f64> = bins.iter().map(|&b| b as f64).collect();
    let mut out = first_order(&values, ng);
    out.extend(glcm(bins, w, h, ng));
    out.extend(glrlm(bins, w, h));
    out.extend(glszm(bins, w, h));
    out.extend(ngtdm(bins, w, h, cap));
    out.extend(gldm(bins, w, h));
    out
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}
