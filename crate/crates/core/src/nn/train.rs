use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{cross_entropy, Inputs};
use super::{Model, ModelKind, Network, Real};
use crate::error::{Error, Result};

/// An epoch whose mean loss exceeds this multiple of the starting loss
/// (at least chance-level cross-entropy) is treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    /// Weight of the mean per-layer head cross-entropy in the fusion objective.
    pub aux_weight: f64,
    pub hidden: Vec<usize>,
    /// Arithmetic used during optimization; trained weights are returned in f64.
    pub precision: Precision,
    /// Seed the fusion towers with trained single-modality networks.
    pub init_towers_from_baselines: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            val_fraction: 0.1,
            aux_weight: 0.3,
            hidden: vec![512, 256, 128],
            precision: Precision::F32,
            init_towers_from_baselines: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 0.5)");
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return bad("aux_weight must be non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

/// Normalized training rows: `xp` is `n × dp`, `xr` is `n × dr`.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub xp: &'a [f64],
    pub xr: &'a [f64],
    pub labels: &'a [u8],
    pub dp: usize,
    pub dr: usize,
}

impl TrainData<'_> {
    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

pub fn write_history_csv(path: &Path, history: &[(String, Vec<EpochRecord>)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "network,epoch,train_loss,val_loss,val_accuracy")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    for (name, recs) in history {
        for r in recs {
            writeln!(
                w,
                "{name},{},{:.17e},{},{}",
                r.epoch,
                r.train_loss,
                opt(r.val_loss),
                opt(r.val_accuracy)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Rows<T> {
    xp: Vec<T>,
    xr: Vec<T>,
    labels: Vec<u8>,
}

impl<T: Real> Rows<T> {
    fn gather(data: &TrainData, idx: &[usize]) -> Self {
        let mut xp = Vec::with_capacity(idx.len() * data.dp);
        let mut xr = Vec::with_capacity(idx.len() * data.dr);
        for &i in idx {
            xp.extend(data.xp[i * data.dp..(i + 1) * data.dp].iter().map(|v| T::from_f64(*v)));
            xr.extend(data.xr[i * data.dr..(i + 1) * data.dr].iter().map(|v| T::from_f64(*v)));
        }
        Rows { xp, xr, labels: idx.iter().map(|&i| data.labels[i]).collect() }
    }

    fn inputs(&self) -> Inputs<'_, T> {
        Inputs { xp: &self.xp, xr: &self.xr, n: self.labels.len() }
    }
}

fn check_data(data: &TrainData, classes: usize) -> Result<()> {
    let n = data.n();
    if data.xp.len() != n * data.dp || data.xr.len() != n * data.dr {
        return Err(Error::data("training matrices do not match the label count"));
    }
    if let Some(l) = data.labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::data(format!("label {l} outside 0..{classes}")));
    }
    let mut present = vec![false; classes];
    for &l in data.labels {
        present[l as usize] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::Training("training rows contain fewer than two classes".into()));
    }
    Ok(())
}

/// Mini-batch SGD with momentum, early stopping on a held-out split, and the
/// best-validation weights restored at the end.
pub fn train_network<T: Real>(
    init: Network<T>,
    data: &TrainData,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Network<T>, Vec<EpochRecord>)> {
    cfg.validate()?;
    check_data(data, init.classes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut rng);
    let n_val = (data.n() as f64 * cfg.val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val = (!val_idx.is_empty()).then(|| Rows::<T>::gather(data, val_idx));

    let aux = cfg.aux_weight;
    let lr = T::from_f64(cfg.learning_rate);
    let mu = T::from_f64(cfg.momentum);
    let mut net = init;
    let mut velocity = vec![T::ZERO; net.params.len()];
    let mut best: Option<(f64, Vec<T>)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut start_loss: Option<f64> = None;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in train_idx.chunks(cfg.batch_size).enumerate() {
            let rows = Rows::<T>::gather(data, chunk);
            let x = rows.inputs();
            let tape = net.forward_tape(&x)?;
            let loss = net.objective(&tape, &rows.labels, aux);
            if !loss.is_finite() {
                return Err(divergence(epoch, b, loss, &net.params));
            }
            start_loss.get_or_insert(loss.max((net.classes() as f64).ln()));
            let g = net.backward(&x, &tape, &rows.labels, aux);
            for ((p, v), gi) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                *v = mu * *v - lr * *gi;
                *p += *v;
            }
            if net.params.iter().any(|p| !p.is_finite()) {
                return Err(divergence(epoch, b, loss, &net.params));
            }
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_idx.len().max(1) as f64;
        if start_loss.is_some_and(|s| train_loss > DIVERGENCE_FACTOR * s) {
            return Err(divergence(epoch, usize::MAX - 1, train_loss, &net.params));
        }
        let mut rec = EpochRecord { epoch, train_loss, val_loss: None, val_accuracy: None };
        if let Some(val) = &val {
            let (vl, acc) = evaluate(&net, val)?;
            if !vl.is_finite() {
                return Err(divergence(epoch, usize::MAX, vl, &net.params));
            }
            rec.val_loss = Some(vl);
            rec.val_accuracy = Some(acc);
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, net.params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} val {:?}", rec.val_loss);
        history.push(rec);
        if since_best >= cfg.patience {
            break;
        }
    }
    if let Some((_, params)) = best {
        net.params = params;
    }
    Ok((net, history))
}

fn divergence<T: Real>(epoch: usize, batch: usize, loss: f64, params: &[T]) -> Error {
    let max_abs = params.iter().map(|p| p.to_f64().abs()).fold(0.0, f64::max);
    let nonfinite = params.iter().filter(|p| !p.is_finite()).count();
    let at = match batch {
        usize::MAX => "validation".to_string(),
        b if b == usize::MAX - 1 => "epoch mean".to_string(),
        b => format!("batch {b}"),
    };
    Error::Training(format!(
        "training diverged at epoch {epoch}, {at}: loss {loss}, max |param| {max_abs:e}, {nonfinite} non-finite parameters"
    ))
}

fn evaluate<T: Real>(net: &Network<T>, rows: &Rows<T>) -> Result<(f64, f64)> {
    let c = net.classes();
    let probs = net.forward(&rows.inputs())?;
    let loss = cross_entropy(&probs, &rows.labels, c);
    let correct = probs
        .chunks(c)
        .zip(&rows.labels)
        .filter(|(p, &l)| {
            let best = p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
            best == l as usize
        })
        .count();
    Ok((loss, correct as f64 / rows.labels.len() as f64))
}

/// Seed of the network trained for `kind` under a shared run seed; the late
/// average reuses exactly the single-modality networks trained alongside it.
pub fn network_seed(seed: u64, kind: ModelKind) -> u64 {
    let tag = match kind {
        ModelKind::Prffn => 1u64,
        ModelKind::PolarOnly => 2,
        ModelKind::RadiomicsOnly => 3,
        ModelKind::EarlyConcat => 4,
        ModelKind::LateResult => 5,
    };
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fit<T: Real>(
    arch: super::Arch,
    data: &TrainData,
    cfg: &TrainConfig,
    seed: u64,
    towers: Option<(&Network<f64>, &Network<f64>)>,
) -> Result<(Network<f64>, Vec<EpochRecord>)> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let mut init = Network::<T>::he_uniform(arch, &mut init_rng)?;
    if let Some((p, r)) = towers {
        copy_towers(&mut init, p, r)?;
    }
    let (net, hist) = train_network(init, data, cfg, seed)?;
    Ok((net.cast(), hist))
}

fn copy_towers<T: Real>(fusion: &mut Network<T>, polar: &Network<f64>, radiomics: &Network<f64>) -> Result<()> {
    let (tp, tr) = fusion.towers().ok_or_else(|| Error::model("tower seeding needs the fusion network"))?;
    for (dst, src_net) in [(tp, polar), (tr, radiomics)] {
        let src = src_net.hidden_layers();
        if src.len() != dst.len() || src.iter().zip(&dst).any(|(a, b)| (a.fan_in, a.fan_out) != (b.fan_in, b.fan_out)) {
            return Err(Error::model("single-modality network shape does not match the fusion tower"));
        }
        for (s, d) in src.iter().zip(&dst) {
            let len = s.fan_out * (s.fan_in + 1);
            for k in 0..len {
                fusion.params[d.off + k] = T::from_f64(src_net.params[s.off + k]);
            }
        }
    }
    Ok(())
}

/// A trained model with the loss history of every network it contains.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub history: Vec<(String, Vec<EpochRecord>)>,
}

/// Trains one model kind. `reuse` may hold already-trained single-modality
/// models for this exact data, config and seed; they are used instead of
/// retraining when the late average or tower seeding needs them.
pub fn train_model(
    kind: ModelKind,
    data: &TrainData,
    cfg: &TrainConfig,
    seed: u64,
    reuse: &[&Trained],
) -> Result<Trained> {
    let find = |k: ModelKind| reuse.iter().find(|t| t.model.kind() == k).map(|t| (*t).clone());
    let single = |k: ModelKind| -> Result<Trained> {
        match find(k) {
            Some(t) => Ok(t),
            None => train_model(k, data, cfg, seed, &[]),
        }
    };
    let net_of = |t: &Trained| match &t.model {
        Model::Single { net, .. } => net.clone(),
        Model::Late { .. } => unreachable!("single-modality kinds train one network"),
    };
    match kind {
        ModelKind::LateResult => {
            let p = single(ModelKind::PolarOnly)?;
            let r = single(ModelKind::RadiomicsOnly)?;
            let mut history = p.history.clone();
            history.extend(r.history.clone());
            Ok(Trained { model: Model::Late { polar: net_of(&p), radiomics: net_of(&r) }, history })
        }
        _ => {
            let arch = kind
                .arch(data.dp, data.dr, &cfg.hidden, 3)
                .expect("single-network kind has an architecture");
            let towers = if kind == ModelKind::Prffn && cfg.init_towers_from_baselines {
                Some((net_of(&single(ModelKind::PolarOnly)?), net_of(&single(ModelKind::RadiomicsOnly)?)))
            } else {
                None
            };
            let towers_ref = towers.as_ref().map(|(p, r)| (p, r));
            let s = network_seed(seed, kind);
            let (net, hist) = match cfg.precision {
                Precision::F32 => fit::<f32>(arch, data, cfg, s, towers_ref)?,
                Precision::F64 => fit::<f64>(arch, data, cfg, s, towers_ref)?,
            };
            Ok(Trained { model: Model::Single { kind, net }, history: vec![(kind.name().to_string(), hist)] })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut xp, mut xr, mut y) = (vec![], vec![], vec![]);
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            xp.push(a);
            xr.push(b);
            y.push(if a + b > 0.0 { 1 } else { 0 });
        }
        (xp, xr, y)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig { hidden: vec![16, 8, 4], batch_size: 32, max_epochs: 200, precision: Precision::F64, ..Default::default() }
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (xp, xr, y) = toy(400, 1);
        let data = TrainData { xp: &xp, xr: &xr, labels: &y, dp: 1, dr: 1 };
        let cfg = TrainConfig { val_fraction: 0.0, ..small_cfg() };
        let t = train_model(ModelKind::Prffn, &data, &cfg, 7, &[]).unwrap();
        let pred = t.model.predict_labels(&xp, &xr, y.len()).unwrap();
        let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn same_seed_same_history() {
        let (xp, xr, y) = toy(200, 2);
        let data = TrainData { xp: &xp, xr: &xr, labels: &y, dp: 1, dr: 1 };
        let cfg = TrainConfig { max_epochs: 5, ..small_cfg() };
        let a = train_model(ModelKind::Prffn, &data, &cfg, 3, &[]).unwrap();
        let b = train_model(ModelKind::Prffn, &data, &cfg, 3, &[]).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let (xp, xr, y) = toy(200, 3);
        let data = TrainData { xp: &xp, xr: &xr, labels: &y, dp: 1, dr: 1 };
        let cfg = TrainConfig { learning_rate: 1e3, max_epochs: 50, ..small_cfg() };
        let err = train_model(ModelKind::Prffn, &data, &cfg, 3, &[]).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err}");
    }

    #[test]
    fn single_class_rejected() {
        let xp = vec![0.0; 4];
        let y = vec![1u8; 4];
        let data = TrainData { xp: &xp, xr: &xp, labels: &y, dp: 1, dr: 1 };
        assert!(matches!(train_model(ModelKind::PolarOnly, &data, &small_cfg(), 0, &[]), Err(Error::Training(_))));
    }

    #[test]
    fn late_average_reuses_single_models() {
        let (xp, xr, y) = toy(100, 4);
        let data = TrainData { xp: &xp, xr: &xr, labels: &y, dp: 1, dr: 1 };
        let cfg = TrainConfig { max_epochs: 3, ..small_cfg() };
        let p = train_model(ModelKind::PolarOnly, &data, &cfg, 9, &[]).unwrap();
        let r = train_model(ModelKind::RadiomicsOnly, &data, &cfg, 9, &[]).unwrap();
        let fresh = train_model(ModelKind::LateResult, &data, &cfg, 9, &[]).unwrap();
        let reused = train_model(ModelKind::LateResult, &data, &cfg, 9, &[&p, &r]).unwrap();
        assert_eq!(fresh.model, reused.model);
    }

    #[test]
    fn negative_learning_rate_is_config_error() {
        let cfg = TrainConfig { learning_rate: -0.1, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
