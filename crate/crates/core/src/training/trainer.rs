use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::loss::{seg_loss, LossWeights};
use super::schedule::LrSchedule;
use super::sgd::{Sgd, SgdConfig};
use crate::data::{Batch, LoadedSample};
use crate::error::{Error, Result};
use crate::model::MbaNet;
use crate::nn::{fnv1a, ParamStore};
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub poly_power: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch: 2,
            lr: 3e-4,
            momentum: 0.99,
            weight_decay: 1e-4,
            poly_power: 0.9,
            schedule: LrSchedule::Poly,
            seed: 0,
            augment: AugmentConfig::default(),
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 || self.batch == 0 {
            return bad(format!("epochs ({}) and batch ({}) must be positive", self.epochs, self.batch));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "need lr >= 0, weight decay >= 0 and momentum in [0, 1); got {}, {}, {}",
                self.lr, self.weight_decay, self.momentum
            ));
        }
        if !(0.0..=1.0).contains(&self.augment.flip_prob) {
            return bad(format!("flip probability {} is outside [0, 1]", self.augment.flip_prob));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.schedule.lr(self.lr, epoch, self.epochs, self.poly_power)
    }
}

/// One line of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Train `store` in place. The sample order, augmentation draws and
/// therefore every update depend only on `cfg.seed`.
pub fn train(
    model: &MbaNet,
    store: &mut ParamStore<f32>,
    data: &[LoadedSample],
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&LogRow),
) -> Result<Vec<LogRow>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let x_s = model.config.x_s;
    let mut opt = Sgd::new(SgdConfig { momentum: cfg.momentum, weight_decay: cfg.weight_decay }, store.iter().map(|e| e.2));
    let mut log = Vec::new();
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(fnv1a(cfg.seed, &format!("shuffle/{epoch}"))));
        for chunk in order.chunks(cfg.batch) {
            let (images, masks): (Vec<Tensor<f32>>, Vec<Tensor<f32>>) = chunk
                .iter()
                .map(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(cfg.seed, &format!("augment/{epoch}/{i}")));
                    augment(&data[i].image, &data[i].mask, &cfg.augment, &mut rng)
                })
                .unzip();
            let batch = Batch::new(&images, &masks, x_s);
            let (loss, grads) = {
                let graph = Graph::new();
                let p = store.bind(&graph);
                let logits = model.forward(&p, graph.constant(batch.high), graph.constant(batch.low))?;
                let loss = seg_loss(logits, &batch.mask, cfg.loss)?;
                let value = f64::from(loss.value().item());
                if !value.is_finite() {
                    return Err(Error::Numeric(format!("loss is {value} at epoch {epoch}, iteration {iteration}")));
                }
                (value, p.grads(&graph.backward(loss)?))
            };
            opt.step(store.tensors_mut(), &grads, lr)?;
            let row = LogRow { iteration, epoch, lr, loss };
            on_row(&row);
            log.push(row);
            iteration += 1;
        }
    }
    Ok(log)
}

pub fn write_loss_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::from("iteration,epoch,lr,loss\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iteration, r.epoch, r.lr, r.loss));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |n: usize| Error::Data(format!("{}:{}: malformed loss log row", path.display(), n + 1));
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(n));
            }
            Ok(LogRow {
                iteration: f[0].parse().map_err(|_| bad(n))?,
                epoch: f[1].parse().map_err(|_| bad(n))?,
                lr: f[2].parse().map_err(|_| bad(n))?,
                loss: f[3].parse().map_err(|_| bad(n))?,
            })
        })
        .collect()
}
