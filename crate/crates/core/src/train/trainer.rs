use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::dataset::load_dataset;
use super::{io_error, Result, RunConfig, TrainError};
use crate::ctdata::{build_triplets, derive_seed, SliceTriplet};
use crate::lossmetrics::combined_loss;
use crate::model::HqiNet;
use crate::tensor::{AdamState, Graph, Mode, ParamStore, Shape, Tensor};

pub const LOSS_LOG: &str = "loss_log.csv";
pub const LOSS_LOG_HEADER: &str = "step,epoch,loss,l1,ssim_loss,wall_time";
pub const VAL_LOG: &str = "val_log.csv";
pub const VAL_LOG_HEADER: &str = "epoch,val_loss,val_l1,val_ssim_loss";

const INIT_STREAM: u32 = 32;
const SHUFFLE_STREAM: u32 = 33;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs: u64,
    pub steps: u64,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    pub best_val_loss: f64,
    pub output_dir: PathBuf,
}

pub(crate) fn init_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, INIT_STREAM, 0)
}

pub(crate) fn triplets_of(patients: &[super::Patient]) -> Result<Vec<SliceTriplet>> {
    let mut out = Vec::new();
    for p in patients {
        out.extend(build_triplets(&p.low, &p.full, &p.id)?);
    }
    Ok(out)
}

/// Crops `(y, x, size)` windows of the chosen triplets into one batch.
fn crop_batch(triplets: &[SliceTriplet], picks: &[(usize, usize, usize)], size: usize) -> Result<(Tensor, Tensor)> {
    let crop = |t: &Tensor, y0: usize, x0: usize| {
        let s = t.shape();
        Tensor::from_fn(Shape::new(1, s.c, size, size), |_, c, y, x| t.get(0, c, y0 + y, x0 + x))
    };
    let mut inputs = Vec::with_capacity(picks.len());
    let mut targets = Vec::with_capacity(picks.len());
    for &(i, y, x) in picks {
        inputs.push(crop(&triplets[i].input, y, x));
        targets.push(crop(&triplets[i].target, y, x));
    }
    Ok((Tensor::stack(&inputs)?, Tensor::stack(&targets)?))
}

#[derive(Debug, Clone, Copy)]
struct LossValues {
    total: f64,
    l1: f64,
    ssim_loss: f64,
}

/// Mean objective over whole validation slices, in eval mode.
fn validate(net: &HqiNet, store: &mut ParamStore, cfg: &RunConfig, triplets: &[SliceTriplet]) -> Result<LossValues> {
    let mut sum = LossValues {
        total: 0.0,
        l1: 0.0,
        ssim_loss: 0.0,
    };
    for chunk in triplets.chunks(cfg.batch_size) {
        let x = Tensor::stack(&chunk.iter().map(|t| t.input.clone()).collect::<Vec<_>>())?;
        let y = Tensor::stack(&chunk.iter().map(|t| t.target.clone()).collect::<Vec<_>>())?;
        let mut g = Graph::new(store, Mode::Eval);
        let (x, y) = (g.constant(x), g.constant(y));
        let out = net.forward(&mut g, x)?;
        let parts = combined_loss(&mut g, out, y, &cfg.loss.weights, &cfg.loss.ssim)?;
        let k = chunk.len() as f64;
        sum.total += k * g.value(parts.total).item();
        sum.l1 += k * g.value(parts.l1).item();
        sum.ssim_loss += k * g.value(parts.ssim_loss).item();
    }
    let n = triplets.len() as f64;
    Ok(LossValues {
        total: sum.total / n,
        l1: sum.l1 / n,
        ssim_loss: sum.ssim_loss / n,
    })
}

/// Rewrites a CSV log keeping the header and rows whose first column is at
/// most `keep_through`; creates it with just the header otherwise.
fn open_log(path: &Path, header: &str, keep_through: Option<u64>) -> Result<BufWriter<File>> {
    let mut kept = vec![header.to_string()];
    if let Some(limit) = keep_through {
        if let Ok(text) = fs::read_to_string(path) {
            kept.extend(
                text.lines()
                    .skip(1)
                    .filter(|l| {
                        l.split(',')
                            .next()
                            .and_then(|k| k.parse::<u64>().ok())
                            .is_some_and(|k| k <= limit)
                    })
                    .map(str::to_string),
            );
        }
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?);
    for line in kept {
        writeln!(w, "{line}").map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))?;
    Ok(w)
}

fn check_finite(values: &[f64], step: u64, epoch: u64, lr: f64, grad_norm: f64, dir: &Path) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) && grad_norm.is_finite() {
        return Ok(());
    }
    let err = TrainError::NonFinite {
        step,
        epoch,
        loss: values[0],
        lr,
        grad_norm,
    };
    let dump = serde_json::json!({
        "step": step,
        "epoch": epoch,
        "loss": values[0].to_string(),
        "lr": lr,
        "grad_norm": grad_norm.to_string(),
    });
    // Best effort: the error itself carries the same fields.
    let _ = fs::write(dir.join("diagnostic.json"), dump.to_string() + "\n");
    Err(err)
}

/// Trains on the dataset in `cfg.data.dir`, writing logs and checkpoints
/// to `cfg.output_dir`. With `resume`, continues from that checkpoint's
/// state; the logs are cut back to its step before appending.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    cfg.validate()?;
    let (_, train, test) = load_dataset(&cfg.data.dir)?;
    let train_set = triplets_of(&train)?;
    let val_set = triplets_of(&test)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Data("need at least one train and one test triplet".into()));
    }
    for t in train_set.iter().chain(&val_set) {
        let s = t.input.shape();
        if s.h < cfg.crop_size || s.w < cfg.crop_size {
            return Err(TrainError::Data(format!(
                "slice {}x{} of {} is smaller than crop_size {}",
                s.h, s.w, t.patient_id, cfg.crop_size
            )));
        }
    }
    let val_shape = val_set[0].input.shape();
    cfg.model.check_input(val_shape.h, val_shape.w)?;

    let mut store = ParamStore::new();
    let net = HqiNet::new(cfg.model.clone(), &mut store, init_seed(cfg))?;
    let mut adam = AdamState::new(cfg.optimizer, &store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM, 0));
    let (mut epoch, mut step, mut best) = (0u64, 0u64, f64::INFINITY);
    if let Some(path) = resume {
        let ckpt = Checkpoint::load(path)?;
        ckpt.restore_into(&mut store, &mut adam)?;
        adam.config = cfg.optimizer;
        rng = ckpt.rng.restore();
        (epoch, step, best) = (ckpt.epoch, ckpt.step, ckpt.best_val_loss);
    }

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let kept = resume.map(|_| (step, epoch));
    let mut loss_log = open_log(&dir.join(LOSS_LOG), LOSS_LOG_HEADER, kept.map(|k| k.0))?;
    let mut val_log = open_log(&dir.join(VAL_LOG), VAL_LOG_HEADER, kept.map(|k| k.1))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, cfg.to_json() + "\n").map_err(|e| io_error(&config_path, e))?;

    let started = Instant::now();
    let lr = cfg.optimizer.lr;
    let (mut first_loss, mut last_loss) = (None, None);
    let h = train_set[0].input.shape().h;
    let w = train_set[0].input.shape().w;
    while epoch < cfg.epochs as u64 {
        epoch += 1;
        let mut order: Vec<usize> = (0..train_set.len())
            .flat_map(|i| std::iter::repeat_n(i, cfg.crops_per_triplet))
            .collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let picks: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let y = rng.random_range(0..=h - cfg.crop_size);
                    let x = rng.random_range(0..=w - cfg.crop_size);
                    (i, y, x)
                })
                .collect();
            let (x, y) = crop_batch(&train_set, &picks, cfg.crop_size)?;
            store.zero_grad();
            let mut g = Graph::new(&mut store, Mode::Train);
            let (x, y) = (g.constant(x), g.constant(y));
            let out = net.forward(&mut g, x)?;
            let parts = combined_loss(&mut g, out, y, &cfg.loss.weights, &cfg.loss.ssim)?;
            let loss = [parts.total, parts.l1, parts.ssim_loss].map(|v| g.value(v).item());
            g.backward(parts.total)?;
            drop(g);
            step += 1;
            check_finite(&loss, step, epoch, lr, store.grad_norm(), dir)?;
            adam.step(&mut store)?;
            let wall = if cfg.strict_determinism {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            };
            writeln!(loss_log, "{step},{epoch},{},{},{},{wall:.3}", loss[0], loss[1], loss[2])
                .map_err(|e| io_error(dir, e))?;
            first_loss.get_or_insert(loss[0]);
            last_loss = Some(loss[0]);
        }
        loss_log.flush().map_err(|e| io_error(dir, e))?;

        let val = validate(&net, &mut store, cfg, &val_set)?;
        check_finite(&[val.total], step, epoch, lr, 0.0, dir)?;
        writeln!(val_log, "{epoch},{},{},{}", val.total, val.l1, val.ssim_loss).map_err(|e| io_error(dir, e))?;
        val_log.flush().map_err(|e| io_error(dir, e))?;
        let improved = val.total < best;
        if improved {
            best = val.total;
        }
        let ckpt = Checkpoint::capture(cfg, epoch, step, &rng, best, &store, &adam);
        if epoch % cfg.checkpoint_every as u64 == 0 || epoch == cfg.epochs as u64 {
            ckpt.save(&dir.join(format!("epoch_{epoch}.ckpt")))?;
        }
        ckpt.save(&dir.join("last.ckpt"))?;
        if improved {
            ckpt.save(&dir.join("best.ckpt"))?;
        }
    }
    Ok(TrainSummary {
        epochs: epoch,
        steps: step,
        first_loss,
        last_loss,
        best_val_loss: best,
        output_dir: dir.clone(),
    })
}
