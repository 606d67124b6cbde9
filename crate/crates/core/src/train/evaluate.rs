use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::dataset::{load_index, load_split};
use super::trainer::{init_seed, triplets_of};
use super::{io_error, Result, RunConfig, TrainError};
use crate::lossmetrics::{render_table, MetricsReport};
use crate::model::HqiNet;
use crate::tensor::{AdamState, Graph, Mode, ParamStore, Tensor};

/// Restores the network of a checkpoint.
pub(crate) fn load_model(ckpt: &Checkpoint) -> Result<(HqiNet, ParamStore)> {
    let mut store = ParamStore::new();
    let net = HqiNet::new(ckpt.config.model.clone(), &mut store, init_seed(&ckpt.config))?;
    let mut adam = AdamState::new(ckpt.config.optimizer, &store)?;
    ckpt.restore_into(&mut store, &mut adam)?;
    Ok((net, store))
}

/// Eval-mode prediction for an `(n, 3, h, w)` input, clamped to `[0, 1]`.
pub fn predict(net: &HqiNet, store: &mut ParamStore, input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    net.config()
        .check_input(s.h, s.w)
        .map_err(|e| TrainError::Data(format!("input geometry does not fit the checkpoint's model: {e}")))?;
    let mut g = Graph::new(store, Mode::Eval);
    let x = g.constant(input.clone());
    let out = net.forward(&mut g, x)?;
    let mut out = g.value(out).clone();
    for v in out.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub data_dir: PathBuf,
    pub low_dose: MetricsReport,
    pub model: MetricsReport,
}

impl EvalReport {
    pub fn table(&self) -> String {
        render_table(&[&self.low_dose, &self.model])
    }
}

/// Scores the low-dose middle slice and the network output against the
/// full-dose target on every test triplet. Writes `eval.json` and
/// `eval.txt` to `out_dir`.
pub fn cmd_eval(checkpoint: &Path, data_dir: Option<&Path>, out_dir: &Path) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg: &RunConfig = &ckpt.config;
    let data_dir = data_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.data.dir.clone());
    let (net, mut store) = load_model(&ckpt)?;
    let index = load_index(&data_dir)?;
    let test = load_split(&data_dir, "test", &index.test)?;
    let triplets = triplets_of(&test)?;
    if triplets.is_empty() {
        return Err(TrainError::Data("test split has no triplets".into()));
    }
    let mut low = Vec::with_capacity(triplets.len());
    let mut pred = Vec::with_capacity(triplets.len());
    let mut full = Vec::with_capacity(triplets.len());
    for chunk in triplets.chunks(cfg.batch_size) {
        let x = Tensor::stack(&chunk.iter().map(|t| t.input.clone()).collect::<Vec<_>>())?;
        let out = predict(&net, &mut store, &x)?;
        let p = out.shape().plane();
        for (k, t) in chunk.iter().enumerate() {
            low.push(t.input.plane(0, 1).to_vec());
            pred.push(out.data()[k * p..(k + 1) * p].to_vec());
            full.push(t.target.data().to_vec());
        }
    }
    let report = EvalReport {
        checkpoint: checkpoint.to_path_buf(),
        data_dir,
        low_dose: MetricsReport::compute("Low-dose", &low, &full, &cfg.metrics)?,
        model: MetricsReport::compute("HQINet", &pred, &full, &cfg.metrics)?,
    };
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let json = out_dir.join("eval.json");
    fs::write(
        &json,
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )
    .map_err(|e| io_error(&json, e))?;
    let txt = out_dir.join("eval.txt");
    fs::write(&txt, report.table()).map_err(|e| io_error(&txt, e))?;
    Ok(report)
}
