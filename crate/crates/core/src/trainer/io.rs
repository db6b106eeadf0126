use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Hyperparameters;
use super::model::{EpochRecord, Model};
use crate::diffmath::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::graph::{MultiViewGraph, View, ViewNode};

pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

fn write(path: &Path, s: String) -> Result<()> {
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_loss_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("epoch,l_vgae,l_cross,l_adv,l_recon,reward,v_ir,total\n");
    for r in history {
        let t = &r.terms;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            num(t.l_vgae),
            num(t.l_cross),
            num(t.l_adv),
            num(t.l_recon),
            num(t.reward),
            num(t.v_ir),
            num(r.total)
        );
    }
    write(path.as_ref(), s)
}

/// `region_id,e_0,..,e_{d-1}`, one row per region, round-trip exact.
pub fn export_embeddings(emb: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("region_id");
    for k in 0..emb.cols() {
        let _ = write!(s, ",e_{k}");
    }
    s.push('\n');
    for i in 0..emb.rows() {
        s.push_str(&i.to_string());
        for v in emb.row(i) {
            s.push(',');
            s.push_str(&num(*v));
        }
        s.push('\n');
    }
    write(path.as_ref(), s)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let parse_err = |line: u64, column: usize, message: String| Error::Parse { file: path.to_path_buf(), line, column, message };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_err(0, 0, e.to_string()))?;
    let cols = rdr.headers().map_err(|e| parse_err(1, 0, e.to_string()))?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: usize = rec[0].trim().parse().map_err(|_| parse_err(line, 1, format!("bad region id `{}`", &rec[0])))?;
        if id != rows {
            return Err(parse_err(line, 1, format!("expected region {rows}, found {id}")));
        }
        for (c, field) in rec.iter().enumerate().skip(1) {
            data.push(field.trim().parse::<f64>().map_err(|_| parse_err(line, c + 1, format!("bad number `{field}`")))?);
        }
        rows += 1;
    }
    Tensor::new(rows, cols, data)
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TensorRepr {
    fn from(t: &Tensor) -> Self {
        TensorRepr { rows: t.rows(), cols: t.cols(), data: t.data().to_vec() }
    }

    fn into_tensor(self) -> Result<Tensor> {
        Tensor::new(self.rows, self.cols, self.data).map_err(|e| Error::Snapshot(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRepr {
    region: usize,
    view: String,
    slot: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    hyperparameters: Hyperparameters,
    epochs_done: usize,
    nodes: Vec<NodeRepr>,
    edges: Vec<(usize, usize)>,
    cat_embs: TensorRepr,
    context: TensorRepr,
    params: BTreeMap<String, TensorRepr>,
}

/// Saves everything needed to recompute embeddings. Optimizer moments are
/// not kept, so a restored model is for inference.
pub fn save_snapshot(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let snap = Snapshot {
        hyperparameters: model.hp.clone(),
        epochs_done: model.epochs_done(),
        nodes: model
            .graph
            .nodes()
            .iter()
            .map(|n| NodeRepr { region: n.region, view: n.view.to_string(), slot: n.slot })
            .collect(),
        edges: model.graph.edges(),
        cat_embs: TensorRepr::from(model.cat_embs()),
        context: TensorRepr::from(model.context()),
        params: model.store.iter().map(|(k, v)| (k.to_string(), TensorRepr::from(v))).collect(),
    };
    let text = serde_json::to_string(&snap).map_err(|e| Error::Snapshot(e.to_string()))?;
    write(path.as_ref(), text)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let snap: Snapshot = serde_json::from_str(&text).map_err(|e| Error::Snapshot(e.to_string()))?;
    snap.hyperparameters.validate()?;
    let nodes = snap
        .nodes
        .into_iter()
        .map(|n| {
            let view: View = n.view.parse().map_err(Error::Snapshot)?;
            Ok(ViewNode { region: n.region, view, slot: n.slot })
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = MultiViewGraph::from_parts(nodes, &snap.edges)?;
    let mut store = ParamStore::new();
    for (name, t) in snap.params {
        store.insert(name, t.into_tensor()?)?;
    }
    let mut model = Model::assemble(
        snap.hyperparameters,
        graph,
        snap.cat_embs.into_tensor()?,
        snap.context.into_tensor()?,
        store,
    )?;
    model.restore_epoch(snap.epochs_done);
    Ok(model)
}
