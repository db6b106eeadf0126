use std::collections::BTreeMap;

use super::config::Hyperparameters;
use super::objective::{info_regularization, infomin_reward, LossTerms};
use crate::adversarial::{adv_loss, pgd_attack, AdversarialView, AttackConfig, AttackTarget};
use crate::crossview::{cross_loss, init_gates, split_views, GateVars};
use crate::diffmath::{adam_update, gaussian_matrix, info_nce, AdamConfig, Bound, ParamStore, Rng, Tape, Tensor, Var};
use crate::encoder::{init_features, propagate, Encoder};
use crate::error::{Error, Result};
use crate::graph::{
    build_mobility_graph, build_poi_graph, build_spatial_graph, fuse_views, normalize, EdgeList, MultiViewGraph,
};
use crate::region::{poi_context, skipgram_train, Dataset, PoiEmbedder, SelfAttention, SkipGramConfig};
use crate::vgae::{decode_structure, init_vgae, recon_loss, reparameterize_with, vgae_loss, VgaeVars};

/// Randomness consumed by one objective evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Augment {
    /// Standard-normal noise for the two variational draws.
    Gaussian([Tensor; 2]),
    /// Normalized adjacencies of two edge-dropout graphs.
    Dropout([Tensor; 2]),
}

/// Per-epoch inputs that are not parameters: augmentation randomness and
/// the (constant) adversarial embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochInputs {
    pub augment: Augment,
    pub adversarial: Option<Tensor>,
}

/// One row of the loss history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub terms: LossTerms,
    pub total: f64,
}

struct Encoded {
    h0: Var,
    h: Var,
    views: [Var; 2],
}

/// All trainable state plus the fixed inputs derived from one dataset.
#[derive(Clone, Debug)]
pub struct Model {
    pub hp: Hyperparameters,
    pub graph: MultiViewGraph,
    pub store: ParamStore,
    pub attack: AttackConfig,
    cat_embs: Tensor,
    context: Tensor,
    anorm: Tensor,
    embedder: PoiEmbedder,
    attention: SelfAttention,
    encoder: Encoder,
    epoch: usize,
}

fn guard<T>(term: &'static str, epoch: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| if e.is_numerical() { Error::Diverged { term, epoch } } else { e })
}

/// POI edges among the regions with a nonzero embedding.
fn poi_edges_skipping_zero_rows(ebar: &Tensor, eps: f64) -> Result<EdgeList> {
    let keep: Vec<usize> = (0..ebar.rows()).filter(|&i| ebar.row(i).iter().any(|&v| v != 0.0)).collect();
    let sub = Tensor::from_fn(keep.len(), ebar.cols(), |i, j| ebar.get(keep[i], j));
    Ok(build_poi_graph(&sub, eps)?.into_iter().map(|(a, b)| (keep[a], keep[b])).collect())
}

fn attack_config(hp: &Hyperparameters, num_edges: usize) -> AttackConfig {
    let budget = hp.edge_budget.unwrap_or(0.05 * num_edges as f64);
    let mut cfg = AttackConfig::with_budgets(budget, hp.feat_budget, hp.pgd_steps);
    if let Some(s) = hp.edge_step {
        cfg.edge_step = s;
    }
    if let Some(s) = hp.feat_step {
        cfg.feat_step = s;
    }
    cfg
}

fn fresh_store(hp: &Hyperparameters, d_in: usize, root: &Rng) -> Result<(PoiEmbedder, ParamStore)> {
    let mut store = ParamStore::new();
    let embedder = PoiEmbedder::init(&mut store, &mut root.substream("init.poi"), d_in, hp.dim)?;
    SelfAttention::init(&mut store, &mut root.substream("init.attn"), hp.dim)?;
    Encoder::init(&mut store, &mut root.substream("init.enc"), hp.dim, hp.depth)?;
    init_vgae(&mut store, &mut root.substream("init.vgae"), hp.dim)?;
    init_gates(&mut store, hp.dim)?;
    Ok((embedder, store))
}

impl Model {
    /// Trains category embeddings, initializes parameters and builds the
    /// fused graph from the initial POI embeddings.
    pub fn new(ds: &Dataset, hp: &Hyperparameters) -> Result<Model> {
        hp.validate()?;
        ds.validate()?;
        let root = Rng::new(hp.seed);
        let sg = SkipGramConfig {
            dim: hp.dim,
            epochs: hp.skipgram_epochs,
            negatives: hp.negatives,
            learning_rate: hp.skipgram_lr,
        };
        let cat_embs = skipgram_train(&ds.poi, &sg, &mut root.substream("skipgram"))?;
        let context = poi_context(&ds.poi, &cat_embs)?;

        let (embedder, store) = fresh_store(hp, context.cols(), &root)?;

        let mut tape = Tape::new();
        let p = store.bind_constant(&mut tape);
        let ctx = tape.constant(context.clone());
        let ebar = embedder.forward(&mut tape, &p, ctx)?;
        let gp = poi_edges_skipping_zero_rows(tape.value(ebar), hp.poi_threshold)?;
        let gm = build_mobility_graph(&ds.trajectories);
        let gs = build_spatial_graph(&ds.distances, hp.spatial_radius)?;
        let graph = fuse_views(&gp, &gm, &gs, ds.num_regions(), ds.num_slots())?;
        Self::assemble(hp.clone(), graph, cat_embs, context, store)
    }

    /// Rebuilds a model from saved parts.
    pub(crate) fn assemble(
        hp: Hyperparameters,
        graph: MultiViewGraph,
        cat_embs: Tensor,
        context: Tensor,
        store: ParamStore,
    ) -> Result<Model> {
        let (_, reference) = fresh_store(&hp, context.cols(), &Rng::new(0))?;
        let expected: Vec<_> = reference.iter().map(|(k, v)| (k, v.shape())).collect();
        let found: Vec<_> = store.iter().map(|(k, v)| (k, v.shape())).collect();
        if expected != found {
            return Err(Error::Snapshot("parameter names or shapes do not match the hyperparameters".into()));
        }
        if graph.regions() != context.rows() {
            return Err(Error::Snapshot(format!("graph has {} regions, context {}", graph.regions(), context.rows())));
        }
        let mut store = store;
        if hp.flags.disable_vgae {
            store.freeze_prefix("vgae.");
        }
        let anorm = normalize(graph.adjacency()).into_matrix();
        let attack = attack_config(&hp, graph.num_edges());
        Ok(Model {
            embedder: PoiEmbedder { d_in: context.cols(), d: hp.dim },
            attention: SelfAttention { d: hp.dim },
            encoder: Encoder { d: hp.dim, depth: hp.depth },
            hp,
            graph,
            store,
            attack,
            cat_embs,
            context,
            anorm,
            epoch: 0,
        })
    }

    pub fn cat_embs(&self) -> &Tensor {
        &self.cat_embs
    }

    pub fn context(&self) -> &Tensor {
        &self.context
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub(crate) fn restore_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    fn epoch_rng(&self, epoch: usize) -> Rng {
        Rng::new(self.hp.seed).substream(&format!("epoch.{epoch}"))
    }

    /// Draws the augmentation randomness from `rng`.
    pub fn draw_augment(&self, rng: &mut Rng) -> Augment {
        let (n, d) = (self.graph.len(), self.hp.dim);
        if self.hp.flags.disable_vgae {
            let a = self.graph.adjacency();
            Augment::Dropout([0, 1].map(|_| {
                let mut kept = a.clone();
                for i in 0..n {
                    for j in i + 1..n {
                        if a.get(i, j) != 0.0 && rng.bernoulli(self.hp.edge_dropout) {
                            kept.set(i, j, 0.0);
                            kept.set(j, i, 0.0);
                        }
                    }
                }
                normalize(&kept).into_matrix()
            }))
        } else {
            Augment::Gaussian([0, 1].map(|_| gaussian_matrix(rng, n, d, 0.0, 1.0)))
        }
    }

    fn encode(&self, tape: &mut Tape, p: &Bound, aug: &Augment) -> Result<Encoded> {
        let ctx = tape.constant(self.context.clone());
        let ebar = self.embedder.forward(tape, p, ctx)?;
        let e = self.attention.forward(tape, p, ebar)?;
        let h0 = init_features(tape, e, &self.graph)?;
        let anorm = tape.constant(self.anorm.clone());
        let weights = self.encoder.weights(p);
        let h = propagate(tape, anorm, h0, &weights)?;
        let views = match aug {
            Augment::Gaussian(noise) => {
                let vars = VgaeVars::from_bound(p);
                [reparameterize_with(tape, h, &vars, &noise[0])?, reparameterize_with(tape, h, &vars, &noise[1])?]
            }
            Augment::Dropout(adj) => {
                let mut out = [h, h];
                for (o, a) in out.iter_mut().zip(adj) {
                    let av = tape.constant(a.clone());
                    *o = propagate(tape, av, h0, &weights)?;
                }
                out
            }
        };
        Ok(Encoded { h0, h, views })
    }

    fn run_attack(&self, tape: &Tape, enc: &Encoded, rng: &mut Rng) -> Result<AdversarialView> {
        let weights: Vec<Tensor> = (0..self.hp.depth).map(|l| self.store.value(&Encoder::weight_name(l)).clone()).collect();
        let target = AttackTarget {
            adjacency: self.graph.adjacency(),
            h0: tape.value(enc.h0),
            weights: &weights,
            reference: tape.value(enc.views[0]),
            tau: self.hp.tau,
        };
        pgd_attack(&target, &self.attack, rng)
    }

    fn objective(&self, tape: &mut Tape, p: &Bound, enc: &Encoded, hhat: Option<&Tensor>, epoch: usize) -> Result<(Var, LossTerms)> {
        let hp = &self.hp;
        let [v1, v2] = enc.views;
        let l_vgae = guard("l_vgae", epoch, vgae_loss(tape, v1, v2, hp.tau))?;
        let views = split_views(tape, v1, &self.graph)?;
        let l_cross = guard("l_cross", epoch, cross_loss(tape, &views, &GateVars::from_bound(p), hp.tau))?;
        let l_adv = match hhat {
            Some(h) if !hp.flags.disable_adv => {
                let hv = tape.constant(h.clone());
                Some(guard("l_adv", epoch, adv_loss(tape, v1, hv, hp.tau))?)
            }
            _ => None,
        };
        let l_recon = if hp.flags.disable_vgae {
            None
        } else {
            let decoded = decode_structure(tape, v1)?;
            Some(guard("l_recon", epoch, recon_loss(tape, decoded, self.graph.adjacency()))?)
        };
        let v_ir = guard("v_ir", epoch, info_regularization(tape, v1, v2, enc.h, hp.tau, hp.ir_literal))?;

        let value = |tape: &Tape, v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        let lv = tape.value(l_vgae).item();
        let reward = if hp.flags.disable_infomin { 1.0 } else { infomin_reward(lv, hp.infomin_threshold, hp.reward_floor) };
        let lambda = if hp.flags.disable_ir { 0.0 } else { hp.ir_weight };
        let terms = LossTerms {
            l_vgae: lv,
            l_cross: tape.value(l_cross).item(),
            l_adv: value(tape, l_adv),
            l_recon: value(tape, l_recon),
            reward,
            v_ir: tape.value(v_ir).item(),
        };

        let mut parts = vec![(l_vgae, hp.w_vgae), (l_cross, hp.w_cross), (v_ir, lambda)];
        parts.extend(l_adv.map(|v| (v, hp.w_adv)));
        parts.extend(l_recon.map(|v| (v, reward)));
        let mut total: Option<Var> = None;
        for (v, w) in parts {
            let scaled = tape.scale(v, w)?;
            total = Some(match total {
                None => scaled,
                Some(acc) => tape.add(acc, scaled)?,
            });
        }
        let total = guard("total", epoch, Ok(total.expect("at least one term")))?;
        if !tape.value(total).is_finite() {
            return Err(Error::Diverged { term: "total", epoch });
        }
        Ok((total, terms))
    }

    /// Inputs for `epoch` (1-based): fresh augmentation and, unless disabled,
    /// an attack against the current parameters.
    pub fn epoch_inputs(&self, epoch: usize) -> Result<EpochInputs> {
        let rng = self.epoch_rng(epoch);
        let augment = self.draw_augment(&mut rng.substream("augment"));
        let adversarial = if self.hp.flags.disable_adv {
            None
        } else {
            let mut tape = Tape::new();
            let p = self.store.bind_constant(&mut tape);
            let enc = self.encode(&mut tape, &p, &augment)?;
            let view = guard("l_adv", epoch, self.run_attack(&tape, &enc, &mut rng.substream("attack")))?;
            Some(view.hhat)
        };
        Ok(EpochInputs { augment, adversarial })
    }

    /// Loss terms, total and parameter gradients for fixed inputs.
    pub fn evaluate(&self, inputs: &EpochInputs) -> Result<(LossTerms, f64, BTreeMap<String, Tensor>)> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let enc = self.encode(&mut tape, &p, &inputs.augment)?;
        let epoch = self.epoch + 1;
        let (total, terms) = self.objective(&mut tape, &p, &enc, inputs.adversarial.as_ref(), epoch)?;
        let grads = guard("total", epoch, tape.backward(total))?;
        Ok((terms, tape.value(total).item(), grads.named()))
    }

    /// One epoch: augmentation, attack, objective, Adam step.
    pub fn step(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch + 1;
        let inputs = self.epoch_inputs(epoch)?;
        let (terms, total, grads) = self.evaluate(&inputs)?;
        let adam = AdamConfig { lr: self.hp.lr, weight_decay: self.hp.weight_decay, ..AdamConfig::default() };
        adam_update(&mut self.store, &grads, &adam)?;
        self.epoch = epoch;
        Ok(EpochRecord { epoch, terms, total })
    }

    /// Noise-free augmentation: zero variational noise, or the graph with
    /// no edges dropped.
    pub fn expected_augment(&self) -> Augment {
        let (n, d) = (self.graph.len(), self.hp.dim);
        if self.hp.flags.disable_vgae {
            Augment::Dropout([self.anorm.clone(), self.anorm.clone()])
        } else {
            Augment::Gaussian([Tensor::zeros(n, d), Tensor::zeros(n, d)])
        }
    }

    /// Region embeddings (`J x d`) of the first view under `aug`: pooled
    /// per view block and averaged over the three blocks.
    pub fn embeddings_for(&self, aug: &Augment) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.store.bind_constant(&mut tape);
        let enc = self.encode(&mut tape, &p, aug)?;
        let v = split_views(&mut tape, enc.views[0], &self.graph)?;
        let ps = tape.add(v.poi, v.mobility)?;
        let all = tape.add(ps, v.spatial)?;
        let mean = tape.scale(all, 1.0 / 3.0)?;
        Ok(tape.value(mean).clone())
    }

    /// Region embeddings from the expected augmented view.
    pub fn embeddings(&self) -> Result<Tensor> {
        self.embeddings_for(&self.expected_augment())
    }

    /// Contrastive loss between two augmented draws; used for diagnostics.
    pub fn augmentation_contrast(&self, inputs: &EpochInputs) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.store.bind_constant(&mut tape);
        let enc = self.encode(&mut tape, &p, &inputs.augment)?;
        let l = info_nce(&mut tape, enc.views[0], enc.views[1], self.hp.tau)?;
        Ok(tape.value(l).item())
    }
}

/// Trains for `hp.epochs` epochs; returns embeddings, the model and the
/// loss history.
pub fn train(ds: &Dataset, hp: &Hyperparameters) -> Result<(Tensor, Model, Vec<EpochRecord>)> {
    let mut model = Model::new(ds, hp)?;
    let mut history = Vec::with_capacity(hp.epochs);
    for _ in 0..hp.epochs {
        history.push(model.step()?);
    }
    let emb = model.embeddings()?;
    Ok((emb, model, history))
}
