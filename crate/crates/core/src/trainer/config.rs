use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parts of the objective are switched off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// No adversarial view; the adversarial term is zero.
    pub disable_adv: bool,
    /// Edge-dropout views replace the variational ones; no reconstruction.
    pub disable_vgae: bool,
    /// Information regularization weight forced to zero.
    pub disable_ir: bool,
    /// Reconstruction reward fixed at one.
    pub disable_infomin: bool,
}

impl AblationFlags {
    pub const VARIANTS: [(&'static str, AblationFlags); 5] = [
        ("full", AblationFlags { disable_adv: false, disable_vgae: false, disable_ir: false, disable_infomin: false }),
        ("no_adv", AblationFlags { disable_adv: true, disable_vgae: false, disable_ir: false, disable_infomin: false }),
        ("no_vgae", AblationFlags { disable_adv: false, disable_vgae: true, disable_ir: false, disable_infomin: false }),
        ("no_ir", AblationFlags { disable_adv: false, disable_vgae: false, disable_ir: true, disable_infomin: false }),
        ("no_infomin", AblationFlags { disable_adv: false, disable_vgae: false, disable_ir: false, disable_infomin: true }),
    ];

    pub fn by_name(name: &str) -> Option<AblationFlags> {
        Self::VARIANTS.iter().find(|(n, _)| *n == name).map(|(_, f)| *f)
    }
}

/// Every knob of the pipeline. `None` budgets and steps are derived from
/// the graph at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub dim: usize,
    pub depth: usize,
    pub tau: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub reward_floor: f64,
    /// Contrastive-loss level above which reconstruction gets full weight.
    /// Tuned at desk scale.
    pub infomin_threshold: f64,
    /// Weight of the information regularizer. Chosen by a sweep on held-out
    /// synthetic seeds.
    pub ir_weight: f64,
    pub ir_literal: bool,
    /// Defaults to 5% of the fused edges.
    pub edge_budget: Option<f64>,
    pub feat_budget: f64,
    pub edge_step: Option<f64>,
    pub feat_step: Option<f64>,
    pub pgd_steps: usize,
    pub poi_threshold: f64,
    pub spatial_radius: f64,
    pub seed: u64,
    pub skipgram_epochs: usize,
    pub negatives: usize,
    pub skipgram_lr: f64,
    /// Probability of dropping each edge in the dropout views used when the
    /// variational augmentation is disabled.
    pub edge_dropout: f64,
    pub w_vgae: f64,
    pub w_cross: f64,
    pub w_adv: f64,
    pub flags: AblationFlags,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            dim: 96,
            depth: 2,
            tau: 0.4,
            lr: 5e-4,
            weight_decay: 0.01,
            epochs: 200,
            reward_floor: 0.01,
            infomin_threshold: 0.1,
            ir_weight: 0.05,
            ir_literal: false,
            edge_budget: None,
            feat_budget: 0.1,
            edge_step: None,
            feat_step: None,
            pgd_steps: 10,
            poi_threshold: 0.7,
            spatial_radius: 0.8,
            seed: 0,
            skipgram_epochs: 50,
            negatives: 5,
            skipgram_lr: 0.025,
            edge_dropout: 0.2,
            w_vgae: 1.0,
            w_cross: 1.0,
            w_adv: 1.0,
            flags: AblationFlags::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl Hyperparameters {
    /// Field names accepted by [`Hyperparameters::set`], in echo order.
    pub const KEYS: [&'static str; 30] = [
        "dim", "depth", "tau", "lr", "weight_decay", "epochs", "reward_floor", "infomin_threshold", "ir_weight",
        "ir_literal", "edge_budget", "feat_budget", "edge_step", "feat_step", "pgd_steps", "poi_threshold",
        "spatial_radius", "seed", "skipgram_epochs", "negatives", "skipgram_lr", "edge_dropout", "w_vgae", "w_cross",
        "w_adv", "disable_adv", "disable_vgae", "disable_ir", "disable_infomin", "variant",
    ];

    /// Sets one field from its textual form. `variant` sets all four flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dim" => self.dim = parse_num(key, v)?,
            "depth" => self.depth = parse_num(key, v)?,
            "tau" => self.tau = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "reward_floor" => self.reward_floor = parse_num(key, v)?,
            "infomin_threshold" => self.infomin_threshold = parse_num(key, v)?,
            "ir_weight" => self.ir_weight = parse_num(key, v)?,
            "ir_literal" => self.ir_literal = parse_num(key, v)?,
            "edge_budget" => self.edge_budget = parse_auto(key, v)?,
            "feat_budget" => self.feat_budget = parse_num(key, v)?,
            "edge_step" => self.edge_step = parse_auto(key, v)?,
            "feat_step" => self.feat_step = parse_auto(key, v)?,
            "pgd_steps" => self.pgd_steps = parse_num(key, v)?,
            "poi_threshold" => self.poi_threshold = parse_num(key, v)?,
            "spatial_radius" => self.spatial_radius = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "skipgram_epochs" => self.skipgram_epochs = parse_num(key, v)?,
            "negatives" => self.negatives = parse_num(key, v)?,
            "skipgram_lr" => self.skipgram_lr = parse_num(key, v)?,
            "edge_dropout" => self.edge_dropout = parse_num(key, v)?,
            "w_vgae" => self.w_vgae = parse_num(key, v)?,
            "w_cross" => self.w_cross = parse_num(key, v)?,
            "w_adv" => self.w_adv = parse_num(key, v)?,
            "disable_adv" => self.flags.disable_adv = parse_num(key, v)?,
            "disable_vgae" => self.flags.disable_vgae = parse_num(key, v)?,
            "disable_ir" => self.flags.disable_ir = parse_num(key, v)?,
            "disable_infomin" => self.flags.disable_infomin = parse_num(key, v)?,
            "variant" => {
                self.flags = AblationFlags::by_name(v).ok_or_else(|| Error::Config(format!("unknown variant `{v}`")))?
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `name = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `name = value`", n + 1)))?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut hp = Self::default();
        hp.apply_text(&text)?;
        Ok(hp)
    }

    /// One `name = value` line per field, re-parseable by [`apply_text`].
    ///
    /// [`apply_text`]: Hyperparameters::apply_text
    pub fn to_text(&self) -> String {
        let f = &self.flags;
        let rows: [(&str, String); 29] = [
            ("dim", self.dim.to_string()),
            ("depth", self.depth.to_string()),
            ("tau", self.tau.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("reward_floor", self.reward_floor.to_string()),
            ("infomin_threshold", self.infomin_threshold.to_string()),
            ("ir_weight", self.ir_weight.to_string()),
            ("ir_literal", self.ir_literal.to_string()),
            ("edge_budget", show_auto(self.edge_budget)),
            ("feat_budget", self.feat_budget.to_string()),
            ("edge_step", show_auto(self.edge_step)),
            ("feat_step", show_auto(self.feat_step)),
            ("pgd_steps", self.pgd_steps.to_string()),
            ("poi_threshold", self.poi_threshold.to_string()),
            ("spatial_radius", self.spatial_radius.to_string()),
            ("seed", self.seed.to_string()),
            ("skipgram_epochs", self.skipgram_epochs.to_string()),
            ("negatives", self.negatives.to_string()),
            ("skipgram_lr", self.skipgram_lr.to_string()),
            ("edge_dropout", self.edge_dropout.to_string()),
            ("w_vgae", self.w_vgae.to_string()),
            ("w_cross", self.w_cross.to_string()),
            ("w_adv", self.w_adv.to_string()),
            ("disable_adv", f.disable_adv.to_string()),
            ("disable_vgae", f.disable_vgae.to_string()),
            ("disable_ir", f.disable_ir.to_string()),
            ("disable_infomin", f.disable_infomin.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.reward_floor > 0.0 && self.reward_floor < 1.0) {
            return bad(format!("reward_floor must lie in (0, 1), got {}", self.reward_floor));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return bad("lr must be positive and weight_decay non-negative".into());
        }
        if !(0.0..1.0).contains(&self.edge_dropout) {
            return bad(format!("edge_dropout must lie in [0, 1), got {}", self.edge_dropout));
        }
        let budgets = [self.edge_budget, Some(self.feat_budget), self.edge_step, self.feat_step];
        if budgets.iter().flatten().any(|v| !(*v >= 0.0)) {
            return bad("attack budgets and steps must be non-negative".into());
        }
        if self.ir_weight < 0.0 || [self.w_vgae, self.w_cross, self.w_adv].iter().any(|w| *w < 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        Ok(())
    }
}
