//! Budgeted adversarial view: continuous edge-flip relaxation plus a bounded
//! additive perturbation of the encoder output, optimized by projected
//! gradient ascent on the contrastive loss.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::diffmath::{info_nce, Rng, Tape, Tensor, Var};
use crate::encoder::propagate;
use crate::error::{Error, Result};
use crate::graph::{normalize, normalize_on_tape};

/// Bisection tolerance on the dual variable.
pub const BISECTION_TOL: f64 = 1e-10;
/// Bernoulli re-draws before falling back to greedy truncation.
pub const MAX_REDRAWS: usize = 16;
/// Independent roundings of the relaxed flips; the strongest one is kept.
pub const ROUNDING_TRIALS: usize = 4;

fn check_flip_matrix(l: &Tensor, n: usize) -> Result<()> {
    if l.shape() != (n, n) {
        return Err(Error::Validation(format!("flip matrix {:?} for {n} nodes", l.shape())));
    }
    for i in 0..n {
        if l.get(i, i) != 0.0 {
            return Err(Error::Validation(format!("flip matrix has nonzero diagonal at {i}")));
        }
        for j in i + 1..n {
            let v = l.get(i, j);
            if v != l.get(j, i) {
                return Err(Error::Validation(format!("flip matrix is asymmetric at ({i},{j})")));
            }
            if v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!("flip entry ({i},{j}) = {v} is not 0/1")));
            }
        }
    }
    Ok(())
}

/// Toggles every edge where `l` is one: `a XOR l`.
///
/// This is `a + (1 - I - 2a) ⊙ l`, i.e. the complement graph masked by the
/// flip pattern, so removals and insertions share one budget.
pub fn flip_apply(a: &Tensor, l: &Tensor) -> Result<Tensor> {
    check_flip_matrix(l, a.rows())?;
    Ok(a.zip_map(l, |x, f| if f == 1.0 { 1.0 - x } else { x }))
}

fn clip_sum(y: &[f64], shift: f64) -> f64 {
    y.iter().map(|v| (v - shift).clamp(0.0, 1.0)).sum()
}

/// Euclidean projection of `y` onto `{x ∈ [0,1]^n : Σx ≤ budget}`.
pub fn project_budget_box(y: &[f64], budget: f64) -> Vec<f64> {
    if clip_sum(y, 0.0) <= budget {
        return y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    }
    let (mut lo, mut hi) = (0.0, y.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if clip_sum(y, mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` always satisfies the budget.
    y.iter().map(|v| (v - hi).clamp(0.0, 1.0)).collect()
}

/// Entrywise clamp to `[-delta, delta]`.
pub fn project_linf(l: &Tensor, delta: f64) -> Tensor {
    l.map(|v| v.clamp(-delta, delta))
}

fn upper(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Upper-triangle entries in row-major order.
fn upper_values(m: &Tensor) -> Vec<f64> {
    upper(m.rows()).map(|(i, j)| m.get(i, j)).collect()
}

fn from_upper(n: usize, vals: &[f64]) -> Tensor {
    let mut m = Tensor::zeros(n, n);
    for ((i, j), &v) in upper(n).zip(vals) {
        m.set(i, j, v);
        m.set(j, i, v);
    }
    m
}

/// Samples a symmetric 0/1 flip matrix with `P(flip ij) = ledge[i][j]`,
/// holding at most `budget` upper-triangle flips.
pub fn bernoulli_round(ledge: &Tensor, budget: f64, rng: &mut Rng) -> Tensor {
    let n = ledge.rows();
    let probs = upper_values(ledge);
    let cap = budget.max(0.0).floor();
    let mut draw = vec![0.0; probs.len()];
    for _ in 0..MAX_REDRAWS {
        let mut count = 0.0;
        for (d, &p) in draw.iter_mut().zip(&probs) {
            *d = if rng.bernoulli(p.clamp(0.0, 1.0)) { 1.0 } else { 0.0 };
            count += *d;
        }
        if count <= cap {
            return from_upper(n, &draw);
        }
    }
    let mut taken: Vec<usize> = (0..draw.len()).filter(|&k| draw[k] == 1.0).collect();
    taken.sort_by(|&x, &y| probs[x].total_cmp(&probs[y]).then(x.cmp(&y)));
    let excess = taken.len() - cap as usize;
    for &k in &taken[..excess] {
        draw[k] = 0.0;
    }
    from_upper(n, &draw)
}

/// Contrast between the generative view and the adversarial view.
pub fn adv_loss(tape: &mut Tape, htilde: Var, hhat: Var, tau: f64) -> Result<Var> {
    info_nce(tape, htilde, hhat, tau)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackConfig {
    /// Maximum number of flipped node pairs.
    pub edge_budget: f64,
    /// L∞ bound on the additive embedding perturbation.
    pub feat_budget: f64,
    pub edge_step: f64,
    pub feat_step: f64,
    pub steps: usize,
}

impl AttackConfig {
    /// Flips up to 5% of the edges, `δ = 0.1`, ten steps.
    pub fn for_edges(num_edges: usize) -> Self {
        Self::with_budgets(0.05 * num_edges as f64, 0.1, 10)
    }

    /// Step sizes derived from the budgets: `ζ = 0.5 Δ / √E`, `η = δ / E`.
    pub fn with_budgets(edge_budget: f64, feat_budget: f64, steps: usize) -> Self {
        let e = steps.max(1) as f64;
        AttackConfig {
            edge_budget,
            feat_budget,
            edge_step: 0.5 * edge_budget / e.sqrt(),
            feat_step: feat_budget / e,
            steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("edge budget", self.edge_budget),
            ("feature budget", self.feat_budget),
            ("edge step", self.edge_step),
            ("feature step", self.feat_step),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Everything the attack holds fixed.
#[derive(Clone, Copy, Debug)]
pub struct AttackTarget<'a> {
    pub adjacency: &'a Tensor,
    pub h0: &'a Tensor,
    pub weights: &'a [Tensor],
    /// Generative-view embeddings the adversarial view is contrasted with.
    pub reference: &'a Tensor,
    pub tau: f64,
}

impl AttackTarget<'_> {
    /// Adversarial loss as a function of the relaxed flips and the feature
    /// perturbation.
    pub fn objective(&self, tape: &mut Tape, ledge: Var, lfeat: Var) -> Result<Var> {
        let n = self.adjacency.rows();
        let a = tape.constant(self.adjacency.clone());
        let toggle = tape.constant(Tensor::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                1.0 - 2.0 * self.adjacency.get(i, j)
            }
        }));
        let delta = tape.mul(toggle, ledge)?;
        let relaxed = tape.add(a, delta)?;
        let anorm = normalize_on_tape(tape, relaxed)?;
        let hhat = self.encode(tape, anorm, lfeat)?;
        let reference = tape.constant(self.reference.clone());
        adv_loss(tape, reference, hhat, self.tau)
    }

    fn encode(&self, tape: &mut Tape, anorm: Var, lfeat: Var) -> Result<Var> {
        let h0 = tape.constant(self.h0.clone());
        let ws: Vec<Var> = self.weights.iter().map(|w| tape.constant(w.clone())).collect();
        let h = propagate(tape, anorm, h0, &ws)?;
        tape.add(h, lfeat)
    }

    /// Embeddings and loss for a discrete perturbed adjacency.
    pub fn evaluate(&self, ahat: &Tensor, lfeat: &Tensor) -> Result<(Tensor, f64)> {
        let mut tape = Tape::new();
        let anorm = tape.constant(normalize(ahat).into_matrix());
        let lf = tape.constant(lfeat.clone());
        let hhat = self.encode(&mut tape, anorm, lf)?;
        let reference = tape.constant(self.reference.clone());
        let loss = adv_loss(&mut tape, reference, hhat, self.tau)?;
        Ok((tape.value(hhat).clone(), tape.value(loss).item()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackStep {
    pub step: usize,
    pub adv_loss: f64,
    /// Upper-triangle sum of the relaxed flips after the step.
    pub flip_mass: f64,
    /// Max-abs of the feature perturbation after the step.
    pub feat_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialView {
    pub ahat: Tensor,
    pub hhat: Tensor,
    pub lfeat: Tensor,
    pub loss: f64,
    pub trace: Vec<AttackStep>,
}

impl AdversarialView {
    pub fn flips(&self, a: &Tensor) -> usize {
        upper(a.rows()).filter(|&(i, j)| a.get(i, j) != self.ahat.get(i, j)).count()
    }
}

/// Projected gradient ascent on the adversarial loss, then Bernoulli
/// rounding of the relaxed flips. Among [`ROUNDING_TRIALS`] roundings the
/// one with the largest loss is returned.
pub fn pgd_attack(target: &AttackTarget<'_>, cfg: &AttackConfig, rng: &mut Rng) -> Result<AdversarialView> {
    cfg.validate()?;
    let (n, d) = target.h0.shape();
    if target.adjacency.shape() != (n, n) || target.reference.shape() != (n, d) {
        return Err(Error::shape(
            "pgd_attack",
            format!("adjacency {:?}, h0 {:?}, reference {:?}", target.adjacency.shape(), (n, d), target.reference.shape()),
        ));
    }
    let mut ledge = Tensor::zeros(n, n);
    let mut lfeat = Tensor::zeros(n, d);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut tape = Tape::new();
        let lv = tape.leaf(ledge.clone());
        let fv = tape.leaf(lfeat.clone());
        let loss = target.objective(&mut tape, lv, fv)?;
        let grads = tape.backward(loss)?;
        let (gl, gf) = (grads.wrt(lv), grads.wrt(fv));

        let stepped: Vec<f64> = upper(n)
            .map(|(i, j)| ledge.get(i, j) + cfg.edge_step * (gl.get(i, j) + gl.get(j, i)))
            .collect();
        ledge = from_upper(n, &project_budget_box(&stepped, cfg.edge_budget));
        let ascended = lfeat.zip_map(&gf, |x, g| x + cfg.feat_step * sign(g));
        lfeat = project_linf(&ascended, cfg.feat_budget);
        trace.push(AttackStep {
            step,
            adv_loss: tape.value(loss).item(),
            flip_mass: upper_values(&ledge).iter().sum(),
            feat_norm: lfeat.max_abs(),
        });
    }

    let mut best: Option<AdversarialView> = None;
    let trials = if cfg.steps == 0 { 1 } else { ROUNDING_TRIALS };
    for _ in 0..trials {
        let flips = bernoulli_round(&ledge, cfg.edge_budget, rng);
        let ahat = flip_apply(target.adjacency, &flips)?;
        let (hhat, loss) = target.evaluate(&ahat, &lfeat)?;
        if best.as_ref().is_none_or(|b| loss > b.loss) {
            best = Some(AdversarialView { ahat, hhat, lfeat: lfeat.clone(), loss, trace: Vec::new() });
        }
    }
    let mut view = best.expect("at least one rounding trial");
    view.trace = trace;
    Ok(view)
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Writes `attack_trace.csv`.
pub fn write_attack_trace(trace: &[AttackStep], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut out = String::from("step,adv_loss,flip_mass,feat_norm\n");
    for s in trace {
        out.push_str(&format!("{},{:e},{:e},{:e}\n", s.step, s.adv_loss, s.flip_mass, s.feat_norm));
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
