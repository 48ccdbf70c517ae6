//! Pretraining, the teacher refresh / fade schedule and the optimization loop.
//!
//! Epochs are counted globally: pretraining occupies `1..=pretrain_epochs`
//! and distillation continues from there. Every random stream is keyed by the
//! global epoch. The refresh schedule uses the local distillation epoch `m`.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffgrad::{adam_step, checkpoint, Activation, AdamConfig, AdamState, Tensor2};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{copy_to_teacher, fade_student, Encoder, Params, ViewGrads};
use crate::objective::{
    freeze_targets, loss_with_targets, LossBreakdown, LossInputs, Score, Terms,
};
use crate::rng::{tag, SeedStream};
use crate::sampling::{sample_pseudo_local, sample_triples};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub tau: usize,
    pub fade: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub negatives: usize,
    pub local_size: usize,
    pub seed: u64,
    pub activation: Activation,
    pub score: Score,
    pub row_normalize: bool,
    pub inner_steps: usize,
    pub terms: Terms,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 512,
            lr: 1e-3,
            epochs: 500,
            pretrain_epochs: 200,
            tau: 30,
            fade: 0.99,
            alpha: 0.5,
            lambda: 0.5,
            negatives: 5,
            local_size: 10,
            seed: 0,
            activation: Activation::Relu,
            score: Score::Dot,
            row_normalize: true,
            inner_steps: 1,
            terms: Terms::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.tau == 0 {
            return bad("tau must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.fade) {
            return bad(format!("fade weight {} outside [0, 1]", self.fade));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and ≥ 0", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        for (name, v) in [
            ("dim", self.dim),
            ("negatives", self.negatives),
            ("local_size", self.local_size),
            ("inner_steps", self.inner_steps),
        ] {
            if v == 0 {
                return bad(format!("{name} must be ≥ 1"));
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub phase: Phase,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub wall_ms: f64,
    pub teacher_refreshed: bool,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub student: Params,
    pub adam: AdamState,
    pub teacher: Option<Params>,
    /// Global epochs completed.
    pub epoch: u64,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn init(num_features: usize, cfg: &TrainConfig) -> Self {
        let mut rng = SeedStream::new(cfg.seed).rng(tag::INIT, 0);
        let student = Params::glorot(num_features, cfg.dim, &mut rng);
        Self {
            adam: AdamState::new(num_features, cfg.dim, cfg.adam()),
            student,
            teacher: None,
            epoch: 0,
            history: Vec::new(),
        }
    }
}

/// Wall time is not stored, so two identical runs give identical files.
const HISTORY_COLS: usize = 7;

/// Writes the state as a SAILCKPT file.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let scalar = |v: f64| Tensor2::filled(1, 1, v);
    let adam_t = scalar(state.adam.t as f64);
    let epoch = scalar(state.epoch as f64);
    let mut hist = Tensor2::zeros(state.history.len(), HISTORY_COLS);
    for (r, rec) in state.history.iter().enumerate() {
        let row = [
            rec.epoch as f64,
            if rec.phase == Phase::Train { 1.0 } else { 0.0 },
            rec.loss.edge_mi,
            rec.loss.r_intra,
            rec.loss.r_inter,
            rec.loss.lambda,
            if rec.teacher_refreshed { 1.0 } else { 0.0 },
        ];
        hist.row_mut(r).copy_from_slice(&row);
    }
    let mut tensors: Vec<(&str, &Tensor2)> = vec![
        ("student.W", &state.student.w),
        ("student.adam.m", &state.adam.m),
        ("student.adam.v", &state.adam.v),
        ("state.adam_t", &adam_t),
        ("state.epoch", &epoch),
        ("state.history", &hist),
    ];
    if let Some(t) = &state.teacher {
        tensors.push(("teacher.W", &t.w));
    }
    checkpoint::write_file(path, &tensors)
}

/// Reads a state written by [`save_checkpoint`]; the optimizer uses `cfg`'s
/// hyperparameters.
pub fn load_checkpoint(path: &Path, cfg: &TrainConfig) -> Result<TrainState> {
    let mut tensors: std::collections::BTreeMap<String, Tensor2> =
        checkpoint::read_file(path)?.into_iter().collect();
    let mut take = |name: &str| {
        tensors
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("{}: missing tensor {name}", path.display())))
    };
    let w = take("student.W")?;
    let m = take("student.adam.m")?;
    let v = take("student.adam.v")?;
    let adam_t = take("state.adam_t")?.get(0, 0) as u64;
    let epoch = take("state.epoch")?.get(0, 0) as u64;
    let hist = take("state.history")?;
    let teacher = take("teacher.W").ok().map(|w| Params { w });
    if m.shape() != w.shape() || v.shape() != w.shape() {
        return Err(Error::Checkpoint("optimizer moments do not match W".into()));
    }
    if hist.rows() > 0 && hist.cols() != HISTORY_COLS {
        return Err(Error::Checkpoint("history has an unexpected width".into()));
    }
    let history = (0..hist.rows())
        .map(|r| {
            let h = hist.row(r);
            let lambda = h[5];
            EpochRecord {
                epoch: h[0] as u64,
                phase: if h[1] == 1.0 {
                    Phase::Train
                } else {
                    Phase::Pretrain
                },
                loss: LossBreakdown {
                    edge_mi: h[2],
                    r_intra: h[3],
                    r_inter: h[4],
                    total: h[2] + lambda * (h[3] + h[4]),
                    lambda,
                },
                wall_ms: 0.0,
                teacher_refreshed: h[6] == 1.0,
            }
        })
        .collect();
    Ok(TrainState {
        student: Params { w },
        adam: AdamState {
            config: cfg.adam(),
            m,
            v,
            t: adam_t,
        },
        teacher,
        epoch,
        history,
    })
}

/// Owns the (optionally row-normalized) graph, its encoder and the state.
pub struct Trainer {
    graph: Graph,
    encoder: Encoder,
    cfg: TrainConfig,
    state: TrainState,
    teacher_h: Option<Tensor2>,
}

impl Trainer {
    pub fn new(g: &Graph, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let state = TrainState::init(g.num_features(), &cfg);
        Self::with_state(g, cfg, state)
    }

    pub fn with_state(g: &Graph, cfg: TrainConfig, state: TrainState) -> Result<Self> {
        cfg.validate()?;
        if cfg.local_size >= g.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "local_size {} needs at least {} nodes, graph has {}",
                cfg.local_size,
                cfg.local_size + 1,
                g.num_nodes()
            )));
        }
        if g.num_edges() == 0 {
            return Err(Error::InvalidGraph(
                "training needs at least one edge".into(),
            ));
        }
        if state.student.in_dim() != g.num_features() || state.student.out_dim() != cfg.dim {
            return Err(Error::shape(
                "trainer",
                format!(
                    "state W is {}×{}, expected {}×{}",
                    state.student.in_dim(),
                    state.student.out_dim(),
                    g.num_features(),
                    cfg.dim
                ),
            ));
        }
        let graph = if cfg.row_normalize {
            g.row_normalized()
        } else {
            g.clone()
        };
        let encoder = Encoder::new(&graph, cfg.activation);
        let teacher_h = match &state.teacher {
            Some(t) => Some(encoder.forward(t)?.h),
            None => None,
        };
        Ok(Self {
            graph,
            encoder,
            cfg,
            state,
            teacher_h,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// The graph the encoder runs on (row-normalized when configured).
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn total_epochs(&self) -> u64 {
        (self.cfg.pretrain_epochs + self.cfg.epochs) as u64
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.total_epochs()
    }

    /// Student representations `H` under the current parameters.
    pub fn embed(&self) -> Result<Tensor2> {
        Ok(self.encoder.forward(&self.state.student)?.h)
    }

    /// Runs the next global epoch.
    pub fn step_epoch(&mut self) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::InvalidArgument("training already finished".into()));
        }
        let start = Instant::now();
        let epoch = self.state.epoch + 1;
        let pretrain = epoch <= self.cfg.pretrain_epochs as u64;
        let mut refreshed = false;
        if !pretrain {
            let m = epoch - self.cfg.pretrain_epochs as u64;
            if self.state.teacher.is_none() {
                self.set_teacher();
            }
            if m.is_multiple_of(self.cfg.tau as u64) {
                self.set_teacher();
                let mut rng = SeedStream::new(self.cfg.seed).rng(tag::FADE, epoch);
                self.state.student = fade_student(&self.state.student, self.cfg.fade, &mut rng)?;
                if self.cfg.fade < 1.0 {
                    self.state.adam.reset();
                }
                refreshed = true;
            }
        }
        let loss = self.optimize(epoch, pretrain)?;
        let rec = EpochRecord {
            epoch,
            phase: if pretrain {
                Phase::Pretrain
            } else {
                Phase::Train
            },
            loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            teacher_refreshed: refreshed,
        };
        self.state.epoch = epoch;
        self.state.history.push(rec.clone());
        Ok(rec)
    }

    fn set_teacher(&mut self) {
        let t = copy_to_teacher(&self.state.student);
        // Forward on parameters that just produced a finite loss cannot fail.
        self.teacher_h = self.encoder.forward(&t).ok().map(|v| v.h);
        self.state.teacher = Some(t);
    }

    fn optimize(&mut self, epoch: u64, pretrain: bool) -> Result<LossBreakdown> {
        let streams = SeedStream::new(self.cfg.seed);
        let triples = sample_triples(
            &self.graph,
            self.cfg.negatives,
            &mut streams.rng(tag::TRIPLES, epoch),
        )?;
        if triples.triples.is_empty() {
            return Err(Error::Sampling(
                "no contrastive triples: every anchor is saturated".into(),
            ));
        }
        let sets = sample_pseudo_local(
            self.graph.num_nodes(),
            self.cfg.local_size,
            &mut streams.rng(tag::PSEUDO_LOCAL, epoch),
        )?;
        let inputs = LossInputs {
            graph: &self.graph,
            triples: &triples.triples,
            sets: &sets,
            teacher_h: if pretrain {
                None
            } else {
                self.teacher_h.as_ref()
            },
            alpha: self.cfg.alpha,
            lambda: self.cfg.lambda,
            terms: self.cfg.terms,
            score: self.cfg.score,
        };
        let diverged = |detail: String| Error::Diverged { epoch, detail };
        let mut first = None;
        for _ in 0..self.cfg.inner_steps {
            let views = self
                .encoder
                .forward(&self.state.student)
                .map_err(|e| diverged(e.to_string()))?;
            let targets = freeze_targets(&views, &inputs)?;
            let mut grads = ViewGrads::like(&views);
            let loss = loss_with_targets(&views, &inputs, &targets, Some(&mut grads))?;
            if !loss.is_finite() {
                return Err(diverged(format!("non-finite loss {loss:?}")));
            }
            let gw = self.encoder.backward(&views, &grads)?;
            adam_step(&mut self.state.student.w, &gw, &mut self.state.adam)
                .map_err(|e| diverged(e.to_string()))?;
            first.get_or_insert(loss);
        }
        Ok(first.expect("inner_steps ≥ 1"))
    }

    /// Runs to completion, calling `on_epoch` after every epoch.
    pub fn run_with<F>(&mut self, mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&Trainer, &EpochRecord) -> Result<()>,
    {
        while !self.is_finished() {
            let rec = self.step_epoch()?;
            on_epoch(self, &rec)?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_with(|_, _| Ok(()))
    }
}

/// Pretraining only: `pretrain_epochs` epochs on `ℓ_edge + λ R_intra`.
pub fn pretrain(g: &Graph, cfg: &TrainConfig) -> Result<Params> {
    let mut cfg = cfg.clone();
    cfg.epochs = 0;
    let mut t = Trainer::new(g, cfg)?;
    t.run()?;
    Ok(t.into_state().student)
}

/// Pretraining followed by `epochs` epochs of self-distillation.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<Params> {
    let mut t = Trainer::new(g, cfg.clone())?;
    t.run()?;
    Ok(t.into_state().student)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_graph(n: usize, f: usize, seed: u64) -> Graph {
        let mut rng = SeedStream::new(seed).rng("test-graph", 0);
        let mut edges = Vec::new();
        for u in 0..n {
            edges.push((u, (u + 1) % n));
            edges.push((u, rng.random_range(0..n)));
        }
        let feats = (0..n * f)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        Graph::from_edges(n, edges, f, feats).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            dim: 8,
            lr: 1e-2,
            epochs: 20,
            pretrain_epochs: 10,
            tau: 5,
            local_size: 4,
            negatives: 2,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for f in [
            |c: &mut TrainConfig| c.tau = 0,
            |c: &mut TrainConfig| c.fade = 1.5,
            |c: &mut TrainConfig| c.alpha = -0.1,
            |c: &mut TrainConfig| c.lambda = -1.0,
            |c: &mut TrainConfig| c.dim = 0,
            |c: &mut TrainConfig| c.negatives = 0,
        ] {
            let mut c = TrainConfig::default();
            f(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn zero_pretrain_epochs_returns_init() {
        let g = toy_graph(12, 5, 1);
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            ..small_cfg()
        };
        let p = pretrain(&g, &cfg).unwrap();
        let init = TrainState::init(5, &cfg).student;
        assert_eq!(p, init);
    }

    #[test]
    fn one_non_edge_pretraining_separates_pair() {
        // Path 0-1-2: the only non-edge is (0, 2).
        let g = Graph::from_edges(
            3,
            [(0, 1), (1, 2)],
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let cfg = TrainConfig {
            dim: 4,
            lr: 1e-2,
            pretrain_epochs: 50,
            epochs: 0,
            local_size: 1,
            negatives: 1,
            lambda: 0.0,
            row_normalize: false,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(&g, cfg).unwrap();
        t.run().unwrap();
        let h = &t.state().history;
        assert!(h.last().unwrap().loss.edge_mi < std::f64::consts::LN_2);
        assert!(h.last().unwrap().loss.edge_mi < h[0].loss.edge_mi);
    }

    #[test]
    fn training_is_deterministic() {
        let g = toy_graph(15, 6, 2);
        let a = train(&g, &small_cfg()).unwrap();
        let b = train(&g, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = train(
            &g,
            &TrainConfig {
                seed: 8,
                ..small_cfg()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn refresh_schedule_and_teacher_constancy() {
        let g = toy_graph(15, 6, 3);
        let mut t = Trainer::new(&g, small_cfg()).unwrap();
        let mut teachers = Vec::new();
        t.run_with(|tr, rec| {
            teachers.push((rec.epoch, rec.teacher_refreshed, tr.state().teacher.clone()));
            Ok(())
        })
        .unwrap();
        for (epoch, refreshed, teacher) in &teachers {
            let m = epoch.saturating_sub(10);
            assert_eq!(*refreshed, m > 0 && m % 5 == 0, "epoch {epoch}");
            assert_eq!(teacher.is_some(), *epoch > 10);
        }
        for w in teachers.windows(2) {
            if !w[1].1 && w[0].2.is_some() {
                assert_eq!(
                    w[0].2, w[1].2,
                    "teacher moved without refresh at {}",
                    w[1].0
                );
            }
        }
        assert!(t.state().history.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn tau_beyond_epochs_never_refreshes() {
        let g = toy_graph(15, 6, 4);
        let cfg = TrainConfig {
            tau: 1000,
            ..small_cfg()
        };
        let mut t = Trainer::new(&g, cfg).unwrap();
        t.run().unwrap();
        assert!(t.state().history.iter().all(|r| !r.teacher_refreshed));
        // The teacher is the student as it left pretraining.
        let pre = pretrain(
            &g,
            &TrainConfig {
                tau: 1000,
                ..small_cfg()
            },
        )
        .unwrap();
        assert_eq!(t.state().teacher.as_ref().unwrap(), &pre);
    }

    #[test]
    fn lambda_zero_unit_fade_matches_extended_pretraining() {
        let g = toy_graph(15, 6, 5);
        let cfg = TrainConfig {
            lambda: 0.0,
            fade: 1.0,
            ..small_cfg()
        };
        let trained = train(&g, &cfg).unwrap();
        let extended = pretrain(
            &g,
            &TrainConfig {
                pretrain_epochs: cfg.pretrain_epochs + cfg.epochs,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(trained, extended);
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.sail");
        let g = toy_graph(15, 6, 6);
        let cfg = small_cfg();
        let mut full = Trainer::new(&g, cfg.clone()).unwrap();
        full.run().unwrap();

        let mut part = Trainer::new(&g, cfg.clone()).unwrap();
        for _ in 0..17 {
            part.step_epoch().unwrap();
        }
        save_checkpoint(part.state(), &path).unwrap();
        let loaded = load_checkpoint(&path, &cfg).unwrap();
        assert_eq!(loaded.student, part.state().student);
        assert_eq!(loaded.teacher, part.state().teacher);
        assert_eq!(loaded.epoch, 17);
        let strip = |h: &[EpochRecord]| {
            h.iter()
                .map(|r| (r.epoch, r.phase, r.loss, r.teacher_refreshed))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&loaded.history), strip(&part.state().history));
        let before = part.embed().unwrap();
        let mut resumed = Trainer::with_state(&g, cfg, loaded).unwrap();
        assert_eq!(resumed.embed().unwrap(), before);
        resumed.run().unwrap();
        assert_eq!(resumed.state().student, full.state().student);
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.sail");
        let g = toy_graph(12, 4, 7);
        let t = Trainer::new(&g, small_cfg()).unwrap();
        save_checkpoint(t.state(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &small_cfg()),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let g = toy_graph(12, 4, 8);
        let cfg = small_cfg();
        let mut state = TrainState::init(4, &cfg);
        state.student.w.set(0, 0, f64::NAN);
        let mut t = Trainer::with_state(&g, cfg, state).unwrap();
        assert!(matches!(
            t.step_epoch(),
            Err(Error::Diverged { epoch: 1, .. })
        ));
    }
}
