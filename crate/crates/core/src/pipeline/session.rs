use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use super::config::{Backend, PipelineConfig};
use super::matching::{descriptor_matches, oracle_matches, OracleRequest};
use super::{
    part_feature_points, region_of_interest, whole_body_fit, Checkpoint, CheckpointStage, Command, Event,
    EventKind, FitDiagnostics, PartOutcome, PipelineResult, SessionState, SessionStatus, Stage,
};
use crate::error::{Error, Result};
use crate::features::{subsample, CorrespondenceSet};
use crate::geom::{Point3, PointCloud, RigidTransform, Vec3};
use crate::nn::NnIndex;
use crate::partgraph::{junction_break_check, junction_points, sort_parts_by_volume, JointCheck, JunctionSet, PartGraph};
use crate::rigidfit::{icp_fit, DEFAULT_ANCHOR_WEIGHT, ransac_fit, AnchorPair, FitResult, IcpConfig, IcpResult, RansacConfig};
use crate::scansim::GroundTruth;
use crate::seed;

const TAG_SOURCE_SUBSAMPLE: u64 = 1;
const TAG_TARGET_SUBSAMPLE: u64 = 2;
const TAG_MATCHING: u64 = 3;
const TAG_RANSAC: u64 = 10;
const TAG_ICP: u64 = 11;

/// Perturbation applied to the ICP start pose on retries.
const ICP_RETRY_ROTATION_DEG: f64 = 2.0;
const ICP_RETRY_SHIFT_FRACTION: f64 = 0.1;

struct Candidate {
    fit: FitResult,
    history: Vec<f64>,
}

impl Candidate {
    fn objective(&self) -> f64 {
        self.history.last().copied().unwrap_or(self.fit.rmse)
    }
}

struct PartWork {
    part: u32,
    name: String,
    points: Vec<usize>,
    feature_points: usize,
    matches: CorrespondenceSet,
    roi_targets: Vec<usize>,
    roi_index: NnIndex,
    junctions: Vec<JunctionSet>,
    anchors: Vec<AnchorPair>,
    ransac_attempts: usize,
    icp_attempts: usize,
    ransac: Option<FitDiagnostics>,
    ransac_skipped: bool,
    icp_runs: Vec<Vec<f64>>,
    /// Best candidate so far at the current checkpoint (auto mode keeps it).
    best: Option<Candidate>,
    /// Candidate shown at the current checkpoint.
    shown: Option<Candidate>,
    stage: CheckpointStage,
    errors: Vec<String>,
}

struct Run {
    correspondences: CorrespondenceSet,
    source_kept: Vec<usize>,
    whole_body: RigidTransform,
    whole_body_error: Option<String>,
    base: PointCloud,
    current: PointCloud,
    graph: PartGraph,
    order: Vec<u32>,
    step: usize,
    deltas: BTreeMap<u32, RigidTransform>,
    outcomes: Vec<PartOutcome>,
    work: Option<PartWork>,
}

/// One registration run. In auto mode `start` runs to completion; in
/// interactive mode it stops at every checkpoint until a command arrives.
pub struct Session {
    id: String,
    cfg: PipelineConfig,
    source: PointCloud,
    graph: PartGraph,
    target: PointCloud,
    truth: Option<GroundTruth>,
    status: SessionStatus,
    run: Option<Run>,
    log: Vec<Event>,
    timings: BTreeMap<String, f64>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        source: PointCloud,
        graph: PartGraph,
        target: PointCloud,
        truth: Option<GroundTruth>,
        cfg: PipelineConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if source.is_empty() || target.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if source.part_ids.is_none() {
            return Err(Error::MissingPartLabels);
        }
        graph.validate(source.len())?;
        if cfg.backend == Backend::Oracle && truth.is_none() {
            return Err(Error::InvalidArgument("the oracle back-end needs ground truth".into()));
        }
        Ok(Session {
            id: id.into(),
            cfg,
            source,
            graph,
            target,
            truth,
            status: SessionStatus::Idle,
            run: None,
            log: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn source(&self) -> &PointCloud {
        &self.source
    }

    pub fn target(&self) -> &PointCloud {
        &self.target
    }

    pub fn graph(&self) -> &PartGraph {
        &self.graph
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    /// Source as currently placed, with any pending candidate previewed on
    /// its part. Before the run starts this is the untouched source.
    pub fn current_cloud(&self) -> PointCloud {
        let Some(run) = &self.run else {
            return self.source.clone();
        };
        let mut cloud = run.current.clone();
        if let Some(work) = &run.work {
            if let Some(shown) = &work.shown {
                for &i in &work.points {
                    cloud.points[i] = shown.fit.transform.apply(&run.current.points[i]);
                }
            }
        }
        cloud
    }

    pub fn state(&self) -> SessionState {
        let run = self.run.as_ref();
        SessionState {
            scenario_id: self.id.clone(),
            status: self.status,
            interactive: self.cfg.interactive,
            step: run.map_or(0, |r| r.step),
            order: run.map(|r| r.order.clone()).unwrap_or_default(),
            current_part: run.and_then(|r| r.work.as_ref().map(|w| w.part)),
            whole_body: run.map(|r| r.whole_body),
            outcomes: run.map(|r| r.outcomes.clone()).unwrap_or_default(),
            pending: self.pending(),
            log: self.log.clone(),
        }
    }

    pub fn pending(&self) -> Option<Checkpoint> {
        let work = self.run.as_ref()?.work.as_ref()?;
        let shown = work.shown.as_ref()?;
        Some(Checkpoint {
            part: work.part,
            part_name: work.name.clone(),
            stage: work.stage,
            attempt: match work.stage {
                CheckpointStage::Ransac => work.ransac_attempts,
                CheckpointStage::Icp => work.icp_attempts,
            },
            candidate: FitDiagnostics::from_fit(&shown.fit, shown.history.clone()),
        })
    }

    fn emit(&mut self, kind: EventKind, part: Option<u32>, message: impl Into<String>) {
        let seq = self.log.len();
        self.log.push(Event {
            seq,
            kind,
            part,
            message: message.into(),
        });
    }

    fn run_mut(&mut self) -> &mut Run {
        self.run.as_mut().expect("session started")
    }

    fn work_mut(&mut self) -> &mut PartWork {
        self.run_mut().work.as_mut().expect("part in progress")
    }

    /// Subsamples, matches, fits the whole body and sweeps the parts until
    /// the first checkpoint (interactive) or the end (auto).
    pub fn start(&mut self) -> Result<()> {
        if self.status != SessionStatus::Idle {
            return Err(Error::InvalidCommand("session already started".into()));
        }
        self.emit(EventKind::Started, None, format!("scenario {}", self.id));
        let t0 = Instant::now();
        let (_, source_kept) = subsample(&self.source, self.cfg.f_retention, seed::derive(self.cfg.seed, &[TAG_SOURCE_SUBSAMPLE]))?;
        let (_, target_kept) = subsample(&self.target, self.cfg.f_retention, seed::derive(self.cfg.seed, &[TAG_TARGET_SUBSAMPLE]))?;
        let correspondences = self.match_clouds(&source_kept, &target_kept)?;
        self.timings.insert("matching".into(), t0.elapsed().as_secs_f64());

        let t1 = Instant::now();
        let (whole_body, whole_body_error) = match whole_body_fit(&self.source, &self.target, &correspondences, &self.cfg) {
            Ok(w) => (w.transform, None),
            Err(e) => (RigidTransform::identity(), Some(e.to_string())),
        };
        match &whole_body_error {
            None => self.emit(
                EventKind::WholeBody,
                None,
                format!("{} matches, rotation {:.3} deg", correspondences.len(), whole_body.angle().to_degrees()),
            ),
            Some(e) => {
                let msg = format!("whole-body fit failed, keeping identity: {e}");
                self.emit(EventKind::Error, None, msg)
            }
        }
        let base = crate::geom::apply_transform(&self.source, &whole_body);
        let mut graph = self.graph.clone();
        graph.refresh_bounds(&base)?;
        let order = sort_parts_by_volume(&graph);
        self.timings.insert("whole_body".into(), t1.elapsed().as_secs_f64());
        self.run = Some(Run {
            correspondences,
            source_kept,
            whole_body,
            whole_body_error,
            current: base.clone(),
            base,
            graph,
            order,
            step: 0,
            deltas: BTreeMap::new(),
            outcomes: Vec::new(),
            work: None,
        });
        self.drive()
    }

    fn match_clouds(&self, source_kept: &[usize], target_kept: &[usize]) -> Result<CorrespondenceSet> {
        let seed = seed::derive(self.cfg.seed, &[TAG_MATCHING]);
        match self.cfg.backend {
            Backend::Oracle => oracle_matches(&OracleRequest {
                source: &self.source,
                target: &self.target,
                truth: self.truth.as_ref().ok_or(Error::EmptyGroundTruth)?,
                source_kept,
                target_kept,
                settings: self.cfg.oracle,
                theta_c: self.cfg.theta_c,
                wrong_distance: self.cfg.d_max,
                seed,
            }),
            Backend::Descriptor => descriptor_matches(
                &self.source,
                &self.target,
                source_kept,
                target_kept,
                &self.cfg.descriptor,
                self.cfg.theta_c,
                seed,
            ),
        }
    }

    /// Applies a reviewer command at the pending checkpoint.
    pub fn command(&mut self, cmd: Command) -> Result<()> {
        match (self.status, cmd) {
            (SessionStatus::Idle, Command::Start) => return self.start(),
            (_, Command::Start) => return Err(Error::InvalidCommand("session already started".into())),
            (SessionStatus::AwaitingCommand, _) => {}
            _ => return Err(Error::NoPendingCheckpoint),
        }
        self.resolve(cmd)?;
        self.drive()
    }

    /// Resolves pending checkpoints (by policy in auto mode) and advances
    /// through parts until a checkpoint needs a reviewer or the run ends.
    fn drive(&mut self) -> Result<()> {
        let t = Instant::now();
        loop {
            let run = self.run.as_ref().expect("session started");
            match &run.work {
                Some(w) if w.shown.is_some() => {
                    if self.cfg.interactive {
                        self.status = SessionStatus::AwaitingCommand;
                        break;
                    }
                    let cmd = self.auto_decision();
                    self.resolve(cmd)?;
                }
                Some(_) => unreachable!("work without a checkpoint is finalized immediately"),
                None if run.step >= run.order.len() => {
                    self.status = SessionStatus::Completed;
                    self.emit(EventKind::Completed, None, format!("{} parts", run.order.len()));
                    break;
                }
                None => {
                    let part = run.order[run.step];
                    self.begin_part(part)?;
                }
            }
        }
        *self.timings.entry("parts".into()).or_insert(0.0) += t.elapsed().as_secs_f64();
        Ok(())
    }

    fn auto_decision(&mut self) -> Command {
        let policy = self.cfg.auto_policy;
        let work = self.work_mut();
        let (attempts, max) = match work.stage {
            CheckpointStage::Ransac => (work.ransac_attempts, policy.max_ransac_retries),
            CheckpointStage::Icp => (work.icp_attempts, policy.max_icp_retries),
        };
        let best = work.best.as_ref().expect("candidate present");
        if best.fit.fitness >= policy.fitness_threshold || attempts > max {
            // Accept the best candidate seen, not necessarily the last one.
            work.shown = work.best.take();
            Command::Accept
        } else {
            Command::Retry
        }
    }

    fn resolve(&mut self, cmd: Command) -> Result<()> {
        let (part, stage) = {
            let w = self.work_mut();
            (w.part, w.stage)
        };
        match (stage, cmd) {
            (_, Command::Start) => Err(Error::InvalidCommand("start".into())),
            (CheckpointStage::Ransac, Command::Accept) => {
                let w = self.work_mut();
                let c = w.shown.take().expect("pending candidate");
                w.best = None;
                let msg = format!("ransac fitness {:.3}", c.fit.fitness);
                w.ransac = Some(FitDiagnostics::from_fit(&c.fit, Vec::new()));
                let init = c.fit.transform;
                self.emit(EventKind::Accepted, Some(part), msg);
                self.icp_stage(init)
            }
            (CheckpointStage::Ransac, Command::Retry) => {
                self.emit(EventKind::Retried, Some(part), "ransac");
                self.ransac_attempt()
            }
            (CheckpointStage::Ransac, Command::Skip) => {
                let w = self.work_mut();
                w.shown = None;
                w.best = None;
                w.ransac_skipped = true;
                self.emit(EventKind::Skipped, Some(part), "ransac skipped, icp from whole-body pose");
                self.icp_stage(RigidTransform::identity())
            }
            (CheckpointStage::Icp, Command::Accept) => {
                let w = self.work_mut();
                let c = w.shown.take().expect("pending candidate");
                w.best = None;
                let msg = format!("icp fitness {:.3} rmse {:.4}", c.fit.fitness, c.fit.rmse);
                self.emit(EventKind::Accepted, Some(part), msg);
                self.finish_part(Stage::IcpDone, Some(c));
                Ok(())
            }
            (CheckpointStage::Icp, Command::Retry) => {
                self.emit(EventKind::Retried, Some(part), "icp");
                self.icp_attempt()
            }
            (CheckpointStage::Icp, Command::Skip) => {
                let w = self.work_mut();
                w.shown = None;
                w.best = None;
                let fallback = w.ransac.as_ref().map(|r| r.transform);
                self.emit(EventKind::Skipped, Some(part), "icp candidate discarded");
                match fallback {
                    Some(xf) => self.finish_with_transform(Stage::RansacDone, xf),
                    None => self.finish_part(Stage::SkippedByUser, None),
                }
                Ok(())
            }
        }
    }

    fn begin_part(&mut self, part: u32) -> Result<()> {
        let cfg = self.cfg.clone();
        let run = self.run.as_ref().expect("session started");
        let info = run.graph.part(part)?.clone();
        self.emit(EventKind::PartStarted, Some(part), info.name.clone());
        let run = self.run.as_ref().expect("session started");
        let mut work = PartWork {
            part,
            name: info.name.clone(),
            points: info.point_indices.clone(),
            feature_points: 0,
            matches: CorrespondenceSet::default(),
            roi_targets: Vec::new(),
            roi_index: NnIndex::new(&[]),
            junctions: Vec::new(),
            anchors: Vec::new(),
            ransac_attempts: 0,
            icp_attempts: 0,
            ransac: None,
            ransac_skipped: false,
            icp_runs: Vec::new(),
            best: None,
            shown: None,
            stage: CheckpointStage::Ransac,
            errors: Vec::new(),
        };

        if info.point_indices.len() < cfg.min_part_points {
            self.run_mut().work = Some(work);
            self.finish_part_inner(Stage::SkippedSmall, None, None);
            return Ok(());
        }

        let features = part_feature_points(&run.current.points, &run.source_kept, &info.aabb);
        let mut is_feature = vec![false; run.current.len()];
        features.iter().for_each(|&i| is_feature[i] = true);
        work.feature_points = features.len();
        work.matches = run.correspondences.filter(|c| is_feature[c.source]);
        let part_pts: Vec<Point3> = info.point_indices.iter().map(|&i| run.current.points[i]).collect();
        let matched: Vec<usize> = work.matches.iter().map(|c| c.target).collect();
        let roi = region_of_interest(&self.target, &part_pts, &matched, cfg.roi_padding)?;
        let roi_pts: Vec<Point3> = roi.indices.iter().map(|&j| self.target.points[j]).collect();
        work.roi_index = NnIndex::new(&roi_pts);
        work.roi_targets = roi.indices;

        let radius = cfg.junction_radius_fraction * info.aabb.diagonal();
        for n in run.graph.neighbors(part) {
            if let Some(delta) = run.deltas.get(&n) {
                if radius > 0.0 {
                    let js = junction_points(&run.graph, &run.base, part, n, radius, cfg.max_anchors)?.follow_neighbor(delta);
                    if !js.is_empty() {
                        work.anchors.extend(
                            js.anchor_positions
                                .iter()
                                .zip(&js.anchor_targets)
                                .map(|(s, t)| AnchorPair { source: *s, target: *t }),
                        );
                        work.junctions.push(js);
                    }
                }
            }
        }
        let few = work.matches.len() < cfg.n_min;
        self.run_mut().work = Some(work);
        if few {
            let n = self.work_mut().matches.len();
            self.work_mut().ransac_skipped = true;
            self.emit(EventKind::Skipped, Some(part), format!("{n} matches below n_min, ransac skipped"));
            self.icp_stage(RigidTransform::identity())
        } else {
            self.ransac_attempt()
        }
    }

    fn ransac_attempt(&mut self) -> Result<()> {
        let cfg = self.cfg.clone();
        let run = self.run.as_ref().expect("session started");
        let work = run.work.as_ref().expect("part in progress");
        let mut rc = RansacConfig::new(
            cfg.inlier_distance(),
            cfg.n_min,
            seed::derive(cfg.seed, &[TAG_RANSAC, work.part as u64, work.ransac_attempts as u64]),
        );
        rc.max_iterations = cfg.ransac_iterations;
        rc.anchors = work.anchors.clone();
        let result = ransac_fit(&run.current.points, &self.target.points, &work.matches, &rc);
        let part = work.part;
        let w = self.work_mut();
        w.stage = CheckpointStage::Ransac;
        w.ransac_attempts += 1;
        match result {
            Ok(fit) => {
                let msg = format!("ransac attempt {} fitness {:.3}", w.ransac_attempts, fit.fitness);
                let cand = Candidate { fit, history: Vec::new() };
                offer(w, cand, |a, b| a.fit.fitness > b.fit.fitness);
                self.emit(EventKind::Checkpoint, Some(part), msg);
                Ok(())
            }
            Err(e) => {
                let msg = format!("ransac failed: {e}");
                w.errors.push(msg.clone());
                self.emit(EventKind::Error, Some(part), msg);
                let w = self.work_mut();
                if w.shown.is_some() {
                    // A retry failed; the earlier candidate stays on offer.
                    return Ok(());
                }
                w.ransac_skipped = true;
                self.icp_stage(RigidTransform::identity())
            }
        }
    }

    fn icp_stage(&mut self, init: RigidTransform) -> Result<()> {
        let w = self.work_mut();
        w.stage = CheckpointStage::Icp;
        w.icp_attempts = 0;
        w.best = None;
        w.shown = None;
        if w.ransac_skipped {
            w.ransac = None;
        }
        debug_assert!(w.ransac.as_ref().is_none_or(|r| r.transform == init));
        self.icp_attempt()
    }

    fn icp_init(&self) -> RigidTransform {
        let run = self.run.as_ref().expect("session started");
        let work = run.work.as_ref().expect("part in progress");
        let base = work.ransac.as_ref().map_or_else(RigidTransform::identity, |r| r.transform);
        if work.icp_attempts == 0 {
            return base;
        }
        let mut rng = seed::rng(seed::derive(self.cfg.seed, &[TAG_ICP, work.part as u64, work.icp_attempts as u64]));
        let mut unit = || loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                break v / n;
            }
        };
        let axis = unit();
        let shift = unit() * (ICP_RETRY_SHIFT_FRACTION * self.cfg.d_max);
        let pts: Vec<Point3> = work.points.iter().map(|&i| base.apply(&run.current.points[i])).collect();
        let centroid = PointCloud::new(pts).centroid().unwrap_or_else(Point3::origin);
        RigidTransform::from_translation(shift)
            .compose(&RigidTransform::about_line(&centroid, &axis, ICP_RETRY_ROTATION_DEG.to_radians()))
            .compose(&base)
    }

    fn icp_attempt(&mut self) -> Result<()> {
        let init = self.icp_init();
        let cfg = &self.cfg;
        let run = self.run.as_ref().expect("session started");
        let work = run.work.as_ref().expect("part in progress");
        let part = work.part;
        let src: Vec<Point3> = work.points.iter().map(|&i| run.current.points[i]).collect();
        let icp = IcpConfig {
            max_correspondence_distance: cfg.icp_distance(),
            max_iterations: cfg.icp_iterations,
            epsilon: cfg.icp_epsilon,
            initial: init,
            anchors: work.anchors.clone(),
            anchor_weight: DEFAULT_ANCHOR_WEIGHT,
        };
        let result = icp_fit(&src, &work.roi_index, &icp);
        let w = self.work_mut();
        w.icp_attempts += 1;
        match result {
            Ok(IcpResult { fit, history, .. }) => {
                w.icp_runs.push(history.clone());
                let msg = format!("icp attempt {} fitness {:.3} rmse {:.4}", w.icp_attempts, fit.fitness, fit.rmse);
                let cand = Candidate { fit, history };
                offer(w, cand, |a, b| a.objective() < b.objective());
                self.emit(EventKind::Checkpoint, Some(part), msg);
            }
            Err(e) => {
                let msg = format!("icp failed: {e}");
                w.errors.push(msg.clone());
                let has_shown = w.shown.is_some();
                let ransac = w.ransac.as_ref().map(|r| r.transform);
                self.emit(EventKind::Error, Some(part), msg);
                if !has_shown {
                    match ransac {
                        Some(xf) => self.finish_with_transform(Stage::RansacDone, xf),
                        None => self.finish_part(Stage::SkippedFewCorrespondences, None),
                    }
                }
            }
        }
        Ok(())
    }

    fn finish_with_transform(&mut self, stage: Stage, xf: RigidTransform) {
        let fit = FitResult {
            transform: xf,
            inlier_count: 0,
            fitness: 0.0,
            rmse: 0.0,
            inliers: Vec::new(),
        };
        self.finish_part(stage, Some(Candidate { fit, history: Vec::new() }));
    }

    fn finish_part(&mut self, stage: Stage, candidate: Option<Candidate>) {
        let icp = (stage == Stage::IcpDone)
            .then(|| candidate.as_ref().map(|c| FitDiagnostics::from_fit(&c.fit, c.history.clone())))
            .flatten();
        self.finish_part_inner(stage, candidate.map(|c| c.fit.transform), icp);
    }

    fn finish_part_inner(
        &mut self,
        mut stage: Stage,
        transform: Option<RigidTransform>,
        icp: Option<FitDiagnostics>,
    ) {
        let tol = self.cfg.joint_tolerance;
        let run = self.run.as_mut().expect("session started");
        let work = run.work.take().expect("part in progress");
        // Parts left without a fit of their own follow the processed
        // neighbour closest in size, so they stay attached.
        let donor = run
            .order
            .iter()
            .take(run.step)
            .rev()
            .copied()
            .find(|&n| run.graph.are_adjacent(work.part, n) && run.deltas.contains_key(&n));
        let inherited = donor.map(|n| run.deltas[&n]).unwrap_or_default();
        let mut inherited_from = None;
        let mut joint = None;
        let mut delta = transform.unwrap_or(inherited);
        if transform.is_none() {
            inherited_from = donor;
        } else {
            let checks: Vec<JointCheck> = work
                .junctions
                .iter()
                .filter_map(|js| junction_break_check(js, &delta, tol).ok())
                .collect();
            let check = JointCheck {
                passed: checks.iter().all(|c| c.passed),
                max_displacement: checks.iter().map(|c| c.max_displacement).fold(0.0, f64::max),
            };
            if !check.passed {
                stage = Stage::JointSkip;
                delta = inherited;
                inherited_from = donor;
            }
            joint = Some(check);
        }
        for &i in &work.points {
            run.current.points[i] = delta.apply(&run.base.points[i]);
        }
        let _ = run.graph.refresh_part_bounds(work.part, &run.current);
        run.deltas.insert(work.part, delta);
        let retries = work.ransac_attempts.saturating_sub(1) + work.icp_attempts.saturating_sub(1);
        let outcome = PartOutcome {
            part: work.part,
            name: work.name.clone(),
            stage,
            transform: delta,
            point_count: work.points.len(),
            feature_points: work.feature_points,
            correspondences: work.matches.len(),
            roi_points: work.roi_targets.len(),
            anchors: work.anchors.len(),
            ransac: if work.ransac_skipped { None } else { work.ransac.clone() },
            icp,
            icp_runs: work.icp_runs.clone(),
            ransac_skipped: work.ransac_skipped,
            retries,
            joint,
            inherited_from,
            errors: work.errors.clone(),
        };
        run.outcomes.push(outcome);
        run.step += 1;
        let msg = format!(
            "{:?} rotation {:.3} deg{}",
            stage,
            delta.angle().to_degrees(),
            joint.map_or(String::new(), |j| format!(", joint displacement {:.3}", j.max_displacement))
        );
        self.emit(EventKind::PartFinished, Some(work.part), msg);
    }

    /// Final result; only available once the session has completed.
    pub fn result(&self) -> Result<PipelineResult> {
        if self.status != SessionStatus::Completed {
            return Err(Error::InvalidCommand("session has not completed".into()));
        }
        let run = self.run.as_ref().expect("completed session has a run");
        let part_transforms: BTreeMap<u32, RigidTransform> = run
            .deltas
            .iter()
            .map(|(&p, d)| (p, d.compose(&run.whole_body)))
            .collect();
        Ok(PipelineResult {
            whole_body: run.whole_body,
            whole_body_error: run.whole_body_error.clone(),
            order: run.order.clone(),
            outcomes: run.outcomes.clone(),
            part_transforms,
            registered: run.current.clone(),
            correspondences: run.correspondences.clone(),
            log: self.log.clone(),
            timings: self.timings.clone(),
        })
    }

    pub fn into_result(self) -> Result<PipelineResult> {
        self.result()
    }
}

/// Shows `cand` at the checkpoint and tracks the best one by `better`.
fn offer(work: &mut PartWork, cand: Candidate, better: impl Fn(&Candidate, &Candidate) -> bool) {
    let replace_best = work.best.as_ref().is_none_or(|b| better(&cand, b));
    if replace_best {
        work.best = Some(Candidate {
            fit: cand.fit.clone(),
            history: cand.history.clone(),
        });
    }
    work.shown = Some(cand);
}
