//! Single-owner event loop driving a session against the simulated world.
//!
//! All time is simulated. Backend outputs are stamped at
//! `max(now, previous output + delay)`, tool executions advance the clock by
//! their configured durations, and the active follow loop ticks at its own
//! rate in between. Everything is a pure function of the inputs and seeds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{loop_iteration, FollowMode, LoopEvent, PerceptionSnapshot, ServoConfig};
use crate::geometry::{CameraModel, GazeTarget, Point3};
use crate::session::{
    estimate_text_tokens, AdapterError, BackendAdapter, BackendOutput, EventKind, EventLog, GazeSource, RuntimeAction,
    RuntimeNote, ScheduledOutput, Session, SessionConfig, SessionError, SessionEvent, TokenUsage, TurnRequest,
    TurnState,
};
use crate::simworld::{default_camera, render_detections, render_png, Scene, SimError, SimFrame, SimWorld};
use crate::tools::{
    default_policy, dispatch, AttentionDirective, ToolArgs, ToolCall, ToolName, ToolRegistry, SystemVariant,
};
use crate::view_memory::{look_around, look_for, use_vision, CapturedView, ViewError, ViewRig, ViewStore};

/// Simulated durations, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    /// Pause between the end of one exchange and the next user utterance.
    pub turn_gap_ms: u64,
    pub ms_per_word: u64,
    /// Silence after speech before the backend commits the turn.
    pub vad_hangover_ms: u64,
    pub tool_ack_ms: u64,
    pub scoring_ms: u64,
    pub vision_ms: u64,
    pub settle_ms: u64,
    pub audio_in_tokens_per_s: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            turn_gap_ms: 800,
            ms_per_word: 280,
            vad_hangover_ms: 500,
            tool_ack_ms: 50,
            scoring_ms: 400,
            vision_ms: 100,
            settle_ms: 300,
            audio_in_tokens_per_s: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeConfig {
    pub variant: SystemVariant,
    pub seed: u64,
    pub camera: CameraModel,
    pub person_servo: ServoConfig,
    pub object_servo: ServoConfig,
    pub replace_on_sweep: bool,
    pub graded_scorer: bool,
    pub session: SessionConfig,
    pub timing: Timing,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            variant: SystemVariant::Full,
            seed: 0,
            camera: default_camera(),
            person_servo: ServoConfig::person(),
            object_servo: ServoConfig::object(),
            replace_on_sweep: true,
            graded_scorer: false,
            session: SessionConfig::default(),
            timing: Timing::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Backend(#[from] AdapterError),
    #[error(transparent)]
    World(#[from] SimError),
    #[error(transparent)]
    View(#[from] ViewError),
}

/// One user utterance as seen by the runtime.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UserTurn {
    pub text: String,
    /// Speech duration; derived from the word count when absent.
    #[serde(default)]
    pub speech_ms: Option<u64>,
    /// Start speaking this long after the previous commit, cutting off the
    /// robot if it is still responding.
    #[serde(default)]
    pub interrupts_after_ms: Option<u64>,
}

/// What happened in one exchange, as used for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub index: usize,
    /// Validated tool calls in call order.
    pub tools: Vec<ToolName>,
    /// User commit to first backend output; `None` if nothing arrived.
    pub latency_ms: Option<u64>,
    pub usage: TokenUsage,
    pub interrupted: bool,
}

#[derive(Debug)]
struct ActiveTurn {
    index: usize,
    commit_ms: u64,
    usage_at_start: TokenUsage,
    first_output_ms: Option<u64>,
    tools: Vec<ToolName>,
    tool_fired: bool,
    pending: VecDeque<ScheduledOutput>,
    prev_output_ms: u64,
    /// A tool was cut off mid-execution; nothing more is processed.
    blocked: bool,
    settled: bool,
}

struct Follow {
    mode: FollowMode,
    cfg: ServoConfig,
    next_tick_ms: u64,
}

pub struct Runtime {
    cfg: RuntimeConfig,
    session: Session,
    world: SimWorld,
    registry: ToolRegistry,
    store: ViewStore,
    backend: Box<dyn BackendAdapter>,
    directive: AttentionDirective,
    follow: Option<Follow>,
    turn: Option<ActiveTurn>,
    outcomes: Vec<TurnOutcome>,
    next_turn: usize,
}

enum ToolRun {
    Done,
    /// Stopped at a cancellation point before the barge-in deadline.
    CutOff,
}

impl Runtime {
    /// Starts a session at t = 0 with a first frame and person following.
    pub fn new(scene: Scene, backend: Box<dyn BackendAdapter>, cfg: RuntimeConfig) -> Result<Self, RuntimeError> {
        let world = SimWorld::new(scene, cfg.camera, cfg.seed);
        let mut rt = Self {
            session: Session::new(cfg.session),
            world,
            registry: ToolRegistry::for_variant(cfg.variant),
            store: ViewStore::new(cfg.replace_on_sweep),
            backend,
            directive: AttentionDirective::Idle,
            follow: None,
            turn: None,
            outcomes: Vec::new(),
            next_turn: 0,
            cfg,
        };
        rt.capture_frame(0)?;
        rt.set_directive(default_policy(&TurnState::Listening, &AttentionDirective::Idle), 0)?;
        Ok(rt)
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.cfg
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn log(&self) -> &EventLog {
        self.session.log()
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn store(&self) -> &ViewStore {
        &self.store
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn directive(&self) -> &AttentionDirective {
        &self.directive
    }

    pub fn outcomes(&self) -> &[TurnOutcome] {
        &self.outcomes
    }

    pub fn now_ms(&self) -> u64 {
        self.session.now_ms()
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Plays one user utterance and everything the backend does in response,
    /// up to the point where the next utterance could interrupt it.
    pub fn user_turn(&mut self, turn: &UserTurn) -> Result<(), RuntimeError> {
        let speech_start = match (turn.interrupts_after_ms, &self.turn) {
            (Some(after), Some(active)) => {
                let at = active.commit_ms + after;
                self.drain(Some(at))?;
                at.max(self.now_ms())
            }
            _ => {
                self.drain(None)?;
                self.now_ms() + self.cfg.timing.turn_gap_ms
            }
        };
        self.advance_attention(speech_start)?;

        let usage_at_start = self.session.usage();
        self.capture_frame(speech_start)?;
        let actions = self.submit(speech_start, EventKind::UserSpeechStart)?;
        let cut_off = self.turn.as_ref().is_some_and(|t| !t.settled);
        if cut_off {
            self.handle_cancellations(speech_start, &actions)?;
            if let Some(t) = self.turn.as_mut() {
                t.pending.clear();
            }
            self.submit(speech_start, EventKind::ResponseDone { cancelled: true })?;
            self.settle(speech_start, true)?;
        }

        let words = turn.text.split_whitespace().count() as u64;
        let speech_ms = turn.speech_ms.unwrap_or(words.max(1) * self.cfg.timing.ms_per_word);
        let commit = speech_start + speech_ms + self.cfg.timing.vad_hangover_ms;
        self.advance_attention(commit)?;
        let tokens = (speech_ms * self.cfg.timing.audio_in_tokens_per_s).div_ceil(1000);
        self.submit(commit, EventKind::AudioInChunk { tokens })?;
        let actions = self.submit(commit, EventKind::UserTurnCommitted {
            transcript: turn.text.clone(),
        })?;

        let index = self.next_turn;
        self.next_turn += 1;
        self.turn = Some(ActiveTurn {
            index,
            commit_ms: commit,
            usage_at_start,
            first_output_ms: None,
            tools: Vec::new(),
            tool_fired: false,
            pending: VecDeque::new(),
            prev_output_ms: commit,
            blocked: false,
            settled: false,
        });
        for action in actions {
            if let RuntimeAction::ForwardToBackend { transcript } = action {
                let response = self.backend.respond(&TurnRequest {
                    turn: index,
                    transcript: &transcript,
                })?;
                if let Some(t) = self.turn.as_mut() {
                    t.pending = response.outputs.into();
                }
            }
        }
        Ok(())
    }

    /// Moves a scene object (or the person, with label `person`).
    pub fn edit_scene(&mut self, label: &str, to: Point3) -> Result<(), RuntimeError> {
        if label == crate::simworld::PERSON_LABEL {
            self.world.move_person(to)?;
        } else {
            self.world.move_object(label, to)?;
            self.store.mark_stale();
        }
        let t = self.now_ms();
        self.session.note(t, RuntimeNote::SceneEdit {
            label: label.to_string(),
            x: to.x,
            y: to.y,
            z: to.z,
        })?;
        Ok(())
    }

    /// Completes any response still in flight.
    pub fn settle_pending(&mut self) -> Result<(), RuntimeError> {
        self.drain(None)
    }

    /// Completes the current exchange and closes the session log.
    pub fn finish(mut self, reason: &str) -> Result<(EventLog, Vec<TurnOutcome>, ViewStore), RuntimeError> {
        self.close(reason)?;
        Ok((self.session.into_log(), self.outcomes, self.store))
    }

    pub fn close(&mut self, reason: &str) -> Result<(), RuntimeError> {
        self.drain(None)?;
        let t = self.now_ms();
        self.session.note(t, RuntimeNote::SessionClose {
            reason: reason.to_string(),
        })?;
        Ok(())
    }

    fn submit(&mut self, t: u64, kind: EventKind) -> Result<Vec<RuntimeAction>, RuntimeError> {
        Ok(self.session.submit(SessionEvent::new(t, kind))?)
    }

    fn capture_frame(&mut self, t: u64) -> Result<SimFrame, RuntimeError> {
        let frame = self.world.capture(t);
        self.submit(t, EventKind::FrameAvailable {
            frame_id: frame.frame_id.clone(),
        })?;
        Ok(frame)
    }

    fn gaze(&mut self, t: u64, target: &GazeTarget, source: GazeSource) -> Result<(), RuntimeError> {
        self.session.note(t, RuntimeNote::Gaze {
            x: target.x,
            y: target.y,
            z: target.z,
            source,
        })?;
        Ok(())
    }

    /// Replaces the active directive, preempting any running follow loop.
    fn set_directive(&mut self, directive: AttentionDirective, t: u64) -> Result<(), RuntimeError> {
        self.follow = match &directive {
            AttentionDirective::FollowPerson => Some(Follow {
                mode: FollowMode::Person,
                cfg: self.cfg.person_servo,
                next_tick_ms: t,
            }),
            AttentionDirective::FollowObject { label } => Some(Follow {
                mode: FollowMode::Object { label: label.clone() },
                cfg: self.cfg.object_servo,
                next_tick_ms: t,
            }),
            _ => None,
        };
        self.session.note(t, RuntimeNote::Directive {
            directive: directive.clone(),
        })?;
        self.directive = directive;
        Ok(())
    }

    /// Runs follow-loop iterations due up to and including `until`.
    fn advance_attention(&mut self, until: u64) -> Result<(), RuntimeError> {
        loop {
            let Some(follow) = self.follow.as_mut() else { return Ok(()) };
            if follow.next_tick_ms > until {
                return Ok(());
            }
            let tick = follow.next_tick_ms;
            follow.next_tick_ms += follow.cfg.period_ms();
            let (mode, cfg) = (follow.mode.clone(), follow.cfg);

            let pose = *self.world.pose();
            let frame = SimFrame {
                frame_id: String::new(),
                visible: render_detections(self.world.scene(), &pose, self.world.camera()),
                pose,
                camera: *self.world.camera(),
                t_ms: tick,
            };
            let detection = self.world.detect(&frame, &mode);
            let audio = match (&mode, &detection) {
                (FollowMode::Person, None) => Some(self.world.spatial_audio()),
                _ => None,
            };
            let snapshot = PerceptionSnapshot {
                camera: frame.camera_state(),
                detection,
                audio,
            };
            if let LoopEvent::Gaze(cmd) = loop_iteration(&mode, &snapshot, tick, &cfg) {
                if self.world.actuate(&cmd.target).is_ok() {
                    self.gaze(tick, &cmd.target, cmd.source)?;
                    self.capture_frame(tick)?;
                }
            }
        }
    }

    /// Processes backend outputs due before `limit` (all of them if `None`).
    fn drain(&mut self, limit: Option<u64>) -> Result<(), RuntimeError> {
        loop {
            let Some(turn) = self.turn.as_mut() else { return Ok(()) };
            if turn.blocked {
                return Ok(());
            }
            let Some(next) = turn.pending.front() else { return Ok(()) };
            let t = self.session.now_ms().max(turn.prev_output_ms + next.delay_ms);
            if limit.is_some_and(|l| t >= l) {
                return Ok(());
            }
            let next = turn.pending.pop_front().expect("front exists");
            turn.prev_output_ms = t;
            self.advance_attention(t)?;
            self.process_output(t, next.output, limit)?;
        }
    }

    fn process_output(&mut self, t: u64, output: BackendOutput, limit: Option<u64>) -> Result<(), RuntimeError> {
        let is_model_output = matches!(
            output,
            BackendOutput::ToolCall(_)
                | BackendOutput::Event(EventKind::ModelTextDelta { .. } | EventKind::ModelAudioDelta { .. })
        );
        if is_model_output {
            if let Some(turn) = self.turn.as_mut() {
                turn.first_output_ms.get_or_insert(t);
            }
        }
        match output {
            BackendOutput::Event(kind) => {
                let done = matches!(kind, EventKind::ResponseDone { .. });
                self.submit(t, kind)?;
                if done {
                    self.settle(t, false)?;
                }
            }
            BackendOutput::ToolCall(raw) => match self.registry.parse_tool_call(&raw) {
                Ok(call) => {
                    let actions = self.submit(t, EventKind::ToolCallRequest { call })?;
                    for action in actions {
                        match action {
                            RuntimeAction::ExecuteTool { call } => {
                                if let ToolRun::CutOff = self.execute(call, t, limit)? {
                                    if let Some(turn) = self.turn.as_mut() {
                                        turn.blocked = true;
                                    }
                                }
                            }
                            RuntimeAction::CancelActiveAction { call_id } => {
                                self.session.note(t, RuntimeNote::CancelActiveAction { call_id })?;
                            }
                            _ => {}
                        }
                    }
                }
                Err(e) => {
                    self.session.note(t, RuntimeNote::ToolRejected {
                        call_id: raw.call_id,
                        name: raw.name,
                        args: raw.args,
                        error: e.code().to_string(),
                        detail: e.to_string(),
                    })?;
                }
            },
        }
        Ok(())
    }

    fn handle_cancellations(&mut self, t: u64, actions: &[RuntimeAction]) -> Result<(), RuntimeError> {
        for action in actions {
            if let RuntimeAction::CancelActiveAction { call_id } = action {
                self.session.note(t, RuntimeNote::CancelActiveAction {
                    call_id: call_id.clone(),
                })?;
            }
        }
        if !self.directive.is_follow() && self.directive != AttentionDirective::Idle {
            self.set_directive(AttentionDirective::Idle, t)?;
        }
        Ok(())
    }

    /// Applies the default attention policy once a response completes.
    fn settle(&mut self, t: u64, interrupted: bool) -> Result<(), RuntimeError> {
        let Some(turn) = self.turn.as_mut() else { return Ok(()) };
        if turn.settled {
            return Ok(());
        }
        turn.settled = true;
        let effective = if turn.tool_fired {
            self.directive.clone()
        } else {
            AttentionDirective::Idle
        };
        let outcome = TurnOutcome {
            index: turn.index,
            tools: turn.tools.clone(),
            latency_ms: turn.first_output_ms.map(|f| f - turn.commit_ms),
            usage: self.session.usage().since(&turn.usage_at_start),
            interrupted,
        };
        self.outcomes.push(outcome);
        let next = default_policy(self.session.state(), &effective);
        if next == self.directive && self.follow.is_some() {
            // keep the running loop and its tick phase
            self.session.note(t, RuntimeNote::Directive { directive: next })?;
            Ok(())
        } else {
            self.set_directive(next, t)
        }
    }

    fn ack(&mut self, t: u64, call_id: &str, ok: bool, result: String) -> Result<(), RuntimeError> {
        self.advance_attention(t)?;
        let tokens = estimate_text_tokens(&result);
        self.submit(t, EventKind::ToolResultAck {
            call_id: call_id.to_string(),
            ok,
            result,
            tokens,
        })?;
        Ok(())
    }

    fn execute(&mut self, call: ToolCall, t: u64, limit: Option<u64>) -> Result<ToolRun, RuntimeError> {
        if let Some(turn) = self.turn.as_mut() {
            turn.tool_fired = true;
            turn.tools.push(call.name());
        }
        self.set_directive(dispatch(&call), t)?;
        let timing = self.cfg.timing;
        match &call.args {
            ToolArgs::LookAtPerson { enabled } => {
                let result = if *enabled { "following the person" } else { "person following stopped" };
                self.ack(t + timing.tool_ack_ms, &call.call_id, true, result.into())?;
            }
            ToolArgs::LookAtObject { label } => {
                let frame = self.world.latest_frame().cloned();
                let mode = FollowMode::Object { label: label.clone() };
                let visible = frame.is_some_and(|f| self.world.detect(&f, &mode).is_some());
                let result = if visible {
                    format!("tracking {label}")
                } else {
                    format!("{label} is not in view")
                };
                self.ack(t + timing.tool_ack_ms, &call.call_id, visible, result)?;
            }
            ToolArgs::LookAround { .. } => {
                let AttentionDirective::Sweep { targets } = self.directive.clone() else {
                    unreachable!("look_around dispatches to a sweep")
                };
                let mut rig = SweepRig {
                    world: &mut self.world,
                    session: &mut self.session,
                    t,
                    settle_ms: timing.settle_ms,
                    limit,
                    cut_off: false,
                    failure: None,
                };
                let outcome = look_around(&mut self.store, &targets, &mut rig);
                let (end, cut_off) = (rig.t, rig.cut_off);
                if let Some(e) = rig.failure {
                    return Err(e);
                }
                if cut_off {
                    return Ok(ToolRun::CutOff);
                }
                let (ok, result) = match outcome {
                    Ok(n) => (true, format!("stored {n} views")),
                    Err(e) => (false, e.to_string()),
                };
                self.set_directive(AttentionDirective::Idle, end)?;
                self.ack(end, &call.call_id, ok, result)?;
            }
            ToolArgs::LookFor { q } => {
                let at = t + timing.scoring_ms;
                self.advance_attention(at)?;
                if self.store.is_empty() {
                    self.set_directive(AttentionDirective::Idle, at)?;
                    self.ack(at, &call.call_id, false, ViewError::EmptyStore.to_string())?;
                    return Ok(ToolRun::Done);
                }
                let scorer = self.world.oracle_scorer(self.cfg.graded_scorer);
                let found = look_for(q, &self.store, &scorer, &mut self.session, at)?;
                self.gaze(at, &found.gaze, GazeSource::Search)?;
                self.world.actuate(&found.gaze)?;
                let done = at + timing.settle_ms;
                self.capture_frame(done)?;
                let best = found.scores[found.index].score;
                self.ack(done, &call.call_id, true, format!("showing stored view {} (score {best:.2})", found.index))?;
            }
            ToolArgs::UseVision { q } => {
                let at = t + timing.vision_ms;
                self.advance_attention(at)?;
                let (ok, result) = match use_vision(q, &mut self.session, at) {
                    Ok(_) => (true, "current view sent".to_string()),
                    Err(ViewError::NoFrameAvailable) => (false, ViewError::NoFrameAvailable.to_string()),
                    Err(e) => return Err(e.into()),
                };
                self.set_directive(AttentionDirective::Idle, at)?;
                self.ack(at, &call.call_id, ok, result)?;
            }
        }
        Ok(ToolRun::Done)
    }
}

/// Sweep rig over the simulated head. Every station logs a gaze record and
/// a frame; a pending barge-in stops the sweep before the next motion.
struct SweepRig<'a> {
    world: &'a mut SimWorld,
    session: &'a mut Session,
    t: u64,
    settle_ms: u64,
    limit: Option<u64>,
    cut_off: bool,
    failure: Option<RuntimeError>,
}

impl ViewRig for SweepRig<'_> {
    fn look_at(&mut self, target: &GazeTarget) -> Result<(), String> {
        if self.limit.is_some_and(|l| self.t + self.settle_ms >= l) {
            self.cut_off = true;
            return Err("interrupted".into());
        }
        self.world.actuate(target).map_err(|e| e.to_string())?;
        let note = RuntimeNote::Gaze {
            x: target.x,
            y: target.y,
            z: target.z,
            source: GazeSource::Sweep,
        };
        if let Err(e) = self.session.note(self.t, note) {
            self.failure = Some(e.into());
            return Err("log rejected".into());
        }
        self.t += self.settle_ms;
        Ok(())
    }

    fn capture(&mut self) -> CapturedView {
        let frame = self.world.capture(self.t);
        let event = SessionEvent::new(self.t, EventKind::FrameAvailable {
            frame_id: frame.frame_id.clone(),
        });
        if let Err(e) = self.session.submit(event) {
            self.failure.get_or_insert(e.into());
        }
        CapturedView {
            bytes: render_png(&frame),
            frame_id: frame.frame_id,
            pose: frame.pose,
            camera: frame.camera,
            t_ms: frame.t_ms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{LogEntry, MockScripted, ScriptedResponse};
    use serde_json::json;

    fn scene() -> Scene {
        Scene::from_json(
            r#"{"objects": [{"label": "lamp", "x": 1.2, "y": 0.1, "z": -1.0},
                            {"label": "keys", "x": -1.0, "y": 0.3, "z": 1.2}],
               "person": {"x": 0.3, "y": -0.2, "z": 1.6}, "seed": 5}"#,
        )
        .unwrap()
    }

    fn runtime(script: serde_json::Value, variant: SystemVariant) -> Runtime {
        let script: Vec<ScriptedResponse> = serde_json::from_value(script).unwrap();
        let backend = Box::new(MockScripted::new(script, 1).unwrap());
        Runtime::new(scene(), backend, RuntimeConfig { variant, ..Default::default() }).unwrap()
    }

    fn turn(text: &str) -> UserTurn {
        UserTurn {
            text: text.into(),
            ..Default::default()
        }
    }

    fn directives(log: &EventLog) -> Vec<AttentionDirective> {
        log.lines()
            .iter()
            .filter_map(|l| match &l.entry {
                LogEntry::Note(RuntimeNote::Directive { directive }) => Some(directive.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn sweep_then_search() {
        let mut rt = runtime(
            json!([
                {"turn": 0, "text": "Let me look around.", "tool_calls": [{"name": "look_around", "args": {}}]},
                {"turn": 1, "text": "Found them.", "tool_calls": [{"name": "look_for", "args": {"q": "keys"}}]}
            ]),
            SystemVariant::Full,
        );
        rt.user_turn(&turn("can you scan the room")).unwrap();
        rt.user_turn(&turn("where are my keys")).unwrap();
        let (log, outcomes, store) = rt.finish("done").unwrap();
        assert_eq!(store.len(), 5);
        assert_eq!(outcomes[0].tools, [ToolName::LookAround]);
        assert_eq!(outcomes[1].tools, [ToolName::LookFor]);
        assert!(outcomes.iter().all(|o| o.latency_ms == Some(700)));
        let vision: Vec<_> = log
            .events()
            .filter(|e| matches!(e.kind, EventKind::VisionMessage { .. }))
            .collect();
        assert_eq!(vision.len(), 1);
        let ds = directives(&log);
        assert!(ds.contains(&AttentionDirective::Search { query: "keys".into() }));
        // the search keeps its gaze after the turn settles
        assert_eq!(ds.last().unwrap(), &AttentionDirective::Search { query: "keys".into() });
    }

    #[test]
    fn disabled_tool_is_rejected_and_person_default_applies() {
        let mut rt = runtime(
            json!([{"turn": 0, "text": "Searching.", "tool_calls": [{"name": "look_for", "args": {"q": "lamp"}}]}]),
            SystemVariant::NoObject,
        );
        rt.user_turn(&turn("where is the lamp")).unwrap();
        let (log, outcomes, _) = rt.finish("done").unwrap();
        assert!(outcomes[0].tools.is_empty());
        let rejected = log
            .lines()
            .iter()
            .any(|l| matches!(&l.entry, LogEntry::Note(RuntimeNote::ToolRejected { error, .. }) if error == "UnknownTool"));
        assert!(rejected);
        assert_eq!(directives(&log).last().unwrap(), &AttentionDirective::FollowPerson);
    }

    #[test]
    fn barge_in_cuts_off_a_sweep() {
        let mut rt = runtime(
            json!([
                {"turn": 0, "latency_ms": 300, "text": "Scanning now.", "tool_calls": [{"name": "look_around", "args": {}}]},
                {"turn": 1, "text": "Okay, stopping."}
            ]),
            SystemVariant::Full,
        );
        rt.user_turn(&turn("look around")).unwrap();
        rt.user_turn(&UserTurn {
            text: "wait, stop".into(),
            speech_ms: None,
            interrupts_after_ms: Some(1000),
        })
        .unwrap();
        let (log, outcomes, store) = rt.finish("done").unwrap();
        assert!(outcomes[0].interrupted);
        assert!(store.len() < 5);
        let cancelled = log
            .lines()
            .iter()
            .any(|l| matches!(&l.entry, LogEntry::Note(RuntimeNote::CancelActiveAction { call_id: Some(id) }) if id == "call_0"));
        assert!(cancelled);
        let acks = log.events().filter(|e| matches!(e.kind, EventKind::ToolResultAck { .. })).count();
        assert_eq!(acks, 0);
        assert_eq!(directives(&log).last().unwrap(), &AttentionDirective::FollowPerson);
    }

    #[test]
    fn person_following_tracks_a_move() {
        let mut rt = runtime(json!([]), SystemVariant::Full);
        rt.user_turn(&turn("hello there")).unwrap();
        rt.settle_pending().unwrap();
        rt.edit_scene("person", Point3::new(-0.8, -0.2, 1.4)).unwrap();
        rt.user_turn(&turn("over here now")).unwrap();
        let (log, _, _) = rt.finish("done").unwrap();
        let person_gazes = log
            .lines()
            .iter()
            .filter(|l| matches!(&l.entry, LogEntry::Note(RuntimeNote::Gaze { source: GazeSource::Person, .. })))
            .count();
        assert!(person_gazes >= 2);
    }
}
