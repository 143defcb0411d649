use thiserror::Error;

use super::{Codelet, CodeletGraph, CodeletId, CodeletState, SyncSlot};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignalError {
    #[error("edge {producer} -> {consumer} already satisfied in this run")]
    DoubleSignal { producer: CodeletId, consumer: CodeletId },
    #[error("codelet {0}: dependency count already zero")]
    UnderflowSignal(CodeletId),
    #[error("codelet {codelet}: signalled while {state}, expected Dormant")]
    ConsumerNotDormant { codelet: CodeletId, state: CodeletState },
    #[error("codelet {codelet}: illegal transition {from} -> {to}")]
    IllegalTransition {
        codelet: CodeletId,
        from: CodeletState,
        to: CodeletState,
    },
    #[error("codelet {codelet}: reset requires Done, found {state}")]
    InvalidReset { codelet: CodeletId, state: CodeletState },
}

/// Result of satisfying one dependency edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalOutcome {
    pub current_count: u32,
    pub became_enabled: bool,
}

/// Mutable state of one run over an immutable [`CodeletGraph`]: slot
/// counters, lifecycle states and per-edge satisfaction flags.
///
/// Invariant: `slot.current_count` equals the number of unsatisfied
/// in-edges of the codelet (for well-formed graphs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunState {
    slots: Vec<SyncSlot>,
    states: Vec<CodeletState>,
    satisfied: Vec<bool>,
}

impl RunState {
    pub fn new(graph: &CodeletGraph) -> Self {
        RunState {
            slots: graph.codelets().iter().map(|c| c.slot).collect(),
            states: graph.codelets().iter().map(|c| c.state).collect(),
            satisfied: vec![false; graph.edges().len()],
        }
    }

    pub fn state(&self, id: CodeletId) -> CodeletState {
        self.states[id.index()]
    }

    pub fn slot(&self, id: CodeletId) -> SyncSlot {
        self.slots[id.index()]
    }

    pub fn is_satisfied(&self, edge: usize) -> bool {
        self.satisfied[edge]
    }

    pub fn all_done(&self) -> bool {
        self.states.iter().all(|&s| s == CodeletState::Done)
    }

    pub fn transition(&mut self, id: CodeletId, to: CodeletState) -> Result<(), SignalError> {
        let from = self.states[id.index()];
        if !from.can_transition(to) {
            return Err(SignalError::IllegalTransition { codelet: id, from, to });
        }
        self.states[id.index()] = to;
        Ok(())
    }

    /// Marks `edge` satisfied and decrements its consumer's counter. When
    /// the counter reaches zero the consumer moves Dormant -> Enabled.
    pub fn satisfy_edge(&mut self, graph: &CodeletGraph, edge: usize) -> Result<SignalOutcome, SignalError> {
        let e = graph.edge(edge);
        if self.satisfied[edge] {
            return Err(SignalError::DoubleSignal {
                producer: e.producer,
                consumer: e.consumer,
            });
        }
        let state = self.states[e.consumer.index()];
        if state != CodeletState::Dormant {
            return Err(SignalError::ConsumerNotDormant {
                codelet: e.consumer,
                state,
            });
        }
        let slot = &mut self.slots[e.consumer.index()];
        if slot.current_count == 0 {
            return Err(SignalError::UnderflowSignal(e.consumer));
        }
        slot.current_count -= 1;
        let current_count = slot.current_count;
        self.satisfied[edge] = true;
        let became_enabled = current_count == 0;
        if became_enabled {
            self.transition(e.consumer, CodeletState::Enabled)?;
        }
        Ok(SignalOutcome {
            current_count,
            became_enabled,
        })
    }

    /// Returns a finished codelet to Dormant with a full counter and its
    /// in-edges unsatisfied, ready for another firing.
    pub fn reset_codelet(&mut self, graph: &CodeletGraph, id: CodeletId) -> Result<(), SignalError> {
        let state = self.states[id.index()];
        if state != CodeletState::Done {
            return Err(SignalError::InvalidReset { codelet: id, state });
        }
        self.states[id.index()] = CodeletState::Dormant;
        let slot = &mut self.slots[id.index()];
        slot.current_count = slot.reset_count;
        for &e in graph.in_edges(id) {
            self.satisfied[e] = false;
        }
        Ok(())
    }

    /// Resets every codelet; all must be Done.
    pub fn reset_all(&mut self, graph: &CodeletGraph) -> Result<(), SignalError> {
        for c in graph.codelets() {
            self.reset_codelet(graph, c.id)?;
        }
        Ok(())
    }
}

/// Standalone reset of a codelet value (no edge state attached).
pub fn reset_codelet(mut codelet: Codelet) -> Result<Codelet, SignalError> {
    if codelet.state != CodeletState::Done {
        return Err(SignalError::InvalidReset {
            codelet: codelet.id,
            state: codelet.state,
        });
    }
    codelet.state = CodeletState::Dormant;
    codelet.slot.current_count = codelet.slot.reset_count;
    Ok(codelet)
}
