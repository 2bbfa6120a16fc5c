//! One-axis haptic device simulator state.

use serde::{Deserialize, Serialize};

use super::protocol::{Command, Direction};

/// Half of the 27 cm workspace axis.
pub const WORKSPACE_HALF_WIDTH_CM: f64 = 13.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HapticState {
    pub position: f64,
    pub step_cm: f64,
    pub bounds: (f64, f64),
    pub last_seq: u32,
}

impl HapticState {
    pub fn new(step_cm: f64) -> Self {
        assert!(step_cm > 0.0 && step_cm.is_finite(), "step must be positive");
        HapticState {
            position: 0.0,
            step_cm,
            bounds: (-WORKSPACE_HALF_WIDTH_CM, WORKSPACE_HALF_WIDTH_CM),
            last_seq: 0,
        }
    }

    /// Apply `cmd`; returns `false` when it was stale and ignored.
    pub fn apply(&mut self, cmd: &Command) -> bool {
        if cmd.seq <= self.last_seq {
            return false;
        }
        self.last_seq = cmd.seq;
        let delta = match cmd.direction {
            Direction::Right => self.step_cm,
            Direction::Left => -self.step_cm,
            Direction::None => 0.0,
        };
        self.position = (self.position + delta).clamp(self.bounds.0, self.bounds.1);
        true
    }
}

/// Functional form of [`HapticState::apply`].
pub fn haptic_step(state: &HapticState, cmd: &Command) -> HapticState {
    let mut next = state.clone();
    next.apply(cmd);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(seq: u32, direction: Direction) -> Command {
        Command {
            seq,
            direction,
            auc_e1: 0.9,
            auc_e2: 0.1,
        }
    }

    #[test]
    fn steps_and_clamps() {
        let s = HapticState::new(1.0);
        assert_eq!(haptic_step(&s, &cmd(1, Direction::Right)).position, 1.0);
        assert_eq!(haptic_step(&s, &cmd(1, Direction::Left)).position, -1.0);
        assert_eq!(haptic_step(&s, &cmd(1, Direction::None)).position, 0.0);
        let edge = HapticState { position: 13.5, ..s.clone() };
        assert_eq!(haptic_step(&edge, &cmd(1, Direction::Right)).position, 13.5);
    }

    #[test]
    fn replayed_sequence_is_ignored() {
        let mut s = HapticState::new(1.0);
        assert!(s.apply(&cmd(1, Direction::Right)));
        let snapshot = s.clone();
        assert!(!s.apply(&cmd(1, Direction::Right)));
        assert_eq!(s, snapshot);
        assert!(!s.apply(&cmd(0, Direction::Left)));
        assert_eq!(s, snapshot);
    }
}
