use ndarray::{s, Array2};

use super::{BlockKind, BlockTiming, DataError, Session, TaskLabel};

/// One block of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub trial: usize,
    /// Position of the block inside the trial (0 = pre-rest, 1 = task, 2 = post-rest).
    pub block: usize,
    pub kind: BlockKind,
    pub label: TaskLabel,
    /// Offset of the first sample within the trial.
    pub start: usize,
    /// `channels × block samples`.
    pub samples: Array2<f64>,
}

/// Sample counts of the three blocks: `floor(duration × rate)` each.
pub fn block_lengths(timing: &BlockTiming, sample_rate_hz: f64) -> [usize; 3] {
    timing
        .blocks()
        .map(|(_, d)| (d * sample_rate_hz + 1e-9).floor() as usize)
}

/// Split every trial into its Rest → Task → Rest blocks. Empty blocks are
/// skipped, so `task_s = 0` yields rest segments only.
pub fn segment_trials(session: &Session) -> Result<Vec<Segment>, DataError> {
    let timing = session.block_timing();
    let lens = block_lengths(&timing, session.sample_rate_hz());
    let needed: usize = lens.iter().sum();
    let mut out = Vec::with_capacity(session.trials().len() * 3);
    for (ti, trial) in session.trials().iter().enumerate() {
        if needed > trial.n_samples() {
            return Err(DataError::Segmentation {
                trial: ti,
                needed,
                available: trial.n_samples(),
            });
        }
        let mut start = 0;
        for (bi, ((kind, _), len)) in timing.blocks().into_iter().zip(lens).enumerate() {
            if len > 0 {
                let label = match kind {
                    BlockKind::Rest => TaskLabel::Rest,
                    BlockKind::Task => trial.label(),
                };
                out.push(Segment {
                    trial: ti,
                    block: bi,
                    kind,
                    label,
                    start,
                    samples: trial.samples().slice(s![.., start..start + len]).to_owned(),
                });
            }
            start += len;
        }
    }
    Ok(out)
}
