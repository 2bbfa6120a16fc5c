use nirs_bci::dataio::{
    block_lengths, generate_synthetic, load_dataset, save_dataset, segment_trials, BlockKind, BlockTiming, Condition,
    GeneratorConfig, TaskLabel,
};
use proptest::prelude::*;

fn config(seed: u64, n_channels: u16, snr: f64) -> GeneratorConfig {
    GeneratorConfig {
        n_channels,
        task_channels: [1].into_iter().collect(),
        snr,
        trials_per_session: 2,
        seed,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn saved_datasets_load_back_identically(seed in any::<u64>(), n in 1u16..=45, snr in 0.0f64..5.0, aomi in any::<bool>()) {
        let mut g = config(seed, n, snr);
        if aomi {
            g.condition = Condition::Aomi;
        }
        let timing = BlockTiming { rest_pre_s: 2.0, task_s: 3.0, rest_post_s: 2.0 };
        let set = generate_synthetic(&g, 2, timing).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&set, dir.path()).unwrap();
        prop_assert_eq!(load_dataset(dir.path()).unwrap(), set);
    }

    #[test]
    fn segments_tile_each_trial(seed in any::<u64>(), pre in 0.0f64..5.0, task in 0.5f64..5.0, post in 0.0f64..5.0) {
        let timing = BlockTiming { rest_pre_s: pre, task_s: task, rest_post_s: post };
        let set = generate_synthetic(&config(seed, 4, 1.0), 1, timing).unwrap();
        let session = &set.sessions[0];
        let lens = block_lengths(&timing, session.sample_rate_hz());
        let segs = segment_trials(session).unwrap();
        for (ti, trial) in session.trials().iter().enumerate() {
            let mine: Vec<_> = segs.iter().filter(|s| s.trial == ti).collect();
            let covered: usize = mine.iter().map(|s| s.samples.ncols()).sum();
            prop_assert_eq!(covered, lens.iter().sum::<usize>());
            for s in &mine {
                prop_assert_eq!(s.samples.nrows(), 4);
                match s.kind {
                    BlockKind::Rest => prop_assert_eq!(s.label, TaskLabel::Rest),
                    BlockKind::Task => prop_assert_eq!(s.label, trial.label()),
                }
            }
        }
    }
}

#[test]
fn generator_is_deterministic_per_seed() {
    let a = generate_synthetic(&config(5, 8, 1.0), 2, BlockTiming::default()).unwrap();
    let b = generate_synthetic(&config(5, 8, 1.0), 2, BlockTiming::default()).unwrap();
    let c = generate_synthetic(&config(6, 8, 1.0), 2, BlockTiming::default()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn full_montage_has_45_channels_at_14_28_hz() {
    let set = generate_synthetic(&config(0, 45, 1.0), 1, BlockTiming::default()).unwrap();
    let s = &set.sessions[0];
    assert_eq!(s.channel_ids().len(), 45);
    assert_eq!(s.sample_rate_hz(), 14.28);
    let lens = block_lengths(&s.block_timing(), s.sample_rate_hz());
    assert_eq!(lens, [214, 285, 214]);
}

#[test]
fn snr_without_task_channels_is_a_config_error() {
    let g = GeneratorConfig { snr: 1.0, ..Default::default() };
    assert!(generate_synthetic(&g, 1, BlockTiming::default()).is_err());
}
