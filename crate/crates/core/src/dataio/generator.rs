//! Parametric hemodynamic signal generator.
//!
//! Each task-responsive channel carries the task boxcar convolved with a
//! double-gamma hemodynamic response, scaled to `snr` noise standard
//! deviations. Every channel also carries white Gaussian noise and a slow
//! sinusoidal drift. Generation is single-threaded per session seed.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{block_lengths, BlockTiming, Condition, DataError, Session, SessionSet, TaskLabel, Trial};

/// Length of the sampled response kernel.
const HRF_KERNEL_S: f64 = 32.0;
/// Ratio of the undershoot gamma to the main gamma.
const HRF_UNDERSHOOT_RATIO: f64 = 1.0 / 6.0;
/// Delay of the undershoot peak after the main peak.
const HRF_UNDERSHOOT_LAG_S: f64 = 10.0;
const DRIFT_FREQ_HZ: (f64, f64) = (0.01, 0.03);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_channels: u16,
    /// Channels responding to both the RIGHT and LEFT tasks.
    pub task_channels: BTreeSet<u16>,
    /// Channels responding only to the RIGHT task.
    pub right_channels: BTreeSet<u16>,
    /// Channels responding only to the LEFT task.
    pub left_channels: BTreeSet<u16>,
    pub hrf_peak_delay_s: f64,
    /// Plateau response amplitude in units of the noise standard deviation.
    pub snr: f64,
    pub noise_sigma: f64,
    pub drift_amplitude: f64,
    pub condition: Condition,
    /// Amplitude multiplier applied under [`Condition::Aomi`].
    pub aomi_gain: f64,
    pub sample_rate_hz: f64,
    pub trials_per_session: usize,
    pub subject_id: String,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_channels: crate::DEFAULT_CHANNEL_COUNT,
            task_channels: BTreeSet::new(),
            right_channels: BTreeSet::new(),
            left_channels: BTreeSet::new(),
            hrf_peak_delay_s: 5.0,
            snr: 1.0,
            noise_sigma: 1.0,
            drift_amplitude: 0.5,
            condition: Condition::Mi,
            aomi_gain: 1.5,
            sample_rate_hz: crate::DEFAULT_SAMPLE_RATE_HZ,
            trials_per_session: 10,
            subject_id: "synthetic".into(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Config(m));
        if self.n_channels == 0 || self.n_channels > crate::DEFAULT_CHANNEL_COUNT {
            return err(format!("n_channels must be in 1..=45, got {}", self.n_channels));
        }
        for (name, set) in [
            ("task_channels", &self.task_channels),
            ("right_channels", &self.right_channels),
            ("left_channels", &self.left_channels),
        ] {
            if let Some(&bad) = set.iter().find(|&&c| c == 0 || c > self.n_channels) {
                return err(format!("{name} contains channel {bad} outside 1..={}", self.n_channels));
            }
        }
        if self.snr > 0.0 && !self.has_task_channels() {
            return err("snr > 0 requested but no task channels were given".into());
        }
        if !(4.0..=8.0).contains(&self.hrf_peak_delay_s) {
            return err(format!(
                "hrf_peak_delay_s must lie in [4, 8] s, got {}",
                self.hrf_peak_delay_s
            ));
        }
        if !(self.snr.is_finite() && self.snr >= 0.0) {
            return err(format!("snr must be non-negative, got {}", self.snr));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return err(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        if !(self.drift_amplitude.is_finite() && self.drift_amplitude >= 0.0) {
            return err(format!("drift_amplitude must be non-negative, got {}", self.drift_amplitude));
        }
        if !(self.aomi_gain.is_finite() && self.aomi_gain > 1.0) {
            return err(format!("aomi_gain must exceed 1, got {}", self.aomi_gain));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return err(format!("sample_rate_hz must be positive, got {}", self.sample_rate_hz));
        }
        Ok(())
    }

    pub fn has_task_channels(&self) -> bool {
        !(self.task_channels.is_empty() && self.right_channels.is_empty() && self.left_channels.is_empty())
    }

    /// Response amplitude for `channel` during a task block of `label`.
    fn amplitude(&self, channel: u16, label: TaskLabel) -> f64 {
        let responds = self.task_channels.contains(&channel)
            || (label == TaskLabel::Right && self.right_channels.contains(&channel))
            || (label == TaskLabel::Left && self.left_channels.contains(&channel));
        if !responds || !label.is_task() {
            return 0.0;
        }
        let gain = match self.condition {
            Condition::Mi => 1.0,
            Condition::Aomi => self.aomi_gain,
        };
        self.snr * self.noise_sigma * gain
    }
}

fn gamma_pdf(t: f64, shape: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * t.ln() - t - ln_gamma(shape)).exp()
}

/// Double-gamma response sampled at `sample_rate_hz`, normalised to unit sum
/// so that a sustained boxcar plateaus at 1.
///
/// The main lobe is a unit-scale gamma of shape `peak + 1`, whose mode is
/// `peak` seconds.
pub fn hrf_kernel(peak_delay_s: f64, sample_rate_hz: f64) -> Vec<f64> {
    let n = (HRF_KERNEL_S * sample_rate_hz + 1e-9).floor() as usize;
    let main = peak_delay_s + 1.0;
    let under = main + HRF_UNDERSHOOT_LAG_S;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate_hz;
            gamma_pdf(t, main) - HRF_UNDERSHOOT_RATIO * gamma_pdf(t, under)
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Boxcar over `[onset, onset + len)` convolved with `kernel`, evaluated on
/// `0..n` via prefix sums of the kernel.
fn boxcar_response(kernel: &[f64], onset: usize, len: usize, n: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(kernel.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in kernel {
        acc += v;
        prefix.push(acc);
    }
    // Sum of kernel[0..=j], saturating past the kernel end.
    let cum = |j: isize| -> f64 {
        if j < 0 {
            0.0
        } else {
            prefix[(j as usize + 1).min(kernel.len())]
        }
    };
    (0..n)
        .map(|i| {
            let i = i as isize;
            cum(i - onset as isize) - cum(i - onset as isize - len as isize)
        })
        .collect()
}

fn session_seed(base: u64, session: usize) -> u64 {
    // splitmix64 step keeps neighbouring seeds decorrelated.
    let mut z = base ^ (session as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate `sessions` synthetic sessions. Trials alternate RIGHT, LEFT.
pub fn generate_synthetic(
    config: &GeneratorConfig,
    sessions: usize,
    timing: BlockTiming,
) -> Result<SessionSet, DataError> {
    config.validate()?;
    timing.validate()?;
    if sessions == 0 {
        return Err(DataError::Config("at least one session is required".into()));
    }
    let fs = config.sample_rate_hz;
    let [pre, task, post] = block_lengths(&timing, fs);
    let n = pre + task + post;
    if n == 0 {
        return Err(DataError::Config("block timing yields zero samples per trial".into()));
    }
    let kernel = hrf_kernel(config.hrf_peak_delay_s, fs);
    let response = boxcar_response(&kernel, pre, task, n);
    let channel_ids: Vec<u16> = (1..=config.n_channels).collect();
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");

    let mut out = Vec::with_capacity(sessions);
    for s in 0..sessions {
        let seed = session_seed(config.seed, s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trials = Vec::with_capacity(config.trials_per_session);
        for t in 0..config.trials_per_session {
            let label = if t % 2 == 0 { TaskLabel::Right } else { TaskLabel::Left };
            let mut x = Array2::<f64>::zeros((channel_ids.len(), n));
            for (row, &ch) in channel_ids.iter().enumerate() {
                let freq = rng.random_range(DRIFT_FREQ_HZ.0..DRIFT_FREQ_HZ.1);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = config.amplitude(ch, label);
                for i in 0..n {
                    let time = i as f64 / fs;
                    let drift = config.drift_amplitude * (std::f64::consts::TAU * freq * time + phase).sin();
                    x[[row, i]] = amp * response[i] + drift + noise.sample(&mut rng);
                }
            }
            trials.push(Trial::new(x, label, fs, channel_ids.clone())?);
        }
        out.push(Session::with_montage(
            trials,
            timing,
            config.condition,
            config.subject_id.clone(),
            seed,
            channel_ids.clone(),
            fs,
        )?);
    }
    Ok(SessionSet::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{segment_trials, BlockKind};

    fn planted(task: &[u16], snr: f64) -> GeneratorConfig {
        GeneratorConfig {
            task_channels: task.iter().copied().collect(),
            snr,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let cfg = GeneratorConfig { seed: 7, ..planted(&[3, 9], 2.0) };
        let a = generate_synthetic(&cfg, 2, BlockTiming::default()).unwrap();
        let b = generate_synthetic(&cfg, 2, BlockTiming::default()).unwrap();
        assert_eq!(a, b);
        let bits = |s: &SessionSet| -> Vec<u64> {
            s.sessions
                .iter()
                .flat_map(|s| s.trials().iter())
                .flat_map(|t| t.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn empty_task_channels_with_signal_is_a_config_error() {
        let cfg = GeneratorConfig { snr: 5.0, ..GeneratorConfig::default() };
        assert!(matches!(
            generate_synthetic(&cfg, 1, BlockTiming::default()),
            Err(DataError::Config(_))
        ));
    }

    #[test]
    fn kernel_peaks_at_configured_delay() {
        for peak in [4.0, 5.0, 6.0, 8.0] {
            let h = hrf_kernel(peak, 14.28);
            let argmax = h
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            let t = argmax as f64 / 14.28;
            assert!((t - peak).abs() <= 1.0 / 14.28, "peak {peak}: argmax at {t}");
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    // Expected block means of the noiseless unit response for a 5 s peak and
    // 15/20/15 s timing, computed with an independent scipy convolution:
    // task 0.7953296630582168, rest (both blocks) 0.15013758023775467.
    #[test]
    fn noiseless_response_matches_reference_block_means() {
        let fs = 14.28;
        let [pre, task, post] = block_lengths(&BlockTiming::default(), fs);
        let r = boxcar_response(&hrf_kernel(5.0, fs), pre, task, pre + task + post);
        let task_mean: f64 = r[pre..pre + task].iter().sum::<f64>() / task as f64;
        let rest: Vec<f64> = r[..pre].iter().chain(&r[pre + task..]).copied().collect();
        let rest_mean = rest.iter().sum::<f64>() / rest.len() as f64;
        assert!((task_mean - 0.7953296630582168).abs() < 1e-9, "{task_mean}");
        assert!((rest_mean - 0.15013758023775467).abs() < 1e-9, "{rest_mean}");
        // causal: nothing before onset
        assert!(r[..pre].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planted_channel_task_mean_exceeds_rest_by_three_sigma() {
        let cfg = GeneratorConfig {
            drift_amplitude: 0.0,
            trials_per_session: 10,
            seed: 3,
            ..planted(&[3, 9], 5.0)
        };
        let set = generate_synthetic(&cfg, 1, BlockTiming::default()).unwrap();
        let segs = segment_trials(&set.sessions[0]).unwrap();
        let row = 2; // channel 3
        let mean_of = |kind: BlockKind| {
            let (s, n) = segs
                .iter()
                .filter(|g| g.kind == kind)
                .fold((0.0, 0usize), |(s, n), g| {
                    (s + g.samples.row(row).sum(), n + g.samples.ncols())
                });
            s / n as f64
        };
        let diff = mean_of(BlockKind::Task) - mean_of(BlockKind::Rest);
        let expected = 5.0 * (0.7953296630582168 - 0.15013758023775467);
        assert!(diff > 3.0, "difference {diff}");
        assert!((diff - expected).abs() < 0.15, "difference {diff} vs {expected}");
    }

    #[test]
    fn zero_snr_task_channels_look_like_rest_channels() {
        // Drift makes samples within a block dependent, so compare one mean
        // per trial (independent phases and noise).
        let cfg = GeneratorConfig {
            trials_per_session: 30,
            seed: 11,
            ..planted(&[3], 0.0)
        };
        let set = generate_synthetic(&cfg, 1, BlockTiming::default()).unwrap();
        let segs = segment_trials(&set.sessions[0]).unwrap();
        let block_means = |row: usize| -> Vec<f64> {
            segs.iter()
                .filter(|g| g.kind == BlockKind::Task)
                .map(|g| g.samples.row(row).mean().unwrap())
                .collect()
        };
        let (a, b) = (block_means(2), block_means(20));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let t = (ma - mb) / (var(&a, ma) / a.len() as f64 + var(&b, mb) / b.len() as f64).sqrt();
        assert!(t.abs() < 3.0, "welch t = {t}");
    }

    #[test]
    fn aomi_scales_task_amplitude() {
        let mut cfg = planted(&[1], 2.0);
        assert_eq!(cfg.amplitude(1, TaskLabel::Right), 2.0);
        cfg.condition = Condition::Aomi;
        assert_eq!(cfg.amplitude(1, TaskLabel::Left), 3.0);
        assert_eq!(cfg.amplitude(2, TaskLabel::Left), 0.0);
        assert_eq!(cfg.amplitude(1, TaskLabel::Rest), 0.0);
    }

    #[test]
    fn lateral_channels_respond_to_their_task_only() {
        let cfg = GeneratorConfig {
            right_channels: [4].into(),
            left_channels: [5].into(),
            ..GeneratorConfig::default()
        };
        assert!(cfg.amplitude(4, TaskLabel::Right) > 0.0);
        assert_eq!(cfg.amplitude(4, TaskLabel::Left), 0.0);
        assert!(cfg.amplitude(5, TaskLabel::Left) > 0.0);
        assert_eq!(cfg.amplitude(5, TaskLabel::Right), 0.0);
    }
}
