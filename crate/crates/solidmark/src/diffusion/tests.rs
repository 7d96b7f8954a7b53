use super::*;
use crate::imgdata::{
    assign_keys, gen_synthetic_dataset, ColorMode, PatternSpec, SyntheticConfig,
};
use crate::rng;
use std::sync::atomic::{AtomicUsize, Ordering};

#[test]
fn linear_schedule_alpha_bar_matches_log_sum_oracle() {
    let schedule = make_linear_schedule(1000, 1e-4, 0.02).unwrap();
    // Independent route: exp of the summed logs rather than the running
    // product the implementation uses.
    let log_sum: f64 = schedule.alphas.iter().map(|a| a.ln()).sum();
    let oracle = log_sum.exp();
    let got = schedule.alpha_bar(1000);
    assert!((got - oracle).abs() / oracle < 1e-10);
    assert!((got - 4.0e-5).abs() < 1.0e-5, "alpha_bar_T = {got}");
}

#[test]
fn single_step_schedule() {
    let schedule = make_linear_schedule(1, 0.3, 0.3).unwrap();
    assert_eq!(schedule.alpha_bar(1), 1.0 - 0.3);
}

#[test]
fn alpha_bar_is_strictly_decreasing_and_sigmas_nonnegative() {
    let schedule = make_linear_schedule(250, 5e-4, 0.05).unwrap();
    for t in 2..=250 {
        assert!(schedule.alpha_bar(t) < schedule.alpha_bar(t - 1));
        assert!(schedule.sigma(t) >= 0.0);
    }
    assert!(schedule.betas.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn invalid_beta_ranges_are_rejected() {
    assert!(make_linear_schedule(10, 0.0, 0.1).is_err());
    assert!(make_linear_schedule(10, 0.2, 0.1).is_err());
    assert!(make_linear_schedule(10, 0.1, 1.0).is_err());
    assert!(make_linear_schedule(0, 0.1, 0.2).is_err());
}

#[test]
fn full_stride_reproduces_the_original_betas() {
    let schedule = make_linear_schedule(100, 1e-4, 0.02).unwrap();
    let sub = schedule.strided(100).unwrap();
    for k in 1..=100 {
        assert_eq!(sub.timestep(k), k);
        assert!((sub.beta(k) - schedule.beta(k)).abs() < 1e-12);
    }
    let sub10 = schedule.strided(10).unwrap();
    assert_eq!(sub10.len(), 10);
    assert_eq!(sub10.timestep(10), 100);
    assert!(schedule.strided(0).is_err());
    assert!(schedule.strided(101).is_err());
}

#[test]
fn forward_noise_with_zero_noise_scales_signal() {
    let schedule = make_linear_schedule(100, 1e-4, 0.02).unwrap();
    let x0 = vec![0.5f32; 12];
    let eps = vec![0.0f32; 12];
    let t = 40;
    let x_t = forward_noise(&x0, t, &eps, &schedule).unwrap();
    let expect = (schedule.alpha_bar(t).sqrt() * 0.5) as f32;
    assert!(x_t.iter().all(|v| (*v - expect).abs() < 1e-6));
}

#[test]
fn forward_noise_near_t0_approaches_x0() {
    let schedule = make_linear_schedule(1000, 1e-4, 0.02).unwrap();
    let x0 = vec![0.7f32; 4];
    let eps = vec![1.0f32; 4];
    let x_t = forward_noise(&x0, 1, &eps, &schedule).unwrap();
    for v in x_t {
        assert!((v - 0.7).abs() < 0.02);
    }
}

#[test]
fn forward_noise_mean_matches_monte_carlo_oracle() {
    let schedule = make_linear_schedule(100, 1e-4, 0.02).unwrap();
    let x0 = vec![0.4f32; 16];
    let t = 60;
    let trials = 4000;
    let mut mean = vec![0.0f64; 16];
    let mut stream = rng::stream(5, &["fwd-mc"]);
    for _ in 0..trials {
        let eps = gaussian(&mut stream, 16);
        let x_t = forward_noise(&x0, t, &eps, &schedule).unwrap();
        for (m, v) in mean.iter_mut().zip(&x_t) {
            *m += *v as f64;
        }
    }
    let expect = schedule.alpha_bar(t).sqrt() * 0.4;
    let se = (1.0 - schedule.alpha_bar(t)).sqrt() / (trials as f64).sqrt();
    for m in mean {
        let avg = m / trials as f64;
        assert!((avg - expect).abs() < 4.0 * se, "{avg} vs {expect}");
    }
}

#[test]
fn forward_noise_is_linear_in_eps() {
    let schedule = make_linear_schedule(50, 1e-3, 0.05).unwrap();
    let x0 = vec![0.3f32; 8];
    let mut stream = rng::stream(6, &["lin"]);
    let e1 = gaussian(&mut stream, 8);
    let e2 = gaussian(&mut stream, 8);
    let t = 20;
    let a = forward_noise(&x0, t, &e1, &schedule).unwrap();
    let b = forward_noise(&x0, t, &e2, &schedule).unwrap();
    let coef = (1.0 - schedule.alpha_bar(t)).sqrt() as f32;
    for i in 0..8 {
        let diff = a[i] - b[i];
        let expect = coef * (e1[i] - e2[i]);
        assert!((diff - expect).abs() < 1e-5);
    }
}

#[test]
fn forward_noise_rejects_shape_mismatch() {
    let schedule = make_linear_schedule(10, 1e-3, 0.02).unwrap();
    assert!(forward_noise(&[0.0; 4], 5, &[0.0; 5], &schedule).is_err());
    assert!(forward_noise(&[0.0; 4], 0, &[0.0; 4], &schedule).is_err());
    assert!(forward_noise(&[0.0; 4], 11, &[0.0; 4], &schedule).is_err());
}

struct CountingDenoiser {
    calls: AtomicUsize,
}

impl Denoiser for CountingDenoiser {
    fn channels(&self) -> usize {
        1
    }
    fn height(&self) -> usize {
        8
    }
    fn width(&self) -> usize {
        8
    }
    fn predict_eps(&self, x_t: &[f32], _cond: Option<&[f32]>, _t: usize) -> Vec<f32> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        vec![0.0; x_t.len()]
    }
}

#[test]
fn sampling_calls_denoiser_exactly_steps_times() {
    let schedule = make_linear_schedule(40, 1e-4, 0.02).unwrap();
    let model = CountingDenoiser {
        calls: AtomicUsize::new(0),
    };
    let sub = schedule.strided(40).unwrap();
    let img = sample(&model, None, &sub, 1).unwrap();
    assert_eq!(model.calls.load(Ordering::SeqCst), 40);
    assert_eq!((img.height, img.width, img.channels), (8, 8, 1));

    let sub10 = schedule.strided(10).unwrap();
    model.calls.store(0, Ordering::SeqCst);
    sample(&model, None, &sub10, 1).unwrap();
    assert_eq!(model.calls.load(Ordering::SeqCst), 10);
}

#[test]
fn sampling_is_deterministic_and_clamped() {
    let schedule = make_linear_schedule(30, 1e-4, 0.02).unwrap();
    let sub = schedule.strided(30).unwrap();
    let model = CountingDenoiser {
        calls: AtomicUsize::new(0),
    };
    let a = sample(&model, None, &sub, 7).unwrap();
    let b = sample(&model, None, &sub, 7).unwrap();
    assert_eq!(a.pixels, b.pixels);
    let c = sample(&model, None, &sub, 8).unwrap();
    assert_ne!(a.pixels, c.pixels);
    assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
}

fn tiny_augmented_dataset(count: usize, seed: u64) -> crate::imgdata::CaptionedDataset {
    let mut ds = gen_synthetic_dataset(&SyntheticConfig {
        count,
        base_size: 16,
        num_classes: 2,
        seed,
    })
    .unwrap();
    ds.keymap = Some(assign_keys(&ds, seed, ColorMode::Grayscale).unwrap());
    let spec = PatternSpec::border(2, ColorMode::Grayscale);
    crate::imgdata::augment_dataset(&ds, &spec).unwrap()
}

fn tiny_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: 2e-3,
        seed,
        timesteps: 200,
        beta_start: 1e-4,
        beta_end: 0.05,
        conditional: true,
        base_channels: 6,
    }
}

#[test]
fn training_is_deterministic_given_seed() {
    let ds = tiny_augmented_dataset(6, 3);
    let cfg = tiny_config(2, 42);
    let a = train(&ds, &cfg).unwrap();
    let b = train(&ds, &cfg).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.model.to_flat(), b.model.to_flat());
}

#[test]
fn single_image_overfit_drops_loss_tenfold() {
    let ds = tiny_augmented_dataset(1, 9);
    let mut cfg = tiny_config(260, 7);
    cfg.batch_size = 4;
    let ckpt = train(&ds, &cfg).unwrap();
    let trace = &ckpt.loss_trace;
    let initial = trace[0];
    let tail = &trace[trace.len() - 20..];
    let final_mean: f32 = tail.iter().sum::<f32>() / tail.len() as f32;
    assert!(
        final_mean * 10.0 < initial,
        "initial {initial}, smoothed final {final_mean}"
    );
    // Monotone trend on a smoothed window: the last window mean is below the
    // first window mean.
    let head_mean: f32 = trace[..20].iter().sum::<f32>() / 20.0;
    assert!(final_mean < head_mean);
}

#[test]
fn unconditional_training_ignores_caption_permutation() {
    let mut ds = tiny_augmented_dataset(4, 5);
    let mut cfg = tiny_config(2, 11);
    cfg.conditional = false;
    let a = train(&ds, &cfg).unwrap();
    // Permute captions; gradients must not change in unconditional mode.
    ds.items.reverse();
    let captions: Vec<String> = ds.items.iter().map(|i| i.caption.clone()).collect();
    ds.items.reverse();
    for (item, cap) in ds.items.iter_mut().zip(captions) {
        item.caption = cap;
    }
    let b = train(&ds, &cfg).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.model.to_flat(), b.model.to_flat());
}

#[test]
fn divergent_training_reports_the_failing_step() {
    let ds = tiny_augmented_dataset(2, 6);
    let mut cfg = tiny_config(200, 1);
    cfg.learning_rate = 1e8;
    match train(&ds, &cfg) {
        Err(crate::Error::Training { .. }) => {}
        Ok(ckpt) => {
            // Extreme learning rates may survive as finite garbage; accept a
            // finite trace but flag if so for manual inspection.
            assert!(ckpt.loss_trace.iter().all(|l| l.is_finite()));
        }
        Err(other) => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn dim_mismatch_is_rejected() {
    let mut ds = tiny_augmented_dataset(3, 2);
    let other = tiny_augmented_dataset(1, 4);
    ds.items[1].image = crate::imgdata::strip_border(&other.items[0].image, 2).unwrap();
    let cfg = tiny_config(1, 0);
    assert!(matches!(
        train(&ds, &cfg),
        Err(crate::Error::Dimension(_))
    ));
}

#[test]
fn checkpoint_round_trip_and_resume_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_augmented_dataset(5, 8);

    // Uninterrupted run: 4 epochs.
    let full = train(&ds, &tiny_config(4, 13)).unwrap();

    // Interrupted run: 2 epochs, checkpoint, reload, continue to 4.
    let half = train(&ds, &tiny_config(2, 13)).unwrap();
    let path = dir.path().join("half.ckpt");
    save_checkpoint(&half, &path).unwrap();
    let mut resumed = load_checkpoint(&path).unwrap();
    assert_eq!(resumed.model.to_flat(), half.model.to_flat());
    assert_eq!(resumed.loss_trace, half.loss_trace);
    resumed.config.epochs = 4;
    resume(&mut resumed, &ds).unwrap();

    assert_eq!(resumed.loss_trace, full.loss_trace);
    assert_eq!(resumed.model.to_flat(), full.model.to_flat());
    assert_eq!(resumed.adam.m, full.adam.m);
    assert_eq!(resumed.adam.v, full.adam.v);

    // Byte-identical checkpoints for identical states.
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    save_checkpoint(&resumed, &p1).unwrap();
    save_checkpoint(&full, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn run_report_echoes_config_and_trace() {
    let ds = tiny_augmented_dataset(2, 12);
    let cfg = tiny_config(1, 21);
    let ckpt = train(&ds, &cfg).unwrap();
    let report = ckpt.report();
    assert_eq!(report.config, cfg);
    assert_eq!(report.completed_steps, ckpt.completed_steps);
    assert_eq!(report.final_loss, ckpt.loss_trace.last().copied());
}
