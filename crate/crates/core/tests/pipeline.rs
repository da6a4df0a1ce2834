use nucseg_core::synthetic::{generate, SynthParams};
use nucseg_core::{aji, segment, ChannelMode, Error, PipelineConfig, RgbImage};

fn small(seed: u64) -> SynthParams {
    SynthParams { width: 150, height: 150, count: 15, ..SynthParams::with_seed(seed) }
}

#[test]
fn synthetic_tiles_segment_well() {
    for seed in 100..104 {
        let syn = generate(&small(seed)).unwrap();
        let seg = segment(&syn.image, &PipelineConfig::default()).unwrap();
        let score = aji(&syn.labels, &seg.labels).unwrap();
        assert!(score > 0.7, "seed {seed}: AJI {score}");
        assert!(seg.refine.converged);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let syn = generate(&small(7)).unwrap();
    let cfg = PipelineConfig::default();
    let a = segment(&syn.image, &cfg).unwrap();
    let b = segment(&syn.image, &cfg).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.mask, b.mask);
    assert_eq!(a.records, b.records);
}

#[test]
fn blank_slide_has_no_nuclei() {
    let img = RgbImage::filled(120, 80, [236, 220, 230]).unwrap();
    let seg = segment(&img, &PipelineConfig::default()).unwrap();
    assert_eq!(seg.labels.count, 0);
    assert_eq!(seg.degenerate_channels, vec![0, 1, 2]);
}

#[test]
fn image_smaller_than_one_block() {
    let syn = generate(&SynthParams {
        width: 40,
        height: 36,
        count: 1,
        radius_min: 8.0,
        radius_max: 10.0,
        ..SynthParams::with_seed(2)
    })
    .unwrap();
    let seg = segment(&syn.image, &PipelineConfig::default()).unwrap();
    assert_eq!(seg.labels.count, 1);
    assert!(aji(&syn.labels, &seg.labels).unwrap() > 0.8);
}

#[test]
fn lightness_channel_also_segments() {
    let syn = generate(&small(11)).unwrap();
    let seg = segment(&syn.image, &PipelineConfig::default().with_channel(ChannelMode::L)).unwrap();
    assert!(aji(&syn.labels, &seg.labels).unwrap() > 0.7);
}

#[test]
fn invalid_config_is_rejected() {
    let img = RgbImage::filled(10, 10, [1, 2, 3]).unwrap();
    let cfg = PipelineConfig { contrast_low: 0.9, contrast_high: 0.1, ..PipelineConfig::default() };
    assert!(matches!(segment(&img, &cfg), Err(Error::Config { .. })));
}
