mod common;

use std::sync::Arc;

use vidsteg::labeling::{label_clip, segment_histogram, segments_of, FrameLabel, DEFAULT_THRESHOLD};
use vidsteg::media::{apd, prepare_pairs};
use vidsteg::synth::{load_stills, sample_corpus, SynthConfig};

#[test]
fn bundled_corpus_regenerates_exactly() {
    let regenerated = sample_corpus(&load_stills(&common::stills_dir()).unwrap(), &SynthConfig::default()).unwrap();
    let bundled = common::sample_clips();
    assert_eq!(regenerated.len(), bundled.len());
    for (r, b) in regenerated.iter().zip(&bundled) {
        assert_eq!(r.id(), b.id());
        assert_eq!(r.len(), b.len());
        for (x, y) in r.frames().iter().zip(b.frames()) {
            assert_eq!(&x.quantized(), y, "{} differs", r.id());
        }
    }
}

#[test]
fn corpus_shape() {
    let clips = common::sample_clips();
    assert_eq!(clips.len(), 16);
    assert!(clips.iter().all(|c| c.len() == 24 && c.dims() == (128, 128)));
}

#[test]
fn corpus_has_both_kinds_of_frames() {
    let mut refs = 0;
    let mut res = 0;
    let mut segments = Vec::new();
    for clip in common::sample_clips() {
        let l = label_clip(Arc::clone(&clip), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(l.labels[0], FrameLabel::Reference);
        refs += l.reference_count();
        res += l.residual_count();
        for (t, &r) in l.reference_index.iter().enumerate() {
            assert!(r <= t);
            assert_eq!(l.reference_apd[t], apd(&clip.frames()[t], &clip.frames()[r]).unwrap());
        }
        segments.extend(segments_of(&l));
    }
    assert!(res > refs, "{refs} references, {res} residuals");
    let hist = segment_histogram(&segments);
    assert_eq!(hist.iter().map(|(len, n)| len * n).sum::<usize>(), 16 * 24);
}

#[test]
fn default_split_gives_eight_training_clips() {
    let data = prepare_pairs(common::sample_clips(), [0.5, 0.25, 0.25], 7).unwrap();
    assert_eq!(data.split.train.len(), 8);
    assert_eq!(data.split.validation.len(), 4);
    assert_eq!(data.split.test.len(), 4);
    assert_eq!(data.train.len(), 8);
    for p in data.train.iter().chain(&data.test) {
        assert_ne!(p.cover.id(), p.secret.id());
    }
}
