mod common;

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidsteg::labeling::FrameLabel;
use vidsteg::media::Frame;
use vidsteg::nets::{ArchConfig, HNet, ModelBundle, RNet, ENCODER_STAGES};
use vidsteg_nn::gradcheck::check_layer;
use vidsteg_nn::{Layer, Mode};

use common::{hnet_params_by_hand, rnet_params_by_hand};

#[test]
fn hand_counts_match_frozen_table_totals() {
    // Computed once from the architecture tables in a separate script.
    assert_eq!(hnet_params_by_hand(64), 41_837_699);
    assert_eq!(rnet_params_by_hand(50), 686_903);
    assert_eq!(hnet_params_by_hand(8), 656_531);
    assert_eq!(rnet_params_by_hand(4), 4_907);
    assert_eq!(rnet_params_by_hand(8), 18_515);
}

#[test]
fn first_layer_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = HNet::<f32>::new(&mut rng, 64);
    let mut first_conv = 0;
    h.visit(&mut |name, p| {
        if name.starts_with("enc.0.0.") {
            first_conv += p.len();
        }
    });
    assert_eq!(first_conv, 4 * 4 * 6 * 64 + 64);
    let r = RNet::<f32>::new(&mut rng, 50);
    let mut k3 = 0;
    r.visit(&mut |name, p| {
        if name.starts_with("0.k3.") {
            k3 += p.len();
        }
    });
    assert_eq!(k3, 3 * 3 * 3 * 50 + 50);
}

#[test]
fn full_width_parameter_counts() {
    let bundle = ModelBundle::new(ArchConfig::paper(), 0);
    assert_eq!(bundle.ref_hnet.num_parameters(), hnet_params_by_hand(64));
    assert_eq!(bundle.res_hnet.num_parameters(), hnet_params_by_hand(64));
    assert_eq!(bundle.ref_rnet.num_parameters(), rnet_params_by_hand(50));
    assert_eq!(bundle.res_rnet.num_parameters(), rnet_params_by_hand(50));
}

#[test]
fn toy_parameter_counts() {
    let bundle = ModelBundle::new(ArchConfig::toy(), 0);
    assert_eq!(bundle.ref_hnet.num_parameters(), hnet_params_by_hand(8));
    assert_eq!(bundle.ref_rnet.num_parameters(), rnet_params_by_hand(8));
}

#[test]
fn forward_shapes_at_128_and_256() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = HNet::<f32>::new(&mut rng, 4);
    let r = RNet::<f32>::new(&mut rng, 3);
    for (hh, ww) in [(128, 128), (256, 256), (128, 256)] {
        let x = Array4::from_shape_fn((2, 6, hh, ww), |_| rng.random::<f32>());
        let t = h.infer_traced(&x, None);
        assert_eq!(t.encoder_outputs[ENCODER_STAGES - 1].dim(), (2, 32, hh / 128, ww / 128));
        assert_eq!(t.output.dim(), (2, 3, hh, ww));
        assert!(t.output.iter().all(|v| (0.0..=1.0).contains(v)));
        let (blocks, out) = r.infer_traced(&t.output);
        assert_eq!(blocks.len(), 5);
        assert!(blocks.iter().all(|b| b.dim() == (2, 6, hh, ww)));
        assert_eq!(out.dim(), (2, 3, hh, ww));
    }
}

#[test]
fn full_width_rnet_block_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = RNet::<f32>::new(&mut rng, 50);
    let x = Array4::from_elem((1, 3, 16, 16), 0.5f32);
    let (blocks, out) = r.infer_traced(&x);
    assert!(blocks.iter().all(|b| b.dim().1 == 100));
    assert_eq!(out.dim(), (1, 3, 16, 16));
}

#[test]
fn zeroing_one_skip_changes_only_its_concat_site() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = HNet::<f64>::new(&mut rng, 2);
    let x = Array4::from_shape_fn((1, 6, 128, 128), |_| rng.random::<f64>());
    let base = h.infer_traced(&x, None);
    for k in 0..ENCODER_STAGES - 1 {
        let ablated = h.infer_traced(&x, Some(k));
        let site = (0..ENCODER_STAGES).find(|&j| HNet::<f64>::skip_source(j) == Some(k)).unwrap();
        // Stage numbering in the tables is 1-based: decoder row 8 + site
        // concatenates encoder row 1 + k, i.e. site + k == 6.
        assert_eq!(site + k, ENCODER_STAGES - 1);
        for j in 0..site {
            assert_eq!(base.decoder_inputs[j], ablated.decoder_inputs[j], "skip {k} leaked into decoder {j}");
        }
        let main = base.decoder_inputs[site].dim().1 / 2;
        let b = &base.decoder_inputs[site];
        let a = &ablated.decoder_inputs[site];
        for c in 0..b.dim().1 {
            let same = b.index_axis(ndarray::Axis(1), c) == a.index_axis(ndarray::Axis(1), c);
            assert_eq!(same, c < main, "skip {k}, decoder {site}, channel {c}");
        }
        assert_eq!(base.encoder_outputs, ablated.encoder_outputs);
    }
    assert!(h.infer_traced(&x, Some(ENCODER_STAGES - 1)).decoder_inputs == base.decoder_inputs);
}

#[test]
fn micro_hnet_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut h = HNet::<f64>::new(&mut rng, 2);
    let x = Array4::from_shape_fn((2, 6, 128, 128), |_| rng.random::<f64>());
    let report = check_layer(&mut h, &x, Mode::Train, 1e-6, 100, 7);
    assert!(report.checked >= 100);
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn micro_rnet_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut r = RNet::<f64>::new(&mut rng, 2);
    let x = Array4::from_shape_fn((2, 3, 12, 13), |_| rng.random::<f64>());
    let report = check_layer(&mut r, &x, Mode::Train, 1e-6, 100, 8);
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

fn frame(seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Frame::from_fn(128, 128, |_, _, _| rng.random()).unwrap()
}

#[test]
fn branch_parameters_are_disjoint() {
    let mut bundle = ModelBundle::new(ArchConfig { hnet_base: 2, rnet_width: 2, ..ArchConfig::toy() }, 5);
    let cover = frame(1);
    let secret = frame(2);
    let hide = |b: &ModelBundle, l| b.hide(l, &[&cover], &[&secret]).unwrap().remove(0);
    let reveal = |b: &ModelBundle, l, c: &Frame| b.reveal(l, &[c]).unwrap().remove(0);
    let ref_before = hide(&bundle, FrameLabel::Reference);
    let res_before = hide(&bundle, FrameLabel::Residual);
    let ref_dec_before = reveal(&bundle, FrameLabel::Reference, &ref_before);
    let res_dec_before = reveal(&bundle, FrameLabel::Residual, &ref_before);

    bundle.ref_hnet.visit_mut(&mut |_, p| p.value.iter_mut().for_each(|v| *v += 0.05));
    assert_ne!(hide(&bundle, FrameLabel::Reference), ref_before);
    assert_eq!(hide(&bundle, FrameLabel::Residual), res_before);

    bundle.res_rnet.visit_mut(&mut |_, p| p.value.iter_mut().for_each(|v| *v *= 1.5));
    assert_eq!(reveal(&bundle, FrameLabel::Reference, &ref_before), ref_dec_before);
    assert_ne!(reveal(&bundle, FrameLabel::Residual, &ref_before), res_dec_before);
}
