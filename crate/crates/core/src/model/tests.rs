use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::embeddings::Matrix;
use crate::error::Error;
use crate::losses::{cross_entropy, ctc_loss, joint_loss};

fn tiny() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        d_ff: 4,
        vocab_size: 5,
        n_speakers: 3,
        use_speaker_branch: true,
        dropout: 0.0,
    }
}

fn random_features(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

struct Terms {
    ctc: bool,
    ce: bool,
}

/// Loss and its gradient for every parameter, via one tape.
fn loss_and_grads(model: &JointModel<f64>, x: &Matrix, label: &[usize], speaker: usize, terms: &Terms) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mask = vec![true; x.rows];
    let out = model.forward_item(&mut tape, &b, x, &mask, &ForwardOptions::default(), &mut rng).unwrap();
    let logits = tape.value(out.speech_logits).values.clone();
    let spk = tape.value(out.speaker_logits.unwrap()).values.clone();
    let c = ctc_loss(&logits, model.config.vocab_size, label, 0).unwrap();
    let (ce, ce_grad) = cross_entropy(&spk, speaker).unwrap();
    let zeros_s = vec![0.0; logits.len()];
    let zeros_k = vec![0.0; spk.len()];
    let g1 = if terms.ctc { &c.grad } else { &zeros_s };
    let g2 = if terms.ce { &ce_grad } else { &zeros_k };
    tape.backward(&[(out.speech_logits, g1), (out.speaker_logits.unwrap(), g2)]).unwrap();
    let loss = if terms.ctc { c.loss } else { 0.0 } + if terms.ce { ce } else { 0.0 };
    (loss, b.vars().iter().map(|&v| tape.grad(v).to_vec()).collect())
}

#[test]
fn every_parameter_block_matches_finite_differences() {
    let model = JointModel::<f64>::init(tiny(), 3).unwrap();
    let x = random_features(6, 8, 1);
    let (label, speaker) = ([1usize, 2, 2], 1usize);
    let all = Terms { ctc: true, ce: true };
    let (_, grads) = loss_and_grads(&model, &x, &label, speaker, &all);
    let h = 1e-5;
    for (p, name) in model.names().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..model.tensors()[p].len() {
            let mut plus = model.clone();
            plus.tensors_mut()[p].values[i] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[p].values[i] -= h;
            let lp = loss_and_grads(&plus, &x, &label, speaker, &all).0;
            let lm = loss_and_grads(&minus, &x, &label, speaker, &all).0;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads[p][i];
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "{name}: relative error {worst}");
    }
}

#[test]
fn joint_gradient_is_the_sum_of_term_gradients() {
    let model = JointModel::<f64>::init(tiny(), 5).unwrap();
    let x = random_features(5, 8, 2);
    let (lj, gj) = loss_and_grads(&model, &x, &[3, 1], 2, &Terms { ctc: true, ce: true });
    let (lc, gc) = loss_and_grads(&model, &x, &[3, 1], 2, &Terms { ctc: true, ce: false });
    let (le, ge) = loss_and_grads(&model, &x, &[3, 1], 2, &Terms { ctc: false, ce: true });
    assert!((lj - joint_loss(lc, Some(le))).abs() < 1e-12);
    for ((a, b), c) in gj.iter().zip(&gc).zip(&ge) {
        for ((x, y), z) in a.iter().zip(b).zip(c) {
            assert!((x - (y + z)).abs() < 1e-12);
        }
    }
}

#[test]
fn batch_shapes_for_variant2() {
    let model = JointModel::<f32>::init(ModelConfig::preset(Preset::Variant2), 0).unwrap();
    let a = random_features(49, 704, 1);
    let b = random_features(49, 704, 2);
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let masks = vec![vec![true; 49]; 2];
    let outs = model.forward_batch(&mut tape, &bound, &[&a, &b], &masks, &ForwardOptions::default()).unwrap();
    assert_eq!(outs.len(), 2);
    for o in outs {
        assert_eq!(tape.value(o.encoded).shape, vec![49, 512]);
        assert_eq!(tape.value(o.speech_logits).shape, vec![49, 30]);
        assert_eq!(tape.value(o.speaker_logits.unwrap()).shape, vec![1, 200]);
    }
}

#[test]
fn initial_output_scale_is_sane() {
    let model = JointModel::<f64>::init(ModelConfig::joint(2, 64), 9).unwrap();
    let x = random_features(30, 704, 4);
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = model.encode(&mut tape, &b, &x, &[true; 30], &ForwardOptions::default(), &mut rng).unwrap();
    let std = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let xin: Vec<f64> = x.data.iter().map(|&v| v as f64).collect();
    let ratio = std(&tape.value(enc).values) / std(&xin);
    assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn padded_frames_do_not_leak() {
    let model = JointModel::<f64>::init(tiny(), 1).unwrap();
    let mut x = random_features(7, 8, 3);
    let mask: Vec<bool> = (0..7).map(|i| i < 4).collect();
    let run = |x: &Matrix| {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = model.forward_item(&mut tape, &b, x, &mask, &ForwardOptions::default(), &mut rng).unwrap();
        (
            tape.value(o.encoded).values[..4 * 4].to_vec(),
            tape.value(o.speaker_logits.unwrap()).values.clone(),
        )
    };
    let before = run(&x);
    for v in &mut x.data[4 * 8..] {
        *v = *v * 10.0 + 3.0;
    }
    let after = run(&x);
    for (a, b) in before.0.iter().zip(&after.0).chain(before.1.iter().zip(&after.1)) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn single_frame_attention_is_the_value_path() {
    let model = JointModel::<f64>::init(tiny(), 2).unwrap();
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let x = tape.leaf(DiffArray::constant(1, 4, vec![0.3, -0.2, 0.9, 0.1]).unwrap());
    let a = model.multi_head_attention(&mut tape, &b, 0, x, &[true]).unwrap();
    let v = tape.linear(x, b.get("layers.0.attn.v.weight"), b.get("layers.0.attn.v.bias")).unwrap();
    let o = tape.linear(v, b.get("layers.0.attn.o.weight"), b.get("layers.0.attn.o.bias")).unwrap();
    assert_eq!(tape.value(a).values, tape.value(o).values);
    assert!(matches!(model.multi_head_attention(&mut tape, &b, 0, x, &[false]), Err(Error::Domain(_))));
}

#[test]
fn attention_is_permutation_equivariant_without_positions() {
    let model = JointModel::<f64>::init(tiny(), 4).unwrap();
    let x = random_features(5, 8, 6);
    let perm = [3usize, 0, 4, 1, 2];
    let xp = Matrix::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let enc = |x: &Matrix, positional: bool| {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = ForwardOptions { positional, ..Default::default() };
        let e = model.encode(&mut tape, &b, x, &[true; 5], &opts, &mut rng).unwrap();
        tape.value(e).values.clone()
    };
    let (a, b) = (enc(&x, false), enc(&xp, false));
    for (k, &i) in perm.iter().enumerate() {
        for j in 0..4 {
            assert!((b[k * 4 + j] - a[i * 4 + j]).abs() < 1e-12);
        }
    }
    let (a, b) = (enc(&x, true), enc(&xp, true));
    let differs = perm
        .iter()
        .enumerate()
        .any(|(k, &i)| (0..4).any(|j| (b[k * 4 + j] - a[i * 4 + j]).abs() > 1e-6));
    assert!(differs);
}

#[test]
fn speaker_head_gating_and_pooling_identity() {
    let model = JointModel::<f64>::init(tiny(), 8).unwrap();
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let frame = [0.5, -1.0, 0.25, 2.0];
    let many = tape.leaf(DiffArray::constant(6, 4, frame.repeat(6)).unwrap());
    let one = tape.leaf(DiffArray::constant(1, 4, frame.to_vec()).unwrap());
    let a = model.speaker_head(&mut tape, &b, many, &[true; 6]).unwrap();
    let c = model.speaker_head(&mut tape, &b, one, &[true]).unwrap();
    for (x, y) in tape.value(a).values.iter().zip(&tape.value(c).values) {
        assert!((x - y).abs() < 1e-12);
    }

    let ab = JointModel::<f64>::init(tiny().ablation(), 8).unwrap();
    let mut tape = Tape::new();
    let b = ab.bind(&mut tape);
    let enc = tape.leaf(DiffArray::constant(1, 4, frame.to_vec()).unwrap());
    assert!(matches!(ab.speaker_head(&mut tape, &b, enc, &[true]), Err(Error::Config(_))));
    let inf = ab.infer(&random_features(3, 512, 1)).unwrap();
    assert!(inf.speaker_logits.is_none());
}

#[test]
fn init_is_seeded_and_counted() {
    let a = JointModel::<f32>::init(tiny(), 1).unwrap();
    let b = JointModel::<f32>::init(tiny(), 1).unwrap();
    let c = JointModel::<f32>::init(tiny(), 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.n_parameters(), tiny().parameter_count());
    assert!(a.param("layers.0.ln1.gain").unwrap().values.iter().all(|&v| v == 1.0));
    assert!(a.param("input.bias").unwrap().values.iter().all(|&v| v == 0.0));
    let w = a.param("input.weight").unwrap();
    let bound = (6.0f32 / 12.0).sqrt();
    assert!(w.values.iter().all(|v| v.abs() <= bound));
    let v2 = JointModel::<f32>::init(ModelConfig::preset(Preset::Variant2), 0).unwrap();
    assert_eq!(v2.n_parameters(), ModelConfig::preset(Preset::Variant2).parameter_count());
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jck");
    let mut cfg = ModelConfig::joint(1, 16);
    cfg.n_speakers = 4;
    let model = JointModel::<f32>::init(cfg.clone(), 11).unwrap();
    let speakers: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
    save_checkpoint(&path, &model, &speakers).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.speakers, speakers);
    for (a, b) in model.tensors().iter().zip(ck.model.tensors()) {
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let x = random_features(9, 704, 5);
    assert_eq!(model.infer(&x).unwrap(), ck.model.infer(&x).unwrap());

    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(parse_checkpoint(&bytes[..bytes.len() - 20]), Err(Error::Format(_))));
    let mut flipped = bytes.clone();
    flipped[100] ^= 4;
    assert!(matches!(parse_checkpoint(&flipped), Err(Error::Format(_))));

    let mut other = cfg.clone();
    other.n_layers = 2;
    assert!(matches!(load_checkpoint_as(&path, &other), Err(Error::Config(_))));
    assert!(load_checkpoint_as(&path, &cfg).is_ok());
}

#[test]
fn variant2_checkpoint_refuses_variant3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v2.jck");
    let model = JointModel::<f32>::init(ModelConfig::preset(Preset::Variant2), 0).unwrap();
    save_checkpoint(&path, &model, &[]).unwrap();
    let err = load_checkpoint_as(&path, &ModelConfig::preset(Preset::Variant3));
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn forward_is_deterministic() {
    let model = JointModel::<f32>::init(ModelConfig::joint(1, 16), 3).unwrap();
    let x = random_features(12, 704, 8);
    let a = model.infer(&x).unwrap();
    let b = model.infer(&x).unwrap();
    assert!(a.speech_logits.iter().zip(&b.speech_logits).all(|(x, y)| x.to_bits() == y.to_bits()));
}
