//! Acceptance harness: one PASS/FAIL line per criterion, run in parallel.
//!
//! `cargo test --test acceptance` exits non-zero when any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use joint_asr::audio::{bandpass_bank, envelope, formant_tracks, stft, Waveform, Window, DEFAULT_ENVELOPE_CUTOFF_HZ};
use joint_asr::augment::{make_babble, mix_at_snr, noise_vocode, sine_wave_speech, SnrSpec, VocodeSpec, SINE_TRACKS};
use joint_asr::corpus::{synth_corpus, synth_vowel, VowelSpec};
use joint_asr::embeddings::Matrix;
use joint_asr::experiments::{eval_items_from_corpus, run_babble, BabbleOptions, ResultTable, Scorer};
use joint_asr::losses::{cer, ctc_loss, cross_entropy, edit_counts, min_frames, wer};
use joint_asr::model::{ForwardOptions, JointModel, ModelConfig, Tape};
use joint_asr::training::{evaluate, train, AdamConfig, Dataset, EarlyStop, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn pearson(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&x| x as f64).sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    cov / (va * vb).sqrt()
}

// ---------------------------------------------------------------- CTC

fn brute_force_ctc(logits: &[f64], k: usize, label: &[usize]) -> f64 {
    let t = logits.len() / k;
    let probs: Vec<f64> = logits
        .chunks(k)
        .flat_map(|row| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            row.iter().map(move |v| v.exp() / z)
        })
        .collect();
    let mut total = 0.0;
    for code in 0..k.pow(t as u32) {
        let mut c = code;
        let path: Vec<usize> = (0..t)
            .map(|_| {
                let s = c % k;
                c /= k;
                s
            })
            .collect();
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &s in &path {
            if Some(s) != prev && s != 0 {
                collapsed.push(s);
            }
            prev = Some(s);
        }
        if collapsed == label {
            total += path.iter().enumerate().map(|(i, &s)| probs[i * k + s]).product::<f64>();
        }
    }
    -total.ln()
}

fn ctc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7C);
    let (mut worst_loss, mut worst_grad) = (0.0f64, 0.0f64);
    let mut cases = 0;
    while cases < 200 {
        let t = rng.gen_range(1..=6);
        let k = rng.gen_range(2..=4);
        let len = rng.gen_range(0..=3);
        let label: Vec<usize> = (0..len).map(|_| rng.gen_range(1..k)).collect();
        if min_frames(&label) > t {
            continue;
        }
        let logits: Vec<f64> = (0..t * k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let out = ctc_loss(&logits, k, &label, 0).unwrap();
        worst_loss = worst_loss.max((out.loss - brute_force_ctc(&logits, k, &label)).abs());
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut p = logits.clone();
            p[i] += h;
            let mut m = logits.clone();
            m[i] -= h;
            let numeric = (ctc_loss(&p, k, &label, 0).unwrap().loss - ctc_loss(&m, k, &label, 0).unwrap().loss) / (2.0 * h);
            let err = (numeric - out.grad[i]).abs() / numeric.abs().max(out.grad[i].abs()).max(1e-4);
            worst_grad = worst_grad.max(err);
        }
        cases += 1;
    }
    Outcome::new(
        worst_loss <= 1e-6 && worst_grad <= 1e-4,
        format!("{cases} cases, max |loss - brute force| {worst_loss:.1e}, max grad rel err {worst_grad:.1e}"),
    )
}

// ---------------------------------------------------------------- model gradients

fn tiny_fd_config() -> ModelConfig {
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

fn model_loss(model: &JointModel<f64>, x: &Matrix, label: &[usize], speaker: usize, grads: bool) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mask = vec![true; x.rows];
    let out = model.forward_item(&mut tape, &b, x, &mask, &ForwardOptions::default(), &mut rng).unwrap();
    let logits = tape.value(out.speech_logits).values.clone();
    let spk_var = out.speaker_logits.unwrap();
    let spk = tape.value(spk_var).values.clone();
    let c = ctc_loss(&logits, model.config.vocab_size, label, 0).unwrap();
    let (ce, ce_grad) = cross_entropy(&spk, speaker).unwrap();
    if !grads {
        return (c.loss + ce, Vec::new());
    }
    tape.backward(&[(out.speech_logits, &c.grad), (spk_var, &ce_grad)]).unwrap();
    (c.loss + ce, b.vars().iter().map(|&v| tape.grad(v).to_vec()).collect())
}

fn model_gradients() -> Outcome {
    let model = JointModel::<f64>::init(tiny_fd_config(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Matrix::new(6, 8, (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let (label, speaker) = ([1usize, 2, 2], 1);
    let (_, grads) = model_loss(&model, &x, &label, speaker, true);
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    for (p, name) in model.names().iter().enumerate() {
        for i in 0..model.tensors()[p].len() {
            let mut plus = model.clone();
            plus.tensors_mut()[p].values[i] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[p].values[i] -= h;
            let numeric = (model_loss(&plus, &x, &label, speaker, false).0 - model_loss(&minus, &x, &label, speaker, false).0) / (2.0 * h);
            let err = (numeric - grads[p][i]).abs() / numeric.abs().max(grads[p][i].abs()).max(1e-4);
            if err > worst.0 {
                worst = (err, name.clone());
            }
        }
    }
    Outcome::new(
        worst.0 < 1e-4,
        format!("{} blocks, max rel err {:.1e} ({})", model.names().len(), worst.0, worst.1),
    )
}

// ---------------------------------------------------------------- SNR

fn snr_exactness() -> Outcome {
    let corpus = synth_corpus(9, 9, 3);
    let signal = &corpus[0].waveform;
    let talkers: Vec<Waveform> = corpus[1..].iter().map(|u| u.waveform.clone()).collect();
    let babble = make_babble(&talkers).unwrap();
    let s_rms = {
        let x = signal.to_f64();
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    };
    let mut worst = 0.0f64;
    for snr in (-3..=4).map(|k| 5.0 * k as f64) {
        let mix = mix_at_snr(signal, &babble, SnrSpec::db(snr).unwrap()).unwrap();
        let n = &mix.noise_component;
        let n_rms = (n.iter().map(|v| v * v).sum::<f64>() / n.len() as f64).sqrt();
        worst = worst.max((20.0 * (s_rms / n_rms).log10() - snr).abs());
    }
    let clean = mix_at_snr(signal, &babble, SnrSpec::Infinite).unwrap().mixed;
    let bitwise = clean.samples.iter().zip(&signal.samples).all(|(a, b)| a.to_bits() == b.to_bits()) && clean.len() == signal.len();
    Outcome::new(
        worst <= 1e-6 && bitwise,
        format!("max |measured - requested| {worst:.1e} dB over -15..20; +inf bitwise pass-through: {bitwise}"),
    )
}

// ---------------------------------------------------------------- vocoder

fn vocoder_fidelity() -> Outcome {
    let corpus = synth_corpus(20, 10, 17);
    let spec64 = VocodeSpec::new(64);
    let bands64 = spec64.bands().unwrap();
    let broadband = VocodeSpec::new(1).bands().unwrap();
    let env_of = |w: &Waveform, bands: &[_]| -> Vec<Waveform> {
        bandpass_bank(w, bands)
            .unwrap()
            .iter()
            .map(|b| envelope(b, DEFAULT_ENVELOPE_CUTOFF_HZ).unwrap())
            .collect()
    };
    let mut per_signal = Vec::with_capacity(corpus.len());
    let mut min1 = f64::MAX;
    let mut deterministic = true;
    for (i, u) in corpus.iter().enumerate() {
        let seed = 100 + i as u64;
        let out64 = noise_vocode(&u.waveform, &spec64, seed).unwrap();
        deterministic &= out64 == noise_vocode(&u.waveform, &spec64, seed).unwrap();
        let (a, b) = (env_of(&u.waveform, &bands64), env_of(&out64, &bands64));
        per_signal.push(a.iter().zip(&b).map(|(x, y)| pearson(&x.samples, &y.samples)).sum::<f64>() / a.len() as f64);

        let out1 = noise_vocode(&u.waveform, &VocodeSpec::new(1), seed).unwrap();
        let (a, b) = (env_of(&u.waveform, &broadband), env_of(&out1, &broadband));
        min1 = min1.min(pearson(&a[0].samples, &b[0].samples));
    }
    let mean64 = per_signal.iter().sum::<f64>() / per_signal.len() as f64;
    let worst64 = per_signal.iter().cloned().fold(f64::MAX, f64::min);
    let below = per_signal.iter().filter(|&&r| r < 0.8).count();
    Outcome::new(
        mean64 >= 0.8 && min1 >= 0.9 && deterministic,
        format!(
            "20 signals: 64-channel band envelope r mean {mean64:.3} (worst signal {worst64:.3}, {below} signals below 0.8), \
             worst 1-channel broadband r {min1:.3}, deterministic: {deterministic}"
        ),
    )
}

// ---------------------------------------------------------------- sine-wave speech

fn sine_wave_speech_criterion() -> Outcome {
    let vowels = [
        (110.0, [730.0, 1090.0, 2440.0]),
        (120.0, [270.0, 2290.0, 3010.0]),
        (140.0, [530.0, 1840.0, 2480.0]),
        (180.0, [570.0, 840.0, 2410.0]),
        (210.0, [440.0, 1020.0, 2240.0]),
    ];
    let mut worst_median = 0.0f64;
    let mut worst_leak_db = f64::NEG_INFINITY;
    for (f0, formants) in vowels {
        let w = synth_vowel(&VowelSpec::new(f0, formants), 0.5, 16_000);
        let tracks = formant_tracks(&w, SINE_TRACKS).unwrap();
        let medians: Vec<f64> = tracks.iter().filter_map(|t| t.median_voiced_frequency()).collect();
        for f in formants {
            let nearest = medians.iter().map(|m| (m - f).abs()).fold(f64::MAX, f64::min);
            worst_median = worst_median.max(nearest);
        }

        let out = sine_wave_speech(&w).unwrap();
        let spec = stft(&out, 400, 160, Window::Hann).unwrap();
        let bin_hz = 16_000.0 / 400.0;
        let energy: Vec<f64> = (0..spec.n_frames).map(|t| spec.power(t).iter().sum()).collect();
        let loudest = energy.iter().cloned().fold(0.0, f64::max);
        let n = spec.n_frames.min(tracks[0].n_frames());
        // the first and last frames hold the onset and offset transients
        for t in 2..n.saturating_sub(2) {
            if energy[t] < 1e-3 * loudest {
                continue;
            }
            let p = spec.power(t);
            let peak = p.iter().cloned().fold(0.0, f64::max);
            for (k, &v) in p.iter().enumerate() {
                let hz = k as f64 * bin_hz;
                let near = tracks.iter().any(|tr| {
                    let span = &tr.frequency_hz[t - 1..=(t + 1).min(tr.n_frames() - 1)];
                    let lo = span.iter().cloned().fold(f64::MAX, f64::min);
                    let hi = span.iter().cloned().fold(f64::MIN, f64::max);
                    hz >= lo - 100.0 && hz <= hi + 100.0
                });
                if !near && v > 0.0 {
                    worst_leak_db = worst_leak_db.max(10.0 * (v / peak).log10());
                }
            }
        }
    }
    Outcome::new(
        worst_median <= 75.0 && worst_leak_db <= -20.0,
        format!("5 vowels: worst formant median error {worst_median:.1} Hz, worst off-track bin {worst_leak_db:.1} dB re frame peak"),
    )
}

// ---------------------------------------------------------------- metrics

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d: Vec<Vec<usize>> = (0..=a.len()).map(|i| (0..=b.len()).map(|j| if i == 0 { j } else if j == 0 { i } else { 0 }).collect()).collect();
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCE2);
    let alphabet = ['a', 'b', 'c', ' '];
    let mut mismatches = 0;
    for _ in 0..500 {
        let gen = |rng: &mut ChaCha8Rng| -> String {
            let n = rng.gen_range(0..=12);
            (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
        };
        let (r, h) = (gen(&mut rng), gen(&mut rng));
        let (rc, hc): (Vec<char>, Vec<char>) = (r.chars().collect(), h.chars().collect());
        let dist = levenshtein(&rc, &hc);
        let mut ok = edit_counts(&r, &h).distance() == dist;
        if !rc.is_empty() {
            ok &= cer(&r, &h).unwrap() == dist as f64 / rc.len() as f64;
        }
        let rw: Vec<&str> = r.split(' ').filter(|w| !w.is_empty()).collect();
        let hw: Vec<&str> = h.split(' ').filter(|w| !w.is_empty()).collect();
        if !rw.is_empty() {
            ok &= wer(&r, &h).unwrap() == levenshtein(&rw, &hw) as f64 / rw.len() as f64;
        }
        mismatches += usize::from(!ok);
    }
    let over_one = cer("a", "abcd").unwrap();
    Outcome::new(
        mismatches == 0 && over_one == 3.0,
        format!("500 pairs, {mismatches} mismatches; cer(\"a\", \"abcd\") = {over_one}"),
    )
}

// ---------------------------------------------------------------- training

fn overfit_config(n_speakers: usize) -> ModelConfig {
    let mut cfg = ModelConfig::joint(2, 64);
    cfg.n_speakers = n_speakers;
    cfg.dropout = 0.0;
    cfg
}

fn overfit_train_config(max_steps: u64) -> TrainConfig {
    TrainConfig {
        epochs: max_steps as usize,
        batch_size: 10,
        seed: 1,
        heldout_fraction: 0.0,
        max_steps: Some(max_steps),
        eval_every: 5,
        early_stop: Some(EarlyStop {
            max_cer: 0.05,
            min_sra: 1.0,
        }),
        optimizer: AdamConfig {
            lr: 1e-3,
            warmup_steps: 100,
            ..AdamConfig::default()
        },
    }
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let corpus = synth_corpus(10, 10, 1);
    let ds = Dataset::from_synthetic(&corpus, true).unwrap();
    let report = train(&overfit_config(10), &ds, &overfit_train_config(2000)).unwrap();
    let all: Vec<usize> = (0..ds.len()).collect();
    let eval = evaluate(&report.checkpoint.model, &ds, &all).unwrap();
    let sra = eval.sra.unwrap_or(0.0);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        eval.cer_mean < 0.05 && sra == 1.0 && report.steps <= 2000 && secs < 300.0,
        format!("{} steps, training CER {:.4}, speaker accuracy {sra:.2}, {secs:.0} s", report.steps, eval.cer_mean),
    )
}

fn trend() -> Outcome {
    let corpus = synth_corpus(50, 10, 5);
    let items = eval_items_from_corpus(&corpus);
    let opts = BabbleOptions {
        n_pairs: 50,
        snrs: SnrSpec::babble_grid(),
        seed: 11,
    };
    let runs: Vec<(bool, ResultTable, u64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = [true, false]
            .into_iter()
            .map(|joint| {
                let (corpus, items, opts) = (&corpus, &items, &opts);
                s.spawn(move || {
                    let ds = Dataset::from_synthetic(corpus, joint).unwrap();
                    let cfg = if joint { overfit_config(10) } else { overfit_config(10).ablation() };
                    let report = train(&cfg, &ds, &overfit_train_config(3000)).unwrap();
                    let all: Vec<usize> = (0..ds.len()).collect();
                    let clean = evaluate(&report.checkpoint.model, &ds, &all).unwrap().cer_mean;
                    let scorer = Scorer {
                        model: &report.checkpoint.model,
                        speakers: &report.checkpoint.speakers,
                    };
                    let table = run_babble(scorer, items, opts).unwrap().table;
                    (joint, table, report.steps, clean)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut pass = true;
    let mut parts = Vec::new();
    let mut at_minus_15 = Vec::new();
    for (joint, table, steps, clean) in &runs {
        let lo = table.rows.iter().find(|r| r.condition.to_string() == "-15").unwrap().cer_mean;
        let hi = table.rows.iter().find(|r| r.condition.to_string() == "20").unwrap().cer_mean;
        pass &= lo > hi;
        at_minus_15.push(lo);
        let name = if *joint { "joint" } else { "ablation" };
        parts.push(format!("{name}: {steps} steps, train CER {clean:.3}, babble CER -15 dB {lo:.3} vs 20 dB {hi:.3}"));
        let curve: Vec<String> = table.rows.iter().map(|r| format!("{}:{:.3}", r.condition, r.cer_mean)).collect();
        println!("    {name} curve {}", curve.join(" "));
    }
    let gap = at_minus_15[1] - at_minus_15[0];
    let direction = if gap > 0.0 { "joint better" } else { "ablation better or equal" };
    parts.push(format!("gap at -15 dB (ablation - joint) {gap:+.3}, {direction}"));
    Outcome::new(pass, parts.join("; "))
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let csv = format!("{tag}.csv");
        let svg = format!("{tag}.svg");
        let status = Command::new(env!("CARGO_BIN_EXE_joint-asr"))
            .args(["experiment", "babble", "--pairs", "10", "--seed", "7", "--out", &csv, "--plot", &svg])
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        (std::fs::read(dir.path().join(csv)).unwrap(), std::fs::read(dir.path().join(svg)).unwrap())
    };
    let (c1, s1) = run("a");
    let (c2, s2) = run("b");
    let rows = String::from_utf8_lossy(&c1).lines().count() - 1;
    Outcome::new(
        c1 == c2 && s1 == s2 && rows == 9,
        format!("{rows} rows; CSV identical: {}; SVG identical: {}", c1 == c2, s1 == s2),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("ctc-oracle", Duration::from_secs(10), ctc_oracle),
        ("model-gradients", Duration::from_secs(30), model_gradients),
        ("snr-exactness", Duration::MAX, snr_exactness),
        ("vocoder-fidelity", Duration::MAX, vocoder_fidelity),
        ("sine-wave-speech", Duration::MAX, sine_wave_speech_criterion),
        ("metric-oracle", Duration::MAX, metric_oracle),
        ("overfit", Duration::from_secs(300), overfit),
        ("babble-trend", Duration::from_secs(900), trend),
        ("determinism", Duration::MAX, determinism),
    ];
    // ACCEPTANCE_ONLY=name[,name] restricts the run
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(str::to_owned).collect());
    let criteria: Vec<Criterion> = criteria
        .into_iter()
        .filter(|(name, _, _)| only.as_ref().is_none_or(|o| o.iter().any(|x| x == name)))
        .collect();
    let results: Vec<(Outcome, Duration)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|&(_, _, f)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let out = f();
                    (out, t.elapsed())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| (Outcome::new(false, "panicked"), Duration::ZERO)))
            .collect()
    });
    let mut failed = 0;
    for ((name, budget, _), (out, took)) in criteria.iter().zip(&results) {
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let budget = if *budget == Duration::MAX {
            String::new()
        } else {
            format!(" / budget {} s", budget.as_secs())
        };
        println!(
            "{} {name}: {} ({:.1} s{budget})",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
