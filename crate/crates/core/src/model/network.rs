use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::diff::{DiffArray, Scalar, Tape, Var};
use crate::embeddings::Matrix;
use crate::error::{domain, Error, Result};

/// Transformer encoder with a per-frame character head and an optional
/// pooled speaker head.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel<T> {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<DiffArray<T>>,
    index: HashMap<String, usize>,
}

/// Per-pass switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    /// Enables dropout.
    pub train: bool,
    /// Adds the sinusoidal position code after the input projection.
    pub positional: bool,
    pub dropout_seed: u64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            train: false,
            positional: true,
            dropout_seed: 0,
        }
    }
}

/// Parameters recorded as leaves on one tape, in model order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Var {
        self.vars[self.index[name]]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Tape outputs for one utterance.
#[derive(Debug, Clone, Copy)]
pub struct ItemOutput {
    /// `N × d_ff`.
    pub encoded: Var,
    /// `N × vocab_size`.
    pub speech_logits: Var,
    /// `1 × n_speakers`, absent in the speech-only variant.
    pub speaker_logits: Option<Var>,
}

/// Logits from a gradient-free pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub n_frames: usize,
    pub vocab_size: usize,
    pub speech_logits: Vec<f64>,
    pub speaker_logits: Option<Vec<f64>>,
}

/// Sinusoidal position code, `n × width`.
pub fn positional_encoding(n: usize, width: usize) -> Vec<f64> {
    let mut pe = vec![0.0; n * width];
    for pos in 0..n {
        for i in (0..width).step_by(2) {
            let angle = pos as f64 / 10000f64.powf(i as f64 / width as f64);
            pe[pos * width + i] = angle.sin();
            if i + 1 < width {
                pe[pos * width + i + 1] = angle.cos();
            }
        }
    }
    pe
}

fn linear_shapes(config: &ModelConfig) -> Vec<(String, usize, usize)> {
    let h = config.d_ff;
    let mut v = vec![("input".to_string(), config.d_model, h)];
    for l in 0..config.n_layers {
        for p in ["q", "k", "v", "o"] {
            v.push((format!("layers.{l}.attn.{p}"), h, h));
        }
        v.push((format!("layers.{l}.ff1"), h, h));
        v.push((format!("layers.{l}.ff2"), h, h));
    }
    v.push(("speech_head.0".into(), h, h));
    v.push(("speech_head.1".into(), h, config.vocab_size));
    if config.use_speaker_branch {
        v.push(("speaker_head.0".into(), h, h));
        v.push(("speaker_head.1".into(), h, config.n_speakers));
    }
    v
}

impl<T: Scalar> JointModel<T> {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let h = config.d_ff;
        for (name, fan_in, fan_out) in linear_shapes(&config) {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
            names.push(format!("{name}.weight"));
            tensors.push(DiffArray::matrix(fan_in, fan_out, w)?);
            names.push(format!("{name}.bias"));
            tensors.push(DiffArray::zeros(vec![1, fan_out]));
        }
        for l in 0..config.n_layers {
            for ln in ["ln1", "ln2"] {
                names.push(format!("layers.{l}.{ln}.gain"));
                tensors.push(DiffArray::matrix(1, h, vec![T::one(); h])?);
                names.push(format!("layers.{l}.{ln}.bias"));
                tensors.push(DiffArray::zeros(vec![1, h]));
            }
        }
        Self::from_parts(config, names, tensors)
    }

    pub(crate) fn from_parts(config: ModelConfig, names: Vec<String>, tensors: Vec<DiffArray<T>>) -> Result<Self> {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self {
            config,
            names,
            tensors,
            index,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[DiffArray<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [DiffArray<T>] {
        &mut self.tensors
    }

    pub fn param(&self, name: &str) -> Option<&DiffArray<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut DiffArray<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors.iter().map(DiffArray::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(DiffArray::zero_grad);
    }

    /// Copy of the model in another precision.
    pub fn cast<U: Scalar>(&self) -> JointModel<U> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| DiffArray {
                shape: t.shape.clone(),
                values: t.values.iter().map(|v| U::of(v.to_f64().unwrap())).collect(),
                grad: vec![U::zero(); t.len()],
                requires_grad: t.requires_grad,
            })
            .collect();
        JointModel {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors,
            index: self.index.clone(),
        }
    }

    /// Record every parameter as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                let mut leaf = t.clone();
                leaf.zero_grad();
                leaf.requires_grad = true;
                tape.leaf(leaf)
            })
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }

    /// Add the tape gradients of bound parameters into the model's
    /// accumulators.
    pub fn accumulate_grads(&mut self, tape: &Tape<T>, bound: &Bound) {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.vars) {
            t.grad.iter_mut().zip(tape.grad(v)).for_each(|(a, &b)| *a = *a + b);
        }
    }

    fn linear(&self, tape: &mut Tape<T>, b: &Bound, name: &str, x: Var) -> Result<Var> {
        tape.linear(x, b.get(&format!("{name}.weight")), b.get(&format!("{name}.bias")))
    }

    fn maybe_dropout(&self, tape: &mut Tape<T>, x: Var, opts: &ForwardOptions, rng: &mut ChaCha8Rng) -> Result<Var> {
        let p = self.config.dropout;
        if !opts.train || p == 0.0 {
            return Ok(x);
        }
        let keep: Vec<bool> = (0..tape.value(x).len()).map(|_| rng.gen::<f64>() >= p).collect();
        tape.dropout(x, &keep, p)
    }

    /// Multi-head scaled dot-product self-attention of layer `layer` over
    /// `x` (`N × d_ff`); keys where `mask` is false are excluded.
    pub fn multi_head_attention(&self, tape: &mut Tape<T>, b: &Bound, layer: usize, x: Var, mask: &[bool]) -> Result<Var> {
        if !mask.iter().any(|&m| m) {
            return Err(domain!("attention over a fully masked sequence"));
        }
        let pre = format!("layers.{layer}.attn");
        let q = self.linear(tape, b, &format!("{pre}.q"), x)?;
        let k = self.linear(tape, b, &format!("{pre}.k"), x)?;
        let v = self.linear(tape, b, &format!("{pre}.v"), x)?;
        let dh = self.config.head_dim();
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let (s, e) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, s, e)?;
            let kh = tape.slice_cols(k, s, e)?;
            let vh = tape.slice_cols(v, s, e)?;
            let scores = tape.matmul_t(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores, Some(mask))?;
            heads.push(tape.matmul(attn, vh)?);
        }
        let cat = tape.concat_cols(&heads)?;
        self.linear(tape, b, &format!("{pre}.o"), cat)
    }

    fn transformer_layer(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        layer: usize,
        x: Var,
        mask: &[bool],
        opts: &ForwardOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let pre = format!("layers.{layer}");
        let a = self.multi_head_attention(tape, b, layer, x, mask)?;
        let a = self.maybe_dropout(tape, a, opts, rng)?;
        let r = tape.add(x, a)?;
        let x = tape.layer_norm(r, b.get(&format!("{pre}.ln1.gain")), b.get(&format!("{pre}.ln1.bias")))?;
        let f = self.linear(tape, b, &format!("{pre}.ff1"), x)?;
        let f = tape.relu(f);
        let f = self.linear(tape, b, &format!("{pre}.ff2"), f)?;
        let f = self.maybe_dropout(tape, f, opts, rng)?;
        let r = tape.add(x, f)?;
        tape.layer_norm(r, b.get(&format!("{pre}.ln2.gain")), b.get(&format!("{pre}.ln2.bias")))
    }

    /// Encode one `N × d_model` feature matrix to `N × d_ff`.
    pub fn encode(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        features: &Matrix,
        mask: &[bool],
        opts: &ForwardOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if features.cols != self.config.d_model {
            return Err(domain!("features have {} columns, model expects {}", features.cols, self.config.d_model));
        }
        if mask.len() != features.rows {
            return Err(domain!("mask of {} for {} frames", mask.len(), features.rows));
        }
        let x = tape.leaf(DiffArray::constant(
            features.rows,
            features.cols,
            features.data.iter().map(|&v| T::of(v as f64)).collect(),
        )?);
        let mut h = self.linear(tape, b, "input", x)?;
        if opts.positional {
            let pe = positional_encoding(features.rows, self.config.d_ff);
            let pe = tape.leaf(DiffArray::constant(features.rows, self.config.d_ff, pe.into_iter().map(T::of).collect())?);
            h = tape.add(h, pe)?;
        }
        for l in 0..self.config.n_layers {
            h = self.transformer_layer(tape, b, l, h, mask, opts, rng)?;
        }
        Ok(h)
    }

    /// Per-frame character logits.
    pub fn speech_head(&self, tape: &mut Tape<T>, b: &Bound, encoded: Var) -> Result<Var> {
        let h = self.linear(tape, b, "speech_head.0", encoded)?;
        let h = tape.relu(h);
        self.linear(tape, b, "speech_head.1", h)
    }

    /// Speaker logits from the mask-aware time average.
    pub fn speaker_head(&self, tape: &mut Tape<T>, b: &Bound, encoded: Var, mask: &[bool]) -> Result<Var> {
        if !self.config.use_speaker_branch {
            return Err(Error::Config("the speech-only model has no speaker head".into()));
        }
        let pooled = tape.mean_pool_rows(encoded, mask)?;
        let h = self.linear(tape, b, "speaker_head.0", pooled)?;
        let h = tape.relu(h);
        self.linear(tape, b, "speaker_head.1", h)
    }

    pub fn forward_item(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        features: &Matrix,
        mask: &[bool],
        opts: &ForwardOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<ItemOutput> {
        let encoded = self.encode(tape, b, features, mask, opts, rng)?;
        let speech_logits = self.speech_head(tape, b, encoded)?;
        let speaker_logits = if self.config.use_speaker_branch {
            Some(self.speaker_head(tape, b, encoded, mask)?)
        } else {
            None
        };
        Ok(ItemOutput {
            encoded,
            speech_logits,
            speaker_logits,
        })
    }

    /// Forward a batch of padded items (`B` matrices of `N` rows with masks).
    pub fn forward_batch(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        batch: &[&Matrix],
        masks: &[Vec<bool>],
        opts: &ForwardOptions,
    ) -> Result<Vec<ItemOutput>> {
        if batch.len() != masks.len() {
            return Err(domain!("{} items but {} masks", batch.len(), masks.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.dropout_seed);
        batch
            .iter()
            .zip(masks)
            .map(|(f, m)| self.forward_item(tape, b, f, m, opts, &mut rng))
            .collect()
    }

    /// Evaluation-mode logits for one unpadded utterance.
    pub fn infer(&self, features: &Matrix) -> Result<Inference> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let mask = vec![true; features.rows];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward_item(&mut tape, &b, features, &mask, &ForwardOptions::default(), &mut rng)?;
        let to64 = |v: Var| tape.value(v).values.iter().map(|x| x.to_f64().unwrap()).collect::<Vec<f64>>();
        Ok(Inference {
            n_frames: features.rows,
            vocab_size: self.config.vocab_size,
            speech_logits: to64(out.speech_logits),
            speaker_logits: out.speaker_logits.map(to64),
        })
    }
}
