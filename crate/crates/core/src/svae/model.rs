use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

use super::attention::{attention_weights, doc_info_vector, doc_vector_backward, AttentionWeights};
use super::latent::{draw_noise, encoder_summary, kld, mean_latent, LatentDistribution, LOGVAR_CLAMP};
use super::{ModelConfig, SvaeError, Variant};
use crate::corpus::{ImputationExample, TokenId, EOS_ID, UNK_ID};
use crate::decode::StepDecoder;
use crate::embedding::EmbeddingMatrix;
use crate::neural::{
    concat, join, log_softmax, softmax, DenseParams, EncoderCache, EncoderStates, GruCache, GruParams, Parameters,
    TensorVisitor,
};
use crate::neural::{encode_with_cache, encoder_backward};

/// Learnable tensors of one model. Word embeddings are frozen and live
/// outside.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub head_mu: Option<DenseParams>,
    pub head_logvar: Option<DenseParams>,
    pub dec_init: DenseParams,
    pub decoder: GruParams,
    pub output: DenseParams,
}

impl ModelParams {
    /// Xavier-initialized weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let code = config.code_dim();
        let (head_mu, head_logvar) = if config.variant.is_variational() {
            (
                Some(DenseParams::xavier(config.d_z, config.summary_width(), rng)),
                Some(DenseParams::xavier(config.d_z, config.summary_width(), rng)),
            )
        } else {
            (None, None)
        };
        ModelParams {
            enc_fwd: GruParams::xavier(config.d_word, config.d_h, rng),
            enc_bwd: GruParams::xavier(config.d_word, config.d_h, rng),
            head_mu,
            head_logvar,
            dec_init: DenseParams::xavier(config.d_h, code, rng),
            decoder: GruParams::xavier(config.d_word + code, config.d_h, rng),
            output: DenseParams::xavier(config.vocab_size, config.d_h, rng),
        }
    }

    /// All-zero tensors with the shapes `config` implies.
    pub fn zeros(config: &ModelConfig) -> Self {
        let code = config.code_dim();
        let head = || {
            config
                .variant
                .is_variational()
                .then(|| DenseParams::zeros(config.d_z, config.summary_width()))
        };
        ModelParams {
            enc_fwd: GruParams::zeros(config.d_word, config.d_h),
            enc_bwd: GruParams::zeros(config.d_word, config.d_h),
            head_mu: head(),
            head_logvar: head(),
            dec_init: DenseParams::zeros(config.d_h, code),
            decoder: GruParams::zeros(config.d_word + code, config.d_h),
            output: DenseParams::zeros(config.vocab_size, config.d_h),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

impl Parameters for ModelParams {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.enc_fwd.visit(&join(prefix, "encoder.forward"), f);
        self.enc_bwd.visit(&join(prefix, "encoder.backward"), f);
        if let Some(h) = &self.head_mu {
            h.visit(&join(prefix, "latent.mu"), f);
        }
        if let Some(h) = &self.head_logvar {
            h.visit(&join(prefix, "latent.logvar"), f);
        }
        self.dec_init.visit(&join(prefix, "decoder.init"), f);
        self.decoder.visit(&join(prefix, "decoder.gru"), f);
        self.output.visit(&join(prefix, "decoder.output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.enc_fwd.visit_mut(&join(prefix, "encoder.forward"), f);
        self.enc_bwd.visit_mut(&join(prefix, "encoder.backward"), f);
        if let Some(h) = &mut self.head_mu {
            h.visit_mut(&join(prefix, "latent.mu"), f);
        }
        if let Some(h) = &mut self.head_logvar {
            h.visit_mut(&join(prefix, "latent.logvar"), f);
        }
        self.dec_init.visit_mut(&join(prefix, "decoder.init"), f);
        self.decoder.visit_mut(&join(prefix, "decoder.gru"), f);
        self.output.visit_mut(&join(prefix, "decoder.output"), f);
    }
}

/// One training pair: the encoder input and the decoder target (ending in
/// EOS).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<TokenId>,
    pub mask: Option<Vec<bool>>,
    pub target: Vec<TokenId>,
}

impl Example {
    /// Language modeling: reconstruct the sentence itself.
    pub fn reconstruction(sentence: &[TokenId], eos: TokenId) -> Self {
        let mut target = sentence.to_vec();
        target.push(eos);
        Example {
            input: sentence.to_vec(),
            mask: None,
            target,
        }
    }

    pub fn imputation(ex: &ImputationExample, eos: TokenId) -> Self {
        let mut target = ex.target.to_vec();
        target.push(eos);
        Example {
            input: ex.input.to_vec(),
            mask: ex.zero_mask.clone(),
            target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    pub kld: f64,
}

/// A model ready for training or inference.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub embeddings: Arc<EmbeddingMatrix>,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        embeddings: Arc<EmbeddingMatrix>,
        rng: &mut R,
    ) -> Result<Self, SvaeError> {
        config.validate()?;
        if embeddings.vocab_size() != config.vocab_size || embeddings.dim() != config.d_word {
            return Err(SvaeError::InvalidConfig(format!(
                "embeddings are {}x{}, config expects {}x{}",
                embeddings.vocab_size(),
                embeddings.dim(),
                config.vocab_size,
                config.d_word
            )));
        }
        let params = ModelParams::init(&config, rng);
        Ok(Model {
            config,
            params,
            embeddings,
        })
    }

    pub fn encode(&self, input: &[TokenId], mask: Option<&[bool]>) -> Result<Encoding, SvaeError> {
        let enc = encode_forward(&self.config, &self.params, &self.embeddings, input, mask)?;
        let dist = if self.config.variant.is_variational() {
            Some(enc.latent(&self.params))
        } else {
            None
        };
        Ok(Encoding {
            states: enc.states,
            attention: enc.attention,
            summary: enc.summary,
            dist,
        })
    }

    /// Step decoder conditioned on `code`.
    pub fn decoder(&self, code: Array1<f64>) -> LatentDecoder<'_> {
        LatentDecoder {
            params: &self.params,
            embeddings: &self.embeddings,
            code,
        }
    }

    pub fn forward_loss<R: Rng + ?Sized>(
        &self,
        example: &Example,
        kl_weight: f64,
        rng: &mut R,
        teacher_forcing: bool,
    ) -> Result<LossParts, SvaeError> {
        forward_loss(self, example, kl_weight, rng, teacher_forcing)
    }
}

/// Encoder outputs for inference.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub states: EncoderStates,
    pub attention: Option<AttentionWeights>,
    /// `h_L`.
    pub summary: Array1<f64>,
    pub dist: Option<LatentDistribution>,
}

impl Encoding {
    /// Decoder conditioning vector: the mean of `n` latent draws, or the
    /// summary itself for the AE (no sampling).
    pub fn code<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array1<f64> {
        match &self.dist {
            Some(d) => mean_latent(d, n, rng),
            None => self.summary.clone(),
        }
    }
}

struct EncoderPass {
    x: Array2<f64>,
    states: EncoderStates,
    cache: EncoderCache,
    attention: Option<AttentionWeights>,
    summary: Array1<f64>,
}

impl EncoderPass {
    fn latent(&self, params: &ModelParams) -> LatentDistribution {
        let mu = params
            .head_mu
            .as_ref()
            .expect("variational head")
            .linear(self.summary.view());
        let lv = params
            .head_logvar
            .as_ref()
            .expect("variational head")
            .linear(self.summary.view());
        LatentDistribution::from_logvar(mu, lv)
    }
}

fn check_input(config: &ModelConfig, input: &[TokenId]) -> Result<(), SvaeError> {
    if input.is_empty() {
        return Err(SvaeError::EmptyInput);
    }
    if input.len() > config.max_len {
        return Err(SvaeError::TooLong {
            len: input.len(),
            max: config.max_len,
        });
    }
    Ok(())
}

fn encode_forward(
    config: &ModelConfig,
    params: &ModelParams,
    emb: &EmbeddingMatrix,
    input: &[TokenId],
    mask: Option<&[bool]>,
) -> Result<EncoderPass, SvaeError> {
    check_input(config, input)?;
    let mut x = emb.lookup(input)?;
    if let Some(mask) = mask {
        crate::neural::check_len("zero mask", input.len(), mask.len())?;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                x.row_mut(i).fill(0.0);
            }
        }
    }
    let (states, cache) = encode_with_cache(x.view(), None, &params.enc_fwd, &params.enc_bwd)?;
    let (attention, summary) = match config.variant {
        Variant::Svae => {
            let w = attention_weights(&states);
            let doc = doc_info_vector(&w, x.view())?;
            let summary = encoder_summary(&states, Some(doc.view()));
            (Some(w), summary)
        }
        Variant::Ae | Variant::Vae => (None, encoder_summary(&states, None)),
    };
    Ok(EncoderPass {
        x,
        states,
        cache,
        attention,
        summary,
    })
}

/// Single-example loss without gradients.
pub fn forward_loss<R: Rng + ?Sized>(
    model: &Model,
    example: &Example,
    kl_weight: f64,
    rng: &mut R,
    teacher_forcing: bool,
) -> Result<LossParts, SvaeError> {
    loss_and_grad(
        &model.config,
        &model.params,
        &model.embeddings,
        example,
        kl_weight,
        rng,
        teacher_forcing,
        None,
    )
}

/// Loss of one example: `Σ_t −log p(y_t | y_<t, z) + kl_weight · KLD`.
///
/// When `grads` is given, the gradient of the total is accumulated into it.
/// Decoder inputs are the previous target token (teacher forcing) or the
/// previous argmax prediction; the first input is EOS.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad<R: Rng + ?Sized>(
    config: &ModelConfig,
    params: &ModelParams,
    emb: &EmbeddingMatrix,
    example: &Example,
    kl_weight: f64,
    rng: &mut R,
    teacher_forcing: bool,
    grads: Option<&mut ModelParams>,
) -> Result<LossParts, SvaeError> {
    let (eos, unk) = (EOS_ID, UNK_ID);
    let target = &example.target;
    if target.last() != Some(&eos) {
        return Err(SvaeError::MissingEos);
    }
    if target.len() - 1 > config.max_len {
        return Err(SvaeError::TooLong {
            len: target.len() - 1,
            max: config.max_len,
        });
    }
    let enc = encode_forward(config, params, emb, &example.input, example.mask.as_deref())?;

    // latent
    let (code, latent) = if config.variant.is_variational() {
        let dist = enc.latent(params);
        let eps = draw_noise(config.d_z, rng);
        let z = &dist.mu + &(&dist.sigma * &eps);
        (z, Some((dist, eps)))
    } else {
        (enc.summary.clone(), None)
    };
    let kld_term = latent.as_ref().map_or(0.0, |(d, _)| kld(d));

    // decoder
    let s0 = params.dec_init.linear(code.view()).mapv_into(f64::tanh);
    let mut state = s0.clone();
    let mut prev = eos;
    let mut steps: Vec<(GruCache, Array1<f64>)> = Vec::with_capacity(target.len());
    let mut recon = 0.0;
    for &y in target {
        let mut input_tok = prev;
        if teacher_forcing
            && config.word_dropout > 0.0
            && !steps.is_empty()
            && rng.random::<f64>() < config.word_dropout
        {
            input_tok = unk;
        }
        let u = concat(&[emb.vector(input_tok), code.view()]);
        let c = params.decoder.forward(u.view(), state.view());
        let logits = params.output.linear(c.h.view());
        let logp = log_softmax(logits.view());
        recon -= logp[y];
        prev = if teacher_forcing { y } else { argmax(logp.view()) };
        state = c.h.clone();
        steps.push((c, logits));
    }
    let parts = LossParts {
        total: recon + kl_weight * kld_term,
        reconstruction: recon,
        kld: kld_term,
    };

    let Some(g) = grads else {
        return Ok(parts);
    };

    let d_word = config.d_word;
    let mut d_code = Array1::<f64>::zeros(code.len());
    let mut d_state = Array1::<f64>::zeros(config.d_h);
    for (t, (c, logits)) in steps.iter().enumerate().rev() {
        let mut d_logits = softmax(logits.view());
        d_logits[target[t]] -= 1.0;
        d_state += &params.output.backward(c.h.view(), d_logits.view(), &mut g.output);
        let (du, d_prev) = params.decoder.backward(c, d_state.view(), &mut g.decoder);
        d_code += &du.slice(s![d_word..]);
        d_state = d_prev;
    }
    let d_init_pre = &d_state * &s0.mapv(|v| 1.0 - v * v);
    d_code += &params
        .dec_init
        .backward(code.view(), d_init_pre.view(), &mut g.dec_init);

    let d_summary = match latent {
        None => d_code,
        Some((dist, eps)) => {
            let d_mu = &d_code + &(&dist.mu * kl_weight);
            let d_lv = ndarray::Zip::from(&d_code)
                .and(&eps)
                .and(&dist.sigma)
                .and(&dist.logvar)
                .map_collect(|&dz, &e, &sg, &lv| {
                    if lv <= -LOGVAR_CLAMP || lv >= LOGVAR_CLAMP {
                        0.0
                    } else {
                        0.5 * dz * e * sg + kl_weight * 0.5 * (sg * sg - 1.0)
                    }
                });
            let head_mu = params.head_mu.as_ref().expect("variational head");
            let head_lv = params.head_logvar.as_ref().expect("variational head");
            let mut d = head_mu.backward(enc.summary.view(), d_mu.view(), g.head_mu.as_mut().expect("grad head"));
            d += &head_lv.backward(
                enc.summary.view(),
                d_lv.view(),
                g.head_logvar.as_mut().expect("grad head"),
            );
            d
        }
    };

    let d_h = config.d_h;
    let t_len = example.input.len();
    let (mut d_fwd, mut d_bwd) = match (&enc.attention, config.variant) {
        (Some(w), Variant::Svae) => {
            let d_doc = d_summary.slice(s![2 * d_h..]);
            doc_vector_backward(&enc.states, w, enc.x.view(), d_doc)
        }
        _ => (Array2::zeros((t_len, d_h)), Array2::zeros((t_len, d_h))),
    };
    d_fwd.row_mut(t_len - 1).scaled_add(1.0, &d_summary.slice(s![..d_h]));
    d_bwd.row_mut(0).scaled_add(1.0, &d_summary.slice(s![d_h..2 * d_h]));
    encoder_backward(
        &params.enc_fwd,
        &params.enc_bwd,
        &enc.cache,
        &d_fwd,
        &d_bwd,
        &mut g.enc_fwd,
        &mut g.enc_bwd,
    );
    Ok(parts)
}

pub(crate) fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Autoregressive decoder conditioned on a fixed code vector. The state is
/// the decoder hidden vector.
pub struct LatentDecoder<'a> {
    params: &'a ModelParams,
    embeddings: &'a EmbeddingMatrix,
    code: Array1<f64>,
}

impl LatentDecoder<'_> {
    pub fn initial_state(&self) -> Array1<f64> {
        self.params.dec_init.linear(self.code.view()).mapv_into(f64::tanh)
    }
}

impl StepDecoder for LatentDecoder<'_> {
    type State = Array1<f64>;

    fn step(&self, state: &Array1<f64>, token: TokenId) -> (Vec<f64>, Array1<f64>) {
        let u = concat(&[self.embeddings.vector(token), self.code.view()]);
        let h = self.params.decoder.forward(u.view(), state.view()).h;
        let logits = self.params.output.linear(h.view());
        (log_softmax(logits.view()).to_vec(), h)
    }
}
