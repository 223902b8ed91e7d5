use ndarray::{concatenate, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{conv1d, deconv1d, layer_norm, silu_inplace, softmax};
use crate::{Error, Result, VARIANCE_FLOOR};

/// Feature description stored with every bundle.
pub const FEATURE_SPEC: &str = "log-power, g-normalized";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    Deconv1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    None,
}

/// Which part of the network a layer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Trunk,
    Mu,
    LogVar,
    Class,
    Decoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// One convolution stage. `weight` is `[out_ch, in_ch, kernel]` for both kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub role: Role,
    pub kind: LayerKind,
    pub stride: usize,
    pub activation: Activation,
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub norm: Option<LayerNorm>,
}

impl Layer {
    pub fn in_ch(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_ch(&self) -> usize {
        self.weight.dim().0
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Layer { layer: self.name.clone(), msg: msg.into() }
    }

    fn check(&self) -> Result<()> {
        let (o, i, k) = self.weight.dim();
        if o == 0 || i == 0 || k == 0 || self.stride == 0 {
            return Err(self.err("channels, kernel and stride must be positive"));
        }
        if self.bias.len() != o {
            return Err(self.err(format!("bias has {} entries for {o} output channels", self.bias.len())));
        }
        if let Some(n) = &self.norm {
            if n.gamma.len() != o || n.beta.len() != o {
                return Err(self.err("layer-norm parameters do not match output channels"));
            }
        }
        let decoder = self.role == Role::Decoder;
        if decoder != (self.kind == LayerKind::Deconv1d) {
            return Err(self.err("decoder layers must be deconv1d and all others conv1d"));
        }
        let finite = self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
            && self.norm.as_ref().is_none_or(|n| n.gamma.iter().chain(&n.beta).all(|v| v.is_finite()));
        if !finite {
            return Err(self.err("non-finite parameters"));
        }
        Ok(())
    }

    /// Convolution, optional layer norm, then activation.
    pub fn forward(&self, x: ArrayView2<'_, f64>, eps: f64) -> Array2<f64> {
        let mut y = match self.kind {
            LayerKind::Conv1d => conv1d(x, self.weight.view(), self.bias.view(), self.stride),
            LayerKind::Deconv1d => deconv1d(x, self.weight.view(), self.bias.view(), self.stride),
        };
        if let Some(n) = &self.norm {
            layer_norm(&mut y, n.gamma.view(), n.beta.view(), eps);
        }
        if self.activation == Activation::Silu {
            silu_inplace(&mut y);
        }
        y
    }
}

/// Validated unified encoder-classifier plus class-conditioned decoder.
///
/// The trunk maps the `freq_bins`-channel input to a shared representation
/// that feeds three heads (latent mean, latent log-variance, class logits).
/// Every decoder layer sees its predecessor's output with the class vector
/// appended as `class_count` extra channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    latent_dim: usize,
    class_count: usize,
    freq_bins: usize,
    layer_norm_eps: f64,
    layers: Vec<Layer>,
}

/// Output of [`ModelBundle::encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: Array2<f64>,
    pub sigma_sq: Array2<f64>,
    pub class_probs: Array1<f64>,
}

impl ModelBundle {
    pub fn new(
        latent_dim: usize,
        class_count: usize,
        freq_bins: usize,
        layer_norm_eps: f64,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let bundle = Self { latent_dim, class_count, freq_bins, layer_norm_eps, layers };
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.class_count == 0 || self.freq_bins == 0 {
            return Err(Error::Container("latent_dim, class_count and freq_bins must be positive".into()));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return Err(Error::Container("layer_norm_eps must be positive".into()));
        }
        let mut names = std::collections::HashSet::new();
        for l in &self.layers {
            if !names.insert(l.name.as_str()) {
                return Err(l.err("duplicate layer name"));
            }
            l.check()?;
        }

        let mismatch =
            |l: &Layer, what: &str, want: usize, got: usize| l.err(format!("{what} is {got}, expected {want}"));
        let mut ch = self.freq_bins;
        for l in self.role(Role::Trunk) {
            if l.in_ch() != ch {
                return Err(mismatch(l, "in_ch", ch, l.in_ch()));
            }
            ch = l.out_ch();
        }
        let trunk_out = ch;
        for (role, out) in
            [(Role::Mu, self.latent_dim), (Role::LogVar, self.latent_dim), (Role::Class, self.class_count)]
        {
            let mut head = self.role(role).peekable();
            if head.peek().is_none() {
                return Err(Error::Container(format!("missing {role:?} head")));
            }
            let mut ch = trunk_out;
            let mut last = None;
            for l in head {
                if l.in_ch() != ch {
                    return Err(mismatch(l, "in_ch", ch, l.in_ch()));
                }
                ch = l.out_ch();
                last = Some(l);
            }
            if ch != out {
                return Err(mismatch(last.unwrap(), "out_ch", out, ch));
            }
        }
        let strides = |role| self.role(role).map(|l| l.stride).collect::<Vec<_>>();
        if strides(Role::Mu) != strides(Role::LogVar) {
            return Err(Error::Container("mean and log-variance heads must share strides".into()));
        }

        let mut ch = self.latent_dim;
        let mut last = None;
        for l in self.role(Role::Decoder) {
            if l.in_ch() != ch + self.class_count {
                return Err(mismatch(l, "in_ch", ch + self.class_count, l.in_ch()));
            }
            ch = l.out_ch();
            last = Some(l);
        }
        match last {
            None => Err(Error::Container("missing decoder".into())),
            Some(l) if ch != self.freq_bins => Err(mismatch(l, "out_ch", self.freq_bins, ch)),
            _ => Ok(()),
        }
    }

    fn role(&self, role: Role) -> impl Iterator<Item = &Layer> + '_ {
        self.layers.iter().filter(move |l| l.role == role)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn layer_norm_eps(&self) -> f64 {
        self.layer_norm_eps
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn run(&self, role: Role, x: Array2<f64>) -> Result<Array2<f64>> {
        let mut h = x;
        for (idx, l) in self.layers.iter().enumerate().filter(|(_, l)| l.role == role) {
            h = l.forward(h.view(), self.layer_norm_eps);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(l.err(format!("non-finite activations (layer index {idx})")));
            }
        }
        Ok(h)
    }

    /// Encoder pass on a `[freq_bins, frames]` feature map.
    pub fn encode(&self, features: ArrayView2<'_, f64>) -> Result<EncoderOutput> {
        if features.nrows() != self.freq_bins {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} frequency bins, input has {}",
                self.freq_bins,
                features.nrows()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument("encoder input has no frames".into()));
        }
        let h = self.run(Role::Trunk, features.to_owned())?;
        let mu = self.run(Role::Mu, h.clone())?;
        let sigma_sq = self.run(Role::LogVar, h.clone())?.mapv(f64::exp);
        let logits = self.run(Role::Class, h)?;
        let class_probs = softmax(logits.mean_axis(Axis(1)).expect("non-empty").view());
        if sigma_sq.iter().any(|v| !v.is_finite()) {
            return Err(Error::Layer { layer: "log_var head".into(), msg: "variance overflow".into() });
        }
        Ok(EncoderOutput { mu, sigma_sq, class_probs })
    }

    /// Decoder pass producing floored variances for `frames` time steps.
    pub fn decode(
        &self,
        z: ArrayView2<'_, f64>,
        class_probs: ArrayView1<'_, f64>,
        frames: usize,
    ) -> Result<Array2<f64>> {
        if z.nrows() != self.latent_dim || class_probs.len() != self.class_count {
            return Err(Error::DimensionMismatch(format!(
                "decoder expects {} latent channels and {} classes, got {} and {}",
                self.latent_dim,
                self.class_count,
                z.nrows(),
                class_probs.len()
            )));
        }
        let mut h = z.to_owned();
        for (idx, l) in self.layers.iter().enumerate().filter(|(_, l)| l.role == Role::Decoder) {
            let column = class_probs.insert_axis(Axis(1));
            let cond = column.broadcast((self.class_count, h.ncols())).expect("broadcast");
            let input = concatenate(Axis(0), &[h.view(), cond]).expect("same length");
            h = l.forward(input.view(), self.layer_norm_eps);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(l.err(format!("non-finite activations (layer index {idx})")));
            }
        }
        if h.ncols() < frames {
            return Err(Error::DimensionMismatch(format!("decoder produced {} frames, {frames} needed", h.ncols())));
        }
        let out = h.slice_move(ndarray::s![.., ..frames]).mapv(|v| v.exp().max(VARIANCE_FLOOR));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Layer { layer: "decoder output".into(), msg: "variance overflow".into() });
        }
        Ok(out)
    }

    /// The desk-scale default architecture with small random weights: a
    /// three-stage trunk (`F -> 256 -> 256 -> 128`, kernel 5, strides 1, 2, 2),
    /// single-layer heads and a mirrored decoder. Useful for timing.
    pub fn random_default(freq_bins: usize, latent_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut add = |name: &str, role, kind, cin: usize, cout: usize, k: usize, s: usize, act, norm: bool| {
            let scale = (1.0 / (cin * k) as f64).sqrt();
            layers.push(Layer {
                name: name.into(),
                role,
                kind,
                stride: s,
                activation: act,
                weight: Array3::from_shape_fn((cout, cin, k), |_| rng.gen_range(-scale..scale)),
                bias: Array1::zeros(cout),
                norm: norm.then(|| LayerNorm { gamma: Array1::ones(cout), beta: Array1::zeros(cout) }),
            });
        };
        use Activation::{None as Lin, Silu};
        use LayerKind::{Conv1d, Deconv1d};
        let (d, c) = (latent_dim, class_count);
        add("enc1", Role::Trunk, Conv1d, freq_bins, 256, 5, 1, Silu, true);
        add("enc2", Role::Trunk, Conv1d, 256, 256, 5, 2, Silu, true);
        add("enc3", Role::Trunk, Conv1d, 256, 128, 5, 2, Silu, true);
        add("mu", Role::Mu, Conv1d, 128, d, 1, 1, Lin, false);
        add("log_var", Role::LogVar, Conv1d, 128, d, 1, 1, Lin, false);
        add("class", Role::Class, Conv1d, 128, c, 1, 1, Lin, false);
        add("dec1", Role::Decoder, Deconv1d, d + c, 128, 5, 2, Silu, true);
        add("dec2", Role::Decoder, Deconv1d, 128 + c, 256, 5, 2, Silu, true);
        add("dec3", Role::Decoder, Deconv1d, 256 + c, freq_bins, 5, 1, Lin, false);
        Self::new(latent_dim, class_count, freq_bins, 1e-5, layers)
    }
}
