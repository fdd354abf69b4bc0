use rand::Rng;

use super::config::{conv_output_shape, NetConfig, TrunkConfig};
use super::NetError;
use crate::seeding::{self, tags};
use crate::tensorgrad::{Graph, ParamStore, Real, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InitKind {
    /// `U(±√(6/fan_in))`, for layers followed by ReLU.
    Relu,
    /// `U(±√(3/fan_in))`, unit-variance for linear, sigmoid and tanh inputs.
    Unit,
    /// Policy output, scaled down so the initial policy is near uniform.
    Policy,
    Zero,
}

const POLICY_INIT_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
struct Dense {
    weight: usize,
    bias: usize,
}

#[derive(Clone, Copy, Debug)]
struct ConvLayer {
    kernels: usize,
    bias: usize,
    stride: usize,
}

#[derive(Clone, Debug)]
enum Trunk {
    Conv { convs: Vec<ConvLayer>, fc: Dense },
    Mlp { layers: Vec<Dense> },
}

#[derive(Clone, Copy, Debug)]
struct Gru {
    w_z: usize,
    u_z: usize,
    b_z: usize,
    w_r: usize,
    u_r: usize,
    b_r: usize,
    w_h: usize,
    u_h: usize,
    b_h: usize,
}

/// Outputs of the three heads for a batch of rows.
#[derive(Clone, Debug)]
pub struct HeadsOutput {
    /// `[B×|A|]` policy logits.
    pub logits: Var,
    /// `[B]` state values.
    pub value: Var,
    /// One `[B×d]` scaled prediction `ψ̃ = (1−γ)Ψ` per auxiliary head.
    pub psi_scaled: Vec<Var>,
}

/// Layout of parameter tensors plus the layer wiring that reads them.
///
/// The network itself holds no values; every forward call takes the bound
/// parameter vars of a [`ParamStore`] built by [`AgentNet::init_params`].
#[derive(Clone, Debug)]
pub struct AgentNet {
    config: NetConfig,
    obs_shape: [usize; 3],
    num_actions: usize,
    trunk: Trunk,
    gru: Option<Gru>,
    policy: Dense,
    value: Dense,
    decoders: Vec<Vec<Dense>>,
    feature_size: usize,
    layout: Vec<(String, Vec<usize>, InitKind)>,
}

struct LayoutBuilder(Vec<(String, Vec<usize>, InitKind)>);

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: InitKind) -> usize {
        self.0.push((name, shape, init));
        self.0.len() - 1
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize, init: InitKind) -> Dense {
        Dense {
            weight: self.add(format!("{prefix}.weight"), vec![fan_in, fan_out], init),
            bias: self.add(format!("{prefix}.bias"), vec![fan_out], InitKind::Zero),
        }
    }
}

impl AgentNet {
    pub fn new(config: &NetConfig, obs_shape: [usize; 3], num_actions: usize, aux_heads: usize) -> Result<Self, NetError> {
        if num_actions < 2 {
            return Err(NetError::Config(format!("need at least 2 actions, got {num_actions}")));
        }
        let config = config.resolved(obs_shape)?;
        let mut lb = LayoutBuilder(Vec::new());
        let obs_len: usize = obs_shape.iter().product();

        let (trunk, trunk_out) = match &config.trunk {
            TrunkConfig::Conv { conv_layers, fc_size } => {
                let layers = conv_layers.as_ref().expect("resolved");
                let mut in_ch = obs_shape[0];
                let mut convs = Vec::new();
                for (i, l) in layers.iter().enumerate() {
                    convs.push(ConvLayer {
                        kernels: lb.add(
                            format!("trunk.conv{i}.weight"),
                            vec![l.out_channels, in_ch, l.kernel, l.kernel],
                            InitKind::Relu,
                        ),
                        bias: lb.add(format!("trunk.conv{i}.bias"), vec![l.out_channels], InitKind::Zero),
                        stride: l.stride,
                    });
                    in_ch = l.out_channels;
                }
                let flat: usize = conv_output_shape(layers, obs_shape)?.iter().product();
                let fc = lb.dense("trunk.fc", flat, *fc_size, InitKind::Relu);
                (Trunk::Conv { convs, fc }, *fc_size)
            }
            TrunkConfig::Mlp { hidden } => {
                let mut width = obs_len;
                let mut layers = Vec::new();
                for (i, &h) in hidden.iter().enumerate() {
                    if h == 0 {
                        return Err(NetError::Config("mlp layer width must be positive".into()));
                    }
                    layers.push(lb.dense(&format!("trunk.mlp{i}"), width, h, InitKind::Relu));
                    width = h;
                }
                (Trunk::Mlp { layers }, width)
            }
        };

        let (gru, feature_size) = match config.gru_hidden {
            Some(hid) => {
                let mut gate = |g: &str| {
                    (
                        lb.add(format!("gru.w_{g}"), vec![trunk_out, hid], InitKind::Unit),
                        lb.add(format!("gru.u_{g}"), vec![hid, hid], InitKind::Unit),
                        lb.add(format!("gru.b_{g}"), vec![hid], InitKind::Zero),
                    )
                };
                let (w_z, u_z, b_z) = gate("z");
                let (w_r, u_r, b_r) = gate("r");
                let (w_h, u_h, b_h) = gate("h");
                (Some(Gru { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h }), hid)
            }
            None => (None, trunk_out),
        };

        let policy = lb.dense("policy", feature_size, num_actions, InitKind::Policy);
        let value = lb.dense("value", feature_size, 1, InitKind::Unit);
        let mut decoders = Vec::new();
        for k in 0..aux_heads {
            let mut width = feature_size;
            let mut layers = Vec::new();
            for (i, &h) in config.decoder_hidden.iter().enumerate() {
                layers.push(lb.dense(&format!("tdae{k}.fc{i}"), width, h, InitKind::Unit));
                width = h;
            }
            layers.push(lb.dense(&format!("tdae{k}.out"), width, obs_len, InitKind::Unit));
            decoders.push(layers);
        }

        Ok(AgentNet {
            config,
            obs_shape,
            num_actions,
            trunk,
            gru,
            policy,
            value,
            decoders,
            feature_size,
            layout: lb.0,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        self.obs_shape
    }

    pub fn obs_len(&self) -> usize {
        self.obs_shape.iter().product()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn aux_heads(&self) -> usize {
        self.decoders.len()
    }

    pub fn hidden_size(&self) -> Option<usize> {
        self.config.gru_hidden
    }

    pub fn feature_size(&self) -> usize {
        self.feature_size
    }

    /// `(name, shape)` of every parameter, in store order.
    pub fn param_layout(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.layout.iter().map(|(n, s, _)| (n.as_str(), s.as_slice()))
    }

    /// Deterministic initialisation. Each tensor draws from its own stream
    /// keyed by `(seed, name)`, so adding or removing a head leaves every
    /// other tensor bitwise unchanged.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape, init) in &self.layout {
            let n: usize = shape.iter().product();
            let fan_in = fan_in_of(shape);
            let bound = match init {
                InitKind::Relu => (6.0 / fan_in as f64).sqrt(),
                InitKind::Unit => (3.0 / fan_in as f64).sqrt(),
                InitKind::Policy => POLICY_INIT_SCALE * (3.0 / fan_in as f64).sqrt(),
                InitKind::Zero => 0.0,
            };
            let data = if bound == 0.0 {
                vec![0.0; n]
            } else {
                let mut rng = seeding::rng(&[seed, tags::INIT, seeding::label(name)]);
                (0..n).map(|_| rng.gen_range(-bound..bound) as Real).collect()
            };
            store.push(name.clone(), Tensor::new(shape, data).expect("layout shape"));
        }
        store
    }

    /// Checks that `store` has exactly this network's names and shapes.
    pub fn check_params(&self, store: &ParamStore) -> Result<(), NetError> {
        if store.len() != self.layout.len() {
            return Err(NetError::Config(format!(
                "expected {} parameter tensors, found {}",
                self.layout.len(),
                store.len()
            )));
        }
        for ((name, shape, _), (sname, t)) in self.layout.iter().zip(store.iter()) {
            if name != sname || shape.as_slice() != t.shape() {
                return Err(NetError::Config(format!(
                    "parameter mismatch: expected {name}{shape:?}, found {sname}{:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    fn dense(g: &mut Graph<'_>, p: &[Var], x: Var, layer: Dense) -> Result<Var, TensorError> {
        let y = g.matmul(x, p[layer.weight])?;
        g.add_bias(y, p[layer.bias])
    }

    /// `obs[B×C×H×W]` → features `[B×F]`.
    pub fn trunk_forward(&self, g: &mut Graph<'_>, p: &[Var], obs: Var) -> Result<Var, TensorError> {
        let shape = g.value(obs).shape();
        if shape.len() != 4 || shape[1..] != self.obs_shape {
            return Err(TensorError::Shape {
                op: "trunk_forward",
                detail: format!("observation {:?} vs expected [B, {:?}]", shape, self.obs_shape),
            });
        }
        match &self.trunk {
            Trunk::Conv { convs, fc } => {
                let mut x = obs;
                for c in convs {
                    x = g.conv2d(x, p[c.kernels], c.stride)?;
                    x = g.add_bias(x, p[c.bias])?;
                    x = g.relu(x)?;
                }
                let flat = g.flatten_rows(x)?;
                let y = Self::dense(g, p, flat, *fc)?;
                g.relu(y)
            }
            Trunk::Mlp { layers } => {
                let mut x = g.flatten_rows(obs)?;
                for l in layers {
                    x = Self::dense(g, p, x, *l)?;
                    x = g.relu(x)?;
                }
                Ok(x)
            }
        }
    }

    /// One GRU update: `x[B×F]`, `h[B×H]` → `h'[B×H]`.
    pub fn gru_step(&self, g: &mut Graph<'_>, p: &[Var], x: Var, h: Var) -> Result<Var, TensorError> {
        let gru = self.gru.ok_or_else(|| TensorError::Shape {
            op: "gru_step",
            detail: "network has no memory layer".into(),
        })?;
        let gate = |g: &mut Graph<'_>, w: usize, u: usize, b: usize, hh: Var| -> Result<Var, TensorError> {
            let xw = g.matmul(x, p[w])?;
            let hu = g.matmul(hh, p[u])?;
            let s = g.add(xw, hu)?;
            g.add_bias(s, p[b])
        };
        let z_pre = gate(g, gru.w_z, gru.u_z, gru.b_z, h)?;
        let z = g.sigmoid(z_pre)?;
        let r_pre = gate(g, gru.w_r, gru.u_r, gru.b_r, h)?;
        let r = g.sigmoid(r_pre)?;
        let rh = g.mul(r, h)?;
        let cand_pre = gate(g, gru.w_h, gru.u_h, gru.b_h, rh)?;
        let cand = g.tanh(cand_pre)?;
        // h' = (1−z)⊙h + z⊙h̃ = h + z⊙(h̃ − h)
        let diff = g.sub(cand, h)?;
        let step = g.mul(z, diff)?;
        g.add(h, step)
    }

    /// Policy logits, value and every auxiliary prediction from `features[B×F]`.
    pub fn heads_forward(&self, g: &mut Graph<'_>, p: &[Var], features: Var) -> Result<HeadsOutput, TensorError> {
        let logits = Self::dense(g, p, features, self.policy)?;
        let v = Self::dense(g, p, features, self.value)?;
        let rows = g.value(v).shape()[0];
        let value = g.reshape(v, &[rows])?;
        let mut psi_scaled = Vec::with_capacity(self.decoders.len());
        for layers in &self.decoders {
            let mut x = features;
            for (i, l) in layers.iter().enumerate() {
                x = Self::dense(g, p, x, *l)?;
                if i + 1 < layers.len() {
                    x = g.sigmoid(x)?;
                }
            }
            psi_scaled.push(x);
        }
        Ok(HeadsOutput { logits, value, psi_scaled })
    }

    /// Full step: trunk, optional GRU, heads. Returns the new hidden state.
    pub fn step(
        &self,
        g: &mut Graph<'_>,
        p: &[Var],
        obs: Var,
        hidden: Option<Var>,
    ) -> Result<(HeadsOutput, Option<Var>), TensorError> {
        let feat = self.trunk_forward(g, p, obs)?;
        let (feat, h) = match (self.gru.is_some(), hidden) {
            (true, Some(h)) => {
                let h2 = self.gru_step(g, p, feat, h)?;
                (h2, Some(h2))
            }
            (false, None) => (feat, None),
            (true, None) => {
                return Err(TensorError::Shape {
                    op: "step",
                    detail: "recurrent network needs a hidden state".into(),
                })
            }
            (false, Some(_)) => {
                return Err(TensorError::Shape {
                    op: "step",
                    detail: "feed-forward network got a hidden state".into(),
                })
            }
        };
        Ok((self.heads_forward(g, p, feat)?, h))
    }

    /// Zeroed hidden state for `batch` rows, or `None` without memory.
    pub fn zero_hidden(&self, batch: usize) -> Option<Tensor> {
        self.config.gru_hidden.map(|h| Tensor::zeros(&[batch, h]))
    }
}

fn fan_in_of(shape: &[usize]) -> usize {
    match shape.len() {
        // dense weights are [in, out]
        2 => shape[0],
        // conv kernels are [out, in, kh, kw]
        4 => shape[1] * shape[2] * shape[3],
        _ => 1,
    }
}
