//! The agent network: conv (or MLP) trunk, GRU memory, and policy, value and
//! TD-AE decoder heads, all as forward functions over [`crate::tensorgrad`].

pub mod checkpoint;
mod config;
mod net;

pub use config::{conv_output_shape, fit_conv_layers, ConvLayerSpec, NetConfig, TrunkConfig, DEFAULT_CONV_LAYERS};
pub use net::{AgentNet, HeadsOutput};

use crate::tensorgrad::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("network configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridpix::{ChainSpec, Scenario};
    use crate::tensorgrad::{Graph, ParamStore, Real, Tensor};
    use proptest::prelude::*;

    fn small_config() -> NetConfig {
        NetConfig {
            trunk: TrunkConfig::Conv { conv_layers: None, fc_size: 16 },
            gru_hidden: Some(12),
            decoder_hidden: vec![10, 14],
        }
    }

    fn random_obs(batch: usize, shape: [usize; 3], seed: u64) -> Tensor {
        use rand::Rng;
        let mut rng = crate::seeding::rng(&[seed]);
        let n = batch * shape.iter().product::<usize>();
        Tensor::new(&[batch, shape[0], shape[1], shape[2]], (0..n).map(|_| rng.gen::<Real>()).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let net = AgentNet::new(&NetConfig::default(), [3, 5, 5], 4, 1).unwrap();
        let a = net.init_params(7);
        let b = net.init_params(7);
        assert_eq!(a, b);
        assert_ne!(a, net.init_params(8));
        for (name, t) in a.iter() {
            if name.ends_with("bias") || name.starts_with("gru.b_") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        let names: std::collections::HashSet<_> = a.names().iter().collect();
        assert_eq!(names.len(), a.len());
    }

    #[test]
    fn adding_a_head_keeps_shared_init() {
        let plain = AgentNet::new(&small_config(), [3, 5, 5], 4, 0).unwrap().init_params(3);
        let with = AgentNet::new(&small_config(), [3, 5, 5], 4, 2).unwrap().init_params(3);
        for (name, t) in plain.iter() {
            assert_eq!(with.get(name).unwrap(), t);
        }
    }

    #[test]
    fn initial_policy_is_near_uniform() {
        let net = AgentNet::new(&NetConfig::default(), [3, 5, 5], 4, 1).unwrap();
        let params = net.init_params(1);
        let mut g = Graph::inference();
        let p = g.bind(&params);
        let obs = g.constant(random_obs(6, [3, 5, 5], 2));
        let h = g.constant(net.zero_hidden(6).unwrap());
        let (out, _) = net.step(&mut g, &p, obs, Some(h)).unwrap();
        let ls = g.log_softmax(out.logits).unwrap();
        for row in g.value(ls).data().chunks(4) {
            let ent: f64 = row.iter().map(|&l| -(l as f64).exp() * l as f64).sum();
            assert!((ent - 4f64.ln()).abs() / 4f64.ln() < 0.01, "entropy {ent}");
        }
    }

    #[test]
    fn zero_observation_gives_zero_trunk_output() {
        let net = AgentNet::new(&small_config(), [3, 5, 5], 4, 0).unwrap();
        let params = net.init_params(4);
        let mut g = Graph::inference();
        let p = g.bind(&params);
        let obs = g.constant(Tensor::zeros(&[2, 3, 5, 5]));
        let f = net.trunk_forward(&mut g, &p, obs).unwrap();
        assert_eq!(g.value(f).shape(), &[2, 16]);
        assert!(g.value(f).data().iter().all(|&v| v == 0.0));

        let bad = g.constant(Tensor::zeros(&[2, 3, 4, 4]));
        assert!(net.trunk_forward(&mut g, &p, bad).is_err());
    }

    #[test]
    fn identity_trunk_passes_input_through() {
        let cfg = NetConfig {
            trunk: TrunkConfig::Conv {
                conv_layers: Some(vec![ConvLayerSpec::new(1, 1, 1)]),
                fc_size: 4,
            },
            gru_hidden: None,
            decoder_hidden: vec![],
        };
        let net = AgentNet::new(&cfg, [1, 2, 2], 2, 0).unwrap();
        let mut params = net.init_params(0);
        let k = params.index_of("trunk.conv0.weight").unwrap();
        params.tensors_mut()[k] = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let w = params.index_of("trunk.fc.weight").unwrap();
        let mut eye = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            eye.data_mut()[i * 4 + i] = 1.0;
        }
        params.tensors_mut()[w] = eye;
        let mut g = Graph::inference();
        let p = g.bind(&params);
        let x = Tensor::new(&[1, 1, 2, 2], vec![0.1, 0.7, 0.0, 1.0]).unwrap();
        let obs = g.constant(x.clone());
        let f = net.trunk_forward(&mut g, &p, obs).unwrap();
        assert_eq!(g.value(f).data(), x.data());
    }

    #[test]
    fn gru_examples() {
        let net = AgentNet::new(&small_config(), [3, 5, 5], 4, 0).unwrap();
        let mut params = net.init_params(5);
        {
            let mut g = Graph::inference();
            let p = g.bind(&params);
            let x = g.constant(Tensor::zeros(&[1, 16]));
            let h = g.constant(Tensor::zeros(&[1, 12]));
            let h2 = net.gru_step(&mut g, &p, x, h).unwrap();
            assert!(g.value(h2).data().iter().all(|&v| v == 0.0));
        }
        // saturate the update gate shut: z ≈ 0 keeps the memory
        let bz = params.index_of("gru.b_z").unwrap();
        params.tensors_mut()[bz] = Tensor::full(&[12], -50.0);
        let mut g = Graph::inference();
        let p = g.bind(&params);
        let x = g.constant(Tensor::full(&[1, 16], 0.9));
        let h_prev = Tensor::new(&[1, 12], (0..12).map(|i| (i as Real - 6.0) / 7.0).collect()).unwrap();
        let h = g.constant(h_prev.clone());
        let h2 = net.gru_step(&mut g, &p, x, h).unwrap();
        assert!(g.value(h2).max_abs_diff(&h_prev) < 1e-12);
    }

    #[test]
    fn zero_state_heads_are_zero() {
        let net = AgentNet::new(&small_config(), [3, 5, 5], 4, 1).unwrap();
        let params = net.init_params(6);
        let mut g = Graph::inference();
        let p = g.bind(&params);
        let h = g.constant(Tensor::zeros(&[3, 12]));
        let out = net.heads_forward(&mut g, &p, h).unwrap();
        assert!(g.value(out.logits).data().iter().all(|&v| v == 0.0));
        assert!(g.value(out.value).data().iter().all(|&v| v == 0.0));
        assert_eq!(g.value(out.psi_scaled[0]).shape(), &[3, 75]);
    }

    #[test]
    fn decoder_width_matches_every_scenario() {
        let scenarios = [
            Scenario::k_item(2),
            Scenario::labyrinth(7),
            Scenario::two_color(),
            Scenario::const_obs(0.6),
            Scenario::tabular_chain(ChainSpec::two_step(0.0, 1.0)),
        ];
        for s in scenarios {
            let cfg = if s.is_grid() || matches!(s.kind, crate::gridpix::ScenarioKind::ConstObs { .. }) {
                small_config()
            } else {
                NetConfig::linear()
            };
            let net = AgentNet::new(&cfg, s.obs_shape(), 4, 1).unwrap();
            let (name, shape) = net.param_layout().last().unwrap();
            assert_eq!(name, "tdae0.out.bias");
            assert_eq!(shape, &[s.obs_len()]);
        }
    }

    #[test]
    fn every_head_sends_gradient_into_the_trunk() {
        let net = AgentNet::new(&small_config(), [3, 5, 5], 4, 1).unwrap();
        let params = net.init_params(9);
        let obs_t = random_obs(2, [3, 5, 5], 10);
        let trunk_idx: Vec<usize> = params
            .names()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with("trunk."))
            .map(|(i, _)| i)
            .collect();
        for head in 0..3 {
            let mut g = Graph::new();
            let p = g.bind(&params);
            let obs = g.constant(obs_t.clone());
            let h = g.constant(Tensor::zeros(&[2, 12]));
            let (out, _) = net.step(&mut g, &p, obs, Some(h)).unwrap();
            let target = match head {
                0 => out.logits,
                1 => out.value,
                _ => out.psi_scaled[0],
            };
            let sq = g.square(target).unwrap();
            let loss = g.mean(sq, None).unwrap();
            let grads = g.backward(loss).unwrap().for_params(&p, &params);
            let norm: f64 = trunk_idx.iter().map(|&i| grads[i].sum_of_squares()).sum();
            assert!(norm > 0.0, "head {head} sends no gradient to the trunk");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = AgentNet::new(&small_config(), [3, 5, 5], 4, 1).unwrap();
        let params = net.init_params(11);
        let mut buf = Vec::new();
        checkpoint::write_checkpoint(&mut buf, &params, "{\"k\":1}").unwrap();
        let (back, meta) = checkpoint::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(meta, "{\"k\":1}");
        assert_eq!(back, params);
        net.check_params(&back).unwrap();
        buf[0] = b'X';
        assert!(checkpoint::read_checkpoint(buf.as_slice()).is_err());
        let other = ParamStore::from_entries(vec![("w".into(), Tensor::scalar(1.0))]);
        assert!(net.check_params(&other).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn forward_is_pure_and_hidden_stays_bounded(seed in 0u64..500, steps in 1usize..6) {
            let net = AgentNet::new(&small_config(), [3, 5, 5], 4, 1).unwrap();
            let params = net.init_params(seed);
            let run = || {
                let mut g = Graph::inference();
                let p = g.bind(&params);
                let mut h = g.constant(net.zero_hidden(2).unwrap());
                let mut outs = Vec::new();
                for t in 0..steps {
                    let obs = g.constant(random_obs(2, [3, 5, 5], seed * 31 + t as u64));
                    let (o, h2) = net.step(&mut g, &p, obs, Some(h)).unwrap();
                    h = h2.unwrap();
                    outs.push((g.value(o.logits).clone(), g.value(o.value).clone(), g.value(h).clone()));
                }
                outs
            };
            let a = run();
            let b = run();
            prop_assert_eq!(&a, &b);
            for (_, _, h) in &a {
                prop_assert!(h.data().iter().all(|v| v.abs() < 1.0));
            }
        }
    }
}
