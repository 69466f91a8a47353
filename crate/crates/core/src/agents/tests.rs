use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{Action, ContinuousAction, DiscreteAction, Observation};
use crate::neural::LayerSpec;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn one_hot(n: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Transition over arbitrary flat observations.
#[derive(Debug, Clone)]
struct Toy {
    obs: Vec<f32>,
    action: Action,
    reward: f64,
    next_obs: Vec<f32>,
    next_mask: Option<[bool; 13]>,
    terminal: bool,
}

impl Experience for Toy {
    fn write_obs(&self, out: &mut [f32]) -> crate::Result<()> {
        out.copy_from_slice(&self.obs);
        Ok(())
    }
    fn write_next_obs(&self, out: &mut [f32]) -> crate::Result<()> {
        out.copy_from_slice(&self.next_obs);
        Ok(())
    }
    fn action(&self) -> Action {
        self.action
    }
    fn reward(&self) -> f64 {
        self.reward
    }
    fn next_mask(&self) -> Option<[bool; 13]> {
        self.next_mask
    }
    fn terminal(&self) -> bool {
        self.terminal
    }
}

fn small_config() -> AgentConfig {
    AgentConfig {
        batch_size: 16,
        replay_capacity: 1000,
        target_update_period: 50,
        ..AgentConfig::ddqn()
    }
}

fn greedy_schedule() -> ExplorationSchedule {
    ExplorationSchedule::EpsilonGreedy { initial: 0.0, decay: 0.0, min: 0.0 }
}

fn biased_q_net(biases: [f32; 13]) -> Network<f32> {
    let mut net = Network::from_specs(vec![2], 0, &[LayerSpec::Dense { inputs: 2, outputs: 13 }]).unwrap();
    net.params_mut()[1].copy_from_slice(&biases);
    net
}

fn chi_square(counts: &[usize], expected: f64) -> f64 {
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn epsilon_schedule_endpoints() {
    let s = ExplorationSchedule::epsilon_greedy();
    assert_eq!(s.value(0), 1.0);
    assert!(s.value(1000) <= 0.01 + (-20.0f64).exp());
    assert_eq!(s.value(1000), 0.01);
    assert!((s.value(50) - (-1.0f64).exp()).abs() < 1e-15);
    let g = ExplorationSchedule::gaussian_noise();
    assert_eq!(g.value(0), 0.3);
    assert_eq!(g.value(10_000), 0.05);
}

#[test]
fn schedule_validation() {
    assert!(ExplorationSchedule::EpsilonGreedy { initial: 1.5, decay: 0.0, min: 0.0 }.validate().is_err());
    assert!(ExplorationSchedule::GaussianNoise { initial: 0.1, decay: 0.0, min: 0.2 }.validate().is_err());
    assert!(ExplorationSchedule::epsilon_greedy().validate().is_ok());
}

#[test]
fn config_validation() {
    assert!(AgentConfig::ddqn().validate().is_ok());
    assert_eq!(AgentConfig::ddpg().target_update_period, 2000);
    for bad in [
        AgentConfig { gamma: 1.0, ..AgentConfig::ddqn() },
        AgentConfig { tau: 0.0, ..AgentConfig::ddqn() },
        AgentConfig { batch_size: 0, ..AgentConfig::ddqn() },
        AgentConfig { replay_capacity: 10, ..AgentConfig::ddqn() },
        AgentConfig { target_update_period: 0, ..AgentConfig::ddqn() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn replay_evicts_oldest_first() {
    let mut buf = ReplayBuffer::new(5, rng(1)).unwrap();
    for i in 0..8 {
        buf.push(i);
    }
    assert_eq!(buf.len(), 5);
    assert_eq!(buf.iter().copied().collect::<Vec<_>>(), vec![3, 4, 5, 6, 7]);
    assert_eq!(buf.get(0), Some(&3));
    assert!(ReplayBuffer::<u8>::new(0, rng(1)).is_err());
    let mut empty = ReplayBuffer::<u8>::new(3, rng(1)).unwrap();
    assert!(empty.sample(1).is_err());
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(10, rng(2)).unwrap();
    for i in 0..25 {
        buf.push(i);
    }
    let mut counts = [0usize; 10];
    let draws = 100_000;
    for i in buf.sample_indices(draws).unwrap() {
        counts[i] += 1;
    }
    // 9 degrees of freedom, 0.1% critical value
    assert!(chi_square(&counts, draws as f64 / 10.0) < 27.88, "{counts:?}");
}

#[test]
fn replay_restore_continues_sampling() {
    let mut a = ReplayBuffer::new(4, rng(3)).unwrap();
    for i in 0..6 {
        a.push(i);
    }
    a.sample_indices(7).unwrap();
    let mut b = ReplayBuffer::restore(4, a.iter().copied().collect(), a.rng_state().restore().unwrap()).unwrap();
    assert_eq!(a.sample_indices(20).unwrap(), b.sample_indices(20).unwrap());
    assert!(ReplayBuffer::restore(2, vec![1, 2, 3], rng(0)).is_err());
}

proptest! {
    #[test]
    fn replay_fifo_after_overflow(cap in 1usize..40, extra in 0usize..40) {
        let mut buf = ReplayBuffer::new(cap, rng(4)).unwrap();
        for i in 0..cap + extra {
            buf.push(i);
        }
        let kept: Vec<usize> = buf.iter().copied().collect();
        prop_assert_eq!(kept, (extra..cap + extra).collect::<Vec<_>>());
    }

    #[test]
    fn schedule_is_non_increasing(ep in 0u64..20_000) {
        let s = ExplorationSchedule::epsilon_greedy();
        prop_assert!(s.value(ep + 1) <= s.value(ep));
        prop_assert!(s.value(ep) >= 0.01 && s.value(ep) <= 1.0);
    }

    #[test]
    fn masked_argmax_picks_valid_maximum(
        values in proptest::collection::vec(-3.0f32..3.0, 13),
        mask_bits in 1u16..(1 << 13),
    ) {
        let mask: Vec<bool> = (0..13).map(|i| mask_bits >> i & 1 == 1).collect();
        let best = masked_argmax(&values, &mask).unwrap();
        prop_assert!(mask[best]);
        for i in 0..13 {
            if mask[i] {
                prop_assert!(values[i] < values[best] || (values[i] == values[best] && i >= best));
            }
        }
    }
}

#[test]
fn soft_update_examples() {
    let specs = [LayerSpec::Dense { inputs: 2, outputs: 2 }];
    let mut online = Network::<f32>::from_specs(vec![2], 0, &specs).unwrap();
    online.params_mut().into_iter().for_each(|p| p.fill(1.0));
    let zero = Network::<f32>::from_specs(vec![2], 0, &specs).unwrap();

    let mut t = zero.clone();
    soft_update(&mut t, &online, 0.0).unwrap();
    assert_eq!(t, zero);
    soft_update(&mut t, &online, 0.8).unwrap();
    assert!(t.params().iter().all(|p| p.iter().all(|&v| v == 0.8)));
    soft_update(&mut t, &online, 1.0).unwrap();
    assert_eq!(t, online);

    let other = Network::<f32>::from_specs(vec![2], 0, &[LayerSpec::Dense { inputs: 2, outputs: 3 }]).unwrap();
    assert!(soft_update(&mut t, &other, 0.5).is_err());
}

#[test]
fn argmax_ties_go_to_lowest_code() {
    assert_eq!(masked_argmax(&[1.0, 3.0, 3.0, 2.0], &[true; 4]), Some(1));
    assert_eq!(masked_argmax(&[1.0, 3.0, 3.0], &[true, false, true]), Some(2));
    assert_eq!(masked_argmax(&[1.0, 2.0], &[false, false]), None);
}

#[test]
fn greedy_selection_respects_mask() {
    let mut q = [0.0f32; 13];
    q[4] = 2.0;
    q[9] = 1.5;
    let mut agent = DdqnAgent::from_network(biased_q_net(q), small_config(), greedy_schedule(), rng(5)).unwrap();
    let obs = [0.3, 0.7];
    let all = [true; 13];
    assert_eq!(agent.select(&obs, &all, 0, false).unwrap().code(), 4);
    let mut mask = all;
    mask[4] = false;
    assert_eq!(agent.select(&obs, &mask, 0, false).unwrap().code(), 9);
    assert!(agent.select(&obs, &[false; 13], 0, false).is_err());
}

#[test]
fn full_exploration_is_uniform_over_valid_actions() {
    let sched = ExplorationSchedule::EpsilonGreedy { initial: 1.0, decay: 0.0, min: 1.0 };
    let mut q = [0.0f32; 13];
    q[0] = 10.0;
    let mut agent = DdqnAgent::from_network(biased_q_net(q), small_config(), sched, rng(6)).unwrap();
    let mut mask = [false; 13];
    for i in [0, 1, 3, 5, 7, 8, 12] {
        mask[i] = true;
    }
    let mut counts = [0usize; 13];
    let draws = 70_000;
    for _ in 0..draws {
        let a = agent.select(&[0.0, 0.0], &mask, 0, true).unwrap().code();
        assert!(mask[a]);
        counts[a] += 1;
    }
    let valid: Vec<usize> = (0..13).filter(|&i| mask[i]).map(|i| counts[i]).collect();
    // 6 degrees of freedom, 0.1% critical value
    assert!(chi_square(&valid, draws as f64 / 7.0) < 22.46, "{counts:?}");
}

#[test]
fn zero_discount_targets_are_rewards() {
    let next = vec![5.0f32; 26];
    let y = double_q_targets(&next, &next, &[0.25, 0.75], &[[true; 13]; 2], 0.0).unwrap();
    assert_eq!(y, vec![0.25, 0.75]);
}

#[test]
fn identical_networks_give_dqn_targets() {
    let mut r = rng(7);
    let q: Vec<f32> = (0..39).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
    let mut masks = [[true; 13]; 3];
    masks[1][0] = false;
    masks[2] = [false; 13];
    masks[2][6] = true;
    let rewards = [0.1, 0.2, 0.3];
    let y = double_q_targets(&q, &q, &rewards, &masks, 0.9).unwrap();
    for i in 0..3 {
        let best = (0..13)
            .filter(|&a| masks[i][a])
            .map(|a| q[i * 13 + a])
            .fold(f32::NEG_INFINITY, f32::max);
        assert_eq!(y[i], rewards[i] + 0.9 * best as f64);
    }
    // online and target disagree: the target network scores the online choice
    let mut online = vec![0.0f32; 13];
    online[3] = 1.0;
    let mut target = vec![0.0f32; 13];
    target[3] = 0.5;
    target[7] = 2.0;
    let y = double_q_targets(&online, &target, &[0.0], &[[true; 13]], 0.5).unwrap();
    assert_eq!(y, vec![0.25]);
}

/// Two states, two usable moves: 0 stays, 1 switches state.
fn two_state_mdp() -> (Vec<Toy>, [[f64; 2]; 2]) {
    let reward = [[0.1, 0.0], [1.0, 0.5]];
    let next = |s: usize, a: usize| if a == 0 { s } else { 1 - s };
    let mut mask = [false; 13];
    mask[0] = true;
    mask[1] = true;
    let mut transitions = Vec::new();
    for s in 0..2 {
        for a in 0..2 {
            transitions.push(Toy {
                obs: one_hot(2, s),
                action: Action::Discrete(DiscreteAction::new(a).unwrap()),
                reward: reward[s][a],
                next_obs: one_hot(2, next(s, a)),
                next_mask: Some(mask),
                terminal: false,
            });
        }
    }
    // value iteration oracle
    let gamma = 0.9;
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..2000 {
        let v = [q[0][0].max(q[0][1]), q[1][0].max(q[1][1])];
        let mut nq = [[0.0; 2]; 2];
        for s in 0..2 {
            for a in 0..2 {
                nq[s][a] = reward[s][a] + gamma * v[next(s, a)];
            }
        }
        q = nq;
    }
    (transitions, q)
}

#[test]
fn ddqn_reaches_value_iteration_fixed_point() {
    let (transitions, q_star) = two_state_mdp();
    let specs = [
        LayerSpec::Dense { inputs: 2, outputs: 32 },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 32, outputs: 13 },
    ];
    let mut net = Network::from_specs(vec![2], 0, &specs).unwrap();
    net.init_glorot(&mut rng(8));
    let cfg = AgentConfig { batch_size: 32, target_update_period: 20, ..small_config() };
    let mut agent = DdqnAgent::from_network(net, cfg, greedy_schedule(), rng(9)).unwrap();
    let mut buf = ReplayBuffer::new(400, rng(10)).unwrap();
    for _ in 0..100 {
        for t in &transitions {
            buf.push(t.clone());
        }
    }
    for (steps, lr) in [(20_000, 3e-3), (5_000, 3e-4), (5_000, 3e-5)] {
        agent.set_learning_rate(lr).unwrap();
        for _ in 0..steps {
            agent.train_step(&mut buf).unwrap().unwrap();
        }
    }
    for s in 0..2 {
        let q = agent.q_values(one_hot(2, s).as_slice()).unwrap();
        for a in 0..2 {
            assert!(
                (q[a] as f64 - q_star[s][a]).abs() < 1e-2,
                "Q({s},{a}) = {} vs {}",
                q[a],
                q_star[s][a]
            );
        }
    }
}

#[test]
fn ddqn_waits_for_a_full_batch() {
    let (transitions, _) = two_state_mdp();
    let mut agent = DdqnAgent::from_network(biased_q_net([0.0; 13]), small_config(), greedy_schedule(), rng(11)).unwrap();
    let mut buf = ReplayBuffer::new(100, rng(12)).unwrap();
    for t in transitions.iter().cycle().take(15) {
        buf.push(t.clone());
    }
    assert_eq!(agent.train_step(&mut buf).unwrap(), None);
    assert_eq!(agent.grad_steps(), 0);
    buf.push(transitions[0].clone());
    assert!(agent.train_step(&mut buf).unwrap().is_some());
}

#[test]
fn target_network_lags_between_updates() {
    let (transitions, _) = two_state_mdp();
    let mut net = Network::from_specs(vec![2], 0, &[LayerSpec::Dense { inputs: 2, outputs: 13 }]).unwrap();
    net.init_glorot(&mut rng(13));
    let cfg = AgentConfig { target_update_period: 5, tau: 1.0, ..small_config() };
    let mut agent = DdqnAgent::from_network(net, cfg, greedy_schedule(), rng(14)).unwrap();
    let mut buf = ReplayBuffer::new(100, rng(15)).unwrap();
    for t in transitions.iter().cycle().take(40) {
        buf.push(t.clone());
    }
    let before = agent.target().clone();
    for _ in 0..4 {
        agent.train_step(&mut buf).unwrap();
        assert_eq!(agent.target(), &before);
    }
    agent.train_step(&mut buf).unwrap();
    assert_eq!(agent.target(), agent.online());
    assert_ne!(agent.target(), &before);
}

#[test]
fn transition_writes_its_observations() {
    let o = Observation::from_vec((0..24).map(|v| v as f32).collect(), 2, 2).unwrap();
    let t = Transition {
        obs: o.clone(),
        action: Action::Discrete(DiscreteAction::STAY),
        reward: 0.4,
        next_obs: o,
        next_mask: Some([true; 13]),
        terminal: true,
    };
    let mut out = vec![0.0; 24];
    t.write_next_obs(&mut out).unwrap();
    assert_eq!(out[23], 23.0);
    assert!(t.write_obs(&mut [0.0; 5]).is_err());
    assert!(t.terminal());
}

#[test]
fn ddqn_training_is_seed_deterministic() {
    let run = || {
        let cfg = AgentConfig {
            arch: crate::neural::ArchConfig { conv_channels: vec![2], dense_units: 8, dropout: 0.2 },
            ..small_config()
        };
        let mut agent = DdqnAgent::new([6, 5, 5], cfg, ExplorationSchedule::epsilon_greedy(), 42).unwrap();
        let mut buf = ReplayBuffer::new(64, rng(16)).unwrap();
        let mut r = rng(17);
        let obs = |r: &mut ChaCha8Rng| {
            Observation::from_vec((0..150).map(|_| rand::Rng::random(r)).collect(), 5, 5).unwrap()
        };
        let mut out = Vec::new();
        for step in 0..40 {
            let o = obs(&mut r);
            let a = agent.select(o.as_slice(), &[true; 13], step / 10, true).unwrap();
            buf.push(Transition {
                obs: o,
                action: Action::Discrete(a),
                reward: 0.5,
                next_obs: obs(&mut r),
                next_mask: Some([true; 13]),
                terminal: false,
            });
            out.push((a.code(), agent.train_step(&mut buf).unwrap()));
        }
        (out, agent.online().clone())
    };
    let (a, na) = run();
    let (b, nb) = run();
    assert_eq!(a, b);
    assert_eq!(na, nb);
}

#[test]
fn ddqn_checkpoint_resumes_bit_exactly() {
    let (transitions, _) = two_state_mdp();
    let specs = [
        LayerSpec::Dense { inputs: 2, outputs: 8 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.25 },
        LayerSpec::Dense { inputs: 8, outputs: 13 },
    ];
    let mut net = Network::from_specs(vec![2], 0, &specs).unwrap();
    net.init_glorot(&mut rng(18));
    let cfg = AgentConfig { target_update_period: 7, ..small_config() };
    let mut agent = DdqnAgent::from_network(net, cfg, ExplorationSchedule::epsilon_greedy(), rng(19)).unwrap();
    let mut buf = ReplayBuffer::new(100, rng(20)).unwrap();
    for t in transitions.iter().cycle().take(30) {
        buf.push(t.clone());
    }
    for _ in 0..10 {
        agent.train_step(&mut buf).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    agent.save(dir.path()).unwrap();
    let mut resumed = DdqnAgent::load(dir.path()).unwrap();
    let mut buf2 = ReplayBuffer::restore(100, buf.iter().cloned().collect(), buf.rng_state().restore().unwrap()).unwrap();
    assert_eq!(resumed.online(), agent.online());
    assert_eq!(resumed.grad_steps(), 10);
    for _ in 0..10 {
        assert_eq!(agent.train_step(&mut buf).unwrap(), resumed.train_step(&mut buf2).unwrap());
        let o = one_hot(2, 1);
        assert_eq!(
            agent.select(o.as_slice(), &[true; 13], 3, true).unwrap(),
            resumed.select(o.as_slice(), &[true; 13], 3, true).unwrap()
        );
    }
    assert_eq!(agent.online(), resumed.online());
    assert_eq!(agent.target(), resumed.target());
    assert!(DdpgAgent::load(dir.path()).is_err());
}

fn tiny_ddpg(gamma: f64, seed: u64) -> DdpgAgent {
    let mut r = rng(seed);
    let mut actor = Network::from_specs(
        vec![2],
        0,
        &[LayerSpec::Dense { inputs: 2, outputs: 3 }, LayerSpec::Sigmoid],
    )
    .unwrap();
    actor.init_glorot(&mut r);
    let mut critic = Network::from_specs(
        vec![2],
        3,
        &[
            LayerSpec::ConcatSide { width: 3 },
            LayerSpec::Dense { inputs: 5, outputs: 16 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 16, outputs: 1 },
        ],
    )
    .unwrap();
    critic.init_glorot(&mut r);
    let cfg = AgentConfig { gamma, ..small_config() };
    DdpgAgent::from_networks(actor, critic, cfg, ExplorationSchedule::gaussian_noise(), rng(seed + 1)).unwrap()
}

#[test]
fn ddpg_selection_range_and_determinism() {
    let mut agent = tiny_ddpg(0.9, 21);
    let obs = [0.4, 0.9];
    let a = agent.select(&obs, 0, false).unwrap();
    assert_eq!(a, agent.select(&obs, 0, false).unwrap());
    for v in [a.ax, a.ay, a.az] {
        assert!((0.0..=1.0).contains(&v));
    }
    let sched = ExplorationSchedule::GaussianNoise { initial: 50.0, decay: 0.0, min: 50.0 };
    let (actor, critic) = (agent.actor().clone(), agent.critic().clone());
    let mut noisy = DdpgAgent::from_networks(actor, critic, small_config(), sched, rng(22)).unwrap();
    let mut hit_top = false;
    for _ in 0..50 {
        let a = noisy.select(&obs, 0, true).unwrap();
        for v in [a.ax, a.ay, a.az] {
            assert!((0.0..=1.0).contains(&v));
            hit_top |= v == 1.0;
        }
    }
    assert!(hit_top);
}

#[test]
fn actor_climbs_a_quadratic_critic() {
    let mut agent = tiny_ddpg(0.9, 23);
    let goal = [0.2f32, 0.7, 0.5];
    let mut r = rng(24);
    let obs: Vec<f32> = (0..16).map(|_| rand::Rng::random_range(&mut r, 0.0..1.0)).collect();
    let quadratic = |a: &[f32]| -> crate::Result<(f64, Vec<f32>)> {
        let n = a.len() / 3;
        let mut value = 0.0;
        let mut grad = vec![0.0; a.len()];
        for (i, v) in a.iter().enumerate() {
            let e = v - goal[i % 3];
            value -= (e * e) as f64 / n as f64;
            grad[i] = -2.0 * e / n as f32;
        }
        Ok((value, grad))
    };
    for _ in 0..6000 {
        agent.actor_step_with(&obs, 8, quadratic).unwrap();
    }
    let out = agent.actor().predict_flat(&obs, 8, None).unwrap();
    for (i, v) in out.iter().enumerate() {
        assert!((v - goal[i % 3]).abs() < 1e-2, "{out:?}");
    }
}

#[test]
fn myopic_critic_fits_constant_reward() {
    let mut agent = tiny_ddpg(0.0, 25);
    let mut buf = ReplayBuffer::new(200, rng(26)).unwrap();
    let mut r = rng(27);
    for i in 0..200 {
        let a = ContinuousAction::new(
            rand::Rng::random(&mut r),
            rand::Rng::random(&mut r),
            rand::Rng::random(&mut r),
        );
        buf.push(Toy {
            obs: one_hot(2, i % 2),
            action: Action::Continuous(a),
            reward: 0.7,
            next_obs: one_hot(2, (i + 1) % 2),
            next_mask: None,
            terminal: false,
        });
    }
    for _ in 0..3000 {
        agent.train_step(&mut buf).unwrap().unwrap();
    }
    for t in buf.iter().take(20) {
        let a = match t.action {
            Action::Continuous(a) => a.to_array(),
            _ => unreachable!(),
        };
        let q = agent.critic().predict_flat(t.obs.as_slice(), 1, Some(&a)).unwrap();
        assert!((q[0] - 0.7).abs() < 2e-2, "{}", q[0]);
    }
}

#[test]
fn ddpg_targets_copy_online_at_update_instant() {
    let mut agent = tiny_ddpg(0.9, 28);
    let cfg = AgentConfig { target_update_period: 3, tau: 1.0, gamma: 0.9, ..small_config() };
    let (actor, critic) = (agent.actor().clone(), agent.critic().clone());
    agent = DdpgAgent::from_networks(actor, critic, cfg, ExplorationSchedule::gaussian_noise(), rng(29)).unwrap();
    let mut buf = ReplayBuffer::new(50, rng(30)).unwrap();
    for i in 0..20 {
        buf.push(Toy {
            obs: one_hot(2, i % 2),
            action: Action::Continuous(ContinuousAction::new(0.5, 0.1, 0.9)),
            reward: 0.3,
            next_obs: one_hot(2, 0),
            next_mask: None,
            terminal: false,
        });
    }
    let before = agent.critic_target().clone();
    agent.train_step(&mut buf).unwrap();
    agent.train_step(&mut buf).unwrap();
    assert_eq!(agent.critic_target(), &before);
    agent.train_step(&mut buf).unwrap();
    assert_eq!(agent.critic_target(), agent.critic());
    assert_eq!(agent.actor_target(), agent.actor());
}

#[test]
fn ddpg_checkpoint_resumes_bit_exactly() {
    let mut agent = tiny_ddpg(0.9, 31);
    let mut buf = ReplayBuffer::new(50, rng(32)).unwrap();
    for i in 0..30 {
        buf.push(Toy {
            obs: one_hot(2, i % 2),
            action: Action::Continuous(ContinuousAction::new(0.1 * (i % 10) as f64, 0.5, 0.2)),
            reward: 0.05 * (i % 7) as f64,
            next_obs: one_hot(2, (i + 1) % 2),
            next_mask: None,
            terminal: false,
        });
    }
    for _ in 0..5 {
        agent.train_step(&mut buf).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    agent.save(dir.path()).unwrap();
    let mut resumed = DdpgAgent::load(dir.path()).unwrap();
    let mut buf2 = ReplayBuffer::restore(50, buf.iter().cloned().collect(), buf.rng_state().restore().unwrap()).unwrap();
    for _ in 0..5 {
        assert_eq!(agent.train_step(&mut buf).unwrap(), resumed.train_step(&mut buf2).unwrap());
        assert_eq!(agent.select(&[1.0, 0.0], 2, true).unwrap(), resumed.select(&[1.0, 0.0], 2, true).unwrap());
    }
    assert_eq!(agent.critic(), resumed.critic());
    assert!(DdqnAgent::load(dir.path()).is_err());
}

#[test]
fn mismatched_transition_kind_is_rejected() {
    let mut agent = DdqnAgent::from_network(biased_q_net([0.0; 13]), small_config(), greedy_schedule(), rng(33)).unwrap();
    let mut buf = ReplayBuffer::new(20, rng(34)).unwrap();
    for _ in 0..16 {
        buf.push(Toy {
            obs: one_hot(2, 0),
            action: Action::Continuous(ContinuousAction::new(0.0, 0.0, 0.0)),
            reward: 0.0,
            next_obs: one_hot(2, 0),
            next_mask: None,
            terminal: false,
        });
    }
    assert!(matches!(agent.train_step(&mut buf), Err(crate::Error::UnsupportedMode(_))));
}
