//! Agent assembly: the three variants' information wiring, action
//! selection, and episode rollouts.
//!
//! M1 sees the true hidden pair only at t = 1 and estimates afterwards via
//! the recurrence; B1 is fed the true pair every step; B2 never sees it.

use crate::dataset::{ImageId, ImagePool, Dataset, Permutation, IMAGE_PIXELS};
use crate::env::{Action, EnvState, HiddenVars, ObjectClass, TerminationCause};
use crate::nn::{self, AgentParams, Scalar};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentVariant {
    M1,
    B1,
    B2,
}

impl AgentVariant {
    pub fn name(self) -> &'static str {
        match self {
            AgentVariant::M1 => "M1",
            AgentVariant::B1 => "B1",
            AgentVariant::B2 => "B2",
        }
    }

    pub fn parse(s: &str) -> Option<AgentVariant> {
        match s {
            "M1" | "m1" => Some(AgentVariant::M1),
            "B1" | "b1" => Some(AgentVariant::B1),
            "B2" | "b2" => Some(AgentVariant::B2),
            _ => None,
        }
    }

    pub fn has_rnn(self) -> bool {
        self == AgentVariant::M1
    }

    pub fn mlp_sees_hidden(self) -> bool {
        self != AgentVariant::B2
    }

    /// Seeded parameter initialization with the variant's wiring.
    pub fn init_params<T: Scalar>(self, seed: u64) -> AgentParams<T> {
        AgentParams::init(seed, self.has_rnn(), self.mlp_sees_hidden())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("recurrent agent has no prior state at t > 1")]
    MissingState,
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// Recurrent bookkeeping for M1 between steps: the current estimate plus
/// the feature/action pair that will feed the next recurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState<T> {
    pub estimate: [T; 2],
    pub last_feature: [T; 4],
    pub last_action: Action,
}

/// ε-greedy selection: uniform with probability ε, otherwise argmax with
/// lowest-index tie-break. Always consumes one uniform draw, plus one more
/// on the exploration branch.
pub fn select_action<T: Scalar, R: Rng>(q: [T; 3], epsilon: f64, rng: &mut R) -> Action {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.gen::<f64>() < epsilon {
        return Action::ALL[rng.gen_range(0..3)];
    }
    greedy_action(q)
}

pub fn greedy_action<T: Scalar>(q: [T; 3]) -> Action {
    let mut best = 0;
    for i in 1..3 {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

/// One recorded step of an episode. `h_est` is the recurrent estimate for
/// M1 (equal to the observed pair at t = 1), the true pair for B1, and
/// absent for B2. Ground truth is logged for evaluation only.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpisodeStep {
    pub t: u32,
    pub object_class: ObjectClass,
    pub digit: u8,
    #[serde(skip)]
    pub image: ImageId,
    pub action: Action,
    pub reward: f32,
    pub h_true: [f32; 2],
    pub h_est: Option<[f32; 2]>,
    pub q_values: [f32; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
    pub terminated: bool,
    pub cause: TerminationCause,
}

impl Episode {
    pub fn ret(&self) -> f64 {
        self.steps.iter().map(|s| s.reward as f64).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Greedy/ε-greedy policy over f32 parameters, the form rollouts use.
pub struct Agent<'a> {
    pub variant: AgentVariant,
    pub params: &'a AgentParams<f32>,
}

impl<'a> Agent<'a> {
    pub fn new(variant: AgentVariant, params: &'a AgentParams<f32>) -> Agent<'a> {
        debug_assert_eq!(params.rnn.is_some(), variant.has_rnn());
        Agent { variant, params }
    }

    /// Q-values for the current step, advancing M1's recurrent state.
    ///
    /// `image` is the normalized pixel buffer for the step's observation;
    /// `true_hidden` is consulted only by B1. For M1 at t = 1 the observed
    /// initial pair bypasses the RNN; at t > 1 the previous state advances
    /// through one recurrence before the Q-head runs.
    pub fn q_values(
        &self,
        time: u32,
        image: &[f32],
        initial_hidden: Option<HiddenVars>,
        true_hidden: Option<HiddenVars>,
        state: Option<&AgentState<f32>>,
    ) -> Result<([f32; 3], [f32; 4], Option<[f32; 2]>), AgentError> {
        let feature = nn::cnn_forward(&self.params.cnn, image)?;
        let (q, est) = match self.variant {
            AgentVariant::M1 => {
                let est = if time == 1 {
                    let h = initial_hidden.ok_or(AgentError::MissingState)?;
                    h.values()
                } else {
                    let prev = state.ok_or(AgentError::MissingState)?;
                    nn::rnn_step(
                        self.params.rnn.as_ref().expect("M1 has an RNN"),
                        prev.estimate,
                        prev.last_feature,
                        prev.last_action,
                    )
                };
                (
                    nn::mlp_forward(&self.params.mlp, feature, Some(est))?,
                    Some(est),
                )
            }
            AgentVariant::B1 => {
                let h = true_hidden.ok_or(AgentError::MissingState)?.values();
                (nn::mlp_forward(&self.params.mlp, feature, Some(h))?, Some(h))
            }
            AgentVariant::B2 => (nn::mlp_forward(&self.params.mlp, feature, None)?, None),
        };
        Ok((q, feature, est))
    }
}

/// Roll out one episode. The env owns its own rng stream; `rng` drives
/// image sampling and exploration. Stops at termination or `max_steps`.
#[allow(clippy::too_many_arguments)]
pub fn rollout<R: Rng>(
    agent: &Agent,
    env: &mut EnvState,
    dataset: &Dataset,
    pool: &ImagePool,
    perm: &Permutation,
    epsilon: f64,
    rng: &mut R,
    max_steps: u32,
) -> Result<Episode, AgentError> {
    let mut steps = Vec::new();
    let mut state: Option<AgentState<f32>> = None;
    let mut image_buf = [0f32; IMAGE_PIXELS];
    let mut terminated = false;
    let mut cause = TerminationCause::None;

    while !env.is_done() && (steps.len() as u32) < max_steps {
        let obs = env.observe();
        let (image_id, digit) = pool.sample_image(perm, obs.object, rng);
        dataset.pixels_f32(image_id, &mut image_buf);
        let h_true = env.hidden();
        let (q, feature, est) = agent.q_values(
            env.time(),
            &image_buf,
            obs.initial_hidden,
            matches!(agent.variant, AgentVariant::B1).then_some(h_true),
            state.as_ref(),
        )?;
        let action = select_action(q, epsilon, rng);
        let result = env.step(action)?;
        steps.push(EpisodeStep {
            t: env.time() - 1,
            object_class: obs.object,
            digit,
            image: image_id,
            action,
            reward: result.reward,
            h_true: h_true.values(),
            h_est: est,
            q_values: q,
        });
        if let Some(est) = est {
            state = Some(AgentState {
                estimate: est,
                last_feature: feature,
                last_action: action,
            });
        }
        terminated = result.terminated;
        cause = result.cause;
    }

    Ok(Episode {
        steps,
        terminated,
        cause,
    })
}

/// Roll out an episode under a fixed scripted action, for baselines.
pub fn scripted_rollout(env: &mut EnvState, action: Action, max_steps: u32) -> Episode {
    let mut steps = Vec::new();
    let mut terminated = false;
    let mut cause = TerminationCause::None;
    while !env.is_done() && (steps.len() as u32) < max_steps {
        let obs = env.observe();
        let h_true = env.hidden();
        let result = env.step(action).expect("episode not done");
        steps.push(EpisodeStep {
            t: env.time() - 1,
            object_class: obs.object,
            digit: 0,
            image: ImageId(0),
            action,
            reward: result.reward,
            h_true: h_true.values(),
            h_est: None,
            q_values: [0.0; 3],
        });
        terminated = result.terminated;
        cause = result.cause;
    }
    Episode {
        steps,
        terminated,
        cause,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_and_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action([1.0f32, 3.0, 2.0], 0.0, &mut rng), Action::Run);
        assert_eq!(select_action([2.0f32, 2.0, 1.0], 0.0, &mut rng), Action::Stay);
        assert_eq!(select_action([0.0f32, 0.0, 0.0], 0.0, &mut rng), Action::Stay);
    }

    #[test]
    fn full_exploration_is_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            counts[select_action([1.0f32, 2.0, 3.0], 1.0, &mut rng).index()] += 1;
        }
        for &c in &counts {
            let f = c as f64 / n as f64;
            assert!((0.31..=0.36).contains(&f), "action frequency {f}");
        }
    }

    #[test]
    fn argmax_invariant_to_constant_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let q = [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()];
            let shift = rng.gen_range(-10.0f32..10.0);
            let shifted = [q[0] + shift, q[1] + shift, q[2] + shift];
            assert_eq!(greedy_action(q), greedy_action(shifted));
        }
    }

    #[test]
    fn b2_q_values_ignore_hidden_vars() {
        let params = AgentVariant::B2.init_params::<f32>(5);
        let agent = Agent::new(AgentVariant::B2, &params);
        let image = vec![0.4f32; IMAGE_PIXELS];
        let (q1, _, est1) = agent
            .q_values(3, &image, None, None, None)
            .unwrap();
        // No data path exists: there is nothing to perturb. Passing a
        // different "true" pair cannot change anything because B2's
        // q_values never reads it.
        let (q2, _, est2) = agent
            .q_values(
                3,
                &image,
                Some(HiddenVars::from_grid(20, 20)),
                Some(HiddenVars::from_grid(20, 20)),
                None,
            )
            .unwrap();
        assert_eq!(q1, q2);
        assert_eq!(est1, None);
        assert_eq!(est2, None);
    }

    #[test]
    fn m1_bypass_at_first_step_matches_b1_wiring() {
        // Same MLP weights and equal hidden input => identical Q.
        let m1_params = AgentVariant::M1.init_params::<f32>(6);
        let mut b1_params = AgentVariant::B1.init_params::<f32>(7);
        b1_params.cnn = m1_params.cnn.clone();
        b1_params.mlp = m1_params.mlp.clone();
        let m1 = Agent::new(AgentVariant::M1, &m1_params);
        let b1 = Agent::new(AgentVariant::B1, &b1_params);
        let image = vec![0.2f32; IMAGE_PIXELS];
        let h = HiddenVars::try_from_values(0.25, 0.40).unwrap();
        let (q_m1, _, est) = m1.q_values(1, &image, Some(h), None, None).unwrap();
        let (q_b1, _, _) = b1.q_values(1, &image, None, Some(h), None).unwrap();
        assert_eq!(q_m1, q_b1);
        assert_eq!(est, Some(h.values()));
    }

    #[test]
    fn m1_at_later_step_requires_prior_state() {
        let params = AgentVariant::M1.init_params::<f32>(8);
        let agent = Agent::new(AgentVariant::M1, &params);
        let image = vec![0.1f32; IMAGE_PIXELS];
        assert!(matches!(
            agent.q_values(2, &image, None, None, None),
            Err(AgentError::MissingState)
        ));
    }

    fn tiny_fixture() -> (Dataset, ImagePool) {
        use crate::dataset::tests_support::synthetic_dataset;
        let dataset = synthetic_dataset(1100, 20);
        let pool = ImagePool::build(&dataset, 3);
        (dataset, pool)
    }

    #[test]
    fn rollout_is_deterministic_and_bounded() {
        let (dataset, pool) = tiny_fixture();
        let perm = Permutation::get(1).unwrap();
        let params = AgentVariant::M1.init_params::<f32>(11);
        let agent = Agent::new(AgentVariant::M1, &params);

        let run = |seed: u64| {
            let mut env = EnvState::reset(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            rollout(&agent, &mut env, &dataset, &pool, &perm, 0.3, &mut rng, 400).unwrap()
        };
        let a = run(4);
        let b = run(4);
        assert_eq!(a, b);
        assert!(!a.is_empty());
        assert_eq!(a.ret(), a.len() as f64);

        // max_steps = 1 cuts the episode off after a single step.
        let mut env = EnvState::reset(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cut = rollout(&agent, &mut env, &dataset, &pool, &perm, 0.3, &mut rng, 1).unwrap();
        assert_eq!(cut.len(), 1);
    }

    #[test]
    fn m1_estimates_replay_exactly() {
        // Folding rnn_step over the logged features/actions regenerates the
        // logged estimates bit for bit.
        let (dataset, pool) = tiny_fixture();
        let perm = Permutation::get(1).unwrap();
        let params = AgentVariant::M1.init_params::<f32>(12);
        let agent = Agent::new(AgentVariant::M1, &params);
        let mut env = EnvState::reset(21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let episode =
            rollout(&agent, &mut env, &dataset, &pool, &perm, 1.0, &mut rng, 400).unwrap();
        assert!(episode.len() >= 2, "need a multi-step episode");

        let mut image_buf = [0f32; IMAGE_PIXELS];
        let mut est = episode.steps[0].h_true;
        assert_eq!(episode.steps[0].h_est, Some(est));
        for w in episode.steps.windows(2) {
            dataset.pixels_f32(w[0].image, &mut image_buf);
            let feature = nn::cnn_forward(&params.cnn, &image_buf).unwrap();
            est = nn::rnn_step(
                params.rnn.as_ref().unwrap(),
                est,
                feature,
                w[0].action,
            );
            assert_eq!(w[1].h_est, Some(est));
        }
    }

    #[test]
    fn scripted_stay_baseline_is_deterministic_mean() {
        let run = || {
            let mut total = 0.0;
            for seed in 0..100 {
                let mut env = EnvState::reset(seed);
                total += scripted_rollout(&mut env, Action::Stay, 400).ret();
            }
            total / 100.0
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a > 1.0 && a < 30.0, "always-stay mean return {a}");
    }
}
