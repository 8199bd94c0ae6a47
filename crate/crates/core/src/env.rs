//! Survival POMDP: object dynamics, hidden-variable dynamics, stochastic
//! termination, per-step unit reward, and the partial observation function.
//!
//! The environment state is a pair of an object class (what the agent sees,
//! rendered elsewhere as an image) and two hidden variables, hunger and
//! sickness, that live on a 0.05 grid. The agent observes the object class
//! every step but the hidden variables only at the first step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of grid points for a hidden variable: 0.00, 0.05, ..., 1.00.
pub const HIDDEN_GRID_POINTS: usize = 21;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("episode already terminated; reset before stepping")]
    EpisodeFinished,
    #[error("hidden value {0} is not on the 0.05 grid in [0, 1]")]
    OffGrid(f64),
}

/// Object class the agent encounters at each step.
///
/// The integer encoding 0..3 matches the transition-table tuple order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ObjectClass {
    None = 0,
    Predator = 1,
    Prey = 2,
    RottenFood = 3,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] = [
        ObjectClass::None,
        ObjectClass::Predator,
        ObjectClass::Prey,
        ObjectClass::RottenFood,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ObjectClass> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::None => "none",
            ObjectClass::Predator => "predator",
            ObjectClass::Prey => "prey",
            ObjectClass::RottenFood => "rotten_food",
        }
    }
}

/// Agent action. The index order (stay, run, eat) is the one-hot encoding
/// convention used by the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Stay = 0,
    Run = 1,
    Eat = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Stay, Action::Run, Action::Eat];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Run => "run",
            Action::Eat => "eat",
        }
    }
}

/// Hunger and sickness, stored as indices on the 0.05 grid so that
/// transitions, resets and clamps are exact. Real values are recovered as
/// `k / 20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HiddenVars {
    hunger_k: u8,
    sickness_k: u8,
}

impl HiddenVars {
    /// Build from grid indices (clamped to 0..=20).
    pub fn from_grid(hunger_k: u8, sickness_k: u8) -> HiddenVars {
        HiddenVars {
            hunger_k: hunger_k.min(20),
            sickness_k: sickness_k.min(20),
        }
    }

    /// Build from real values, which must lie on the 0.05 grid.
    pub fn try_from_values(hunger: f64, sickness: f64) -> Result<HiddenVars, EnvError> {
        Ok(HiddenVars {
            hunger_k: grid_index(hunger)?,
            sickness_k: grid_index(sickness)?,
        })
    }

    pub fn hunger(&self) -> f32 {
        self.hunger_k as f32 / 20.0
    }

    pub fn sickness(&self) -> f32 {
        self.sickness_k as f32 / 20.0
    }

    pub fn hunger_grid(&self) -> u8 {
        self.hunger_k
    }

    pub fn sickness_grid(&self) -> u8 {
        self.sickness_k
    }

    pub fn values(&self) -> [f32; 2] {
        [self.hunger(), self.sickness()]
    }
}

fn grid_index(v: f64) -> Result<u8, EnvError> {
    let k = v * 20.0;
    let rounded = k.round();
    if (k - rounded).abs() > 1e-6 || !(0.0..=20.0).contains(&rounded) {
        return Err(EnvError::OffGrid(v));
    }
    Ok(rounded as u8)
}

/// Why an episode ended. `None` iff the episode is still running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationCause {
    None,
    Predator,
    Hunger,
    Sickness,
}

/// What the agent is allowed to see: the object class every step, and the
/// hidden variables only at the first step of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub object: ObjectClass,
    pub initial_hidden: Option<HiddenVars>,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub object: ObjectClass,
    pub hidden: HiddenVars,
    pub reward: f32,
    pub terminated: bool,
    pub cause: TerminationCause,
}

// ---------------------------------------------------------------------------
// Transition tables
// ---------------------------------------------------------------------------

/// Object transition probabilities, indexed `[object][action]`, each row a
/// (none, predator, prey, rotten food) tuple. Prey/rotten-food splits use
/// a = 0.65 and b = 0.35, written out as exact decimals.
pub const OBJECT_TRANSITIONS: [[[f64; 4]; 3]; 4] = [
    // none: stay, run, eat
    [
        [0.3, 0.35, 0.2275, 0.1225],
        [0.3, 0.25, 0.2925, 0.1575],
        [0.3, 0.35, 0.2275, 0.1225],
    ],
    // predator
    [
        [0.45, 0.2, 0.2275, 0.1225],
        [0.55, 0.1, 0.2275, 0.1225],
        [0.45, 0.2, 0.2275, 0.1225],
    ],
    // prey
    [
        [0.25, 0.35, 0.26, 0.14],
        [0.45, 0.35, 0.13, 0.07],
        [0.45, 0.35, 0.13, 0.07],
    ],
    // rotten food
    [
        [0.25, 0.35, 0.26, 0.14],
        [0.45, 0.35, 0.13, 0.07],
        [0.45, 0.35, 0.13, 0.07],
    ],
];

/// Hidden-variable deltas in grid units, indexed `[object][action]`.
/// `reset_hunger` encodes the table's "R": hunger goes to 0 exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenDelta {
    pub d_hunger: i8,
    pub d_sickness: i8,
    pub reset_hunger: bool,
}

const fn delta(d_hunger: i8, d_sickness: i8) -> HiddenDelta {
    HiddenDelta {
        d_hunger,
        d_sickness,
        reset_hunger: false,
    }
}

const fn reset(d_sickness: i8) -> HiddenDelta {
    HiddenDelta {
        d_hunger: 0,
        d_sickness,
        reset_hunger: true,
    }
}

pub const HIDDEN_DELTAS: [[HiddenDelta; 3]; 4] = [
    // none: stay, run, eat
    [delta(1, -1), delta(3, 2), delta(1, 1)],
    // predator
    [delta(1, -1), delta(3, 2), reset(1)],
    // prey
    [delta(1, -1), delta(3, 2), reset(1)],
    // rotten food
    [delta(1, -1), delta(3, 2), reset(5)],
];

/// Probability of being eaten when facing a predator, indexed by action.
/// The table gives stay and eat; running takes the hazard to zero.
pub const PREDATOR_HAZARD: [f64; 3] = [0.6, 0.0, 0.7];

/// Death hazard as a function of a hidden variable's grid index. The same
/// schedule applies to hunger and sickness: zero up to 0.7, then 0.05, 0.1,
/// 0.2, 0.4, 0.7 and certain death at 1.0.
pub const HIDDEN_HAZARD: [f64; HIDDEN_GRID_POINTS] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, // <= 0.70
    0.05, // 0.75
    0.1,  // 0.80
    0.2,  // 0.85
    0.4,  // 0.90
    0.7,  // 0.95
    1.0,  // 1.00
];

/// The transition-table row for an (object, action) pair, as
/// (none, predator, prey, rotten food) probabilities.
pub fn object_transition_row(object: ObjectClass, action: Action) -> [f64; 4] {
    OBJECT_TRANSITIONS[object.index()][action.index()]
}

/// Apply the hidden-variable delta for (object, action), clamping to [0, 1].
pub fn hidden_transition(hidden: HiddenVars, object: ObjectClass, action: Action) -> HiddenVars {
    let d = HIDDEN_DELTAS[object.index()][action.index()];
    let hunger_k = if d.reset_hunger {
        0
    } else {
        clamp_grid(hidden.hunger_k as i16 + d.d_hunger as i16)
    };
    let sickness_k = clamp_grid(hidden.sickness_k as i16 + d.d_sickness as i16);
    HiddenVars {
        hunger_k,
        sickness_k,
    }
}

fn clamp_grid(k: i16) -> u8 {
    k.clamp(0, 20) as u8
}

/// Three independent hazard draws: predator (only when the current object is
/// a predator), hunger and sickness. The cause reports the first firing
/// source in that order. Always consumes exactly three draws.
pub fn terminal_check<R: Rng>(
    object: ObjectClass,
    action: Action,
    next_hidden: HiddenVars,
    rng: &mut R,
) -> (bool, TerminationCause) {
    let p_predator = if object == ObjectClass::Predator {
        PREDATOR_HAZARD[action.index()]
    } else {
        0.0
    };
    let predator = rng.gen::<f64>() < p_predator;
    let hunger = rng.gen::<f64>() < HIDDEN_HAZARD[next_hidden.hunger_k as usize];
    let sickness = rng.gen::<f64>() < HIDDEN_HAZARD[next_hidden.sickness_k as usize];
    let cause = if predator {
        TerminationCause::Predator
    } else if hunger {
        TerminationCause::Hunger
    } else if sickness {
        TerminationCause::Sickness
    } else {
        TerminationCause::None
    };
    (predator || hunger || sickness, cause)
}

// ---------------------------------------------------------------------------
// Environment state
// ---------------------------------------------------------------------------

/// Full environment state. Single-owner: one rng stream per instance, so a
/// fixed seed determines every stochastic draw.
#[derive(Debug, Clone)]
pub struct EnvState {
    object: ObjectClass,
    hidden: HiddenVars,
    time: u32,
    done: bool,
    rng: ChaCha8Rng,
}

impl EnvState {
    /// Start a new episode: object uniform over the four classes, hunger and
    /// sickness independently uniform over the grid points 0.00..=0.50.
    pub fn reset(seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let object = ObjectClass::ALL[rng.gen_range(0..4)];
        let hunger_k = rng.gen_range(0..=10u8);
        let sickness_k = rng.gen_range(0..=10u8);
        EnvState {
            object,
            hidden: HiddenVars {
                hunger_k,
                sickness_k,
            },
            time: 1,
            done: false,
            rng,
        }
    }

    pub fn object(&self) -> ObjectClass {
        self.object
    }

    /// True hidden variables. Only evaluation and the B1 baseline may read
    /// these; they are not part of the observation after t = 1.
    pub fn hidden(&self) -> HiddenVars {
        self.hidden
    }

    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Partial observation: the object class, plus the hidden variables at
    /// t = 1 only.
    pub fn observe(&self) -> Observation {
        Observation {
            object: self.object,
            initial_hidden: (self.time == 1).then_some(self.hidden),
        }
    }

    /// Advance one step: update hidden variables, run the hazard draws
    /// against the just-updated values, then sample the next object. The
    /// object draw happens even on terminal steps (the value is simply never
    /// observed). Reward is 1 every step, including the last.
    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let next_hidden = hidden_transition(self.hidden, self.object, action);
        let (terminated, cause) = terminal_check(self.object, action, next_hidden, &mut self.rng);
        let row = object_transition_row(self.object, action);
        let next_object = sample_categorical(&row, &mut self.rng);

        self.object = next_object;
        self.hidden = next_hidden;
        self.time += 1;
        self.done = terminated;

        Ok(StepResult {
            object: next_object,
            hidden: next_hidden,
            reward: 1.0,
            terminated,
            cause,
        })
    }
}

fn sample_categorical<R: Rng>(probs: &[f64; 4], rng: &mut R) -> ObjectClass {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return ObjectClass::ALL[i];
        }
    }
    ObjectClass::RottenFood
}

// ---------------------------------------------------------------------------
// Table export
// ---------------------------------------------------------------------------

/// JSON-exportable copy of every constant that defines the dynamics, for
/// conformance checks against an external reference.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransitionTables {
    pub object_transitions: Vec<ObjectTransitionRow>,
    pub hidden_deltas: Vec<HiddenDeltaRow>,
    pub predator_hazard: PredatorHazard,
    pub hidden_hazard: Vec<HiddenHazardEntry>,
    pub initial_hidden_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObjectTransitionRow {
    pub object: String,
    pub action: String,
    pub probabilities: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HiddenDeltaRow {
    pub object: String,
    pub action: String,
    pub d_hunger: f64,
    pub d_sickness: f64,
    pub reset_hunger: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PredatorHazard {
    pub stay: f64,
    pub run: f64,
    pub eat: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HiddenHazardEntry {
    pub value: f64,
    pub probability: f64,
}

pub fn dump_tables() -> TransitionTables {
    let mut object_transitions = Vec::new();
    let mut hidden_deltas = Vec::new();
    for object in ObjectClass::ALL {
        for action in Action::ALL {
            object_transitions.push(ObjectTransitionRow {
                object: object.name().to_string(),
                action: action.name().to_string(),
                probabilities: object_transition_row(object, action),
            });
            let d = HIDDEN_DELTAS[object.index()][action.index()];
            hidden_deltas.push(HiddenDeltaRow {
                object: object.name().to_string(),
                action: action.name().to_string(),
                d_hunger: d.d_hunger as f64 * 0.05,
                d_sickness: d.d_sickness as f64 * 0.05,
                reset_hunger: d.reset_hunger,
            });
        }
    }
    TransitionTables {
        object_transitions,
        hidden_deltas,
        predator_hazard: PredatorHazard {
            stay: PREDATOR_HAZARD[Action::Stay.index()],
            run: PREDATOR_HAZARD[Action::Run.index()],
            eat: PREDATOR_HAZARD[Action::Eat.index()],
        },
        hidden_hazard: HIDDEN_HAZARD
            .iter()
            .enumerate()
            .map(|(k, &p)| HiddenHazardEntry {
                value: k as f64 / 20.0,
                probability: p,
            })
            .collect(),
        initial_hidden_grid: (0..=10).map(|k| k as f64 / 20.0).collect(),
    }
}

/// Sanity-check the embedded tables: rows sum to one, hazards are
/// probabilities, deltas stay on the grid. Guards against accidental edits.
pub fn validate_tables(tables: &TransitionTables) -> Result<(), String> {
    if tables.object_transitions.len() != 12 {
        return Err(format!(
            "expected 12 object-transition rows, found {}",
            tables.object_transitions.len()
        ));
    }
    for row in &tables.object_transitions {
        let sum: f64 = row.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(format!(
                "row ({}, {}) sums to {sum}, expected 1",
                row.object, row.action
            ));
        }
        if row.probabilities.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(format!("row ({}, {}) has an invalid probability", row.object, row.action));
        }
    }
    for entry in &tables.hidden_hazard {
        if !(0.0..=1.0).contains(&entry.probability) {
            return Err(format!("hidden hazard at {} out of range", entry.value));
        }
    }
    let last = tables
        .hidden_hazard
        .last()
        .ok_or_else(|| "empty hidden hazard table".to_string())?;
    if last.probability != 1.0 {
        return Err("hazard at 1.0 must be certain death".to_string());
    }
    for row in &tables.hidden_deltas {
        let on_grid = |v: f64| (v * 20.0 - (v * 20.0).round()).abs() < 1e-9;
        if !on_grid(row.d_hunger) || !on_grid(row.d_sickness) {
            return Err(format!("delta ({}, {}) off the grid", row.object, row.action));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sum_to_one() {
        for object in ObjectClass::ALL {
            for action in Action::ALL {
                let row = object_transition_row(object, action);
                let sum: f64 = row.iter().sum();
                assert!(
                    (sum - 1.0).abs() < 1e-12,
                    "row ({object:?}, {action:?}) sums to {sum}"
                );
            }
        }
    }

    #[test]
    fn table_rows_match_published_values() {
        assert_eq!(
            object_transition_row(ObjectClass::Predator, Action::Run),
            [0.55, 0.1, 0.2275, 0.1225]
        );
        assert_eq!(
            object_transition_row(ObjectClass::None, Action::Stay),
            [0.3, 0.35, 0.2275, 0.1225]
        );
        assert_eq!(
            object_transition_row(ObjectClass::Prey, Action::Stay),
            [0.25, 0.35, 0.26, 0.14]
        );
        assert_eq!(
            object_transition_row(ObjectClass::RottenFood, Action::Eat),
            [0.45, 0.35, 0.13, 0.07]
        );
    }

    #[test]
    fn hidden_transition_examples() {
        // Eating rotten food resets hunger and raises sickness by 0.25.
        let h = HiddenVars::try_from_values(0.30, 0.20).unwrap();
        let next = hidden_transition(h, ObjectClass::RottenFood, Action::Eat);
        assert_eq!(next.values(), [0.00, 0.45]);

        // Clamping at both ends.
        let h = HiddenVars::try_from_values(0.95, 0.00).unwrap();
        let next = hidden_transition(h, ObjectClass::None, Action::Stay);
        assert_eq!(next.values(), [1.00, 0.00]);

        // Running away from prey.
        let h = HiddenVars::try_from_values(0.10, 0.50).unwrap();
        let next = hidden_transition(h, ObjectClass::Prey, Action::Run);
        assert_eq!(next.values(), [0.25, 0.60]);
    }

    #[test]
    fn grid_construction_rejects_off_grid() {
        assert!(HiddenVars::try_from_values(0.33, 0.0).is_err());
        assert!(HiddenVars::try_from_values(-0.05, 0.0).is_err());
        assert!(HiddenVars::try_from_values(0.0, 1.05).is_err());
        assert!(HiddenVars::try_from_values(0.85, 1.0).is_ok());
    }

    #[test]
    fn reset_initial_ranges() {
        for seed in 0..200 {
            let state = EnvState::reset(seed);
            assert!(state.hidden().hunger() <= 0.50);
            assert!(state.hidden().sickness() <= 0.50);
            assert_eq!(state.time(), 1);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let a = EnvState::reset(42);
        let b = EnvState::reset(42);
        assert_eq!(a.object(), b.object());
        assert_eq!(a.hidden(), b.hidden());
        let mut a = a;
        let mut b = b;
        for action in [Action::Stay, Action::Eat, Action::Stay, Action::Run] {
            let (ra, rb) = (a.step(action), b.step(action));
            assert_eq!(ra, rb);
            if a.is_done() {
                break;
            }
        }
    }

    #[test]
    fn reset_object_frequencies_uniform() {
        let mut counts = [0usize; 4];
        let n = 44_000;
        for seed in 0..n {
            counts[EnvState::reset(seed as u64).object().index()] += 1;
        }
        for &c in &counts {
            let f = c as f64 / n as f64;
            assert!((0.24..=0.26).contains(&f), "class frequency {f}");
        }
    }

    #[test]
    fn certain_death_at_full_hunger() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let h = HiddenVars::from_grid(20, 0);
            let (terminated, cause) =
                terminal_check(ObjectClass::None, Action::Stay, h, &mut rng);
            assert!(terminated);
            assert_eq!(cause, TerminationCause::Hunger);
        }
    }

    #[test]
    fn low_hidden_cannot_terminate_without_predator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let h = HiddenVars::try_from_values(0.5, 0.5).unwrap();
            let (terminated, _) = terminal_check(ObjectClass::Prey, Action::Stay, h, &mut rng);
            assert!(!terminated);
        }
    }

    #[test]
    fn predator_eat_termination_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut deaths = 0;
        for _ in 0..n {
            let h = HiddenVars::from_grid(0, 0);
            let (terminated, cause) = terminal_check(ObjectClass::Predator, Action::Eat, h, &mut rng);
            if terminated {
                assert_eq!(cause, TerminationCause::Predator);
                deaths += 1;
            }
        }
        let rate = deaths as f64 / n as f64;
        assert!((rate - 0.7).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn step_composition_and_reward() {
        // From (rotten food, (0.3, 0.2)), eating cannot terminate: no
        // predator, and both updated hazards are below threshold.
        for seed in 0..300 {
            let mut state = EnvState::reset(seed);
            // Overwrite to the case under test; rng state stays seeded.
            state.object = ObjectClass::RottenFood;
            state.hidden = HiddenVars::try_from_values(0.3, 0.2).unwrap();
            let result = state.step(Action::Eat).unwrap();
            assert_eq!(result.hidden.values(), [0.00, 0.45]);
            assert!(!result.terminated);
            assert_eq!(result.reward, 1.0);
            assert_eq!(state.time(), 2);
        }
    }

    #[test]
    fn step_after_termination_is_an_error() {
        let mut state = EnvState::reset(3);
        state.hidden = HiddenVars::from_grid(19, 0); // next stay -> hunger 1.0
        let result = state.step(Action::Stay).unwrap();
        assert!(result.terminated);
        assert_eq!(result.cause, TerminationCause::Hunger);
        assert_eq!(state.step(Action::Stay), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn observation_hides_state_after_first_step() {
        let mut state = EnvState::reset(11);
        let obs = state.observe();
        assert_eq!(obs.initial_hidden, Some(state.hidden()));
        state.step(Action::Stay).unwrap();
        let obs = state.observe();
        assert_eq!(obs.initial_hidden, None);
        assert_eq!(obs.object, state.object());
    }

    #[test]
    fn always_run_is_certain_death_quickly() {
        // Running adds 0.15 hunger per step, so from any start the hunger
        // hazard reaches certainty within seven steps.
        for seed in 0..500 {
            let mut state = EnvState::reset(seed);
            let mut steps = 0;
            while !state.is_done() {
                state.step(Action::Run).unwrap();
                steps += 1;
                assert!(steps <= 8, "always-run survived {steps} steps");
            }
        }
    }

    #[test]
    fn validate_tables_accepts_constants_and_rejects_tampering() {
        let tables = dump_tables();
        validate_tables(&tables).unwrap();

        let mut tampered = tables.clone();
        tampered.object_transitions[0].probabilities[0] += 0.01;
        assert!(validate_tables(&tampered).is_err());

        let mut tampered = tables;
        tampered.hidden_hazard.last_mut().unwrap().probability = 0.9;
        assert!(validate_tables(&tampered).is_err());
    }

    #[test]
    fn dump_tables_round_trips_through_json() {
        let tables = dump_tables();
        let json = serde_json::to_string(&tables).unwrap();
        let back: TransitionTables = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tables);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Hidden variables stay on the grid and in range under any
            // action sequence.
            #[test]
            fn hidden_stays_on_grid(seed in 0u64..5000, actions in proptest::collection::vec(0usize..3, 1..60)) {
                let mut state = EnvState::reset(seed);
                for &a in &actions {
                    if state.is_done() {
                        break;
                    }
                    let result = state.step(Action::ALL[a]).unwrap();
                    prop_assert!(result.hidden.hunger_grid() <= 20);
                    prop_assert!(result.hidden.sickness_grid() <= 20);
                    prop_assert_eq!(result.reward, 1.0);
                    prop_assert_eq!(result.terminated, result.cause != TerminationCause::None);
                }
            }
        }
    }
}
