//! The downlink as a decision process.
//!
//! An action sets the beamformers, picks which LEDs glow and splits the
//! common rate. The next state reports the rates, harvested powers and beams
//! that action produced; the channel itself does not change within an
//! episode, users are re-drawn on every reset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, Mount};
use crate::dimming::{achieved_level, verify_dimming_constraint, DimmingConfig, DimmingState, DIMMING_TOLERANCE};
use crate::error::{Error, Result};
use crate::geq_with_slack;
use crate::power::{energy_efficiency, harvested_power, total_power, HarvestingConstants, PowerConstants, PowerTermMode};
use crate::rates::{noma_rates, rsma_rates, Beamformers, RateSplit, Selection};
use crate::scenario::Scenario;

pub const N_CONSTRAINTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rsma,
    Noma,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Rsma => "rsma",
            Scheme::Noma => "noma",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsma" => Ok(Scheme::Rsma),
            "noma" => Ok(Scheme::Noma),
            other => Err(Error::InvalidConfig(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Minimum per-user rate (bits/s/Hz).
    pub qos: f64,
    /// Transmitter power budget (W).
    pub p_max: f64,
    /// Minimum per-user harvested power (W).
    pub p_har_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// Objective plus the objective again for every satisfied constraint.
    #[default]
    AsPaper,
    /// Objective minus a fixed penalty per violated constraint.
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub scheme: Scheme,
    pub power_term_mode: PowerTermMode,
    pub eh_log_active_only: bool,
    pub tolerance: f64,
}

/// Everything needed to score an action: the scenario frozen at concrete user
/// positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub channels: ChannelMatrix,
    pub dimming: DimmingConfig,
    pub dimming_state: DimmingState,
    pub harvesting: HarvestingConstants,
    pub power: PowerConstants,
    pub noise_vars: Vec<f64>,
    pub thresholds: Thresholds,
    pub options: ModelOptions,
}

impl Instance {
    pub fn n_users(&self) -> usize {
        self.channels.n_users()
    }

    pub fn n_leds(&self) -> usize {
        self.channels.n_leds()
    }

    pub fn layout(&self) -> ActionLayout {
        ActionLayout { n_leds: self.n_leds(), n_users: self.n_users() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub beamformers: Beamformers,
    pub selection: Selection,
    pub split: RateSplit,
}

impl ActionVector {
    pub fn zeros(n_users: usize, n_leds: usize, n_active: usize) -> Self {
        Self {
            beamformers: Beamformers::zeros(n_users, n_leds),
            selection: Selection::first(n_leds, n_active),
            split: RateSplit::zeros(n_users),
        }
    }
}

/// Layout of the unconstrained action vector produced by the policy:
/// `[common beam (N) | private beams (K x N, user-major) | split (K) | LED logits (N)]`.
/// Beam entries are in units of the amplitude budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLayout {
    pub n_leds: usize,
    pub n_users: usize,
}

impl ActionLayout {
    pub fn beam_dim(&self) -> usize {
        self.n_leds * (self.n_users + 1)
    }

    /// Coordinates drawn from the Gaussian head.
    pub fn continuous_dim(&self) -> usize {
        self.beam_dim() + self.n_users
    }

    pub fn logit_dim(&self) -> usize {
        self.n_leds
    }

    pub fn raw_dim(&self) -> usize {
        self.continuous_dim() + self.logit_dim()
    }

    pub fn state_dim(&self) -> usize {
        3 * self.n_users + self.beam_dim()
    }
}

/// Indices of the `k` largest scores, ties going to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Scale one LED's weights so their absolute sum stays within `budget`.
fn fit_led_to_budget(weights: &mut [&mut f64], budget: f64) {
    let sum: f64 = weights.iter().map(|w| w.abs()).sum();
    if sum <= budget {
        return;
    }
    let mut factor = budget / sum;
    loop {
        let scaled: f64 = weights.iter().map(|w| (**w * factor).abs()).sum();
        if scaled <= budget {
            break;
        }
        factor = factor.next_down();
    }
    for w in weights.iter_mut() {
        **w *= factor;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionContext {
    pub layout: ActionLayout,
    pub n_active: usize,
    pub amplitude_budget: f64,
    pub scheme: Scheme,
    pub split_scale: f64,
}

/// Map an unconstrained vector onto an action that meets the binary
/// selection count and the per-LED amplitude limit by construction.
///
/// Under NOMA the common beam and split are forced to zero before the
/// amplitude limit is applied.
pub fn project_action(raw: &[f64], ctx: &ProjectionContext) -> Result<ActionVector> {
    let l = ctx.layout;
    if raw.len() != l.raw_dim() {
        return Err(Error::DimensionMismatch { expected: l.raw_dim(), got: raw.len() });
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("raw action contains non-finite entries".into()));
    }
    let (n, k) = (l.n_leds, l.n_users);
    let xi = ctx.amplitude_budget;
    let noma = ctx.scheme == Scheme::Noma;

    let mut common: Vec<f64> = raw[..n].iter().map(|v| if noma { 0.0 } else { v * xi }).collect();
    let mut private: Vec<Vec<f64>> = raw[n..l.beam_dim()].chunks(n).map(|c| c.iter().map(|v| v * xi).collect()).collect();
    for led in 0..n {
        let mut ws: Vec<&mut f64> = Vec::with_capacity(k + 1);
        ws.push(&mut common[led]);
        for row in private.iter_mut() {
            ws.push(&mut row[led]);
        }
        fit_led_to_budget(&mut ws, xi);
    }

    let split_raw = &raw[l.beam_dim()..l.continuous_dim()];
    let split = split_raw.iter().map(|v| if noma { 0.0 } else { v.max(0.0) * ctx.split_scale }).collect();

    let chosen = top_k(&raw[l.continuous_dim()..], ctx.n_active);
    let mut selection = vec![false; n];
    for i in chosen {
        selection[i] = true;
    }
    Ok(ActionVector { beamformers: Beamformers { common, private }, selection: Selection(selection), split: RateSplit(split) })
}

/// Observation fed to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub common_rates: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub harvested: Vec<f64>,
    /// Common beam then private beams, user-major.
    pub beams: Vec<f64>,
}

impl StateVector {
    pub fn dim(&self) -> usize {
        self.common_rates.len() + self.private_rates.len() + self.harvested.len() + self.beams.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.common_rates);
        v.extend_from_slice(&self.private_rates);
        v.extend_from_slice(&self.harvested);
        v.extend_from_slice(&self.beams);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub common_rates: Vec<f64>,
    pub private_rates: Vec<f64>,
    /// Rate each user actually receives: credited common portion plus private.
    pub user_rates: Vec<f64>,
    pub harvested: Vec<f64>,
    pub total_power: f64,
    pub aggregate_rate: f64,
    /// `None` when the net power is not positive.
    pub energy_efficiency: Option<f64>,
    pub common_decodable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    pub satisfied: [bool; N_CONSTRAINTS],
    /// Signed slack of each constraint; non-negative when met.
    pub margins: [f64; N_CONSTRAINTS],
}

impl ConstraintVerdict {
    pub fn count_satisfied(&self) -> usize {
        self.satisfied.iter().filter(|&&s| s).count()
    }

    pub fn all(&self) -> bool {
        self.satisfied.iter().all(|&s| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub state: StateVector,
    pub metrics: SystemMetrics,
    pub verdict: ConstraintVerdict,
}

fn min_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

/// Score an action: rates, harvested powers, net power and constraint checks.
pub fn evaluate(instance: &Instance, action: &ActionVector) -> Result<Evaluation> {
    let (k_users, n_leds) = (instance.n_users(), instance.n_leds());
    let beams = &action.beamformers;
    if beams.n_leds() != n_leds || beams.n_users() != k_users || action.selection.len() != n_leds {
        return Err(Error::DimensionMismatch { expected: n_leds, got: beams.n_leds() });
    }
    if action.split.0.len() != k_users {
        return Err(Error::DimensionMismatch { expected: k_users, got: action.split.0.len() });
    }
    let opts = &instance.options;
    let tol = opts.tolerance;
    let dim = &instance.dimming_state;
    let sel = &action.selection;

    let report = match opts.scheme {
        Scheme::Rsma => rsma_rates(&instance.channels, sel, beams, &action.split, &instance.noise_vars, tol)?,
        Scheme::Noma => noma_rates(&instance.channels, sel, &beams.private, &instance.noise_vars)?,
    };
    let credited: Vec<f64> = match opts.scheme {
        Scheme::Rsma if report.common_decodable => action.split.0.clone(),
        _ => vec![0.0; k_users],
    };
    let user_rates: Vec<f64> = credited.iter().zip(&report.private_rates).map(|(c, p)| c + p).collect();

    let harvested: Vec<f64> = (0..k_users)
        .map(|k| harvested_power(k, &instance.channels, sel, dim.dc_bias, &instance.harvesting, opts.eh_log_active_only))
        .collect();
    let n_on = sel.count_active();
    let p_tot = total_power(beams, sel, dim.dc_bias, n_on, &harvested, &instance.power, opts.power_term_mode);

    let th = &instance.thresholds;
    let mut satisfied = [false; N_CONSTRAINTS];
    let mut margins = [0.0; N_CONSTRAINTS];

    let demand = match opts.scheme {
        Scheme::Rsma => action.split.total(),
        Scheme::Noma => 0.0,
    };
    let weakest_common = min_of(report.common_rates.iter().copied());
    margins[0] = weakest_common - demand;
    satisfied[0] = demand <= 0.0 || geq_with_slack(weakest_common, demand, tol);

    margins[1] = min_of(user_rates.iter().map(|r| r - th.qos));
    satisfied[1] = user_rates.iter().all(|&r| geq_with_slack(r, th.qos, tol));

    margins[2] = th.p_max - p_tot;
    satisfied[2] = geq_with_slack(th.p_max, p_tot, tol);

    margins[3] = min_of(harvested.iter().map(|p| p - th.p_har_min));
    satisfied[3] = harvested.iter().all(|&p| geq_with_slack(p, th.p_har_min, tol));

    margins[4] = -(n_on as f64 - dim.n_active as f64).abs();
    satisfied[4] = n_on == dim.n_active;

    let level = achieved_level(n_on, dim.dc_bias, &instance.dimming);
    margins[5] = DIMMING_TOLERANCE * instance.dimming.target_level - (level - instance.dimming.target_level).abs();
    satisfied[5] = verify_dimming_constraint(n_on, dim.dc_bias, &instance.dimming);

    let xi = dim.amplitude_budget;
    margins[6] = min_of((0..n_leds).map(|n| xi - beams.led_amplitude(n)));
    satisfied[6] = (0..n_leds).all(|n| geq_with_slack(xi, beams.led_amplitude(n), tol));

    let metrics = SystemMetrics {
        energy_efficiency: energy_efficiency(report.aggregate, p_tot).ok(),
        common_rates: report.common_rates.clone(),
        private_rates: report.private_rates.clone(),
        user_rates,
        harvested: harvested.clone(),
        total_power: p_tot,
        aggregate_rate: report.aggregate,
        common_decodable: report.common_decodable,
    };
    let state = StateVector {
        common_rates: report.common_rates,
        private_rates: report.private_rates,
        harvested,
        beams: beams.flatten(),
    };
    Ok(Evaluation { state, metrics, verdict: ConstraintVerdict { satisfied, margins } })
}

pub fn reward(metrics: &SystemMetrics, verdict: &ConstraintVerdict, mode: RewardMode, penalty_weight: f64) -> f64 {
    let r = metrics.aggregate_rate;
    let met = verdict.count_satisfied();
    match mode {
        RewardMode::AsPaper => r * (1 + met) as f64,
        RewardMode::Penalty => r - penalty_weight * (N_CONSTRAINTS - met) as f64,
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub action: ActionVector,
    pub metrics: SystemMetrics,
    pub verdict: ConstraintVerdict,
    pub done: bool,
}

/// Single-owner episodic environment over one [`Scenario`].
#[derive(Debug, Clone)]
pub struct Environment {
    scenario: Scenario,
    scheme: Scheme,
    rng: ChaCha8Rng,
    users: Vec<Mount>,
    instance: Instance,
    observation: Vec<f64>,
    steps_taken: usize,
}

impl Environment {
    /// Build the environment and draw the first user placement.
    pub fn new(scenario: &Scenario, scheme: Scheme, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users = scenario.sample_users(&mut rng);
        let instance = scenario.instance(&users, scheme)?;
        let mut env = Self {
            scenario: scenario.clone(),
            scheme,
            rng,
            users,
            instance,
            observation: Vec::new(),
            steps_taken: 0,
        };
        env.observation = env.initial_observation()?;
        Ok(env)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn users(&self) -> &[Mount] {
        &self.users
    }

    pub fn layout(&self) -> ActionLayout {
        self.instance.layout()
    }

    pub fn n_active(&self) -> usize {
        self.instance.dimming_state.n_active
    }

    pub fn episode_len(&self) -> usize {
        self.scenario.environment.episode_len
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn observation(&self) -> &[f64] {
        &self.observation
    }

    pub fn observation_dim(&self) -> usize {
        let base = self.layout().state_dim();
        if self.scenario.environment.augment_state_with_channels {
            base + self.instance.channels.as_flat().len()
        } else {
            base
        }
    }

    pub fn projection_context(&self) -> ProjectionContext {
        ProjectionContext {
            layout: self.layout(),
            n_active: self.n_active(),
            amplitude_budget: self.instance.dimming_state.amplitude_budget,
            scheme: self.scheme,
            split_scale: self.scenario.environment.split_scale,
        }
    }

    fn observe(&self, state: &StateVector) -> Vec<f64> {
        let mut v = state.to_vec();
        if self.scenario.environment.augment_state_with_channels {
            v.extend_from_slice(self.instance.channels.as_flat());
        }
        v
    }

    /// The first state of an episode: metrics of a silent transmitter with the
    /// first `N_a` LEDs lit.
    fn initial_observation(&self) -> Result<Vec<f64>> {
        let l = self.layout();
        let idle = ActionVector::zeros(l.n_users, l.n_leds, self.n_active());
        Ok(self.observe(&evaluate(&self.instance, &idle)?.state))
    }

    /// Start a new episode with freshly drawn users.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        let users = self.scenario.sample_users(&mut self.rng);
        self.reset_with_users(users)
    }

    /// Start a new episode with the given user placement.
    pub fn reset_with_users(&mut self, users: Vec<Mount>) -> Result<Vec<f64>> {
        if users.len() != self.scenario.n_users() {
            return Err(Error::DimensionMismatch { expected: self.scenario.n_users(), got: users.len() });
        }
        self.instance = self.scenario.instance(&users, self.scheme)?;
        self.users = users;
        self.steps_taken = 0;
        self.observation = self.initial_observation()?;
        Ok(self.observation.clone())
    }

    pub fn step(&mut self, raw: &[f64]) -> Result<Step> {
        let action = project_action(raw, &self.projection_context())?;
        self.step_action(action)
    }

    pub fn step_action(&mut self, action: ActionVector) -> Result<Step> {
        if self.steps_taken >= self.episode_len() {
            return Err(Error::EpisodeTerminated(self.steps_taken));
        }
        let eval = evaluate(&self.instance, &action)?;
        let env = &self.scenario.environment;
        let r = reward(&eval.metrics, &eval.verdict, env.reward_mode, env.penalty_weight);
        self.steps_taken += 1;
        self.observation = self.observe(&eval.state);
        Ok(Step {
            next_state: self.observation.clone(),
            reward: r,
            action,
            metrics: eval.metrics,
            verdict: eval.verdict,
            done: self.steps_taken >= self.episode_len(),
        })
    }
}
