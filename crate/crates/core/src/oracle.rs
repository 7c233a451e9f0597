//! Brute-force and randomized reference search for small instances.
//!
//! Scoring here is a second, separate implementation of the rate, harvesting,
//! power, constraint and reward formulas. It reads only the frozen
//! [`Instance`] data and never calls into [`crate::env`], [`crate::rates`] or
//! [`crate::power`], so a slip in one code path shows up as a disagreement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{project_action, ActionLayout, ActionVector, Instance, ProjectionContext, RewardMode, Scheme};
use crate::error::{Error, Result};
use crate::power::PowerTermMode;
use crate::rates::{Beamformers, RateSplit, Selection};
use crate::scenario::Scenario;

const N_CHECKS: usize = 7;

/// A frozen instance together with how actions are rewarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub instance: Instance,
    pub reward_mode: RewardMode,
    pub penalty_weight: f64,
    /// Used only to build raw actions for random search.
    pub split_scale: f64,
}

impl Problem {
    pub fn new(scenario: &Scenario, users: &[crate::channel::Mount], scheme: Scheme) -> Result<Self> {
        Ok(Self {
            instance: scenario.instance(users, scheme)?,
            reward_mode: scenario.environment.reward_mode,
            penalty_weight: scenario.environment.penalty_weight,
            split_scale: scenario.environment.split_scale,
        })
    }

    pub fn from_env(env: &crate::env::Environment) -> Self {
        let e = &env.scenario().environment;
        Self {
            instance: env.instance().clone(),
            reward_mode: e.reward_mode,
            penalty_weight: e.penalty_weight,
            split_scale: e.split_scale,
        }
    }

    fn scheme(&self) -> Scheme {
        self.instance.options.scheme
    }

    fn layout(&self) -> ActionLayout {
        self.instance.layout()
    }
}

/// Outcome of scoring one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub reward: f64,
    pub aggregate: f64,
    pub satisfied: usize,
    pub feasible: bool,
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

fn within(lhs: f64, rhs: f64, tol: f64) -> bool {
    lhs - rhs >= -tol * lhs.abs().max(rhs.abs())
}

/// Everything about an action that does not depend on the rate split.
#[derive(Debug, Clone)]
struct Physics {
    common: Vec<f64>,
    /// Per-user rate excluding any credited common portion.
    own: Vec<f64>,
    /// How many of the checks the split cannot affect (power budget,
    /// harvesting, LED count, dimming level, amplitude) are met.
    fixed_count: usize,
}

fn physics(p: &Problem, selection: &[bool], beams: &Beamformers) -> Physics {
    let inst = &p.instance;
    let h = inst.channels.as_flat();
    let (k_users, n_leds) = (inst.n_users(), inst.n_leds());
    let tol = inst.options.tolerance;
    let bias = inst.dimming_state.dc_bias;

    let received = |user: usize, w: &[f64]| -> f64 {
        let mut a = 0.0;
        for n in 0..n_leds {
            if selection[n] {
                a += h[user * n_leds + n] * w[n];
            }
        }
        a * a
    };
    // rx[i][0] is the common stream at user i, rx[i][1 + j] private stream j
    let rx: Vec<Vec<f64>> = (0..k_users)
        .map(|i| std::iter::once(&beams.common).chain(&beams.private).map(|w| received(i, w)).collect())
        .collect();

    let (common, own) = match p.scheme() {
        Scheme::Rsma => {
            let mut common = Vec::with_capacity(k_users);
            let mut own = Vec::with_capacity(k_users);
            for i in 0..k_users {
                let noise = inst.noise_vars[i];
                let all_private: f64 = rx[i][1..].iter().sum();
                let others: f64 = (0..k_users).filter(|&j| j != i).map(|j| rx[i][1 + j]).sum();
                common.push(log2_1p(rx[i][0] / (all_private + noise)));
                own.push(log2_1p(rx[i][1 + i] / (others + noise)));
            }
            (common, own)
        }
        Scheme::Noma => {
            let strength: Vec<f64> = (0..k_users)
                .map(|i| (0..n_leds).filter(|&n| selection[n]).map(|n| h[i * n_leds + n].powi(2)).sum())
                .collect();
            // position 0 is decoded last (strongest)
            let mut pos = vec![0usize; k_users];
            for i in 0..k_users {
                pos[i] = (0..k_users)
                    .filter(|&j| strength[j] > strength[i] || (strength[j] == strength[i] && j < i))
                    .count();
            }
            let own = (0..k_users)
                .map(|j| {
                    let mut best = f64::INFINITY;
                    for i in 0..k_users {
                        if pos[i] > pos[j] {
                            continue;
                        }
                        let mut noise = inst.noise_vars[i];
                        for l in 0..k_users {
                            if pos[l] < pos[j] {
                                noise += rx[i][1 + l];
                            }
                        }
                        best = best.min(log2_1p(rx[i][1 + j] / noise));
                    }
                    best
                })
                .collect();
            (vec![0.0; k_users], own)
        }
    };

    let hv = &inst.harvesting;
    let mut harvested_total = 0.0;
    let mut harvest_ok = true;
    for i in 0..k_users {
        let row = &h[i * n_leds..(i + 1) * n_leds];
        let lit: f64 = row.iter().zip(selection).filter(|(_, &on)| on).map(|(g, _)| g * bias).sum();
        let seen: f64 = if inst.options.eh_log_active_only { lit } else { row.iter().map(|g| g * bias).sum() };
        let e = if lit > 0.0 { hv.fill_factor * hv.thermal_voltage * lit * (seen / hv.dark_saturation).ln_1p() } else { 0.0 };
        harvested_total += e;
        harvest_ok &= within(e, inst.thresholds.p_har_min, tol);
    }

    let weight = |w: f64| match inst.options.power_term_mode {
        PowerTermMode::AsPrinted => w,
        PowerTermMode::Absolute => w.abs(),
        PowerTermMode::Squared => w * w,
    };
    let n_on = selection.iter().filter(|&&s| s).count();
    let mut swing = 0.0;
    for n in (0..n_leds).filter(|&n| selection[n]) {
        swing += weight(beams.common[n]);
        for w in &beams.private {
            swing += weight(w[n]);
        }
    }
    let total = inst.power.amplifier_factor * swing + inst.power.conversion_factor * n_on as f64 * bias - harvested_total;

    let d = &inst.dimming;
    let reached = n_on as f64 * (bias - d.current_min) / (d.n_leds as f64 * (0.5 * (d.current_min + d.current_max) - d.current_min));
    let xi = inst.dimming_state.amplitude_budget;
    let amplitude_ok = (0..n_leds).all(|n| {
        let a = beams.common[n].abs() + beams.private.iter().map(|w| w[n].abs()).sum::<f64>();
        within(xi, a, tol)
    });

    let fixed_ok = [
        within(inst.thresholds.p_max, total, tol),
        harvest_ok,
        n_on == inst.dimming_state.n_active,
        (reached - d.target_level).abs() <= crate::dimming::DIMMING_TOLERANCE * d.target_level,
        amplitude_ok,
    ];
    Physics { common, own, fixed_count: fixed_ok.iter().filter(|&&b| b).count() }
}

fn finish(p: &Problem, ph: &Physics, split: &[f64]) -> Score {
    let inst = &p.instance;
    let tol = inst.options.tolerance;
    let (decodable, credit) = match p.scheme() {
        Scheme::Rsma => {
            let demand: f64 = split.iter().sum();
            let weakest = ph.common.iter().copied().fold(f64::INFINITY, f64::min);
            let ok = demand <= 0.0 || within(weakest, demand, tol);
            (ok, ok)
        }
        Scheme::Noma => (true, false),
    };
    let mut aggregate = 0.0;
    let mut qos_ok = true;
    for (i, own) in ph.own.iter().enumerate() {
        let rate = own + if credit { split[i] } else { 0.0 };
        aggregate += rate;
        qos_ok &= within(rate, inst.thresholds.qos, tol);
    }
    let satisfied = decodable as usize + qos_ok as usize + ph.fixed_count;
    let reward = match p.reward_mode {
        RewardMode::AsPaper => aggregate * (1 + satisfied) as f64,
        RewardMode::Penalty => aggregate - p.penalty_weight * (N_CHECKS - satisfied) as f64,
    };
    Score { reward, aggregate, satisfied, feasible: satisfied == N_CHECKS }
}

/// Score an arbitrary action.
pub fn score(problem: &Problem, action: &ActionVector) -> Score {
    let ph = physics(problem, &action.selection.0, &action.beamformers);
    finish(problem, &ph, &action.split.0)
}

/// Every way of lighting `n_active` of `n` LEDs, in lexicographic order of
/// the lit index sets.
pub fn enumerate_selections(n: usize, n_active: usize) -> Vec<Selection> {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<bool>, out: &mut Vec<Selection>) {
        if left == 0 {
            out.push(Selection(cur.clone()));
            return;
        }
        for i in start..=n - left {
            cur[i] = true;
            rec(i + 1, n, left - 1, cur, out);
            cur[i] = false;
        }
    }
    let mut out = Vec::new();
    if n_active <= n {
        rec(0, n, n_active, &mut vec![false; n], &mut out);
    }
    out
}

/// Integer points of the `dims`-dimensional L1 ball of radius `radius`.
fn l1_ball(dims: usize, radius: i64) -> Vec<Vec<i64>> {
    fn rec(dims: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == dims {
            out.push(cur.clone());
            return;
        }
        for v in -left..=left {
            cur.push(v);
            rec(dims, left - v.abs(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dims, radius, &mut Vec::with_capacity(dims), &mut out);
    out
}

/// Nonnegative integer vectors of length `dims` summing to at most `total`.
fn simplex(dims: usize, total: i64) -> Vec<Vec<i64>> {
    fn rec(dims: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == dims {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(dims, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dims, total, &mut Vec::with_capacity(dims), &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per axis of each LED's amplitude simplex (at least 2).
    pub beam_points: usize,
    /// Points per axis of the split simplex, as fractions of the weakest
    /// common rate (at least 1; 1 means the split is always zero).
    pub split_points: usize,
    pub max_evaluations: u64,
}

impl GridSpec {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self { beam_points: s.oracle.beam_points, split_points: s.oracle.split_points, max_evaluations: s.oracle.max_evaluations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_action: ActionVector,
    pub best_reward: f64,
    /// Largest aggregate rate among actions meeting every constraint.
    pub best_feasible_aggregate: Option<f64>,
    pub best_feasible_action: Option<ActionVector>,
    pub evaluations: u64,
}

impl OracleResult {
    pub const CSV_HEADER: &'static str =
        "method,scheme,seed,best_reward,best_feasible_aggregate,evaluations,config_hash,version";

    pub fn csv_row(&self, method: &str, scheme: Scheme, seed: u64, config_hash: &str) -> String {
        let feasible = self.best_feasible_aggregate.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{method},{scheme},{seed},{},{feasible},{},{config_hash},{}",
            self.best_reward,
            self.evaluations,
            crate::CODE_VERSION
        )
    }
}

/// Running best, merged by max with ties going to the earliest candidate so
/// the outcome is independent of how work was split across threads.
#[derive(Debug, Clone)]
struct Incumbent {
    best: Option<(f64, u64, ActionVector)>,
    feasible: Option<(f64, u64, ActionVector)>,
    evaluations: u64,
}

impl Incumbent {
    fn empty() -> Self {
        Self { best: None, feasible: None, evaluations: 0 }
    }

    fn better(a: &Option<(f64, u64, ActionVector)>, value: f64, id: u64) -> bool {
        match a {
            None => true,
            Some((v, i, _)) => value > *v || (value == *v && id < *i),
        }
    }

    fn offer(&mut self, score: Score, id: u64, action: impl Fn() -> ActionVector) {
        self.evaluations += 1;
        if Self::better(&self.best, score.reward, id) {
            self.best = Some((score.reward, id, action()));
        }
        if score.feasible && Self::better(&self.feasible, score.aggregate, id) {
            self.feasible = Some((score.aggregate, id, action()));
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.evaluations += other.evaluations;
        if let Some((v, i, a)) = other.best {
            if Self::better(&self.best, v, i) {
                self.best = Some((v, i, a));
            }
        }
        if let Some((v, i, a)) = other.feasible {
            if Self::better(&self.feasible, v, i) {
                self.feasible = Some((v, i, a));
            }
        }
        self
    }

    fn into_result(self) -> Result<OracleResult> {
        let (best_reward, _, best_action) =
            self.best.ok_or_else(|| Error::Domain("search evaluated no candidates".into()))?;
        Ok(OracleResult {
            best_action,
            best_reward,
            best_feasible_aggregate: self.feasible.as_ref().map(|f| f.0),
            best_feasible_action: self.feasible.map(|f| f.2),
            evaluations: self.evaluations,
        })
    }
}

/// Number of points [`grid_search`] would evaluate.
pub fn grid_size(problem: &Problem, spec: &GridSpec) -> u128 {
    let l = problem.layout();
    let n_active = problem.instance.dimming_state.n_active;
    let selections = enumerate_selections(l.n_leds, n_active).len() as u128;
    let beam_dims = match problem.scheme() {
        Scheme::Rsma => l.n_users + 1,
        Scheme::Noma => l.n_users,
    };
    let per_led = l1_ball(beam_dims, spec.beam_points.saturating_sub(1) as i64).len() as u128;
    let splits = match problem.scheme() {
        Scheme::Rsma => simplex(l.n_users, spec.split_points.saturating_sub(1) as i64).len() as u128,
        Scheme::Noma => 1,
    };
    selections.saturating_mul(per_led.saturating_pow(l.n_leds as u32)).saturating_mul(splits)
}

/// Exhaustive search over LED subsets, per-LED simplex beam grids and a
/// split grid.
///
/// Each LED's weights `(common, private_1..K)` range over `c * budget / G`
/// for integer `c` with `|c|_1 <= G`, `G = beam_points - 1`; under NOMA the
/// common coordinate is fixed at zero. Splits are `s / S` times the weakest
/// user's common rate for nonnegative integer `s` with `sum(s) <= S`,
/// `S = split_points - 1`.
pub fn grid_search(problem: &Problem, spec: &GridSpec) -> Result<OracleResult> {
    if spec.beam_points < 2 || spec.split_points < 1 {
        return Err(Error::InvalidConfig("grid needs beam_points >= 2 and split_points >= 1".into()));
    }
    let size = grid_size(problem, spec);
    if size > spec.max_evaluations as u128 {
        return Err(Error::GridCapExceeded { size, cap: spec.max_evaluations });
    }
    let l = problem.layout();
    let (n_leds, k_users) = (l.n_leds, l.n_users);
    let rsma = problem.scheme() == Scheme::Rsma;
    let xi = problem.instance.dimming_state.amplitude_budget;
    let g = (spec.beam_points - 1) as i64;
    let step = xi / g as f64;

    let selections = enumerate_selections(n_leds, problem.instance.dimming_state.n_active);
    let points = l1_ball(if rsma { k_users + 1 } else { k_users }, g);
    let split_den = (spec.split_points - 1).max(1) as f64;
    let fractions: Vec<Vec<f64>> = if rsma {
        simplex(k_users, (spec.split_points - 1) as i64)
            .into_iter()
            .map(|s| s.iter().map(|&v| v as f64 / split_den).collect())
            .collect()
    } else {
        vec![vec![0.0; k_users]]
    };
    let per_sel = (points.len() as u64).pow(n_leds as u32);
    let n_splits = fractions.len() as u64;
    let outer = selections.len() as u64 * per_sel;

    let beams_at = |mut combo: u64| -> Beamformers {
        let mut b = Beamformers::zeros(k_users, n_leds);
        for n in 0..n_leds {
            let c = &points[(combo % points.len() as u64) as usize];
            combo /= points.len() as u64;
            let (common, private) = if rsma { (c[0], &c[1..]) } else { (0, &c[..]) };
            b.common[n] = common as f64 * step;
            for k in 0..k_users {
                b.private[k][n] = private[k] as f64 * step;
            }
        }
        b
    };

    let inc = (0..outer)
        .into_par_iter()
        .fold(Incumbent::empty, |mut inc, o| {
            let sel = &selections[(o / per_sel) as usize];
            let beams = beams_at(o % per_sel);
            let ph = physics(problem, &sel.0, &beams);
            let weakest = ph.common.iter().copied().fold(f64::INFINITY, f64::min);
            for (si, f) in fractions.iter().enumerate() {
                let split: Vec<f64> = f.iter().map(|v| v * weakest).collect();
                let s = finish(problem, &ph, &split);
                inc.offer(s, o * n_splits + si as u64, || ActionVector {
                    beamformers: beams.clone(),
                    selection: sel.clone(),
                    split: RateSplit(split.clone()),
                });
            }
            inc
        })
        .reduce(Incumbent::empty, Incumbent::merge);
    inc.into_result()
}

/// Score an explicit candidate list.
pub fn search_candidates(problem: &Problem, candidates: &[ActionVector]) -> Result<OracleResult> {
    candidates
        .par_iter()
        .enumerate()
        .fold(Incumbent::empty, |mut inc, (i, a)| {
            inc.offer(score(problem, a), i as u64, || a.clone());
            inc
        })
        .reduce(Incumbent::empty, Incumbent::merge)
        .into_result()
}

/// Draw one random action: raw beams uniform in `[-1.5, 1.5]` budget units
/// pushed through the feasibility projection, uniform logits, and a split
/// that spends a uniformly random share of the weakest common rate.
fn random_action<R: Rng + ?Sized>(problem: &Problem, rng: &mut R) -> Result<ActionVector> {
    let l = problem.layout();
    let ctx = ProjectionContext {
        layout: l,
        n_active: problem.instance.dimming_state.n_active,
        amplitude_budget: problem.instance.dimming_state.amplitude_budget,
        scheme: problem.scheme(),
        split_scale: problem.split_scale,
    };
    let mut raw: Vec<f64> = (0..l.beam_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
    raw.extend(std::iter::repeat_n(0.0, l.n_users));
    raw.extend((0..l.n_leds).map(|_| rng.random::<f64>()));
    let mut action = project_action(&raw, &ctx)?;
    let shares: Vec<f64> = (0..l.n_users).map(|_| rng.random::<f64>()).collect();
    if problem.scheme() == Scheme::Rsma {
        let ph = physics(problem, &action.selection.0, &action.beamformers);
        let weakest = ph.common.iter().copied().fold(f64::INFINITY, f64::min);
        let total: f64 = shares.iter().sum();
        let norm = if total > 1.0 { total } else { 1.0 };
        action.split = RateSplit(shares.iter().map(|s| s / norm * weakest).collect());
    }
    Ok(action)
}

/// Sequential random search. A larger budget with the same seed evaluates a
/// superset of the same candidates, so the incumbent never gets worse.
pub fn random_search(problem: &Problem, budget: usize, seed: u64) -> Result<OracleResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inc = Incumbent::empty();
    for i in 0..budget {
        let a = random_action(problem, &mut rng)?;
        inc.offer(score(problem, &a), i as u64, || a.clone());
    }
    inc.into_result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{evaluate, reward, Environment};
    use crate::scenario::{default_scenario, tiny_scenario};
    use approx::assert_relative_eq;

    fn tiny_problem(scheme: Scheme) -> Problem {
        let env = Environment::new(&tiny_scenario(), scheme, 0).unwrap();
        Problem::from_env(&env)
    }

    #[test]
    fn selections_in_lexicographic_order() {
        let s = enumerate_selections(2, 1);
        assert_eq!(s, vec![Selection(vec![true, false]), Selection(vec![false, true])]);
        assert_eq!(enumerate_selections(3, 2).len(), 3);
        assert_eq!(enumerate_selections(6, 4).len(), 15);
        assert_eq!(enumerate_selections(3, 2)[0], Selection(vec![true, true, false]));
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(l1_ball(2, 10).len(), 221);
        assert_eq!(l1_ball(3, 1).len(), 7);
        assert_eq!(simplex(1, 10).len(), 11);
        assert_eq!(simplex(2, 10).len(), 66);
    }

    #[test]
    fn zero_action_only() {
        let p = tiny_problem(Scheme::Rsma);
        let zero = ActionVector::zeros(1, 2, 2);
        let r = search_candidates(&p, std::slice::from_ref(&zero)).unwrap();
        assert_eq!(r.best_action, zero);
        assert_eq!(r.best_reward, score(&p, &zero).reward);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn single_feasible_point() {
        let p = tiny_problem(Scheme::Rsma);
        let xi = p.instance.dimming_state.amplitude_budget;
        let a = ActionVector {
            beamformers: Beamformers { common: vec![0.0, 0.0], private: vec![vec![xi, xi]] },
            selection: Selection::all(2),
            split: RateSplit(vec![0.0]),
        };
        let r = search_candidates(&p, std::slice::from_ref(&a)).unwrap();
        assert_eq!(r.best_action, a);
        assert!(r.best_feasible_aggregate.is_some());
    }

    #[test]
    fn grid_best_agrees_with_environment() {
        let env = Environment::new(&tiny_scenario(), Scheme::Rsma, 0).unwrap();
        let p = Problem::from_env(&env);
        let r = grid_search(&p, &GridSpec { beam_points: 11, split_points: 11, max_evaluations: 10_000_000 }).unwrap();
        assert_eq!(r.evaluations, 221 * 221 * 11);
        let e = evaluate(env.instance(), &r.best_action).unwrap();
        let env_reward = reward(&e.metrics, &e.verdict, RewardMode::AsPaper, 1.0);
        assert_relative_eq!(env_reward, r.best_reward, max_relative = 1e-12);
        assert!(e.verdict.all());
    }

    #[test]
    fn cap_is_enforced() {
        let p = tiny_problem(Scheme::Rsma);
        let spec = GridSpec { beam_points: 11, split_points: 11, max_evaluations: 1000 };
        assert!(matches!(grid_search(&p, &spec), Err(Error::GridCapExceeded { .. })));
    }

    #[test]
    fn random_search_budget_one_and_prefix() {
        let p = tiny_problem(Scheme::Rsma);
        let one = random_search(&p, 1, 5).unwrap();
        assert_eq!(one.evaluations, 1);
        assert_eq!(one.best_reward, score(&p, &one.best_action).reward);
        let mut last = f64::NEG_INFINITY;
        for budget in [1, 2, 4, 8, 16, 64, 256] {
            let r = random_search(&p, budget, 5).unwrap();
            assert!(r.best_reward >= last);
            last = r.best_reward;
        }
    }

    #[test]
    fn random_search_close_to_grid() {
        let p = tiny_problem(Scheme::Rsma);
        let grid = grid_search(&p, &GridSpec { beam_points: 11, split_points: 11, max_evaluations: 10_000_000 }).unwrap();
        let rnd = random_search(&p, 100_000, 1).unwrap();
        assert!(rnd.best_reward >= 0.95 * grid.best_reward, "{} vs {}", rnd.best_reward, grid.best_reward);
    }

    #[test]
    fn agrees_with_environment_on_random_actions() {
        for scheme in [Scheme::Rsma, Scheme::Noma] {
            let mut s = default_scenario();
            s.dimming.target_level = 0.66;
            s.thresholds.qos = 0.5;
            let mut env = Environment::new(&s, scheme, 17).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for round in 0..100 {
                if round % 10 == 0 {
                    env.reset().unwrap();
                }
                let p = Problem::from_env(&env);
                let a = random_action(&p, &mut rng).unwrap();
                let e = evaluate(env.instance(), &a).unwrap();
                let r_env = reward(&e.metrics, &e.verdict, RewardMode::AsPaper, 1.0);
                let o = score(&p, &a);
                assert_eq!(o.satisfied, e.verdict.count_satisfied());
                assert_relative_eq!(o.reward, r_env, max_relative = 1e-12);
                assert_relative_eq!(o.aggregate, e.metrics.aggregate_rate, max_relative = 1e-12);
            }
        }
    }
}
