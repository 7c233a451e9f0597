//! Self-checks run by `slipt validate` against a configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dimming::{active_led_count, verify_dimming_constraint, DimmingConfig, DimmingState};
use crate::env::{evaluate, project_action, reward, Environment, Scheme};
use crate::oracle::{score, Problem};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, outcome: std::result::Result<String, String>) {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(Check { name, passed, detail });
    }

    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

fn round_trip(s: &Scenario) -> std::result::Result<String, String> {
    let text = s.to_toml().map_err(|e| e.to_string())?;
    match Scenario::from_toml(&text) {
        Ok(back) if &back == s => Ok("emit/parse is lossless".into()),
        Ok(_) => Err("parsed config differs from the original".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn dimming_grid(s: &Scenario) -> std::result::Result<String, String> {
    let base = s.dimming_config();
    for i in 1..=1000 {
        let cfg = DimmingConfig { target_level: i as f64 / 1000.0, ..base };
        let st = DimmingState::from_config(&cfg).map_err(|e| e.to_string())?;
        if !verify_dimming_constraint(active_led_count(&cfg), st.dc_bias, &cfg) && !st.bias_clamped {
            return Err(format!("dimming level {} not reproduced", cfg.target_level));
        }
        if st.amplitude_budget < 0.0 {
            return Err(format!("negative amplitude budget at level {}", cfg.target_level));
        }
    }
    Ok("1000 levels reproduced".into())
}

fn channels(s: &Scenario, placements: usize, seed: u64) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..placements {
        let inst = s.instance(&s.sample_users(&mut rng), Scheme::Rsma).map_err(|e| e.to_string())?;
        if inst.channels.as_flat().iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err("channel gain negative or non-finite".into());
        }
    }
    Ok(format!("{placements} placements"))
}

/// Random projected actions: the projection must meet the selection count
/// and amplitude limit, harvest must stay below consumption and the two
/// evaluators must agree.
fn actions(s: &Scenario, scheme: Scheme, count: usize, seed: u64) -> std::result::Result<String, String> {
    let mut env = Environment::new(s, scheme, seed).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let raw_dim = env.layout().raw_dim();
    let mut worst: f64 = 0.0;
    for i in 0..count {
        if i % 10 == 0 {
            env.reset().map_err(|e| e.to_string())?;
        }
        let raw: Vec<f64> = (0..raw_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = project_action(&raw, &env.projection_context()).map_err(|e| e.to_string())?;
        let e = evaluate(env.instance(), &a).map_err(|e| e.to_string())?;
        if !(e.verdict.satisfied[4] && e.verdict.satisfied[6]) {
            return Err("projected action violates the LED count or amplitude limit".into());
        }
        let inst = env.instance();
        let consumption = inst.power.conversion_factor * a.selection.count_active() as f64 * inst.dimming_state.dc_bias;
        if e.metrics.harvested.iter().sum::<f64>() >= consumption && consumption > 0.0 {
            return Err("harvested power exceeds DC consumption".into());
        }
        let envr = &s.environment;
        let r_env = reward(&e.metrics, &e.verdict, envr.reward_mode, envr.penalty_weight);
        let r_oracle = score(&Problem::from_env(&env), &a).reward;
        let rel = (r_env - r_oracle).abs() / r_env.abs().max(r_oracle.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    if worst <= 1e-12 {
        Ok(format!("{count} actions, worst evaluator disagreement {worst:.1e}"))
    } else {
        Err(format!("evaluators disagree by {worst:.3e}"))
    }
}

/// Run every check. Configuration errors surface as failed checks rather
/// than aborting, so the report is always complete.
pub fn run(scenario: &Scenario) -> Report {
    let mut r = Report::default();
    r.push("config", scenario.validate().map(|_| "valid".to_string()).map_err(|e| e.to_string()));
    if !r.passed() {
        return r;
    }
    r.push("round-trip", round_trip(scenario));
    r.push("dimming", dimming_grid(scenario));
    r.push("channels", channels(scenario, 100, scenario.seed));
    r.push("actions-rsma", actions(scenario, Scheme::Rsma, 500, scenario.seed));
    r.push("actions-noma", actions(scenario, Scheme::Noma, 500, scenario.seed));
    r
}
