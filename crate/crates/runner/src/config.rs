//! Run configuration: a TOML document with flat sections whose missing keys
//! take documented defaults.
//!
//! ```toml
//! env = "sparse-mountaincar"
//! iterations = 150
//!
//! [bonus]
//! scheme = "learning_progress"
//! k = 10
//! ```

use std::fmt;

use surprise_core::bonus::BonusScheme;
use surprise_core::envs::{self, NOISY_CHAIN};
use surprise_core::rl::{TrainerConfig, ValueKind};
use surprise_core::trustregion::TrustRegionConfig;
use toml::{Table, Value};

/// Every problem found in a config document, in document order.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config:")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

/// Trainer settings plus options of the runner itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    /// Write a model checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut trainer = TrainerConfig::default();
        trainer.bonus.nonnegative_shift = default_shift(&trainer.env);
        Self {
            trainer,
            checkpoint_every: 50,
        }
    }
}

/// The nonnegative shift is on where episodes can end in death.
pub fn default_shift(env: &str) -> bool {
    env == NOISY_CHAIN
}

impl RunConfig {
    pub fn with_env(mut self, env: &str) -> Self {
        self.trainer.env = env.to_string();
        self.trainer.bonus.nonnegative_shift = default_shift(env);
        self
    }
}

const TOP_KEYS: &[&str] = &["env", "seed", "iterations", "checkpoint_every"];
const SECTIONS: &[(&str, &[&str])] = &[
    ("bonus", &["scheme", "k", "eta0", "nonnegative_shift"]),
    ("policy", &["hidden_sizes", "init_log_std", "init_output_scale"]),
    ("value", &["kind", "hidden_sizes", "delta", "init_output_scale"]),
    ("trpo", &["delta_kl", "batch_size", "max_len", "gamma", "lambda"]),
    (
        "trust_region",
        &["cg_iters", "damping", "backtrack_ratio", "max_backtracks", "subsample_fraction", "skip_unshrunk_step"],
    ),
    (
        "dynamics",
        &[
            "hidden_sizes",
            "kappa",
            "alpha",
            "batch_size",
            "replay_capacity",
            "updates_per_iteration",
            "log_std_min",
            "log_std_max",
        ],
    ),
];

struct Reader<'a> {
    problems: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn float(&mut self, t: &Table, sec: &str, key: &str, out: &mut f64) {
        match t.get(key) {
            None => {}
            Some(Value::Float(x)) => *out = *x,
            Some(Value::Integer(i)) => *out = *i as f64,
            Some(v) => self.mismatch(sec, key, "a number", v),
        }
    }

    fn uint(&mut self, t: &Table, sec: &str, key: &str, out: &mut usize) {
        match t.get(key) {
            None => {}
            Some(Value::Integer(i)) if *i >= 0 => *out = *i as usize,
            Some(v) => self.mismatch(sec, key, "a nonnegative integer", v),
        }
    }

    fn u64(&mut self, t: &Table, sec: &str, key: &str, out: &mut u64) {
        let mut x = *out as usize;
        self.uint(t, sec, key, &mut x);
        *out = x as u64;
    }

    fn boolean(&mut self, t: &Table, sec: &str, key: &str) -> Option<bool> {
        match t.get(key) {
            None => None,
            Some(Value::Boolean(b)) => Some(*b),
            Some(v) => {
                self.mismatch(sec, key, "a boolean", v);
                None
            }
        }
    }

    fn string<'t>(&mut self, t: &'t Table, sec: &str, key: &str) -> Option<&'t str> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.mismatch(sec, key, "a string", v);
                None
            }
        }
    }

    fn sizes(&mut self, t: &Table, sec: &str, key: &str, out: &mut Vec<usize>) {
        match t.get(key) {
            None => {}
            Some(Value::Array(a)) => {
                let parsed: Option<Vec<usize>> = a
                    .iter()
                    .map(|v| v.as_integer().filter(|&i| i > 0).map(|i| i as usize))
                    .collect();
                match parsed {
                    Some(p) => *out = p,
                    None => self.problems.push(format!("{} must hold positive integers", name(sec, key))),
                }
            }
            Some(v) => self.mismatch(sec, key, "an array of layer widths", v),
        }
    }

    fn mismatch(&mut self, sec: &str, key: &str, want: &str, got: &Value) {
        self.problems
            .push(format!("{} must be {want}, found {}", name(sec, key), got.type_str()));
    }
}

fn name(sec: &str, key: &str) -> String {
    if sec.is_empty() {
        key.to_string()
    } else {
        format!("{sec}.{key}")
    }
}

/// Parses and validates a config document; missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        problems: vec![e.message().trim().to_string()],
    })?;
    let mut problems = Vec::new();
    let empty = Table::new();

    for (key, value) in &doc {
        let known_section = SECTIONS.iter().any(|(s, _)| s == key);
        if known_section {
            match value.as_table() {
                Some(t) => {
                    let allowed = SECTIONS.iter().find(|(s, _)| s == key).map(|(_, k)| *k).unwrap_or(&[]);
                    for k in t.keys() {
                        if !allowed.contains(&k.as_str()) {
                            problems.push(format!("unknown key `{key}.{k}`"));
                        }
                    }
                }
                None => problems.push(format!("`{key}` must be a section")),
            }
        } else if !TOP_KEYS.contains(&key.as_str()) {
            problems.push(format!("unknown key `{key}`"));
        }
    }
    let section = |s: &str| doc.get(s).and_then(Value::as_table).unwrap_or(&empty);

    let mut r = Reader { problems: &mut problems };
    let mut cfg = RunConfig::default();
    if let Some(env) = r.string(&doc, "", "env") {
        match envs::env_spec(env) {
            Ok(_) => cfg = cfg.with_env(env),
            Err(_) => r.problems.push(format!(
                "env `{env}` is not one of {}",
                envs::ENVIRONMENTS.join(", ")
            )),
        }
    }
    let t = &mut cfg.trainer;
    r.u64(&doc, "", "seed", &mut t.seed);
    r.uint(&doc, "", "iterations", &mut t.iterations);
    r.uint(&doc, "", "checkpoint_every", &mut cfg.checkpoint_every);

    let b = section("bonus");
    let mut k = None;
    if b.contains_key("k") {
        let mut kv = 0;
        r.uint(b, "bonus", "k", &mut kv);
        k = Some(kv);
    }
    if let Some(s) = r.string(b, "bonus", "scheme") {
        match BonusScheme::parse(s) {
            Ok(scheme) => t.bonus.scheme = scheme,
            Err(_) => r.problems.push(format!(
                "bonus.scheme `{s}` is not one of none, surprisal, learning_progress[:k], pred_error, random_surprisal"
            )),
        }
    }
    if let Some(k) = k {
        match t.bonus.scheme {
            BonusScheme::LearningProgress { .. } if k >= 1 => {
                t.bonus.scheme = BonusScheme::LearningProgress { k }
            }
            BonusScheme::LearningProgress { .. } => r.problems.push("bonus.k must be at least 1".into()),
            _ => r.problems.push("bonus.k only applies to scheme learning_progress".into()),
        }
    }
    r.float(b, "bonus", "eta0", &mut t.bonus.eta0);
    if let Some(shift) = r.boolean(b, "bonus", "nonnegative_shift") {
        t.bonus.nonnegative_shift = shift;
    }

    let p = section("policy");
    r.sizes(p, "policy", "hidden_sizes", &mut t.policy_hidden);
    r.float(p, "policy", "init_log_std", &mut t.init_log_std);
    r.float(p, "policy", "init_output_scale", &mut t.policy_init_output_scale);

    let v = section("value");
    if let Some(kind) = r.string(v, "value", "kind") {
        match kind {
            "neural" => t.value.kind = ValueKind::Neural,
            "linear" => t.value.kind = ValueKind::LinearTimeVarying,
            other => r.problems.push(format!("value.kind `{other}` is not one of neural, linear")),
        }
    }
    r.sizes(v, "value", "hidden_sizes", &mut t.value.hidden_sizes);
    r.float(v, "value", "delta", &mut t.value.delta);
    r.float(v, "value", "init_output_scale", &mut t.value.init_output_scale);

    let tr = section("trpo");
    r.float(tr, "trpo", "delta_kl", &mut t.trpo.delta_kl);
    r.uint(tr, "trpo", "batch_size", &mut t.trpo.batch_size);
    r.uint(tr, "trpo", "max_len", &mut t.trpo.max_len);
    r.float(tr, "trpo", "gamma", &mut t.trpo.gae.gamma);
    r.float(tr, "trpo", "lambda", &mut t.trpo.gae.lambda);

    let sec = section("trust_region");
    let mut region = TrustRegionConfig::default();
    r.uint(sec, "trust_region", "cg_iters", &mut region.cg_iters);
    r.float(sec, "trust_region", "damping", &mut region.damping);
    r.float(sec, "trust_region", "backtrack_ratio", &mut region.backtrack_ratio);
    r.uint(sec, "trust_region", "max_backtracks", &mut region.max_backtracks);
    r.float(sec, "trust_region", "subsample_fraction", &mut region.subsample_fraction);
    if let Some(skip) = r.boolean(sec, "trust_region", "skip_unshrunk_step") {
        region.skip_unshrunk_step = skip;
    }
    t.trpo.trust_region = region;
    t.value.trust_region = region;
    t.dynamics.update.trust_region = region;

    let d = section("dynamics");
    r.sizes(d, "dynamics", "hidden_sizes", &mut t.dynamics.hidden_sizes);
    r.float(d, "dynamics", "kappa", &mut t.dynamics.update.kappa);
    r.float(d, "dynamics", "alpha", &mut t.dynamics.update.alpha);
    r.uint(d, "dynamics", "batch_size", &mut t.dynamics.update.batch_size);
    r.uint(d, "dynamics", "replay_capacity", &mut t.dynamics.replay_capacity);
    r.uint(d, "dynamics", "updates_per_iteration", &mut t.dynamics.updates_per_iteration);
    r.float(d, "dynamics", "log_std_min", &mut t.dynamics.log_std_bounds.min);
    r.float(d, "dynamics", "log_std_max", &mut t.dynamics.log_std_bounds.max);

    range_checks(&cfg, &mut problems);
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { problems })
    }
}

/// Value-range checks on an assembled config.
fn range_checks(cfg: &RunConfig, problems: &mut Vec<String>) {
    let t = &cfg.trainer;
    let mut check = |ok: bool, msg: &str| {
        if !ok {
            problems.push(msg.to_string());
        }
    };
    let finite_pos = |x: f64| x.is_finite() && x > 0.0;
    check(t.iterations >= 1, "iterations must be at least 1");
    check(t.bonus.eta0.is_finite() && t.bonus.eta0 >= 0.0, "bonus.eta0 must be a finite number >= 0");
    check(t.init_log_std.is_finite(), "policy.init_log_std must be finite");
    check(
        t.policy_init_output_scale.is_finite() && t.policy_init_output_scale >= 0.0,
        "policy.init_output_scale must be >= 0",
    );
    check(finite_pos(t.value.delta), "value.delta must be > 0");
    check(
        t.value.init_output_scale.is_finite() && t.value.init_output_scale >= 0.0,
        "value.init_output_scale must be >= 0",
    );
    check(finite_pos(t.trpo.delta_kl), "trpo.delta_kl must be > 0");
    check(t.trpo.batch_size >= 1, "trpo.batch_size must be at least 1");
    check(t.trpo.max_len >= 1, "trpo.max_len must be at least 1");
    check(t.trpo.gae.gamma > 0.0 && t.trpo.gae.gamma <= 1.0, "trpo.gamma must lie in (0, 1]");
    check((0.0..=1.0).contains(&t.trpo.gae.lambda), "trpo.lambda must lie in [0, 1]");
    let region = &t.trpo.trust_region;
    check(region.cg_iters >= 1, "trust_region.cg_iters must be at least 1");
    check(region.damping.is_finite() && region.damping >= 0.0, "trust_region.damping must be >= 0");
    check(
        region.backtrack_ratio > 0.0 && region.backtrack_ratio < 1.0,
        "trust_region.backtrack_ratio must lie in (0, 1)",
    );
    check(
        region.subsample_fraction > 0.0 && region.subsample_fraction <= 1.0,
        "trust_region.subsample_fraction must lie in (0, 1]",
    );
    let d = &t.dynamics;
    check(d.update.kappa.is_finite() && d.update.kappa >= 0.0, "dynamics.kappa must be >= 0");
    check(d.update.alpha.is_finite() && d.update.alpha >= 0.0, "dynamics.alpha must be >= 0");
    check(d.update.batch_size >= 1, "dynamics.batch_size must be at least 1");
    check(d.replay_capacity >= 1, "dynamics.replay_capacity must be at least 1");
    check(
        d.log_std_bounds.min.is_finite() && d.log_std_bounds.max.is_finite() && d.log_std_bounds.min < d.log_std_bounds.max,
        "dynamics.log_std_min must be below dynamics.log_std_max",
    );
}

/// The effective configuration as a complete TOML document.
pub fn render_config(cfg: &RunConfig) -> String {
    let t = &cfg.trainer;
    let sizes = |s: &[usize]| {
        let parts: Vec<String> = s.iter().map(|x| x.to_string()).collect();
        format!("[{}]", parts.join(", "))
    };
    let (scheme, k) = match t.bonus.scheme {
        BonusScheme::LearningProgress { k } => ("learning_progress".to_string(), Some(k)),
        other => (other.label(), None),
    };
    let region = &t.trpo.trust_region;
    let mut out = format!(
        "env = \"{}\"\nseed = {}\niterations = {}\ncheckpoint_every = {}\n\n[bonus]\nscheme = \"{scheme}\"\n",
        t.env, t.seed, t.iterations, cfg.checkpoint_every
    );
    if let Some(k) = k {
        out += &format!("k = {k}\n");
    }
    out += &format!(
        "eta0 = {:?}\nnonnegative_shift = {}\n\n[policy]\nhidden_sizes = {}\ninit_log_std = {:?}\ninit_output_scale = {:?}\n\n",
        t.bonus.eta0,
        t.bonus.nonnegative_shift,
        sizes(&t.policy_hidden),
        t.init_log_std,
        t.policy_init_output_scale
    );
    out += &format!(
        "[value]\nkind = \"{}\"\nhidden_sizes = {}\ndelta = {:?}\ninit_output_scale = {:?}\n\n",
        match t.value.kind {
            ValueKind::Neural => "neural",
            ValueKind::LinearTimeVarying => "linear",
        },
        sizes(&t.value.hidden_sizes),
        t.value.delta,
        t.value.init_output_scale
    );
    out += &format!(
        "[trpo]\ndelta_kl = {:?}\nbatch_size = {}\nmax_len = {}\ngamma = {:?}\nlambda = {:?}\n\n",
        t.trpo.delta_kl, t.trpo.batch_size, t.trpo.max_len, t.trpo.gae.gamma, t.trpo.gae.lambda
    );
    out += &format!(
        "[trust_region]\ncg_iters = {}\ndamping = {:?}\nbacktrack_ratio = {:?}\nmax_backtracks = {}\nsubsample_fraction = {:?}\nskip_unshrunk_step = {}\n\n",
        region.cg_iters,
        region.damping,
        region.backtrack_ratio,
        region.max_backtracks,
        region.subsample_fraction,
        region.skip_unshrunk_step
    );
    let d = &t.dynamics;
    out += &format!(
        "[dynamics]\nhidden_sizes = {}\nkappa = {:?}\nalpha = {:?}\nbatch_size = {}\nreplay_capacity = {}\nupdates_per_iteration = {}\nlog_std_min = {:?}\nlog_std_max = {:?}\n",
        sizes(&d.hidden_sizes),
        d.update.kappa,
        d.update.alpha,
        d.update.batch_size,
        d.replay_capacity,
        d.updates_per_iteration,
        d.log_std_bounds.min,
        d.log_std_bounds.max
    );
    out
}
