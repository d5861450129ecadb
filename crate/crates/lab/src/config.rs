//! Experiment configuration: defaults, then command line flags, then a
//! `key = value` file.

use std::fmt::Write as _;
use std::path::PathBuf;

use rcgff::domain::Domain;
use rcgff::law::{parse_law, LawSpec};

use crate::error::{config_err, LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub law: LawSpec,
    pub d: usize,
    /// `square` (the unit cube) or `ball` (the unit ball).
    pub domain: String,
    pub n_ladder: Vec<usize>,
    pub eps: f64,
    pub delta: f64,
    /// Sub-grid cells per axis for `K_{eps,delta}`.
    pub grid: usize,
    pub replicas: usize,
    pub seed: u64,
    pub tol: f64,
    /// Half-width of the boxes used for environment statistics.
    pub box_radius: usize,
    pub p: f64,
    pub q: f64,
    /// Very-regularity exponent in the moment condition, not the cluster
    /// density.
    pub reg_theta: f64,
    pub t: f64,
    pub size: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            law: LawSpec::Constant(1.0),
            d: 2,
            domain: "square".into(),
            n_ladder: vec![16, 32, 64],
            eps: 0.2,
            delta: 0.3,
            grid: 10,
            replicas: 1000,
            seed: 1,
            tol: 1e-4,
            box_radius: 32,
            p: 1.0,
            q: 1.5,
            reg_theta: 0.1,
            t: 1.0,
            size: 50,
            out: PathBuf::from("out"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "experiment", "law", "d", "domain", "n_ladder", "eps", "delta", "grid", "replicas", "seed", "tol", "box", "p", "q", "reg_theta", "t",
    "size", "out",
];

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| LabError::Config(format!("{key}: cannot parse `{value}`")))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "experiment" => self.experiment = v.to_string(),
            "law" => self.law = parse_law(v)?,
            "d" => self.d = number(key, v)?,
            "domain" => self.domain = v.to_string(),
            "n_ladder" => {
                self.n_ladder = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| number(key, s))
                    .collect::<Result<_>>()?
            }
            "eps" => self.eps = number(key, v)?,
            "delta" => self.delta = number(key, v)?,
            "grid" => self.grid = number(key, v)?,
            "replicas" => self.replicas = number(key, v)?,
            "seed" => self.seed = number(key, v)?,
            "tol" => self.tol = number(key, v)?,
            "box" => self.box_radius = number(key, v)?,
            "p" => self.p = number(key, v)?,
            "q" => self.q = number(key, v)?,
            "reg_theta" => self.reg_theta = number(key, v)?,
            "t" => self.t = number(key, v)?,
            "size" => self.size = number(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return config_err(format!("unknown key `{other}`; known: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return config_err(format!("d must be at least 2, got {}", self.d));
        }
        self.law.validate(self.d)?;
        self.domain()?;
        if !(self.eps > 0.0 && self.eps < self.delta) {
            return config_err(format!("need 0 < eps < delta, got eps = {}, delta = {}", self.eps, self.delta));
        }
        if self.n_ladder.is_empty() {
            return config_err("n_ladder is empty");
        }
        if self.n_ladder.windows(2).any(|w| w[0] >= w[1]) || self.n_ladder[0] < 2 {
            return config_err("n_ladder must be strictly increasing and start at 2 or more");
        }
        if self.grid == 0 || self.replicas < 2 || self.size < 3 || self.box_radius == 0 {
            return config_err("grid, box >= 1, replicas >= 2 and size >= 3 are required");
        }
        if !(self.tol > 0.0 && self.t > 0.0 && self.p > 0.0 && self.q > 0.0) {
            return config_err("tol, t, p and q must be positive");
        }
        if !(self.reg_theta > 0.0 && self.reg_theta < 1.0) {
            return config_err(format!("reg_theta must lie in (0, 1), got {}", self.reg_theta));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        Ok(Domain::named(&self.domain, self.d)?)
    }

    /// Resolved settings as `key = value` lines, parseable by [`parse_kv`].
    pub fn to_kv(&self) -> String {
        let ladder: Vec<String> = self.n_ladder.iter().map(|n| n.to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "law = {}", self.law);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "domain = {}", self.domain);
        let _ = writeln!(s, "n_ladder = {}", ladder.join(","));
        let _ = writeln!(s, "eps = {}", self.eps);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "grid = {}", self.grid);
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "box = {}", self.box_radius);
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "reg_theta = {}", self.reg_theta);
        let _ = writeln!(s, "t = {}", self.t);
        let _ = writeln!(s, "size = {}", self.size);
        s
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return config_err(format!("line {}: expected key = value", i + 1));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
