use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rcgff_lab::config::parse_kv;
use rcgff_lab::{experiments, run, ExperimentConfig, LabError};

fn experiment_list() -> String {
    let mut s = String::from("experiments:\n");
    for e in experiments() {
        s.push_str(&format!("  {:<11} {}\n", e.name(), e.description()));
    }
    s
}

#[derive(Parser, Debug)]
#[command(name = "rcgff", version, about = "Random conductance Gaussian free field experiments", after_help = experiment_list())]
struct Cli {
    /// Experiment name.
    experiment: String,
    /// Conductance law, e.g. const(1), exp(1), bernoulli(0.7), line(exp(1)).
    #[arg(long)]
    law: Option<String>,
    /// Half-width of environment boxes.
    #[arg(long = "box")]
    box_radius: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// square or ball.
    #[arg(long)]
    domain: Option<String>,
    /// Comma separated, strictly increasing.
    #[arg(long = "n-ladder")]
    n_ladder: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Very-regularity exponent in (0, 1) for the moment condition.
    #[arg(long = "reg-theta")]
    reg_theta: Option<f64>,
    /// Walk time horizon in units of n^2.
    #[arg(long)]
    t: Option<f64>,
    /// Side of the figure1 square.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// key = value file; its entries override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

impl Cli {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![("experiment".to_string(), self.experiment.clone()), ("out".to_string(), self.out.display().to_string())];
        let mut put = |k: &str, x: Option<String>| {
            if let Some(x) = x {
                v.push((k.to_string(), x));
            }
        };
        put("law", self.law.clone());
        put("box", self.box_radius.map(|x| x.to_string()));
        put("d", self.d.map(|x| x.to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        put("domain", self.domain.clone());
        put("n_ladder", self.n_ladder.clone());
        put("eps", self.eps.map(|x| x.to_string()));
        put("delta", self.delta.map(|x| x.to_string()));
        put("grid", self.grid.map(|x| x.to_string()));
        put("replicas", self.replicas.map(|x| x.to_string()));
        put("tol", self.tol.map(|x| x.to_string()));
        put("p", self.p.map(|x| x.to_string()));
        put("q", self.q.map(|x| x.to_string()));
        put("reg_theta", self.reg_theta.map(|x| x.to_string()));
        put("t", self.t.map(|x| x.to_string()));
        put("size", self.size.map(|x| x.to_string()));
        v
    }
}

fn execute(cli: &Cli) -> Result<(), LabError> {
    let mut cfg = ExperimentConfig::default();
    cfg.apply(&cli.pairs())?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io { path: path.clone(), source })?;
        cfg.apply(&parse_kv(&text)?)?;
    }
    let go = || run(&cfg);
    let summary = match cli.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| LabError::Config(format!("cannot start {w} workers: {e}")))?
            .install(go)?,
        None => go()?,
    };
    for (k, v) in &summary.metrics {
        println!("{k} = {v}");
    }
    for n in &summary.notes {
        println!("note: {n}");
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
