use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bcsimplex::certify::{self, BarrierCertificate, CheckOptions};
use bcsimplex::harness::{self, ExperimentSpec, FalsifyOptions};
use bcsimplex::model::{self, DynSystem};
use bcsimplex::runtime::{self, socket, ControllerSpec, RunRecord, SimOptions};
use bcsimplex::switchgen::{self, DeriveOptions, Strategy, SwitchingArtifact};

const EXIT_VALIDATION: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "bcsimplex", version, about = "Barrier-certificate switching conditions and a Simplex runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// builtin model name (m1, m2, pendulum, line) or model file
    #[arg(long)]
    model: String,
    /// parameter override, repeatable
    #[arg(long = "param", value_name = "K=V", value_parser = parse_kv)]
    params: Vec<(String, f64)>,
    /// control period override
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args)]
struct CertArgs {
    /// certificate file (JSON container or a bare expression); the model's
    /// builtin certificate when neither this nor --h is given
    #[arg(long, conflicts_with = "h")]
    bac: Option<PathBuf>,
    /// certificate expression over the states
    #[arg(long)]
    h: Option<String>,
    /// gain of the class-K function s -> gamma*s
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the switching artifact
    Derive {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cert: CertArgs,
        #[arg(long, default_value_t = switchgen::DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = switchgen::DEFAULT_M)]
        m: u32,
        #[arg(long, default_value = "per-action")]
        strategy: Strategy,
        #[arg(long, default_value_t = switchgen::DEFAULT_DEPTH)]
        depth: u32,
        /// derive even if the certificate check fails
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = CheckOptions::default().budget)]
        budget: usize,
        /// artifact file to write; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a barrier certificate against the baseline law
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cert: CertArgs,
        #[arg(long, default_value_t = CheckOptions::default().budget)]
        budget: usize,
        #[arg(long, default_value_t = CheckOptions::default().depth)]
        depth: u32,
        /// write the certificate as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one run and write its CSV trace
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        artifact: PathBuf,
        /// controller: baseline, constant:U, affine:K|b
        #[arg(long)]
        ac: ControllerSpec,
        /// initial values of the base states, comma separated; the centre of
        /// the initial box when absent
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value_t = runtime::DEFAULT_HORIZON)]
        horizon: f64,
        #[arg(long)]
        no_shield: bool,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long, default_value_t = runtime::DEFAULT_SUBSTEPS)]
        substeps: usize,
        /// CSV file; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch experiment from a JSON spec
    Experiment {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        substeps: Option<usize>,
        #[arg(long, default_value = "experiment-out")]
        out: PathBuf,
    },
    /// Search for an initial state from which a controller alone turns unsafe
    Falsify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        ac: ControllerSpec,
        #[arg(long, default_value_t = FalsifyOptions::default().budget)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = runtime::DEFAULT_HORIZON)]
        horizon: f64,
        #[arg(long, default_value_t = runtime::DEFAULT_SUBSTEPS)]
        substeps: usize,
    },
    /// Run the loop with an external controller connecting over TCP
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value_t = runtime::DEFAULT_HORIZON)]
        horizon: f64,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long, default_value_t = runtime::DEFAULT_SUBSTEPS)]
        substeps: usize,
        /// response deadline in milliseconds; 0.9 eta when absent
        #[arg(long)]
        deadline_ms: Option<u64>,
        /// continue on the baseline if the client disconnects
        #[arg(long)]
        fallback: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected K=V, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

impl ModelArgs {
    fn load(&self) -> Result<DynSystem> {
        let mut params = self.params.clone();
        if let Some(eta) = self.eta {
            params.push(("eta".into(), eta));
        }
        let builtin = model::builtin_names().iter().any(|n| n.eq_ignore_ascii_case(&self.model));
        Ok(if builtin { model::builtin(&self.model, &params)? } else { model::load(Path::new(&self.model), &params)? })
    }
}

impl CertArgs {
    fn load(&self, model: &ModelArgs, sys: &DynSystem) -> Result<BarrierCertificate> {
        let bc = match (&self.bac, &self.h) {
            (Some(p), _) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                return Ok(BarrierCertificate::from_text(&text, sys)?);
            }
            (None, Some(h)) => sys.state_poly(h)?,
            (None, None) => {
                let h = model::builtin_certificate(&model.model)
                    .ok_or_else(|| anyhow!("model `{}` has no builtin certificate; pass --bac or --h", model.model))?;
                sys.state_poly(h)?
            }
        };
        Ok(BarrierCertificate::new(bc, self.gamma, "")?)
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn initial_state(sys: &DynSystem, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    let base = match x0 {
        Some(v) => v.to_vec(),
        None => sys.init().bounds().iter().map(|b| b.midpoint()).collect(),
    };
    let n = sys.init().len();
    if base.len() != n {
        bail!("--x0 needs {n} values ({})", sys.base_states().join(", "));
    }
    Ok(sys.complete_state(&base))
}

fn report_run(rec: &RunRecord) {
    eprintln!(
        "periods: {}, forward switches: {}, reverse switches: {}, timeouts: {}, min safety margin: {:e}",
        rec.rows.len().saturating_sub(1),
        rec.count(runtime::EventKind::Forward),
        rec.count(runtime::EventKind::Reverse),
        rec.count(runtime::EventKind::Timeout),
        rec.min_margin
    );
    if let Some(v) = &rec.violation {
        eprintln!("violation at t = {} (period {}), state {:?}", v.t, v.step, v.x);
    }
}

fn violation_code(rec: &RunRecord, shield: bool) -> ExitCode {
    if shield && rec.violation.is_some() {
        eprintln!("safety violation with the shield on");
        ExitCode::from(EXIT_VIOLATION)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Derive { model, cert, order, m, strategy, depth, force, budget, out } => {
            let sys = model.load()?;
            let bc = cert.load(&model, &sys)?;
            let check = CheckOptions { budget, ..CheckOptions::default() };
            let opts = DeriveOptions { order, m, strategy, depth, force, check };
            let (art, report) = switchgen::derive_artifact(&sys, &bc, &opts)?;
            if let Some(r) = report {
                eprintln!("{r}");
            }
            eprintln!("lambda* = {:e}, mu_dec = {:?}, mu_inc = {:?}", art.lambda_global, art.mu_dec_global, art.mu_inc_global);
            write_or_print(out.as_deref(), &art.to_json())?;
        }
        Command::Check { model, cert, budget, depth, out } => {
            let sys = model.load()?;
            let bc = cert.load(&model, &sys)?;
            let k = certify::baseline_feedback(&sys)?;
            let r = certify::check_bac(&sys, &bc, &k, CheckOptions { budget, depth, ..CheckOptions::default() })?;
            println!("{r}");
            if let Some(p) = out {
                std::fs::write(&p, bc.to_json()).with_context(|| format!("writing {}", p.display()))?;
            }
            if !r.is_certified() {
                return Ok(ExitCode::from(EXIT_VALIDATION));
            }
        }
        Command::Simulate { model, artifact, ac, x0, horizon, no_shield, m, substeps, out } => {
            let sys = model.load()?;
            let art = SwitchingArtifact::read(&artifact)?;
            let x0 = initial_state(&sys, x0.as_deref())?;
            let mut a = ac.build(&sys)?;
            let mut b = ControllerSpec::Baseline.build(&sys)?;
            let opts = SimOptions { horizon, substeps, shield: !no_shield, m };
            let rec = runtime::simulate_run(&sys, &art, &mut a, &mut b, &x0, &opts)?;
            write_or_print(out.as_deref(), &rec.csv_string())?;
            report_run(&rec);
            return Ok(violation_code(&rec, opts.shield));
        }
        Command::Experiment { spec, seed, m, substeps, out } => {
            let mut s = ExperimentSpec::read(&spec)?;
            s.seed = seed.unwrap_or(s.seed);
            s.m = m.or(s.m);
            s.substeps = substeps.unwrap_or(s.substeps);
            let base = spec.parent().unwrap_or(Path::new("."));
            let (sys, art) = s.resolve(base)?;
            let res = harness::run_experiment(&s, &sys, &art)?;
            let files = res.write(&out)?;
            eprintln!("wrote {} files to {}", files.len(), out.display());
            print!("{}", std::fs::read_to_string(out.join("summary.json"))?);
            if res.summary.shielded_violations.unwrap_or(0) > 0 {
                return Ok(ExitCode::from(EXIT_VIOLATION));
            }
        }
        Command::Falsify { model, ac, budget, seed, horizon, substeps } => {
            let sys = model.load()?;
            let r = harness::falsify_controller(&sys, &ac, &FalsifyOptions { budget, seed, horizon, substeps })?;
            match &r.witness {
                Some(w) => println!("witness x0 = {:?}, violation at t = {} ({} evaluations)", w.x0, w.t_violation, r.evaluations),
                None => println!("no witness in {} evaluations (smallest safety margin {:e})", r.evaluations, r.best_margin),
            }
        }
        Command::Serve { model, artifact, listen, x0, horizon, m, substeps, deadline_ms, fallback, out } => {
            let sys = model.load()?;
            let art = SwitchingArtifact::read(&artifact)?;
            art.check_model(&sys)?;
            let x0 = initial_state(&sys, x0.as_deref())?;
            let listener = TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let sim = SimOptions { horizon, substeps, shield: true, m };
            let ext = socket::ExternalOptions { deadline: deadline_ms.map(Duration::from_millis), fallback_to_bc: fallback, ..Default::default() };
            let rec = socket::serve(&listener, &sys, &art, &x0, &sim, &ext)?;
            if let Some(p) = out {
                std::fs::write(&p, rec.csv_string()).with_context(|| format!("writing {}", p.display()))?;
            }
            report_run(&rec);
            return Ok(violation_code(&rec, true));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
