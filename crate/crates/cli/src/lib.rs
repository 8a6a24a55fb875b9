//! The `angel` command line: argument definitions and the subcommands.

pub mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use angel_client::Client;
use angel_core::devils::Landing;
use angel_core::lemmas::fuzz_lemmas;
use angel_core::play::{make_devil, Match, MatchConfig, MatchReport};
use angel_core::session::{CreateRequest, DevilTurnRequest, Mode, WATERMARK};
use angel_core::trace::{verify_trace, Trace, TraceLine};
use angel_core::{solve_params, ParamSet, Rat};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::Config;

pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";

#[derive(Debug, Parser)]
#[command(name = "angel", version, about = "Angel strategy harness")]
pub struct Cli {
    /// Plain-text `key = value` file supplying defaults for the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve, print or check a parameter set.
    Params {
        #[command(flatten)]
        p: ParamArgs,
        /// Check a parameter file instead of solving.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// Play a match between the angel and a built-in devil.
    Play(PlayArgs),
    /// Replay a trace through the rules and report every violated check.
    Verify {
        trace: PathBuf,
        #[command(flatten)]
        p: ParamArgs,
    },
    /// Run the lemma fuzz suites.
    Fuzz {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Start the session service.
    Serve {
        #[arg(long)]
        addr: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// ξ as a fraction or decimal, such as 3/4.
    #[arg(long)]
    pub xi: Option<Rat>,
    #[arg(long)]
    pub kappa: Option<i64>,
    /// Use the small toy parameter set (not theorem-covered).
    #[arg(long)]
    pub toy: bool,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[command(flatten)]
    pub p: ParamArgs,
    /// Amplifier levels built before the first move.
    #[arg(long)]
    pub depth: Option<usize>,
    /// zero, random, wall or adversarial.
    #[arg(long)]
    pub devil: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain moves to play.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Play through a running session service at this URL.
    #[arg(long)]
    pub server: Option<String>,
}

impl ParamArgs {
    /// Toy set, explicitly given ξ and κ, or ξ = 3/4, κ = 12.
    fn resolve(&self, cfg: &Config) -> Result<ParamSet> {
        if cfg.switch(self.toy, "toy")? {
            return Ok(ParamSet::default_toy());
        }
        let xi = cfg.pick(self.xi, "xi")?.unwrap_or(Rat::new(3, 4));
        let kappa = cfg.pick(self.kappa, "kappa")?.unwrap_or(12);
        Ok(solve_params(xi, kappa)?)
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Params { p, check } => params(&p, check, &cfg),
        Command::Play(a) => play(&a, &cfg),
        Command::Verify { trace, p } => verify(&trace, &p, &cfg),
        Command::Fuzz { p, trials, seed } => fuzz(&p, cfg.pick(trials, "trials")?, cfg.pick(seed, "seed")?, &cfg),
        Command::Serve { addr } => serve(cfg.pick(addr, "addr")?.unwrap_or_else(|| DEFAULT_ADDR.into())),
    }
}

fn code(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn params(p: &ParamArgs, check: Option<PathBuf>, cfg: &Config) -> Result<ExitCode> {
    let start = Instant::now();
    let set = match check {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            // validity is recomputed below rather than trusted from the file
            let body: String = text.lines().filter(|l| !l.trim_start().starts_with("valid")).map(|l| format!("{l}\n")).collect();
            let mut set = ParamSet::from_text(&body)?;
            set.valid = set.violations().is_empty();
            set
        }
        None => p.resolve(cfg)?,
    };
    print!("{}", set.to_text());
    let bad = set.violations();
    if bad.is_empty() {
        println!("# every constraint holds exactly ({:.3} s)", start.elapsed().as_secs_f64());
    } else {
        println!("# {WATERMARK}");
        for v in &bad {
            println!("# violates: {v}");
        }
    }
    Ok(code(bad.is_empty() || cfg.switch(p.toy, "toy")?))
}

/// `key = value` lines for a finished match.
pub fn report_text(r: &MatchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "moves = {}", r.moves);
    let _ = writeln!(s, "survived = {}", r.survived);
    let _ = writeln!(s, "reason = {}", r.reason.as_deref().unwrap_or("none"));
    let _ = writeln!(s, "violations = {}", r.violations);
    let _ = writeln!(s, "total_mass = {}", r.total_mass);
    let _ = writeln!(s, "max_depth = {}", r.max_depth);
    let profile: Vec<String> = r.depth_profile.iter().map(|(i, d)| format!("{i}:{d}")).collect();
    let _ = writeln!(s, "depth_profile = {}", profile.join(" "));
    s
}

fn play(a: &PlayArgs, cfg: &Config) -> Result<ExitCode> {
    let params = a.p.resolve(cfg)?;
    let mc = MatchConfig {
        toy: !params.valid,
        params,
        depth: cfg.pick(a.depth, "depth")?.unwrap_or(1),
        seed: cfg.pick(a.seed, "seed")?.unwrap_or(1),
        horizon: cfg.pick(a.horizon, "horizon")?.unwrap_or(1000),
    };
    let devil_name = cfg.pick(a.devil.clone(), "devil")?.unwrap_or_else(|| "random".into());
    let trace_out = cfg.pick(a.trace_out.clone(), "trace_out")?;
    let server = cfg.pick(a.server.clone(), "server")?;
    let start = Instant::now();
    let (trace, report) = match server {
        Some(url) => tokio::runtime::Runtime::new()?.block_on(play_remote(&url, &mc, &devil_name))?,
        None => {
            let mut devil = make_devil(&devil_name, mc.seed)?;
            angel_core::play::run_match(&mc, devil.as_mut())?
        }
    };
    if mc.toy {
        println!("# {WATERMARK}");
    }
    print!("{}", report_text(&report));
    println!("seconds = {:.1}", start.elapsed().as_secs_f64());
    if let Some(path) = trace_out {
        std::fs::write(&path, trace.to_text()).with_context(|| format!("writing {}", path.display()))?;
        println!("trace = {}", path.display());
    }
    Ok(code(report.survived))
}

/// Drive a match through the service. A local copy of the game supplies the
/// devil's view and must agree with the service's exported trace.
pub async fn play_remote(url: &str, mc: &MatchConfig, devil_name: &str) -> Result<(Trace, MatchReport)> {
    let client = Client::new(url);
    let mut devil = make_devil(devil_name, mc.seed)?;
    let req = CreateRequest {
        params: Some(mc.params.clone()),
        mode: if mc.toy { Mode::Toy } else { Mode::Valid },
        seed: mc.seed,
        depth: mc.depth,
        horizon: mc.horizon,
        label: devil.name(),
    };
    let id = client.create_session(&req).await?.id;
    let mut local = Match::new(mc, &devil.name())?;
    while let Some(lm) = local.pending().copied() {
        let Ok(r) = devil.respond(local.log(), &lm) else {
            local.devil_turn(devil.as_mut())?;
            break;
        };
        let turn = DevilTurnRequest {
            deposits: r.delta.clone(),
            dt: r.end.t - local.log().current().t,
            landing: Some(Landing { p: r.end.p, j: r.end.j }),
        };
        let resp = client.devil_turn(id, &turn).await?;
        local.apply(r)?;
        if resp.mv != local.pending().map(|m| m.name()) {
            bail!("service answered {:?} where the local game has {:?}", resp.mv, local.pending().map(|m| m.name()));
        }
    }
    let remote = Trace::parse(&client.export_trace(id).await?)?;
    client.close_session(id).await?;
    let mut expected = local.trace().clone();
    if !matches!(remote.lines.last(), Some(TraceLine::End { .. })) {
        expected.lines.pop();
    }
    if remote != expected {
        bail!("service trace differs from the local game");
    }
    let report = local.report().cloned().context("match did not finish")?;
    Ok((local.trace().clone(), report))
}

fn verify(path: &PathBuf, p: &ParamArgs, cfg: &Config) -> Result<ExitCode> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trace = Trace::parse(&text)?;
    let given = p.xi.is_some() || p.kappa.is_some() || p.toy;
    let params = if given { Some(p.resolve(cfg)?) } else { None };
    let rep = verify_trace(&trace, params.as_ref())?;
    if !trace.header()?.params.valid {
        println!("# {WATERMARK}");
    }
    println!("units = {}", rep.units);
    println!("findings = {}", rep.findings.len());
    for f in &rep.findings {
        println!("{} {}: {}", f.index, f.check, f.detail);
    }
    Ok(code(rep.is_clean()))
}

fn fuzz(p: &ParamArgs, trials: Option<usize>, seed: Option<u64>, cfg: &Config) -> Result<ExitCode> {
    let params = p.resolve(cfg)?;
    let start = Instant::now();
    let rep = fuzz_lemmas(&params, trials.unwrap_or(10_000), seed.unwrap_or(1))?;
    for r in &rep.results {
        println!("{:<26} trials = {} exercised = {} counterexamples = {}", r.name, r.trials, r.exercised, r.counterexamples);
        if let Some(ex) = &r.example {
            println!("  example = {}", serde_json::to_string(ex)?);
        }
    }
    println!("seconds = {:.1}", start.elapsed().as_secs_f64());
    Ok(code(rep.is_clean()))
}

fn serve(addr: String) -> Result<ExitCode> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        angel_service::serve(listener).await?;
        Ok(ExitCode::SUCCESS)
    })
}
