mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use pwsobs::certify::{certify_observer, certify_plant, certify_pwa_exact, Certificate, CertifyError, SamplingRegion};
use pwsobs::config::{builtin_example, load_config, ConfigError, Setup};
use pwsobs::measures::MeasureKind;
use pwsobs::observer::{check_envelope, disturbance_study, run_pair, ObserverError};
use pwsobs::regularize::{order_study, RegError, TransitionKind};
use pwsobs::simulate::{integrate, write_events_csv, write_trajectory_csv, EventKind, IntegratorConfig, SimError, SimErrorKind, Trajectory};
use pwsobs::synth::{synthesize, SynthesisProblem};
use pwsobs::systems::{Mode, ObserverSpec};

use plot::{Plot, Series};

/// Simulation, contraction certificates and switched observers for bimodal
/// Filippov systems.
#[derive(Parser, Debug)]
#[command(name = "pwsobs", version)]
struct Cli {
    /// System config file (TOML).
    #[arg(long, global = true, conflicts_with = "example")]
    config: Option<PathBuf>,
    /// Built-in example number.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..=3))]
    example: Option<u32>,
    /// Output directory.
    #[arg(long, global = true, default_value = "pwsobs-out")]
    out: PathBuf,
    /// Matrix measure (and matching vector norm): l1, l2, linf.
    #[arg(long, global = true)]
    measure: Option<MeasureKind>,
    /// Seed for the synthesis grid ordering.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the plant; write trajectory, events and a plot.
    Simulate {
        #[command(flatten)]
        integ: IntegArgs,
        /// 1-based state indices to plot (default: all).
        #[arg(long, value_delimiter = ',')]
        states: Vec<usize>,
    },
    /// Check the contraction conditions for the observer (or the plant).
    Certify {
        #[command(flatten)]
        gains: GainArgs,
        #[command(flatten)]
        region: RegionArgs,
        /// Certify the plant field instead of the observer.
        #[arg(long)]
        plant: bool,
    },
    /// Run plant and observer; check the error against `K e^{-ct}`.
    Observe {
        #[command(flatten)]
        integ: IntegArgs,
        #[command(flatten)]
        gains: GainArgs,
        #[command(flatten)]
        region: RegionArgs,
        /// Initial observer state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xhat0: Option<Vec<f64>>,
        /// Envelope rate; defaults to the config value, then the certified rate.
        #[arg(long)]
        rate: Option<f64>,
        /// Envelope overshoot constant.
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        slack: Option<f64>,
        /// Also run the plant parameter perturbation sweep from the config.
        #[arg(long)]
        disturbance: bool,
    },
    /// Search observer gains maximizing the certified rate.
    Synth {
        #[command(flatten)]
        region: RegionArgs,
        /// Gains held at their config value, e.g. `l2p,l2m`.
        #[arg(long, value_delimiter = ',')]
        freeze: Option<Vec<String>>,
        #[arg(long)]
        budget: Option<usize>,
        /// Share one gain between both modes.
        #[arg(long)]
        tie: bool,
        /// Bounds `lo,hi` for every free gain.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 2)]
        gain_box: Option<Vec<f64>>,
    },
    /// Compare regularized and Filippov solutions over a list of widths.
    Regstudy {
        #[command(flatten)]
        integ: IntegArgs,
        /// Layer half-widths, strictly decreasing.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        transition: Option<TransitionKind>,
    },
}

#[derive(Args, Debug)]
struct IntegArgs {
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    #[arg(long)]
    tf: Option<f64>,
    /// Initial plant state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    tol_event: Option<f64>,
    #[arg(long)]
    sample_interval: Option<f64>,
}

#[derive(Args, Debug)]
struct GainArgs {
    /// Gain used in both modes, row-major.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["gains_plus", "gains_minus"])]
    gains: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gains_plus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gains_minus: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct RegionArgs {
    /// State box as `lo:hi,lo:hi,...`.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// Output box as `lo:hi,...`.
    #[arg(long, allow_hyphen_values = true)]
    output_range: Option<String>,
    /// Points per axis.
    #[arg(long)]
    grid: Option<usize>,
}

/// Failure classes with their exit codes.
enum Fail {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 2,
            Fail::Numerical(_) => 3,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Fail {
    Fail::Usage(e.into())
}

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        usage(e)
    }
}

impl From<SimError> for Fail {
    fn from(e: SimError) -> Self {
        match e.kind {
            SimErrorKind::Config(_) | SimErrorKind::Dimension { .. } => usage(e),
            _ => Fail::Numerical(e.into()),
        }
    }
}

impl From<CertifyError> for Fail {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Measure(_) | CertifyError::System(_) => Fail::Numerical(e.into()),
            _ => usage(e),
        }
    }
}

impl From<ObserverError> for Fail {
    fn from(e: ObserverError) -> Self {
        match e {
            ObserverError::Plant(s) | ObserverError::Observer(s) => (*s).into(),
            _ => usage(e),
        }
    }
}

impl From<RegError> for Fail {
    fn from(e: RegError) -> Self {
        match e {
            RegError::Reference(s) => (*s).into(),
            _ => usage(e),
        }
    }
}

/// Files produced by a command, written only once it has succeeded.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<(), Fail> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| Fail::Numerical(anyhow!("writing {name}: {e}")))?;
        self.add(name, buf);
        Ok(())
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: &'a str,
    tool: &'static str,
    version: &'static str,
    output_dir: String,
    parameters: Value,
    verdict: &'a str,
    files: Vec<&'a str>,
}

struct Report {
    pass: bool,
    verdict: String,
    parameters: Value,
    outputs: Outputs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let (Fail::Usage(e) | Fail::Numerical(e)) = &f;
            eprintln!("error: {e}");
            ExitCode::from(f.code())
        }
    }
}

fn load(cli: &Cli) -> Result<Setup, Fail> {
    match (&cli.config, cli.example) {
        (Some(p), _) => Ok(load_config(p)?),
        (None, Some(n)) => Ok(builtin_example(n)?),
        (None, None) => Err(usage(anyhow!("give --config PATH or --example N"))),
    }
}

fn run(cli: &Cli) -> Result<bool, Fail> {
    let mut setup = load(cli)?;
    let (name, report) = match &cli.command {
        Command::Simulate { integ, states } => ("simulate", cmd_simulate(&mut setup, integ, states)?),
        Command::Certify { gains, region, plant } => ("certify", cmd_certify(cli, &mut setup, gains, region, *plant)?),
        Command::Observe {
            integ,
            gains,
            region,
            xhat0,
            rate,
            k,
            slack,
            disturbance,
        } => {
            apply_integ(&mut setup, integ);
            if let Some(v) = xhat0 {
                setup.simulate.xhat0 = Some(v.clone());
            }
            let env = EnvelopeArgs {
                rate: *rate,
                k: *k,
                slack: *slack,
                disturbance: *disturbance,
            };
            ("observe", cmd_observe(cli, &mut setup, gains, region, &env)?)
        }
        Command::Synth {
            region,
            freeze,
            budget,
            tie,
            gain_box,
        } => {
            if let Some(f) = freeze {
                setup.synth.freeze = f.iter().filter(|s| !s.is_empty()).cloned().collect();
            }
            if let Some(b) = budget {
                setup.synth.budget = *b;
            }
            if *tie {
                setup.synth.tie = true;
            }
            if let Some(b) = gain_box {
                setup.synth.gain_box = [b[0], b[1]];
            }
            if let Some(s) = cli.seed {
                setup.synth.seed = s;
            }
            ("synth", cmd_synth(cli, &mut setup, region)?)
        }
        Command::Regstudy { integ, eps, transition } => {
            apply_integ(&mut setup, integ);
            ("regstudy", cmd_regstudy(cli, &setup, integ, eps.as_deref(), *transition)?)
        }
    };
    println!("{}: {}", name, report.verdict);
    write_outputs(&cli.out, name, &setup, report.outputs, report.parameters, &report.verdict)?;
    Ok(report.pass)
}

fn write_outputs(
    dir: &Path,
    command: &str,
    setup: &Setup,
    outputs: Outputs,
    parameters: Value,
    verdict: &str,
) -> Result<(), Fail> {
    let io = |e: std::io::Error, p: &Path| Fail::Numerical(anyhow!("writing {}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    for (name, bytes) in &outputs.files {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| io(e, &p))?;
    }
    let manifest = RunManifest {
        command,
        config: &setup.origin,
        tool: "pwsobs",
        version: env!("CARGO_PKG_VERSION"),
        output_dir: dir.display().to_string(),
        parameters,
        verdict,
        files: outputs.files.iter().map(|(n, _)| n.as_str()).collect(),
    };
    let p = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, text + "\n").map_err(|e| io(e, &p))?;
    println!("wrote {} files to {}", outputs.files.len() + 1, dir.display());
    Ok(())
}

fn apply_integ(setup: &mut Setup, a: &IntegArgs) {
    let s = &mut setup.simulate;
    if let Some(v) = a.t0 {
        s.t0 = v;
    }
    if let Some(v) = a.tf {
        s.tf = v;
    }
    if let Some(v) = &a.x0 {
        s.x0 = Some(v.clone());
    }
    if let Some(v) = a.rtol {
        s.rel_tol = v;
    }
    if let Some(v) = a.atol {
        s.abs_tol = v;
    }
    if let Some(v) = a.max_step {
        s.max_step = v;
    }
    if let Some(v) = a.tol_event {
        s.tol_event = v;
    }
    if let Some(v) = a.sample_interval {
        s.sample_interval = v;
    }
}

fn integrator(setup: &Setup) -> Result<IntegratorConfig, Fail> {
    let cfg = setup.simulate.integrator();
    cfg.validate().map_err(|m| usage(anyhow!("integrator settings: {m}")))?;
    Ok(cfg)
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<(), Fail> {
    if v.len() != n {
        return Err(usage(anyhow!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

fn trajectory_plot(title: &str, traj: &Trajectory, states: &[usize]) -> String {
    let series = states
        .iter()
        .map(|&i| Series::new(format!("x{i}"), traj.samples.iter().map(|s| (s.t, s.x[i - 1])).collect()))
        .collect();
    Plot {
        title: title.into(),
        xlabel: "t".into(),
        ylabel: "state".into(),
        series,
        ..Default::default()
    }
    .render()
}

fn cmd_simulate(setup: &mut Setup, integ: &IntegArgs, states: &[usize]) -> Result<Report, Fail> {
    apply_integ(setup, integ);
    let n = setup.system.dim();
    let cfg = integrator(setup)?;
    let x0 = setup.x0();
    check_len("x0", &x0, n)?;
    let states: Vec<usize> = if states.is_empty() { (1..=n).collect() } else { states.to_vec() };
    if let Some(bad) = states.iter().find(|&&i| i == 0 || i > n) {
        return Err(usage(anyhow!("state index {bad} out of range 1..={n}")));
    }
    let traj = integrate(setup.system.as_ref(), &x0, &cfg)?;
    let mut out = Outputs::new();
    out.csv("trajectory.csv", |w| write_trajectory_csv(&traj, w))?;
    out.csv("events.csv", |w| write_events_csv(&traj, w))?;
    out.add("trajectory.svg", trajectory_plot(&setup.name, &traj, &states));
    let counts: Vec<String> = [
        EventKind::Crossing,
        EventKind::SlidingEntry,
        EventKind::SlidingExit,
        EventKind::Grazing,
    ]
    .iter()
    .map(|k| format!("{}={}", k.as_str(), traj.count(*k)))
    .collect();
    println!("{} samples, events: {}", traj.samples.len(), counts.join(" "));
    Ok(Report {
        pass: true,
        verdict: "ok".into(),
        parameters: json!({ "x0": x0, "integrator": integ_json(&cfg) }),
        outputs: out,
    })
}

fn integ_json(cfg: &IntegratorConfig) -> Value {
    json!({
        "t0": cfg.t0, "tf": cfg.tf, "rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol,
        "max_step": cfg.max_step, "tol_event": cfg.tol_event, "sample_interval": cfg.sample_interval,
    })
}

fn parse_boxes(s: &str, what: &str) -> Result<Vec<[f64; 2]>, Fail> {
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| usage(anyhow!("{what}: expected lo:hi, got '{part}'")))?;
            let p = |v: &str| v.trim().parse::<f64>().map_err(|e| usage(anyhow!("{what}: '{v}': {e}")));
            Ok([p(a)?, p(b)?])
        })
        .collect()
}

fn measure_kind(cli: &Cli, setup: &Setup) -> MeasureKind {
    cli.measure
        .or(setup.certify.as_ref().map(|c| c.measure))
        .unwrap_or(MeasureKind::L2)
}

fn sampling(setup: &Setup, a: &RegionArgs) -> Result<Option<SamplingRegion>, Fail> {
    let mut s = setup.certify.as_ref().map(SamplingRegion::from_section);
    if let Some(r) = &a.region {
        let region = parse_boxes(r, "--region")?;
        match &mut s {
            Some(s) => s.region = region,
            None => s = Some(SamplingRegion::new(region, None, 41)),
        }
    }
    if let Some(s) = &mut s {
        if let Some(o) = &a.output_range {
            s.output_range = Some(parse_boxes(o, "--output-range")?);
        }
        if let Some(g) = a.grid {
            s.grid = g;
        }
    } else if a.output_range.is_some() || a.grid.is_some() {
        return Err(usage(anyhow!("--output-range and --grid need a region (--region or [certify])")));
    }
    Ok(s)
}

fn gain_matrix(v: &[f64], n: usize, p: usize, what: &str) -> Result<DMatrix<f64>, Fail> {
    if v.len() != n * p {
        return Err(usage(anyhow!("{what} needs {} values (n = {n}, p = {p}), got {}", n * p, v.len())));
    }
    Ok(DMatrix::from_row_slice(n, p, v))
}

fn observer(setup: &Setup, g: &GainArgs) -> Result<ObserverSpec, Fail> {
    let base = setup
        .observer
        .clone()
        .ok_or_else(|| usage(anyhow!("config has no [observer] section")))?;
    let (n, p) = (setup.system.dim(), base.output_dim());
    let mut lp = base.gain(Mode::Plus).clone();
    let mut lm = base.gain(Mode::Minus).clone();
    if let Some(v) = &g.gains {
        lp = gain_matrix(v, n, p, "--gains")?;
        lm = lp.clone();
    }
    if let Some(v) = &g.gains_plus {
        lp = gain_matrix(v, n, p, "--gains-plus")?;
    }
    if let Some(v) = &g.gains_minus {
        lm = gain_matrix(v, n, p, "--gains-minus")?;
    }
    base.with_gains(lp, lm).map_err(usage)
}

/// Exact check for PWA systems, sampled otherwise.
fn certify_obs(obs: &ObserverSpec, kind: MeasureKind, s: Option<&SamplingRegion>) -> Result<Certificate, Fail> {
    if obs.system().pwa_matrices().is_some() {
        return Ok(certify_pwa_exact(obs, kind, s)?);
    }
    let s = s.ok_or_else(|| usage(anyhow!("sampled check needs a region (--region or [certify])")))?;
    Ok(certify_observer(obs, kind, s)?)
}

fn gains_json(obs: &ObserverSpec) -> Value {
    json!({
        "l_plus": obs.gain(Mode::Plus).transpose().as_slice(),
        "l_minus": obs.gain(Mode::Minus).transpose().as_slice(),
    })
}

fn certificate_outputs(out: &mut Outputs, cert: &Certificate) -> Result<(), Fail> {
    out.add("certificate.txt", cert.report());
    out.csv("certificate.csv", |w| cert.write_csv(w))
}

fn cmd_certify(cli: &Cli, setup: &mut Setup, g: &GainArgs, r: &RegionArgs, plant: bool) -> Result<Report, Fail> {
    let kind = measure_kind(cli, setup);
    let s = sampling(setup, r)?;
    let (cert, params) = if plant || setup.observer.is_none() {
        let s = s.ok_or_else(|| usage(anyhow!("plant check needs a region (--region or [certify])")))?;
        (certify_plant(&setup.system, kind, &s)?, json!({ "subject": "plant" }))
    } else {
        let obs = observer(setup, g)?;
        (certify_obs(&obs, kind, s.as_ref())?, gains_json(&obs))
    };
    print!("{}", cert.report());
    let mut out = Outputs::new();
    certificate_outputs(&mut out, &cert)?;
    Ok(Report {
        pass: cert.is_certified(),
        verdict: format!("{} (rate {})", cert.verdict.as_str(), cert.rate),
        parameters: json!({ "measure": kind, "gains": params }),
        outputs: out,
    })
}

struct EnvelopeArgs {
    rate: Option<f64>,
    k: Option<f64>,
    slack: Option<f64>,
    disturbance: bool,
}

fn cmd_observe(cli: &Cli, setup: &mut Setup, g: &GainArgs, r: &RegionArgs, env: &EnvelopeArgs) -> Result<Report, Fail> {
    let kind = measure_kind(cli, setup);
    let obs = observer(setup, g)?;
    let cfg = integrator(setup)?;
    let n = setup.system.dim();
    let (x0, xhat0) = (setup.x0(), setup.xhat0());
    check_len("x0", &x0, n)?;
    check_len("xhat0", &xhat0, n)?;
    let k = env.k.unwrap_or(setup.observe.k);
    let slack = env.slack.unwrap_or(setup.observe.slack);
    let mut out = Outputs::new();
    let c = match env.rate.or(setup.observe.rate) {
        Some(c) => c,
        None => {
            let cert = certify_obs(&obs, kind, sampling(setup, r)?.as_ref())?;
            if !cert.is_certified() {
                print!("{}", cert.report());
                return Err(usage(anyhow!(
                    "no envelope rate given and the gains are not certified ({})",
                    cert.verdict.as_str()
                )));
            }
            println!("using certified rate {}", cert.rate);
            certificate_outputs(&mut out, &cert)?;
            cert.rate
        }
    };
    let mut run = run_pair(&obs, &x0, &xhat0, &cfg, kind)?;
    let rep = check_envelope(&mut run.trace, k, c, slack)?;
    println!("{}", rep.summary_line());
    let mut pass = rep.pass;
    let mut text = rep.summary_line() + "\n";
    for v in rep.violations.iter().take(20) {
        text += &format!("violation t={} err={} bound={}\n", v.t, v.err, v.bound);
    }

    let trace = &run.trace;
    out.csv("error.csv", |w| trace.write_csv(w))?;
    out.csv("plant.csv", |w| write_trajectory_csv(&run.plant, w))?;
    out.csv("plant_events.csv", |w| write_events_csv(&run.plant, w))?;
    out.csv("observer.csv", |w| write_trajectory_csv(&run.observer, w))?;
    out.csv("observer_events.csv", |w| write_events_csv(&run.observer, w))?;
    out.add(
        "error.svg",
        Plot {
            title: format!("{}: estimation error ({kind} norm)", setup.name),
            xlabel: "t".into(),
            ylabel: "|e(t)|".into(),
            log_y: true,
            series: vec![
                Series::new("|e|", trace.samples.clone()),
                Series::new(
                    format!("K e^(-{c} t)"),
                    trace.samples.iter().map(|&(t, _)| (t, trace.bound(k, c, t))).collect(),
                )
                .dashed(),
            ],
            ..Default::default()
        }
        .render(),
    );

    if env.disturbance {
        let d = setup
            .disturbance
            .clone()
            .ok_or_else(|| usage(anyhow!("config has no [disturbance] section")))?;
        let mut dcfg = cfg.clone();
        if let Some(tf) = d.tf {
            dcfg.tf = tf;
        }
        let rep = disturbance_study(&obs, &d.param, &d.levels, &x0, &xhat0, &dcfg, kind, Some((k, c)))?;
        let line = format!(
            "disturbance {}: {}",
            d.param,
            if rep.pass { "pass" } else { "fail" }
        );
        println!("{line}");
        text += &line;
        text.push('\n');
        for row in &rep.rows {
            let l = format!("  level {} ({} = {}): tail sup {}", row.level, d.param, row.value, row.tail_sup);
            println!("{l}");
            text += &l;
            text.push('\n');
        }
        for note in &rep.notes {
            text += &format!("  note: {note}\n");
        }
        pass &= rep.pass;
        out.csv("disturbance.csv", |w| rep.write_csv(w))?;
    }
    out.add("envelope.txt", text);
    Ok(Report {
        pass,
        verdict: if pass { "pass".into() } else { "fail".into() },
        parameters: json!({
            "measure": kind, "gains": gains_json(&obs), "x0": x0, "xhat0": xhat0,
            "k": k, "c": c, "slack": slack, "integrator": integ_json(&cfg),
        }),
        outputs: out,
    })
}

fn cmd_synth(cli: &Cli, setup: &mut Setup, r: &RegionArgs) -> Result<Report, Fail> {
    let kind = measure_kind(cli, setup);
    let template = observer(setup, &GainArgs {
        gains: None,
        gains_plus: None,
        gains_minus: None,
    })?;
    let region = sampling(setup, r)?.ok_or_else(|| usage(anyhow!("synthesis needs a region (--region or [certify])")))?;
    let prob = SynthesisProblem::from_section(template, kind, region, &setup.synth);
    let res = synthesize(&prob).map_err(usage)?;
    let text = format!("{}\n{}", res.summary(), res.certificate.report());
    print!("{text}");
    let mut out = Outputs::new();
    out.add("synth.txt", text);
    out.csv("certificate.csv", |w| res.certificate.write_csv(w))?;
    Ok(Report {
        pass: res.feasible,
        verdict: if res.feasible {
            format!("feasible (rate {})", res.certificate.rate)
        } else {
            "infeasible".into()
        },
        parameters: json!({
            "measure": kind,
            "gain_box": setup.synth.gain_box,
            "freeze": setup.synth.freeze,
            "tie": setup.synth.tie,
            "budget": setup.synth.budget,
            "seed": setup.synth.seed,
            "result": { "l_plus": res.l_plus.transpose().as_slice(), "l_minus": res.l_minus.transpose().as_slice() },
        }),
        outputs: out,
    })
}

/// Slope window accepted as first order.
const ORDER_WINDOW: [f64; 2] = [0.8, 1.2];

fn cmd_regstudy(
    cli: &Cli,
    setup: &Setup,
    integ: &IntegArgs,
    eps: Option<&[f64]>,
    transition: Option<TransitionKind>,
) -> Result<Report, Fail> {
    let kind = measure_kind(cli, setup);
    let sec = setup.regstudy.as_ref();
    let eps: Vec<f64> = eps
        .map(<[f64]>::to_vec)
        .or(sec.map(|s| s.eps.clone()))
        .ok_or_else(|| usage(anyhow!("give --eps or a [regstudy] section")))?;
    let transition = transition.or(sec.map(|s| s.transition)).unwrap_or_default();
    let mut cfg = integrator(setup)?;
    if let (None, Some(tf)) = (integ.tf, sec.and_then(|s| s.tf)) {
        cfg.tf = tf;
    }
    let x0 = setup.x0();
    check_len("x0", &x0, setup.system.dim())?;
    let study = order_study(&setup.system, transition, &x0, &cfg, &eps, kind)?;
    println!("{}", study.summary_line());
    for (e, err) in &study.failures {
        println!("  eps = {e}: {err}");
    }
    let pass = study.failures.is_empty()
        && study.slope.is_some_and(|s| (ORDER_WINDOW[0]..=ORDER_WINDOW[1]).contains(&s));
    let mut out = Outputs::new();
    out.csv("regstudy.csv", |w| study.write_csv(w))?;
    let mut series = vec![Series::new(
        "sup deviation",
        study.points.iter().map(|p| (p.epsilon, p.sup_deviation)).collect(),
    )];
    if let (Some(m), Some(c)) = (study.slope, study.constant) {
        series.push(
            Series::new(
                format!("fit, slope {m:.3}"),
                study.points.iter().map(|p| (p.epsilon, c * p.epsilon.powf(m))).collect(),
            )
            .dashed(),
        );
    }
    out.add(
        "regstudy.svg",
        Plot {
            title: format!("{}: regularization error", setup.name),
            xlabel: "epsilon".into(),
            ylabel: format!("sup |x_eps - x| ({kind})"),
            log_x: true,
            log_y: true,
            series,
        }
        .render(),
    );
    out.add("regstudy.txt", study.summary_line() + "\n");
    Ok(Report {
        pass,
        verdict: format!(
            "slope {} ({} window [{}, {}])",
            study.slope.map_or("n/a".into(), |s| format!("{s:.4}")),
            if pass { "inside" } else { "outside" },
            ORDER_WINDOW[0],
            ORDER_WINDOW[1]
        ),
        parameters: json!({
            "measure": kind, "eps": eps, "transition": transition.to_string(),
            "x0": x0, "integrator": integ_json(&cfg),
        }),
        outputs: out,
    })
}
