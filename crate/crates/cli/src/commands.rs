use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use pathldp::io::{fmt17, path_from_csv, path_to_csv, trajectory_to_csv};
use pathldp::legendre::legendre_transform;
use pathldp::simulate::{
    exhaustive_tube_probability, make_tilt_schedule, sample_replica, tube_probability_mc, tube_probability_tilted,
};
use pathldp::verify::{ldp_sweep, SweepOptions};
use pathldp::{
    action as action_value, admissibility, minimize_action, ActionOptions, BallOptions, ChainSpec, Error,
    LegendreOptions, MinimizeOptions, Mode, ModelConfig, Path, Result, TubeEstimate,
};
use sha2::{Digest, Sha256};

use crate::{ActionArgs, LdpCheckArgs, MinpathArgs, RateArgs, SimulateArgs};

const HULL_TOL: f64 = 1e-9;

struct Loaded {
    spec: ChainSpec,
    digest: String,
}

/// A failed run: exit code, machine-readable kind, message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn validation(kind: &'static str, message: String) -> Self {
        Failure { code: 2, kind, message }
    }
}

fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Segment { source, .. } => classify(source),
        Error::Invalid(_) => (2, "invalid"),
        Error::OutsideDomain { .. } => (2, "outside-domain"),
        Error::Config(_) => (2, "config"),
        Error::Parse { .. } => (2, "malformed-csv"),
        Error::Io(_) => (2, "io"),
        Error::NoConvergence { .. } => (3, "no-convergence"),
        Error::Numerical(_) => (3, "numerical"),
        Error::CapExceeded { .. } => (4, "cap-exceeded"),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = classify(&e);
        Failure { code, kind, message: e.to_string() }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn read(path: &FsPath) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::validation("missing-file", format!("missing file {}", path.display()))
        } else {
            Error::Io(e).into()
        }
    })
}

fn load_model(path: &FsPath) -> std::result::Result<Loaded, Failure> {
    let text = read(path)?;
    let spec = ModelConfig::from_json(&text)?.build()?;
    let digest = Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    Ok(Loaded { spec, digest })
}

fn load_path(path: &FsPath) -> std::result::Result<Path, Failure> {
    Ok(path_from_csv(&read(path)?)?)
}

fn header(command: &str, model: &Loaded, seed: Option<u64>) -> String {
    let mut h = format!("# pathldp {}\n# command {command}\n", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(h, "# model {} sha256 {}", model.spec.id(), model.digest);
    let _ = writeln!(h, "# epsilon {} horizon {}", fmt17(model.spec.epsilon()), fmt17(model.spec.horizon()));
    if let Some(seed) = seed {
        let _ = writeln!(h, "# seed {seed}");
    }
    h
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::Io),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(",")
}

fn columns(prefix: &str, d: usize) -> String {
    (1..=d).map(|a| format!("{prefix}{a}")).collect::<Vec<_>>().join(",")
}

fn check_dim(name: &str, got: usize, want: usize) -> Outcome {
    if got != want {
        return Err(Failure::validation("invalid", format!("--{name} has {got} components, model dimension is {want}")));
    }
    Ok(())
}

pub fn rate(a: &RateArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let spec = &model.spec;
    let d = spec.dim();
    check_dim("at", a.at.len(), d + 1)?;
    check_dim("vstar", a.vstar.len(), d)?;
    let mode: Mode = a.mode.parse()?;
    let (s, u) = (a.at[0], &a.at[1..]);
    let p = legendre_transform(spec, s, u, &a.vstar, mode, &LegendreOptions::default())?;
    let mut text = header("rate", &model, None);
    let _ = writeln!(
        text,
        "s,{},{},value,{},flag,iterations,residual",
        columns("u", d),
        columns("vstar", d),
        columns("lambda", d)
    );
    let lambda = match &p.dual {
        Some(l) => join(l),
        None => vec!["nan"; d].join(","),
    };
    let _ = writeln!(
        text,
        "{},{},{},{},{lambda},{},{},{}",
        fmt17(s),
        join(u),
        join(&a.vstar),
        fmt17(p.value),
        p.flag,
        p.iterations,
        fmt17(p.residual)
    );
    Ok(emit(None, &text)?)
}

pub fn action(a: &ActionArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let spec = &model.spec;
    let path = load_path(&a.path)?;
    check_dim("path", path.dim(), spec.dim())?;
    let class = admissibility(&path, spec, HULL_TOL);
    if !class.is_admissible() {
        return Err(Failure::validation("inadmissible", "a path velocity leaves the jump hull".into()));
    }
    let opts = ActionOptions {
        mode: a.mode.parse()?,
        refine: a.refine,
        quad_tol: a.quad_tol,
        ..ActionOptions::default()
    };
    let v = action_value(&path, spec, &opts)?;
    let mut text = header("action", &model, None);
    text.push_str("value,error_bound,scheme,segments,bisections,class\n");
    let _ = writeln!(
        text,
        "{},{},{},{},{},{}",
        fmt17(v.value),
        fmt17(v.error_bound),
        v.scheme,
        v.segments.len(),
        v.bisections,
        class.label()
    );
    Ok(emit(None, &text)?)
}

pub fn minpath(a: &MinpathArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let spec = &model.spec;
    check_dim("from", a.from.len(), spec.dim())?;
    check_dim("to", a.to.len(), spec.dim())?;
    let opts = MinimizeOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ..MinimizeOptions::default()
    };
    let m = minimize_action(spec, &a.from, &a.to, a.segments, &opts)?;
    let mut head = header("minpath", &model, None);
    let summary = format!(
        "{},{},{},{}\n",
        fmt17(m.action.value),
        m.iterations,
        fmt17(m.gradient_norm),
        m.converged
    );
    match &a.out {
        Some(out) => {
            emit(Some(out), &format!("{head}{}", path_to_csv(&m.path)))?;
            head.push_str("value,iterations,gradient_norm,converged\n");
            head.push_str(&summary);
            Ok(emit(None, &head)?)
        }
        None => {
            // Stdout stays a valid path file; the summary goes into comments.
            head.push_str("# value,iterations,gradient_norm,converged\n# ");
            head.push_str(&summary);
            head.push_str(&path_to_csv(&m.path));
            Ok(emit(None, &head)?)
        }
    }
}

fn estimate_row(e: &TubeEstimate) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        e.estimator,
        fmt17(e.p_hat),
        fmt17(e.std_error),
        fmt17(e.ci.0),
        fmt17(e.ci.1),
        fmt17(e.ess()),
        e.n_samples
    )
}

pub fn simulate(a: &SimulateArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let spec = &model.spec;
    let started = Instant::now();
    if let Some(dump) = &a.dump_trajectory {
        let traj = sample_replica(spec, a.seed, 0)?;
        let head = header("simulate", &model, Some(a.seed));
        std::fs::write(dump, format!("{head}{}", trajectory_to_csv(&traj))).map_err(Error::Io)?;
    }
    let mut text = header("simulate", &model, Some(a.seed));
    let timing = |text: &mut String| {
        if a.timing {
            let _ = write!(text, ",{}", fmt17(started.elapsed().as_secs_f64()));
        }
        text.push('\n');
    };
    match (&a.tube, a.rho) {
        (Some(tube), Some(rho)) => {
            let center = load_path(tube)?;
            check_dim("tube", center.dim(), spec.dim())?;
            let est = if a.exhaustive {
                exhaustive_tube_probability(spec, &center, rho, a.cap)?
            } else if let Some(reference) = &a.tilt {
                let reference = load_path(reference)?;
                check_dim("tilt", reference.dim(), spec.dim())?;
                let schedule = make_tilt_schedule(spec, &reference)?;
                tube_probability_tilted(spec, &center, rho, &schedule, a.n, a.seed)?
            } else {
                tube_probability_mc(spec, &center, rho, a.n, a.seed)?
            };
            text.push_str("estimator,p_hat,stderr,ci_lo,ci_hi,ess,n");
            text.push_str(if a.timing { ",wall_time\n" } else { "\n" });
            text.push_str(&estimate_row(&est));
            timing(&mut text);
        }
        (None, None) => {
            if a.exhaustive || a.tilt.is_some() {
                return Err(Failure::validation("invalid", "--exhaustive and --tilt need --tube and --rho".into()));
            }
            if a.n == 0 {
                return Err(Failure::validation("invalid", "need at least one sample".into()));
            }
            let (mean, sd) = endpoint_stats(spec, a.n, a.seed)?;
            let d = spec.dim();
            let _ = write!(text, "n,{},{}", columns("mean", d), columns("sd", d));
            text.push_str(if a.timing { ",wall_time\n" } else { "\n" });
            let _ = write!(text, "{},{},{}", a.n, join(&mean), join(&sd));
            timing(&mut text);
        }
        _ => return Err(Failure::validation("invalid", "--tube and --rho must be given together".into())),
    }
    Ok(emit(a.out.as_ref(), &text)?)
}

/// Mean and standard deviation of the endpoint over `n` replicas, reduced in
/// replica order so the result does not depend on the thread count.
fn endpoint_stats(spec: &ChainSpec, n: u64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    use rayon::prelude::*;
    let d = spec.dim();
    let ends: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let t = sample_replica(spec, seed, r)?;
            Ok(t.position(t.n_steps()))
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; d];
    for e in &ends {
        for (m, x) in mean.iter_mut().zip(e) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for e in &ends {
        for a in 0..d {
            var[a] += (e[a] - mean[a]).powi(2);
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    Ok((mean, var.into_iter().map(|v| (v / denom).sqrt()).collect()))
}

pub fn ldp_check(a: &LdpCheckArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let spec = &model.spec;
    let center = load_path(&a.center)?;
    check_dim("center", center.dim(), spec.dim())?;
    if !(a.budget >= 1.0) || a.budget.fract() != 0.0 || a.budget > u64::MAX as f64 {
        return Err(Failure::validation("invalid", "--budget must be a positive integer".into()));
    }
    let eta = a.eta.unwrap_or(a.rho / 4.0);
    let opts = SweepOptions {
        ball: BallOptions {
            subdivide: a.subdivide,
            ..BallOptions::default()
        },
        correction_eta: a.corrected.then_some(eta),
        ..SweepOptions::default()
    };
    let report = ldp_sweep(spec, &a.eps, &center, a.rho, a.budget as u64, a.seed, &opts)?;
    let mut text = header("ldp-check", &model, Some(a.seed));
    let _ = writeln!(
        text,
        "# rho {} i_ball_closed {} i_ball_open {}",
        fmt17(report.rho),
        fmt17(report.i_ball_closed),
        fmt17(report.i_ball_open)
    );
    text.push_str("epsilon,estimator,p_hat,stderr,ci_lo,ci_hi,ess,n,neg_eps_log_p,i_ball,gap,degenerate");
    text.push_str(if a.corrected { ",corrected\n" } else { "\n" });
    let mut plot = String::from("epsilon\tneg_eps_log_p\ti_ball\n");
    for row in &report.rows {
        let _ = write!(
            text,
            "{},{},{},{},{},{}",
            fmt17(row.epsilon),
            estimate_row(&row.estimate),
            fmt17(row.neg_eps_log_p),
            fmt17(row.i_ball),
            fmt17(row.gap),
            row.degenerate
        );
        if let Some(c) = row.corrected {
            let _ = write!(text, ",{}", fmt17(c));
        }
        text.push('\n');
        let _ = writeln!(plot, "{}\t{}\t{}", fmt17(row.epsilon), fmt17(row.neg_eps_log_p), fmt17(row.i_ball));
    }
    if let Some(p) = &a.plot_data {
        std::fs::write(p, plot).map_err(Error::Io)?;
    }
    Ok(emit(a.out.as_ref(), &text)?)
}
