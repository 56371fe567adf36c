use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwp_core::fields::{penning_scaling, Species, TrapParameters};
use gwp_core::harness::{emit_csv, run_check_suite, CsvRecord, SUITES};
use gwp_core::integrators::IntegratorKind;
use gwp_core::observables::{Diagnostics, ParameterErrors};
use gwp_core::scenarios::{
    check_initial_symplecticity, initial_canonical, propagate, run_experiment, step_count, ExperimentResult,
    ExperimentSpec, PRESETS,
};
use gwp_core::GwpError;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gwp", version, about = "Variational Gaussian wave packets in magnetic fields")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write per-step CSV.
    Simulate(GridArgs),
    /// Run a step-size grid against the reference and summarize convergence orders.
    Converge(GridArgs),
    /// Long-horizon energy and norm study; writes one series CSV per run.
    Energy(GridArgs),
    /// Seeded identity suites.
    Check {
        /// Suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dimensionless Penning trap parameters from physical trap data.
    PenningScale {
        #[arg(long, value_enum, default_value = "proton")]
        species: SpeciesArg,
        /// Trap size in metres.
        #[arg(long)]
        delta: Option<f64>,
        /// Magnetic field in tesla.
        #[arg(long)]
        b0: Option<f64>,
        /// Electrode voltage in volts.
        #[arg(long)]
        phi0: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SpeciesArg {
    Proton,
    Electron,
}

#[derive(Args)]
struct GridArgs {
    /// Named preset; see `--list-presets`.
    #[arg(long)]
    preset: Option<String>,
    /// JSON experiment file. A `preset` key inside it selects the base that its other keys override.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, visible_alias = "tau", value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, visible_alias = "integrators", value_delimiter = ',')]
    integrator: Option<Vec<IntegratorKind>>,
    #[arg(long)]
    quad_order: Option<usize>,
    #[arg(long)]
    tau_ref: Option<f64>,
    /// Output directory; falls back to `GWP_OUT_DIR`, then the working directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output file for `simulate`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    list_presets: bool,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<GwpError> for Failure {
    fn from(e: GwpError) -> Self {
        match e {
            GwpError::SingularWidth { .. }
            | GwpError::Evaluation { .. }
            | GwpError::ImaginaryResidual { .. }
            | GwpError::NonFiniteState { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match cli.cmd {
        Command::Simulate(a) => simulate(&a),
        Command::Converge(a) => grid(&a, "sublinear-convergence", false),
        Command::Energy(a) => grid(&a, "sublinear-energy", true),
        Command::Check { suite, seed } => check(&suite, seed),
        Command::PenningScale { species, delta, b0, phi0 } => penning_scale(species, delta, b0, phi0),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if v.is_object() && k != "field" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn build_spec(a: &GridArgs, default_preset: &str) -> Result<ExperimentSpec, Failure> {
    let file: Option<Value> = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let from_file = file.as_ref().and_then(|v| v.get("preset")).and_then(Value::as_str).map(str::to_owned);
    let preset = a.preset.clone().or(from_file).or_else(|| file.is_none().then(|| default_preset.to_string()));
    let mut value = match &preset {
        Some(name) => serde_json::to_value(ExperimentSpec::preset(name)?).expect("spec serializes"),
        None => Value::Object(Default::default()),
    };
    if let Some(mut f) = file {
        if let Value::Object(m) = &mut f {
            m.remove("preset");
        }
        merge(&mut value, f);
    }
    let mut spec: ExperimentSpec = serde_json::from_value(value).map_err(|e| usage(format!("config: {e}")))?;
    if let Some(v) = &a.eps {
        spec.eps = v.clone();
    }
    if let Some(v) = &a.taus {
        spec.taus = v.clone();
    }
    if let Some(v) = a.t_end {
        spec.t_end = v;
    }
    if let Some(v) = &a.integrator {
        spec.integrators = v.clone();
    }
    if let Some(v) = a.quad_order {
        spec.quad_order = v;
    }
    if let Some(v) = a.tau_ref {
        match spec.reference.as_mut() {
            Some(r) => r.tau_ref = v,
            None => return Err(usage("--tau-ref given but the experiment has no reference")),
        }
    }
    if a.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    spec.validate()?;
    Ok(spec)
}

fn out_dir(a: &GridArgs) -> Result<PathBuf, Failure> {
    let dir = a
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("GWP_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn list_presets() -> Result<(), Failure> {
    for p in PRESETS {
        println!("{p}");
    }
    Ok(())
}

fn simulate(a: &GridArgs) -> Result<(), Failure> {
    if a.list_presets {
        return list_presets();
    }
    let spec = build_spec(a, "sublinear-convergence")?;
    let (eps, tau, kind) = (spec.eps[0], spec.taus[0], spec.integrators[0]);
    let dy = spec.dynamics();
    let init = initial_canonical(spec.initial, &spec.field, eps)?;
    if let Some(w) = check_initial_symplecticity(&init)? {
        eprintln!("warning: {w}");
    }
    let mut records = Vec::new();
    let mut e0 = None;
    let start = Instant::now();
    propagate(&dy, &init, kind, tau, step_count(spec.t_end, tau), |s| {
        let e = match e0 {
            Some(e) => e,
            None => *e0.insert(dy.energy(&s.magnetic)?),
        };
        records.push(CsvRecord { diag: Diagnostics::of_state(&dy, &s.magnetic, e)?, state: s.magnetic.clone() });
        Ok(())
    })?;
    let path = match &a.out {
        Some(p) => p.clone(),
        None => out_dir(a)?.join(format!("{}_{kind}_eps{eps:e}_tau{tau}.csv", spec.name)),
    };
    emit_csv(&path, spec.field.dim(), &records)?;
    println!(
        "{} steps in {:.2} s -> {}",
        records.len().saturating_sub(1),
        start.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

fn errors_json(e: &ParameterErrors) -> Value {
    ParameterErrors::NAMES.iter().zip(e.as_array()).map(|(n, v)| ((*n).to_string(), json!(v))).collect()
}

fn summary(res: &ExperimentResult, runtime_s: f64) -> Value {
    let runs: Vec<Value> = res
        .runs
        .iter()
        .map(|r| {
            json!({
                "eps": r.eps,
                "tau": r.tau,
                "integrator": r.integrator,
                "n_steps": r.n_steps,
                "max_errors": r.max_errors.as_ref().map(errors_json),
                "max_l2": r.max_l2,
                "max_energy_err_abs": r.max_energy_err_abs,
                "max_energy_err_rel": r.max_energy_err_rel,
                "max_norm_dev": r.max_norm_dev,
                "warnings": r.warnings,
                "error": r.error,
                "runtime_s": r.runtime_s,
            })
        })
        .collect();
    json!({
        "preset": res.spec.name,
        "eps": res.spec.eps,
        "tau": res.spec.taus,
        "integrator": res.spec.integrators,
        "max_errors": runs,
        "slopes": res.slopes,
        "runtime_s": runtime_s,
        "reference_runtime_s": res.reference_runtime_s,
        "config": res.spec,
    })
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn print_table(res: &ExperimentResult) {
    for t in &res.slopes {
        println!("eps = {:e}, {}", t.eps, t.integrator);
        let rows: Vec<_> = res.runs.iter().filter(|r| r.eps == t.eps && r.integrator == Some(t.integrator)).collect();
        let mut head = format!("{:>10}", "tau");
        for n in ParameterErrors::NAMES {
            head.push_str(&format!(" {n:>10}"));
        }
        head.push_str(&format!(" {:>10}", "energy"));
        println!("{head}");
        for r in rows {
            let mut line = format!("{:>10}", r.tau);
            match (&r.max_errors, &r.error) {
                (_, Some(e)) => line.push_str(&format!(" failed: {e}")),
                (Some(m), None) => {
                    for v in m.as_array() {
                        line.push_str(&format!(" {v:>10.3e}"));
                    }
                }
                (None, None) => line.push_str(&" ".repeat(66)),
            }
            line.push_str(&format!(" {:>10.3e}", r.max_energy_err_abs));
            println!("{line}");
        }
        let mut line = format!("{:>10}", "slope");
        for n in ParameterErrors::NAMES {
            line.push_str(&format!(" {:>10}", fmt_slope(t.parameters.get(n).and_then(|s| s.overall))));
        }
        line.push_str(&format!(" {:>10}", fmt_slope(t.energy.overall)));
        println!("{line}");
        if let Some(l2) = &t.l2 {
            println!("{:>10} {}", "L2 slope", fmt_slope(l2.overall));
        }
    }
}

fn grid(a: &GridArgs, default_preset: &str, series: bool) -> Result<(), Failure> {
    if a.list_presets {
        return list_presets();
    }
    let mut spec = build_spec(a, default_preset)?;
    spec.record_series |= series;
    let dir = out_dir(a)?;
    let start = Instant::now();
    let res = run_experiment(&spec, a.jobs)?;
    let runtime_s = start.elapsed().as_secs_f64();
    if series {
        for r in &res.runs {
            let kind = r.integrator.map_or("none", |k| k.name());
            let path = dir.join(format!("{}_{kind}_eps{:e}_tau{}.csv", spec.name, r.eps, r.tau));
            write_series(&path, r)?;
        }
    }
    print_table(&res);
    let path = dir.join(format!("{}_summary.json", spec.name));
    let text = serde_json::to_string_pretty(&summary(&res, runtime_s)).expect("summary serializes");
    std::fs::write(&path, text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    println!("summary -> {} ({runtime_s:.1} s)", path.display());
    for r in &res.runs {
        for w in &r.warnings {
            eprintln!("warning: eps={:e} tau={} {:?}: {w}", r.eps, r.tau, r.integrator);
        }
    }
    match res.runs.iter().find_map(|r| r.error.as_ref().map(|e| (r, e))) {
        Some((r, e)) => Err(Failure::Numerical(format!("eps={:e} tau={} {:?}: {e}", r.eps, r.tau, r.integrator))),
        None => Ok(()),
    }
}

fn write_series(path: &Path, r: &gwp_core::scenarios::RunResult) -> Result<(), Failure> {
    let mut text = String::from("t,energy_err_abs,norm_dev,l2\n");
    for p in &r.series {
        let l2 = p.l2.map_or(String::new(), |x| x.to_string());
        text.push_str(&format!("{},{},{},{l2}\n", p.t, p.energy_err_abs, p.norm_dev));
    }
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn check(suite: &str, seed: u64) -> Result<(), Failure> {
    let suites: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let mut failed = 0;
    for s in suites {
        let rep = run_check_suite(s, seed)?;
        for o in &rep.outcomes {
            println!(
                "{} {s}: {} = {:.3e} (tol {:.0e})",
                if o.passed { "ok  " } else { "FAIL" },
                o.name,
                o.value,
                o.tol
            );
            failed += usize::from(!o.passed);
        }
    }
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} identity checks failed")));
    }
    Ok(())
}

fn penning_scale(species: SpeciesArg, delta: Option<f64>, b0: Option<f64>, phi0: Option<f64>) -> Result<(), Failure> {
    let species = match species {
        SpeciesArg::Proton => Species::Proton,
        SpeciesArg::Electron => Species::Electron,
    };
    let base = TrapParameters::reference(species).expect("tabulated species");
    let p = TrapParameters::new(species, delta.unwrap_or(base.delta), b0.unwrap_or(base.b0), phi0.unwrap_or(base.phi0));
    let s = penning_scaling(&p)?;
    println!("nu_+      = {:.6e} Hz", s.nu_plus());
    println!("nu_3      = {:.6e} Hz", s.nu_3());
    println!("nu_-      = {:.6e} Hz", s.nu_minus());
    println!("eps       = {:.6e}", s.eps);
    println!("w_+/w_-   = {:.4}", s.ratio_omega);
    println!("B_0/B_m   = {:.4}", s.ratio_b);
    println!("Omega     = {:.6e} 1/s", s.big_omega);
    Ok(())
}
