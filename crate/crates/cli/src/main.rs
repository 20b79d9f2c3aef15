//! `skyrmion-lab`: energies, sweeps, stability probes and moduli figures from
//! the command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or parse error, 3 numeric
//! failure, 4 unresolved component counts.

mod config;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skyrmion_lab::energy::{evaluate, evaluate_map, EnergyError};
use skyrmion_lab::field_grid::GridSpec;
use skyrmion_lab::minimize::{
    best_rows, divergence_sweep, gradient_flow, minimal_energy_sweep, probe_homogeneous_stability, sweep_csv,
    tangent_noise, FlowError, FlowParams, PerturbationSet, Verdict, GLUING_RADII,
};
use skyrmion_lab::moduli::{
    bifurcation_scan, figure_csv, figure_svg, z1_extract, MeromorphicParams, ModuliError, Panel, DEFAULT_SAMPLES,
    SCAN_RATIOS, THRESHOLD_BAND,
};
use skyrmion_lab::solutions::{parse_complex, sample, AnalyticMap, LazySample, MapError};

const FAMILIES: &str = "\
Family strings:
  homogeneous
  skyrmion:r=R                 anti_skyrmion:r=R
  cutoff_skyrmion:r=R,R=RAD    cutoff_anti:r=R,R=RAD
  multi_vortex:r=R,R=RAD,k=K   stretched:r=R,L=LEN,k=K
  equivariant:r=R[,R=RAD],m=M,psi0=PSI
  distorted:a=A                meromorphic:k=K,a=A
  perturbed_homogeneous:lambda=LAM,t=T
Complex numbers are written like 0.5, 0.1i, 0+0.1i or 1-2i.

Every flag can also come from --config FILE, a flat `key = value` file
with the same key names (family, r, h, N, S, out, format, seed, k, a, L,
svg, csv). Flags override the file.";

#[derive(Parser)]
#[command(name = "skyrmion-lab", version, about = "Chiral skyrmion energy laboratory", after_help = FAMILIES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the energy breakdown of a family and print it as JSON.
    Energy(Opts),
    /// Minimal-energy table (r <= 1) or stretched-map divergence (r > 1) as CSV.
    Sweep(Opts),
    /// Z0 and Z1 of the f = a z^k solutions; `moduli scan` counts components across a*.
    Moduli {
        #[arg(value_parser = ["scan"])]
        action: Option<String>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Stability of the homogeneous state, or of a family under gradient flow.
    Stability(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    /// Helicity weight, or a comma list for `sweep`.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    h: Option<String>,
    /// Samples per axis.
    #[arg(long = "N")]
    n: Option<String>,
    /// Half width of the grid.
    #[arg(long = "S")]
    s: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// json or csv.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Degree list for `sweep`, power for `moduli`.
    #[arg(long, allow_hyphen_values = true)]
    k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Stretch lengths for `sweep` with r > 1.
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long)]
    svg: Option<String>,
    #[arg(long)]
    csv: Option<String>,
}

enum Failure {
    Io(String),
    Usage(String),
    Numeric(String),
    Unresolved(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Unresolved(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Usage(m) | Failure::Numeric(m) | Failure::Unresolved(m) => m,
        }
    }
}

impl From<MapError> for Failure {
    fn from(e: MapError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<EnergyError> for Failure {
    fn from(e: EnergyError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Params(m) => Failure::Usage(m),
            FlowError::Map(m) => m.into(),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

impl From<ModuliError> for Failure {
    fn from(e: ModuliError) -> Self {
        match e {
            ModuliError::Domain(m) => Failure::Usage(m),
            ModuliError::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

impl From<skyrmion_lab::field_grid::FieldError> for Failure {
    fn from(e: skyrmion_lab::field_grid::FieldError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

/// Flag values merged over the config file.
struct Settings(BTreeMap<String, String>);

impl Settings {
    fn new(opts: &Opts) -> Result<Self, Failure> {
        let mut map = match &opts.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                config::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            }
            None => BTreeMap::new(),
        };
        let flags = [
            ("family", &opts.family),
            ("r", &opts.r),
            ("h", &opts.h),
            ("N", &opts.n),
            ("S", &opts.s),
            ("out", &opts.out),
            ("format", &opts.format),
            ("seed", &opts.seed),
            ("k", &opts.k),
            ("a", &opts.a),
            ("L", &opts.l),
            ("svg", &opts.svg),
            ("csv", &opts.csv),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        Ok(Settings(map))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Failure::Usage(format!("--{key}: cannot parse {v:?}"))),
        }
    }

    fn real(&self, key: &str, default: f64) -> Result<f64, Failure> {
        let x = self.parsed::<f64>(key)?.unwrap_or(default);
        if !x.is_finite() {
            return Err(Failure::Usage(format!("--{key} must be finite")));
        }
        Ok(x)
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, Failure> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                if items.is_empty() {
                    return Err(Failure::Usage(format!("--{key}: empty list")));
                }
                items
                    .iter()
                    .map(|s| {
                        s.parse()
                            .map_err(|_| Failure::Usage(format!("--{key}: cannot parse {s:?}")))
                    })
                    .collect::<Result<Vec<T>, _>>()
                    .map(Some)
            }
        }
    }

    fn family(&self) -> Result<Option<AnalyticMap>, Failure> {
        self.raw("family")
            .map(|s| s.parse::<AnalyticMap>().map_err(Failure::from))
            .transpose()
    }

    /// Grid from `--N`/`--S`, each falling back to `default`.
    fn grid(&self, default: GridSpec) -> Result<Option<GridSpec>, Failure> {
        let n: Option<usize> = self.parsed("N")?;
        let s: Option<f64> = self.parsed("S")?;
        if n.is_none() && s.is_none() {
            return Ok(None);
        }
        GridSpec::new(s.unwrap_or(default.half_width()), n.unwrap_or(default.samples()))
            .map(Some)
            .map_err(|e| Failure::Usage(e.to_string()))
    }
}

fn write_output(path: Option<&str>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{p}: {e}"))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn positive_r(r: f64) -> Result<f64, Failure> {
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Failure::Usage(format!("--r must be positive, got {r}")))
    }
}

fn cmd_energy(opts: &Opts) -> Result<(), Failure> {
    let set = Settings::new(opts)?;
    let map = set
        .family()?
        .ok_or_else(|| Failure::Usage("energy needs --family".into()))?;
    let r = positive_r(set.real("r", 1.0)?)?;
    let h = set.real("h", 0.0)?;
    let b = match set.grid(map.default_grid())? {
        Some(grid) => evaluate(&LazySample::new(&map, grid), r, h)?,
        None => evaluate_map(&map, r, h)?,
    };
    if b.degree_unresolved() {
        eprintln!("warning: degree {} is not resolved on this grid", b.q_raw);
    }
    let text = match set.raw("format").unwrap_or("json") {
        "json" => b.to_json() + "\n",
        other => return Err(Failure::Usage(format!("energy writes json, not {other:?}"))),
    };
    write_output(set.raw("out"), &text)
}

fn cmd_sweep(opts: &Opts) -> Result<(), Failure> {
    let set = Settings::new(opts)?;
    let rs: Vec<f64> = set
        .list("r")?
        .unwrap_or_else(|| (1..=10).map(|j| j as f64 / 10.0).collect());
    let text = if rs.iter().all(|&r| r > 1.0) {
        let ks: Vec<i32> = set.list("k")?.unwrap_or(vec![-1]);
        let ls: Vec<f64> = set.list("L")?.unwrap_or(vec![10.0, 20.0, 40.0, 80.0]);
        let mut rows = Vec::new();
        for &r in &rs {
            for &k in &ks {
                let d = divergence_sweep(r, k, &ls)?;
                eprintln!(
                    "r={r} k={k}: slope {:.6} (last two lengths {:.6}), decreasing: {}",
                    d.slope,
                    d.tail_slope,
                    d.strictly_decreasing()
                );
                rows.extend(d.rows);
            }
        }
        sweep_csv(&rows)
    } else if rs.iter().all(|&r| r > 0.0 && r <= 1.0) {
        let ks: Vec<i32> = set.list("k")?.unwrap_or((-3..=3).collect());
        let radii: Vec<f64> = set.list("L")?.unwrap_or(GLUING_RADII.to_vec());
        let rows = minimal_energy_sweep(&rs, &ks, &radii)?;
        for b in best_rows(&rows) {
            let tol = 0.02 * 4.0 * PI * (b.k.unsigned_abs().max(1) as f64);
            eprintln!(
                "r={} k={}: best {:.6} at scale {}, infimum {:.6}, within 2%: {}",
                b.r,
                b.k,
                b.energy,
                b.scale,
                b.theorem_value,
                b.gap().abs() <= tol
            );
        }
        sweep_csv(&rows)
    } else {
        return Err(Failure::Usage(
            "--r must lie in (0, 1] for the minimal-energy table or above 1 for divergence".into(),
        ));
    };
    write_output(set.raw("out"), &text)
}

fn cmd_moduli(action: Option<&str>, opts: &Opts) -> Result<(), Failure> {
    let set = Settings::new(opts)?;
    let k: i32 = set
        .parsed("k")?
        .ok_or_else(|| Failure::Usage("moduli needs --k".into()))?;
    if k == 1 {
        return Err(Failure::Usage(
            "k = 1 is the distorted skyrmion; use `energy --family distorted:a=...`".into(),
        ));
    }
    let samples: usize = set.parsed("N")?.unwrap_or(DEFAULT_SAMPLES);
    if action == Some("scan") {
        let rows = bifurcation_scan(k, &SCAN_RATIOS, samples)?;
        let mut text = String::from("ratio,a_abs,count,nested,resolved,expected\n");
        let mut unresolved = false;
        for row in &rows {
            unresolved |= !row.resolved;
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.ratio,
                row.a_abs,
                row.count,
                row.nested,
                row.resolved,
                row.matches_expected(k)
            ));
        }
        write_output(set.raw("out"), &text)?;
        if unresolved {
            return Err(Failure::Unresolved(
                "component counts change under resolution doubling".into(),
            ));
        }
        return Ok(());
    }
    let a = match set.raw("a") {
        Some(s) => parse_complex(s).ok_or_else(|| Failure::Usage(format!("--a: cannot parse {s:?}")))?,
        None => return Err(Failure::Usage("moduli needs --a (or use `moduli scan`)".into())),
    };
    let params = MeromorphicParams::new(k, a)?;
    let panel = Panel::compute(&params, samples)?;
    let near_threshold = params
        .threshold_ratio()
        .is_some_and(|q| (q - 1.0).abs() < THRESHOLD_BAND);
    let depths = panel.z1.nesting_depths();
    let mut text = format!(
        "k={k} a={} window={} z0={} z1_components={} nesting={:?}\n",
        skyrmion_lab::solutions::fmt_complex(a),
        panel.z1.window,
        panel.z0.points().len(),
        panel.z1.count(),
        depths
    );
    if let Some(q) = params.threshold_ratio() {
        text.push_str(&format!("|a|/a*={q}\n"));
    }
    if let Some(w) = &panel.z1.warning {
        text.push_str(&format!("warning: {w}\n"));
    }
    if let Some(path) = set.raw("svg") {
        std::fs::write(path, figure_svg(std::slice::from_ref(&panel)))
            .map_err(|e| Failure::Io(format!("{path}: {e}")))?;
    }
    if let Some(path) = set.raw("csv") {
        std::fs::write(path, figure_csv(&panel)).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
    }
    if near_threshold {
        text.push_str("at the threshold: rendered, not counted\n");
        return write_output(set.raw("out"), &text);
    }
    let fine = z1_extract(&params, panel.z1.window, 2 * samples - 1)?;
    let resolved = panel.z1.warning.is_none() && fine.count() == panel.z1.count() && fine.nested() == panel.z1.nested();
    text.push_str(&format!("resolved={resolved}\n"));
    write_output(set.raw("out"), &text)?;
    if resolved {
        Ok(())
    } else {
        Err(Failure::Unresolved(
            "component count changes under resolution doubling".into(),
        ))
    }
}

/// Samples per axis of the flow grid unless `--N` is given.
const FLOW_SAMPLES: usize = 129;
/// Relative energy drop over the flow that counts as an instability.
const UNSTABLE_DROP: f64 = 1e-2;

fn cmd_stability(opts: &Opts) -> Result<(), Failure> {
    let set = Settings::new(opts)?;
    let r = positive_r(set.real("r", 1.0)?)?;
    let h = set.real("h", 0.0)?;
    let seed: u64 = set.parsed("seed")?.unwrap_or(0);
    match set.family()? {
        None => {
            let report = probe_homogeneous_stability(r, h, &PerturbationSet::default())?;
            if let Some(path) = set.raw("out") {
                std::fs::write(path, report.to_csv()).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
            }
            let verdict = match report.verdict {
                Verdict::Stable { .. } => "stable (all probes positive)".to_string(),
                v @ Verdict::Unstable { .. } => v.to_string(),
            };
            println!("homogeneous state at r={r} h={h}: {verdict}");
            Ok(())
        }
        Some(map) => {
            let default = map.default_grid();
            let grid = set
                .grid(GridSpec::new(0.25 * default.half_width(), FLOW_SAMPLES).expect("positive"))?
                .unwrap_or(GridSpec::new(0.25 * default.half_width(), FLOW_SAMPLES).expect("positive"));
            let start = tangent_noise(&sample(&map, grid)?, 1e-2, map.length_scale(), seed);
            let params = FlowParams::for_grid(&grid);
            let traj = gradient_flow(&start, r, h, &params)?;
            if let Some(path) = set.raw("out") {
                std::fs::write(path, traj.to_csv()).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
            }
            let (e0, e1) = (traj.initial_energy(), traj.final_energy());
            let drop = e0 - e1;
            // noise and grid effects alone move the energy far less than this
            let verdict = if drop > UNSTABLE_DROP * (1.0 + e0.abs()) {
                "unstable"
            } else {
                "stable under flow"
            };
            println!(
                "{} {verdict}: E went from {e0:.8} to {e1:.8} in {} iterations ({}), degree drift {:.2e}",
                map.tag(),
                traj.iterations(),
                traj.termination,
                traj.max_degree_drift()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = skyrmion_lab::init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Energy(o) => cmd_energy(o),
        Command::Sweep(o) => cmd_sweep(o),
        Command::Moduli { action, opts } => cmd_moduli(action.as_deref(), opts),
        Command::Stability(o) => cmd_stability(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
